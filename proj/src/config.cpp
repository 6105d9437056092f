#include "asymsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace asymsim {

namespace {

std::string escape_token(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '~') out += "~0";
        else if (c == '/') out += "~1";
        else out += c;
    }
    return out;
}

// Walks already-valid JSON text and records the line where every member or
// array element begins, keyed by JSON pointer.
std::map<std::string, int> locate_members(const std::string& text) {
    struct Frame {
        bool array = false;
        int index = 0;
        std::string key;
        bool want_key = false;
    };
    std::map<std::string, int> lines;
    std::vector<Frame> stack;
    int line = 1;
    lines[""] = 1;

    auto path = [&](std::size_t depth) {
        std::string p;
        for (std::size_t i = 0; i < depth; ++i)
            p += "/" + (stack[i].array ? std::to_string(stack[i].index) : escape_token(stack[i].key));
        return p;
    };
    auto value_starts = [&] {
        if (!stack.empty() && stack.back().array) lines.emplace(path(stack.size()), line);
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            ++line;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        switch (c) {
            case '"': {
                std::string s;
                for (++i; i < text.size() && text[i] != '"'; ++i) {
                    if (text[i] == '\\' && i + 1 < text.size()) {
                        s += text[++i];
                        continue;
                    }
                    s += text[i];
                }
                if (!stack.empty() && !stack.back().array && stack.back().want_key) {
                    stack.back().key = s;
                    stack.back().want_key = false;
                    lines[path(stack.size())] = line;
                } else {
                    value_starts();
                }
                break;
            }
            case '{':
            case '[':
                value_starts();
                stack.push_back({c == '[', 0, "", c == '{'});
                break;
            case '}':
            case ']':
                if (!stack.empty()) stack.pop_back();
                break;
            case ',':
                if (!stack.empty()) {
                    if (stack.back().array) ++stack.back().index;
                    else stack.back().want_key = true;
                }
                break;
            case ':': break;
            default:
                // Scalar literal: skip to its end.
                value_starts();
                while (i + 1 < text.size() && std::string_view(",]}\n \t\r").find(text[i + 1]) ==
                                                  std::string_view::npos)
                    ++i;
                break;
        }
    }
    return lines;
}

struct Quantity {
    double value = 0.0;
    std::string unit;
};

Quantity split_quantity(const std::string& text) {
    std::size_t used = 0;
    Quantity q;
    try {
        q.value = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ConfigError("'" + text + "' is not a number with a unit");
    }
    std::string unit = text.substr(used);
    unit.erase(std::remove_if(unit.begin(), unit.end(),
                              [](unsigned char c) { return std::isspace(c); }),
               unit.end());
    q.unit = unit;
    if (!std::isfinite(q.value) || q.value < 0)
        throw ConfigError("'" + text + "' must be a finite non-negative quantity");
    return q;
}

double byte_scale(const std::string& unit, const std::string& text) {
    static const std::map<std::string, double> scale{
        {"", 1.0},     {"B", 1.0},           {"KB", 1e3},           {"MB", 1e6},
        {"GB", 1e9},   {"TB", 1e12},         {"KiB", 1024.0},       {"MiB", 1048576.0},
        {"GiB", 1073741824.0}, {"TiB", 1099511627776.0}};
    auto it = scale.find(unit);
    if (it == scale.end()) throw ConfigError("unknown byte unit in '" + text + "'");
    return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------

ConfigDocument ConfigDocument::parse(const std::string& text, const std::string& source) {
    ConfigDocument doc;
    doc.source_ = source;
    try {
        doc.root_ = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // Translate the byte offset into line and column.
        std::size_t pos = std::min(e.byte, text.size());
        int line = 1;
        std::size_t col = 1;
        for (std::size_t i = 0; i + 1 < pos; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string what = e.what();
        const auto colon = what.rfind(": ");
        if (colon != std::string::npos) what = what.substr(colon + 2);
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": invalid JSON: " + what);
    }
    doc.lines_ = locate_members(text);
    return doc;
}

ConfigDocument ConfigDocument::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    ConfigDocument doc = parse(ss.str(), path.string());
    doc.base_dir_ = path.parent_path();
    return doc;
}

int ConfigDocument::line_of(const JsonPointer& p) const {
    JsonPointer cur = p;
    while (true) {
        auto it = lines_.find(cur.to_string());
        if (it != lines_.end()) return it->second;
        if (cur.empty()) return 1;
        cur = cur.parent_pointer();
    }
}

std::string ConfigDocument::where(const JsonPointer& p) const {
    return source_ + ":" + std::to_string(line_of(p));
}

void ConfigDocument::fail(const JsonPointer& p, const std::string& message) const {
    const std::string name = p.empty() ? std::string("config") : p.to_string();
    throw ConfigError(where(p) + ": " + name + ": " + message);
}

// ---------------------------------------------------------------------------
// Units

Bytes parse_bytes(const std::string& text) {
    const Quantity q = split_quantity(text);
    const double v = q.value * byte_scale(q.unit, text);
    if (v > 9.0e18) throw ConfigError("'" + text + "' is too large");
    return static_cast<Bytes>(std::llround(v));
}

double parse_bandwidth(const std::string& text) {
    const Quantity q = split_quantity(text);
    std::string unit = q.unit;
    if (unit.size() >= 2 && unit.substr(unit.size() - 2) == "/s") unit.resize(unit.size() - 2);
    else if (!unit.empty()) throw ConfigError("bandwidth '" + text + "' must end in /s");
    return q.value * byte_scale(unit, text);
}

Seconds parse_duration(const std::string& text) {
    const Quantity q = split_quantity(text);
    static const std::map<std::string, double> scale{
        {"", 1.0}, {"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"\xC2\xB5s", 1e-6}, {"ns", 1e-9}};
    auto it = scale.find(q.unit);
    if (it == scale.end()) throw ConfigError("unknown time unit in '" + text + "'");
    return q.value * it->second;
}

double parse_watts(const std::string& text) {
    const Quantity q = split_quantity(text);
    if (!q.unit.empty() && q.unit != "W") throw ConfigError("power '" + text + "' must be in W");
    return q.value;
}

double parse_pj_per_byte(const std::string& text) {
    const Quantity q = split_quantity(text);
    if (!q.unit.empty() && q.unit != "pJ/B")
        throw ConfigError("energy '" + text + "' must be in pJ/B");
    return q.value;
}

// ---------------------------------------------------------------------------
// Reader

const nlohmann::json& ConfigReader::at(const JsonPointer& p) const {
    if (!doc_.root().contains(p)) doc_.fail(p, "missing");
    return doc_.root().at(p);
}

bool ConfigReader::has(const JsonPointer& p) const { return doc_.root().contains(p); }

long long ConfigReader::integer(const JsonPointer& p, long long lo, long long hi) const {
    const auto& v = at(p);
    if (!v.is_number_integer()) doc_.fail(p, "expected an integer");
    const long long x = v.get<long long>();
    if (x < lo || x > hi)
        doc_.fail(p, std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
    return x;
}

double ConfigReader::number(const JsonPointer& p) const {
    const auto& v = at(p);
    if (!v.is_number()) doc_.fail(p, "expected a number");
    return v.get<double>();
}

bool ConfigReader::boolean(const JsonPointer& p) const {
    const auto& v = at(p);
    if (!v.is_boolean()) doc_.fail(p, "expected true or false");
    return v.get<bool>();
}

std::string ConfigReader::string(const JsonPointer& p) const {
    const auto& v = at(p);
    if (!v.is_string()) doc_.fail(p, "expected a string");
    return v.get<std::string>();
}

template <class F>
auto ConfigReader::with_units(const JsonPointer& p, F&& parse) const {
    const auto& v = at(p);
    try {
        if (v.is_number()) {
            if (v.get<double>() < 0) doc_.fail(p, "must be non-negative");
            return parse(v.dump());
        }
        if (v.is_string()) return parse(v.get<std::string>());
    } catch (const ConfigError& e) {
        if (std::string(e.what()).rfind(doc_.source(), 0) == 0) throw;
        doc_.fail(p, e.what());
    }
    doc_.fail(p, "expected a number or a string with a unit");
}

Bytes ConfigReader::bytes(const JsonPointer& p) const { return with_units(p, parse_bytes); }
double ConfigReader::bandwidth(const JsonPointer& p) const { return with_units(p, parse_bandwidth); }
Seconds ConfigReader::duration(const JsonPointer& p) const { return with_units(p, parse_duration); }
double ConfigReader::watts(const JsonPointer& p) const { return with_units(p, parse_watts); }
double ConfigReader::pj_per_byte(const JsonPointer& p) const {
    return with_units(p, parse_pj_per_byte);
}

void ConfigReader::only(const JsonPointer& p, std::initializer_list<const char*> allowed) const {
    const auto& v = at(p);
    if (!v.is_object()) doc_.fail(p, "expected an object");
    for (const auto& [key, value] : v.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) doc_.fail(p / key, "unknown member");
    }
}

// ---------------------------------------------------------------------------
// Models and platforms

namespace {

bool looks_like_path(const std::string& s) {
    return s.find('/') != std::string::npos || (s.size() > 5 && s.substr(s.size() - 5) == ".json");
}

template <class T, class FromObject>
T read_named(const ConfigReader& r, const JsonPointer& p, T (*preset)(const std::string&),
             FromObject&& from_object) {
    const auto& v = r.at(p);
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (looks_like_path(s)) {
            std::filesystem::path file = s;
            if (file.is_relative()) file = r.doc().base_dir() / file;
            const ConfigDocument sub = ConfigDocument::load(file);
            const ConfigReader sr(sub);
            return from_object(sr, JsonPointer{});
        }
        try {
            return preset(s);
        } catch (const ConfigError& e) {
            r.doc().fail(p, e.what());
        }
    }
    if (!v.is_object()) r.doc().fail(p, "expected a preset name, a file path or an object");
    return from_object(r, p);
}

ModelSpec model_from_object(const ConfigReader& r, const JsonPointer& p) {
    r.only(p, {"preset", "name", "num_layers", "num_heads", "head_dim", "model_dim", "ffn_dim",
               "kv_groups", "bytes_per_element", "max_seq_len"});
    ModelSpec m;
    if (r.has(p / "preset")) {
        try {
            m = model_preset(r.string(p / "preset"));
        } catch (const ConfigError& e) {
            r.doc().fail(p / "preset", e.what());
        }
    }
    constexpr long long big = 1LL << 40;
    if (r.has(p / "name")) m.name = r.string(p / "name");
    if (r.has(p / "num_layers")) m.num_layers = static_cast<int>(r.integer(p / "num_layers", 1, 1 << 20));
    if (r.has(p / "num_heads")) m.num_heads = static_cast<int>(r.integer(p / "num_heads", 1, 1 << 16));
    if (r.has(p / "head_dim")) m.head_dim = static_cast<int>(r.integer(p / "head_dim", 1, 1 << 20));
    if (r.has(p / "model_dim")) m.model_dim = r.integer(p / "model_dim", 1, big);
    else if (!r.has(p / "preset")) m.model_dim = static_cast<Count>(m.num_heads) * m.head_dim;
    if (r.has(p / "ffn_dim")) m.ffn_dim = r.integer(p / "ffn_dim", 1, big);
    if (r.has(p / "kv_groups")) m.kv_groups = static_cast<int>(r.integer(p / "kv_groups", 1, 1 << 16));
    if (r.has(p / "bytes_per_element"))
        m.bytes_per_element = static_cast<int>(r.integer(p / "bytes_per_element", 1, 2));
    if (r.has(p / "max_seq_len"))
        m.max_seq_len = static_cast<int>(r.integer(p / "max_seq_len", 1, 1 << 24));
    if (m.name.empty()) m.name = "custom";
    try {
        m.validate();
    } catch (const ConfigError& e) {
        r.doc().fail(p, e.what());
    }
    return m;
}

void read_tier(const ConfigReader& r, const JsonPointer& p, MemoryTierSpec& t) {
    r.only(p, {"name", "capacity", "bandwidth", "access_latency"});
    if (r.has(p / "name")) t.name = r.string(p / "name");
    if (r.has(p / "capacity")) t.capacity = r.bytes(p / "capacity");
    if (r.has(p / "bandwidth")) t.bandwidth = r.bandwidth(p / "bandwidth");
    if (r.has(p / "access_latency")) t.access_latency = r.duration(p / "access_latency");
}

void read_pair(const ConfigReader& r, const JsonPointer& p, std::array<double, 2>& out,
               double (ConfigReader::*get)(const JsonPointer&) const) {
    r.only(p, {"bandwidth", "capacity"});
    if (r.has(p / "bandwidth")) out[0] = (r.*get)(p / "bandwidth");
    if (r.has(p / "capacity")) out[1] = (r.*get)(p / "capacity");
}

PlatformSpec platform_from_object(const ConfigReader& r, const JsonPointer& p) {
    r.only(p, {"preset", "name", "bandwidth_tier", "capacity_tier", "interconnect_bandwidth",
               "chip", "chips_per_side", "translation", "energy", "multi_hbm_hop_latency",
               "hierarchical_staging"});
    PlatformSpec s = original_platform();
    if (r.has(p / "preset")) {
        try {
            s = platform_preset(r.string(p / "preset"));
        } catch (const ConfigError& e) {
            r.doc().fail(p / "preset", e.what());
        }
    }
    if (r.has(p / "name")) s.name = r.string(p / "name");
    if (r.has(p / "bandwidth_tier")) read_tier(r, p / "bandwidth_tier", s.bandwidth_tier);
    if (r.has(p / "capacity_tier")) read_tier(r, p / "capacity_tier", s.capacity_tier);
    if (r.has(p / "interconnect_bandwidth"))
        s.interconnect_bandwidth = r.bandwidth(p / "interconnect_bandwidth");
    if (r.has(p / "chip")) {
        const JsonPointer c = p / "chip";
        r.only(c, {"cores", "mm_rows", "mm_cols", "mv_arrays", "mv_lanes", "vector_lanes",
                   "frequency", "spm_bytes_per_core", "launch_overhead", "weight_stationary"});
        auto count = [&](const char* k, int& out) {
            if (r.has(c / k)) out = static_cast<int>(r.integer(c / k, 1, 1 << 20));
        };
        count("cores", s.chip.cores);
        count("mm_rows", s.chip.mm_rows);
        count("mm_cols", s.chip.mm_cols);
        count("mv_arrays", s.chip.mv_arrays);
        count("mv_lanes", s.chip.mv_lanes);
        count("vector_lanes", s.chip.vector_lanes);
        if (r.has(c / "frequency")) s.chip.frequency = r.number(c / "frequency");
        if (r.has(c / "spm_bytes_per_core")) s.chip.spm_bytes_per_core = r.bytes(c / "spm_bytes_per_core");
        if (r.has(c / "launch_overhead")) s.chip.launch_overhead = r.duration(c / "launch_overhead");
        if (r.has(c / "weight_stationary")) s.chip.weight_stationary = r.boolean(c / "weight_stationary");
    }
    if (r.has(p / "chips_per_side")) {
        const JsonPointer c = p / "chips_per_side";
        r.only(c, {"bandwidth", "capacity"});
        if (r.has(c / "bandwidth")) s.chips_per_side[0] = static_cast<int>(r.integer(c / "bandwidth", 1, 64));
        if (r.has(c / "capacity")) s.chips_per_side[1] = static_cast<int>(r.integer(c / "capacity", 1, 64));
    }
    if (r.has(p / "translation")) {
        const JsonPointer t = p / "translation";
        r.only(t, {"tlb_entries", "page_size", "miss_latency", "enabled", "overlap_walks"});
        if (r.has(t / "tlb_entries"))
            s.translation.tlb_entries = static_cast<int>(r.integer(t / "tlb_entries", 1, 1 << 24));
        if (r.has(t / "page_size")) s.translation.page_size = r.bytes(t / "page_size");
        if (r.has(t / "miss_latency")) s.translation.miss_latency = r.duration(t / "miss_latency");
        if (r.has(t / "enabled")) s.translation.enabled = r.boolean(t / "enabled");
        if (r.has(t / "overlap_walks")) s.translation.overlap_walks = r.boolean(t / "overlap_walks");
    }
    if (r.has(p / "energy")) {
        const JsonPointer e = p / "energy";
        r.only(e, {"dynamic_pj_per_byte", "static_watts", "interconnect_pj_per_byte"});
        if (r.has(e / "dynamic_pj_per_byte"))
            read_pair(r, e / "dynamic_pj_per_byte", s.energy.dynamic_pj_per_byte, &ConfigReader::pj_per_byte);
        if (r.has(e / "static_watts"))
            read_pair(r, e / "static_watts", s.energy.static_watts, &ConfigReader::watts);
        if (r.has(e / "interconnect_pj_per_byte"))
            s.energy.interconnect_pj_per_byte = r.pj_per_byte(e / "interconnect_pj_per_byte");
    }
    if (r.has(p / "multi_hbm_hop_latency"))
        s.multi_hbm_hop_latency = r.duration(p / "multi_hbm_hop_latency");
    if (r.has(p / "hierarchical_staging"))
        s.hierarchical_staging_bytes = r.bytes(p / "hierarchical_staging");
    try {
        s.validate();
    } catch (const ConfigError& e) {
        r.doc().fail(p, e.what());
    }
    return s;
}

}  // namespace

ModelSpec read_model(const ConfigReader& r, const JsonPointer& p) {
    return read_named<ModelSpec>(r, p, &model_preset, model_from_object);
}

PlatformSpec read_platform(const ConfigReader& r, const JsonPointer& p) {
    return read_named<PlatformSpec>(r, p, &platform_preset, platform_from_object);
}

nlohmann::json model_to_json(const ModelSpec& m) {
    return {{"name", m.name},           {"num_layers", m.num_layers},
            {"num_heads", m.num_heads}, {"head_dim", m.head_dim},
            {"model_dim", m.model_dim}, {"ffn_dim", m.ffn_dim},
            {"kv_groups", m.kv_groups}, {"bytes_per_element", m.bytes_per_element},
            {"max_seq_len", m.max_seq_len}};
}

nlohmann::json platform_to_json(const PlatformSpec& p) {
    auto tier = [](const MemoryTierSpec& t) {
        return nlohmann::json{{"name", t.name},
                              {"capacity", t.capacity},
                              {"bandwidth", t.bandwidth},
                              {"access_latency", t.access_latency}};
    };
    const auto& c = p.chip;
    return {{"name", p.name},
            {"bandwidth_tier", tier(p.bandwidth_tier)},
            {"capacity_tier", tier(p.capacity_tier)},
            {"interconnect_bandwidth", p.interconnect_bandwidth},
            {"chip",
             {{"cores", c.cores},
              {"mm_rows", c.mm_rows},
              {"mm_cols", c.mm_cols},
              {"mv_arrays", c.mv_arrays},
              {"mv_lanes", c.mv_lanes},
              {"vector_lanes", c.vector_lanes},
              {"frequency", c.frequency},
              {"spm_bytes_per_core", c.spm_bytes_per_core},
              {"launch_overhead", c.launch_overhead},
              {"weight_stationary", c.weight_stationary}}},
            {"chips_per_side", {{"bandwidth", p.chips_per_side[0]}, {"capacity", p.chips_per_side[1]}}},
            {"translation",
             {{"tlb_entries", p.translation.tlb_entries},
              {"page_size", p.translation.page_size},
              {"miss_latency", p.translation.miss_latency},
              {"enabled", p.translation.enabled},
              {"overlap_walks", p.translation.overlap_walks}}},
            {"energy",
             {{"dynamic_pj_per_byte",
               {{"bandwidth", p.energy.dynamic_pj_per_byte[0]}, {"capacity", p.energy.dynamic_pj_per_byte[1]}}},
              {"static_watts", {{"bandwidth", p.energy.static_watts[0]}, {"capacity", p.energy.static_watts[1]}}},
              {"interconnect_pj_per_byte", p.energy.interconnect_pj_per_byte}}},
            {"multi_hbm_hop_latency", p.multi_hbm_hop_latency},
            {"hierarchical_staging", p.hierarchical_staging_bytes}};
}

}  // namespace asymsim
