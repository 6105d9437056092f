#include "asymsim/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

namespace asymsim {

// ---------------------------------------------------------------------------
// Systems

std::string SystemSpec::label() const {
    if (variant.kind == VariantKind::Asymmetric && policy.kind == Policy::Kind::Best && !translation)
        return "oracle";
    std::string s = variant.name();
    if (variant.kind == VariantKind::Asymmetric) s += ":" + policy.name();
    if (!translation) s += "@no-translation";
    return s;
}

SystemSpec parse_system(const std::string& text) {
    SystemSpec s;
    if (text == "oracle") {
        s.variant.kind = VariantKind::Asymmetric;
        s.policy.kind = Policy::Kind::Best;
        s.translation = false;
        return s;
    }
    std::string body = text;
    const auto at = body.find('@');
    if (at != std::string::npos) {
        if (body.substr(at + 1) != "no-translation")
            throw ConfigError("unknown system flag in '" + text + "'");
        s.translation = false;
        body.resize(at);
    }
    // multi-hbm carries its own ':' count; only asymmetric takes a policy.
    if (body.rfind("asymmetric", 0) == 0) {
        s.variant.kind = VariantKind::Asymmetric;
        if (body.size() > 10) {
            if (body[10] != ':') throw ConfigError("bad system '" + text + "'");
            s.policy = parse_policy(body.substr(11));
        }
        return s;
    }
    s.variant = parse_variant(body);
    return s;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

std::vector<int> read_int_list(const ConfigReader& r, const JsonPointer& p, int lo, int hi) {
    const auto& v = r.at(p);
    std::vector<int> out;
    if (v.is_object()) {
        r.only(p, {"start", "stop", "step"});
        const int start = static_cast<int>(r.integer(p / "start", lo, hi));
        const int stop = static_cast<int>(r.integer(p / "stop", lo, hi));
        const int step = static_cast<int>(r.integer(p / "step", 1, hi));
        if (stop < start) r.doc().fail(p, "stop is below start");
        for (int x = start; x <= stop; x += step) out.push_back(x);
    } else if (v.is_array()) {
        for (std::size_t i = 0; i < v.size(); ++i)
            out.push_back(static_cast<int>(r.integer(p / i, lo, hi)));
    } else {
        r.doc().fail(p, "expected a list or {start, stop, step}");
    }
    if (out.empty()) r.doc().fail(p, "grid is empty");
    return out;
}

SystemSpec read_system(const ConfigReader& r, const JsonPointer& p) {
    try {
        return parse_system(r.string(p));
    } catch (const ConfigError& e) {
        if (std::string(e.what()).rfind(r.doc().source(), 0) == 0) throw;
        r.doc().fail(p, e.what());
    }
}

SweepCase read_case(const ConfigReader& r, const JsonPointer& p, const SweepCase* defaults) {
    SweepCase c;
    if (defaults) c = *defaults;
    if (r.has(p / "model")) c.model = read_model(r, p / "model");
    if (r.has(p / "batch_sizes")) c.batch_sizes = read_int_list(r, p / "batch_sizes", 1, 1 << 20);
    if (r.has(p / "seq_lens")) c.seq_lens = read_int_list(r, p / "seq_lens", 1, 1 << 24);
    if (c.model.name.empty()) r.doc().fail(p, "no model given");
    if (c.batch_sizes.empty()) r.doc().fail(p, "no batch_sizes given");
    if (c.seq_lens.empty()) r.doc().fail(p, "no seq_lens given");
    for (int s : c.seq_lens)
        if (s > c.model.max_seq_len)
            r.doc().fail(p / "seq_lens", "sequence length " + std::to_string(s) +
                                             " exceeds max_seq_len " +
                                             std::to_string(c.model.max_seq_len) + " of " +
                                             c.model.name);
    return c;
}

}  // namespace

ExperimentConfig parse_experiment(const ConfigDocument& doc) {
    const ConfigReader r(doc);
    const JsonPointer root;
    r.only(root, {"name", "model", "batch_sizes", "seq_lens", "cases", "platform", "platforms",
                  "systems", "baseline", "dynamic", "options"});
    ExperimentConfig cfg;
    if (r.has(root / "name")) cfg.name = r.string(root / "name");
    if (r.has(root / "platform")) cfg.platform = read_platform(r, root / "platform");

    SweepCase top;
    if (r.has(root / "model")) top.model = read_model(r, root / "model");
    if (r.has(root / "batch_sizes")) top.batch_sizes = read_int_list(r, root / "batch_sizes", 1, 1 << 20);
    if (r.has(root / "seq_lens")) top.seq_lens = read_int_list(r, root / "seq_lens", 1, 1 << 24);
    if (r.has(root / "cases")) {
        const auto& v = r.at(root / "cases");
        if (!v.is_array() || v.empty()) doc.fail(root / "cases", "expected a non-empty list");
        for (std::size_t i = 0; i < v.size(); ++i) {
            r.only(root / "cases" / i, {"model", "batch_sizes", "seq_lens"});
            cfg.cases.push_back(read_case(r, root / "cases" / i, &top));
        }
    } else {
        if (!r.has(root / "model")) top.model = gpt3_175b();
        if (top.batch_sizes.empty()) top.batch_sizes = {32};
        if (top.seq_lens.empty()) top.seq_lens = {512, 1024, 1536, 2048};
        cfg.cases.push_back(read_case(r, root, &top));
    }

    if (r.has(root / "platforms")) {
        const auto& v = r.at(root / "platforms");
        if (!v.is_array() || v.empty()) doc.fail(root / "platforms", "expected a non-empty list");
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::string name = r.string(root / "platforms" / i);
            try {
                (void)platform_preset(name);
            } catch (const ConfigError& e) {
                doc.fail(root / "platforms" / i, e.what());
            }
            cfg.platforms.push_back(name);
        }
    } else {
        cfg.platforms = platform_preset_names();
    }

    cfg.baseline = parse_system("capacity-only");
    if (r.has(root / "baseline")) cfg.baseline = read_system(r, root / "baseline");
    if (r.has(root / "systems")) {
        const auto& v = r.at(root / "systems");
        if (!v.is_array() || v.empty()) doc.fail(root / "systems", "expected a non-empty list");
        for (std::size_t i = 0; i < v.size(); ++i) {
            SystemSpec s = read_system(r, root / "systems" / i);
            for (const auto& prev : cfg.systems)
                if (prev == s) doc.fail(root / "systems" / i, "duplicate system '" + s.label() + "'");
            cfg.systems.push_back(s);
        }
    } else {
        cfg.systems = {parse_system("capacity-only"), parse_system("asymmetric:greedy")};
    }

    if (r.has(root / "dynamic")) {
        const JsonPointer d = root / "dynamic";
        r.only(d, {"iterations", "seed", "batch_size", "termination_probability", "prompt_min",
                   "prompt_max", "initial_seq_lens", "checkpoints"});
        auto& dyn = cfg.dynamic;
        if (r.has(d / "iterations")) dyn.iterations = static_cast<int>(r.integer(d / "iterations", 1, 1 << 20));
        if (r.has(d / "seed")) dyn.seed = static_cast<std::uint64_t>(r.integer(d / "seed", 0, INT64_MAX));
        if (r.has(d / "batch_size")) dyn.batch_size = static_cast<int>(r.integer(d / "batch_size", 1, 1 << 20));
        else dyn.batch_size = cfg.cases.front().batch_sizes.front();
        if (r.has(d / "termination_probability")) {
            dyn.law.termination_probability = r.number(d / "termination_probability");
            if (dyn.law.termination_probability < 0 || dyn.law.termination_probability > 1)
                doc.fail(d / "termination_probability", "must lie in [0, 1]");
        }
        const int max_len = cfg.cases.front().model.max_seq_len;
        if (r.has(d / "prompt_min")) dyn.law.prompt_min = static_cast<int>(r.integer(d / "prompt_min", 1, max_len));
        if (r.has(d / "prompt_max")) dyn.law.prompt_max = static_cast<int>(r.integer(d / "prompt_max", 1, max_len));
        if (dyn.law.prompt_max < dyn.law.prompt_min) doc.fail(d / "prompt_max", "below prompt_min");
        if (r.has(d / "initial_seq_lens")) {
            dyn.initial = read_int_list(r, d / "initial_seq_lens", 1, max_len);
            if (static_cast<int>(dyn.initial.size()) != dyn.batch_size)
                doc.fail(d / "initial_seq_lens", "needs exactly batch_size entries");
        }
        if (r.has(d / "checkpoints")) dyn.checkpoints = read_int_list(r, d / "checkpoints", 1, 1 << 20);
    }

    if (r.has(root / "options")) {
        const JsonPointer o = root / "options";
        r.only(o, {"barrier", "translation", "frag_mode", "trace", "max_evaluations", "window_iterations"});
        try {
            if (r.has(o / "barrier")) cfg.sim.barrier = parse_barrier_mode(r.string(o / "barrier"));
            if (r.has(o / "frag_mode")) cfg.frag_mode = parse_frag_mode(r.string(o / "frag_mode"));
        } catch (const ConfigError& e) {
            if (std::string(e.what()).rfind(doc.source(), 0) == 0) throw;
            doc.fail(o, e.what());
        }
        if (r.has(o / "translation") && !r.boolean(o / "translation")) cfg.platform.translation.enabled = false;
        if (r.has(o / "trace")) cfg.sim.trace = r.boolean(o / "trace");
        if (r.has(o / "max_evaluations"))
            cfg.sim.search.max_evaluations = r.integer(o / "max_evaluations", 1, INT64_MAX);
        if (r.has(o / "window_iterations"))
            cfg.sim.search.window_iterations = static_cast<int>(r.integer(o / "window_iterations", 0, 1 << 20));
    }
    return cfg;
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
    if (o.seed) cfg.dynamic.seed = *o.seed;
    if (o.no_translation) cfg.platform.translation.enabled = false;
    if (o.barrier) cfg.sim.barrier = *o.barrier;
    if (o.frag_mode) cfg.frag_mode = *o.frag_mode;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

const std::map<std::string, std::string>& preset_texts() {
    static const std::map<std::string, std::string> texts{
        {"fig5", R"({
  "name": "fig5",
  "model": "gpt3-175b",
  "batch_sizes": [16, 32],
  "seq_lens": [512, 1024, 1536, 2048],
  "systems": ["capacity-only", "asymmetric:best", "asymmetric:sublayer"]
})"},
        {"fig6", R"({
  "name": "fig6",
  "model": "gpt3-175b",
  "batch_sizes": [32],
  "seq_lens": [512, 1024, 1536, 2048],
  "systems": ["capacity-only", "asymmetric:best", "asymmetric:flexgen"]
})"},
        {"fig7", R"({
  "name": "fig7",
  "model": "gpt3-175b",
  "batch_sizes": [32],
  "seq_lens": [512, 1024, 1536, 2048],
  "systems": ["capacity-only", "asymmetric:best", "asymmetric:a-major", "asymmetric:q-major",
              "asymmetric:f-major"]
})"},
        {"fig9", R"({
  "name": "fig9",
  "model": "gpt3-175b",
  "batch_sizes": [32],
  "seq_lens": [512, 1024, 1536, 2048],
  "systems": ["capacity-only", "hierarchical", "asymmetric:greedy", "oracle"]
})"},
        {"fig10", R"({
  "name": "fig10",
  "model": "chinchilla-70b",
  "batch_sizes": [64],
  "seq_lens": [1024, 2048, 3072, 4096],
  "systems": ["capacity-only", "hierarchical", "asymmetric:greedy", "oracle"]
})"},
        {"fig11", R"({
  "name": "fig11",
  "model": "gpt3-175b",
  "batch_sizes": [32],
  "seq_lens": [512, 1024, 1536, 2048],
  "systems": ["asymmetric:greedy"]
})"},
        {"fig12", R"({
  "name": "fig12",
  "model": "llama2-70b",
  "batch_sizes": [128],
  "seq_lens": [1024, 2048, 3072, 4096],
  "systems": ["capacity-only", "hierarchical", "asymmetric:greedy", "oracle"]
})"},
        {"fig13", R"({
  "name": "fig13",
  "model": "gpt3-175b",
  "batch_sizes": [32],
  "seq_lens": [2048],
  "systems": ["asymmetric:greedy", "oracle", "asymmetric:flexgen"],
  "dynamic": {
    "iterations": 128,
    "seed": 42,
    "batch_size": 32,
    "termination_probability": 0.01,
    "prompt_min": 256,
    "prompt_max": 2048,
    "checkpoints": [1, 32, 64, 96, 128]
  }
})"},
        {"fig14", R"({
  "name": "fig14",
  "model": "gpt3-175b",
  "batch_sizes": [32],
  "seq_lens": [512, 1024, 1536, 2048],
  "systems": ["asymmetric:greedy"],
  "platforms": ["Original", "HBMcap-Less", "HBMcap-More", "HBMbw-Less", "HBMbw-More",
                "LPDDRbw-Less", "LPDDRbw-More", "HBMChip-More", "LPDDRChip-More"]
})"},
        {"fig15", R"({
  "name": "fig15",
  "model": "gpt3-175b",
  "batch_sizes": [32],
  "seq_lens": [512, 1024, 1536, 2048],
  "systems": ["capacity-only", "asymmetric:greedy", "multi-hbm:8"]
})"},
        {"fig16", R"({
  "name": "fig16",
  "model": "gpt3-175b",
  "batch_sizes": [32],
  "seq_lens": [512, 1024, 1536, 2048],
  "systems": ["capacity-only", "asymmetric:greedy", "multi-hbm:8"]
})"},
        {"table3", R"({
  "name": "table3",
  "cases": [
    {"model": "gpt3-175b", "batch_sizes": [32], "seq_lens": [512, 1024, 1536, 2048]},
    {"model": "chinchilla-70b", "batch_sizes": [64], "seq_lens": [1024, 2048, 3072, 4096]},
    {"model": "llama2-70b", "batch_sizes": [128], "seq_lens": [1024, 2048, 3072, 4096]}
  ],
  "systems": ["asymmetric:greedy", "asymmetric:greedy@no-translation", "oracle"]
})"},
        {"frag", R"({
  "name": "frag",
  "model": "gpt3-175b",
  "batch_sizes": [32],
  "seq_lens": [2048],
  "systems": ["asymmetric:greedy"]
})"}};
    return texts;
}

}  // namespace

const std::vector<std::string>& experiment_preset_names() {
    static const std::vector<std::string> names{"fig5",  "fig6",  "fig7",  "fig9",  "fig10",
                                                "fig11", "fig12", "fig13", "fig14", "fig15",
                                                "fig16", "table3", "frag"};
    return names;
}

const std::string& experiment_preset_text(const std::string& name) {
    const auto& t = preset_texts();
    auto it = t.find(name);
    if (it == t.end()) throw ConfigError("unknown preset '" + name + "'");
    return it->second;
}

ExperimentConfig experiment_preset(const std::string& name) {
    return parse_experiment(ConfigDocument::parse(experiment_preset_text(name), "preset:" + name));
}

// ---------------------------------------------------------------------------
// Running

namespace {

// Runs f(i) for i in [0, n) on up to `jobs` threads. The exception of the
// lowest failing index is rethrown, so failures do not depend on timing.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
    std::vector<std::exception_ptr> errors(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                f(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        f(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

PlatformSpec platform_for(const PlatformSpec& base, const SystemSpec& s) {
    PlatformSpec p = base;
    if (!s.translation) p.translation.enabled = false;
    return p;
}

RunReport run_system(const ModelSpec& model, const Scenario& scenario, const PlatformSpec& platform,
                     const SystemSpec& s, const SimOptions& options) {
    return run_variant(model, scenario, platform_for(platform, s), s.variant, s.policy, options);
}

struct GridPoint {
    const SweepCase* c;
    int batch;
    int seq;
};

std::vector<GridPoint> grid(const ExperimentConfig& cfg) {
    std::vector<GridPoint> pts;
    for (const auto& c : cfg.cases)
        for (int b : c.batch_sizes)
            for (int s : c.seq_lens) pts.push_back({&c, b, s});
    return pts;
}

}  // namespace

double SweepRecord::energy_ratio() const {
    return energy_per_token(report, energy) / energy_per_token(baseline, energy);
}

std::vector<SweepRecord> run_sweep(const ExperimentConfig& cfg, int jobs) {
    const auto pts = grid(cfg);
    const std::size_t k = cfg.systems.size();
    std::vector<SweepRecord> out(pts.size() * k);
    // One task per (point, system); the baseline is recomputed per task,
    // which keeps tasks independent.
    parallel_for(out.size(), jobs, [&](std::size_t i) {
        const GridPoint& pt = pts[i / k];
        const SystemSpec& sys = cfg.systems[i % k];
        Scenario sc;
        sc.initial = BatchState::uniform(pt.batch, pt.seq);
        SweepRecord& rec = out[i];
        rec.model = pt.c->model.name;
        rec.platform = cfg.platform.name;
        rec.batch_size = pt.batch;
        rec.seq_len = pt.seq;
        rec.system = sys.label();
        rec.energy = cfg.platform.energy;
        rec.footprint = footprint(pt.c->model, sc.initial).total();
        rec.report = run_system(pt.c->model, sc, cfg.platform, sys, cfg.sim);
        rec.baseline = sys == cfg.baseline ? rec.report
                                           : run_system(pt.c->model, sc, cfg.platform, cfg.baseline, cfg.sim);
    });
    return out;
}

BatchState dynamic_initial_batch(const DynamicSpec& spec, const ModelSpec& model) {
    if (!spec.seed) throw ConfigError("dynamic scenarios need a seed (config dynamic.seed or --seed)");
    BatchState b = BatchState::uniform(spec.batch_size, 1);
    if (!spec.initial.empty()) {
        b.seq_lens = spec.initial;
    } else {
        // A separate stream from the one driving the run.
        std::mt19937_64 rng(*spec.seed ^ 0x9e3779b97f4a7c15ULL);
        std::uniform_int_distribution<int> prompt(std::clamp(spec.law.prompt_min, 1, model.max_seq_len),
                                                  std::clamp(spec.law.prompt_max, 1, model.max_seq_len));
        for (int& s : b.seq_lens) s = prompt(rng);
    }
    b.validate(model);
    return b;
}

std::vector<DynamicRecord> run_dynamic(const ExperimentConfig& cfg, int jobs) {
    const ModelSpec& model = cfg.cases.front().model;
    Scenario sc;
    sc.initial = dynamic_initial_batch(cfg.dynamic, model);
    sc.iterations = cfg.dynamic.iterations;
    sc.law = cfg.dynamic.law;
    sc.seed = *cfg.dynamic.seed;

    std::vector<DynamicRecord> out(cfg.systems.size());
    RunReport baseline;
    std::mutex m;
    parallel_for(out.size() + 1, jobs, [&](std::size_t i) {
        if (i == out.size()) {
            auto r = run_system(model, sc, cfg.platform, cfg.baseline, cfg.sim);
            std::lock_guard<std::mutex> lock(m);
            baseline = std::move(r);
            return;
        }
        out[i].system = cfg.systems[i].label();
        out[i].report = run_system(model, sc, cfg.platform, cfg.systems[i], cfg.sim);
    });
    for (auto& r : out) r.baseline = baseline;
    return out;
}

std::vector<SensitivityRecord> run_sensitivity(const ExperimentConfig& cfg, int jobs) {
    const auto pts = grid(cfg);
    const std::size_t k = pts.size();
    SystemSpec subject = parse_system("asymmetric:greedy");
    for (const auto& s : cfg.systems)
        if (!(s == cfg.baseline)) {
            subject = s;
            break;
        }
    std::vector<SensitivityRecord> out(cfg.platforms.size() * k);
    parallel_for(out.size(), jobs, [&](std::size_t i) {
        PlatformSpec p = platform_preset(cfg.platforms[i / k]);
        p.translation.enabled = cfg.platform.translation.enabled;
        p.energy = cfg.platform.energy;
        const GridPoint& pt = pts[i % k];
        Scenario sc;
        sc.initial = BatchState::uniform(pt.batch, pt.seq);
        const auto base = run_system(pt.c->model, sc, p, cfg.baseline, cfg.sim);
        const auto r = run_system(pt.c->model, sc, p, subject, cfg.sim);
        auto& rec = out[i];
        rec.platform = p.name;
        rec.batch_size = pt.batch;
        rec.seq_len = pt.seq;
        rec.baseline_latency = base.mean_latency();
        rec.latency = r.mean_latency();
        rec.mapping = r.iterations.front().mapping;
    });
    return out;
}

FragReport run_frag(const ExperimentConfig& cfg) {
    const SweepCase& c = cfg.cases.front();
    const BatchState b = BatchState::uniform(c.batch_sizes.front(), c.seq_lens.front());
    return fragmentation_report(c.model, b, cfg.platform.translation.page_size, cfg.frag_mode);
}

// ---------------------------------------------------------------------------
// Tables

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

namespace {

std::string num(double v) { return format_number(v); }
std::string num(Count v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }

}  // namespace

std::string Table::to_csv() const {
    auto join = [](const std::vector<std::string>& cells) {
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        return line + "\n";
    };
    std::string out = "# schema: " + schema + "\n" + join(header);
    for (const auto& r : rows) out += join(r);
    return out;
}

Table sweep_table(const std::vector<SweepRecord>& records) {
    Table t;
    t.schema = "asymsim-sweep/1";
    t.header = {"model", "platform", "batch_size", "seq_len", "system", "n_qkv", "n_attention",
                "n_fc", "latency_s", "baseline_latency_s", "speedup", "busy_bandwidth_s",
                "busy_capacity_s", "barrier_wait_s", "transfer_s", "footprint_bytes",
                "bw_qkv_bytes", "bw_attention_bytes", "bw_fc_bytes", "bw_other_bytes",
                "bw_total_bytes", "tlb_hits_bandwidth", "tlb_misses_bandwidth",
                "tlb_hits_capacity", "tlb_misses_capacity", "energy_per_token_j", "energy_ratio"};
    for (const auto& r : records) {
        const auto& it = r.report.iterations.front();
        t.rows.push_back({r.model, r.platform, num(r.batch_size), num(r.seq_len), r.system,
                          num(it.mapping.n_qkv), num(it.mapping.n_attention), num(it.mapping.n_fc),
                          num(r.report.mean_latency()), num(r.baseline.mean_latency()),
                          num(r.speedup()), num(it.busy[0]), num(it.busy[1]), num(it.barrier_wait),
                          num(it.transfer_time), num(r.footprint), num(it.bw_footprint[0]),
                          num(it.bw_footprint[1]), num(it.bw_footprint[2]),
                          num(it.bw_footprint_other), num(it.bw_footprint_total()),
                          num(it.tlb_hits[0]), num(it.tlb_misses[0]), num(it.tlb_hits[1]),
                          num(it.tlb_misses[1]), num(energy_per_token(r.report, r.energy)),
                          num(r.energy_ratio())});
    }
    return t;
}

Table sweep_summary(const std::vector<SweepRecord>& records) {
    struct Acc {
        int n = 0;
        double sum = 0, lo = 1e300, hi = 0, energy = 0;
    };
    std::vector<std::pair<std::vector<std::string>, Acc>> groups;
    for (const auto& r : records) {
        std::vector<std::string> key{r.model, r.platform, num(r.batch_size), r.system};
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
        if (it == groups.end()) {
            groups.push_back({key, {}});
            it = std::prev(groups.end());
        }
        Acc& a = it->second;
        const double s = r.speedup();
        ++a.n;
        a.sum += s;
        a.lo = std::min(a.lo, s);
        a.hi = std::max(a.hi, s);
        a.energy += r.energy_ratio();
    }
    Table t;
    t.schema = "asymsim-sweep-summary/1";
    t.header = {"model", "platform", "batch_size", "system", "points", "mean_speedup",
                "min_speedup", "max_speedup", "mean_energy_ratio"};
    for (const auto& [key, a] : groups) {
        auto row = key;
        row.push_back(num(a.n));
        row.push_back(num(a.sum / a.n));
        row.push_back(num(a.lo));
        row.push_back(num(a.hi));
        row.push_back(num(a.energy / a.n));
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table dynamic_table(const std::vector<DynamicRecord>& records, const DynamicSpec& spec) {
    Table t;
    t.schema = "asymsim-dynamic/1";
    t.header = {"system", "iteration", "checkpoint", "kv_bytes", "n_qkv", "n_attention", "n_fc",
                "migration_bytes", "migration_s", "latency_s", "baseline_latency_s", "speedup",
                "running_speedup"};
    for (const auto& r : records) {
        Seconds sum = 0.0;
        Seconds base_sum = 0.0;
        for (std::size_t i = 0; i < r.report.iterations.size(); ++i) {
            const auto& it = r.report.iterations[i];
            const Seconds base = r.baseline.iterations[i].latency;
            sum += it.latency;
            base_sum += base;
            const int index = static_cast<int>(i) + 1;
            const bool cp = std::find(spec.checkpoints.begin(), spec.checkpoints.end(), index) !=
                            spec.checkpoints.end();
            t.rows.push_back({r.system, num(index), cp ? "1" : "0", num(it.kv_bytes),
                              num(it.mapping.n_qkv), num(it.mapping.n_attention),
                              num(it.mapping.n_fc), num(it.migration_bytes), num(it.migration_time),
                              num(it.latency), num(base), num(base / it.latency),
                              num(base_sum / sum)});
        }
    }
    return t;
}

Table sensitivity_table(const std::vector<SensitivityRecord>& records) {
    std::map<std::pair<int, int>, double> original;
    for (const auto& r : records)
        if (r.platform == "Original") original[{r.batch_size, r.seq_len}] = r.speedup();
    Table t;
    t.schema = "asymsim-sensitivity/1";
    t.header = {"platform", "batch_size", "seq_len", "n_qkv", "n_attention", "n_fc",
                "baseline_latency_s", "latency_s", "speedup", "relative_to_original"};
    for (const auto& r : records) {
        auto it = original.find({r.batch_size, r.seq_len});
        t.rows.push_back({r.platform, num(r.batch_size), num(r.seq_len), num(r.mapping.n_qkv),
                          num(r.mapping.n_attention), num(r.mapping.n_fc), num(r.baseline_latency),
                          num(r.latency), num(r.speedup()),
                          it == original.end() ? "" : num(r.speedup() / it->second)});
    }
    return t;
}

Table frag_table(const FragReport& report, Bytes bandwidth_capacity) {
    Table t;
    t.schema = "asymsim-frag/1";
    t.header = {"sublayer", "tensor", "unit_count", "unit_bytes", "waste_bytes",
                "fraction_of_bw_capacity"};
    const double cap = static_cast<double>(bandwidth_capacity);
    for (const auto& r : report.rows)
        t.rows.push_back({r.sublayer, r.tensor, num(r.unit_count), num(r.unit_bytes),
                          num(r.waste_bytes), num(static_cast<double>(r.waste_bytes) / cap)});
    t.rows.push_back({"total", "all", num(report.unit_count), "", num(report.total),
                      num(static_cast<double>(report.total) / cap)});
    return t;
}

}  // namespace asymsim
