#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "asymsim/hardware.hpp"
#include "asymsim/types.hpp"
#include "asymsim/workload.hpp"

namespace asymsim {

using JsonPointer = nlohmann::json::json_pointer;

// A parsed JSON config that remembers the source line of every member, so
// validation errors can point at the offending line.
class ConfigDocument {
public:
    // Throws ConfigError ("<source>:<line>:<col>: ...") on malformed JSON.
    static ConfigDocument parse(const std::string& text, const std::string& source = "<config>");
    static ConfigDocument load(const std::filesystem::path& path);

    [[nodiscard]] const nlohmann::json& root() const { return root_; }
    [[nodiscard]] const std::string& source() const { return source_; }
    // Directory that relative paths inside the document resolve against.
    [[nodiscard]] const std::filesystem::path& base_dir() const { return base_dir_; }

    // Line of the member at `p`, or of its nearest located ancestor.
    [[nodiscard]] int line_of(const JsonPointer& p) const;
    [[nodiscard]] std::string where(const JsonPointer& p) const;
    [[noreturn]] void fail(const JsonPointer& p, const std::string& message) const;

private:
    nlohmann::json root_;
    std::string source_;
    std::filesystem::path base_dir_;
    std::map<std::string, int> lines_;
};

// Quantities with units. Bare numbers are taken in base units (bytes, bytes
// per second, seconds, watts, picojoules per byte).
// Bytes accept B, KB, MB, GB, TB (powers of 1000) and KiB, MiB, GiB, TiB.
Bytes parse_bytes(const std::string& text);
// "3TB/s", "544 GB/s", "2.25TB/s".
double parse_bandwidth(const std::string& text);
// "32ns", "5us", "1.5ms", "2s".
Seconds parse_duration(const std::string& text);
// "12W".
double parse_watts(const std::string& text);
// "31.2pJ/B".
double parse_pj_per_byte(const std::string& text);

// Typed accessors that report errors with the member's line.
class ConfigReader {
public:
    explicit ConfigReader(const ConfigDocument& doc) : doc_(doc) {}

    [[nodiscard]] const nlohmann::json& at(const JsonPointer& p) const;
    [[nodiscard]] bool has(const JsonPointer& p) const;
    [[nodiscard]] long long integer(const JsonPointer& p, long long lo, long long hi) const;
    [[nodiscard]] double number(const JsonPointer& p) const;
    [[nodiscard]] bool boolean(const JsonPointer& p) const;
    [[nodiscard]] std::string string(const JsonPointer& p) const;
    [[nodiscard]] Bytes bytes(const JsonPointer& p) const;
    [[nodiscard]] double bandwidth(const JsonPointer& p) const;
    [[nodiscard]] Seconds duration(const JsonPointer& p) const;
    [[nodiscard]] double watts(const JsonPointer& p) const;
    [[nodiscard]] double pj_per_byte(const JsonPointer& p) const;
    // Fails on any member of the object at `p` not listed in `allowed`.
    void only(const JsonPointer& p, std::initializer_list<const char*> allowed) const;

    [[nodiscard]] const ConfigDocument& doc() const { return doc_; }

private:
    template <class F>
    auto with_units(const JsonPointer& p, F&& parse) const;

    const ConfigDocument& doc_;
};

// A model is a preset name, a path to a JSON file, or an inline object
// (optionally {"preset": name, ...overrides}).
ModelSpec read_model(const ConfigReader& r, const JsonPointer& p);
// A platform is a preset name, a path, or an inline object with overrides.
PlatformSpec read_platform(const ConfigReader& r, const JsonPointer& p);

nlohmann::json model_to_json(const ModelSpec& m);
nlohmann::json platform_to_json(const PlatformSpec& p);

}  // namespace asymsim
