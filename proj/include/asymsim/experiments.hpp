#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asymsim/config.hpp"
#include "asymsim/engine.hpp"

namespace asymsim {

// One simulated system of a comparison: a variant, the mapping policy when the
// variant is asymmetric, and whether address translation is charged.
// Text form: "<variant>[:<policy>][@no-translation]", plus "oracle" for
// "asymmetric:best@no-translation".
struct SystemSpec {
    SystemVariant variant;
    Policy policy;
    bool translation = true;

    [[nodiscard]] std::string label() const;
    friend bool operator==(const SystemSpec& a, const SystemSpec& b) {
        return a.label() == b.label();
    }
};

SystemSpec parse_system(const std::string& text);

struct SweepCase {
    ModelSpec model;
    std::vector<int> batch_sizes;
    std::vector<int> seq_lens;
};

struct DynamicSpec {
    int iterations = 128;
    // Required before a dynamic run; the command line may supply it.
    std::optional<std::uint64_t> seed;
    int batch_size = 32;
    ScenarioPolicy law{0.01, 256, 2048};
    // Initial prompt lengths; drawn from the prompt law when empty.
    std::vector<int> initial;
    std::vector<int> checkpoints{1, 32, 64, 96, 128};
};

struct ExperimentConfig {
    std::string name = "custom";
    std::vector<SweepCase> cases;
    PlatformSpec platform = original_platform();
    // Sensitivity command: platform presets to compare.
    std::vector<std::string> platforms;
    std::vector<SystemSpec> systems;
    SystemSpec baseline;  // capacity-only by default
    DynamicSpec dynamic;
    SimOptions sim;
    FragMode frag_mode = FragMode::Slack;
};

// Command-line settings that take precedence over the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    bool no_translation = false;
    std::optional<BarrierMode> barrier;
    std::optional<FragMode> frag_mode;
};

ExperimentConfig parse_experiment(const ConfigDocument& doc);
void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

// Built-in reproduction grids: fig5, fig6, fig7, fig9, fig10, fig11, fig12,
// fig13, fig14, fig15, fig16, table3, frag.
const std::vector<std::string>& experiment_preset_names();
const std::string& experiment_preset_text(const std::string& name);
ExperimentConfig experiment_preset(const std::string& name);

// ---------------------------------------------------------------------------
// Results

struct SweepRecord {
    std::string model;
    std::string platform;
    int batch_size = 0;
    int seq_len = 0;
    std::string system;
    RunReport report;
    RunReport baseline;
    Bytes footprint = 0;
    EnergyParams energy;

    [[nodiscard]] double speedup() const { return asymsim::speedup(baseline, report); }
    [[nodiscard]] double energy_ratio() const;
};

struct DynamicRecord {
    std::string system;
    RunReport report;
    RunReport baseline;
};

struct SensitivityRecord {
    std::string platform;
    int batch_size = 0;
    int seq_len = 0;
    Seconds baseline_latency = 0.0;
    Seconds latency = 0.0;
    MappingDecision mapping;

    [[nodiscard]] double speedup() const { return baseline_latency / latency; }
};

// Every command runs independent points on up to `jobs` threads and returns
// records in a fixed order.
std::vector<SweepRecord> run_sweep(const ExperimentConfig& cfg, int jobs = 1);
std::vector<DynamicRecord> run_dynamic(const ExperimentConfig& cfg, int jobs = 1);
std::vector<SensitivityRecord> run_sensitivity(const ExperimentConfig& cfg, int jobs = 1);
FragReport run_frag(const ExperimentConfig& cfg);

// Initial batch of a dynamic scenario (deterministic in the seed).
BatchState dynamic_initial_batch(const DynamicSpec& spec, const ModelSpec& model);

// ---------------------------------------------------------------------------
// Tables

struct Table {
    std::string schema;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // "# schema: <schema>" line, header row, then rows.
    [[nodiscard]] std::string to_csv() const;
};

Table sweep_table(const std::vector<SweepRecord>& records);
// Mean speedup per (model, platform, batch, system) over the sequence grid.
Table sweep_summary(const std::vector<SweepRecord>& records);
Table dynamic_table(const std::vector<DynamicRecord>& records, const DynamicSpec& spec);
Table sensitivity_table(const std::vector<SensitivityRecord>& records);
Table frag_table(const FragReport& report, Bytes bandwidth_capacity);

std::string format_number(double v);

}  // namespace asymsim
