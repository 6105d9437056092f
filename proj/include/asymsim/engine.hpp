#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "asymsim/hardware.hpp"
#include "asymsim/mapping.hpp"
#include "asymsim/memsim.hpp"
#include "asymsim/types.hpp"
#include "asymsim/workload.hpp"

namespace asymsim {

// ---------------------------------------------------------------------------
// Variants and options

enum class VariantKind : std::uint8_t {
    CapacityOnly,   // every tensor and every chip on the capacity tier
    Hierarchical,   // chips beside the bandwidth tier, overflow streamed on demand
    Asymmetric,     // head-aware split across both tiers
    MultiHbm,       // k bandwidth-tier modules, tensors sharded per head
    AllBandwidth    // reference: everything resident on one bandwidth tier, no capacity limit
};

struct SystemVariant {
    VariantKind kind = VariantKind::Asymmetric;
    int modules = 8;  // MultiHbm only

    [[nodiscard]] std::string name() const;
    friend bool operator==(const SystemVariant&, const SystemVariant&) = default;
};

// "capacity-only", "hierarchical", "asymmetric", "multi-hbm:<k>", "all-bandwidth".
SystemVariant parse_variant(const std::string& text);

struct SimOptions {
    BarrierMode barrier = BarrierMode::Stage;
    bool trace = false;
    PeakExecParams peak_params;
    SearchOptions search;
};

// ---------------------------------------------------------------------------
// Reports

struct TraceEvent {
    Seconds time = 0.0;
    std::string tier;
    int kernel_id = -1;
    std::string event;
};

struct IterationReport {
    Count iteration = 0;
    // Timeline latency plus any migration charged at the following boundary.
    Seconds latency = 0.0;
    Seconds timeline_latency = 0.0;
    std::array<Seconds, 2> busy{0.0, 0.0};
    Seconds barrier_wait = 0.0;
    Seconds transfer_time = 0.0;
    Bytes migration_bytes = 0;
    Seconds migration_time = 0.0;
    std::array<Count, 2> tlb_hits{0, 0};
    std::array<Count, 2> tlb_misses{0, 0};
    // Bandwidth-tier residency per sublayer plus buffers that belong to none.
    std::array<Bytes, 3> bw_footprint{0, 0, 0};
    Bytes bw_footprint_other = 0;
    Bytes kv_bytes = 0;
    MappingDecision mapping;
    // Bytes moved per tier and over the interconnect, for energy.
    std::array<Bytes, 2> tier_bytes{0, 0};
    Bytes interconnect_bytes = 0;
    double energy = 0.0;
    std::vector<TraceEvent> trace;

    [[nodiscard]] Bytes bw_footprint_total() const {
        return bw_footprint[0] + bw_footprint[1] + bw_footprint[2] + bw_footprint_other;
    }
};

struct RunReport {
    std::string model;
    std::string variant;
    std::string policy;
    int batch_size = 0;
    // Powered memory modules per tier; static energy scales with these.
    std::array<int, 2> modules{1, 1};
    std::vector<IterationReport> iterations;

    [[nodiscard]] Seconds mean_latency() const;
    [[nodiscard]] double total_energy() const;
};

double iteration_energy(const IterationReport& it, const std::array<int, 2>& modules,
                        const EnergyParams& params);
double energy_per_token(const RunReport& report, const EnergyParams& params);
// Mean baseline latency over mean subject latency.
double speedup(const RunReport& baseline, const RunReport& subject);

nlohmann::json to_json(const IterationReport& it);
nlohmann::json to_json(const RunReport& report);

// ---------------------------------------------------------------------------
// Evaluation

// Bytes each side must receive before a stage can start, given the split of
// the producing stage.
std::array<Bytes, 2> stage_transfer_bytes(const ModelSpec& model, int batch_size, Stage from,
                                          int n_from, Stage to, int n_to);

// Closed-form iteration latency of the asymmetric system without translation.
// Matches run_iteration with translation disabled.
class AnalyticEvaluator {
public:
    AnalyticEvaluator(const ModelSpec& model, const BatchState& batch, const PlatformSpec& platform,
                      BarrierMode barrier = BarrierMode::Stage);

    Seconds operator()(const MappingDecision& m) const;

private:
    [[nodiscard]] Seconds stage_time(Stage s, int n) const;
    [[nodiscard]] Seconds transfer(Stage from, int n_from, Stage to, int n_to) const;

    ModelSpec model_;
    int batch_size_;
    BarrierMode barrier_;
    double link_bw_;
    // [stage][side][n] -> per-kernel times in issue order
    std::array<std::array<std::vector<std::vector<Seconds>>, 2>, kStagesPerLayer> kernels_;
    // [stage][n] -> stage time with the stage-barrier model
    std::array<std::vector<Seconds>, kStagesPerLayer> stage_;
};

// One generation iteration of the asymmetric system against a populated
// memory state. TLB state carries over between calls.
IterationReport run_iteration(const ModelSpec& model, const BatchState& batch,
                              const MappingDecision& mapping, const PlatformSpec& platform,
                              MemoryState& mem, const TensorCatalog& catalog,
                              const SimOptions& options = {});

struct Scenario {
    BatchState initial;
    int iterations = 1;
    ScenarioPolicy law;
    std::uint64_t seed = 0;
};

MappingDecision decide_mapping(const Policy& policy, const ModelSpec& model,
                               const BatchState& batch, const PlatformSpec& platform,
                               const SimOptions& options);

RunReport run_generation(const ModelSpec& model, const Scenario& scenario, const Policy& policy,
                         const PlatformSpec& platform, const SimOptions& options = {});

// Runs any variant. The policy only matters for the asymmetric system.
RunReport run_variant(const ModelSpec& model, const Scenario& scenario,
                      const PlatformSpec& platform, const SystemVariant& variant,
                      const Policy& policy = {}, const SimOptions& options = {});

}  // namespace asymsim
