#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>

#include "asymsim/hardware.hpp"
#include "asymsim/memsim.hpp"
#include "asymsim/types.hpp"
#include "asymsim/workload.hpp"

namespace asymsim {

// Multipliers on the ideal compute time. Unset means the roofline correction
// max(1, memory time / compute time).
struct PeakExecParams {
    std::optional<double> alpha_attention;
    std::optional<double> alpha_qkv;
    std::optional<double> alpha_fc;

    [[nodiscard]] std::optional<double> alpha(Sublayer s) const;
};

Seconds peak_exec_estimate(const ModelSpec& model, const BatchState& batch, Sublayer sublayer,
                           int n, Side side, const PlatformSpec& platform,
                           const PeakExecParams& params = {});

// Page-rounded residency of every (sublayer, n) split, precomputed for one
// batch state. Reserves growth for `window_iterations` future tokens per request.
class CapacityModel {
public:
    CapacityModel(const ModelSpec& model, const BatchState& batch, const PlatformSpec& platform,
                  int window_iterations = 1);

    // Bytes sublayer s places on `side` when n of its groups are on the bandwidth tier.
    [[nodiscard]] Bytes bytes(Sublayer s, int n, Side side) const;
    [[nodiscard]] Bytes fixed(Side side) const { return fixed_[static_cast<std::size_t>(index_of(side))]; }
    [[nodiscard]] Bytes capacity(Side side) const { return capacity_[static_cast<std::size_t>(index_of(side))]; }
    [[nodiscard]] Bytes side_total(const MappingDecision& m, Side side) const;
    [[nodiscard]] bool fits(const MappingDecision& m) const;
    [[nodiscard]] int step(Sublayer s) const { return s == Sublayer::Attention ? kv_groups_ : 1; }
    [[nodiscard]] int heads() const { return heads_; }

private:
    int heads_;
    int kv_groups_;
    std::array<Bytes, 2> fixed_{};
    std::array<Bytes, 2> capacity_{};
    // [sublayer][n] bytes on the bandwidth side for n groups, and on the
    // capacity side for N - n groups.
    std::array<std::vector<Bytes>, 3> on_bw_;
    std::array<std::vector<Bytes>, 3> on_cap_;
};

using LatencyEvaluator = std::function<Seconds(const MappingDecision&)>;

struct SearchOptions {
    Count max_evaluations = 2'000'000;
    int window_iterations = 1;
};

struct SearchResult {
    MappingDecision mapping;
    Seconds objective = 0.0;
    Count evaluations = 0;
};

MappingDecision greedy_map(const ModelSpec& model, const BatchState& batch,
                           const PlatformSpec& platform, const PeakExecParams& params = {},
                           int window_iterations = 1);

MappingDecision flexgen_map(const ModelSpec& model, const BatchState& batch,
                            const PlatformSpec& platform, int window_iterations = 1);

SearchResult exhaustive_best(const ModelSpec& model, const BatchState& batch,
                             const PlatformSpec& platform, const LatencyEvaluator& evaluator,
                             const SearchOptions& options = {});

SearchResult major_map(const ModelSpec& model, const BatchState& batch,
                       const PlatformSpec& platform, const LatencyEvaluator& evaluator,
                       Sublayer favored, const SearchOptions& options = {});

// Best mapping when each sublayer must sit wholly on one tier.
SearchResult sublayer_best(const ModelSpec& model, const BatchState& batch,
                           const PlatformSpec& platform, const LatencyEvaluator& evaluator,
                           const SearchOptions& options = {});

// Moves every weight/KV unit whose residency in `mem` differs from `next`.
MigrationPlan plan_migration(const MappingDecision& previous, const MappingDecision& next,
                             const MemoryState& mem, const TensorCatalog& catalog);

struct Policy {
    enum class Kind { Greedy, FlexGen, Best, QMajor, AMajor, FMajor, SublayerBest, Static };
    Kind kind = Kind::Greedy;
    MappingDecision fixed;

    [[nodiscard]] std::string name() const;
    [[nodiscard]] bool needs_evaluator() const;
};

// "greedy", "flexgen", "best", "q-major", "a-major", "f-major", "sublayer",
// "static:<n_q>,<n_a>,<n_f>".
Policy parse_policy(const std::string& text);

}  // namespace asymsim
