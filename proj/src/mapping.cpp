#include "asymsim/mapping.hpp"

#include <algorithm>
#include <charconv>
#include <tuple>

namespace asymsim {

std::optional<double> PeakExecParams::alpha(Sublayer s) const {
    switch (s) {
        case Sublayer::QkvLinear: return alpha_qkv;
        case Sublayer::Attention: return alpha_attention;
        case Sublayer::Fc: return alpha_fc;
    }
    return std::nullopt;
}

Seconds peak_exec_estimate(const ModelSpec& model, const BatchState& batch, Sublayer sublayer,
                           int n, Side side, const PlatformSpec& platform,
                           const PeakExecParams& params) {
    if (n <= 0) return 0.0;
    const Count T = batch.total_tokens();
    Count flops = 0;
    Bytes bytes = 0;
    double dominant_peak = 0.0;
    for (Stage stage : kStages) {
        if (sublayer_of(stage) != sublayer) continue;
        for (const auto& k : stage_kernels(model, batch.batch_size, T, stage, side, n)) {
            flops += k.flops;
            bytes += k.total_bytes();
            if (!is_vector_class(k.op_class))
                dominant_peak = effective_throughput(k, platform.chip, platform.chips(side));
        }
    }
    const double ideal = static_cast<double>(flops) / dominant_peak;
    if (auto a = params.alpha(sublayer)) return ideal * *a;
    const double memory = static_cast<double>(bytes) / platform.tier(side).bandwidth;
    return ideal * std::max(1.0, memory / ideal);
}

// ---------------------------------------------------------------------------
// CapacityModel

CapacityModel::CapacityModel(const ModelSpec& model, const BatchState& batch,
                             const PlatformSpec& platform, int window_iterations)
    : heads_(model.num_heads), kv_groups_(model.kv_groups) {
    const Bytes page = platform.translation.page_size;
    const Count T = batch.total_tokens() + static_cast<Count>(batch.batch_size) * window_iterations;
    for (Side s : kSides) {
        const auto i = static_cast<std::size_t>(index_of(s));
        fixed_[i] = fixed_side_bytes(model, batch.batch_size, T, s, page);
        capacity_[i] = (platform.tier(s).capacity / page) * page;
    }
    for (Sublayer s : kSublayers) {
        const auto i = static_cast<std::size_t>(index_of(s));
        on_bw_[i].resize(static_cast<std::size_t>(heads_ + 1));
        on_cap_[i].resize(static_cast<std::size_t>(heads_ + 1));
        for (int n = 0; n <= heads_; ++n) {
            on_bw_[i][static_cast<std::size_t>(n)] =
                sublayer_side_bytes(model, batch.batch_size, T, s, n, page);
            on_cap_[i][static_cast<std::size_t>(n)] =
                sublayer_side_bytes(model, batch.batch_size, T, s, heads_ - n, page);
        }
    }
}

Bytes CapacityModel::bytes(Sublayer s, int n, Side side) const {
    const auto i = static_cast<std::size_t>(index_of(s));
    return side == Side::Bandwidth ? on_bw_[i][static_cast<std::size_t>(n)]
                                   : on_cap_[i][static_cast<std::size_t>(n)];
}

Bytes CapacityModel::side_total(const MappingDecision& m, Side side) const {
    Bytes t = 0;
    for (Sublayer s : kSublayers) t += bytes(s, m.count(s), side);
    const bool any_bw = m.n_qkv > 0 || m.n_attention > 0 || m.n_fc > 0;
    if (side == Side::Capacity || any_bw) t += fixed(side);
    return t;
}

bool CapacityModel::fits(const MappingDecision& m) const {
    return side_total(m, Side::Bandwidth) <= capacity(Side::Bandwidth) &&
           side_total(m, Side::Capacity) <= capacity(Side::Capacity);
}

// ---------------------------------------------------------------------------
// Policies

MappingDecision greedy_map(const ModelSpec& model, const BatchState& batch,
                           const PlatformSpec& platform, const PeakExecParams& params,
                           int window_iterations) {
    const CapacityModel cap(model, batch, platform, window_iterations);
    const int N = model.num_heads;
    Bytes rem_bw = cap.capacity(Side::Bandwidth) - cap.fixed(Side::Bandwidth);
    Bytes rem_cap = cap.capacity(Side::Capacity) - cap.fixed(Side::Capacity);

    MappingDecision m;
    for (Sublayer s : {Sublayer::Attention, Sublayer::QkvLinear, Sublayer::Fc}) {
        int best_n = -1;
        Seconds best_t = 0.0;
        for (int n = 0; n <= N; n += cap.step(s)) {
            const Bytes hb = cap.bytes(s, n, Side::Bandwidth);
            const Bytes lb = cap.bytes(s, n, Side::Capacity);
            if ((n > 0 && hb > rem_bw) || (n < N && lb > rem_cap)) continue;
            const Seconds t =
                std::max(peak_exec_estimate(model, batch, s, n, Side::Bandwidth, platform, params),
                         peak_exec_estimate(model, batch, s, N - n, Side::Capacity, platform, params));
            if (best_n < 0 || t <= best_t) {
                best_n = n;
                best_t = t;
            }
        }
        if (best_n < 0)
            throw OutOfMemory("greedy mapping: no split of " + std::string(to_string(s)) +
                              " fits the remaining capacity");
        m.set(s, best_n);
        rem_bw -= cap.bytes(s, best_n, Side::Bandwidth);
        rem_cap -= cap.bytes(s, best_n, Side::Capacity);
    }
    return m;
}

MappingDecision flexgen_map(const ModelSpec& model, const BatchState& batch,
                            const PlatformSpec& platform, int window_iterations) {
    const CapacityModel cap(model, batch, platform, window_iterations);
    const int N = model.num_heads;
    const Count T = batch.total_tokens();

    // FLOP-only cost: weights are one group, the KV cache another.
    Count weight_flops = 0;
    Count kv_flops = 0;
    for (Stage stage : kStages)
        for (const auto& k : stage_kernels(model, batch.batch_size, T, stage, Side::Capacity, N))
            (sublayer_of(stage) == Sublayer::Attention ? kv_flops : weight_flops) += k.flops;
    auto cost = [&](Side side, double w, double c) {
        const double mm = peak_throughput(platform.chip, OpClass::Gemm) * platform.chips(side);
        const double mv = peak_throughput(platform.chip, OpClass::Gemv) * platform.chips(side);
        return w * static_cast<double>(weight_flops) / mm + c * static_cast<double>(kv_flops) / mv;
    };

    std::optional<std::tuple<double, int, int, int>> best;
    MappingDecision chosen;
    for (int w = 0; w <= N; ++w) {
        for (int c = 0; c <= N; c += model.kv_groups) {
            const MappingDecision m{w, c, w};
            if (!cap.fits(m)) continue;
            const double fw = static_cast<double>(w) / N;
            const double fc = static_cast<double>(c) / N;
            const double t = std::max(cost(Side::Bandwidth, fw, fc), cost(Side::Capacity, 1 - fw, 1 - fc));
            const int imbalance = std::abs(2 * w - N) + std::abs(2 * c - N);
            const auto key = std::make_tuple(t, imbalance, -w, -c);
            if (!best || key < *best) {
                best = key;
                chosen = m;
            }
        }
    }
    if (!best) throw OutOfMemory("flexgen mapping: no placement fits both tiers");
    return chosen;
}

namespace {

auto tie_key(const MappingDecision& m) { return std::make_tuple(m.n_attention, m.n_qkv, m.n_fc); }

void consider(SearchResult& best, bool& have, const MappingDecision& m, Seconds v) {
    ++best.evaluations;
    if (!have || v < best.objective || (v == best.objective && tie_key(m) > tie_key(best.mapping))) {
        best.mapping = m;
        best.objective = v;
        have = true;
    }
}

void check_budget(Count candidates, const SearchOptions& options) {
    if (candidates > options.max_evaluations)
        throw BudgetExceeded("search needs " + std::to_string(candidates) +
                             " evaluations, budget is " + std::to_string(options.max_evaluations) +
                             "; use the greedy policy or raise the budget");
}

}  // namespace

SearchResult exhaustive_best(const ModelSpec& model, const BatchState& batch,
                             const PlatformSpec& platform, const LatencyEvaluator& evaluator,
                             const SearchOptions& options) {
    const CapacityModel cap(model, batch, platform, options.window_iterations);
    const int N = model.num_heads;
    const int g = model.kv_groups;
    check_budget(static_cast<Count>(N + 1) * (N / g + 1) * (N + 1), options);
    SearchResult best;
    bool have = false;
    for (int q = 0; q <= N; ++q)
        for (int a = 0; a <= N; a += g)
            for (int f = 0; f <= N; ++f) {
                const MappingDecision m{q, a, f};
                if (!cap.fits(m)) continue;
                consider(best, have, m, evaluator(m));
            }
    if (!have) throw OutOfMemory("no mapping fits both tiers");
    return best;
}

SearchResult major_map(const ModelSpec& model, const BatchState& batch,
                       const PlatformSpec& platform, const LatencyEvaluator& evaluator,
                       Sublayer favored, const SearchOptions& options) {
    const CapacityModel cap(model, batch, platform, options.window_iterations);
    const int N = model.num_heads;
    const int step = cap.step(favored);

    std::array<Sublayer, 2> free_vars{};
    int k = 0;
    for (Sublayer s : kSublayers)
        if (s != favored) free_vars[static_cast<std::size_t>(k++)] = s;
    const int s0 = cap.step(free_vars[0]);
    const int s1 = cap.step(free_vars[1]);
    auto with = [&](int fav, int x, int y) {
        MappingDecision m;
        m.set(favored, fav);
        m.set(free_vars[0], x);
        m.set(free_vars[1], y);
        return m;
    };

    // Largest share of the favored sublayer for which some completion fits.
    int top = -1;
    for (int n = N - N % step; n >= 0 && top < 0; n -= step)
        for (int x = 0; x <= N && top < 0; x += s0)
            for (int y = 0; y <= N && top < 0; y += s1)
                if (cap.fits(with(n, x, y))) top = n;
    if (top < 0) throw OutOfMemory("no mapping fits both tiers");

    check_budget(static_cast<Count>(N / s0 + 1) * (N / s1 + 1), options);

    SearchResult best;
    bool have = false;
    for (int x = 0; x <= N; x += s0)
        for (int y = 0; y <= N; y += s1) {
            const MappingDecision m = with(top, x, y);
            if (!cap.fits(m)) continue;
            consider(best, have, m, evaluator(m));
        }
    if (!have) throw OutOfMemory("no mapping fits both tiers");
    return best;
}

SearchResult sublayer_best(const ModelSpec& model, const BatchState& batch,
                           const PlatformSpec& platform, const LatencyEvaluator& evaluator,
                           const SearchOptions& options) {
    const CapacityModel cap(model, batch, platform, options.window_iterations);
    const int N = model.num_heads;
    SearchResult best;
    bool have = false;
    for (int q : {0, N})
        for (int a : {0, N})
            for (int f : {0, N}) {
                const MappingDecision m{q, a, f};
                if (!cap.fits(m)) continue;
                consider(best, have, m, evaluator(m));
            }
    if (!have) throw OutOfMemory("no sublayer-granular mapping fits both tiers");
    return best;
}

MigrationPlan plan_migration(const MappingDecision& previous, const MappingDecision& next,
                             const MemoryState& mem, const TensorCatalog& catalog) {
    MigrationPlan plan;
    if (previous == next) return plan;
    const Bytes page = mem.page_size();
    for (OwnerId id = 0; id < catalog.size(); ++id) {
        if (!catalog.is_per_sublayer(id)) continue;
        const Side want = catalog.side_for(id, next);
        const auto& o = mem.owner(id);
        if (o.side == want) continue;
        plan.moves.push_back({id, o.mapped_pages, want});
        plan.bytes_to[static_cast<std::size_t>(index_of(want))] += o.mapped_pages * page;
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Policy names

std::string Policy::name() const {
    switch (kind) {
        case Kind::Greedy: return "greedy";
        case Kind::FlexGen: return "flexgen";
        case Kind::Best: return "best";
        case Kind::QMajor: return "q-major";
        case Kind::AMajor: return "a-major";
        case Kind::FMajor: return "f-major";
        case Kind::SublayerBest: return "sublayer";
        case Kind::Static:
            return "static:" + std::to_string(fixed.n_qkv) + "," + std::to_string(fixed.n_attention) +
                   "," + std::to_string(fixed.n_fc);
    }
    return "?";
}

bool Policy::needs_evaluator() const {
    return kind == Kind::Best || kind == Kind::QMajor || kind == Kind::AMajor ||
           kind == Kind::FMajor || kind == Kind::SublayerBest;
}

Policy parse_policy(const std::string& text) {
    Policy p;
    if (text == "greedy") p.kind = Policy::Kind::Greedy;
    else if (text == "flexgen") p.kind = Policy::Kind::FlexGen;
    else if (text == "best") p.kind = Policy::Kind::Best;
    else if (text == "q-major") p.kind = Policy::Kind::QMajor;
    else if (text == "a-major") p.kind = Policy::Kind::AMajor;
    else if (text == "f-major") p.kind = Policy::Kind::FMajor;
    else if (text == "sublayer") p.kind = Policy::Kind::SublayerBest;
    else if (text.rfind("static:", 0) == 0) {
        p.kind = Policy::Kind::Static;
        std::array<int, 3> v{};
        const char* it = text.data() + 7;
        const char* end = text.data() + text.size();
        for (std::size_t i = 0; i < 3; ++i) {
            auto [ptr, ec] = std::from_chars(it, end, v[i]);
            if (ec != std::errc{}) throw ConfigError("bad static policy '" + text + "'");
            it = ptr;
            if (i < 2) {
                if (it == end || *it != ',') throw ConfigError("bad static policy '" + text + "'");
                ++it;
            }
        }
        if (it != end) throw ConfigError("bad static policy '" + text + "'");
        p.fixed = {v[0], v[1], v[2]};
    } else {
        throw ConfigError("unknown policy '" + text + "'");
    }
    return p;
}

}  // namespace asymsim
