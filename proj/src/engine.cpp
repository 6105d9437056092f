#include "asymsim/engine.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <numeric>
#include <optional>

namespace asymsim {

// ---------------------------------------------------------------------------
// Variants

std::string SystemVariant::name() const {
    switch (kind) {
        case VariantKind::CapacityOnly: return "capacity-only";
        case VariantKind::Hierarchical: return "hierarchical";
        case VariantKind::Asymmetric: return "asymmetric";
        case VariantKind::MultiHbm: return "multi-hbm:" + std::to_string(modules);
        case VariantKind::AllBandwidth: return "all-bandwidth";
    }
    return "?";
}

SystemVariant parse_variant(const std::string& text) {
    SystemVariant v;
    if (text == "capacity-only") v.kind = VariantKind::CapacityOnly;
    else if (text == "hierarchical") v.kind = VariantKind::Hierarchical;
    else if (text == "asymmetric") v.kind = VariantKind::Asymmetric;
    else if (text == "all-bandwidth") v.kind = VariantKind::AllBandwidth;
    else if (text.rfind("multi-hbm", 0) == 0) {
        v.kind = VariantKind::MultiHbm;
        if (text.size() > 9) {
            if (text[9] != ':') throw ConfigError("bad variant '" + text + "'");
            const char* b = text.data() + 10;
            const char* e = text.data() + text.size();
            auto [p, ec] = std::from_chars(b, e, v.modules);
            if (ec != std::errc{} || p != e) throw ConfigError("bad variant '" + text + "'");
        }
        if (v.modules < 2) throw ConfigError("multi-hbm needs at least 2 modules");
    } else {
        throw ConfigError("unknown variant '" + text + "'");
    }
    return v;
}

// ---------------------------------------------------------------------------
// Reports

Seconds RunReport::mean_latency() const {
    if (iterations.empty()) return 0.0;
    Seconds t = 0.0;
    for (const auto& it : iterations) t += it.latency;
    return t / static_cast<double>(iterations.size());
}

double RunReport::total_energy() const {
    double e = 0.0;
    for (const auto& it : iterations) e += it.energy;
    return e;
}

double iteration_energy(const IterationReport& it, const std::array<int, 2>& modules,
                        const EnergyParams& p) {
    double e = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        e += static_cast<double>(it.tier_bytes[i]) * p.dynamic_pj_per_byte[i] * 1e-12;
        e += it.latency * p.static_watts[i] * modules[i];
    }
    e += static_cast<double>(it.interconnect_bytes) * p.interconnect_pj_per_byte * 1e-12;
    return e;
}

double energy_per_token(const RunReport& report, const EnergyParams& params) {
    if (report.iterations.empty() || report.batch_size <= 0) return 0.0;
    double e = 0.0;
    for (const auto& it : report.iterations) e += iteration_energy(it, report.modules, params);
    return e / (static_cast<double>(report.iterations.size()) * report.batch_size);
}

double speedup(const RunReport& baseline, const RunReport& subject) {
    if (baseline.iterations.size() != subject.iterations.size() ||
        baseline.batch_size != subject.batch_size || baseline.model != subject.model)
        throw ConfigError("speedup: reports come from different scenarios");
    return baseline.mean_latency() / subject.mean_latency();
}

nlohmann::json to_json(const IterationReport& it) {
    nlohmann::json j{{"iteration", it.iteration},
                     {"latency", it.latency},
                     {"timeline_latency", it.timeline_latency},
                     {"busy_bandwidth", it.busy[0]},
                     {"busy_capacity", it.busy[1]},
                     {"barrier_wait", it.barrier_wait},
                     {"transfer_time", it.transfer_time},
                     {"migration_bytes", it.migration_bytes},
                     {"migration_time", it.migration_time},
                     {"tlb_hits", {it.tlb_hits[0], it.tlb_hits[1]}},
                     {"tlb_misses", {it.tlb_misses[0], it.tlb_misses[1]}},
                     {"bw_footprint",
                      {{"qkv", it.bw_footprint[0]},
                       {"attention", it.bw_footprint[1]},
                       {"fc", it.bw_footprint[2]},
                       {"other", it.bw_footprint_other}}},
                     {"kv_bytes", it.kv_bytes},
                     {"mapping", {it.mapping.n_qkv, it.mapping.n_attention, it.mapping.n_fc}},
                     {"tier_bytes", {it.tier_bytes[0], it.tier_bytes[1]}},
                     {"interconnect_bytes", it.interconnect_bytes},
                     {"energy", it.energy}};
    if (!it.trace.empty()) {
        auto& t = j["trace"] = nlohmann::json::array();
        for (const auto& e : it.trace)
            t.push_back({{"time", e.time}, {"tier", e.tier}, {"kernel", e.kernel_id}, {"event", e.event}});
    }
    return j;
}

nlohmann::json to_json(const RunReport& r) {
    nlohmann::json its = nlohmann::json::array();
    for (const auto& it : r.iterations) its.push_back(to_json(it));
    return {{"model", r.model},
            {"variant", r.variant},
            {"policy", r.policy},
            {"batch_size", r.batch_size},
            {"modules", {r.modules[0], r.modules[1]}},
            {"mean_latency", r.mean_latency()},
            {"iterations", its}};
}

// ---------------------------------------------------------------------------
// Transfers between stages

std::array<Bytes, 2> stage_transfer_bytes(const ModelSpec& model, int batch_size, Stage from,
                                          int n_from, Stage to, int n_to) {
    const Bytes B = batch_size;
    const Bytes b = model.bytes_per_element;
    const int N = model.num_heads;
    Bytes per_group = 0;
    switch (from) {
        case Stage::Qkv: per_group = B * model.qkv_head_cols() * b; break;
        case Stage::Up: per_group = B * model.ffn_group_cols() * b; break;
        default: per_group = B * model.head_dim * b; break;
    }
    std::array<Bytes, 2> into{0, 0};
    if (to == Stage::Attention) {
        // Heads computed on one side but attended on the other.
        into[0] = std::max(0, n_to - n_from) * per_group;
        into[1] = std::max(0, n_from - n_to) * per_group;
    } else {
        // Every occupied side needs the whole activation.
        if (n_to > 0) into[0] = (N - n_from) * per_group;
        if (n_to < N) into[1] = n_from * per_group;
    }
    return into;
}

namespace {

Stage next_stage(Stage s) {
    return kStages[static_cast<std::size_t>((static_cast<int>(s) + 1) % kStagesPerLayer)];
}

Seconds transfer_seconds(const std::array<Bytes, 2>& into, double link_bw) {
    return static_cast<double>(std::max(into[0], into[1])) / link_bw;
}

}  // namespace

// ---------------------------------------------------------------------------
// AnalyticEvaluator

AnalyticEvaluator::AnalyticEvaluator(const ModelSpec& model, const BatchState& batch,
                                     const PlatformSpec& platform, BarrierMode barrier)
    : model_(model),
      batch_size_(batch.batch_size),
      barrier_(barrier),
      link_bw_(platform.link_bandwidth()) {
    const int N = model.num_heads;
    const Count T = batch.total_tokens();
    TranslationSpec off = platform.translation;
    off.enabled = false;
    for (Stage stage : kStages) {
        const auto si = static_cast<std::size_t>(stage);
        for (Side side : kSides) {
            auto& table = kernels_[si][static_cast<std::size_t>(index_of(side))];
            table.resize(static_cast<std::size_t>(N + 1));
            for (int n = 0; n <= N; ++n) {
                for (const auto& k : stage_kernels(model, batch.batch_size, T, stage, side, n))
                    table[static_cast<std::size_t>(n)].push_back(kernel_time(
                        k, platform.tier(side), platform.chip, off, 0, platform.chips(side)));
            }
        }
        stage_[si].resize(static_cast<std::size_t>(N + 1));
        for (int n = 0; n <= N; ++n) {
            const auto& bw = kernels_[si][0][static_cast<std::size_t>(n)];
            const auto& cap = kernels_[si][1][static_cast<std::size_t>(N - n)];
            Seconds t = 0.0;
            if (barrier == BarrierMode::Stage) {
                t = std::max(std::accumulate(bw.begin(), bw.end(), 0.0),
                             std::accumulate(cap.begin(), cap.end(), 0.0));
            } else {
                for (std::size_t j = 0; j < std::max(bw.size(), cap.size()); ++j)
                    t += std::max(j < bw.size() ? bw[j] : 0.0, j < cap.size() ? cap[j] : 0.0);
            }
            stage_[si][static_cast<std::size_t>(n)] = t;
        }
    }
}

Seconds AnalyticEvaluator::stage_time(Stage s, int n) const {
    return stage_[static_cast<std::size_t>(s)][static_cast<std::size_t>(n)];
}

Seconds AnalyticEvaluator::transfer(Stage from, int n_from, Stage to, int n_to) const {
    return transfer_seconds(stage_transfer_bytes(model_, batch_size_, from, n_from, to, n_to), link_bw_);
}

Seconds AnalyticEvaluator::operator()(const MappingDecision& m) const {
    Seconds layer = 0.0;
    for (Stage s : kStages) {
        const int n = m.count(sublayer_of(s));
        layer += stage_time(s, n);
        if (s != Stage::Down) layer += transfer(s, n, next_stage(s), m.count(sublayer_of(next_stage(s))));
    }
    const Seconds wrap = transfer(Stage::Down, m.n_fc, Stage::Qkv, m.n_qkv);
    return model_.num_layers * layer + (model_.num_layers - 1) * wrap;
}

// ---------------------------------------------------------------------------
// Page sets of kernels

namespace {

UnitKind weight_kind(Stage s) {
    switch (s) {
        case Stage::Qkv: return UnitKind::QkvWeight;
        case Stage::Proj: return UnitKind::ProjWeight;
        case Stage::Up: return UnitKind::UpWeight;
        default: return UnitKind::DownWeight;
    }
}

// Logical placement of every tensor unit: owners are laid out in catalog order,
// each reserving room for its largest size.
class PageIndex {
public:
    PageIndex(const TensorCatalog& cat, Bytes page) : cat_(cat), page_(page) {
        bases_.resize(static_cast<std::size_t>(cat.size()));
        Count next = 0;
        for (OwnerId id = 0; id < cat.size(); ++id) {
            bases_[static_cast<std::size_t>(id)] = next;
            next += ceil_div(cat.max_bytes(id), page);
        }
        logical_pages_ = next;
    }

    [[nodiscard]] Count base(OwnerId id) const { return bases_[static_cast<std::size_t>(id)]; }
    [[nodiscard]] Count logical_pages() const { return logical_pages_; }

    // Calls f(page, is_data) for every page the kernel touches, ascending.
    // Data pages hold weights or KV; the rest are activation buffers.
    template <class F>
    void for_each(const KernelDesc& k, Count total_tokens, Side lane, F&& f) const {
        const auto& model = cat_.model();
        auto range = [&](OwnerId id, Bytes lo, Bytes hi) {
            if (hi <= lo) return;
            const Count b = base(id);
            for (Count p = lo / page_; p <= (hi - 1) / page_; ++p) f(b + p, true);
        };
        if (!is_vector_class(k.op_class)) {
            if (k.stage == Stage::Attention) {
                const Bytes slice = cat_.kv_layer_bytes(total_tokens);
                const Bytes lo = k.layer_index * slice + (k.position == 0 ? 0 : slice / 2);
                for (int kv = k.partition.begin / model.kv_groups;
                     kv < k.partition.end / model.kv_groups; ++kv)
                    range(cat_.id(UnitKind::KvCache, -1, kv), lo, lo + slice / 2);
            } else {
                const UnitKind kind = weight_kind(k.stage);
                const Bytes slice = cat_.layer_slice_bytes(kind);
                for (int h = k.partition.begin; h < k.partition.end; ++h)
                    range(cat_.id(kind, -1, h), k.layer_index * slice, (k.layer_index + 1) * slice);
            }
        }
        if (k.op_class == OpClass::Residual && lane == Side::Capacity) {
            const OwnerId act = cat_.id(UnitKind::Activation, k.layer_index, 0);
            const Count pages = ceil_div(cat_.bytes(act, total_tokens), page_);
            for (Count p = 0; p < pages; ++p) f(base(act) + p, false);
        }
        const OwnerId scratch = cat_.id(UnitKind::Scratch, -1, index_of(lane));
        const Count pages = ceil_div(std::max<Bytes>(k.activation_in_bytes + k.activation_out_bytes, 1), page_);
        for (Count p = 0; p < pages; ++p) f(base(scratch) + p, false);
    }

private:
    const TensorCatalog& cat_;
    Bytes page_;
    std::vector<Count> bases_;
    Count logical_pages_ = 0;
};

// ---------------------------------------------------------------------------
// List scheduler over two lanes with barrier groups

struct Lane {
    bool used = false;
    MemoryTierSpec tier;
    int chips = 1;
};

struct ScheduleResult {
    Seconds latency = 0.0;
    std::array<Seconds, 2> busy{0.0, 0.0};
    Seconds barrier_wait = 0.0;
    Seconds transfer_time = 0.0;
};

// Kernels must be in barrier-group order. `after_group(i)` returns the
// interconnect time charged when the group ending at kernel i closes.
ScheduleResult schedule(const std::vector<KernelDesc>& ks, const std::vector<Seconds>& duration,
                        const std::function<Seconds(std::size_t)>& after_group,
                        std::vector<TraceEvent>* trace) {
    ScheduleResult r;
    std::vector<Seconds> finish(ks.size(), 0.0);
    std::array<Seconds, 2> lane_free{0.0, 0.0};
    std::array<Seconds, 2> lane_group_end{-1.0, -1.0};
    Seconds release = 0.0;
    Seconds group_end = 0.0;

    auto close_group = [&](std::size_t last) {
        for (auto& e : lane_group_end)
            if (e >= 0.0) r.barrier_wait += group_end - e;
        lane_group_end = {-1.0, -1.0};
        const Seconds xfer = after_group(last);
        r.transfer_time += xfer;
        if (trace && xfer > 0.0) trace->push_back({group_end, "interconnect", -1, "transfer"});
        release = group_end + xfer;
        group_end = release;
    };

    for (std::size_t i = 0; i < ks.size(); ++i) {
        const auto& k = ks[i];
        if (i > 0 && k.barrier_group != ks[i - 1].barrier_group) close_group(i - 1);
        const auto lane = static_cast<std::size_t>(index_of(k.side));
        Seconds start = std::max(lane_free[lane], release);
        for (int d : k.deps) start = std::max(start, finish[static_cast<std::size_t>(d)]);
        finish[i] = start + duration[i];
        lane_free[lane] = finish[i];
        lane_group_end[lane] = finish[i];
        r.busy[lane] += duration[i];
        group_end = std::max(group_end, finish[i]);
        if (trace) {
            const std::string tier(to_string(k.side));
            trace->push_back({start, tier, k.id, "start"});
            trace->push_back({finish[i], tier, k.id, "end"});
        }
    }
    if (!ks.empty())
        for (auto& e : lane_group_end)
            if (e >= 0.0) r.barrier_wait += group_end - e;
    r.latency = group_end;
    return r;
}

// Re-homes every kernel onto lane `side` (single-lane variants).
void place_on(std::vector<KernelDesc>& ks, Side side) {
    for (auto& k : ks) k.side = side;
}

void add_footprint_from_mem(IterationReport& rep, const MemoryState& mem, const TensorCatalog& cat) {
    for (OwnerId id = 0; id < cat.size(); ++id) {
        const auto& o = mem.owner(id);
        if (o.side != Side::Bandwidth) continue;
        const Bytes b = o.mapped_pages * mem.page_size();
        if (cat.is_per_sublayer(id))
            rep.bw_footprint[static_cast<std::size_t>(index_of(cat.sublayer_of(id)))] += b;
        else
            rep.bw_footprint_other += b;
    }
}

// Brings every unit to its size for `tokens`; frees before allocating.
void resize_all(MemoryState& mem, const TensorCatalog& cat, const MappingDecision& m, Count tokens) {
    const Bytes page = mem.page_size();
    for (int pass = 0; pass < 2; ++pass)
        for (OwnerId id = 0; id < cat.size(); ++id) {
            const Count want = desired_pages(cat, id, m, tokens, page);
            const Count have = mem.owner(id).mapped_pages;
            if ((pass == 0 && want < have) || (pass == 1 && want > have)) mem.resize(id, want);
        }
}

struct Tlbs {
    explicit Tlbs(int entries) : t{TlbState(entries), TlbState(entries)} {}
    std::array<TlbState, 2> t;
};

// Shared two-lane simulation. `access(lane, page)` translates one page and
// returns true on a TLB hit.
IterationReport simulate(const ModelSpec& model, const BatchState& batch,
                         const MappingDecision& mapping, const PlatformSpec& platform,
                         const std::array<Lane, 2>& lanes, const TensorCatalog& cat,
                         const std::function<bool(Side, Count)>& access, const SimOptions& options,
                         Side force_lane, bool single_lane) {
    IterationReport rep;
    rep.mapping = mapping;
    rep.iteration = batch.iteration;
    const Count T = batch.total_tokens();
    auto ks = enumerate_kernels(model, batch, mapping, options.barrier);
    if (single_lane) place_on(ks, force_lane);

    const PageIndex pages(cat, platform.translation.page_size);
    std::vector<Seconds> duration(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const auto& k = ks[i];
        const auto li = static_cast<std::size_t>(index_of(k.side));
        const Lane& lane = lanes[li];
        if (!lane.used) throw SimulationFault("kernel scheduled on an unused lane");
        Count misses = 0;
        pages.for_each(k, T, k.side, [&](Count p, bool) {
            if (access(k.side, p)) ++rep.tlb_hits[li];
            else { ++rep.tlb_misses[li]; ++misses; }
        });
        duration[i] = kernel_time(k, lane.tier, platform.chip, platform.translation, misses, lane.chips);
        rep.tier_bytes[li] += k.total_bytes();
    }

    const double link = platform.link_bandwidth();
    auto after = [&](std::size_t last) -> Seconds {
        if (last + 1 >= ks.size()) return 0.0;
        const auto& a = ks[last];
        const auto& b = ks[last + 1];
        if (a.stage == b.stage && a.layer_index == b.layer_index) return 0.0;
        const auto into = stage_transfer_bytes(model, batch.batch_size, a.stage,
                                               mapping.count(sublayer_of(a.stage)), b.stage,
                                               mapping.count(sublayer_of(b.stage)));
        rep.interconnect_bytes += into[0] + into[1];
        return transfer_seconds(into, link);
    };
    auto sched = schedule(ks, duration, after, options.trace ? &rep.trace : nullptr);
    rep.timeline_latency = sched.latency;
    rep.latency = sched.latency;
    rep.busy = sched.busy;
    rep.barrier_wait = sched.barrier_wait;
    rep.transfer_time = sched.transfer_time;
    rep.kv_bytes = footprint(model, batch).kv_cache();
    return rep;
}

std::array<Lane, 2> asymmetric_lanes(const PlatformSpec& p) {
    return {Lane{true, p.bandwidth_tier, p.chips(Side::Bandwidth)},
            Lane{true, p.capacity_tier, p.chips(Side::Capacity)}};
}

int all_chips(const PlatformSpec& p) { return p.chips_per_side[0] + p.chips_per_side[1]; }

MappingDecision all_on(const ModelSpec& model, Side side) {
    const int n = side == Side::Bandwidth ? model.num_heads : 0;
    return {n, n, n};
}

}  // namespace

// ---------------------------------------------------------------------------
// Asymmetric iteration

IterationReport run_iteration(const ModelSpec& model, const BatchState& batch,
                              const MappingDecision& mapping, const PlatformSpec& platform,
                              MemoryState& mem, const TensorCatalog& catalog,
                              const SimOptions& options) {
    auto rep = simulate(
        model, batch, mapping, platform, asymmetric_lanes(platform), catalog,
        [&](Side s, Count p) { return mem.translate(s, p).hit; }, options, Side::Bandwidth, false);
    add_footprint_from_mem(rep, mem, catalog);
    rep.energy = iteration_energy(rep, {1, 1}, platform.energy);
    return rep;
}

MappingDecision decide_mapping(const Policy& policy, const ModelSpec& model,
                               const BatchState& batch, const PlatformSpec& platform,
                               const SimOptions& options) {
    const int window = options.search.window_iterations;
    switch (policy.kind) {
        case Policy::Kind::Greedy: return greedy_map(model, batch, platform, options.peak_params, window);
        case Policy::Kind::FlexGen: return flexgen_map(model, batch, platform, window);
        case Policy::Kind::Static: validate_mapping(model, policy.fixed); return policy.fixed;
        default: break;
    }
    const AnalyticEvaluator eval(model, batch, platform, options.barrier);
    const LatencyEvaluator fn = [&eval](const MappingDecision& m) { return eval(m); };
    switch (policy.kind) {
        case Policy::Kind::Best: return exhaustive_best(model, batch, platform, fn, options.search).mapping;
        case Policy::Kind::QMajor:
            return major_map(model, batch, platform, fn, Sublayer::QkvLinear, options.search).mapping;
        case Policy::Kind::AMajor:
            return major_map(model, batch, platform, fn, Sublayer::Attention, options.search).mapping;
        case Policy::Kind::FMajor:
            return major_map(model, batch, platform, fn, Sublayer::Fc, options.search).mapping;
        case Policy::Kind::SublayerBest: return sublayer_best(model, batch, platform, fn, options.search).mapping;
        default: break;
    }
    throw ConfigError("unhandled policy " + policy.name());
}

RunReport run_generation(const ModelSpec& model, const Scenario& scenario, const Policy& policy,
                         const PlatformSpec& platform, const SimOptions& options) {
    model.validate();
    platform.validate();
    scenario.initial.validate(model);
    RunReport report;
    report.model = model.name;
    report.variant = SystemVariant{}.name();
    report.policy = policy.name();
    report.batch_size = scenario.initial.batch_size;
    report.modules = {1, 1};

    std::mt19937_64 rng(scenario.seed);
    BatchState batch = scenario.initial;
    const TensorCatalog catalog(model, batch.batch_size);
    MemoryState mem(platform);
    MappingDecision mapping = decide_mapping(policy, model, batch, platform, options);
    populate(mem, catalog, mapping, batch.total_tokens());

    // FlexGen keeps its placement until it stops fitting.
    auto next_mapping = [&](const BatchState& b) {
        if (policy.kind == Policy::Kind::FlexGen &&
            CapacityModel(model, b, platform, options.search.window_iterations).fits(mapping))
            return mapping;
        return decide_mapping(policy, model, b, platform, options);
    };
    auto move_to = [&](const MappingDecision& next, IterationReport& rep) {
        const auto plan = plan_migration(mapping, next, mem, catalog);
        rep.migration_time += execute_migration(plan, mem, platform);
        rep.migration_bytes += plan.total_bytes();
        rep.tier_bytes[0] += plan.total_bytes();
        rep.tier_bytes[1] += plan.total_bytes();
        rep.interconnect_bytes += plan.total_bytes();
        mapping = next;
    };

    for (int i = 0; i < scenario.iterations; ++i) {
        IterationReport rep = run_iteration(model, batch, mapping, platform, mem, catalog, options);
        if (i + 1 < scenario.iterations) {
            batch = advance_batch(batch, scenario.law, rng, model.max_seq_len);
            const Count T = batch.total_tokens();
            try {
                resize_all(mem, catalog, mapping, T);
            } catch (const OutOfMemory&) {
                move_to(decide_mapping(policy, model, batch, platform, options), rep);
                resize_all(mem, catalog, mapping, T);
            }
            const MappingDecision next = next_mapping(batch);
            if (!(next == mapping)) {
                move_to(next, rep);
                resize_all(mem, catalog, mapping, T);
            }
            rep.latency += rep.migration_time;
            rep.energy = iteration_energy(rep, report.modules, platform.energy);
        }
        report.iterations.push_back(std::move(rep));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Other variants

namespace {

IterationReport hierarchical_iteration(const ModelSpec& model, const BatchState& batch,
                                       const PlatformSpec& platform, const TensorCatalog& cat,
                                       Tlbs& tlbs, const SimOptions& options) {
    const Count T = batch.total_tokens();
    const Bytes page = platform.translation.page_size;
    const PageIndex index(cat, page);
    const MappingDecision m = all_on(model, Side::Bandwidth);
    auto ks = enumerate_kernels(model, batch, m, options.barrier);

    // Pages needed on the bandwidth tier if nothing streamed.
    Count data_pages = 0;
    for (OwnerId id = 0; id < cat.size(); ++id)
        if (cat.is_per_sublayer(id)) data_pages += ceil_div(cat.bytes(id, T), page);
    const Count scratch_pages = ceil_div(scratch_bytes(model, batch.batch_size, T), page);
    const Count cap_pages = platform.bandwidth_tier.capacity / page;
    const bool fits = data_pages + scratch_pages <= cap_pages;
    Count budget = fits ? data_pages
                        : std::max<Count>(0, cap_pages - scratch_pages -
                                                 ceil_div(platform.hierarchical_staging_bytes, page));

    // First-touch pinning in issue order; everything else streams.
    std::vector<char> pinned(static_cast<std::size_t>(index.logical_pages()), 0);
    IterationReport rep;
    rep.mapping = m;
    rep.iteration = batch.iteration;
    const MemoryTierSpec& hbm = platform.bandwidth_tier;
    const double stream_bw = std::min(platform.capacity_tier.bandwidth, platform.interconnect_bandwidth);
    const int chips = all_chips(platform);
    std::vector<Seconds> duration(ks.size());
    Count pinned_pages = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        auto& k = ks[i];
        Count data = 0;
        Count streamed = 0;
        Count misses = 0;
        index.for_each(k, T, Side::Bandwidth, [&](Count p, bool is_data) {
            if (tlbs.t[0].access(p)) ++rep.tlb_hits[0];
            else { ++rep.tlb_misses[0]; ++misses; }
            if (!is_data) return;
            ++data;
            auto& pin = pinned[static_cast<std::size_t>(p)];
            if (!pin && budget > 0) {
                pin = 1;
                --budget;
                ++pinned_pages;
            }
            if (!pin) ++streamed;
        });
        const Bytes streamed_bytes =
            data > 0 ? (k.weight_bytes + k.kv_bytes) * streamed / data : 0;
        const Seconds memory =
            static_cast<double>(k.total_bytes() + streamed_bytes) / hbm.bandwidth;
        const Seconds stream = static_cast<double>(streamed_bytes) / stream_bw;
        Seconds t = std::max({compute_time(k, platform.chip, chips), memory, stream}) +
                    hbm.access_latency + platform.chip.launch_overhead +
                    translation_time(platform.translation, misses, hbm.bandwidth);
        if (streamed_bytes > 0) t += platform.capacity_tier.access_latency;
        duration[i] = t;
        rep.tier_bytes[0] += k.total_bytes() + streamed_bytes;
        rep.tier_bytes[1] += streamed_bytes;
        rep.interconnect_bytes += streamed_bytes;
    }
    auto sched = schedule(ks, duration, [](std::size_t) { return 0.0; },
                          options.trace ? &rep.trace : nullptr);
    rep.timeline_latency = rep.latency = sched.latency;
    rep.busy = sched.busy;
    rep.barrier_wait = sched.barrier_wait;
    rep.kv_bytes = footprint(model, batch).kv_cache();
    rep.bw_footprint_other = (pinned_pages + scratch_pages) * page;
    rep.energy = iteration_energy(rep, {1, 1}, platform.energy);
    return rep;
}

IterationReport multi_hbm_iteration(const ModelSpec& model, const BatchState& batch,
                                    const PlatformSpec& platform, const TensorCatalog& cat,
                                    int k_modules, Tlbs& tlbs, const SimOptions& options) {
    const int N = model.num_heads;
    const int n = N / k_modules;
    const Count T = batch.total_tokens();
    const PageIndex index(cat, platform.translation.page_size);
    const MemoryTierSpec& hbm = platform.bandwidth_tier;
    const int chips = platform.chips(Side::Bandwidth);

    // One representative module owns heads [0, n); all modules run in lockstep.
    std::vector<KernelDesc> ks;
    int group = 0;
    for (int layer = 0; layer < model.num_layers; ++layer)
        for (Stage stage : kStages) {
            for (auto& k : stage_kernels(model, batch.batch_size, T, stage, Side::Bandwidth, n)) {
                k.id = static_cast<int>(ks.size());
                k.layer_index = layer;
                k.barrier_group = group;
                if (k.position > 0) k.deps = {k.id - 1};
                ks.push_back(std::move(k));
            }
            ++group;
        }

    IterationReport rep;
    rep.mapping = {n, n, n};
    rep.iteration = batch.iteration;
    std::vector<Seconds> duration(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const auto& k = ks[i];
        Count misses = 0;
        index.for_each(k, T, Side::Bandwidth, [&](Count p, bool) {
            if (tlbs.t[0].access(p)) ++rep.tlb_hits[0];
            else { ++rep.tlb_misses[0]; ++misses; }
        });
        duration[i] = kernel_time(k, hbm, platform.chip, platform.translation, misses, chips);
        rep.tier_bytes[0] += k.total_bytes() * k_modules;
    }

    // Collective after every stage whose consumer needs the full activation.
    const double kk = k_modules;
    auto after = [&](std::size_t last) -> Seconds {
        const auto& a = ks[last];
        if (a.stage == Stage::Qkv) return 0.0;
        Bytes act = 0;
        for (const auto& full : stage_kernels(model, batch.batch_size, T, a.stage, Side::Bandwidth, N))
            act = full.activation_out_bytes;
        const double moved = 2.0 * (kk - 1.0) / kk * static_cast<double>(act);
        rep.interconnect_bytes += static_cast<Bytes>(moved * kk);
        return moved / platform.interconnect_bandwidth + kk * platform.multi_hbm_hop_latency;
    };
    auto sched = schedule(ks, duration, after, options.trace ? &rep.trace : nullptr);
    rep.timeline_latency = rep.latency = sched.latency;
    rep.busy = sched.busy;
    rep.transfer_time = sched.transfer_time;
    rep.kv_bytes = footprint(model, batch).kv_cache();
    for (Sublayer s : kSublayers)
        rep.bw_footprint[static_cast<std::size_t>(index_of(s))] = sublayer_side_bytes(
            model, batch.batch_size, T, s, n, platform.translation.page_size);
    return rep;
}

}  // namespace

RunReport run_variant(const ModelSpec& model, const Scenario& scenario,
                      const PlatformSpec& platform, const SystemVariant& variant,
                      const Policy& policy, const SimOptions& options) {
    if (variant.kind == VariantKind::Asymmetric)
        return run_generation(model, scenario, policy, platform, options);

    model.validate();
    platform.validate();
    scenario.initial.validate(model);
    RunReport report;
    report.model = model.name;
    report.variant = variant.name();
    report.policy = "-";
    report.batch_size = scenario.initial.batch_size;

    std::mt19937_64 rng(scenario.seed);
    BatchState batch = scenario.initial;
    const TensorCatalog catalog(model, batch.batch_size);
    const Bytes page = platform.translation.page_size;
    Tlbs tlbs(platform.translation.tlb_entries);

    std::optional<MemoryState> mem;
    const MappingDecision none = all_on(model, Side::Capacity);
    const MappingDecision every = all_on(model, Side::Bandwidth);
    switch (variant.kind) {
        case VariantKind::CapacityOnly:
            report.modules = {0, 1};
            mem.emplace(platform);
            populate(*mem, catalog, none, batch.total_tokens());
            break;
        case VariantKind::Hierarchical: report.modules = {1, 1}; break;
        case VariantKind::AllBandwidth: report.modules = {1, 0}; break;
        case VariantKind::MultiHbm:
            report.modules = {variant.modules, 0};
            if (model.num_heads % variant.modules != 0 ||
                (model.num_heads / variant.modules) % model.kv_groups != 0)
                throw ConfigError("multi-hbm: " + std::to_string(variant.modules) +
                                  " modules do not divide the heads of " + model.name);
            break;
        default: break;
    }

    auto check_capacity = [&](const BatchState& b) {
        const Count T = b.total_tokens();
        if (variant.kind == VariantKind::Hierarchical) {
            const Bytes need = side_bytes(model, b.batch_size, T, every, Side::Bandwidth, page);
            if (need > platform.bandwidth_tier.capacity + platform.capacity_tier.capacity)
                throw OutOfMemory("hierarchical: footprint exceeds both tiers");
        } else if (variant.kind == VariantKind::MultiHbm) {
            Bytes need = 0;
            for (Sublayer s : kSublayers)
                need += sublayer_side_bytes(model, b.batch_size, T, s, model.num_heads / variant.modules, page);
            need += fixed_side_bytes(model, b.batch_size, T, Side::Bandwidth, page);
            if (need > platform.bandwidth_tier.capacity)
                throw OutOfMemory("multi-hbm: shard exceeds one module");
        }
    };

    for (int i = 0; i < scenario.iterations; ++i) {
        check_capacity(batch);
        IterationReport rep;
        switch (variant.kind) {
            case VariantKind::CapacityOnly: {
                std::array<Lane, 2> lanes{Lane{}, Lane{true, platform.capacity_tier, all_chips(platform)}};
                rep = simulate(
                    model, batch, none, platform, lanes, catalog,
                    [&](Side s, Count p) { return mem->translate(s, p).hit; }, options,
                    Side::Capacity, true);
                break;
            }
            case VariantKind::AllBandwidth: {
                std::array<Lane, 2> lanes{Lane{true, platform.bandwidth_tier, all_chips(platform)}, Lane{}};
                rep = simulate(
                    model, batch, every, platform, lanes, catalog,
                    [&](Side s, Count p) { return tlbs.t[static_cast<std::size_t>(index_of(s))].access(p); },
                    options, Side::Bandwidth, true);
                for (Sublayer s : kSublayers)
                    rep.bw_footprint[static_cast<std::size_t>(index_of(s))] =
                        sublayer_side_bytes(model, batch.batch_size, batch.total_tokens(), s, model.num_heads, page);
                break;
            }
            case VariantKind::Hierarchical:
                rep = hierarchical_iteration(model, batch, platform, catalog, tlbs, options);
                break;
            case VariantKind::MultiHbm:
                rep = multi_hbm_iteration(model, batch, platform, catalog, variant.modules, tlbs, options);
                break;
            default: break;
        }
        rep.energy = iteration_energy(rep, report.modules, platform.energy);
        report.iterations.push_back(std::move(rep));
        if (i + 1 < scenario.iterations) {
            batch = advance_batch(batch, scenario.law, rng, model.max_seq_len);
            if (mem) resize_all(*mem, catalog, none, batch.total_tokens());
        }
    }
    return report;
}

}  // namespace asymsim
