#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <list>
#include <map>
#include <set>

namespace props {

namespace {

std::string fail(const char* check, std::uint64_t seed, int index, const std::string& what) {
    char head[160];
    std::snprintf(head, sizeof head, "%s: seed %llu case %d: ", check,
                  static_cast<unsigned long long>(seed), index);
    return head + what;
}

bool close(double a, double b, double rel = 1e-9) {
    return std::fabs(a - b) <= rel * std::max({1.0, std::fabs(a), std::fabs(b)});
}

std::string describe(const ModelSpec& m, const BatchState& b, const MappingDecision& map) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "L=%d N=%d H=%d O=%lld g=%d B=%d T=%lld mapping=%s", m.num_layers,
                  m.num_heads, m.head_dim, static_cast<long long>(m.ffn_dim), m.kv_groups,
                  b.batch_size, static_cast<long long>(b.total_tokens()), to_string(map).c_str());
    return buf;
}

struct Case {
    ModelSpec model;
    BatchState batch;
    PlatformSpec platform;
};

Case random_case(Gen& g) {
    Case c;
    c.model = random_model(g);
    c.batch = random_batch(g, c.model);
    c.platform = random_platform(g, c.model, c.batch);
    return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generators

ModelSpec random_model(Gen& g) {
    ModelSpec m;
    m.name = "random";
    m.num_layers = g.uniform(1, 4);
    m.kv_groups = g.pick(std::vector<int>{1, 1, 2, 4, 8});
    m.num_heads = m.kv_groups * g.uniform(1, 16 / m.kv_groups + 1);
    m.head_dim = g.pick(std::vector<int>{8, 16, 32, 64});
    m.model_dim = static_cast<Count>(m.num_heads) * m.head_dim;
    m.ffn_dim = static_cast<Count>(m.num_heads) * m.head_dim * g.uniform(1, 4);
    m.bytes_per_element = g.coin() ? 1 : 2;
    m.max_seq_len = g.uniform(16, 512);
    m.validate();
    return m;
}

BatchState random_batch(Gen& g, const ModelSpec& m) {
    BatchState b = BatchState::uniform(g.uniform(1, 8), 1);
    for (int& s : b.seq_lens) s = g.uniform(1, m.max_seq_len - 1);
    return b;
}

MappingDecision random_mapping(Gen& g, const ModelSpec& m) {
    MappingDecision d;
    d.n_qkv = g.uniform(0, m.num_heads);
    d.n_attention = m.kv_groups * g.uniform(0, m.kv_heads());
    d.n_fc = g.uniform(0, m.num_heads);
    return d;
}

PlatformSpec random_platform(Gen& g, const ModelSpec& m, const BatchState& b) {
    PlatformSpec p = original_platform();
    p.name = "random";
    p.translation.page_size = g.pick(std::vector<Bytes>{4 * KiB, 16 * KiB, 64 * KiB});
    p.translation.tlb_entries = g.pick(std::vector<int>{4, 16, 64, 2048});
    p.translation.overlap_walks = g.coin(0.7);
    p.translation.miss_latency = g.real(0.0, 1e-6);
    p.bandwidth_tier.bandwidth = g.real(1e12, 4e12);
    p.capacity_tier.bandwidth = g.real(2e11, 9e11);
    p.interconnect_bandwidth = g.real(2e11, 2e12);
    p.chips_per_side = {g.uniform(1, 2), g.uniform(1, 2)};
    const Bytes page = p.translation.page_size;
    // Room for one more token per request, as the capacity model reserves.
    const Count tokens = b.total_tokens() + b.batch_size;
    const Bytes all = side_bytes(m, b.batch_size, tokens, {0, 0, 0}, Side::Capacity, page) +
                      fixed_side_bytes(m, b.batch_size, tokens, Side::Bandwidth, page);
    p.bandwidth_tier.capacity = std::max(page, round_up(static_cast<Bytes>(g.real(0.0, 1.3) * all), page));
    p.capacity_tier.capacity = round_up(2 * all + 4 * page, page);
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Checks

std::string check_work_conservation(const Settings& s) {
    Gen g(s.seed);
    for (int i = 0; i < s.cases; ++i) {
        const ModelSpec m = random_model(g);
        const BatchState b = random_batch(g, m);
        const MappingDecision d = random_mapping(g, m);
        struct Sums {
            std::map<OpClass, Count> flops;
            Bytes weights = 0, kv = 0;
        };
        auto sum = [&](const MappingDecision& x) {
            Sums t;
            for (const auto& k : enumerate_kernels(m, b, x)) {
                if (k.op_class != OpClass::LayerNorm && k.op_class != OpClass::Residual)
                    t.flops[k.op_class] += k.flops;
                t.weights += k.weight_bytes;
                t.kv += k.kv_bytes;
            }
            return t;
        };
        const Sums ref = sum({0, 0, 0});
        const Sums got = sum(d);
        if (got.flops != ref.flops)
            return fail("work conservation", s.seed, i, "flops differ, " + describe(m, b, d));
        if (got.weights != ref.weights || got.kv != ref.kv)
            return fail("work conservation", s.seed, i, "bytes differ, " + describe(m, b, d));
        const Footprint f = footprint(m, b);
        if (ref.weights != f.weights() || ref.kv != f.kv_cache())
            return fail("work conservation", s.seed, i,
                        "kernel bytes disagree with the footprint, " + describe(m, b, d));
    }
    return {};
}

std::string check_head_conservation(const Settings& s) {
    Gen g(s.seed);
    for (int i = 0; i < s.cases; ++i) {
        const ModelSpec m = random_model(g);
        const BatchState b = random_batch(g, m);
        const MappingDecision d = random_mapping(g, m);
        // (layer, stage) -> side -> partitions
        std::map<std::pair<int, int>, std::array<std::set<std::pair<int, int>>, 2>> parts;
        for (const auto& k : enumerate_kernels(m, b, d)) {
            if (k.partition.size() == 0) continue;
            parts[{k.layer_index, static_cast<int>(k.stage)}][static_cast<std::size_t>(index_of(k.side))]
                .insert({k.partition.begin, k.partition.end});
        }
        for (int l = 0; l < m.num_layers; ++l)
            for (Stage st : kStages) {
                const int n_bw = d.count(sublayer_of(st));
                const auto& p = parts[{l, static_cast<int>(st)}];
                std::array<std::set<std::pair<int, int>>, 2> want;
                if (n_bw > 0) want[0].insert({0, n_bw});
                if (n_bw < m.num_heads) want[1].insert({n_bw, m.num_heads});
                if (p != want)
                    return fail("head conservation", s.seed, i,
                                "stage " + std::string(to_string(st)) + " of layer " +
                                    std::to_string(l) + " does not split [0, N) at n, " +
                                    describe(m, b, d));
            }
    }
    return {};
}

std::string check_capacity_feasibility(const Settings& s) {
    Gen g(s.seed);
    const std::vector<std::string> policies{"greedy",  "flexgen", "best",    "q-major",
                                            "a-major", "f-major", "sublayer"};
    for (int i = 0; i < s.cases; ++i) {
        const Case c = random_case(g);
        const CapacityModel cap(c.model, c.batch, c.platform, 1);
        for (const auto& name : policies) {
            MappingDecision d;
            try {
                d = decide_mapping(parse_policy(name), c.model, c.batch, c.platform, {});
                validate_mapping(c.model, d);
            } catch (const std::exception& e) {
                return fail("capacity feasibility", s.seed, i, name + " threw: " + e.what());
            }
            if (!cap.fits(d))
                return fail("capacity feasibility", s.seed, i,
                            name + " returned an infeasible split, " + describe(c.model, c.batch, d));
            MemoryState mem(c.platform);
            try {
                populate(mem, TensorCatalog(c.model, c.batch.batch_size), d, c.batch.total_tokens());
                mem.audit();
            } catch (const std::exception& e) {
                return fail("capacity feasibility", s.seed, i,
                            name + " split does not populate: " + e.what() + ", " +
                                describe(c.model, c.batch, d));
            }
        }
    }
    return {};
}

std::string check_memsim_random_ops(const Settings& s) {
    Gen g(s.seed);
    PlatformSpec p = original_platform();
    p.translation.page_size = 4 * KiB;
    p.translation.tlb_entries = 8;
    p.bandwidth_tier.capacity = 64 * p.translation.page_size;
    p.capacity_tier.capacity = 160 * p.translation.page_size;
    MemoryState mem(p);

    struct Shadow {
        Side side;
        Count reserved;
        Count mapped = 0;
    };
    std::vector<Shadow> shadow;
    for (int i = 0; i < 24; ++i) {
        const Side side = g.coin() ? Side::Bandwidth : Side::Capacity;
        const Count reserved = g.uniform(1, 40);
        mem.create_owner("o" + std::to_string(i), reserved, side);
        shadow.push_back({side, reserved});
    }

    Count accesses = 0;
    std::array<Count, 2> tlb_before{mem.tlb(Side::Bandwidth).hits + mem.tlb(Side::Bandwidth).misses,
                                    mem.tlb(Side::Capacity).hits + mem.tlb(Side::Capacity).misses};
    for (int op = 0; op < s.cases; ++op) {
        const OwnerId id = g.uniform(0, static_cast<int>(shadow.size()) - 1);
        auto& sh = shadow[static_cast<std::size_t>(id)];
        const std::string before = mem.dump().dump();
        const int kind = g.uniform(0, 4);
        std::string what;
        try {
            switch (kind) {
                case 0: {
                    const Count n = g.uniform(0, static_cast<int>(sh.reserved - sh.mapped));
                    what = "allocate " + std::to_string(n);
                    const auto pages = mem.allocate(id, n);
                    if (static_cast<Count>(pages.size()) != n) return fail("memsim", s.seed, op, what + " size");
                    sh.mapped += n;
                    break;
                }
                case 1: {
                    const Count n = g.uniform(0, static_cast<int>(sh.mapped));
                    what = "release " + std::to_string(n);
                    mem.release(id, n);
                    sh.mapped -= n;
                    break;
                }
                case 2: {
                    const Count n = g.uniform(0, static_cast<int>(sh.reserved));
                    what = "resize " + std::to_string(n);
                    mem.resize(id, n);
                    sh.mapped = n;
                    break;
                }
                case 3: {
                    what = "migrate";
                    mem.migrate(id, other(sh.side));
                    sh.side = other(sh.side);
                    break;
                }
                default: {
                    if (sh.mapped == 0) break;
                    const Count l = mem.owner(id).logical_base + g.uniform(0, static_cast<int>(sh.mapped) - 1);
                    what = "translate";
                    const auto r = mem.translate(sh.side, l);
                    ++accesses;
                    if (mem.fsm(sh.side).owner_of(r.physical) != id)
                        return fail("memsim", s.seed, op, "translation lands on a foreign page");
                    bool thrown = false;
                    try {
                        (void)mem.translate(other(sh.side), l);
                    } catch (const SimulationFault&) {
                        thrown = true;
                    }
                    if (!thrown) return fail("memsim", s.seed, op, "page resolved on both tiers");
                    break;
                }
            }
        } catch (const OutOfMemory&) {
            if (mem.dump().dump() != before)
                return fail("memsim", s.seed, op, what + " ran out of memory but changed state");
        } catch (const std::exception& e) {
            return fail("memsim", s.seed, op, what + ": " + e.what());
        }
        try {
            mem.audit();
        } catch (const std::exception& e) {
            return fail("memsim", s.seed, op, "audit after " + what + ": " + e.what());
        }
        const auto& o = mem.owner(id);
        if (o.side != sh.side || o.mapped_pages != sh.mapped)
            return fail("memsim", s.seed, op, "owner record diverged after " + what);
    }
    Count tlb_after = 0;
    for (Side side : kSides) {
        tlb_after += mem.tlb(side).hits + mem.tlb(side).misses;
        tlb_after -= tlb_before[static_cast<std::size_t>(index_of(side))];
    }
    if (tlb_after != accesses) return fail("memsim", s.seed, s.cases, "TLB counters miss accesses");

    for (OwnerId id = 0; id < static_cast<OwnerId>(shadow.size()); ++id) mem.release_all(id);
    mem.audit();
    for (Side side : kSides)
        if (mem.free_pages(side) != mem.total_pages(side) || mem.table(side).mapped_count() != 0)
            return fail("memsim", s.seed, s.cases, "pages leaked after freeing every owner");
    return {};
}

std::string check_tlb_accounting(const Settings& s) {
    Gen g(s.seed);
    // Against a brute-force LRU list.
    for (int i = 0; i < s.cases; ++i) {
        const int entries = g.uniform(1, 32);
        TlbState tlb(entries);
        std::list<Count> ref;
        const int n = g.uniform(1, 400);
        const int span = g.uniform(1, 3 * entries);
        Count hits = 0;
        for (int a = 0; a < n; ++a) {
            const Count page = g.uniform(0, span);
            auto it = std::find(ref.begin(), ref.end(), page);
            const bool want = it != ref.end();
            if (want) ref.erase(it);
            else if (static_cast<int>(ref.size()) == entries) ref.pop_back();
            ref.push_front(page);
            hits += want;
            if (tlb.access(page) != want)
                return fail("tlb accounting", s.seed, i, "hit/miss differs from reference LRU");
        }
        if (tlb.hits != hits || tlb.hits + tlb.misses != n)
            return fail("tlb accounting", s.seed, i, "hit and miss counters do not add up");
    }
    // Whole iterations: reported counts equal the TLB's own counters, and a
    // cold TLB misses at least once per distinct page it sees.
    for (int i = 0; i < std::max(1, s.cases / 10); ++i) {
        Case c = random_case(g);
        c.platform.translation.enabled = true;
        const MappingDecision d = greedy_map(c.model, c.batch, c.platform);
        MemoryState mem(c.platform);
        const TensorCatalog cat(c.model, c.batch.batch_size);
        populate(mem, cat, d, c.batch.total_tokens());
        for (int rep = 0; rep < 2; ++rep) {
            std::array<Count, 2> h{}, m{};
            for (Side side : kSides) {
                h[static_cast<std::size_t>(index_of(side))] = mem.tlb(side).hits;
                m[static_cast<std::size_t>(index_of(side))] = mem.tlb(side).misses;
            }
            const auto r = run_iteration(c.model, c.batch, d, c.platform, mem, cat);
            for (Side side : kSides) {
                const auto k = static_cast<std::size_t>(index_of(side));
                if (r.tlb_hits[k] != mem.tlb(side).hits - h[k] ||
                    r.tlb_misses[k] != mem.tlb(side).misses - m[k])
                    return fail("tlb accounting", s.seed, i, "iteration report disagrees with TLB counters");
                if (rep == 0 && r.tlb_hits[k] + r.tlb_misses[k] > 0 && r.tlb_misses[k] == 0)
                    return fail("tlb accounting", s.seed, i, "cold TLB reported no misses");
            }
        }
    }
    return {};
}

std::string check_roofline_floor(const Settings& s) {
    Gen g(s.seed);
    for (int i = 0; i < s.cases; ++i) {
        Case c = random_case(g);
        c.platform.translation.enabled = g.coin();
        const MappingDecision d = greedy_map(c.model, c.batch, c.platform);
        MemoryState mem(c.platform);
        const TensorCatalog cat(c.model, c.batch.batch_size);
        populate(mem, cat, d, c.batch.total_tokens());
        const auto r = run_iteration(c.model, c.batch, d, c.platform, mem, cat);
        std::array<double, 2> bytes{}, compute{};
        for (const auto& k : enumerate_kernels(c.model, c.batch, d)) {
            const auto side = static_cast<std::size_t>(index_of(k.side));
            bytes[side] += static_cast<double>(k.total_bytes()) / c.platform.tier(k.side).bandwidth;
            compute[side] += static_cast<double>(k.flops) /
                             (peak_throughput(c.platform.chip, k.op_class) * c.platform.chips(k.side));
        }
        const double floor = std::max({bytes[0], bytes[1], compute[0], compute[1]});
        if (r.latency < floor * (1 - 1e-12))
            return fail("roofline floor", s.seed, i,
                        "latency " + std::to_string(r.latency) + " below floor " + std::to_string(floor) +
                            ", " + describe(c.model, c.batch, d));
        for (int k = 0; k < 2; ++k)
            if (r.busy[static_cast<std::size_t>(k)] > r.latency * (1 + 1e-12))
                return fail("roofline floor", s.seed, i, "a tier is busy longer than the iteration");
    }
    return {};
}

std::string check_determinism(const Settings& s) {
    Gen g(s.seed);
    const std::vector<std::string> variants{"capacity-only", "hierarchical", "asymmetric",
                                            "all-bandwidth"};
    for (int i = 0; i < s.cases; ++i) {
        Case c = random_case(g);
        Scenario sc;
        sc.initial = c.batch;
        sc.iterations = g.uniform(1, 6);
        sc.law = {g.real(0.0, 0.5), 1, c.model.max_seq_len / 2};
        sc.seed = static_cast<std::uint64_t>(g.uniform(0, 1 << 30));
        const SystemVariant v = parse_variant(g.pick(variants));
        const Policy pol = parse_policy(g.pick(std::vector<std::string>{"greedy", "flexgen", "best"}));
        try {
            const auto a = to_json(run_variant(c.model, sc, c.platform, v, pol)).dump();
            const auto b = to_json(run_variant(c.model, sc, c.platform, v, pol)).dump();
            if (a != b) return fail("determinism", s.seed, i, "two runs of " + v.name() + " differ");
        } catch (const OutOfMemory&) {
            // Growth beyond a tier is a legitimate outcome; determinism still
            // requires it to happen on every run.
            bool again = false;
            try {
                (void)run_variant(c.model, sc, c.platform, v, pol);
            } catch (const OutOfMemory&) {
                again = true;
            }
            if (!again) return fail("determinism", s.seed, i, "out-of-memory on one run only");
        }
    }
    return {};
}

std::string check_analytic_matches_timeline(const Settings& s) {
    Gen g(s.seed);
    for (int i = 0; i < s.cases; ++i) {
        Case c = random_case(g);
        c.platform.translation.enabled = false;
        c.platform.bandwidth_tier.capacity = c.platform.capacity_tier.capacity;
        const MappingDecision d = random_mapping(g, c.model);
        const BarrierMode barrier = g.coin() ? BarrierMode::Stage : BarrierMode::Kernel;
        MemoryState mem(c.platform);
        const TensorCatalog cat(c.model, c.batch.batch_size);
        populate(mem, cat, d, c.batch.total_tokens());
        SimOptions opt;
        opt.barrier = barrier;
        const auto r = run_iteration(c.model, c.batch, d, c.platform, mem, cat, opt);
        const AnalyticEvaluator eval(c.model, c.batch, c.platform, barrier);
        if (!close(eval(d), r.latency))
            return fail("analytic evaluator", s.seed, i,
                        "closed form " + std::to_string(eval(d)) + " vs timeline " +
                            std::to_string(r.latency) + ", " + describe(c.model, c.batch, d));
    }
    return {};
}

}  // namespace props
