#include <doctest.h>

#include "asymsim/mapping.hpp"
#include "asymsim/memsim.hpp"

using namespace asymsim;

namespace {

PlatformSpec tiny_platform(Count bw_pages, Count cap_pages) {
    auto p = original_platform();
    p.translation.page_size = 4 * KiB;
    p.translation.tlb_entries = 4;
    p.bandwidth_tier.capacity = bw_pages * p.translation.page_size;
    p.capacity_tier.capacity = cap_pages * p.translation.page_size;
    return p;
}

}  // namespace

TEST_CASE("LRU set") {
    LruSet s(2);
    CHECK_FALSE(s.touch(1));
    CHECK(s.touch(1));
    CHECK_FALSE(s.touch(2));
    CHECK_FALSE(s.touch(3));  // evicts 1
    CHECK_FALSE(s.contains(1));
    CHECK(s.contains(2));
    CHECK(s.size() == 2);
}

TEST_CASE("TLB replacement at capacity") {
    TlbState tlb(2048);
    for (Count p = 0; p < 2049; ++p) CHECK_FALSE(tlb.access(p));
    CHECK_FALSE(tlb.access(0));
    CHECK(tlb.access(2048));
    CHECK(tlb.misses == 2050);
    CHECK(tlb.hits == 1);
}

TEST_CASE("free-space manager") {
    FreeSpaceManager f(8);
    CHECK(f.allocate(0, 1).empty());
    CHECK(f.free_pages() == 8);
    const auto a = f.allocate(8, 3);
    CHECK(a.size() == 8);
    for (Count p : a) CHECK(f.owner_of(p) == 3);
    CHECK_THROWS_AS(f.allocate(1, 3), OutOfMemory);
    f.free(a[2]);
    CHECK(f.free_pages() == 1);
    CHECK(f.owner_of(a[2]) == kNoOwner);
}

TEST_CASE("owners allocate, resize, migrate and translate") {
    MemoryState mem(tiny_platform(4, 16));
    const OwnerId a = mem.create_owner("a", 6, Side::Capacity);
    const OwnerId b = mem.create_owner("b", 3, Side::Bandwidth);
    mem.allocate(a, 5);
    mem.allocate(b, 3);
    mem.audit();
    CHECK(mem.used_pages(Side::Capacity) == 5);
    CHECK(mem.free_pages(Side::Bandwidth) == 1);

    const Count first = mem.owner(a).logical_base;
    CHECK_FALSE(mem.translate(Side::Capacity, first).hit);
    CHECK(mem.translate(Side::Capacity, first).hit);
    CHECK_THROWS_AS((void)mem.translate(Side::Bandwidth, first), SimulationFault);

    // a does not fit the bandwidth tier; nothing may change.
    const auto before = mem.dump();
    CHECK_THROWS_AS(mem.migrate(a, Side::Bandwidth), OutOfMemory);
    CHECK(mem.dump() == before);

    mem.resize(a, 1);
    mem.release_all(b);
    mem.migrate(a, Side::Bandwidth);
    mem.audit();
    CHECK(mem.owner(a).side == Side::Bandwidth);
    CHECK(mem.used_pages(Side::Capacity) == 0);
    // The migrated page is no longer cached for the old tier.
    CHECK_FALSE(mem.translate(Side::Bandwidth, first).hit);
    CHECK_THROWS_AS(mem.allocate(a, 6), SimError);
}

TEST_CASE("one decode token grows GPT3 B=32 KV by 36 pages") {
    const auto g = gpt3_175b();
    const TensorCatalog cat(g, 32);
    const Count t = 32 * 1000;
    Bytes grow = 0;
    for (int k = 0; k < g.kv_heads(); ++k) {
        const OwnerId id = cat.id(UnitKind::KvCache, -1, k);
        grow += cat.bytes(id, t + 32) - cat.bytes(id, t);
    }
    CHECK(grow == 75'497'472);
    CHECK(ceil_div(grow, 2 * MiB) == 36);
}

TEST_CASE("catalog ids round-trip") {
    const auto l = llama2_70b();
    const TensorCatalog cat(l, 4);
    CHECK(cat.size() == 4 * 64 + 8 + 80 + 2);
    for (OwnerId id = 0; id < cat.size(); ++id) CHECK(cat.unit(id, 100).id == id);
    CHECK(cat.sublayer_of(cat.id(UnitKind::KvCache, -1, 3)) == Sublayer::Attention);
    CHECK(cat.sublayer_of(cat.id(UnitKind::UpWeight, -1, 3)) == Sublayer::Fc);
    // KV head k serves query heads [k*g, (k+1)*g).
    CHECK(cat.side_for(cat.id(UnitKind::KvCache, -1, 1), {0, 16, 0}) == Side::Bandwidth);
    CHECK(cat.side_for(cat.id(UnitKind::KvCache, -1, 2), {0, 16, 0}) == Side::Capacity);
}

TEST_CASE("migration time") {
    const auto p = original_platform();
    MigrationPlan plan;
    CHECK(migration_time(plan, p) == 0.0);
    plan.bytes_to[static_cast<std::size_t>(index_of(Side::Capacity))] = 1'000'000'000;
    CHECK(migration_time(plan, p) == doctest::Approx(1.838e-3).epsilon(1e-3));
    plan.bytes_to[static_cast<std::size_t>(index_of(Side::Bandwidth))] = 1'000'000'000;
    CHECK(migration_time(plan, p) == doctest::Approx(1.838e-3).epsilon(1e-3));
}

TEST_CASE("migration plans follow the mapping change") {
    const auto g = gpt3_175b();
    const auto p = original_platform();
    const auto batch = BatchState::uniform(32, 512);
    const TensorCatalog cat(g, 32);
    MemoryState mem(p);
    populate(mem, cat, {0, 1, 4}, batch.total_tokens());

    CHECK(plan_migration({0, 1, 4}, {0, 1, 4}, mem, cat).empty());

    const auto down = plan_migration({0, 1, 4}, {0, 1, 0}, mem, cat);
    Bytes want = 0;
    for (int i = 0; i < 4; ++i)
        for (UnitKind k : {UnitKind::ProjWeight, UnitKind::UpWeight, UnitKind::DownWeight})
            want += round_up(cat.bytes(cat.id(k, -1, i), batch.total_tokens()), 2 * MiB);
    CHECK(down.bytes_to[static_cast<std::size_t>(index_of(Side::Capacity))] == want);
    CHECK(down.bytes_to[static_cast<std::size_t>(index_of(Side::Bandwidth))] == 0);
    CHECK(down.moves.size() == 12);

    const auto swap = plan_migration({0, 1, 4}, {0, 0, 5}, mem, cat);
    CHECK(swap.bytes_to[0] > 0);
    CHECK(swap.bytes_to[1] == round_up(cat.bytes(cat.id(UnitKind::KvCache, -1, 0), batch.total_tokens()),
                                       2 * MiB));
    execute_migration(swap, mem, p);
    mem.audit();
    CHECK(mem.owner(cat.id(UnitKind::KvCache, -1, 0)).side == Side::Capacity);
    CHECK(mem.owner(cat.id(UnitKind::UpWeight, -1, 4)).side == Side::Bandwidth);
}

TEST_CASE("fragmentation") {
    const auto g = gpt3_175b();
    const auto b = BatchState::uniform(32, 2048);
    CHECK(unit_waste(4 * MiB, 2 * MiB, FragMode::Slack) == 0);
    CHECK(unit_waste(3 * MiB, 2 * MiB, FragMode::Slack) == MiB);
    CHECK(unit_waste(5 * MiB / 2, 2 * MiB, FragMode::Residue) == MiB / 2);
    CHECK(fragmentation_report(g, b, 1).total == 0);
    const auto two = fragmentation_report(g, b, 2 * MiB);
    const auto four = fragmentation_report(g, b, 4 * MiB);
    CHECK(four.total >= two.total);
    CHECK(two.total >= 109'000'000);
    CHECK(two.total <= 203'000'000);
    Bytes sum = 0;
    for (const auto& r : two.rows) sum += r.waste_bytes;
    CHECK(sum == two.total);
    CHECK(parse_frag_mode("residue") == FragMode::Residue);
    CHECK_THROWS_AS(parse_frag_mode("x"), ConfigError);
}
