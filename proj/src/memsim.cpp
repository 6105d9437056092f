#include "asymsim/memsim.hpp"

#include <algorithm>
#include <map>

namespace asymsim {

// ---------------------------------------------------------------------------
// LruSet / TLB / PageTable / FreeSpaceManager

bool LruSet::touch(Count key) {
    auto it = index_.find(key);
    if (it != index_.end()) {
        order_.splice(order_.begin(), order_, it->second);
        return true;
    }
    if (capacity_ == 0) return false;
    if (order_.size() >= capacity_) {
        index_.erase(order_.back());
        order_.pop_back();
    }
    order_.push_front(key);
    index_.emplace(key, order_.begin());
    return false;
}

void LruSet::erase(Count key) {
    auto it = index_.find(key);
    if (it == index_.end()) return;
    order_.erase(it->second);
    index_.erase(it);
}

void LruSet::clear() {
    order_.clear();
    index_.clear();
}

bool TlbState::access(Count logical_page) {
    const bool hit = resident.touch(logical_page);
    if (hit) ++hits;
    else ++misses;
    return hit;
}

void PageTable::map(Count logical, Count physical) {
    grow(logical + 1);
    auto& e = entries_[static_cast<std::size_t>(logical)];
    if (e != kUnmapped) throw SimulationFault("logical page " + std::to_string(logical) + " already mapped");
    e = physical;
    ++mapped_;
}

void PageTable::unmap(Count logical) {
    if (lookup(logical) == kUnmapped)
        throw SimulationFault("logical page " + std::to_string(logical) + " not mapped");
    entries_[static_cast<std::size_t>(logical)] = kUnmapped;
    --mapped_;
}

FreeSpaceManager::FreeSpaceManager(Count total_pages)
    : total_(std::max<Count>(total_pages, 0)), owners_(static_cast<std::size_t>(total_), kNoOwner) {
    free_.reserve(static_cast<std::size_t>(total_));
    for (Count p = total_ - 1; p >= 0; --p) free_.push_back(p);
}

std::vector<Count> FreeSpaceManager::allocate(Count n_pages, OwnerId owner) {
    if (n_pages > free_pages())
        throw OutOfMemory("need " + std::to_string(n_pages) + " pages, " +
                          std::to_string(free_pages()) + " free");
    std::vector<Count> pages;
    pages.reserve(static_cast<std::size_t>(std::max<Count>(n_pages, 0)));
    for (Count i = 0; i < n_pages; ++i) {
        const Count p = free_.back();
        free_.pop_back();
        owners_[static_cast<std::size_t>(p)] = owner;
        pages.push_back(p);
    }
    return pages;
}

void FreeSpaceManager::free(Count physical) {
    auto& o = owners_.at(static_cast<std::size_t>(physical));
    if (o == kNoOwner) throw SimulationFault("double free of physical page " + std::to_string(physical));
    o = kNoOwner;
    free_.push_back(physical);
}

// ---------------------------------------------------------------------------
// MemoryState

MemoryState::MemoryState(const PlatformSpec& platform)
    : page_size_(platform.translation.page_size),
      fsms_{FreeSpaceManager(platform.bandwidth_tier.capacity / platform.translation.page_size),
            FreeSpaceManager(platform.capacity_tier.capacity / platform.translation.page_size)},
      tlbs_{TlbState(platform.translation.tlb_entries), TlbState(platform.translation.tlb_entries)} {}

OwnerId MemoryState::create_owner(std::string label, Count reserved_pages, Side side) {
    OwnerRecord r;
    r.label = std::move(label);
    r.side = side;
    r.logical_base = next_logical_;
    r.reserved_pages = std::max<Count>(reserved_pages, 0);
    next_logical_ += r.reserved_pages;
    for (auto& t : tables_) t.grow(next_logical_);
    owners_.push_back(std::move(r));
    return static_cast<OwnerId>(owners_.size() - 1);
}

const OwnerRecord& MemoryState::owner(OwnerId id) const {
    if (id < 0 || id >= static_cast<OwnerId>(owners_.size()))
        throw SimulationFault("unknown owner " + std::to_string(id));
    return owners_[static_cast<std::size_t>(id)];
}

OwnerRecord& MemoryState::owner_mut(OwnerId id) {
    return const_cast<OwnerRecord&>(std::as_const(*this).owner(id));
}

std::vector<Count> MemoryState::allocate(OwnerId id, Count n_pages) {
    if (n_pages <= 0) return {};
    auto& o = owner_mut(id);
    if (o.mapped_pages + n_pages > o.reserved_pages)
        throw SimulationFault("owner '" + o.label + "' exceeds its reserved logical range");
    auto pages = fsm_mut(o.side).allocate(n_pages, id);
    auto& table = table_mut(o.side);
    for (Count i = 0; i < n_pages; ++i)
        table.map(o.logical_base + o.mapped_pages + i, pages[static_cast<std::size_t>(i)]);
    o.mapped_pages += n_pages;
    return pages;
}

void MemoryState::release(OwnerId id, Count n_pages) {
    auto& o = owner_mut(id);
    n_pages = std::min(n_pages, o.mapped_pages);
    auto& table = table_mut(o.side);
    auto& fsm = fsm_mut(o.side);
    auto& tlb = tlbs_[static_cast<std::size_t>(index_of(o.side))];
    for (Count i = 0; i < n_pages; ++i) {
        const Count logical = o.logical_base + o.mapped_pages - 1 - i;
        fsm.free(table.lookup(logical));
        table.unmap(logical);
        tlb.invalidate(logical);
    }
    o.mapped_pages -= n_pages;
}

void MemoryState::resize(OwnerId id, Count pages) {
    const Count have = owner(id).mapped_pages;
    if (pages > have) allocate(id, pages - have);
    else if (pages < have) release(id, have - pages);
}

void MemoryState::migrate(OwnerId id, Side dst) {
    auto& o = owner_mut(id);
    if (o.side == dst) return;
    const Side src = o.side;
    auto pages = fsm_mut(dst).allocate(o.mapped_pages, id);
    auto& from = table_mut(src);
    auto& to = table_mut(dst);
    auto& src_fsm = fsm_mut(src);
    auto& src_tlb = tlbs_[static_cast<std::size_t>(index_of(src))];
    for (Count i = 0; i < o.mapped_pages; ++i) {
        const Count logical = o.logical_base + i;
        src_fsm.free(from.lookup(logical));
        from.unmap(logical);
        src_tlb.invalidate(logical);
        to.map(logical, pages[static_cast<std::size_t>(i)]);
    }
    o.side = dst;
}

TranslateResult MemoryState::translate(Side side, Count logical_page) {
    const Count phys = table(side).lookup(logical_page);
    if (phys == kUnmapped)
        throw SimulationFault("access to logical page " + std::to_string(logical_page) +
                              " not resident on the " + std::string(to_string(side)) + " tier");
    const bool hit = tlb(side).access(logical_page);
    return {phys, hit};
}

void MemoryState::audit() const {
    for (Side s : kSides) {
        const auto& f = fsm(s);
        const auto& t = table(s);
        std::vector<char> seen(static_cast<std::size_t>(f.total_pages()), 0);
        for (Count p : f.free_list()) {
            if (p < 0 || p >= f.total_pages()) throw SimulationFault("free list holds invalid page");
            if (seen[static_cast<std::size_t>(p)]) throw SimulationFault("page listed free twice");
            if (f.owner_of(p) != kNoOwner) throw SimulationFault("free page has an owner");
            seen[static_cast<std::size_t>(p)] = 1;
        }
        Count owned = 0;
        for (Count p = 0; p < f.total_pages(); ++p)
            if (f.owner_of(p) != kNoOwner) ++owned;
        if (owned + f.free_pages() != f.total_pages())
            throw SimulationFault("free pool and ledger do not cover the tier");

        // Injectivity and ledger agreement.
        std::vector<char> mapped(static_cast<std::size_t>(f.total_pages()), 0);
        Count entries = 0;
        for (OwnerId id = 0; id < static_cast<OwnerId>(owners_.size()); ++id) {
            const auto& o = owners_[static_cast<std::size_t>(id)];
            for (Count l = o.logical_base; l < o.logical_base + o.reserved_pages; ++l) {
                const Count p = t.lookup(l);
                const bool inside = o.side == s && l < o.logical_base + o.mapped_pages;
                if (inside != (p != kUnmapped))
                    throw SimulationFault("owner '" + o.label + "' is not logically contiguous on the " +
                                          std::string(to_string(s)) + " tier");
                if (p == kUnmapped) continue;
                ++entries;
                if (p < 0 || p >= f.total_pages()) throw SimulationFault("mapping to invalid page");
                if (mapped[static_cast<std::size_t>(p)])
                    throw SimulationFault("physical page mapped twice");
                mapped[static_cast<std::size_t>(p)] = 1;
                if (f.owner_of(p) != id) throw SimulationFault("ledger owner mismatch");
            }
        }
        if (entries != t.mapped_count() || entries != owned)
            throw SimulationFault("page table and ledger disagree on mapped pages");
        const auto& tl = tlb(s);
        if (tl.resident.size() > tl.resident.capacity()) throw SimulationFault("TLB over capacity");
    }
}

nlohmann::json MemoryState::dump() const {
    nlohmann::json j;
    j["page_size"] = page_size_;
    for (Side s : kSides) {
        nlohmann::json t;
        t["total_pages"] = total_pages(s);
        t["free_pages"] = free_pages(s);
        t["tlb_hits"] = tlb(s).hits;
        t["tlb_misses"] = tlb(s).misses;
        t["tlb_resident"] = tlb(s).resident.size();
        j["tiers"][std::string(to_string(s))] = t;
    }
    nlohmann::json owners = nlohmann::json::array();
    for (OwnerId id = 0; id < static_cast<OwnerId>(owners_.size()); ++id) {
        const auto& o = owners_[static_cast<std::size_t>(id)];
        nlohmann::json pages = nlohmann::json::array();
        for (Count i = 0; i < o.mapped_pages; ++i) pages.push_back(table(o.side).lookup(o.logical_base + i));
        owners.push_back({{"id", id},
                          {"label", o.label},
                          {"side", to_string(o.side)},
                          {"logical_base", o.logical_base},
                          {"reserved_pages", o.reserved_pages},
                          {"physical_pages", pages}});
    }
    j["owners"] = owners;
    return j;
}

// ---------------------------------------------------------------------------
// Tensor catalog

std::string_view to_string(UnitKind k) {
    switch (k) {
        case UnitKind::QkvWeight: return "qkv-weight";
        case UnitKind::ProjWeight: return "proj-weight";
        case UnitKind::UpWeight: return "up-weight";
        case UnitKind::DownWeight: return "down-weight";
        case UnitKind::KvCache: return "kv-cache";
        case UnitKind::Activation: return "activation";
        case UnitKind::Scratch: return "scratch";
    }
    return "?";
}

TensorCatalog::TensorCatalog(const ModelSpec& model, int batch_size)
    : model_(model),
      batch_size_(batch_size),
      heads_(model.num_heads),
      kv_heads_(model.kv_heads()),
      layers_(model.num_layers),
      total_(4 * heads_ + kv_heads_ + layers_ + 2) {}

OwnerId TensorCatalog::id(UnitKind kind, int layer, int index) const {
    switch (kind) {
        case UnitKind::QkvWeight: return index;
        case UnitKind::ProjWeight: return heads_ + index;
        case UnitKind::UpWeight: return 2 * heads_ + index;
        case UnitKind::DownWeight: return 3 * heads_ + index;
        case UnitKind::KvCache: return 4 * heads_ + index;
        case UnitKind::Activation: return 4 * heads_ + kv_heads_ + layer;
        case UnitKind::Scratch: return 4 * heads_ + kv_heads_ + layers_ + index;
    }
    return kNoOwner;
}

UnitKind TensorCatalog::kind_of(OwnerId id, int* layer, int* index) const {
    *layer = -1;
    if (id < 0 || id >= total_) throw SimulationFault("unknown tensor unit " + std::to_string(id));
    if (id < 4 * heads_) {
        *index = id % heads_;
        static constexpr UnitKind kinds[] = {UnitKind::QkvWeight, UnitKind::ProjWeight,
                                             UnitKind::UpWeight, UnitKind::DownWeight};
        return kinds[id / heads_];
    }
    int rest = id - 4 * heads_;
    if (rest < kv_heads_) {
        *index = rest;
        return UnitKind::KvCache;
    }
    rest -= kv_heads_;
    if (rest < layers_) {
        *layer = rest;
        *index = 0;
        return UnitKind::Activation;
    }
    *index = rest - layers_;
    return UnitKind::Scratch;
}

Bytes TensorCatalog::layer_slice_bytes(UnitKind kind) const {
    const Bytes b = model_.bytes_per_element;
    switch (kind) {
        case UnitKind::QkvWeight: return model_.model_dim * model_.qkv_head_cols() * b;
        case UnitKind::ProjWeight: return model_.model_dim * model_.head_dim * b;
        case UnitKind::UpWeight: return model_.model_dim * model_.ffn_group_cols() * b;
        case UnitKind::DownWeight: return model_.ffn_dim * model_.head_dim * b;
        default: return 0;
    }
}

Bytes TensorCatalog::bytes(OwnerId id, Count total_tokens) const {
    int layer = 0;
    int index = 0;
    const UnitKind k = kind_of(id, &layer, &index);
    const Bytes b = model_.bytes_per_element;
    switch (k) {
        case UnitKind::KvCache: return layers_ * kv_layer_bytes(total_tokens);
        case UnitKind::Activation: return static_cast<Bytes>(batch_size_) * model_.model_dim * b;
        case UnitKind::Scratch: return scratch_bytes(model_, batch_size_, total_tokens);
        default: return layers_ * layer_slice_bytes(k);
    }
}

Bytes TensorCatalog::max_bytes(OwnerId id) const {
    return bytes(id, static_cast<Count>(batch_size_) * model_.max_seq_len);
}

TensorUnit TensorCatalog::unit(OwnerId id, Count total_tokens) const {
    TensorUnit u;
    u.id = id;
    u.kind = kind_of(id, &u.layer, &u.index);
    u.bytes = bytes(id, total_tokens);
    return u;
}

Side TensorCatalog::side_for(OwnerId id, const MappingDecision& m) const {
    int layer = 0;
    int index = 0;
    switch (kind_of(id, &layer, &index)) {
        case UnitKind::QkvWeight: return index < m.n_qkv ? Side::Bandwidth : Side::Capacity;
        case UnitKind::ProjWeight:
        case UnitKind::UpWeight:
        case UnitKind::DownWeight: return index < m.n_fc ? Side::Bandwidth : Side::Capacity;
        case UnitKind::KvCache:
            return index * model_.kv_groups < m.n_attention ? Side::Bandwidth : Side::Capacity;
        case UnitKind::Activation: return Side::Capacity;
        case UnitKind::Scratch: return index == 0 ? Side::Bandwidth : Side::Capacity;
    }
    return Side::Capacity;
}

Sublayer TensorCatalog::sublayer_of(OwnerId id) const {
    int layer = 0;
    int index = 0;
    switch (kind_of(id, &layer, &index)) {
        case UnitKind::QkvWeight: return Sublayer::QkvLinear;
        case UnitKind::KvCache: return Sublayer::Attention;
        default: return Sublayer::Fc;
    }
}

bool TensorCatalog::is_per_sublayer(OwnerId id) const {
    int layer = 0;
    int index = 0;
    const UnitKind k = kind_of(id, &layer, &index);
    return k != UnitKind::Activation && k != UnitKind::Scratch;
}

Bytes scratch_bytes(const ModelSpec& model, int batch_size, Count total_tokens) {
    Bytes peak = 0;
    for (Stage stage : kStages)
        for (const auto& k :
             stage_kernels(model, batch_size, total_tokens, stage, Side::Capacity, model.num_heads))
            peak = std::max(peak, k.activation_in_bytes + k.activation_out_bytes);
    return peak;
}

Bytes sublayer_side_bytes(const ModelSpec& model, int batch_size, Count total_tokens,
                          Sublayer sublayer, int n_on_side, Bytes page_size) {
    if (n_on_side <= 0) return 0;
    const TensorCatalog cat(model, batch_size);
    auto rounded = [&](UnitKind k) {
        return round_up(cat.bytes(cat.id(k, 0, 0), total_tokens), page_size);
    };
    switch (sublayer) {
        case Sublayer::QkvLinear: return n_on_side * rounded(UnitKind::QkvWeight);
        case Sublayer::Fc:
            return n_on_side * (rounded(UnitKind::ProjWeight) + rounded(UnitKind::UpWeight) +
                                rounded(UnitKind::DownWeight));
        case Sublayer::Attention:
            return (n_on_side / model.kv_groups) * rounded(UnitKind::KvCache);
    }
    return 0;
}

Bytes fixed_side_bytes(const ModelSpec& model, int batch_size, Count total_tokens, Side side,
                       Bytes page_size) {
    Bytes t = round_up(scratch_bytes(model, batch_size, total_tokens), page_size);
    if (side == Side::Capacity)
        t += model.num_layers *
             round_up(static_cast<Bytes>(batch_size) * model.model_dim * model.bytes_per_element,
                      page_size);
    return t;
}

namespace {

bool uses_bandwidth(const MappingDecision& m) {
    return m.n_qkv > 0 || m.n_attention > 0 || m.n_fc > 0;
}

}  // namespace

Count desired_pages(const TensorCatalog& cat, OwnerId id, const MappingDecision& m, Count tokens,
                    Bytes page_size) {
    const TensorUnit u = cat.unit(id, tokens);
    if (u.kind == UnitKind::Scratch && u.index == 0 && !uses_bandwidth(m)) return 0;
    return ceil_div(u.bytes, page_size);
}

Bytes side_bytes(const ModelSpec& model, int batch_size, Count total_tokens,
                 const MappingDecision& m, Side side, Bytes page_size) {
    Bytes t = 0;
    for (Sublayer s : kSublayers) {
        const int n = side == Side::Bandwidth ? m.count(s) : model.num_heads - m.count(s);
        t += sublayer_side_bytes(model, batch_size, total_tokens, s, n, page_size);
    }
    if (side == Side::Capacity || uses_bandwidth(m))
        t += fixed_side_bytes(model, batch_size, total_tokens, side, page_size);
    return t;
}

void populate(MemoryState& mem, const TensorCatalog& cat, const MappingDecision& m,
              Count total_tokens) {
    const Bytes page = mem.page_size();
    for (OwnerId id = 0; id < cat.size(); ++id) {
        const TensorUnit u = cat.unit(id, total_tokens);
        std::string label = std::string(to_string(u.kind));
        if (u.layer >= 0) label += "[L" + std::to_string(u.layer) + "]";
        label += "[" + std::to_string(u.index) + "]";
        const OwnerId got =
            mem.create_owner(std::move(label), ceil_div(cat.max_bytes(id), page), cat.side_for(id, m));
        if (got != id) throw SimulationFault("memory state already populated");
        mem.allocate(id, desired_pages(cat, id, m, total_tokens, page));
    }
}

// ---------------------------------------------------------------------------
// Fragmentation

FragMode parse_frag_mode(const std::string& s) {
    if (s == "slack") return FragMode::Slack;
    if (s == "residue") return FragMode::Residue;
    throw ConfigError("frag mode must be 'slack' or 'residue', got '" + s + "'");
}

Bytes unit_waste(Bytes unit_bytes, Bytes page_size, FragMode mode) {
    const Bytes r = unit_bytes % page_size;
    if (mode == FragMode::Residue) return r;
    return (page_size - r) % page_size;
}

FragReport fragmentation_report(const ModelSpec& model, const BatchState& batch, Bytes page_size,
                                FragMode mode) {
    if (page_size <= 0) throw ConfigError("page size must be positive");
    const TensorCatalog cat(model, batch.batch_size);
    const Count T = batch.total_tokens();
    // Units of one kind share a size, so rows aggregate per kind.
    std::map<int, FragRow> rows;
    for (OwnerId id = 0; id < cat.size(); ++id) {
        const TensorUnit u = cat.unit(id, T);
        auto& row = rows[static_cast<int>(u.kind)];
        if (row.unit_count == 0) {
            row.tensor = std::string(to_string(u.kind));
            row.sublayer = cat.is_per_sublayer(id) ? std::string(to_string(cat.sublayer_of(id)))
                                                   : row.tensor;
            row.unit_bytes = u.bytes;
        }
        ++row.unit_count;
        row.waste_bytes += unit_waste(u.bytes, page_size, mode);
    }
    FragReport rep;
    for (auto& [k, row] : rows) {
        rep.total += row.waste_bytes;
        rep.unit_count += row.unit_count;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Migration

Seconds migration_time(const MigrationPlan& plan, const PlatformSpec& platform) {
    Seconds t = 0.0;
    for (Side dst : kSides) {
        const Bytes b = plan.bytes_to[static_cast<std::size_t>(index_of(dst))];
        if (b <= 0) continue;
        const double bw = std::min({platform.interconnect_bandwidth, platform.tier(dst).bandwidth,
                                    platform.tier(other(dst)).bandwidth});
        t = std::max(t, static_cast<double>(b) / bw);
    }
    return t;
}

Seconds execute_migration(const MigrationPlan& plan, MemoryState& mem,
                          const PlatformSpec& platform) {
    for (const auto& mv : plan.moves)
        if (mem.owner(mv.owner).side == mv.to)
            throw SimulationFault("migration move for '" + mem.owner(mv.owner).label +
                                  "' already on its destination");
    // Moves run whenever their destination has room; a swap between two full
    // tiers proceeds because each move frees source pages.
    std::vector<const MigrationMove*> pending;
    for (const auto& mv : plan.moves) pending.push_back(&mv);
    while (!pending.empty()) {
        bool progressed = false;
        for (auto it = pending.begin(); it != pending.end();) {
            const auto& mv = **it;
            if (mem.owner(mv.owner).mapped_pages <= mem.free_pages(mv.to)) {
                mem.migrate(mv.owner, mv.to);
                it = pending.erase(it);
                progressed = true;
            } else {
                ++it;
            }
        }
        if (!progressed)
            throw OutOfMemory("migration cannot fit '" + mem.owner(pending.front()->owner).label +
                              "' on the " + std::string(to_string(pending.front()->to)) + " tier");
    }
    return migration_time(plan, platform);
}

}  // namespace asymsim
