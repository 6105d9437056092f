#pragma once

#include <array>
#include <list>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "asymsim/hardware.hpp"
#include "asymsim/types.hpp"
#include "asymsim/workload.hpp"

namespace asymsim {

using OwnerId = int;
inline constexpr OwnerId kNoOwner = -1;
inline constexpr Count kUnmapped = -1;

// ---------------------------------------------------------------------------
// Building blocks

// Fully associative set with least-recently-used replacement.
class LruSet {
public:
    explicit LruSet(std::size_t capacity) : capacity_(capacity) {}

    // Returns true on hit. On miss the key is inserted, evicting the LRU key if full.
    bool touch(Count key);
    bool contains(Count key) const { return index_.count(key) != 0; }
    void erase(Count key);
    void clear();
    [[nodiscard]] std::size_t size() const { return order_.size(); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }

private:
    std::size_t capacity_;
    std::list<Count> order_;  // front = most recent
    std::unordered_map<Count, std::list<Count>::iterator> index_;
};

struct TlbState {
    explicit TlbState(int entries) : resident(static_cast<std::size_t>(entries)) {}

    LruSet resident;
    Count hits = 0;
    Count misses = 0;

    bool access(Count logical_page);
    void invalidate(Count logical_page) { resident.erase(logical_page); }
    void flush() { resident.clear(); }
    void reset_counters() { hits = misses = 0; }
};

class PageTable {
public:
    void grow(Count logical_pages) {
        if (logical_pages > static_cast<Count>(entries_.size()))
            entries_.resize(static_cast<std::size_t>(logical_pages), kUnmapped);
    }
    void map(Count logical, Count physical);
    void unmap(Count logical);
    [[nodiscard]] Count lookup(Count logical) const {
        if (logical < 0 || logical >= static_cast<Count>(entries_.size())) return kUnmapped;
        return entries_[static_cast<std::size_t>(logical)];
    }
    [[nodiscard]] Count size() const { return static_cast<Count>(entries_.size()); }
    [[nodiscard]] Count mapped_count() const { return mapped_; }

private:
    std::vector<Count> entries_;
    Count mapped_ = 0;
};

class FreeSpaceManager {
public:
    explicit FreeSpaceManager(Count total_pages);

    // Throws OutOfMemory (and changes nothing) when fewer than n pages are free.
    std::vector<Count> allocate(Count n_pages, OwnerId owner);
    void free(Count physical);
    [[nodiscard]] OwnerId owner_of(Count physical) const {
        return owners_[static_cast<std::size_t>(physical)];
    }
    [[nodiscard]] Count free_pages() const { return static_cast<Count>(free_.size()); }
    [[nodiscard]] Count total_pages() const { return total_; }
    [[nodiscard]] const std::vector<Count>& free_list() const { return free_; }

private:
    Count total_;
    std::vector<Count> free_;  // back is handed out first
    std::vector<OwnerId> owners_;
};

// ---------------------------------------------------------------------------
// Two-tier memory state

struct OwnerRecord {
    std::string label;
    Side side = Side::Capacity;
    Count logical_base = 0;
    Count reserved_pages = 0;
    Count mapped_pages = 0;
};

struct TranslateResult {
    Count physical = kUnmapped;
    bool hit = false;
};

class MemoryState {
public:
    explicit MemoryState(const PlatformSpec& platform);

    // Reserves a contiguous logical range. No physical pages yet.
    OwnerId create_owner(std::string label, Count reserved_pages, Side side);

    // Appends n pages to the owner's logical range on its current side.
    std::vector<Count> allocate(OwnerId owner, Count n_pages);
    // Frees the owner's last n pages.
    void release(OwnerId owner, Count n_pages);
    void release_all(OwnerId owner) { release(owner, this->owner(owner).mapped_pages); }
    // Grows or shrinks the owner to exactly `pages` mapped pages.
    void resize(OwnerId owner, Count pages);
    // Moves every page of the owner to `dst`. Throws OutOfMemory before any change.
    void migrate(OwnerId owner, Side dst);

    // Throws SimulationFault when the page is not mapped on `side`.
    TranslateResult translate(Side side, Count logical_page);

    // Throws SimulationFault on any broken invariant.
    void audit() const;
    [[nodiscard]] nlohmann::json dump() const;

    [[nodiscard]] const OwnerRecord& owner(OwnerId id) const;
    [[nodiscard]] Count owner_count() const { return static_cast<Count>(owners_.size()); }
    [[nodiscard]] Count free_pages(Side s) const { return fsm(s).free_pages(); }
    [[nodiscard]] Count total_pages(Side s) const { return fsm(s).total_pages(); }
    [[nodiscard]] Count used_pages(Side s) const { return total_pages(s) - free_pages(s); }
    [[nodiscard]] Bytes page_size() const { return page_size_; }
    [[nodiscard]] TlbState& tlb(Side s) { return tlbs_[static_cast<std::size_t>(index_of(s))]; }
    [[nodiscard]] const TlbState& tlb(Side s) const {
        return tlbs_[static_cast<std::size_t>(index_of(s))];
    }
    [[nodiscard]] const PageTable& table(Side s) const {
        return tables_[static_cast<std::size_t>(index_of(s))];
    }
    [[nodiscard]] const FreeSpaceManager& fsm(Side s) const {
        return fsms_[static_cast<std::size_t>(index_of(s))];
    }

private:
    FreeSpaceManager& fsm_mut(Side s) { return fsms_[static_cast<std::size_t>(index_of(s))]; }
    PageTable& table_mut(Side s) { return tables_[static_cast<std::size_t>(index_of(s))]; }
    OwnerRecord& owner_mut(OwnerId id);

    Bytes page_size_;
    std::array<FreeSpaceManager, 2> fsms_;
    std::array<PageTable, 2> tables_;
    std::array<TlbState, 2> tlbs_;
    std::vector<OwnerRecord> owners_;
    Count next_logical_ = 0;
};

// ---------------------------------------------------------------------------
// Tensor units: the smallest pieces that always live on one tier

enum class UnitKind : std::uint8_t {
    QkvWeight,   // one head's q/k/v columns, all layers
    ProjWeight,  // one column group of the output projection, all layers
    UpWeight,
    DownWeight,
    KvCache,     // one kv head, all layers and requests
    Activation,  // one layer's residual stream buffer
    Scratch      // per-side working buffer for the current stage
};

std::string_view to_string(UnitKind k);

struct TensorUnit {
    OwnerId id = kNoOwner;
    UnitKind kind = UnitKind::QkvWeight;
    int layer = -1;  // -1: spans all layers
    int index = 0;   // head, column group, kv head, or side
    Bytes bytes = 0;
};

class TensorCatalog {
public:
    TensorCatalog(const ModelSpec& model, int batch_size);

    [[nodiscard]] int size() const { return total_; }
    [[nodiscard]] OwnerId id(UnitKind kind, int layer, int index) const;
    [[nodiscard]] TensorUnit unit(OwnerId id, Count total_tokens) const;
    [[nodiscard]] Bytes bytes(OwnerId id, Count total_tokens) const;
    // Size at the longest possible batch.
    [[nodiscard]] Bytes max_bytes(OwnerId id) const;
    [[nodiscard]] Side side_for(OwnerId id, const MappingDecision& mapping) const;
    [[nodiscard]] Sublayer sublayer_of(OwnerId id) const;
    [[nodiscard]] bool is_per_sublayer(OwnerId id) const;  // weights and KV

    // Per-layer byte slice of a weight unit; used for page-granular access sets.
    [[nodiscard]] Bytes layer_slice_bytes(UnitKind kind) const;
    // Per-layer slice of a KV unit: the K half, then the V half.
    [[nodiscard]] Bytes kv_layer_bytes(Count total_tokens) const {
        return 2 * total_tokens * model_.head_dim * model_.bytes_per_element;
    }
    [[nodiscard]] const ModelSpec& model() const { return model_; }
    [[nodiscard]] int batch_size() const { return batch_size_; }

private:
    [[nodiscard]] UnitKind kind_of(OwnerId id, int* layer, int* index) const;

    ModelSpec model_;
    int batch_size_;
    int heads_;
    int kv_heads_;
    int layers_;
    int total_;
};

Bytes scratch_bytes(const ModelSpec& model, int batch_size, Count total_tokens);

// Page-rounded bytes a side holds for one sublayer when it owns n head groups.
Bytes sublayer_side_bytes(const ModelSpec& model, int batch_size, Count total_tokens,
                          Sublayer sublayer, int n_on_side, Bytes page_size);
// Page-rounded bytes a side holds regardless of mapping (scratch, activations).
Bytes fixed_side_bytes(const ModelSpec& model, int batch_size, Count total_tokens, Side side,
                       Bytes page_size);
Bytes side_bytes(const ModelSpec& model, int batch_size, Count total_tokens,
                 const MappingDecision& mapping, Side side, Bytes page_size);

// Pages a unit should hold under a mapping. The bandwidth-side scratch buffer
// is dropped when nothing runs there.
Count desired_pages(const TensorCatalog& catalog, OwnerId id, const MappingDecision& mapping,
                    Count total_tokens, Bytes page_size);

// Places every unit per the mapping. Throws OutOfMemory if a tier overflows.
void populate(MemoryState& mem, const TensorCatalog& catalog, const MappingDecision& mapping,
              Count total_tokens);

// ---------------------------------------------------------------------------
// Fragmentation

enum class FragMode : std::uint8_t { Slack, Residue };
FragMode parse_frag_mode(const std::string& s);

struct FragRow {
    std::string sublayer;
    std::string tensor;
    Count unit_count = 0;
    Bytes unit_bytes = 0;
    Bytes waste_bytes = 0;
};

struct FragReport {
    std::vector<FragRow> rows;
    Bytes total = 0;
    Count unit_count = 0;
};

Bytes unit_waste(Bytes unit_bytes, Bytes page_size, FragMode mode);
FragReport fragmentation_report(const ModelSpec& model, const BatchState& batch, Bytes page_size,
                                FragMode mode = FragMode::Slack);

// ---------------------------------------------------------------------------
// Migration

struct MigrationMove {
    OwnerId owner = kNoOwner;
    Count pages = 0;
    Side to = Side::Capacity;
};

struct MigrationPlan {
    std::vector<MigrationMove> moves;
    std::array<Bytes, 2> bytes_to{0, 0};  // indexed by destination side

    [[nodiscard]] bool empty() const { return moves.empty(); }
    [[nodiscard]] Bytes total_bytes() const { return bytes_to[0] + bytes_to[1]; }
};

// Transfer time of a plan: directions overlap, each limited by the slowest of
// interconnect, source and destination bandwidth.
Seconds migration_time(const MigrationPlan& plan, const PlatformSpec& platform);

// Applies the plan to `mem` and returns its transfer time.
Seconds execute_migration(const MigrationPlan& plan, MemoryState& mem,
                          const PlatformSpec& platform);

}  // namespace asymsim
