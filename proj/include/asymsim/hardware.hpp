#pragma once

#include <array>
#include <string>
#include <vector>

#include "asymsim/types.hpp"
#include "asymsim/workload.hpp"

namespace asymsim {

struct MemoryTierSpec {
    std::string name;
    Bytes capacity = 0;
    double bandwidth = 0.0;  // bytes per second
    Seconds access_latency = 0.0;
};

struct ChipSpec {
    int cores = 4;
    int mm_rows = 128;
    int mm_cols = 128;
    int mv_arrays = 32;
    int mv_lanes = 128;
    int vector_lanes = 128;
    double frequency = 1e9;
    Bytes spm_bytes_per_core = 32 * MiB;
    Seconds launch_overhead = 5e-6;
    // A weight-stationary array streams activation rows past resident weights,
    // so a GEMM with fewer rows than the array height leaves PEs idle.
    bool weight_stationary = true;
};

struct TranslationSpec {
    int tlb_entries = 2048;
    Bytes page_size = 2 * MiB;
    Seconds miss_latency = 300e-9;
    bool enabled = true;
    // Page walks overlap the data transfer of the previous page; only the part
    // of a walk longer than one page transfer is exposed.
    bool overlap_walks = true;
};

struct EnergyParams {
    std::array<double, 2> dynamic_pj_per_byte{31.2, 36.0};
    std::array<double, 2> static_watts{12.0, 28.0};
    double interconnect_pj_per_byte = 10.0;
};

struct PlatformSpec {
    std::string name = "Original";
    MemoryTierSpec bandwidth_tier;
    MemoryTierSpec capacity_tier;
    double interconnect_bandwidth = 0.0;
    ChipSpec chip;
    std::array<int, 2> chips_per_side{1, 1};
    TranslationSpec translation;
    EnergyParams energy;
    // Per-hop latency of one collective step between bandwidth-tier modules.
    Seconds multi_hbm_hop_latency = 50e-6;
    // Bandwidth-tier bytes kept free for pages streamed on demand.
    Bytes hierarchical_staging_bytes = 2 * GiB;

    [[nodiscard]] const MemoryTierSpec& tier(Side s) const {
        return s == Side::Bandwidth ? bandwidth_tier : capacity_tier;
    }
    [[nodiscard]] MemoryTierSpec& tier(Side s) {
        return s == Side::Bandwidth ? bandwidth_tier : capacity_tier;
    }
    [[nodiscard]] int chips(Side s) const { return chips_per_side[static_cast<std::size_t>(index_of(s))]; }
    // Bandwidth of a transfer between the two tiers.
    [[nodiscard]] double link_bandwidth() const;

    void validate() const;
};

PlatformSpec original_platform();
// "Original" plus the eight sensitivity variants.
const std::vector<std::string>& platform_preset_names();
PlatformSpec platform_preset(const std::string& name);

// Flop/s of one chip for an operation class.
double peak_throughput(const ChipSpec& chip, OpClass op);

// Throughput a kernel actually sustains on `chips` chips.
double effective_throughput(const KernelDesc& k, const ChipSpec& chip, int chips = 1);

Seconds compute_time(const KernelDesc& k, const ChipSpec& chip, int chips = 1);

// Exposed time of `misses` TLB misses on a tier streaming at `bandwidth`.
Seconds translation_time(const TranslationSpec& tr, Count misses, double bandwidth);

Seconds kernel_time(const KernelDesc& k, const MemoryTierSpec& tier, const ChipSpec& chip,
                    const TranslationSpec& tr, Count misses, int chips = 1);

Seconds kernel_time(const KernelDesc& k, Side side, const PlatformSpec& platform, Count misses);

}  // namespace asymsim
