#include "asymsim/hardware.hpp"

#include <algorithm>
#include <bit>

namespace asymsim {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

void validate_tier(const MemoryTierSpec& t, Bytes page_size) {
    require(t.capacity >= page_size, "tier '" + t.name + "': capacity must hold at least one page");
    require(t.bandwidth > 0.0, "tier '" + t.name + "': bandwidth must be positive");
    require(t.access_latency > 0.0, "tier '" + t.name + "': access_latency must be positive");
}

}  // namespace

double PlatformSpec::link_bandwidth() const {
    return std::min({interconnect_bandwidth, bandwidth_tier.bandwidth, capacity_tier.bandwidth});
}

void PlatformSpec::validate() const {
    const auto& c = chip;
    require(c.cores > 0 && c.mm_rows > 0 && c.mm_cols > 0 && c.mv_arrays > 0 && c.mv_lanes > 0 &&
                c.vector_lanes > 0 && c.frequency > 0.0 && c.spm_bytes_per_core > 0 &&
                c.launch_overhead > 0.0,
            "chip: all fields must be positive");
    require(translation.tlb_entries > 0, "translation: tlb_entries must be positive");
    require(translation.page_size > 0 && std::has_single_bit(static_cast<std::uint64_t>(translation.page_size)),
            "translation: page_size must be a power of two");
    require(translation.miss_latency >= 0.0, "translation: miss_latency must be non-negative");
    // A zero-capacity bandwidth tier is allowed: it degenerates to capacity-only.
    if (bandwidth_tier.capacity > 0) validate_tier(bandwidth_tier, translation.page_size);
    else require(bandwidth_tier.bandwidth > 0.0, "bandwidth tier: bandwidth must be positive");
    validate_tier(capacity_tier, translation.page_size);
    require(interconnect_bandwidth > 0.0, "interconnect_bandwidth must be positive");
    require(chips_per_side[0] >= 1 && chips_per_side[1] >= 1, "chips per side must be >= 1");
    for (int i = 0; i < 2; ++i)
        require(energy.dynamic_pj_per_byte[static_cast<std::size_t>(i)] >= 0.0 &&
                    energy.static_watts[static_cast<std::size_t>(i)] >= 0.0,
                "energy: coefficients must be non-negative");
    require(energy.interconnect_pj_per_byte >= 0.0, "energy: coefficients must be non-negative");
    require(multi_hbm_hop_latency >= 0.0, "multi_hbm_hop_latency must be non-negative");
    require(hierarchical_staging_bytes >= 0, "hierarchical_staging_bytes must be non-negative");
}

PlatformSpec original_platform() {
    PlatformSpec p;
    p.bandwidth_tier = {"HBM3", 96 * GiB, 3e12, 32e-9};
    p.capacity_tier = {"LPDDR5X", 512 * GiB, 544e9, 45e-9};
    p.interconnect_bandwidth = 960e9;
    return p;
}

const std::vector<std::string>& platform_preset_names() {
    static const std::vector<std::string> names{
        "Original",     "HBMcap-Less",   "HBMcap-More",   "HBMbw-Less",    "HBMbw-More",
        "LPDDRbw-Less", "LPDDRbw-More", "HBMChip-More", "LPDDRChip-More"};
    return names;
}

PlatformSpec platform_preset(const std::string& name) {
    PlatformSpec p = original_platform();
    p.name = name;
    if (name == "Original") return p;
    if (name == "HBMcap-Less") p.bandwidth_tier.capacity = 48 * GiB;
    else if (name == "HBMcap-More") p.bandwidth_tier.capacity = 192 * GiB;
    else if (name == "HBMbw-Less") p.bandwidth_tier.bandwidth = 2.25e12;
    else if (name == "HBMbw-More") p.bandwidth_tier.bandwidth = 4e12;
    else if (name == "LPDDRbw-Less") p.capacity_tier.bandwidth = 408e9;
    else if (name == "LPDDRbw-More") p.capacity_tier.bandwidth = 680e9;
    else if (name == "HBMChip-More") p.chips_per_side[0] = 2;
    else if (name == "LPDDRChip-More") p.chips_per_side[1] = 2;
    else throw ConfigError("unknown platform preset '" + name + "'");
    return p;
}

double peak_throughput(const ChipSpec& chip, OpClass op) {
    switch (op) {
        case OpClass::Gemm:
            return static_cast<double>(chip.cores) * chip.mm_rows * chip.mm_cols * 2.0 * chip.frequency;
        case OpClass::Gemv:
            return static_cast<double>(chip.cores) * chip.mv_arrays * chip.mv_lanes * 2.0 *
                   chip.frequency;
        default:
            return static_cast<double>(chip.cores) * chip.vector_lanes * chip.frequency;
    }
}

double effective_throughput(const KernelDesc& k, const ChipSpec& chip, int chips) {
    double peak = peak_throughput(chip, k.op_class) * chips;
    if (k.op_class == OpClass::Gemm && chip.weight_stationary && k.stream_rows > 0 &&
        k.stream_rows < chip.mm_rows)
        peak *= static_cast<double>(k.stream_rows) / chip.mm_rows;
    return peak;
}

Seconds compute_time(const KernelDesc& k, const ChipSpec& chip, int chips) {
    if (k.flops <= 0) return 0.0;
    return static_cast<double>(k.flops) / effective_throughput(k, chip, chips);
}

Seconds translation_time(const TranslationSpec& tr, Count misses, double bandwidth) {
    if (!tr.enabled || misses <= 0) return 0.0;
    if (!tr.overlap_walks) return static_cast<double>(misses) * tr.miss_latency;
    const double hidden = static_cast<double>(tr.page_size) / bandwidth;
    return tr.miss_latency +
           static_cast<double>(misses - 1) * std::max(0.0, tr.miss_latency - hidden);
}

Seconds kernel_time(const KernelDesc& k, const MemoryTierSpec& tier, const ChipSpec& chip,
                    const TranslationSpec& tr, Count misses, int chips) {
    const Seconds memory = static_cast<double>(k.total_bytes()) / tier.bandwidth;
    return std::max(compute_time(k, chip, chips), memory) + tier.access_latency +
           chip.launch_overhead + translation_time(tr, misses, tier.bandwidth);
}

Seconds kernel_time(const KernelDesc& k, Side side, const PlatformSpec& platform, Count misses) {
    return kernel_time(k, platform.tier(side), platform.chip, platform.translation, misses,
                       platform.chips(side));
}

}  // namespace asymsim
