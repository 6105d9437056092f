#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "asymsim/types.hpp"

namespace asymsim {

struct ModelSpec {
    std::string name;
    int num_layers = 0;   // L
    int num_heads = 0;    // N
    int head_dim = 0;     // H
    Count model_dim = 0;  // D
    Count ffn_dim = 0;    // O
    int kv_groups = 1;    // g: query heads sharing one KV head
    int bytes_per_element = 1;
    int max_seq_len = 2048;

    // Throws ConfigError naming the violated constraint.
    void validate() const;

    [[nodiscard]] int kv_heads() const { return num_heads / kv_groups; }
    // Width of one qkv head slice: H query columns plus 2H/g key/value columns.
    [[nodiscard]] Count qkv_head_cols() const { return head_dim + 2 * head_dim / kv_groups; }
    [[nodiscard]] Count ffn_group_cols() const { return ffn_dim / num_heads; }
};

ModelSpec gpt3_175b();
ModelSpec chinchilla_70b();
ModelSpec llama2_70b();
// Accepts "gpt3-175b", "chinchilla-70b", "llama2-70b" (case-insensitive).
ModelSpec model_preset(const std::string& name);

struct BatchState {
    int batch_size = 0;
    std::vector<int> seq_lens;
    Count iteration = 0;

    static BatchState uniform(int batch, int seq_len);
    void validate(const ModelSpec& model) const;
    [[nodiscard]] Count total_tokens() const;
};

// Per-layer kernel stages. Each stage closes with a barrier.
enum class Stage : std::uint8_t { Qkv = 0, Attention = 1, Proj = 2, Up = 3, Down = 4 };

inline constexpr int kStagesPerLayer = 5;
inline constexpr std::array<Stage, kStagesPerLayer> kStages{Stage::Qkv, Stage::Attention,
                                                           Stage::Proj, Stage::Up, Stage::Down};

constexpr Sublayer sublayer_of(Stage s) {
    switch (s) {
        case Stage::Qkv: return Sublayer::QkvLinear;
        case Stage::Attention: return Sublayer::Attention;
        default: return Sublayer::Fc;
    }
}
std::string_view to_string(Stage s);

struct HeadRange {
    int begin = 0;
    int end = 0;
    [[nodiscard]] int size() const { return end - begin; }
    friend bool operator==(const HeadRange&, const HeadRange&) = default;
};

struct KernelDesc {
    int id = 0;
    int layer_index = 0;
    Sublayer sublayer = Sublayer::QkvLinear;
    Stage stage = Stage::Qkv;
    OpClass op_class = OpClass::Gemm;
    Count flops = 0;
    Bytes weight_bytes = 0;
    Bytes kv_bytes = 0;
    Bytes activation_in_bytes = 0;
    Bytes activation_out_bytes = 0;
    // Rows streamed through a weight-stationary array (the batch for linear kernels).
    Count stream_rows = 0;
    HeadRange partition;
    // Index within the chain one side runs for one stage.
    int position = 0;
    Side side = Side::Capacity;
    std::vector<int> deps;
    int barrier_group = 0;

    [[nodiscard]] Bytes total_bytes() const {
        return weight_bytes + kv_bytes + activation_in_bytes + activation_out_bytes;
    }
};

enum class BarrierMode : std::uint8_t { Stage, Kernel };

BarrierMode parse_barrier_mode(const std::string& s);

// Throws ConfigError when a count is outside [0, N] or an attention split
// would cut a KV group.
void validate_mapping(const ModelSpec& model, const MappingDecision& mapping);

// The kernels one side runs for one stage of one layer when it owns `n`
// head/column groups. Empty when n == 0. ids, deps and barrier groups are
// left for the caller.
std::vector<KernelDesc> stage_kernels(const ModelSpec& model, int batch_size, Count total_tokens,
                                      Stage stage, Side side, int n);

std::vector<KernelDesc> enumerate_kernels(const ModelSpec& model, const BatchState& batch,
                                          const MappingDecision& mapping,
                                          BarrierMode barrier = BarrierMode::Stage);

struct SublayerBytes {
    Bytes weights = 0;
    Bytes kv_cache = 0;
    Bytes activations = 0;
    [[nodiscard]] Bytes total() const { return weights + kv_cache + activations; }
};

struct Footprint {
    std::array<SublayerBytes, 3> per_sublayer{};

    [[nodiscard]] const SublayerBytes& operator[](Sublayer s) const {
        return per_sublayer[static_cast<std::size_t>(index_of(s))];
    }
    [[nodiscard]] Bytes weights() const;
    [[nodiscard]] Bytes kv_cache() const;
    [[nodiscard]] Bytes activations() const;
    [[nodiscard]] Bytes total() const { return weights() + kv_cache() + activations(); }
};

Footprint footprint(const ModelSpec& model, const BatchState& batch);

struct ScenarioPolicy {
    double termination_probability = 0.0;
    int prompt_min = 1;
    int prompt_max = 1;
};

// One decode step: survivors grow by one token; terminated requests (random,
// or at max_seq_len) are replaced by fresh prompts. Batch size is fixed.
BatchState advance_batch(const BatchState& batch, const ScenarioPolicy& policy,
                         std::mt19937_64& rng, int max_seq_len);

}  // namespace asymsim
