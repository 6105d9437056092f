#include "asymsim/workload.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

namespace asymsim {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

KernelDesc make_kernel(Stage stage, OpClass op, Count flops, Bytes weight, Bytes kv, Bytes in,
                       Bytes out, Count rows) {
    KernelDesc k;
    k.stage = stage;
    k.sublayer = sublayer_of(stage);
    k.op_class = op;
    k.flops = flops;
    k.weight_bytes = weight;
    k.kv_bytes = kv;
    k.activation_in_bytes = in;
    k.activation_out_bytes = out;
    k.stream_rows = rows;
    return k;
}

}  // namespace

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::Qkv: return "qkv";
        case Stage::Attention: return "attention";
        case Stage::Proj: return "proj";
        case Stage::Up: return "up";
        case Stage::Down: return "down";
    }
    return "?";
}

void ModelSpec::validate() const {
    require(num_layers > 0 && num_heads > 0 && head_dim > 0 && model_dim > 0 && ffn_dim > 0 &&
                max_seq_len > 0,
            "model '" + name + "': all counts must be strictly positive");
    require(kv_groups >= 1, "model '" + name + "': kv_groups must be >= 1");
    require(model_dim == static_cast<Count>(num_heads) * head_dim,
            "model '" + name + "': model_dim must equal num_heads * head_dim");
    require(num_heads % kv_groups == 0, "model '" + name + "': kv_groups must divide num_heads");
    require((2 * head_dim) % kv_groups == 0,
            "model '" + name + "': kv_groups must divide 2 * head_dim");
    require(ffn_dim % num_heads == 0, "model '" + name + "': ffn_dim must be a multiple of num_heads");
    require(bytes_per_element == 1 || bytes_per_element == 2,
            "model '" + name + "': bytes_per_element must be 1 or 2");
}

ModelSpec gpt3_175b() {
    return {"GPT3-175B", 96, 96, 128, 12288, 49152, 1, 1, 2048};
}

ModelSpec chinchilla_70b() {
    return {"Chinchilla-70B", 80, 64, 128, 8192, 32768, 1, 1, 4096};
}

ModelSpec llama2_70b() {
    return {"Llama2-70B", 80, 64, 128, 8192, 28672, 8, 1, 4096};
}

ModelSpec model_preset(const std::string& name) {
    const std::string n = lower(name);
    if (n == "gpt3-175b" || n == "gpt3") return gpt3_175b();
    if (n == "chinchilla-70b" || n == "chinchilla") return chinchilla_70b();
    if (n == "llama2-70b" || n == "llama2") return llama2_70b();
    throw ConfigError("unknown model preset '" + name + "'");
}

BatchState BatchState::uniform(int batch, int seq_len) {
    BatchState b;
    b.batch_size = batch;
    b.seq_lens.assign(static_cast<std::size_t>(std::max(batch, 0)), seq_len);
    return b;
}

void BatchState::validate(const ModelSpec& model) const {
    require(batch_size > 0, "batch_size must be positive");
    require(seq_lens.size() == static_cast<std::size_t>(batch_size),
            "seq_lens length must equal batch_size");
    for (int s : seq_lens)
        require(s >= 1 && s <= model.max_seq_len,
                "sequence length " + std::to_string(s) + " outside [1, " +
                    std::to_string(model.max_seq_len) + "]");
}

Count BatchState::total_tokens() const {
    return std::accumulate(seq_lens.begin(), seq_lens.end(), Count{0});
}

BarrierMode parse_barrier_mode(const std::string& s) {
    if (s == "stage") return BarrierMode::Stage;
    if (s == "kernel") return BarrierMode::Kernel;
    throw ConfigError("barrier mode must be 'stage' or 'kernel', got '" + s + "'");
}

void validate_mapping(const ModelSpec& model, const MappingDecision& m) {
    for (Sublayer s : kSublayers) {
        const int n = m.count(s);
        if (n < 0 || n > model.num_heads)
            throw ConfigError("mapping " + to_string(m) + ": " + std::string(to_string(s)) +
                              " count outside [0, " + std::to_string(model.num_heads) + "]");
    }
    if (m.n_attention % model.kv_groups != 0)
        throw ConfigError("mapping " + to_string(m) + ": attention count must be a multiple of " +
                          std::to_string(model.kv_groups) + " (KV group size)");
}

std::vector<KernelDesc> stage_kernels(const ModelSpec& model, int batch_size, Count total_tokens,
                                      Stage stage, Side side, int n) {
    std::vector<KernelDesc> out;
    if (n <= 0) return out;
    const Count B = batch_size;
    const Count T = total_tokens;
    const Count b = model.bytes_per_element;
    const Count D = model.model_dim;
    const Count O = model.ffn_dim;
    const Count H = model.head_dim;
    const Count dcols = n * H;
    const Count linear_rows = B;
    const OpClass linear = B == 1 ? OpClass::Gemv : OpClass::Gemm;

    switch (stage) {
        case Stage::Qkv: {
            const Count qcols = n * model.qkv_head_cols();
            out.push_back(make_kernel(stage, OpClass::LayerNorm, B * dcols, 0, 0, B * dcols * b,
                                      B * dcols * b, 0));
            out.push_back(make_kernel(stage, linear, 2 * B * D * qcols, D * qcols * b, 0, B * D * b,
                                      B * qcols * b, linear_rows));
            break;
        }
        case Stage::Attention: {
            const Count kvh = n / model.kv_groups;
            const Count scores = T * n * b;
            out.push_back(make_kernel(stage, OpClass::Gemv, 2 * T * n * H, 0, T * kvh * H * b,
                                      B * n * H * b, scores, 0));
            out.push_back(make_kernel(stage, OpClass::Softmax, T * n, 0, 0, scores, scores, 0));
            out.push_back(make_kernel(stage, OpClass::Gemv, 2 * T * n * H, 0, T * kvh * H * b, scores,
                                      B * n * H * b, 0));
            break;
        }
        case Stage::Proj:
            out.push_back(make_kernel(stage, linear, 2 * B * D * dcols, D * dcols * b, 0, B * D * b,
                                      B * dcols * b, linear_rows));
            out.push_back(make_kernel(stage, OpClass::Residual, B * dcols, 0, 0, 2 * B * dcols * b,
                                      B * dcols * b, 0));
            break;
        case Stage::Up: {
            const Count ocols = n * model.ffn_group_cols();
            out.push_back(make_kernel(stage, OpClass::LayerNorm, B * dcols, 0, 0, B * dcols * b,
                                      B * dcols * b, 0));
            out.push_back(make_kernel(stage, linear, 2 * B * D * ocols, D * ocols * b, 0, B * D * b,
                                      B * ocols * b, linear_rows));
            out.push_back(make_kernel(stage, OpClass::Activation, B * ocols, 0, 0, B * ocols * b,
                                      B * ocols * b, 0));
            break;
        }
        case Stage::Down:
            out.push_back(make_kernel(stage, linear, 2 * B * O * dcols, O * dcols * b, 0, B * O * b,
                                      B * dcols * b, linear_rows));
            out.push_back(make_kernel(stage, OpClass::Residual, B * dcols, 0, 0, 2 * B * dcols * b,
                                      B * dcols * b, 0));
            break;
    }
    const int first = side == Side::Bandwidth ? 0 : model.num_heads - n;
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j].side = side;
        out[j].partition = {first, first + n};
        out[j].position = static_cast<int>(j);
    }
    return out;
}

std::vector<KernelDesc> enumerate_kernels(const ModelSpec& model, const BatchState& batch,
                                          const MappingDecision& mapping, BarrierMode barrier) {
    validate_mapping(model, mapping);
    const Count T = batch.total_tokens();
    const int N = model.num_heads;

    std::vector<KernelDesc> kernels;
    std::vector<int> prev_tails;  // last kernel of each side in the previous stage
    int group = 0;
    for (int layer = 0; layer < model.num_layers; ++layer) {
        for (Stage stage : kStages) {
            const int n = mapping.count(sublayer_of(stage));
            std::array<std::vector<KernelDesc>, 2> chains;
            int positions = 0;
            for (Side side : kSides) {
                auto& ks = chains[static_cast<std::size_t>(index_of(side))];
                ks = stage_kernels(model, batch.batch_size, T, stage, side,
                                   side == Side::Bandwidth ? n : N - n);
                for (const auto& k : ks) positions = std::max(positions, k.position + 1);
            }
            // Kernel barriers: emit by position so barrier groups never go backwards.
            std::vector<std::pair<Side, std::size_t>> order;
            if (barrier == BarrierMode::Stage) {
                for (Side side : kSides)
                    for (std::size_t j = 0; j < chains[static_cast<std::size_t>(index_of(side))].size(); ++j)
                        order.emplace_back(side, j);
            } else {
                for (int pos = 0; pos < positions; ++pos)
                    for (Side side : kSides) {
                        const auto& ks = chains[static_cast<std::size_t>(index_of(side))];
                        for (std::size_t j = 0; j < ks.size(); ++j)
                            if (ks[j].position == pos) order.emplace_back(side, j);
                    }
            }
            std::array<int, 2> prev{-1, -1};
            for (const auto& [side, j] : order) {
                const auto si = static_cast<std::size_t>(index_of(side));
                auto& k = chains[si][j];
                k.id = static_cast<int>(kernels.size());
                k.layer_index = layer;
                k.deps = prev[si] < 0 ? prev_tails : std::vector<int>{prev[si]};
                k.barrier_group = barrier == BarrierMode::Stage ? group : group + k.position;
                prev[si] = k.id;
                kernels.push_back(std::move(k));
            }
            std::vector<int> tails;
            for (int t : prev)
                if (t >= 0) tails.push_back(t);
            group += barrier == BarrierMode::Stage ? 1 : positions;
            prev_tails = std::move(tails);
        }
    }
    return kernels;
}

Bytes Footprint::weights() const {
    Bytes t = 0;
    for (const auto& s : per_sublayer) t += s.weights;
    return t;
}

Bytes Footprint::kv_cache() const {
    Bytes t = 0;
    for (const auto& s : per_sublayer) t += s.kv_cache;
    return t;
}

Bytes Footprint::activations() const {
    Bytes t = 0;
    for (const auto& s : per_sublayer) t += s.activations;
    return t;
}

Footprint footprint(const ModelSpec& model, const BatchState& batch) {
    const Count L = model.num_layers;
    const Count D = model.model_dim;
    const Count O = model.ffn_dim;
    const Count b = model.bytes_per_element;
    const Count g = model.kv_groups;
    const Count T = batch.total_tokens();

    Footprint f;
    auto& qkv = f.per_sublayer[0];
    auto& att = f.per_sublayer[1];
    auto& fc = f.per_sublayer[2];
    qkv.weights = L * (D * D + 2 * D * D / g) * b;
    fc.weights = L * (D * D + 2 * D * O) * b;
    att.kv_cache = 2 * L * (D / g) * b * T;

    for (Stage stage : kStages) {
        Bytes peak = 0;
        for (const auto& k :
             stage_kernels(model, batch.batch_size, T, stage, Side::Capacity, model.num_heads))
            peak = std::max(peak, k.activation_in_bytes + k.activation_out_bytes);
        auto& slot = f.per_sublayer[static_cast<std::size_t>(index_of(sublayer_of(stage)))];
        slot.activations = std::max(slot.activations, peak);
    }
    return f;
}

BatchState advance_batch(const BatchState& batch, const ScenarioPolicy& policy,
                         std::mt19937_64& rng, int max_seq_len) {
    BatchState next = batch;
    next.iteration = batch.iteration + 1;
    const int lo = std::clamp(policy.prompt_min, 1, max_seq_len);
    const int hi = std::clamp(policy.prompt_max, lo, max_seq_len);
    std::uniform_int_distribution<int> prompt(lo, hi);
    std::bernoulli_distribution terminate(std::clamp(policy.termination_probability, 0.0, 1.0));
    for (int& s : next.seq_lens) {
        const bool done = terminate(rng);
        if (done || s + 1 > max_seq_len)
            s = prompt(rng);
        else
            s += 1;
    }
    return next;
}

}  // namespace asymsim
