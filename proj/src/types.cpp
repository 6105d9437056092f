#include "asymsim/types.hpp"

namespace asymsim {

std::string_view to_string(Side s) {
    return s == Side::Bandwidth ? "bandwidth" : "capacity";
}

std::string_view to_string(Sublayer s) {
    switch (s) {
        case Sublayer::QkvLinear: return "qkv-linear";
        case Sublayer::Attention: return "attention";
        case Sublayer::Fc: return "fc";
    }
    return "?";
}

std::string_view to_string(OpClass op) {
    switch (op) {
        case OpClass::Gemm: return "gemm";
        case OpClass::Gemv: return "gemv";
        case OpClass::Softmax: return "softmax";
        case OpClass::LayerNorm: return "layernorm";
        case OpClass::Residual: return "residual";
        case OpClass::Activation: return "activation";
    }
    return "?";
}

int MappingDecision::count(Sublayer s) const {
    switch (s) {
        case Sublayer::QkvLinear: return n_qkv;
        case Sublayer::Attention: return n_attention;
        case Sublayer::Fc: return n_fc;
    }
    return 0;
}

void MappingDecision::set(Sublayer s, int n) {
    switch (s) {
        case Sublayer::QkvLinear: n_qkv = n; break;
        case Sublayer::Attention: n_attention = n; break;
        case Sublayer::Fc: n_fc = n; break;
    }
}

std::string to_string(const MappingDecision& m) {
    return "(" + std::to_string(m.n_qkv) + "," + std::to_string(m.n_attention) + "," +
           std::to_string(m.n_fc) + ")";
}

}  // namespace asymsim
