#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace asymsim {

using Bytes = std::int64_t;
using Count = std::int64_t;
using Seconds = double;

inline constexpr Bytes KiB = 1024;
inline constexpr Bytes MiB = 1024 * KiB;
inline constexpr Bytes GiB = 1024 * MiB;

// Memory side of the asymmetric system. Bandwidth is the HBM-like tier,
// Capacity the LPDDR-like tier.
enum class Side : std::uint8_t { Bandwidth = 0, Capacity = 1 };

inline constexpr std::array<Side, 2> kSides{Side::Bandwidth, Side::Capacity};

constexpr int index_of(Side s) { return static_cast<int>(s); }
constexpr Side other(Side s) { return s == Side::Bandwidth ? Side::Capacity : Side::Bandwidth; }
std::string_view to_string(Side s);

enum class Sublayer : std::uint8_t { QkvLinear = 0, Attention = 1, Fc = 2 };

inline constexpr std::array<Sublayer, 3> kSublayers{Sublayer::QkvLinear, Sublayer::Attention,
                                                    Sublayer::Fc};

constexpr int index_of(Sublayer s) { return static_cast<int>(s); }
std::string_view to_string(Sublayer s);

enum class OpClass : std::uint8_t { Gemm, Gemv, Softmax, LayerNorm, Residual, Activation };

std::string_view to_string(OpClass op);
constexpr bool is_vector_class(OpClass op) { return op != OpClass::Gemm && op != OpClass::Gemv; }

// Head (or equal-width column-group) counts placed on the bandwidth tier.
// The remainder of each sublayer runs on the capacity tier.
struct MappingDecision {
    int n_qkv = 0;
    int n_attention = 0;
    int n_fc = 0;

    [[nodiscard]] int count(Sublayer s) const;
    void set(Sublayer s, int n);

    friend bool operator==(const MappingDecision&, const MappingDecision&) = default;
};

std::string to_string(const MappingDecision& m);

// Error hierarchy. Exit codes of the CLI key off these types.
struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : SimError {
    using SimError::SimError;
};

struct OutOfMemory : SimError {
    using SimError::SimError;
};

struct BudgetExceeded : SimError {
    using SimError::SimError;
};

// Internal inconsistency of the simulated machine (unmapped page, residency
// mismatch). Always a simulator bug or a misuse of the API.
struct SimulationFault : SimError {
    using SimError::SimError;
};

constexpr Bytes ceil_div(Bytes a, Bytes b) { return (a + b - 1) / b; }
constexpr Bytes round_up(Bytes a, Bytes b) { return ceil_div(a, b) * b; }

}  // namespace asymsim
