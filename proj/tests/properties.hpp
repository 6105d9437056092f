#pragma once

// Randomized invariant checks shared by the property suite and the acceptance
// runner. Each check returns an empty string on success, otherwise a
// description of the first counterexample (with the seed that produced it).

#include <cstdint>
#include <random>
#include <string>

#include "asymsim/engine.hpp"

namespace props {

using namespace asymsim;

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}
    int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
    }
    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

// Small decoder shapes, including grouped KV heads.
ModelSpec random_model(Gen& g);
BatchState random_batch(Gen& g, const ModelSpec& m);
MappingDecision random_mapping(Gen& g, const ModelSpec& m);
// Tiers sized around the batch footprint; the capacity tier always fits everything.
PlatformSpec random_platform(Gen& g, const ModelSpec& m, const BatchState& b);

struct Settings {
    std::uint64_t seed = 1;
    int cases = 200;
};

std::string check_work_conservation(const Settings& s);
std::string check_head_conservation(const Settings& s);
std::string check_capacity_feasibility(const Settings& s);
// `cases` is the number of random allocate/resize/migrate/free operations.
std::string check_memsim_random_ops(const Settings& s);
std::string check_tlb_accounting(const Settings& s);
std::string check_roofline_floor(const Settings& s);
std::string check_determinism(const Settings& s);
std::string check_analytic_matches_timeline(const Settings& s);

}  // namespace props
