#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcmsearch/dataset.hpp"
#include "dcmsearch/modelling_space.hpp"

namespace dcmsearch {

/// A simulated data-generating process with known specification and
/// parameters (three alternatives, six attributes).
struct TrueCase {
    std::string id;  // "s1", "s2", "s3"
    ModellingSpace space;
    ModelSpec spec;
    std::vector<double> params;  // in build_design layout order for `spec`
    std::vector<std::string> cov_names;
    std::vector<int> cov_levels;
    std::size_t n_alts = 3;
    double attr_low = 0.5;
    double attr_high = 4.5;
};

std::vector<TrueCase> case_catalogue();
/// Case-insensitive lookup ("s1" / "S1"); nullopt for unknown ids.
std::optional<TrueCase> find_case(const std::string& id);

struct TruthRecord {
    std::string case_id;
    ModelSpec spec;
    std::vector<std::string> param_names;
    std::vector<double> params;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::vector<std::string> distributions;
};

struct Simulation {
    ChoiceDataset data;
    TruthRecord truth;
};

/// Uniform attributes, categorical covariates, standard Gumbel errors and
/// utility-maximising choices. Seed-deterministic.
Simulation generate(const TrueCase& c, std::size_t n, std::uint64_t seed);

/// -ln(-ln U) with U uniform on (0, 1).
template <typename Rng>
double draw_gumbel(Rng& rng);

}  // namespace dcmsearch

#include <cmath>
#include <random>

template <typename Rng>
double dcmsearch::draw_gumbel(Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double u = u01(rng);
    while (u <= 0.0) u = u01(rng);
    return -std::log(-std::log(u));
}
