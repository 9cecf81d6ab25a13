#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "dcmsearch/dataset.hpp"
#include "dcmsearch/synthetic.hpp"

namespace testutil {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("dcmsearch_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline dcmsearch::Simulation simulate(const std::string& id, std::size_t n, std::uint64_t seed) {
    return dcmsearch::generate(*dcmsearch::find_case(id), n, seed);
}

/// Random dataset with positive attributes and optional covariates.
inline dcmsearch::ChoiceDataset random_dataset(std::size_t n, std::size_t j, std::size_t k, std::size_t c,
                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.5, 4.5);
    dcmsearch::ChoiceDataset ds;
    ds.n_obs = n;
    ds.n_alts = j;
    ds.n_attrs = k;
    ds.n_covs = c;
    for (std::size_t a = 0; a < k; ++a) ds.attr_names.push_back("x" + std::to_string(a + 1));
    for (std::size_t a = 0; a < c; ++a) {
        ds.cov_names.push_back("cov" + std::to_string(a + 1));
        ds.cov_levels.push_back(static_cast<int>(2 + a));
        ds.cov_codes.push_back({});
        for (int l = 0; l < ds.cov_levels.back(); ++l) ds.cov_codes.back().push_back(l);
    }
    ds.attrs.resize(n * j * k);
    for (auto& x : ds.attrs) x = u(rng);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < c; ++a) {
            ds.covs.push_back(std::uniform_int_distribution<int>(0, ds.cov_levels[a] - 1)(rng));
        }
        ds.choice.push_back(std::uniform_int_distribution<int>(0, static_cast<int>(j) - 1)(rng));
    }
    ds.avail.assign(n * j, 1);
    return ds;
}

}  // namespace testutil
