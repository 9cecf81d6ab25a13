#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dcmsearch {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Wide-format choice data: one row per observation, attributes stored per
/// alternative. Immutable once validated.
struct ChoiceDataset {
    std::size_t n_obs = 0;
    std::size_t n_alts = 0;
    std::size_t n_attrs = 0;
    std::size_t n_covs = 0;

    std::vector<std::string> attr_names;
    std::vector<std::string> cov_names;

    std::vector<double> attrs;        // [obs][alt][attr]
    std::vector<int> covs;            // [obs][cov], dense 0-based level codes
    std::vector<int> cov_levels;      // level count per covariate
    std::vector<std::vector<long long>> cov_codes;  // dense level -> original code
    std::vector<int> choice;          // [obs]
    std::vector<std::uint8_t> avail;  // [obs][alt]

    double attr(std::size_t n, std::size_t j, std::size_t k) const {
        return attrs[(n * n_alts + j) * n_attrs + k];
    }
    int cov(std::size_t n, std::size_t c) const { return covs[n * n_covs + c]; }
    bool available(std::size_t n, std::size_t j) const { return avail[n * n_alts + j] != 0; }

    /// Throws DatasetError naming every offending row (1-based data rows).
    void validate() const;

    /// Subset of observations, in the given order.
    ChoiceDataset subset(const std::vector<std::size_t>& rows) const;

    bool operator==(const ChoiceDataset&) const = default;
};

/// Column mapping for the wide CSV format. Empty fields are auto-detected
/// from the header: `<name>_alt<j>` attribute columns, `avail_alt<j>`
/// availability columns and `cov*` covariate columns.
struct CsvSchema {
    std::string choice = "choice";
    struct Attribute {
        std::string name;
        std::vector<std::string> columns;  // one per alternative
    };
    std::vector<Attribute> attributes;
    std::vector<std::string> covariates;
    std::vector<std::string> availability;  // empty: all alternatives available
    bool autodetect = true;
};

ChoiceDataset load_wide_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
ChoiceDataset parse_wide_csv(const std::string& text, const CsvSchema& schema = {});

/// Writes `<attr>_alt<j>`, covariate and `avail_alt<j>` columns; doubles are
/// written in shortest round-trip form so a reload is bit-identical.
void save_wide_csv(const ChoiceDataset& ds, const std::filesystem::path& path);
std::string to_wide_csv(const ChoiceDataset& ds);

/// Seeded row-level shuffle split into (in-sample, out-of-sample).
std::pair<ChoiceDataset, ChoiceDataset> split_holdout(const ChoiceDataset& ds, double in_sample_frac,
                                                      std::uint64_t seed);

/// Index form of split_holdout, exposed for partition checks.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_indices(std::size_t n_obs,
                                                                              double in_sample_frac,
                                                                              std::uint64_t seed);

}  // namespace dcmsearch
