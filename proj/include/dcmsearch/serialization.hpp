#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcmsearch/dataset.hpp"
#include "dcmsearch/mnl_estimator.hpp"
#include "dcmsearch/modelling_space.hpp"
#include "dcmsearch/reward.hpp"
#include "dcmsearch/search.hpp"
#include "dcmsearch/synthetic.hpp"

namespace dcmsearch {

using json = nlohmann::json;

/// User-facing configuration or input problem (exit code 2 territory).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

// ModelSpec: {"asc": {"interaction": null} | null, "terms": [{attr, transform, taste, interaction}]}.
// Attributes and covariates may be given by index or, with a dataset, by name.
json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const json& j, const ChoiceDataset* ds = nullptr);

json outcome_to_json(const EstimationOutcome& o);
json truth_to_json(const TruthRecord& t);
json tracker_to_json(const NormalizationTracker& t);
NormalizationTracker tracker_from_json(const json& j);

CsvSchema schema_from_json(const json& j);
ModellingSpace space_from_json(const json& j, const ChoiceDataset& ds);
RewardConfig reward_from_json(const json& j, const ChoiceDataset& ds, double gamma);
json reward_to_json(const RewardConfig& r, const ChoiceDataset& ds);

/// Parsed run file; space and reward stay as JSON until the dataset is known.
struct RunFileConfig {
    RunConfig run;
    std::filesystem::path data;
    CsvSchema schema;
    std::optional<double> in_sample_frac = 0.8;
    std::uint64_t split_seed = 0;
    std::filesystem::path output_dir;
    json space = json::object();
    json reward = json::object();
    std::optional<json> reference;  // spec document or truth file path
    ParetoObjective pareto_objective = ParetoObjective::aic;
    json raw;
};

/// Strict parse: unknown keys and ill-typed values raise ConfigError.
RunFileConfig parse_run_config(const json& j, const std::filesystem::path& base_dir);

extern const char* const kEpisodeColumns;
std::string episodes_csv(const std::vector<EpisodeRecord>& log);
std::vector<EpisodeRecord> parse_episodes_csv(const std::string& text);

std::string format_double(double v);

}  // namespace dcmsearch
