#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcmsearch/mnl_estimator.hpp"

namespace dcmsearch {

enum class Metric { ll, adj_rho2, rho2, aic, bic, n_params };

std::string_view to_string(Metric m);
Metric metric_from_string(std::string_view s);

enum class Sign { negative, positive };

/// Every coefficient of the target (all alternatives and covariate levels)
/// must carry the expected strict sign. kAscTarget targets the constants.
struct BehaviouralConstraint {
    static constexpr int kAscTarget = -1;
    int target = 0;
    Sign expected = Sign::negative;
};

struct RewardConfig {
    std::map<Metric, double> weights;  // normalised to sum 1 by make()
    std::vector<BehaviouralConstraint> constraints;
    double gamma = 0.99;

    /// Validates and normalises the weights; throws std::invalid_argument.
    static RewardConfig make(std::map<Metric, double> weights, std::vector<BehaviouralConstraint> constraints = {},
                             double gamma = 0.99);
};

/// Running extremes used for min-max normalisation. Only moves towards
/// better values.
struct NormalizationTracker {
    double ll0 = 0.0;
    double ll_max = 0.0;
    std::optional<double> aic_min;
    std::optional<double> bic_min;
    std::optional<std::size_t> n_params_min;
    std::optional<std::size_t> n_params_max;

    explicit NormalizationTracker(double null_ll = 0.0) : ll0(null_ll), ll_max(null_ll) {}

    void observe(const EstimationOutcome& o);
    void observe_ll(double ll);
    void observe_ic(Metric kind, double value);
    void observe_n_params(std::size_t k);

    // Scores against the current extremes, without updating them.
    double ll_score(double ll) const;
    double ic_score(Metric kind, double value) const;
    double n_params_score(std::size_t k) const;
};

/// Update-first normalisers: the tracker absorbs the value, then scores it.
double normalize_ll(double ll, NormalizationTracker& tracker);
double normalize_ic(double value, Metric kind, NormalizationTracker& tracker);

bool check_constraints(const EstimationOutcome& outcome, const std::vector<BehaviouralConstraint>& constraints);

/// Weighted normalised metrics, zeroed for non-converged or sign-violating
/// outcomes. Admissible outcomes update the tracker before scoring.
double episode_reward(const EstimationOutcome& outcome, const RewardConfig& config, NormalizationTracker& tracker);

/// Score against a frozen tracker (copy updated first, as episode_reward would).
double score_outcome(const EstimationOutcome& outcome, const RewardConfig& config, NormalizationTracker tracker);

/// r[l] = gamma^(L-1-l) * reward for l = 0..L-1.
std::vector<double> credit_assign(double reward, std::size_t length, double gamma);

}  // namespace dcmsearch
