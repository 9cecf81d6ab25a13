#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcmsearch/dataset.hpp"
#include "dcmsearch/modelling_space.hpp"
#include "dcmsearch/transform.hpp"

namespace dcmsearch {

class DesignError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ParamKind { asc, beta, lambda };

struct ParamInfo {
    std::string name;
    ParamKind kind = ParamKind::beta;
    int attr = -1;   // -1 for ASCs
    int alt = -1;    // -1 for generic coefficients and lambdas
    int level = -1;  // covariate level, -1 without interaction
};

/// A spec decoded against one dataset: the parameter layout plus the
/// transformed attribute columns that do not depend on parameters.
///
/// Layout: ASC block first (alternatives 1..J-1, alternative-major, expanded
/// per covariate level), then per term in ascending attribute order its beta
/// block (alternative-major, then level) followed by its lambda if Box-Cox.
struct UtilityDesign {
    struct AscBlock {
        std::size_t offset = 0;
        int covariate = kNoInteraction;
        std::size_t levels = 1;
    };
    struct TermBlock {
        std::size_t attr = 0;
        Transformation transform = Transformation::linear;
        Taste taste = Taste::generic;
        int covariate = kNoInteraction;
        std::size_t levels = 1;
        std::size_t beta_offset = 0;
        std::optional<std::size_t> lambda_index;
        double shift = 0.0;          // added before Box-Cox only
        std::vector<double> values;  // [obs][alt]: f(x) for linear/log, shifted x for Box-Cox
    };

    ModelSpec spec;
    std::size_t n_obs = 0;
    std::size_t n_alts = 0;
    std::optional<AscBlock> asc;
    std::vector<TermBlock> terms;
    std::vector<ParamInfo> params;
    std::size_t n_params = 0;

    /// Starting point: zeros, with lambda = 1.
    Eigen::VectorXd initial_point() const;
};

/// Throws DesignError when the spec leaves the space or the dataset.
UtilityDesign build_design(const ModelSpec& spec, const ModellingSpace& space, const ChoiceDataset& ds);
/// Same, checked only against the dataset's dimensions.
UtilityDesign build_design(const ModelSpec& spec, const ChoiceDataset& ds);

/// Deterministic utilities V[n][j] for one observation (unavailable
/// alternatives included).
void utilities(const UtilityDesign& design, const ChoiceDataset& ds, const Eigen::VectorXd& params,
               std::size_t n, std::vector<double>& v);

double null_log_likelihood(const ChoiceDataset& ds);

/// Sum of log choice probabilities; NaN when utilities are non-finite.
double log_likelihood(const UtilityDesign& design, const ChoiceDataset& ds, const Eigen::VectorXd& params);

/// Analytic dLL/dtheta.
Eigen::VectorXd gradient(const UtilityDesign& design, const ChoiceDataset& ds, const Eigen::VectorXd& params);

/// LL and its gradient in one pass. Optionally fills per-observation scores (N x P).
double log_likelihood_and_gradient(const UtilityDesign& design, const ChoiceDataset& ds,
                                   const Eigen::VectorXd& params, Eigen::VectorXd* grad,
                                   Eigen::MatrixXd* scores = nullptr);

/// Central differences of the analytic gradient, symmetrised.
Eigen::MatrixXd numerical_hessian(const UtilityDesign& design, const ChoiceDataset& ds,
                                  const Eigen::VectorXd& params, double rel_step = 1e-5);

struct EstimatorOptions {
    double grad_tol = 1e-6;
    int max_iterations = 500;
    double time_budget_s = 30.0;
    double hessian_step = 1e-5;
};

struct EstimationOutcome {
    double ll = 0.0;
    double ll0 = 0.0;
    double rho2 = 0.0;
    double adj_rho2 = 0.0;
    double aic = 0.0;
    double bic = 0.0;
    std::size_t n_params = 0;
    std::vector<ParamInfo> params;
    std::vector<double> estimates;
    std::vector<double> std_errors;
    std::vector<double> robust_std_errors;
    bool converged = false;
    double est_time = 0.0;  // seconds
    std::size_t n_obs = 0;

    int iterations = 0;
    double grad_norm = 0.0;  // max-norm at the returned point
    std::map<std::string, double> boxcox_shift;
    std::string message;

    std::optional<double> estimate(const std::string& name) const;
    std::optional<double> std_error(const std::string& name) const;
};

/// Fills ll0/rho2/adj_rho2/aic/bic from ll, n_params and n_obs.
void fill_fit_statistics(EstimationOutcome& out);

/// Maximum likelihood by BFGS with Armijo backtracking. Never throws on
/// numerical failure; such fits come back with converged = false.
EstimationOutcome estimate(const UtilityDesign& design, const ChoiceDataset& ds, const EstimatorOptions& opts = {});

struct SandwichResult {
    std::vector<double> std_errors;
    bool ok = true;  // false when the Hessian is singular / not negative definite
};

/// sqrt(diag(H^-1 B H^-1)) with H the numerical Hessian and B the outer
/// product of per-observation scores.
SandwichResult sandwich_se(const UtilityDesign& design, const ChoiceDataset& ds, const Eigen::VectorXd& params,
                           double rel_step = 1e-5);

}  // namespace dcmsearch
