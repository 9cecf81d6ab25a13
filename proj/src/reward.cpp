#include "dcmsearch/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dcmsearch {

namespace {
double clamp01(double v) { return std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0; }
}  // namespace

std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::ll: return "ll";
        case Metric::adj_rho2: return "adj_rho2";
        case Metric::rho2: return "rho2";
        case Metric::aic: return "aic";
        case Metric::bic: return "bic";
        case Metric::n_params: return "n_params";
    }
    return "?";
}

Metric metric_from_string(std::string_view s) {
    for (Metric m : {Metric::ll, Metric::adj_rho2, Metric::rho2, Metric::aic, Metric::bic, Metric::n_params}) {
        if (to_string(m) == s) return m;
    }
    throw std::invalid_argument("unknown reward metric '" + std::string(s) + "'");
}

RewardConfig RewardConfig::make(std::map<Metric, double> weights, std::vector<BehaviouralConstraint> constraints,
                                double gamma) {
    double total = 0.0;
    for (const auto& [m, w] : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("reward weights must be non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("at least one reward metric needs a positive weight");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
    RewardConfig c;
    for (const auto& [m, w] : weights) {
        if (w > 0.0) c.weights[m] = w / total;
    }
    c.constraints = std::move(constraints);
    c.gamma = gamma;
    return c;
}

void NormalizationTracker::observe_ll(double ll) {
    if (std::isfinite(ll)) ll_max = std::max(ll_max, ll);
}

void NormalizationTracker::observe_ic(Metric kind, double value) {
    if (!std::isfinite(value)) return;
    auto& slot = kind == Metric::aic ? aic_min : bic_min;
    slot = slot ? std::min(*slot, value) : value;
}

void NormalizationTracker::observe_n_params(std::size_t k) {
    n_params_min = n_params_min ? std::min(*n_params_min, k) : k;
    n_params_max = n_params_max ? std::max(*n_params_max, k) : k;
}

void NormalizationTracker::observe(const EstimationOutcome& o) {
    observe_ll(o.ll);
    observe_ic(Metric::aic, o.aic);
    observe_ic(Metric::bic, o.bic);
    observe_n_params(o.n_params);
}

double NormalizationTracker::ll_score(double ll) const {
    if (!(ll > ll0) || !(ll_max > ll0)) return 0.0;
    return clamp01((ll - ll0) / (ll_max - ll0));
}

double NormalizationTracker::ic_score(Metric kind, double value) const {
    const double worst = -2.0 * ll0;
    const auto& best = kind == Metric::aic ? aic_min : bic_min;
    if (!(value < worst) || !best || !(*best < worst)) return 0.0;
    return clamp01((worst - value) / (worst - *best));
}

double NormalizationTracker::n_params_score(std::size_t k) const {
    if (!n_params_min || !n_params_max || *n_params_max == *n_params_min) return 1.0;
    const double lo = static_cast<double>(*n_params_min), hi = static_cast<double>(*n_params_max);
    return clamp01((hi - static_cast<double>(k)) / (hi - lo));
}

double normalize_ll(double ll, NormalizationTracker& tracker) {
    tracker.observe_ll(ll);
    return tracker.ll_score(ll);
}

double normalize_ic(double value, Metric kind, NormalizationTracker& tracker) {
    tracker.observe_ic(kind, value);
    return tracker.ic_score(kind, value);
}

bool check_constraints(const EstimationOutcome& o, const std::vector<BehaviouralConstraint>& constraints) {
    for (const auto& c : constraints) {
        for (std::size_t i = 0; i < o.params.size() && i < o.estimates.size(); ++i) {
            const auto& p = o.params[i];
            const bool match = c.target == BehaviouralConstraint::kAscTarget
                                   ? p.kind == ParamKind::asc
                                   : p.kind == ParamKind::beta && p.attr == c.target;
            if (!match) continue;
            const double v = o.estimates[i];
            const bool ok = c.expected == Sign::negative ? v < 0.0 : v > 0.0;
            if (!ok) return false;
        }
    }
    return true;
}

namespace {

double weighted_score(const EstimationOutcome& o, const RewardConfig& config, const NormalizationTracker& t) {
    double r = 0.0;
    for (const auto& [m, w] : config.weights) {
        double s = 0.0;
        switch (m) {
            case Metric::ll: s = t.ll_score(o.ll); break;
            case Metric::adj_rho2: s = clamp01(o.adj_rho2); break;
            case Metric::rho2: s = clamp01(o.rho2); break;
            case Metric::aic: s = t.ic_score(Metric::aic, o.aic); break;
            case Metric::bic: s = t.ic_score(Metric::bic, o.bic); break;
            case Metric::n_params: s = t.n_params_score(o.n_params); break;
        }
        r += w * s;
    }
    return clamp01(r);
}

}  // namespace

double episode_reward(const EstimationOutcome& o, const RewardConfig& config, NormalizationTracker& tracker) {
    if (!o.converged || !std::isfinite(o.ll)) return 0.0;
    if (!check_constraints(o, config.constraints)) return 0.0;
    tracker.observe(o);
    return weighted_score(o, config, tracker);
}

double score_outcome(const EstimationOutcome& o, const RewardConfig& config, NormalizationTracker tracker) {
    return episode_reward(o, config, tracker);
}

std::vector<double> credit_assign(double reward, std::size_t length, double gamma) {
    std::vector<double> r(length);
    for (std::size_t l = 0; l < length; ++l) r[l] = std::pow(gamma, static_cast<double>(length - 1 - l)) * reward;
    return r;
}

}  // namespace dcmsearch
