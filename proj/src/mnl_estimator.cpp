#include "dcmsearch/mnl_estimator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace dcmsearch {

namespace {

std::string attr_label(const ChoiceDataset& ds, std::size_t k) {
    return k < ds.attr_names.size() && !ds.attr_names[k].empty() ? ds.attr_names[k] : "x" + std::to_string(k);
}

std::string level_label(const ChoiceDataset& ds, int c, std::size_t level) {
    const auto cu = static_cast<std::size_t>(c);
    std::string name = cu < ds.cov_names.size() && !ds.cov_names[cu].empty() ? ds.cov_names[cu] : "cov" + std::to_string(c);
    long long code = static_cast<long long>(level);
    if (cu < ds.cov_codes.size() && level < ds.cov_codes[cu].size()) code = ds.cov_codes[cu][level];
    return name + "_" + std::to_string(code);
}

std::size_t covariate_levels(const ChoiceDataset& ds, int c) {
    if (c == kNoInteraction) return 1;
    if (c < 0 || static_cast<std::size_t>(c) >= ds.n_covs) {
        throw DesignError("spec interacts with covariate " + std::to_string(c) + " which the dataset lacks");
    }
    return static_cast<std::size_t>(ds.cov_levels[static_cast<std::size_t>(c)]);
}

// Box-Cox columns evaluated at the current lambdas; empty for other terms.
struct BoxCoxCache {
    std::vector<std::vector<double>> f, df;
};

bool fill_boxcox(const UtilityDesign& d, const Eigen::VectorXd& p, bool need_df, BoxCoxCache& cache) {
    cache.f.assign(d.terms.size(), {});
    cache.df.assign(d.terms.size(), {});
    for (std::size_t t = 0; t < d.terms.size(); ++t) {
        const auto& tb = d.terms[t];
        if (tb.transform != Transformation::boxcox) continue;
        const double lambda = p[static_cast<Eigen::Index>(*tb.lambda_index)];
        if (!std::isfinite(lambda)) return false;
        auto& f = cache.f[t];
        f.resize(tb.values.size());
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = apply_transform(Transformation::boxcox, tb.values[i], lambda);
        if (need_df) {
            auto& df = cache.df[t];
            df.resize(tb.values.size());
            for (std::size_t i = 0; i < df.size(); ++i) df[i] = transform_dlambda(tb.values[i], lambda);
        }
    }
    return true;
}

inline std::size_t asc_index(const UtilityDesign::AscBlock& a, std::size_t j, std::size_t level) {
    return a.offset + (j - 1) * a.levels + level;
}

inline std::size_t beta_index(const UtilityDesign::TermBlock& tb, std::size_t j, std::size_t level) {
    const std::size_t alt = tb.taste == Taste::specific ? j : 0;
    return tb.beta_offset + alt * tb.levels + level;
}

inline std::size_t level_of(const ChoiceDataset& ds, int covariate, std::size_t n) {
    return covariate == kNoInteraction ? 0 : static_cast<std::size_t>(ds.cov(n, static_cast<std::size_t>(covariate)));
}

void check_dims(const UtilityDesign& d, const ChoiceDataset& ds, const Eigen::VectorXd& p) {
    if (d.n_obs != ds.n_obs || d.n_alts != ds.n_alts) {
        throw DesignError("design was built for a different dataset");
    }
    if (static_cast<std::size_t>(p.size()) != d.n_params) throw DesignError("parameter vector has the wrong length");
}

}  // namespace

Eigen::VectorXd UtilityDesign::initial_point() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params));
    for (const auto& tb : terms) {
        if (tb.lambda_index) x[static_cast<Eigen::Index>(*tb.lambda_index)] = 1.0;
    }
    return x;
}

UtilityDesign build_design(const ModelSpec& spec, const ModellingSpace& space, const ChoiceDataset& ds) {
    if (space.n_attrs != ds.n_attrs) {
        throw DesignError("modelling space has " + std::to_string(space.n_attrs) + " attributes, dataset has " +
                          std::to_string(ds.n_attrs));
    }
    if (!in_space(space, spec)) throw DesignError("spec lies outside the modelling space");
    return build_design(spec, ds);
}

UtilityDesign build_design(const ModelSpec& spec, const ChoiceDataset& ds) {
    UtilityDesign d;
    d.spec = spec;
    d.n_obs = ds.n_obs;
    d.n_alts = ds.n_alts;
    const std::size_t J = ds.n_alts;
    std::size_t offset = 0;

    if (spec.asc) {
        UtilityDesign::AscBlock a;
        a.offset = offset;
        a.covariate = spec.asc->interaction;
        a.levels = covariate_levels(ds, a.covariate);
        for (std::size_t j = 1; j < J; ++j) {
            for (std::size_t l = 0; l < a.levels; ++l) {
                ParamInfo p{"asc_alt" + std::to_string(j), ParamKind::asc, -1, static_cast<int>(j), -1};
                if (a.covariate != kNoInteraction) {
                    p.name += "_" + level_label(ds, a.covariate, l);
                    p.level = static_cast<int>(l);
                }
                d.params.push_back(std::move(p));
            }
        }
        offset += (J - 1) * a.levels;
        d.asc = a;
    }

    for (const auto& [k, term] : spec.terms) {
        if (k >= ds.n_attrs) throw DesignError("spec references attribute " + std::to_string(k) + " outside the dataset");
        UtilityDesign::TermBlock tb;
        tb.attr = k;
        tb.transform = term.transform;
        tb.taste = term.taste;
        tb.covariate = term.interaction;
        tb.levels = covariate_levels(ds, term.interaction);
        tb.beta_offset = offset;
        const std::string label = attr_label(ds, k);
        const std::size_t n_alt_blocks = term.taste == Taste::specific ? J : 1;
        for (std::size_t a = 0; a < n_alt_blocks; ++a) {
            for (std::size_t l = 0; l < tb.levels; ++l) {
                ParamInfo p{"b_" + label, ParamKind::beta, static_cast<int>(k), -1, -1};
                if (term.taste == Taste::specific) {
                    p.name += "_alt" + std::to_string(a);
                    p.alt = static_cast<int>(a);
                }
                if (tb.covariate != kNoInteraction) {
                    p.name += "_" + level_label(ds, tb.covariate, l);
                    p.level = static_cast<int>(l);
                }
                d.params.push_back(std::move(p));
            }
        }
        offset += n_alt_blocks * tb.levels;

        tb.values.resize(ds.n_obs * J);
        if (term.transform == Transformation::boxcox) {
            double lo = std::numeric_limits<double>::infinity();
            for (std::size_t n = 0; n < ds.n_obs; ++n) {
                for (std::size_t j = 0; j < J; ++j) lo = std::min(lo, ds.attr(n, j, k));
            }
            tb.shift = lo <= 0.0 ? 1.0 : 0.0;
            if (lo + tb.shift <= 0.0) {
                throw DesignError("attribute " + label + " has negative values and cannot be Box-Cox transformed");
            }
            tb.lambda_index = offset++;
            d.params.push_back({"lambda_" + label, ParamKind::lambda, static_cast<int>(k), -1, -1});
        }
        for (std::size_t n = 0; n < ds.n_obs; ++n) {
            for (std::size_t j = 0; j < J; ++j) {
                const double x = ds.attr(n, j, k);
                try {
                    tb.values[n * J + j] =
                        term.transform == Transformation::boxcox ? x + tb.shift : apply_transform(term.transform, x);
                } catch (const DomainError&) {
                    throw DesignError("attribute " + label + " lies outside the domain of the " +
                                      std::string(to_string(term.transform)) + " transform");
                }
            }
        }
        d.terms.push_back(std::move(tb));
    }
    d.n_params = offset;
    return d;
}

void utilities(const UtilityDesign& d, const ChoiceDataset& ds, const Eigen::VectorXd& p, std::size_t n,
               std::vector<double>& v) {
    const std::size_t J = d.n_alts;
    v.assign(J, 0.0);
    if (d.asc) {
        const std::size_t l = level_of(ds, d.asc->covariate, n);
        for (std::size_t j = 1; j < J; ++j) v[j] += p[static_cast<Eigen::Index>(asc_index(*d.asc, j, l))];
    }
    for (const auto& tb : d.terms) {
        const std::size_t l = level_of(ds, tb.covariate, n);
        for (std::size_t j = 0; j < J; ++j) {
            double f = tb.values[n * J + j];
            if (tb.transform == Transformation::boxcox) {
                f = apply_transform(Transformation::boxcox, f, p[static_cast<Eigen::Index>(*tb.lambda_index)]);
            }
            v[j] += p[static_cast<Eigen::Index>(beta_index(tb, j, l))] * f;
        }
    }
}

double null_log_likelihood(const ChoiceDataset& ds) {
    double ll0 = 0.0;
    for (std::size_t n = 0; n < ds.n_obs; ++n) {
        std::size_t k = 0;
        for (std::size_t j = 0; j < ds.n_alts; ++j) k += ds.available(n, j) ? 1 : 0;
        ll0 -= std::log(static_cast<double>(k));
    }
    return ll0;
}

double log_likelihood_and_gradient(const UtilityDesign& d, const ChoiceDataset& ds, const Eigen::VectorXd& p,
                                   Eigen::VectorXd* grad, Eigen::MatrixXd* scores) {
    check_dims(d, ds, p);
    const std::size_t J = d.n_alts;
    const bool want_grad = grad != nullptr || scores != nullptr;
    const auto P = static_cast<Eigen::Index>(d.n_params);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (grad) grad->setZero(P);
    if (scores) scores->setZero(static_cast<Eigen::Index>(d.n_obs), P);

    BoxCoxCache bc;
    if (!fill_boxcox(d, p, want_grad, bc)) {
        if (grad) grad->setConstant(P, nan);
        return nan;
    }

    std::vector<double> v(J), prob(J);
    Eigen::VectorXd local = Eigen::VectorXd::Zero(P);
    double ll = 0.0;
    for (std::size_t n = 0; n < d.n_obs; ++n) {
        std::fill(v.begin(), v.end(), 0.0);
        const std::size_t asc_level = d.asc ? level_of(ds, d.asc->covariate, n) : 0;
        if (d.asc) {
            for (std::size_t j = 1; j < J; ++j) v[j] += p[static_cast<Eigen::Index>(asc_index(*d.asc, j, asc_level))];
        }
        for (std::size_t t = 0; t < d.terms.size(); ++t) {
            const auto& tb = d.terms[t];
            const std::size_t l = level_of(ds, tb.covariate, n);
            const auto& col = tb.transform == Transformation::boxcox ? bc.f[t] : tb.values;
            for (std::size_t j = 0; j < J; ++j) v[j] += p[static_cast<Eigen::Index>(beta_index(tb, j, l))] * col[n * J + j];
        }
        double vmax = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < J; ++j) {
            if (!ds.available(n, j)) continue;
            if (!std::isfinite(v[j])) {
                if (grad) grad->setConstant(P, nan);
                return nan;
            }
            vmax = std::max(vmax, v[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            prob[j] = ds.available(n, j) ? std::exp(v[j] - vmax) : 0.0;
            denom += prob[j];
        }
        const auto chosen = static_cast<std::size_t>(ds.choice[n]);
        ll += v[chosen] - vmax - std::log(denom);
        if (!want_grad) continue;

        local.setZero();
        for (std::size_t j = 0; j < J; ++j) {
            if (!ds.available(n, j)) continue;
            const double w = (j == chosen ? 1.0 : 0.0) - prob[j] / denom;
            if (d.asc && j > 0) local[static_cast<Eigen::Index>(asc_index(*d.asc, j, asc_level))] += w;
            for (std::size_t t = 0; t < d.terms.size(); ++t) {
                const auto& tb = d.terms[t];
                const std::size_t l = level_of(ds, tb.covariate, n);
                const std::size_t bi = beta_index(tb, j, l);
                if (tb.transform == Transformation::boxcox) {
                    local[static_cast<Eigen::Index>(bi)] += w * bc.f[t][n * J + j];
                    local[static_cast<Eigen::Index>(*tb.lambda_index)] +=
                        w * p[static_cast<Eigen::Index>(bi)] * bc.df[t][n * J + j];
                } else {
                    local[static_cast<Eigen::Index>(bi)] += w * tb.values[n * J + j];
                }
            }
        }
        if (grad) *grad += local;
        if (scores) scores->row(static_cast<Eigen::Index>(n)) = local.transpose();
    }
    return ll;
}

double log_likelihood(const UtilityDesign& d, const ChoiceDataset& ds, const Eigen::VectorXd& p) {
    return log_likelihood_and_gradient(d, ds, p, nullptr);
}

Eigen::VectorXd gradient(const UtilityDesign& d, const ChoiceDataset& ds, const Eigen::VectorXd& p) {
    Eigen::VectorXd g;
    log_likelihood_and_gradient(d, ds, p, &g);
    return g;
}

Eigen::MatrixXd numerical_hessian(const UtilityDesign& d, const ChoiceDataset& ds, const Eigen::VectorXd& p,
                                  double rel_step) {
    const auto P = p.size();
    Eigen::MatrixXd h(P, P);
    Eigen::VectorXd x = p, gp, gm;
    for (Eigen::Index i = 0; i < P; ++i) {
        const double step = rel_step * std::max(1.0, std::abs(p[i]));
        x[i] = p[i] + step;
        log_likelihood_and_gradient(d, ds, x, &gp);
        x[i] = p[i] - step;
        log_likelihood_and_gradient(d, ds, x, &gm);
        x[i] = p[i];
        h.col(i) = (gp - gm) / (2.0 * step);
    }
    return 0.5 * (h + h.transpose());
}

std::optional<double> EstimationOutcome::estimate(const std::string& name) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name == name) return estimates[i];
    }
    return std::nullopt;
}

std::optional<double> EstimationOutcome::std_error(const std::string& name) const {
    for (std::size_t i = 0; i < params.size() && i < std_errors.size(); ++i) {
        if (params[i].name == name) return std_errors[i];
    }
    return std::nullopt;
}

void fill_fit_statistics(EstimationOutcome& o) {
    const double k = static_cast<double>(o.n_params);
    o.rho2 = 1.0 - o.ll / o.ll0;
    o.adj_rho2 = 1.0 - (o.ll - k) / o.ll0;
    o.aic = -2.0 * o.ll + 2.0 * k;
    o.bic = -2.0 * o.ll + k * std::log(static_cast<double>(o.n_obs));
}

namespace {

struct Objective {
    const UtilityDesign& d;
    const ChoiceDataset& ds;
    // Minimised function: -LL. Non-finite values map to +inf.
    double operator()(const Eigen::VectorXd& x, Eigen::VectorXd* g) const {
        Eigen::VectorXd gl;
        const double ll = log_likelihood_and_gradient(d, ds, x, g ? &gl : nullptr);
        if (!std::isfinite(ll) || (g && !gl.allFinite())) return std::numeric_limits<double>::infinity();
        if (g) *g = -gl;
        return -ll;
    }
};

}  // namespace

EstimationOutcome estimate(const UtilityDesign& d, const ChoiceDataset& ds, const EstimatorOptions& opts) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

    EstimationOutcome out;
    out.n_obs = ds.n_obs;
    out.n_params = d.n_params;
    out.params = d.params;
    out.ll0 = null_log_likelihood(ds);
    for (const auto& tb : d.terms) {
        if (tb.transform == Transformation::boxcox) {
            out.boxcox_shift[tb.attr < ds.attr_names.size() ? ds.attr_names[tb.attr] : "x" + std::to_string(tb.attr)] =
                tb.shift;
        }
    }

    const Objective f{d, ds};
    Eigen::VectorXd x = d.initial_point();
    Eigen::VectorXd g;
    double fx = f(x, &g);
    if (!std::isfinite(fx)) {
        out.ll = std::numeric_limits<double>::quiet_NaN();
        out.message = "non-finite likelihood at the initial point";
        fill_fit_statistics(out);
        out.est_time = elapsed();
        return out;
    }

    const auto P = static_cast<Eigen::Index>(d.n_params);
    bool grad_ok = P == 0 || g.lpNorm<Eigen::Infinity>() < opts.grad_tol;
    bool budget_hit = false;
    int iter = 0;
    if (!grad_ok) {
        Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(P, P) / std::max(1.0, g.norm());
        bool scaled = false;
        constexpr double c1 = 1e-4;
        for (; iter < opts.max_iterations; ++iter) {
            if (elapsed() > opts.time_budget_s) {
                budget_hit = true;
                break;
            }
            Eigen::VectorXd dir = -hinv * g;
            double slope = g.dot(dir);
            if (!(slope < 0.0)) {
                hinv = Eigen::MatrixXd::Identity(P, P) / std::max(1.0, g.norm());
                dir = -hinv * g;
                slope = g.dot(dir);
            }
            // Armijo backtracking; the small absolute allowance absorbs round-off in
            // the summed likelihood once improvements fall below its resolution.
            const double noise = 1e-13 * (1.0 + std::abs(fx));
            double alpha = 1.0, f_new = 0.0;
            Eigen::VectorXd x_new, g_new;
            bool accepted = false;
            for (int ls = 0; ls < 60; ++ls) {
                x_new = x + alpha * dir;
                f_new = f(x_new, &g_new);
                if (std::isfinite(f_new) && f_new <= fx + c1 * alpha * slope + noise) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) {
                out.message = "line search failed";
                break;
            }
            const Eigen::VectorXd s = x_new - x;
            const Eigen::VectorXd y = g_new - g;
            x = std::move(x_new);
            g = std::move(g_new);
            fx = f_new;
            if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
                grad_ok = true;
                ++iter;
                break;
            }
            const double sy = s.dot(y);
            if (sy > 1e-12 * s.norm() * y.norm()) {
                if (!scaled) {
                    hinv = Eigen::MatrixXd::Identity(P, P) * (sy / y.squaredNorm());
                    scaled = true;
                }
                const double rho = 1.0 / sy;
                const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(P, P);
                hinv = (I - rho * s * y.transpose()) * hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
            }
        }
        if (!grad_ok && out.message.empty()) out.message = budget_hit ? "time budget exhausted" : "iteration limit reached";
    }

    out.iterations = iter;
    out.ll = -fx;
    out.grad_norm = P == 0 ? 0.0 : g.lpNorm<Eigen::Infinity>();
    out.estimates.assign(x.data(), x.data() + x.size());
    fill_fit_statistics(out);

    bool se_ok = true;
    if (P > 0) {
        const Eigen::MatrixXd h = numerical_hessian(d, ds, x, opts.hessian_step);
        Eigen::LLT<Eigen::MatrixXd> llt(-h);
        if (!h.allFinite() || llt.info() != Eigen::Success) {
            se_ok = false;
            out.std_errors.assign(static_cast<std::size_t>(P), std::numeric_limits<double>::quiet_NaN());
            out.robust_std_errors = out.std_errors;
            if (out.message.empty()) out.message = "Hessian not negative definite";
        } else {
            const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(P, P));
            Eigen::MatrixXd scores;
            Eigen::VectorXd unused;
            log_likelihood_and_gradient(d, ds, x, &unused, &scores);
            const Eigen::MatrixXd meat = scores.transpose() * scores;
            const Eigen::MatrixXd robust = cov * meat * cov;
            for (Eigen::Index i = 0; i < P; ++i) {
                const double se = std::sqrt(cov(i, i));
                const double rse = std::sqrt(robust(i, i));
                out.std_errors.push_back(se);
                out.robust_std_errors.push_back(rse);
                if (!(std::isfinite(se) && se > 0.0 && std::isfinite(rse) && rse > 0.0)) se_ok = false;
            }
            if (!se_ok && out.message.empty()) out.message = "non-finite standard errors";
        }
    }

    out.converged = grad_ok && se_ok && std::isfinite(out.ll) && out.ll >= out.ll0 - 1e-6;
    if (out.converged) out.message = "converged";
    out.est_time = elapsed();
    return out;
}

SandwichResult sandwich_se(const UtilityDesign& d, const ChoiceDataset& ds, const Eigen::VectorXd& params,
                           double rel_step) {
    SandwichResult r;
    const auto P = params.size();
    if (P == 0) return r;
    const Eigen::MatrixXd h = numerical_hessian(d, ds, params, rel_step);
    Eigen::LLT<Eigen::MatrixXd> llt(-h);
    if (!h.allFinite() || llt.info() != Eigen::Success) {
        r.ok = false;
        return r;
    }
    const Eigen::MatrixXd hinv = llt.solve(Eigen::MatrixXd::Identity(P, P));
    Eigen::MatrixXd scores;
    Eigen::VectorXd g;
    log_likelihood_and_gradient(d, ds, params, &g, &scores);
    const Eigen::MatrixXd cov = hinv * (scores.transpose() * scores) * hinv;
    for (Eigen::Index i = 0; i < P; ++i) {
        const double se = std::sqrt(cov(i, i));
        if (!(std::isfinite(se) && se > 0.0)) r.ok = false;
        r.std_errors.push_back(se);
    }
    return r;
}

}  // namespace dcmsearch
