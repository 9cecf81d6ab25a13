#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dcmsearch/mnl_estimator.hpp"
#include "helpers.hpp"

using namespace dcmsearch;

namespace {

ModelSpec s1_truth() { return find_case("s1")->spec; }

Eigen::VectorXd random_params(const UtilityDesign& d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd p(d.n_params);
    for (std::size_t i = 0; i < d.n_params; ++i) {
        p[i] = d.params[i].kind == ParamKind::lambda ? 0.5 * u(rng) + 0.5 : u(rng);
    }
    return p;
}

// Independent LL: recomputes utilities term by term from the spec.
double oracle_ll(const ModelSpec& spec, const ChoiceDataset& ds, const UtilityDesign& d, const Eigen::VectorXd& p) {
    double ll = 0.0;
    for (std::size_t n = 0; n < ds.n_obs; ++n) {
        std::vector<double> v(ds.n_alts, 0.0);
        for (std::size_t j = 0; j < ds.n_alts; ++j) {
            for (std::size_t i = 0; i < d.n_params; ++i) {
                const auto& info = d.params[i];
                if (info.kind == ParamKind::asc && static_cast<std::size_t>(info.alt) == j) {
                    const int cov = spec.asc->interaction;
                    if (cov == kNoInteraction || ds.cov(n, cov) == info.level) v[j] += p[i];
                }
                if (info.kind != ParamKind::beta) continue;
                const auto& term = spec.terms.at(info.attr);
                if (info.alt >= 0 && static_cast<std::size_t>(info.alt) != j) continue;
                if (term.interaction != kNoInteraction && ds.cov(n, term.interaction) != info.level) continue;
                double lam = 1.0;
                for (std::size_t q = 0; q < d.n_params; ++q) {
                    if (d.params[q].kind == ParamKind::lambda && d.params[q].attr == info.attr) lam = p[q];
                }
                v[j] += p[i] * apply_transform(term.transform, ds.attr(n, j, info.attr), lam);
            }
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < ds.n_alts; ++j) {
            if (ds.available(n, j)) denom += std::exp(v[j]);
        }
        ll += v[ds.choice[n]] - std::log(denom);
    }
    return ll;
}

}  // namespace

TEST_SUITE("estimator") {

TEST_CASE("null model equals N ln(1/J)") {
    const auto ds = testutil::simulate("s1", 4000, 1).data;
    const auto d = build_design(ModelSpec{}, ds);
    CHECK(d.n_params == 0);
    const double expected = 4000.0 * std::log(1.0 / 3.0);
    CHECK(std::abs(log_likelihood(d, ds, Eigen::VectorXd(0)) - expected) <= 1e-12 * std::abs(expected));
    CHECK(std::abs(null_log_likelihood(ds) - expected) <= 1e-12 * std::abs(expected));
    const auto o = estimate(d, ds);
    CHECK(o.converged);
    CHECK(o.ll == doctest::Approx(o.ll0).epsilon(1e-14));
    CHECK(o.aic == doctest::Approx(-2 * o.ll0).epsilon(1e-14));
}

TEST_CASE("single observation hand value") {
    ChoiceDataset ds;
    ds.n_obs = 1;
    ds.n_alts = 2;
    ds.n_attrs = 1;
    ds.attr_names = {"x1"};
    ds.attrs = {1.0, 0.0};
    ds.choice = {0};
    ds.avail = {1, 1};
    ModelSpec spec;
    spec.terms[0] = Term{};
    const auto d = build_design(spec, ds);
    Eigen::VectorXd p(1);
    p << 1.0;
    const double e = std::numbers::e;
    CHECK(log_likelihood(d, ds, p) == doctest::Approx(std::log(e / (e + 1))).epsilon(1e-14));
    CHECK(log_likelihood(d, ds, p) == doctest::Approx(-0.313262).epsilon(1e-6));
}

TEST_CASE("duplicated observations double the log-likelihood") {
    const auto ds = testutil::simulate("s2", 300, 4).data;
    std::vector<std::size_t> rows;
    for (int r = 0; r < 2; ++r) {
        for (std::size_t n = 0; n < ds.n_obs; ++n) rows.push_back(n);
    }
    const auto twice = ds.subset(rows);
    const auto spec = find_case("s2")->spec;
    const auto d1 = build_design(spec, ds);
    const auto d2 = build_design(spec, twice);
    std::mt19937_64 rng(3);
    const auto p = random_params(d1, rng);
    CHECK(log_likelihood(d2, twice, p) == doctest::Approx(2 * log_likelihood(d1, ds, p)).epsilon(1e-12));
}

TEST_CASE("parameter counts and names") {
    const auto ds = testutil::simulate("s1", 50, 1).data;
    const auto d = build_design(s1_truth(), ds);
    CHECK(d.n_params == 8);
    std::vector<std::string> names;
    for (const auto& p : d.params) names.push_back(p.name);
    CHECK(names == std::vector<std::string>{"asc_alt1", "asc_alt2", "b_x1", "b_x2", "b_x3", "b_x4", "lambda_x4", "b_x5"});

    ModelSpec specific;
    specific.terms[2] = Term{Transformation::linear, Taste::specific, kNoInteraction};
    CHECK(build_design(specific, ds).n_params == 3);

    const auto s3 = testutil::simulate("s3", 50, 1);
    const auto d3 = build_design(s3.truth.spec, s3.data);
    // 2 ASC x 2 levels + 3 + 9 + 1 + 1 + 1 + 1
    CHECK(d3.n_params == 20);
    CHECK(d3.params[0].name == "asc_alt1_cov1_0");
}

TEST_CASE("equal specs give identical layouts") {
    const auto ds = testutil::simulate("s3", 40, 2).data;
    ModelSpec a, b;
    a.terms[4] = Term{Transformation::boxcox, Taste::generic, kNoInteraction};
    a.terms[1] = Term{Transformation::log1p, Taste::specific, 1};
    b.terms[1] = a.terms[1];
    b.terms[4] = a.terms[4];
    const auto da = build_design(a, ds), db = build_design(b, ds);
    REQUIRE(da.n_params == db.n_params);
    for (std::size_t i = 0; i < da.n_params; ++i) CHECK(da.params[i].name == db.params[i].name);
}

TEST_CASE("design errors") {
    const auto ds = testutil::simulate("s1", 20, 1).data;
    ModelSpec bad;
    bad.terms[6] = Term{};
    CHECK_THROWS_AS(build_design(bad, ds), DesignError);
    ModelSpec bad_cov;
    bad_cov.terms[0] = Term{Transformation::linear, Taste::generic, 0};
    CHECK_THROWS_AS(build_design(bad_cov, ds), DesignError);
}

TEST_CASE("log-likelihood matches an independent utility oracle") {
    std::mt19937_64 rng(17);
    for (const auto& id : {"s1", "s2", "s3"}) {
        const auto sim = testutil::simulate(id, 120, 8);
        const auto d = build_design(sim.truth.spec, sim.data);
        for (int r = 0; r < 5; ++r) {
            const auto p = random_params(d, rng);
            CHECK(log_likelihood(d, sim.data, p) ==
                  doctest::Approx(oracle_ll(sim.truth.spec, sim.data, d, p)).epsilon(1e-12));
        }
    }
}

TEST_CASE("unavailable alternatives are excluded") {
    auto ds = testutil::random_dataset(30, 3, 2, 0, 6);
    for (std::size_t n = 0; n < ds.n_obs; n += 3) {
        ds.avail[n * 3 + 2] = 0;
        if (ds.choice[n] == 2) ds.choice[n] = 0;
    }
    ModelSpec spec;
    spec.asc = AscTerm{};
    spec.terms[0] = Term{};
    spec.terms[1] = Term{Transformation::log1p, Taste::specific, kNoInteraction};
    const auto d = build_design(spec, ds);
    std::mt19937_64 rng(2);
    const auto p = random_params(d, rng);
    CHECK(log_likelihood(d, ds, p) == doctest::Approx(oracle_ll(spec, ds, d, p)).epsilon(1e-12));
    double null_expected = 0.0;
    for (std::size_t n = 0; n < ds.n_obs; ++n) null_expected += std::log(n % 3 == 0 ? 0.5 : 1.0 / 3.0);
    CHECK(null_log_likelihood(ds) == doctest::Approx(null_expected).epsilon(1e-14));
}

TEST_CASE("ASC gradient at zero is (observed share - 1/J) N") {
    const auto ds = testutil::simulate("s1", 900, 21).data;
    ModelSpec spec;
    spec.asc = AscTerm{};
    const auto d = build_design(spec, ds);
    const auto g = gradient(d, ds, Eigen::VectorXd::Zero(2));
    for (int j = 1; j <= 2; ++j) {
        const double count = static_cast<double>(std::count(ds.choice.begin(), ds.choice.end(), j));
        CHECK(g[j - 1] == doctest::Approx(count - 900.0 / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("analytic gradient matches central differences") {
    std::mt19937_64 rng(5);
    for (const auto& id : {"s1", "s2", "s3"}) {
        const auto sim = testutil::simulate(id, 150, 9);
        const auto d = build_design(sim.truth.spec, sim.data);
        for (int r = 0; r < 4; ++r) {
            const auto p = random_params(d, rng);
            const auto g = gradient(d, sim.data, p);
            for (std::size_t i = 0; i < d.n_params; ++i) {
                const double h = 1e-6 * std::max(1.0, std::abs(p[i]));
                auto up = p, dn = p;
                up[i] += h;
                dn[i] -= h;
                const double fd = (log_likelihood(d, sim.data, up) - log_likelihood(d, sim.data, dn)) / (2 * h);
                CHECK(std::abs(g[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
            }
        }
    }
}

TEST_CASE("identities and first-order condition at the MLE") {
    const auto sim = testutil::simulate("s2", 1500, 31);
    const auto d = build_design(sim.truth.spec, sim.data);
    const auto o = estimate(d, sim.data);
    REQUIRE(o.converged);
    CHECK(o.aic == -2 * o.ll + 2 * static_cast<double>(o.n_params));
    CHECK(o.bic == -2 * o.ll + static_cast<double>(o.n_params) * std::log(static_cast<double>(o.n_obs)));
    CHECK(o.rho2 == 1 - o.ll / o.ll0);
    CHECK(o.adj_rho2 == 1 - (o.ll - static_cast<double>(o.n_params)) / o.ll0);
    CHECK(o.ll >= log_likelihood(d, sim.data, d.initial_point()));
    Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(o.estimates.data(), o.estimates.size());
    CHECK(gradient(d, sim.data, theta).lpNorm<Eigen::Infinity>() < 1e-5);
    for (double se : o.std_errors) CHECK(se > 0.0);
}

TEST_CASE("estimation is repeatable") {
    const auto sim = testutil::simulate("s3", 600, 2);
    const auto d = build_design(sim.truth.spec, sim.data);
    const auto a = estimate(d, sim.data), b = estimate(d, sim.data);
    CHECK(a.estimates == b.estimates);
    CHECK(a.std_errors == b.std_errors);
    CHECK(a.ll == b.ll);
}

TEST_CASE("S1 truth recovery and sandwich agreement") {
    const auto sim = testutil::simulate("s1", 4000, 7);
    const auto d = build_design(sim.truth.spec, sim.data);
    const auto o = estimate(d, sim.data);
    REQUIRE(o.converged);
    std::size_t within = 0;
    for (std::size_t i = 0; i < o.n_params; ++i) {
        if (std::abs(o.estimates[i] - sim.truth.params[i]) <= 3 * o.std_errors[i]) ++within;
        CHECK(o.robust_std_errors[i] > 0.0);
        CHECK(std::abs(o.robust_std_errors[i] / o.std_errors[i] - 1.0) < 0.25);
    }
    CHECK(within == o.n_params);
}

TEST_CASE("degenerate covariate interaction fails to converge") {
    auto ds = testutil::random_dataset(400, 3, 1, 1, 12);
    // Declare two levels but observe only one: the level-1 constants are unidentified.
    for (auto& c : ds.covs) c = 0;
    ModelSpec spec;
    spec.asc = AscTerm{0};
    spec.terms[0] = Term{};
    const auto o = estimate(build_design(spec, ds), ds);
    CHECK_FALSE(o.converged);
    CHECK(o.estimates.size() == 5);
}

TEST_CASE("zero-parameter sandwich is empty") {
    const auto ds = testutil::random_dataset(20, 3, 1, 0, 1);
    const auto d = build_design(ModelSpec{}, ds);
    const auto s = sandwich_se(d, ds, Eigen::VectorXd(0));
    CHECK(s.std_errors.empty());
    CHECK(s.ok);
}

TEST_CASE("box-cox shift for non-positive attributes") {
    auto ds = testutil::random_dataset(300, 3, 1, 0, 8);
    for (std::size_t n = 0; n < ds.n_obs; n += 7) ds.attrs[n * 3] = 0.0;
    ModelSpec spec;
    spec.terms[0] = Term{Transformation::boxcox, Taste::generic, kNoInteraction};
    const auto d = build_design(spec, ds);
    CHECK(d.terms[0].shift == 1.0);
    const auto o = estimate(d, ds);
    CHECK(o.boxcox_shift.at("x1") == 1.0);

    ModelSpec lin;
    lin.terms[0] = Term{};
    CHECK(build_design(lin, ds).terms[0].shift == 0.0);
}

TEST_CASE("overflowing utilities give a non-finite likelihood, not a crash") {
    const auto ds = testutil::random_dataset(10, 3, 1, 0, 2);
    ModelSpec spec;
    spec.terms[0] = Term{Transformation::boxcox, Taste::generic, kNoInteraction};
    const auto d = build_design(spec, ds);
    Eigen::VectorXd p(2);
    p << 1.0, 900.0;
    CHECK_FALSE(std::isfinite(log_likelihood(d, ds, p)));
}

}
