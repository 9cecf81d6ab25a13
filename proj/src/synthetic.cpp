#include "dcmsearch/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <sstream>

#include "dcmsearch/mnl_estimator.hpp"

namespace dcmsearch {

namespace {

constexpr auto lin = Transformation::linear;
constexpr auto log_ = Transformation::log1p;
constexpr auto bc = Transformation::boxcox;
constexpr auto gen = Taste::generic;
constexpr auto spc = Taste::specific;

TrueCase s1() {
    TrueCase c;
    c.id = "s1";
    c.space.n_attrs = 6;
    c.space.tastes = {gen};
    c.spec.asc = AscTerm{};
    c.spec.terms = {{0, {lin, gen}}, {1, {log_, gen}}, {2, {lin, gen}}, {3, {bc, gen}}, {4, {lin, gen}}};
    // asc_alt1, asc_alt2, b_x1, b_x2, b_x3, b_x4, lambda_x4, b_x5
    c.params = {-0.95, 0.84, -0.72, 0.83, 1.77, 1.01, 0.20, 1.90};
    return c;
}

TrueCase s2() {
    TrueCase c;
    c.id = "s2";
    c.space.n_attrs = 6;
    c.space.tastes = {gen, spc};
    c.spec.asc = AscTerm{};
    c.spec.terms = {{0, {log_, spc}}, {1, {bc, gen}}, {2, {lin, spc}}, {3, {lin, gen}}};
    c.params = {-0.95, 0.84,            // ASCs
                -1.65, -1.65, -1.65,    // b_x1 per alternative
                -1.33, 0.64,            // b_x2, lambda_x2
                0.57,  0.57,  0.57,     // b_x3 per alternative
                0.92};                  // b_x4
    return c;
}

TrueCase s3() {
    TrueCase c;
    c.id = "s3";
    c.space.n_attrs = 6;
    c.space.tastes = {gen, spc};
    c.space.covariates = {0, 1};
    c.cov_names = {"cov1", "cov2"};
    c.cov_levels = {2, 3};
    c.spec.asc = AscTerm{0};
    c.spec.terms = {{0, {lin, spc}}, {1, {log_, spc, 1}}, {2, {lin, gen}}, {3, {bc, gen}}, {4, {lin, gen}}};
    c.params = {-0.90, 0.43, -0.83, 0.43,  // asc_alt1 (cov1 = 0, 1), asc_alt2 (cov1 = 0, 1)
                -0.50, -0.40, -0.60,       // b_x1 per alternative
                -1.40, -0.97, -0.06,       // b_x2 alt0, cov2 levels 1..3
                -1.16, -0.85, -0.15,       // b_x2 alt1
                -1.15, -0.65, -0.09,       // b_x2 alt2
                -1.40,                     // b_x3
                1.70,  0.09,               // b_x4, lambda_x4
                1.90};                     // b_x5
    return c;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return s;
}

}  // namespace

std::vector<TrueCase> case_catalogue() { return {s1(), s2(), s3()}; }

std::optional<TrueCase> find_case(const std::string& id) {
    for (auto& c : case_catalogue()) {
        if (c.id == lower(id)) return c;
    }
    return std::nullopt;
}

Simulation generate(const TrueCase& c, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> attr_dist(c.attr_low, c.attr_high);

    ChoiceDataset ds;
    ds.n_obs = n;
    ds.n_alts = c.n_alts;
    ds.n_attrs = c.space.n_attrs;
    ds.n_covs = c.cov_levels.size();
    for (std::size_t k = 0; k < ds.n_attrs; ++k) ds.attr_names.push_back("x" + std::to_string(k + 1));
    ds.cov_names = c.cov_names;
    ds.cov_levels = c.cov_levels;
    for (int levels : c.cov_levels) {
        std::vector<long long> codes(static_cast<std::size_t>(levels));
        for (int l = 0; l < levels; ++l) codes[static_cast<std::size_t>(l)] = l;
        ds.cov_codes.push_back(std::move(codes));
    }
    ds.attrs.resize(n * ds.n_alts * ds.n_attrs);
    ds.covs.resize(n * ds.n_covs);
    ds.avail.assign(n * ds.n_alts, 1);
    ds.choice.assign(n, 0);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < ds.n_alts; ++j) {
            for (std::size_t k = 0; k < ds.n_attrs; ++k) ds.attrs[(i * ds.n_alts + j) * ds.n_attrs + k] = attr_dist(rng);
        }
        for (std::size_t cv = 0; cv < ds.n_covs; ++cv) {
            std::uniform_int_distribution<int> level(0, c.cov_levels[cv] - 1);
            ds.covs[i * ds.n_covs + cv] = level(rng);
        }
    }

    const UtilityDesign design = build_design(c.spec, ds);
    if (design.n_params != c.params.size()) {
        throw std::logic_error("true parameter vector does not match the design of case " + c.id);
    }
    const Eigen::Map<const Eigen::VectorXd> theta(c.params.data(), static_cast<Eigen::Index>(c.params.size()));
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) {
        utilities(design, ds, theta, i, v);
        std::size_t best = 0;
        double best_u = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ds.n_alts; ++j) {
            const double u = v[j] + draw_gumbel(rng);
            if (u > best_u) {
                best_u = u;
                best = j;
            }
        }
        ds.choice[i] = static_cast<int>(best);
    }
    ds.validate();

    Simulation sim;
    sim.data = std::move(ds);
    sim.truth.case_id = c.id;
    sim.truth.spec = c.spec;
    for (const auto& p : design.params) sim.truth.param_names.push_back(p.name);
    sim.truth.params = c.params;
    sim.truth.seed = seed;
    sim.truth.n = n;
    std::ostringstream attrs;
    attrs << "attributes: iid Uniform(" << c.attr_low << ", " << c.attr_high << ") per observation and alternative";
    sim.truth.distributions.push_back(attrs.str());
    for (std::size_t cv = 0; cv < c.cov_levels.size(); ++cv) {
        sim.truth.distributions.push_back(c.cov_names[cv] + ": uniform over " + std::to_string(c.cov_levels[cv]) +
                                          " levels");
    }
    sim.truth.distributions.push_back("errors: iid standard Gumbel");
    return sim;
}

}  // namespace dcmsearch
