#include <doctest.h>

#include <cmath>

#include "dcmsearch/serialization.hpp"
#include "helpers.hpp"

using namespace dcmsearch;

TEST_SUITE("serialization") {

TEST_CASE("spec JSON round trip") {
    for (const auto& c : case_catalogue()) {
        CHECK(spec_from_json(spec_to_json(c.spec)) == c.spec);
    }
    const auto ds = testutil::simulate("s3", 10, 1).data;
    const auto j = json::parse(R"({"asc": {"interaction": "cov1"},
        "terms": [{"attr": "x2", "transform": "log", "taste": "specific", "interaction": "cov2"}]})");
    const auto s = spec_from_json(j, &ds);
    CHECK(s.asc->interaction == 0);
    CHECK(s.terms.at(1).interaction == 1);
    CHECK(s.terms.at(1).transform == Transformation::log1p);
}

TEST_CASE("spec JSON errors") {
    const auto ds = testutil::simulate("s1", 10, 1).data;
    CHECK_THROWS_AS(spec_from_json(json::parse(R"({"terms": [{"attr": 9}]})"), &ds), ConfigError);
    CHECK_THROWS_AS(spec_from_json(json::parse(R"({"terms": [{"attr": "x7"}]})"), &ds), ConfigError);
    CHECK_THROWS_AS(spec_from_json(json::parse(R"({"terms": [{"attr": 0, "transform": "sqrt"}]})")), ConfigError);
    CHECK_THROWS_AS(spec_from_json(json::parse(R"({"terms": [{"attr": 0}, {"attr": 0}]})")), ConfigError);
    CHECK_THROWS_AS(spec_from_json(json::parse(R"({"asc": null, "extra": 1})")), ConfigError);
    CHECK_THROWS_AS(spec_from_json(json::parse(R"({"asc": {"interaction": 0}})"), &ds), ConfigError);
}

TEST_CASE("tracker round trip") {
    NormalizationTracker t(-100.0);
    t.observe_ll(-80.0);
    t.observe_ic(Metric::aic, 170.0);
    t.observe_n_params(4);
    const auto back = tracker_from_json(tracker_to_json(t));
    CHECK(back.ll0 == t.ll0);
    CHECK(back.ll_max == t.ll_max);
    CHECK(back.aic_min == t.aic_min);
    CHECK_FALSE(back.bic_min);
    CHECK(back.n_params_min == t.n_params_min);
}

TEST_CASE("run config parsing") {
    const auto j = json::parse(R"({
        "data": "d.csv", "output_dir": "out", "episodes": 200, "min_episodes": 50, "seed": 4,
        "holdout": {"in_sample_frac": 0.75, "seed": 9},
        "agent": {"hidden_layers": 1, "units": 8, "learning_rate": 0.001, "target_mode": "bootstrap"},
        "estimator": {"max_iterations": 100},
        "pareto_objective": "ll"})");
    const auto c = parse_run_config(j, "/base");
    CHECK(c.data == std::filesystem::path("/base/d.csv"));
    CHECK(c.output_dir == std::filesystem::path("/base/out"));
    CHECK(c.run.episodes == 200);
    CHECK(c.run.min_episodes == 50);
    CHECK(c.run.seed == 4);
    CHECK(*c.in_sample_frac == 0.75);
    CHECK(c.split_seed == 9);
    CHECK(c.run.agent.units == 8);
    CHECK(c.run.agent.target_mode == TargetMode::bootstrap);
    CHECK(c.run.estimator.max_iterations == 100);
    CHECK(c.pareto_objective == ParetoObjective::ll);
}

TEST_CASE("run config rejects unknown keys and bad values") {
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"data": "d", "output_dir": "o", "epsiodes": 3})"), "."),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"data": "d", "output_dir": "o", "agent": {"unit": 3}})"), "."),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"data": "d", "output_dir": "o", "episodes": "many"})"), "."),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"output_dir": "o"})"), "."), ConfigError);
    CHECK_THROWS_AS(
        parse_run_config(json::parse(R"({"data": "d", "output_dir": "o", "episodes": 10, "min_episodes": 20})"), "."),
        ConfigError);
}

TEST_CASE("space and reward sections") {
    const auto ds = testutil::simulate("s3", 10, 1).data;
    const auto space = space_from_json(
        json::parse(R"({"transforms": ["linear", "log"], "tastes": ["generic", "specific"], "covariates": ["cov2"]})"), ds);
    CHECK(space.n_attrs == 6);
    CHECK(space.transforms.size() == 2);
    CHECK(space.covariates == std::vector<int>{1});
    CHECK_THROWS_AS(space_from_json(json::parse(R"({"transforms": []})"), ds), ConfigError);
    CHECK_THROWS_AS(space_from_json(json::parse(R"({"covariates": [5]})"), ds), ConfigError);

    const auto r = reward_from_json(json::parse(R"({"weights": {"aic": 1, "ll": 3},
        "constraints": [{"target": "x1", "sign": "negative"}, {"target": "asc", "sign": "positive"}]})"), ds, 0.9);
    CHECK(r.weights.at(Metric::aic) == 0.25);
    CHECK(r.constraints.size() == 2);
    CHECK(r.constraints[1].target == BehaviouralConstraint::kAscTarget);
    CHECK(r.gamma == 0.9);
    const auto echo = reward_to_json(r, ds);
    CHECK(echo["weights"]["ll"] == 0.75);
    CHECK(echo["constraints"][0]["target"] == "x1");
    CHECK_THROWS_AS(reward_from_json(json::parse(R"({"weights": {"r2": 1}})"), ds, 0.9), std::exception);
    CHECK_THROWS_AS(reward_from_json(json::parse(R"({"constraints": [{"target": "x1", "sign": "up"}]})"), ds, 0.9),
                    ConfigError);
}

TEST_CASE("episode CSV round trip") {
    std::vector<EpisodeRecord> log(2);
    log[0].episode = 1;
    log[0].key = "asc;k0:lin:gen";
    log[0].steps = 3;
    log[0].reward = 0.1 + 0.2;
    log[0].converged = true;
    log[0].ll = -1234.5678901234567;
    log[0].aic = 2473.1;
    log[0].bic = 2490.2;
    log[0].adj_rho2 = 0.3;
    log[0].n_params = 3;
    log[0].epsilon = 1.0;
    log[0].loss = 1e-7;
    log[0].novel = true;
    log[1].episode = 2;
    log[1].key = "k1:bc:spc";
    log[1].steps = 28;
    log[1].truncated = true;
    log[1].ll = log[1].aic = log[1].bic = log[1].adj_rho2 = std::nan("");
    const auto text = episodes_csv(log);
    CHECK(text.substr(0, text.find('\n')) ==
          "episode,key,steps,reward,converged,ll,aic,bic,adj_rho2,n_params,epsilon,loss,novel,wall_ms");
    const auto back = parse_episodes_csv(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].reward == log[0].reward);
    CHECK(back[0].ll == log[0].ll);
    CHECK(back[0].novel);
    CHECK_FALSE(back[0].truncated);
    CHECK(back[1].truncated);
    CHECK(episodes_csv(back) == text);
    CHECK_THROWS_AS(parse_episodes_csv("bad,header\n"), ConfigError);
}

TEST_CASE("shortest round-trip doubles") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    const double x = 0.1 + 0.2;
    CHECK(std::stod(format_double(x)) == x);
}

}
