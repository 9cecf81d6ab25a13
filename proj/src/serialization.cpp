#include "dcmsearch/serialization.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dcmsearch {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + context);
    }
}

template <typename T>
T get_as(const json& j, const std::string& key, const std::string& context) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("invalid or missing '" + key + "' in " + context);
    }
}

template <typename T>
void maybe(const json& j, const std::string& key, T& out, const std::string& context) {
    if (j.contains(key) && !j.at(key).is_null()) out = get_as<T>(j, key, context);
}

std::size_t resolve_index(const json& v, const std::vector<std::string>& names, std::size_t count,
                          const std::string& what) {
    if (v.is_number_integer()) {
        const auto i = v.get<long long>();
        if (i < 0 || static_cast<std::size_t>(i) >= count) {
            throw ConfigError(what + " index " + std::to_string(i) + " out of range (" + std::to_string(count) + ")");
        }
        return static_cast<std::size_t>(i);
    }
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == s) return i;
        }
        throw ConfigError("unknown " + what + " '" + s + "'");
    }
    throw ConfigError(what + " must be an index or a name");
}

int parse_interaction(const json& j, const ChoiceDataset* ds) {
    if (j.is_null()) return kNoInteraction;
    if (j.is_string() && j.get<std::string>() == "none") return kNoInteraction;
    if (ds) return static_cast<int>(resolve_index(j, ds->cov_names, ds->n_covs, "covariate"));
    if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError("interaction must be null or a covariate index");
    return j.get<int>();
}

std::string attr_name(const ChoiceDataset& ds, std::size_t k) {
    return k < ds.attr_names.size() ? ds.attr_names[k] : std::to_string(k);
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

json spec_to_json(const ModelSpec& spec) {
    json j;
    if (spec.asc) {
        j["asc"] = {{"interaction", spec.asc->interaction == kNoInteraction ? json(nullptr) : json(spec.asc->interaction)}};
    } else {
        j["asc"] = nullptr;
    }
    j["terms"] = json::array();
    for (const auto& [k, t] : spec.terms) {
        j["terms"].push_back({{"attr", k},
                              {"transform", std::string(to_string(t.transform))},
                              {"taste", std::string(to_string(t.taste))},
                              {"interaction", t.interaction == kNoInteraction ? json(nullptr) : json(t.interaction)}});
    }
    return j;
}

ModelSpec spec_from_json(const json& j, const ChoiceDataset* ds) {
    check_keys(j, {"asc", "terms"}, "spec");
    ModelSpec spec;
    if (j.contains("asc") && !j["asc"].is_null()) {
        const auto& a = j["asc"];
        if (a.is_boolean()) {
            if (a.get<bool>()) spec.asc = AscTerm{};
        } else {
            check_keys(a, {"interaction"}, "spec.asc");
            spec.asc = AscTerm{parse_interaction(a.value("interaction", json(nullptr)), ds)};
        }
    }
    if (j.contains("terms")) {
        if (!j["terms"].is_array()) throw ConfigError("spec.terms must be an array");
        for (const auto& t : j["terms"]) {
            check_keys(t, {"attr", "transform", "taste", "interaction"}, "spec term");
            if (!t.contains("attr")) throw ConfigError("spec term lacks 'attr'");
            std::size_t k = 0;
            if (ds) {
                k = resolve_index(t["attr"], ds->attr_names, ds->n_attrs, "attribute");
            } else if (t["attr"].is_number_integer() && t["attr"].get<long long>() >= 0) {
                k = t["attr"].get<std::size_t>();
            } else {
                throw ConfigError("spec term 'attr' must be a non-negative index");
            }
            Term term;
            try {
                term.transform = transformation_from_string(t.value("transform", std::string("linear")));
                term.taste = taste_from_string(t.value("taste", std::string("generic")));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            } catch (const json::exception&) {
                throw ConfigError("spec term transform/taste must be strings");
            }
            term.interaction = parse_interaction(t.value("interaction", json(nullptr)), ds);
            if (!spec.terms.emplace(k, term).second) {
                throw ConfigError("spec lists attribute " + std::to_string(k) + " twice");
            }
        }
    }
    return spec;
}

json outcome_to_json(const EstimationOutcome& o) {
    json est = json::object(), se = json::object(), rse = json::object();
    for (std::size_t i = 0; i < o.params.size(); ++i) {
        const auto& name = o.params[i].name;
        if (i < o.estimates.size()) est[name] = o.estimates[i];
        if (i < o.std_errors.size()) se[name] = o.std_errors[i];
        if (i < o.robust_std_errors.size()) rse[name] = o.robust_std_errors[i];
    }
    return {{"ll", o.ll},
            {"ll0", o.ll0},
            {"rho2", o.rho2},
            {"adj_rho2", o.adj_rho2},
            {"aic", o.aic},
            {"bic", o.bic},
            {"n_params", o.n_params},
            {"estimates", est},
            {"std_errors", se},
            {"robust_std_errors", rse},
            {"converged", o.converged},
            {"est_time", o.est_time},
            {"n_obs", o.n_obs},
            {"boxcox_shift", o.boxcox_shift},
            {"message", o.message}};
}

json truth_to_json(const TruthRecord& t) {
    json params = json::object();
    for (std::size_t i = 0; i < t.params.size(); ++i) params[t.param_names[i]] = t.params[i];
    return {{"case", t.case_id}, {"spec", spec_to_json(t.spec)}, {"parameters", params},
            {"parameter_order", t.param_names}, {"seed", t.seed}, {"n", t.n}, {"distributions", t.distributions}};
}

json tracker_to_json(const NormalizationTracker& t) {
    auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
    return {{"ll0", t.ll0}, {"ll_max", t.ll_max}, {"aic_min", opt(t.aic_min)}, {"bic_min", opt(t.bic_min)},
            {"n_params_min", opt(t.n_params_min)}, {"n_params_max", opt(t.n_params_max)}};
}

NormalizationTracker tracker_from_json(const json& j) {
    NormalizationTracker t(j.at("ll0").get<double>());
    t.ll_max = j.at("ll_max").get<double>();
    if (!j.at("aic_min").is_null()) t.aic_min = j["aic_min"].get<double>();
    if (!j.at("bic_min").is_null()) t.bic_min = j["bic_min"].get<double>();
    if (!j.at("n_params_min").is_null()) t.n_params_min = j["n_params_min"].get<std::size_t>();
    if (!j.at("n_params_max").is_null()) t.n_params_max = j["n_params_max"].get<std::size_t>();
    return t;
}

CsvSchema schema_from_json(const json& j) {
    check_keys(j, {"choice", "attributes", "covariates", "availability"}, "schema");
    CsvSchema s;
    maybe(j, "choice", s.choice, "schema");
    if (j.contains("attributes")) {
        for (const auto& a : j["attributes"]) {
            check_keys(a, {"name", "columns"}, "schema attribute");
            s.attributes.push_back({get_as<std::string>(a, "name", "schema attribute"),
                                    get_as<std::vector<std::string>>(a, "columns", "schema attribute")});
        }
    }
    maybe(j, "covariates", s.covariates, "schema");
    maybe(j, "availability", s.availability, "schema");
    return s;
}

ModellingSpace space_from_json(const json& j, const ChoiceDataset& ds) {
    check_keys(j, {"asc", "transforms", "tastes", "covariates", "max_steps"}, "space");
    ModellingSpace s;
    s.n_attrs = ds.n_attrs;
    maybe(j, "asc", s.asc_enabled, "space");
    try {
        if (j.contains("transforms")) {
            s.transforms.clear();
            for (const auto& t : j["transforms"]) s.transforms.push_back(transformation_from_string(t.get<std::string>()));
        }
        if (j.contains("tastes")) {
            s.tastes.clear();
            for (const auto& t : j["tastes"]) s.tastes.push_back(taste_from_string(t.get<std::string>()));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("space: ") + e.what());
    } catch (const json::exception&) {
        throw ConfigError("space transforms/tastes must be string arrays");
    }
    if (j.contains("covariates")) {
        for (const auto& c : j["covariates"]) s.covariates.push_back(static_cast<int>(resolve_index(c, ds.cov_names, ds.n_covs, "covariate")));
    }
    maybe(j, "max_steps", s.max_steps, "space");
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return s;
}

RewardConfig reward_from_json(const json& j, const ChoiceDataset& ds, double gamma) {
    check_keys(j, {"weights", "constraints"}, "reward");
    std::map<Metric, double> weights;
    if (j.contains("weights")) {
        check_keys(j["weights"], {"ll", "adj_rho2", "rho2", "aic", "bic", "n_params"}, "reward.weights");
        for (const auto& [k, v] : j["weights"].items()) {
            if (!v.is_number()) throw ConfigError("reward weight '" + k + "' must be a number");
            weights[metric_from_string(k)] = v.get<double>();
        }
    } else {
        weights[Metric::adj_rho2] = 1.0;
    }
    std::vector<BehaviouralConstraint> constraints;
    if (j.contains("constraints")) {
        for (const auto& c : j["constraints"]) {
            check_keys(c, {"target", "sign"}, "reward constraint");
            BehaviouralConstraint bc;
            const auto& target = c.at("target");
            if (target.is_string() && target.get<std::string>() == "asc") {
                bc.target = BehaviouralConstraint::kAscTarget;
            } else {
                bc.target = static_cast<int>(resolve_index(target, ds.attr_names, ds.n_attrs, "attribute"));
            }
            const auto sign = get_as<std::string>(c, "sign", "reward constraint");
            if (sign == "negative") {
                bc.expected = Sign::negative;
            } else if (sign == "positive") {
                bc.expected = Sign::positive;
            } else {
                throw ConfigError("constraint sign must be 'negative' or 'positive'");
            }
            constraints.push_back(bc);
        }
    }
    try {
        return RewardConfig::make(std::move(weights), std::move(constraints), gamma);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("reward: ") + e.what());
    }
}

json reward_to_json(const RewardConfig& r, const ChoiceDataset& ds) {
    json w = json::object();
    for (const auto& [m, v] : r.weights) w[std::string(to_string(m))] = v;
    json cs = json::array();
    for (const auto& c : r.constraints) {
        cs.push_back({{"target", c.target == BehaviouralConstraint::kAscTarget ? std::string("asc")
                                                                               : attr_name(ds, static_cast<std::size_t>(c.target))},
                      {"sign", c.expected == Sign::negative ? "negative" : "positive"}});
    }
    return {{"weights", w}, {"constraints", cs}, {"gamma", r.gamma}};
}

RunFileConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
    const std::string ctx = "run config";
    check_keys(j, {"data", "schema", "output_dir", "holdout", "space", "reward", "agent", "episodes", "min_episodes",
                   "search_window", "stop_threshold", "early_stopping", "seed", "estimator", "reference",
                   "pareto_objective", "record_timing", "progress_every"},
               ctx);
    RunFileConfig c;
    c.raw = j;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    c.data = resolve(get_as<std::string>(j, "data", ctx));
    c.output_dir = resolve(get_as<std::string>(j, "output_dir", ctx));
    if (j.contains("schema")) c.schema = schema_from_json(j["schema"]);

    if (j.contains("holdout")) {
        const auto& h = j["holdout"];
        if (h.is_null()) {
            c.in_sample_frac.reset();
        } else {
            check_keys(h, {"in_sample_frac", "seed"}, "holdout");
            if (h.contains("in_sample_frac") && h["in_sample_frac"].is_null()) {
                c.in_sample_frac.reset();
            } else {
                double f = 0.8;
                maybe(h, "in_sample_frac", f, "holdout");
                c.in_sample_frac = f;
            }
            maybe(h, "seed", c.split_seed, "holdout");
        }
    }
    if (j.contains("space")) c.space = j["space"];
    if (j.contains("reward")) c.reward = j["reward"];

    auto& r = c.run;
    maybe(j, "episodes", r.episodes, ctx);
    r.min_episodes = std::min<std::size_t>(r.min_episodes, r.episodes);
    maybe(j, "min_episodes", r.min_episodes, ctx);
    maybe(j, "search_window", r.search_window, ctx);
    maybe(j, "stop_threshold", r.stop_threshold, ctx);
    maybe(j, "early_stopping", r.early_stopping, ctx);
    maybe(j, "seed", r.seed, ctx);
    maybe(j, "record_timing", r.record_timing, ctx);
    r.progress_every = 100;
    maybe(j, "progress_every", r.progress_every, ctx);

    if (j.contains("agent")) {
        const auto& a = j["agent"];
        const std::string actx = "agent";
        check_keys(a, {"hidden_layers", "units", "learning_rate", "gamma", "buffer_capacity", "target_update",
                       "batch_size", "epsilon_start", "epsilon_end", "epsilon_decay_frac", "clip_norm", "target_mode"},
                   actx);
        maybe(a, "hidden_layers", r.agent.hidden_layers, actx);
        maybe(a, "units", r.agent.units, actx);
        maybe(a, "learning_rate", r.agent.learning_rate, actx);
        maybe(a, "gamma", r.agent.gamma, actx);
        maybe(a, "buffer_capacity", r.agent.buffer_capacity, actx);
        maybe(a, "target_update", r.agent.target_update, actx);
        maybe(a, "batch_size", r.agent.batch_size, actx);
        maybe(a, "epsilon_start", r.agent.epsilon.start, actx);
        maybe(a, "epsilon_end", r.agent.epsilon.end, actx);
        maybe(a, "epsilon_decay_frac", r.agent.epsilon.decay_frac, actx);
        maybe(a, "clip_norm", r.agent.clip_norm, actx);
        if (a.contains("target_mode")) {
            try {
                r.agent.target_mode = target_mode_from_string(get_as<std::string>(a, "target_mode", actx));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
    }
    if (j.contains("estimator")) {
        const auto& e = j["estimator"];
        check_keys(e, {"grad_tol", "max_iterations", "time_budget_s", "hessian_step"}, "estimator");
        maybe(e, "grad_tol", r.estimator.grad_tol, "estimator");
        maybe(e, "max_iterations", r.estimator.max_iterations, "estimator");
        maybe(e, "time_budget_s", r.estimator.time_budget_s, "estimator");
        maybe(e, "hessian_step", r.estimator.hessian_step, "estimator");
    }
    if (j.contains("reference") && !j["reference"].is_null()) {
        c.reference = j["reference"];
        if (c.reference->is_string()) c.reference = json(resolve(c.reference->get<std::string>()).string());
    }
    if (j.contains("pareto_objective")) {
        const auto p = get_as<std::string>(j, "pareto_objective", ctx);
        if (p == "aic") {
            c.pareto_objective = ParetoObjective::aic;
        } else if (p == "ll") {
            c.pareto_objective = ParetoObjective::ll;
        } else {
            throw ConfigError("pareto_objective must be 'aic' or 'll'");
        }
    }
    if (r.min_episodes > r.episodes) throw ConfigError("min_episodes must not exceed episodes");
    if (r.search_window == 0) throw ConfigError("search_window must be at least 1");
    return c;
}

const char* const kEpisodeColumns =
    "episode,key,steps,reward,converged,ll,aic,bic,adj_rho2,n_params,epsilon,loss,novel,wall_ms";

std::string episodes_csv(const std::vector<EpisodeRecord>& log) {
    std::ostringstream os;
    os << kEpisodeColumns << '\n';
    for (const auto& r : log) {
        os << r.episode << ',' << r.key << ',' << r.steps << ',' << format_double(r.reward) << ','
           << (r.converged ? 1 : 0) << ',' << format_double(r.ll) << ',' << format_double(r.aic) << ','
           << format_double(r.bic) << ',' << format_double(r.adj_rho2) << ',' << r.n_params << ','
           << format_double(r.epsilon) << ',' << format_double(r.loss) << ',' << (r.novel ? 1 : 0) << ','
           << format_double(r.wall_ms) << '\n';
    }
    return os.str();
}

std::vector<EpisodeRecord> parse_episodes_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kEpisodeColumns) throw ConfigError("episodes.csv has an unexpected header");
    auto num = [](const std::string& s) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError("episodes.csv: bad number '" + s + "'");
        return v;
    };
    std::vector<EpisodeRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 14) throw ConfigError("episodes.csv: expected 14 columns");
        EpisodeRecord r;
        r.episode = static_cast<std::size_t>(num(cells[0]));
        r.key = cells[1];
        r.steps = static_cast<std::size_t>(num(cells[2]));
        r.reward = num(cells[3]);
        r.converged = cells[4] == "1";
        r.ll = num(cells[5]);
        r.aic = num(cells[6]);
        r.bic = num(cells[7]);
        r.adj_rho2 = num(cells[8]);
        r.n_params = static_cast<std::size_t>(num(cells[9]));
        r.epsilon = num(cells[10]);
        r.loss = num(cells[11]);
        r.novel = cells[12] == "1";
        r.wall_ms = num(cells[13]);
        r.truncated = std::isnan(r.ll) && !r.novel && !r.converged && r.reward == 0.0 && r.n_params == 0;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace dcmsearch
