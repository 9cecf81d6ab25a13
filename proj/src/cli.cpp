#include "dcmsearch/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dcmsearch/serialization.hpp"

namespace dcmsearch {

namespace {

namespace fs = std::filesystem;

class UserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UserError("cannot write " + path.string());
    f << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UserError("cannot read " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw UserError("cannot create directory " + dir.string());
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json opt_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

struct RunData {
    ChoiceDataset in_sample;
    std::optional<ChoiceDataset> out_of_sample;
};

RunData load_run_data(const RunFileConfig& c) {
    ChoiceDataset ds = load_wide_csv(c.data, c.schema);
    ds.validate();
    RunData d;
    if (c.in_sample_frac && *c.in_sample_frac < 1.0) {
        auto [in, out] = split_holdout(ds, *c.in_sample_frac, c.split_seed);
        d.in_sample = std::move(in);
        d.out_of_sample = std::move(out);
    } else {
        d.in_sample = std::move(ds);
    }
    return d;
}

/// Reference spec from a spec document, a truth record, or a path to either.
ModelSpec reference_spec(const json& ref, const ChoiceDataset& ds) {
    json doc = ref.is_string() ? read_json_file(ref.get<std::string>()) : ref;
    if (doc.is_object() && doc.contains("spec")) doc = doc["spec"];
    return spec_from_json(doc, &ds);
}

struct ReferenceScore {
    std::string key;
    double reward = 0.0;
    EstimationOutcome outcome;
};

ReferenceScore score_reference(const ModelSpec& spec, const ChoiceDataset& ds, const RunConfig& run,
                               const NormalizationTracker& tracker) {
    ReferenceScore r;
    r.key = canonical_key(spec).text;
    r.outcome = estimate(build_design(spec, ds), ds, run.estimator);
    r.reward = score_outcome(r.outcome, run.reward, tracker);
    return r;
}

std::uint64_t effective_seed(std::uint64_t configured) {
    const char* env = std::getenv("DELPHOS_SEED");
    if (!env || !*env) return configured;
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(env, &pos);
        if (pos != std::string(env).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw UserError(std::string("DELPHOS_SEED is not an unsigned integer: ") + env);
    }
}

int cmd_simulate(const std::string& case_id, std::size_t n, std::uint64_t seed, const fs::path& out) {
    const auto c = find_case(case_id);
    if (!c) throw UserError("unknown case '" + case_id + "' (expected s1, s2 or s3)");
    if (n == 0) throw UserError("--n must be positive");
    ensure_dir(out);
    const auto sim = generate(*c, n, seed);
    save_wide_csv(sim.data, out / "data.csv");
    write_json_file(out / "truth.json", truth_to_json(sim.truth));
    std::cerr << "wrote " << (out / "data.csv").string() << " and " << (out / "truth.json").string() << '\n';
    return kExitOk;
}

int cmd_estimate(const fs::path& data, const fs::path& spec_path, const fs::path& out,
                 const std::optional<fs::path>& schema_path) {
    CsvSchema schema;
    if (schema_path) schema = schema_from_json(read_json_file(*schema_path));
    const ChoiceDataset ds = load_wide_csv(data, schema);
    ds.validate();
    json doc = read_json_file(spec_path);
    if (doc.is_object() && doc.contains("spec") && !doc.contains("terms")) doc = doc["spec"];
    const ModelSpec spec = spec_from_json(doc, &ds);
    const auto outcome = estimate(build_design(spec, ds), ds);
    json j = outcome_to_json(outcome);
    j["spec"] = spec_to_json(spec);
    j["key"] = canonical_key(spec).text;
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    write_json_file(out, j);
    std::cout << std::setprecision(10) << "ll=" << outcome.ll << " aic=" << outcome.aic << " bic=" << outcome.bic
              << " converged=" << (outcome.converged ? "true" : "false") << '\n';
    return kExitOk;
}

int cmd_search(const fs::path& config_path) {
    json raw = read_json_file(config_path);
    RunFileConfig cfg = parse_run_config(raw, config_path.parent_path());
    cfg.run.seed = effective_seed(cfg.run.seed);

    const RunData data = load_run_data(cfg);
    const ChoiceDataset& ds = data.in_sample;
    cfg.run.space = space_from_json(cfg.space, ds);
    cfg.run.reward = reward_from_json(cfg.reward, ds, cfg.run.agent.gamma);
    cfg.run.validate();
    std::optional<ModelSpec> ref_spec;
    if (cfg.reference) ref_spec = reference_spec(*cfg.reference, ds);

    const fs::path out = cfg.output_dir;
    ensure_dir(out);

    // Effective configuration, with resolved paths, so `report` can rebuild the data split.
    json effective = raw;
    effective["data"] = fs::absolute(cfg.data).string();
    effective["output_dir"] = fs::absolute(out).string();
    effective["seed"] = cfg.run.seed;
    if (cfg.reference && cfg.reference->is_string()) effective["reference"] = fs::absolute(cfg.reference->get<std::string>()).string();
    write_json_file(out / "config.json", effective);

    SearchResult result = run_search(cfg.run, ds);
    result.pareto = pareto_front(result.models, cfg.pareto_objective);

    write_text(out / "episodes.csv", episodes_csv(result.episodes));
    save_checkpoint(result.policy, out / "checkpoint.json");

    std::string models;
    for (const auto& m : result.models) {
        json line = {{"key", m.key.text}, {"first_episode", m.first_episode}, {"spec", spec_to_json(m.spec)},
                     {"outcome", outcome_to_json(m.outcome)}};
        models += line.dump() + '\n';
    }
    write_text(out / "models.jsonl", models);

    json best = nullptr;
    if (result.best) {
        const auto& b = *result.best;
        const double reward = result.best_so_far.empty() ? 0.0 : result.best_so_far.back().reward;
        best = {{"key", b.key.text}, {"first_episode", b.first_episode}, {"reward", reward},
                {"spec", spec_to_json(b.spec)}, {"outcome", outcome_to_json(b.outcome)}, {"out_of_sample", nullptr}};
        if (data.out_of_sample && b.outcome.converged) {
            const auto& oos = *data.out_of_sample;
            const auto design = build_design(b.spec, oos);
            Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(b.outcome.estimates.data(),
                                                                      static_cast<Eigen::Index>(b.outcome.estimates.size()));
            best["out_of_sample"] = {{"ll", log_likelihood(design, oos, theta)},
                                     {"ll0", null_log_likelihood(oos)},
                                     {"n_obs", oos.n_obs}};
        }
    }
    write_json_file(out / "best.json", best);

    std::string pareto = "n_params,objective,key\n";
    for (const auto& p : result.pareto) {
        pareto += std::to_string(p.n_params) + ',' + format_double(p.objective) + ',' + p.key + '\n';
    }
    write_text(out / "pareto.csv", pareto);

    const std::size_t n = result.episodes.size();
    const std::size_t tenth = std::max<std::size_t>(1, n / 10);
    const auto first = action_usage(result.episodes, result.actions.size(), 0, std::min(tenth, n));
    const auto last = action_usage(result.episodes, result.actions.size(), n - std::min(tenth, n), n);
    const auto total = action_usage(result.episodes, result.actions.size(), 0, n);
    std::string actions = "action,description,count,count_first_10pct,count_last_10pct,mean_adj_rho2_last_10pct\n";
    for (std::size_t a = 0; a < result.actions.size(); ++a) {
        actions += std::to_string(a) + ',' + result.actions[a].describe() + ',' + std::to_string(total[a].count) + ',' +
                   std::to_string(first[a].count) + ',' + std::to_string(last[a].count) + ',' +
                   format_double(last[a].mean_adj_rho2) + '\n';
    }
    write_text(out / "actions.csv", actions);

    std::optional<ReferenceScore> ref;
    if (ref_spec) {
        ref = ReferenceScore{};
        ref->key = canonical_key(*ref_spec).text;
        const CachedModel* cached = nullptr;
        for (const auto& m : result.models) {
            if (m.key.text == ref->key) cached = &m;
        }
        if (cached) {
            ref->outcome = cached->outcome;
            ref->reward = score_outcome(ref->outcome, cfg.run.reward, result.tracker);
        } else {
            *ref = score_reference(*ref_spec, ds, cfg.run, result.tracker);
        }
    }
    const auto s = summarise(result, ref ? std::optional<std::string>(ref->key) : std::nullopt,
                             ref ? std::optional<double>(ref->reward) : std::nullopt);
    const auto size = space_size(cfg.run.space);
    json summary = {{"episodes_run", s.episodes_run},
                    {"unique_models", s.unique_models},
                    {"estimator_calls", result.estimator_calls},
                    {"converged_pct", s.converged_pct},
                    {"first_recovery", opt_json(s.first_recovery)},
                    {"reward_last_100", s.reward_last_100},
                    {"reference_key", ref ? json(ref->key) : json(nullptr)},
                    {"reference_reward", opt_json(s.reference_reward)},
                    {"delta_reward", opt_json(s.delta_reward)},
                    {"rmse", opt_json(s.rmse)},
                    {"novelty_last_100", s.novelty_last_100},
                    {"best_reward", s.best_reward},
                    {"best_key", result.best ? json(result.best->key.text) : json(nullptr)},
                    {"stopped_early", result.stopped_early},
                    {"aborted", !result.abort_message.empty()},
                    {"abort_message", result.abort_message},
                    {"seed", cfg.run.seed},
                    {"n_actions", result.actions.size()},
                    {"space_size", {{"count", size.count}, {"saturated", size.saturated}}},
                    {"reward", reward_to_json(cfg.run.reward, ds)},
                    {"tracker", tracker_to_json(result.tracker)},
                    {"null_ll", null_log_likelihood(ds)},
                    {"n_obs_in_sample", ds.n_obs},
                    {"n_obs_out_of_sample", data.out_of_sample ? data.out_of_sample->n_obs : 0}};
    write_json_file(out / "summary.json", summary);

    if (!result.abort_message.empty()) {
        std::cerr << "search aborted at episode " << n << ": " << result.abort_message << "\ncheckpoint kept at "
                  << (out / "checkpoint.json").string() << '\n';
        return kExitAbort;
    }
    std::cerr << "search finished after " << n << " episodes; " << s.unique_models << " unique models\n";
    return kExitOk;
}

std::string show(const std::optional<double>& v) { return v ? format_double(*v) : std::string("n/a"); }

int cmd_report(const fs::path& run_dir, const std::optional<fs::path>& reference) {
    const fs::path episodes_path = run_dir / "episodes.csv";
    const fs::path summary_path = run_dir / "summary.json";
    for (const auto& p : {episodes_path, summary_path}) {
        if (!fs::exists(p)) throw UserError("missing " + p.string());
    }
    const auto log = parse_episodes_csv(read_text(episodes_path));
    const json stored = read_json_file(summary_path);

    std::optional<std::string> ref_key;
    std::optional<double> ref_reward;
    if (reference) {
        const fs::path config_path = run_dir / "config.json";
        if (!fs::exists(config_path)) throw UserError("missing " + config_path.string());
        RunFileConfig cfg = parse_run_config(read_json_file(config_path), run_dir);
        const RunData data = load_run_data(cfg);
        cfg.run.reward = reward_from_json(cfg.reward, data.in_sample, cfg.run.agent.gamma);
        const auto spec = reference_spec(json(reference->string()), data.in_sample);
        const auto tracker = tracker_from_json(stored.at("tracker"));
        const auto r = score_reference(spec, data.in_sample, cfg.run, tracker);
        ref_key = r.key;
        ref_reward = r.reward;
    } else if (stored.contains("reference_key") && !stored["reference_key"].is_null()) {
        ref_key = stored["reference_key"].get<std::string>();
        if (!stored["reference_reward"].is_null()) ref_reward = stored["reference_reward"].get<double>();
    }

    const auto s = summarise_log(log, ref_key, ref_reward);
    const std::string recovery =
        s.first_recovery ? std::to_string(*s.first_recovery) : std::string(ref_key ? "absent" : "n/a");
    std::cout << "unique models      " << s.unique_models << '\n'
              << "converged %        " << format_double(s.converged_pct) << '\n'
              << "first recovery     " << recovery << '\n'
              << "reward (last 100)  " << format_double(s.reward_last_100) << '\n'
              << "delta reward       " << show(s.delta_reward) << '\n'
              << "rmse               " << show(s.rmse) << '\n';

    json report = {{"episodes_run", s.episodes_run},
                   {"unique_models", s.unique_models},
                   {"converged_pct", s.converged_pct},
                   {"first_recovery", s.first_recovery ? json(*s.first_recovery) : json(recovery)},
                   {"reward_last_100", s.reward_last_100},
                   {"reference_key", ref_key ? json(*ref_key) : json(nullptr)},
                   {"reference_reward", opt_json(ref_reward)},
                   {"delta_reward", opt_json(s.delta_reward)},
                   {"rmse", opt_json(s.rmse)},
                   {"novelty_last_100", s.novelty_last_100}};
    write_json_file(run_dir / "report.json", report);
    return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Reinforcement-learning search over multinomial logit utility specifications"};
    app.require_subcommand(1);

    std::string case_id;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out_dir;
    auto* sim = app.add_subcommand("simulate", "Generate a simulated dataset with known truth");
    sim->add_option("--case", case_id, "s1, s2 or s3")->required();
    sim->add_option("--n", n, "Number of observations")->required();
    sim->add_option("--seed", seed, "Random seed")->required();
    sim->add_option("--out", out_dir, "Output directory")->required();

    std::string data, spec, out_file, schema;
    auto* est = app.add_subcommand("estimate", "Estimate one specification");
    est->add_option("--data", data, "Wide-format CSV")->required();
    est->add_option("--spec", spec, "Specification JSON")->required();
    est->add_option("--out", out_file, "Outcome JSON path")->required();
    est->add_option("--schema", schema, "Column schema JSON");

    std::string config;
    auto* search = app.add_subcommand("search", "Run the specification search");
    search->add_option("--config", config, "Run configuration JSON")->required();

    std::string run_dir, reference;
    auto* report = app.add_subcommand("report", "Summarise a finished run");
    report->add_option("--run", run_dir, "Run directory")->required();
    report->add_option("--reference", reference, "Reference spec or truth JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUserError;
    }

    try {
        if (*sim) return cmd_simulate(case_id, n, seed, out_dir);
        if (*est) {
            return cmd_estimate(data, spec, out_file, schema.empty() ? std::nullopt : std::optional<fs::path>(schema));
        }
        if (*search) return cmd_search(config);
        if (*report) {
            return cmd_report(run_dir, reference.empty() ? std::nullopt : std::optional<fs::path>(reference));
        }
    } catch (const UserError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUserError;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUserError;
    } catch (const DatasetError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUserError;
    } catch (const std::invalid_argument& e) {  // DesignError, bad config values
        std::cerr << "error: " << e.what() << '\n';
        return kExitUserError;
    } catch (const std::domain_error& e) {  // transform inputs out of domain
        std::cerr << "error: " << e.what() << '\n';
        return kExitUserError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUserError;
    } catch (const std::exception& e) {
        std::cerr << "aborted: " << e.what() << '\n';
        return kExitAbort;
    }
    return kExitUserError;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> storage = args;
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    argv.push_back(nullptr);
    return run_cli(static_cast<int>(storage.size()), argv.data());
}

}  // namespace dcmsearch
