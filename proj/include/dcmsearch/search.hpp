#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcmsearch/dataset.hpp"
#include "dcmsearch/dqn.hpp"
#include "dcmsearch/mnl_estimator.hpp"
#include "dcmsearch/modelling_space.hpp"
#include "dcmsearch/reward.hpp"

namespace dcmsearch {

/// How a transition's TD target is formed. `bootstrap` adds gamma * max Q_target(s')
/// to the credit-assigned reward of every non-final step; `credit` regresses each
/// step on its credit-assigned reward alone, so Q(s_l, a_l) tracks gamma^(L-1-l) R.
enum class TargetMode { bootstrap, credit };

std::string_view to_string(TargetMode m);
TargetMode target_mode_from_string(std::string_view s);

struct AgentConfig {
    std::size_t hidden_layers = 2;
    std::size_t units = 64;
    double learning_rate = 1e-4;
    double gamma = 0.99;
    std::size_t buffer_capacity = 10000;
    std::size_t target_update = 10;  // episodes between target syncs
    std::size_t batch_size = 32;
    EpsilonSchedule epsilon;
    double clip_norm = 10.0;
    TargetMode target_mode = TargetMode::credit;
};

struct RunConfig {
    std::size_t episodes = 10000;
    std::size_t min_episodes = 1000;
    std::size_t search_window = 500;
    double stop_threshold = 0.05;
    bool early_stopping = true;
    std::uint64_t seed = 0;
    AgentConfig agent;
    RewardConfig reward = RewardConfig::make({{Metric::adj_rho2, 1.0}});
    ModellingSpace space;
    EstimatorOptions estimator;
    bool record_timing = false;     // wall_ms stays 0 unless enabled, keeping logs reproducible
    std::size_t progress_every = 0;  // 0: silent

    void validate() const;
};

/// Maps a spec to its estimation outcome. The orchestrator calls it at most
/// once per canonical key.
using Estimator = std::function<EstimationOutcome(const ModelSpec&)>;

/// Estimator over a fixed dataset (build_design + estimate).
Estimator dataset_estimator(const ChoiceDataset& ds, const ModellingSpace& space, const EstimatorOptions& opts);

struct CachedModel {
    SpecKey key;
    ModelSpec spec;
    EstimationOutcome outcome;
    std::size_t first_episode = 0;
};

/// One estimation per canonical key for the lifetime of a run.
class ModelCache {
public:
    /// Returns the cached entry, estimating on a miss. `hit` reports which.
    const CachedModel& fetch(const ModelSpec& spec, const Estimator& estimator, std::size_t episode, bool& hit);
    const CachedModel* find(const SpecKey& key) const;
    std::size_t size() const { return entries_.size(); }
    std::size_t estimator_calls() const { return calls_; }
    const std::vector<CachedModel>& entries() const { return entries_; }

private:
    std::unordered_map<SpecKey, std::size_t, SpecKeyHash> index_;
    std::vector<CachedModel> entries_;
    std::size_t calls_ = 0;
};

struct EpisodeRecord {
    std::size_t episode = 0;  // 1-based
    std::string key;
    std::size_t steps = 0;
    double reward = 0.0;
    bool converged = false;
    double ll = 0.0;
    double aic = 0.0;
    double bic = 0.0;
    double adj_rho2 = 0.0;
    std::size_t n_params = 0;
    double epsilon = 0.0;
    double loss = 0.0;
    bool novel = false;
    double wall_ms = 0.0;

    bool truncated = false;
    bool new_best = false;
    std::vector<std::size_t> actions;
};

struct BestPoint {
    std::size_t episode = 0;
    std::string key;
    double reward = 0.0;
};

struct ParetoPoint {
    std::size_t n_params = 0;
    double objective = 0.0;
    std::string key;
};

enum class ParetoObjective { aic, ll };

struct SearchResult {
    std::vector<EpisodeRecord> episodes;
    std::vector<BestPoint> best_so_far;
    std::optional<CachedModel> best;
    std::vector<CachedModel> models;  // unique estimated models in first-seen order
    std::vector<ParetoPoint> pareto;
    NormalizationTracker tracker;
    std::size_t estimator_calls = 0;
    bool stopped_early = false;
    std::string abort_message;  // non-empty when training hit a non-finite loss
    QNetwork policy;
    std::vector<ActionDescriptor> actions;
};

/// Stepwise driver for the training loop; run_search wraps it.
class SpecificationSearch {
public:
    SpecificationSearch(RunConfig cfg, Estimator estimator, double null_ll);

    /// One rollout + buffer push + training step (+ target sync when due).
    /// Throws NonFiniteLoss if training diverges.
    const EpisodeRecord& run_episode();
    bool should_stop() const;
    bool finished() const { return log_.size() >= cfg_.episodes; }

    const std::vector<EpisodeRecord>& log() const { return log_; }
    const ModelCache& cache() const { return cache_; }
    const QNetwork& policy() const { return policy_; }
    const QNetwork& target() const { return target_; }
    const NormalizationTracker& tracker() const { return tracker_; }
    const RunConfig& config() const { return cfg_; }
    const std::vector<ActionDescriptor>& actions() const { return actions_; }

    SearchResult result(ParetoObjective objective = ParetoObjective::aic) const;

private:
    RunConfig cfg_;
    Estimator estimator_;
    std::vector<ActionDescriptor> actions_;
    QNetwork policy_, target_;
    AdamState adam_;
    ReplayBuffer buffer_;
    std::mt19937_64 action_rng_, replay_rng_;
    ModelCache cache_;
    NormalizationTracker tracker_;
    std::vector<EpisodeRecord> log_;
    std::vector<BestPoint> best_;
    std::optional<std::string> best_key_;
    double best_reward_ = 0.0;
};

SearchResult run_search(const RunConfig& cfg, const ChoiceDataset& ds);
SearchResult run_search(const RunConfig& cfg, const Estimator& estimator, double null_ll);

bool early_stop_check(const std::vector<EpisodeRecord>& log, const RunConfig& cfg);

/// Non-dominated set over (fewer parameters, better objective), sorted by
/// parameter count. `minimise` selects the objective direction.
std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points, bool minimise = true);
std::vector<ParetoPoint> pareto_front(const std::vector<CachedModel>& models, ParetoObjective objective);

struct SummaryMetrics {
    std::size_t episodes_run = 0;
    std::size_t unique_models = 0;
    double converged_pct = 0.0;
    std::optional<std::size_t> first_recovery;
    double reward_last_100 = 0.0;
    std::optional<double> reference_reward;
    std::optional<double> delta_reward;
    std::optional<double> rmse;
    double novelty_last_100 = 0.0;
    double best_reward = 0.0;
};

SummaryMetrics summarise(const SearchResult& result, const std::optional<std::string>& reference_key,
                         std::optional<double> reference_reward);
/// Log-only variant (the report command recomputes from episodes.csv).
SummaryMetrics summarise_log(const std::vector<EpisodeRecord>& log, const std::optional<std::string>& reference_key,
                             std::optional<double> reference_reward);

/// Share of novel proposals in the trailing `window` episodes ending at each episode.
std::vector<double> rolling_novelty(const std::vector<EpisodeRecord>& log, std::size_t window);

struct ActionUsage {
    std::size_t count = 0;
    double mean_adj_rho2 = 0.0;  // over episodes (in the range) that used the action
};

/// Per-action usage over episodes [first, last) of the log (0-based indices).
std::vector<ActionUsage> action_usage(const std::vector<EpisodeRecord>& log, std::size_t n_actions,
                                      std::size_t first, std::size_t last);

}  // namespace dcmsearch
