#include "dcmsearch/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace dcmsearch {

std::string_view to_string(TargetMode m) { return m == TargetMode::bootstrap ? "bootstrap" : "credit"; }

TargetMode target_mode_from_string(std::string_view s) {
    if (s == "bootstrap") return TargetMode::bootstrap;
    if (s == "credit") return TargetMode::credit;
    throw std::invalid_argument("unknown target mode '" + std::string(s) + "'");
}

void RunConfig::validate() const {
    if (episodes == 0) throw std::invalid_argument("episodes must be positive");
    if (min_episodes > episodes) throw std::invalid_argument("min_episodes must not exceed episodes");
    if (search_window == 0) throw std::invalid_argument("search_window must be at least 1");
    if (!(stop_threshold >= 0.0)) throw std::invalid_argument("stop_threshold must be non-negative");
    if (agent.units == 0) throw std::invalid_argument("hidden units must be positive");
    if (agent.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (agent.target_update == 0) throw std::invalid_argument("target_update must be positive");
    if (!(agent.gamma > 0.0 && agent.gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
    if (!(agent.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    space.validate();
}

Estimator dataset_estimator(const ChoiceDataset& ds, const ModellingSpace& space, const EstimatorOptions& opts) {
    return [&ds, space, opts](const ModelSpec& spec) {
        try {
            return estimate(build_design(spec, space, ds), ds, opts);
        } catch (const std::exception& e) {
            EstimationOutcome failed;
            failed.n_obs = ds.n_obs;
            failed.ll0 = null_log_likelihood(ds);
            failed.ll = std::numeric_limits<double>::quiet_NaN();
            fill_fit_statistics(failed);
            failed.message = e.what();
            return failed;
        }
    };
}

const CachedModel& ModelCache::fetch(const ModelSpec& spec, const Estimator& estimator, std::size_t episode,
                                     bool& hit) {
    SpecKey key = canonical_key(spec);
    if (auto it = index_.find(key); it != index_.end()) {
        hit = true;
        return entries_[it->second];
    }
    hit = false;
    ++calls_;
    EstimationOutcome outcome;
    try {
        outcome = estimator(spec);
    } catch (const std::exception& e) {
        outcome.ll = std::numeric_limits<double>::quiet_NaN();
        outcome.converged = false;
        outcome.message = e.what();
    }
    index_.emplace(key, entries_.size());
    entries_.push_back({std::move(key), spec, std::move(outcome), episode});
    return entries_.back();
}

const CachedModel* ModelCache::find(const SpecKey& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &entries_[it->second];
}

namespace {

std::vector<std::size_t> network_dims(const RunConfig& cfg, std::size_t n_actions) {
    std::vector<std::size_t> dims{encoding_size(cfg.space)};
    for (std::size_t l = 0; l < cfg.agent.hidden_layers; ++l) dims.push_back(cfg.agent.units);
    dims.push_back(n_actions);
    return dims;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

SpecificationSearch::SpecificationSearch(RunConfig cfg, Estimator estimator, double null_ll)
    : cfg_(std::move(cfg)),
      estimator_(std::move(estimator)),
      actions_(enumerate_actions(cfg_.space)),
      adam_(cfg_.agent.learning_rate),
      buffer_(cfg_.agent.buffer_capacity),
      action_rng_(cfg_.seed * 0x9E3779B97F4A7C15ULL + 1),
      replay_rng_(cfg_.seed * 0x9E3779B97F4A7C15ULL + 2),
      tracker_(null_ll) {
    cfg_.validate();
    cfg_.reward.gamma = cfg_.agent.gamma;
    policy_ = init_network(network_dims(cfg_, actions_.size()), cfg_.seed);
    sync_target(policy_, target_);
}

const EpisodeRecord& SpecificationSearch::run_episode() {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const std::size_t e = log_.size() + 1;
    EpisodeRecord rec;
    rec.episode = e;
    rec.epsilon = epsilon_schedule(e - 1, cfg_.episodes, cfg_.agent.epsilon);

    ModelSpec state;
    std::vector<Transition> transitions;
    bool terminated = false;
    const std::size_t cap = cfg_.space.step_cap();
    auto state_code = encode_state(cfg_.space, state);
    while (transitions.size() < cap) {
        const auto mask = valid_mask(cfg_.space, actions_, state);
        const Eigen::VectorXd q = forward(policy_, as_vector(state_code));
        const std::size_t a = select_action(q, mask, rec.epsilon, action_rng_);
        auto step = apply_action(state, actions_[a]);
        Transition t;
        t.state = state_code;
        t.action = a;
        t.next_state = encode_state(cfg_.space, step.state);
        t.next_mask = valid_mask(cfg_.space, actions_, step.state);
        t.terminal = step.terminal || cfg_.agent.target_mode == TargetMode::credit;
        state_code = t.next_state;
        state = std::move(step.state);
        rec.actions.push_back(a);
        transitions.push_back(std::move(t));
        if (step.terminal) {
            terminated = true;
            break;
        }
    }
    rec.steps = transitions.size();
    rec.key = canonical_key(state).text;

    double reward = 0.0;
    if (terminated) {
        bool hit = false;
        const CachedModel& m = cache_.fetch(state, estimator_, e, hit);
        rec.novel = !hit;
        const auto& o = m.outcome;
        reward = episode_reward(o, cfg_.reward, tracker_);
        rec.converged = o.converged;
        rec.ll = o.ll;
        rec.aic = o.aic;
        rec.bic = o.bic;
        rec.adj_rho2 = o.adj_rho2;
        rec.n_params = o.n_params;
    } else {
        rec.truncated = true;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        rec.ll = rec.aic = rec.bic = rec.adj_rho2 = nan;
        transitions.back().terminal = true;
    }
    rec.reward = reward;

    const auto rewards = credit_assign(reward, transitions.size(), cfg_.agent.gamma);
    for (std::size_t l = 0; l < transitions.size(); ++l) transitions[l].reward = rewards[l];
    const auto batch = push_and_sample(buffer_, std::move(transitions), cfg_.agent.batch_size, replay_rng_);
    rec.loss = train_step(policy_, target_, batch, cfg_.agent.gamma, adam_, cfg_.agent.clip_norm);
    if (e % cfg_.agent.target_update == 0) sync_target(policy_, target_);

    if (terminated && reward > 0.0 &&
        (!best_key_ || reward > best_reward_ || (rec.novel && reward >= best_reward_))) {
        best_reward_ = reward;
        best_key_ = rec.key;
        best_.push_back({e, rec.key, reward});
        rec.new_best = true;
    }
    if (cfg_.record_timing) rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();

    log_.push_back(std::move(rec));
    const auto& last = log_.back();
    if (cfg_.progress_every && e % cfg_.progress_every == 0) {
        const std::size_t w = std::min<std::size_t>(100, log_.size());
        double mean = 0.0;
        for (std::size_t i = log_.size() - w; i < log_.size(); ++i) mean += log_[i].reward;
        std::cerr << "episode " << e << "  rolling reward " << mean / static_cast<double>(w) << "  best reward "
                  << best_reward_ << "  unique models " << cache_.size() << '\n';
    }
    return last;
}

bool SpecificationSearch::should_stop() const {
    return finished() || (cfg_.early_stopping && early_stop_check(log_, cfg_));
}

SearchResult SpecificationSearch::result(ParetoObjective objective) const {
    SearchResult r;
    r.episodes = log_;
    r.best_so_far = best_;
    if (best_key_) {
        if (const auto* m = cache_.find(SpecKey{*best_key_})) r.best = *m;
    }
    r.models = cache_.entries();
    r.pareto = pareto_front(r.models, objective);
    r.tracker = tracker_;
    r.estimator_calls = cache_.estimator_calls();
    r.stopped_early = cfg_.early_stopping && !finished() && early_stop_check(log_, cfg_);
    r.policy = policy_;
    r.actions = actions_;
    return r;
}

SearchResult run_search(const RunConfig& cfg, const Estimator& estimator, double null_ll) {
    SpecificationSearch search(cfg, estimator, null_ll);
    ParetoObjective objective = ParetoObjective::aic;
    try {
        while (!search.should_stop()) search.run_episode();
    } catch (const NonFiniteLoss& e) {
        auto r = search.result(objective);
        r.abort_message = e.what();
        return r;
    }
    return search.result(objective);
}

SearchResult run_search(const RunConfig& cfg, const ChoiceDataset& ds) {
    return run_search(cfg, dataset_estimator(ds, cfg.space, cfg.estimator), null_log_likelihood(ds));
}

bool early_stop_check(const std::vector<EpisodeRecord>& log, const RunConfig& cfg) {
    const std::size_t e = log.size();
    const std::size_t w = cfg.search_window;
    if (e <= cfg.min_episodes || e < 2 * w) return false;
    for (std::size_t i = e - w; i < e; ++i) {
        if (log[i].new_best) return false;
    }
    double recent = 0.0, previous = 0.0;
    for (std::size_t i = e - w; i < e; ++i) recent += log[i].reward;
    for (std::size_t i = e - 2 * w; i < e - w; ++i) previous += log[i].reward;
    recent /= static_cast<double>(w);
    previous /= static_cast<double>(w);
    return std::abs(recent - previous) <= cfg.stop_threshold * std::max(std::abs(previous), 1e-9);
}

std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points, bool minimise) {
    auto better = [minimise](double a, double b) { return minimise ? a < b : a > b; };
    std::stable_sort(points.begin(), points.end(), [&](const ParetoPoint& a, const ParetoPoint& b) {
        if (a.n_params != b.n_params) return a.n_params < b.n_params;
        return better(a.objective, b.objective);
    });
    std::vector<ParetoPoint> front;
    std::optional<double> best_smaller;  // best objective among strictly smaller parameter counts
    for (std::size_t i = 0; i < points.size();) {
        std::size_t j = i;
        while (j < points.size() && points[j].n_params == points[i].n_params) ++j;
        const double group_best = points[i].objective;
        if (!best_smaller || better(group_best, *best_smaller)) {
            for (std::size_t k = i; k < j && points[k].objective == group_best; ++k) front.push_back(points[k]);
            best_smaller = group_best;
        }
        i = j;
    }
    return front;
}

std::vector<ParetoPoint> pareto_front(const std::vector<CachedModel>& models, ParetoObjective objective) {
    std::vector<ParetoPoint> pts;
    for (const auto& m : models) {
        if (!m.outcome.converged) continue;
        pts.push_back({m.outcome.n_params, objective == ParetoObjective::aic ? m.outcome.aic : m.outcome.ll,
                       m.key.text});
    }
    return pareto_front(std::move(pts), objective == ParetoObjective::aic);
}

SummaryMetrics summarise_log(const std::vector<EpisodeRecord>& log, const std::optional<std::string>& reference_key,
                             std::optional<double> reference_reward) {
    SummaryMetrics s;
    s.episodes_run = log.size();
    std::size_t converged = 0;
    for (const auto& r : log) {
        if (r.novel) {
            ++s.unique_models;
            if (r.converged) ++converged;
        }
        if (reference_key && !s.first_recovery && !r.truncated && r.key == *reference_key) s.first_recovery = r.episode;
        s.best_reward = std::max(s.best_reward, r.reward);
    }
    s.converged_pct = s.unique_models ? 100.0 * static_cast<double>(converged) / static_cast<double>(s.unique_models) : 0.0;
    const std::size_t w = std::min<std::size_t>(100, log.size());
    double sum = 0.0, novel = 0.0;
    for (std::size_t i = log.size() - w; i < log.size(); ++i) {
        sum += log[i].reward;
        novel += log[i].novel ? 1.0 : 0.0;
    }
    if (w > 0) {
        s.reward_last_100 = sum / static_cast<double>(w);
        s.novelty_last_100 = novel / static_cast<double>(w);
    }
    s.reference_reward = reference_reward;
    if (reference_reward && w > 0) {
        s.delta_reward = s.reward_last_100 - *reference_reward;
        double sq = 0.0;
        for (std::size_t i = log.size() - w; i < log.size(); ++i) {
            const double d = log[i].reward - *reference_reward;
            sq += d * d;
        }
        s.rmse = std::sqrt(sq / static_cast<double>(w));
    }
    return s;
}

SummaryMetrics summarise(const SearchResult& result, const std::optional<std::string>& reference_key,
                         std::optional<double> reference_reward) {
    return summarise_log(result.episodes, reference_key, reference_reward);
}

std::vector<double> rolling_novelty(const std::vector<EpisodeRecord>& log, std::size_t window) {
    std::vector<double> out(log.size());
    double count = 0.0;
    for (std::size_t i = 0; i < log.size(); ++i) {
        count += log[i].novel ? 1.0 : 0.0;
        if (i >= window) count -= log[i - window].novel ? 1.0 : 0.0;
        out[i] = count / static_cast<double>(std::min(window, i + 1));
    }
    return out;
}

std::vector<ActionUsage> action_usage(const std::vector<EpisodeRecord>& log, std::size_t n_actions,
                                      std::size_t first, std::size_t last) {
    std::vector<ActionUsage> usage(n_actions);
    std::vector<double> fit_sum(n_actions, 0.0);
    std::vector<std::size_t> episodes_with(n_actions, 0);
    last = std::min(last, log.size());
    for (std::size_t i = first; i < last; ++i) {
        std::vector<bool> used(n_actions, false);
        for (auto a : log[i].actions) {
            if (a >= n_actions) continue;
            ++usage[a].count;
            used[a] = true;
        }
        for (std::size_t a = 0; a < n_actions; ++a) {
            if (used[a] && log[i].converged) {
                fit_sum[a] += log[i].adj_rho2;
                ++episodes_with[a];
            }
        }
    }
    for (std::size_t a = 0; a < n_actions; ++a) {
        if (episodes_with[a]) usage[a].mean_adj_rho2 = fit_sum[a] / static_cast<double>(episodes_with[a]);
    }
    return usage;
}

}  // namespace dcmsearch
