#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dcmsearch {

/// Fully connected network: rectifier hidden layers, linear output layer.
struct QNetwork {
    struct Layer {
        Eigen::MatrixXd weight;  // out x in
        Eigen::VectorXd bias;
    };
    std::vector<std::size_t> dims;  // input, hidden..., output
    std::vector<Layer> layers;

    std::size_t input_dim() const { return dims.front(); }
    std::size_t output_dim() const { return dims.back(); }
    std::size_t parameter_count() const;
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(const std::vector<double>& flat);
    bool all_finite() const;
};

/// He-scaled uniform weights, zero biases. Throws on a zero-width layer.
QNetwork init_network(const std::vector<std::size_t>& dims, std::uint64_t seed);

Eigen::VectorXd forward(const QNetwork& net, const Eigen::VectorXd& input);
/// Column-wise batch evaluation (input is in x batch).
Eigen::MatrixXd forward_batch(const QNetwork& net, const Eigen::MatrixXd& inputs);

/// Target network: copies the policy exactly.
void sync_target(const QNetwork& policy, QNetwork& target);

struct Transition {
    std::vector<double> state;
    std::size_t action = 0;
    double reward = 0.0;
    std::vector<double> next_state;
    std::vector<bool> next_mask;
    bool terminal = false;
};

/// FIFO ring buffer of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t inserted() const { return inserted_; }
    /// i-th oldest stored transition.
    const Transition& at(std::size_t i) const;

    /// Uniform sample without replacement of min(k, size()) transitions.
    std::vector<const Transition*> sample(std::size_t k, std::mt19937_64& rng) const;

private:
    std::size_t capacity_;
    std::vector<Transition> items_;
    std::size_t head_ = 0;  // position of the oldest item once full
    std::uint64_t inserted_ = 0;
};

std::vector<const Transition*> push_and_sample(ReplayBuffer& buffer, std::vector<Transition> fresh,
                                               std::size_t batch_size, std::mt19937_64& rng);

struct AdamState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<QNetwork::Layer> m, v;

    explicit AdamState(double lr = 1e-4) : learning_rate(lr) {}
    void apply(QNetwork& net, const std::vector<QNetwork::Layer>& grads);
};

struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    double decay_frac = 0.5;
};

double epsilon_schedule(std::size_t episode, std::size_t total_episodes, const EpsilonSchedule& s);

/// Added to masked Q-values at selection time.
inline constexpr double kMaskPenalty = -1e9;

/// Epsilon-greedy over valid actions; greedy ties go to the lowest id.
/// Throws std::logic_error when nothing is valid.
std::size_t select_action(const Eigen::VectorXd& q, const std::vector<bool>& mask, double epsilon,
                          std::mt19937_64& rng);

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LossAndGradient {
    double loss = 0.0;
    std::vector<QNetwork::Layer> grads;
};

/// Mean squared TD error against r + gamma * max_{valid a'} Q_target(s', a'),
/// with the gradient taken through Q(s, a) only.
LossAndGradient td_loss_and_gradient(const QNetwork& policy, const QNetwork& target,
                                     const std::vector<const Transition*>& batch, double gamma);

/// One Adam step on the TD loss; gradients are clipped to a global norm of
/// `clip_norm`. Returns the pre-update loss. Throws NonFiniteLoss.
double train_step(QNetwork& policy, const QNetwork& target, const std::vector<const Transition*>& batch,
                  double gamma, AdamState& adam, double clip_norm = 10.0);

/// JSON checkpoint: dims + flat parameters, restored bit-exactly.
void save_checkpoint(const QNetwork& net, const std::filesystem::path& path);
QNetwork load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_json(const QNetwork& net);
QNetwork checkpoint_from_json(const std::string& text);

}  // namespace dcmsearch
