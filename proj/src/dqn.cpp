#include "dcmsearch/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace dcmsearch {

std::size_t QNetwork::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

std::vector<double> QNetwork::flat_parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers) {
        // row-major weights, then bias
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat.push_back(l.weight(r, c));
        }
        flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return flat;
}

void QNetwork::set_flat_parameters(const std::vector<double>& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("parameter vector has the wrong length");
    std::size_t i = 0;
    for (auto& l : layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[i++];
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[i++];
    }
}

bool QNetwork::all_finite() const {
    return std::all_of(layers.begin(), layers.end(),
                       [](const Layer& l) { return l.weight.allFinite() && l.bias.allFinite(); });
}

QNetwork init_network(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("network needs an input and an output layer");
    for (auto d : dims) {
        if (d == 0) throw std::invalid_argument("zero-width layer");
    }
    QNetwork net;
    net.dims = dims;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(dims[l]);
        const auto out = static_cast<Eigen::Index>(dims[l + 1]);
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        QNetwork::Layer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
        for (Eigen::Index r = 0; r < out; ++r) {
            for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Eigen::MatrixXd forward_batch(const QNetwork& net, const Eigen::MatrixXd& inputs) {
    if (static_cast<std::size_t>(inputs.rows()) != net.input_dim()) {
        throw std::invalid_argument("input length does not match the network");
    }
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        Eigen::MatrixXd z = layer.weight * a;
        z.colwise() += layer.bias;
        a = l + 1 < net.layers.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    }
    return a;
}

Eigen::VectorXd forward(const QNetwork& net, const Eigen::VectorXd& input) { return forward_batch(net, input); }

void sync_target(const QNetwork& policy, QNetwork& target) { target = policy; }

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
    ++inserted_;
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
        return;
    }
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

std::vector<const Transition*> ReplayBuffer::sample(std::size_t k, std::mt19937_64& rng) const {
    std::vector<std::size_t> all(items_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> picked;
    picked.reserve(std::min(k, all.size()));
    std::sample(all.begin(), all.end(), std::back_inserter(picked), k, rng);
    std::vector<const Transition*> out;
    out.reserve(picked.size());
    for (auto i : picked) out.push_back(&items_[i]);
    return out;
}

std::vector<const Transition*> push_and_sample(ReplayBuffer& buffer, std::vector<Transition> fresh,
                                               std::size_t batch_size, std::mt19937_64& rng) {
    for (auto& t : fresh) buffer.push(std::move(t));
    return buffer.sample(batch_size, rng);
}

void AdamState::apply(QNetwork& net, const std::vector<QNetwork::Layer>& grads) {
    if (m.empty()) {
        for (const auto& l : net.layers) {
            m.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
        }
        v = m;
    }
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    auto update = [&](auto& param, const auto& g, auto& mom, auto& var) {
        mom = beta1 * mom + (1.0 - beta1) * g;
        var = beta2 * var + (1.0 - beta2) * g.cwiseProduct(g);
        param.array() -= learning_rate * (mom.array() / c1) / ((var.array() / c2).sqrt() + epsilon);
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        update(net.layers[l].weight, grads[l].weight, m[l].weight, v[l].weight);
        update(net.layers[l].bias, grads[l].bias, m[l].bias, v[l].bias);
    }
}

double epsilon_schedule(std::size_t episode, std::size_t total_episodes, const EpsilonSchedule& s) {
    const double decay_end = s.decay_frac * static_cast<double>(total_episodes);
    if (!(decay_end > 0.0)) return s.end;
    const double frac = std::min(1.0, static_cast<double>(episode) / decay_end);
    return s.start + (s.end - s.start) * frac;
}

std::size_t select_action(const Eigen::VectorXd& q, const std::vector<bool>& mask, double epsilon,
                          std::mt19937_64& rng) {
    if (static_cast<std::size_t>(q.size()) != mask.size()) throw std::invalid_argument("mask length mismatch");
    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) valid.push_back(i);
    }
    if (valid.empty()) throw std::logic_error("every action is masked");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (epsilon > 0.0 && u01(rng) < epsilon) {
        std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
        return valid[pick(rng)];
    }
    std::size_t best = valid.front();
    double best_q = -std::numeric_limits<double>::infinity();
    for (std::size_t i : valid) {
        const double adjusted = q[static_cast<Eigen::Index>(i)] + (mask[i] ? 0.0 : kMaskPenalty);
        if (adjusted > best_q) {
            best_q = adjusted;
            best = i;
        }
    }
    return best;
}

LossAndGradient td_loss_and_gradient(const QNetwork& policy, const QNetwork& target,
                                     const std::vector<const Transition*>& batch, double gamma) {
    if (batch.empty()) throw std::invalid_argument("empty training batch");
    const auto B = static_cast<Eigen::Index>(batch.size());
    const auto in = static_cast<Eigen::Index>(policy.input_dim());
    Eigen::MatrixXd s(in, B), s_next(in, B);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto& t = *batch[static_cast<std::size_t>(i)];
        s.col(i) = Eigen::Map<const Eigen::VectorXd>(t.state.data(), in);
        s_next.col(i) = Eigen::Map<const Eigen::VectorXd>(t.next_state.data(), in);
    }

    Eigen::VectorXd y(B);
    const Eigen::MatrixXd q_next = forward_batch(target, s_next);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto& t = *batch[static_cast<std::size_t>(i)];
        y[i] = t.reward;
        if (t.terminal) continue;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < t.next_mask.size(); ++a) {
            if (t.next_mask[a]) best = std::max(best, q_next(static_cast<Eigen::Index>(a), i));
        }
        if (std::isfinite(best)) y[i] += gamma * best;
    }

    // Forward pass keeping pre-activations for backprop.
    const std::size_t L = policy.layers.size();
    std::vector<Eigen::MatrixXd> acts{s}, pre;
    for (std::size_t l = 0; l < L; ++l) {
        Eigen::MatrixXd z = policy.layers[l].weight * acts.back();
        z.colwise() += policy.layers[l].bias;
        pre.push_back(z);
        acts.push_back(l + 1 < L ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
    }

    LossAndGradient out;
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(acts.back().rows(), B);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto a = static_cast<Eigen::Index>(batch[static_cast<std::size_t>(i)]->action);
        const double err = y[i] - acts.back()(a, i);
        loss += err * err;
        delta(a, i) = -2.0 * err / static_cast<double>(B);
    }
    out.loss = loss / static_cast<double>(B);

    out.grads.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        out.grads[l].weight = delta * acts[l].transpose();
        out.grads[l].bias = delta.rowwise().sum();
        if (l > 0) {
            delta = (policy.layers[l].weight.transpose() * delta).cwiseProduct(
                (pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return out;
}

double train_step(QNetwork& policy, const QNetwork& target, const std::vector<const Transition*>& batch,
                  double gamma, AdamState& adam, double clip_norm) {
    auto lg = td_loss_and_gradient(policy, target, batch, gamma);
    if (!std::isfinite(lg.loss)) throw NonFiniteLoss("non-finite TD loss");
    double sq = 0.0;
    for (const auto& g : lg.grads) sq += g.weight.squaredNorm() + g.bias.squaredNorm();
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NonFiniteLoss("non-finite gradient");
    if (clip_norm > 0.0 && norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (auto& g : lg.grads) {
            g.weight *= scale;
            g.bias *= scale;
        }
    }
    adam.apply(policy, lg.grads);
    if (!policy.all_finite()) throw NonFiniteLoss("network parameters became non-finite");
    return lg.loss;
}

std::string checkpoint_json(const QNetwork& net) {
    nlohmann::json j;
    j["format"] = "dcmsearch-qnetwork";
    j["version"] = 1;
    j["dims"] = net.dims;
    j["parameters"] = net.flat_parameters();
    return j.dump();
}

QNetwork checkpoint_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "dcmsearch-qnetwork" || j.value("version", 0) != 1) {
        throw std::invalid_argument("not a version-1 network checkpoint");
    }
    QNetwork net = init_network(j.at("dims").get<std::vector<std::size_t>>(), 0);
    net.set_flat_parameters(j.at("parameters").get<std::vector<double>>());
    return net;
}

void save_checkpoint(const QNetwork& net, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << checkpoint_json(net) << '\n';
}

QNetwork load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return checkpoint_from_json(ss.str());
}

}  // namespace dcmsearch
