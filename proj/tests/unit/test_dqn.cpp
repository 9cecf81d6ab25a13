#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "dcmsearch/dqn.hpp"
#include "helpers.hpp"

using namespace dcmsearch;

namespace {

// Plain loop evaluation of the network, independent of Eigen products.
std::vector<double> oracle_forward(const QNetwork& net, std::vector<double> x) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& L = net.layers[l];
        std::vector<double> y(L.weight.rows());
        for (Eigen::Index r = 0; r < L.weight.rows(); ++r) {
            double s = L.bias[r];
            for (Eigen::Index c = 0; c < L.weight.cols(); ++c) s += L.weight(r, c) * x[c];
            y[r] = (l + 1 < net.layers.size()) ? std::max(0.0, s) : s;
        }
        x = std::move(y);
    }
    return x;
}

Transition random_transition(std::size_t in, std::size_t out, std::mt19937_64& rng, bool terminal) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Transition t;
    for (std::size_t i = 0; i < in; ++i) {
        t.state.push_back(u(rng) < 0.5 ? 0.0 : 1.0);
        t.next_state.push_back(u(rng) < 0.5 ? 0.0 : 1.0);
    }
    t.action = std::uniform_int_distribution<std::size_t>(0, out - 1)(rng);
    t.reward = u(rng);
    t.terminal = terminal;
    for (std::size_t a = 0; a < out; ++a) t.next_mask.push_back(u(rng) < 0.6);
    t.next_mask[0] = true;
    return t;
}

std::vector<const Transition*> pointers(const std::vector<Transition>& v) {
    std::vector<const Transition*> p;
    for (const auto& t : v) p.push_back(&t);
    return p;
}

}  // namespace

TEST_SUITE("dqn") {

TEST_CASE("initialisation") {
    const std::vector<std::size_t> dims{38, 64, 64, 39};
    const auto a = init_network(dims, 5), b = init_network(dims, 5), c = init_network(dims, 6);
    CHECK(a.parameter_count() == (38 * 64 + 64) + (64 * 64 + 64) + (64 * 39 + 39));
    CHECK(a.flat_parameters() == b.flat_parameters());
    CHECK(a.flat_parameters() != c.flat_parameters());
    const auto q = forward(a, Eigen::VectorXd::Zero(38));
    CHECK(q.size() == 39);
    CHECK(q.allFinite());
    // He-uniform bound sqrt(6 / fan_in)
    CHECK(a.layers[0].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 38.0));
    CHECK(a.layers[1].bias.isZero());
    CHECK_THROWS(init_network({38, 0, 39}, 1));
}

TEST_CASE("forward pass") {
    auto zero = init_network({5, 8, 3}, 1);
    zero.set_flat_parameters(std::vector<double>(zero.parameter_count(), 0.0));
    CHECK(forward(zero, Eigen::VectorXd::Ones(5)).isZero());

    QNetwork id = init_network({4, 2}, 1);
    id.layers[0].weight.setZero();
    id.layers[0].weight(0, 1) = 1.0;
    id.layers[0].weight(1, 3) = 1.0;
    id.layers[0].bias.setZero();
    Eigen::VectorXd x(4);
    x << 0.1, -0.2, 0.3, 0.7;
    const auto y = forward(id, x);
    CHECK(y[0] == -0.2);
    CHECK(y[1] == 0.7);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int r = 0; r < 20; ++r) {
        const auto net = init_network({7, 11, 5, 4}, 100 + r);
        std::vector<double> in(7);
        for (auto& v : in) v = g(rng);
        const auto q = forward(net, Eigen::Map<Eigen::VectorXd>(in.data(), 7));
        const auto o = oracle_forward(net, in);
        for (int i = 0; i < 4; ++i) CHECK(std::abs(q[i] - o[i]) < 1e-10);
    }

    const auto net = init_network({6, 9, 3}, 2);
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(6, 5);
    const auto Q = forward_batch(net, X);
    for (int c = 0; c < 5; ++c) CHECK((Q.col(c) - forward(net, X.col(c))).norm() < 1e-12);
}

TEST_CASE("action selection") {
    std::mt19937_64 rng(1);
    Eigen::VectorXd q(3);
    q << 5, 1, 9;
    CHECK(select_action(q, {true, true, false}, 0.0, rng) == 0);

    Eigen::VectorXd tie(5);
    tie << 0, 1, 3, 2, 3;
    CHECK(select_action(tie, {true, true, true, true, true}, 0.0, rng) == 2);

    CHECK_THROWS_AS(select_action(q, {false, false, false}, 0.0, rng), std::logic_error);

    Eigen::VectorXd q5 = Eigen::VectorXd::Zero(5);
    const std::vector<bool> mask{false, true, false, true, true};
    std::map<std::size_t, int> counts;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[select_action(q5, mask, 1.0, rng)];
    CHECK(counts.size() == 3);
    for (auto [a, c] : counts) {
        CHECK(mask[a]);
        CHECK(std::abs(c / static_cast<double>(draws) - 1.0 / 3.0) < 0.01);
    }
}

TEST_CASE("selection never returns a masked id") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 5000; ++i) {
        Eigen::VectorXd q(12);
        std::vector<bool> mask(12);
        for (int a = 0; a < 12; ++a) {
            q[a] = u(rng);
            mask[a] = u(rng) > 0;
        }
        mask[i % 12] = true;
        const double eps = (i % 3) / 2.0;
        CHECK(mask[select_action(q, mask, eps, rng)]);
    }
}

TEST_CASE("epsilon schedule") {
    const EpsilonSchedule s{1.0, 0.05, 0.5};
    CHECK(epsilon_schedule(0, 1000, s) == 1.0);
    CHECK(epsilon_schedule(500, 1000, s) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(epsilon_schedule(250, 1000, s) == doctest::Approx(0.525).epsilon(1e-15));
    CHECK(epsilon_schedule(900, 1000, s) == doctest::Approx(0.05).epsilon(1e-15));
}

TEST_CASE("replay buffer") {
    ReplayBuffer b(2);
    for (int i = 0; i < 3; ++i) {
        Transition t;
        t.action = static_cast<std::size_t>(i);
        b.push(t);
    }
    CHECK(b.size() == 2);
    CHECK(b.inserted() == 3);
    CHECK(b.at(0).action == 1);
    CHECK(b.at(1).action == 2);

    ReplayBuffer big(10);
    for (std::size_t i = 0; i < 10; ++i) {
        Transition t;
        t.action = i;
        big.push(t);
    }
    std::mt19937_64 rng(1);
    auto all = big.sample(10, rng);
    std::vector<std::size_t> ids;
    for (auto* t : all) ids.push_back(t->action);
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(ids[i] == i);
    CHECK(big.sample(50, rng).size() == 10);
}

TEST_CASE("replay sampling is uniform") {
    ReplayBuffer b(100);
    for (std::size_t i = 0; i < 100; ++i) {
        Transition t;
        t.action = i;
        b.push(t);
    }
    std::mt19937_64 rng(17);
    std::vector<int> counts(100, 0);
    const int rounds = 100000;
    for (int r = 0; r < rounds; ++r) {
        for (auto* t : b.sample(1, rng)) ++counts[t->action];
    }
    // Pearson chi-square, 99 degrees of freedom; 148.2 is the 0.999 quantile.
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
    CHECK(chi2 < 148.2);
}

TEST_CASE("push_and_sample keeps FIFO order") {
    ReplayBuffer b(4);
    std::mt19937_64 rng(2);
    std::vector<Transition> fresh(6);
    for (std::size_t i = 0; i < 6; ++i) fresh[i].action = i;
    const auto batch = push_and_sample(b, fresh, 3, rng);
    CHECK(batch.size() == 3);
    CHECK(b.at(0).action == 2);
    for (auto* t : batch) CHECK(t->action >= 2);
}

TEST_CASE("terminal fixed point") {
    auto policy = init_network({3, 8, 2}, 4);
    for (auto& L : policy.layers) {
        L.weight.setZero();
        L.bias.setZero();
    }
    policy.layers[0].weight.setConstant(0.1);
    policy.layers[1].bias.setZero();
    const auto target = policy;
    Transition t;
    t.state = {0.0, 0.0, 0.0};
    t.next_state = {0.0, 0.0, 0.0};
    t.next_mask = {true, true};
    t.action = 1;
    t.reward = 1.0;
    t.terminal = true;
    const std::vector<Transition> batch(4, t);
    const auto lg = td_loss_and_gradient(policy, target, pointers(batch), 0.99);
    CHECK(lg.loss == 1.0);

    AdamState adam(1e-2);
    double loss = 1.0;
    for (int i = 0; i < 3000; ++i) loss = train_step(policy, target, pointers(batch), 0.99, adam);
    CHECK(loss < 1e-6);
    CHECK(forward(policy, Eigen::VectorXd::Zero(3))[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("TD gradient matches finite differences") {
    std::mt19937_64 rng(12);
    auto policy = init_network({5, 6, 4, 3}, 21);
    const auto target = init_network({5, 6, 4, 3}, 22);
    std::vector<Transition> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(random_transition(5, 3, rng, i % 3 == 0));
    const auto ptrs = pointers(batch);
    const auto lg = td_loss_and_gradient(policy, target, ptrs, 0.9);

    std::vector<double> analytic;
    for (const auto& g : lg.grads) {
        for (Eigen::Index r = 0; r < g.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < g.weight.cols(); ++c) analytic.push_back(g.weight(r, c));
        }
        for (Eigen::Index r = 0; r < g.bias.size(); ++r) analytic.push_back(g.bias[r]);
    }
    const auto theta = policy.flat_parameters();
    REQUIRE(analytic.size() == theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double h = 1e-6;
        auto up = theta, dn = theta;
        up[i] += h;
        dn[i] -= h;
        QNetwork pu = policy, pd = policy;
        pu.set_flat_parameters(up);
        pd.set_flat_parameters(dn);
        const double fd = (td_loss_and_gradient(pu, target, ptrs, 0.9).loss -
                           td_loss_and_gradient(pd, target, ptrs, 0.9).loss) / (2 * h);
        CHECK(std::abs(fd - analytic[i]) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("masked next actions never enter the target") {
    std::mt19937_64 rng(5);
    const auto policy = init_network({4, 6, 3}, 1);
    auto target = init_network({4, 6, 3}, 2);
    auto t = random_transition(4, 3, rng, false);
    t.next_mask = {true, false, false};
    const std::vector<Transition> batch{t};
    const double before = td_loss_and_gradient(policy, target, pointers(batch), 0.99).loss;
    auto hacked = target;
    hacked.layers.back().bias[1] = 1e6;
    hacked.layers.back().bias[2] = 1e6;
    CHECK(td_loss_and_gradient(policy, hacked, pointers(batch), 0.99).loss == before);
}

TEST_CASE("target sync") {
    auto policy = init_network({4, 5, 3}, 1);
    auto target = init_network({4, 5, 3}, 2);
    sync_target(policy, target);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd s = Eigen::VectorXd::Random(4);
        CHECK(forward(policy, s) == forward(target, s));
    }
    const Eigen::VectorXd probe = Eigen::VectorXd::Ones(4);
    const auto frozen = forward(target, probe);
    std::vector<Transition> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(random_transition(4, 3, rng, false));
    AdamState adam(1e-2);
    for (int i = 0; i < 10; ++i) train_step(policy, target, pointers(batch), 0.99, adam);
    CHECK(forward(target, probe) == frozen);
    CHECK(forward(policy, probe) != frozen);
}

TEST_CASE("gradients are clipped to the global norm") {
    std::mt19937_64 rng(8);
    auto policy = init_network({4, 5, 3}, 1);
    const auto target = policy;
    std::vector<Transition> batch;
    for (int i = 0; i < 4; ++i) {
        auto t = random_transition(4, 3, rng, true);
        t.reward = 1e6;
        batch.push_back(t);
    }
    const auto lg = td_loss_and_gradient(policy, target, pointers(batch), 0.99);
    double norm = 0.0;
    for (const auto& g : lg.grads) norm += g.weight.squaredNorm() + g.bias.squaredNorm();
    CHECK(std::sqrt(norm) > 10.0);
    AdamState adam(1e-3);
    const auto before = policy.flat_parameters();
    train_step(policy, target, pointers(batch), 0.99, adam, 10.0);
    const auto after = policy.flat_parameters();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::abs(after[i] - before[i]) <= 1e-3 * 1.0001);
    // After one step the first moment is (1 - beta1) times the clipped gradient.
    double m_norm = 0.0;
    for (const auto& m : adam.m) m_norm += m.weight.squaredNorm() + m.bias.squaredNorm();
    CHECK(std::sqrt(m_norm) == doctest::Approx((1 - adam.beta1) * 10.0).epsilon(1e-9));
}

TEST_CASE("non-finite loss is reported") {
    auto policy = init_network({2, 3, 2}, 1);
    const auto target = policy;
    Transition t;
    t.state = {1.0, 1.0};
    t.next_state = {1.0, 1.0};
    t.next_mask = {true, true};
    t.reward = std::numeric_limits<double>::quiet_NaN();
    t.terminal = true;
    const std::vector<Transition> batch{t};
    AdamState adam(1e-3);
    CHECK_THROWS_AS(train_step(policy, target, pointers(batch), 0.99, adam), NonFiniteLoss);
}

TEST_CASE("checkpoint restores bit-identical outputs") {
    const auto net = init_network({38, 64, 64, 39}, 77);
    const auto back = checkpoint_from_json(checkpoint_json(net));
    CHECK(back.dims == net.dims);
    CHECK(back.flat_parameters() == net.flat_parameters());
    const auto dir = testutil::temp_dir("ckpt");
    save_checkpoint(net, dir / "c.json");
    const auto loaded = load_checkpoint(dir / "c.json");
    const Eigen::VectorXd s = Eigen::VectorXd::Random(38);
    CHECK(forward(loaded, s) == forward(net, s));
    CHECK_THROWS(checkpoint_from_json("{\"format\":\"other\"}"));
}

TEST_CASE("training is deterministic") {
    auto run = [] {
        std::mt19937_64 rng(4);
        auto policy = init_network({6, 8, 4}, 3);
        auto target = policy;
        ReplayBuffer buf(50);
        AdamState adam(1e-3);
        for (int e = 0; e < 30; ++e) {
            std::vector<Transition> fresh;
            for (int i = 0; i < 3; ++i) fresh.push_back(random_transition(6, 4, rng, i == 2));
            const auto batch = push_and_sample(buf, fresh, 8, rng);
            train_step(policy, target, batch, 0.99, adam);
            if (e % 5 == 0) sync_target(policy, target);
        }
        return policy.flat_parameters();
    };
    CHECK(run() == run());
}

}
