#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "uaf/policy.hpp"
#include "uaf/tensor.hpp"

using namespace uaf;

namespace {

PolicyConfig small_policy(PolicyMode mode) {
    PolicyConfig cfg;
    cfg.vocab_size = 20;
    cfg.embed_dim = 8;
    cfg.seq_len = 10;
    cfg.num_gates = 4;
    cfg.kernel_size = 3;
    cfg.mode = mode;
    return cfg;
}

}  // namespace

TEST_CASE("policy forward is deterministic and covers all blocks at once") {
    NoGradGuard ng;
    auto net = PolicyNetwork::init(small_policy(PolicyMode::hard), 1);
    std::vector<int> seq = {0, 0, 0, 3, 7, 2, 9, 5, 1, 8};
    Tensor a = net.forward_logits(seq);
    Tensor b = net.forward_logits(seq);
    REQUIRE(a.shape() == std::vector<int>{4, 2});
    for (int l = 0; l < 4; ++l)
        for (int c = 0; c < 2; ++c) CHECK(a.at(l, c) == b.at(l, c));

    auto soft_net = PolicyNetwork::init(small_policy(PolicyMode::soft), 1);
    CHECK(soft_net.forward_logits(seq).shape() == std::vector<int>{4});
}

TEST_CASE("zeroed policy head gives symmetric class probabilities") {
    NoGradGuard ng;
    auto net = PolicyNetwork::init(small_policy(PolicyMode::hard), 2);
    net.head_w = Tensor::zeros(net.head_w.shape());
    net.head_b = Tensor::zeros(net.head_b.shape());
    Tensor logits = net.forward_logits({1, 2, 3, 4, 5, 6, 7, 8, 9, 1});
    Tensor probs = softmax_rows(logits);
    for (int l = 0; l < 4; ++l) {
        CHECK(probs.at(l, 0) == doctest::Approx(0.5).epsilon(1e-7));
        CHECK(probs.at(l, 1) == doctest::Approx(0.5).epsilon(1e-7));
    }
}

TEST_CASE("gumbel noise closed forms") {
    CHECK(gumbel_noise(0.5) == doctest::Approx(0.3665129206).epsilon(1e-6));
    CHECK(gumbel_noise(std::exp(-1.0)) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS(gumbel_noise(0.0));
    CHECK_THROWS(gumbel_noise(1.0));
    CHECK_THROWS(gumbel_noise(-0.5));
}

TEST_CASE("gumbel noise mean approaches the Euler-Mascheroni constant") {
    std::mt19937_64 rng(3);
    double total = 0;
    const int draws = 1000000;
    for (int i = 0; i < draws; ++i) total += sample_gumbel(rng);
    CHECK(total / draws == doctest::Approx(0.5772156649).epsilon(0.02));
    CHECK(std::fabs(total / draws - 0.5772156649) < 0.01);
}

TEST_CASE("gumbel hard sample follows the argmax rule with freeze ties") {
    CHECK(gumbel_hard_sample({std::log(0.9), std::log(0.1)}, {0.0, 0.0}) == 0);
    CHECK(gumbel_hard_sample({std::log(0.1), std::log(0.9)}, {0.0, 0.0}) == 1);
    CHECK(gumbel_hard_sample({0.3, 0.3}, {0.0, 0.0}) == 0);  // tie -> freeze
}

TEST_CASE("gumbel-max empirical distribution matches the categorical oracle") {
    std::mt19937_64 rng(4);
    std::vector<double> log_pi = {std::log(0.3), std::log(0.7)};
    const int draws = 100000;
    int ones = 0;
    for (int i = 0; i < draws; ++i) {
        std::vector<double> g = {sample_gumbel(rng), sample_gumbel(rng)};
        ones += gumbel_hard_sample(log_pi, g);
    }
    double freq = static_cast<double>(ones) / draws;
    CHECK(std::fabs(freq - 0.7) <= 0.02);  // total variation for two classes
}

TEST_CASE("gumbel softmax relaxation sums to one and respects the temperature") {
    std::vector<double> log_pi = {1.3, -0.4};
    std::vector<double> g = {0.2, 0.9};
    // Symmetric case.
    auto sym = gumbel_softmax_relax({0.0, 0.0}, {0.0, 0.0}, 1.0);
    CHECK(sym[0] == doctest::Approx(0.5).epsilon(1e-9));
    // Large tau flattens.
    auto flat = gumbel_softmax_relax(log_pi, g, 1e4);
    CHECK(flat[0] == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(flat[0] + flat[1] == doctest::Approx(1.0).epsilon(1e-9));
    // Tiny tau sharpens onto the hard argmax.
    auto sharp = gumbel_softmax_relax(log_pi, g, 0.01);
    int hard = gumbel_hard_sample(log_pi, g);
    CHECK(std::max(sharp[0], sharp[1]) > 0.999);
    CHECK((sharp[0] > sharp[1] ? 0 : 1) == hard);
    // Monotone sharpening as tau decreases, constant argmax once tau <= 1.
    double prev_max = 0.0;
    int prev_arg = -1;
    for (double tau : {10.0, 1.0, 0.1, 0.01}) {
        auto a = gumbel_softmax_relax(log_pi, g, tau);
        double mx = std::max(a[0], a[1]);
        CHECK(mx >= prev_max);
        prev_max = mx;
        int arg = a[0] > a[1] ? 0 : 1;
        if (tau <= 1.0) {
            if (prev_arg >= 0) CHECK(arg == prev_arg);
            prev_arg = arg;
        }
    }
    CHECK_THROWS(gumbel_softmax_relax(log_pi, g, 0.0));
}

TEST_CASE("straight-through gates are hard forward and relaxed backward") {
    auto net = PolicyNetwork::init(small_policy(PolicyMode::hard), 5);
    std::vector<int> seq = {0, 2, 3, 4, 5, 6, 7, 8, 9, 1};
    std::mt19937_64 rng(6);
    std::vector<std::vector<double>> noise(4);
    for (auto& pair : noise) pair = {sample_gumbel(rng), sample_gumbel(rng)};
    Tensor logits = net.forward_logits(seq);
    Tensor gates = straight_through_gates(logits, noise, 10.0);
    REQUIRE(gates.shape() == std::vector<int>{4});
    // Forward values are the exact hard picks.
    Tensor lp = log_softmax_rows(logits);
    for (int l = 0; l < 4; ++l) {
        int pick = gumbel_hard_sample({lp.at(l, 0), lp.at(l, 1)},
                                      noise[static_cast<size_t>(l)]);
        CHECK(gates.at(l) == (pick == 1 ? 1.0 : 0.0));
    }
    // Backward follows the relaxed path: the analytic gradient of the gates
    // equals the gradient of alpha_1 = softmax((log pi + g)/tau) per block.
    DtypeGuard f64(Dtype::f64);
    const double tau = 10.0;
    std::vector<double> vals = {0.3, -0.2, 1.1, 0.4, -0.9, 0.1, 0.0, 0.7};
    auto relaxed_alpha1 = [&noise, tau](const Tensor& x) {
        std::vector<double> flat_noise;
        for (const auto& pair : noise) flat_noise.insert(flat_noise.end(), pair.begin(), pair.end());
        Tensor g = Tensor::from_data({4, 2}, flat_noise);
        Tensor scaled = affine(add(log_softmax_rows(x), g), 1.0 / tau, 0.0);
        return sum(column(softmax_rows(scaled), 1));
    };
    // The relaxed reference itself passes a finite-difference check...
    CHECK(grad_check(relaxed_alpha1, Tensor::from_data({4, 2}, vals, true)) < 1e-4);
    // ...and the straight-through gates reproduce its gradient exactly.
    Tensor st_in = Tensor::from_data({4, 2}, vals, true);
    backward(sum(straight_through_gates(st_in, noise, tau)));
    Tensor rel_in = Tensor::from_data({4, 2}, vals, true);
    backward(relaxed_alpha1(rel_in));
    for (size_t i = 0; i < vals.size(); ++i)
        CHECK(st_in.grad()[i] == doctest::Approx(rel_in.grad()[i]).epsilon(1e-8));
}

TEST_CASE("soft gates are a sigmoid with checkable gradients") {
    Tensor v = Tensor::from_data({3}, {0.0, 100.0, -100.0});
    Tensor g = soft_gates(v);
    CHECK(g.at(0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(g.at(1) > 0.999999);
    CHECK(g.at(2) < 1e-6);
    DtypeGuard f64(Dtype::f64);
    double err = grad_check(
        [](const Tensor& x) { return sum(soft_gates(x)); },
        Tensor::from_data({4}, {0.3, -1.2, 0.05, 2.4}, true));
    CHECK(err < 1e-4);
}

TEST_CASE("reward closed forms and monotonicity") {
    RewardConfig cfg{1.0, 8};
    std::vector<int> two = {1, 1, 0, 0, 0, 0, 0, 0};
    std::vector<int> all(8, 1);
    CHECK(reward(two, true, cfg) == 0.9375);
    CHECK(reward(all, true, cfg) == 0.0);
    CHECK(reward(two, false, cfg) == -1.0);
    double prev = 2.0;
    for (int m = 0; m <= 8; ++m) {
        std::vector<int> a(8, 0);
        for (int i = 0; i < m; ++i) a[static_cast<size_t>(i)] = 1;
        double r = reward(a, true, cfg);
        CHECK(r < prev);
        prev = r;
    }
}

TEST_CASE("scst loss hand values and zero-advantage identity") {
    // Uniform per-block probabilities.
    Tensor logits = Tensor::zeros({2, 2}, true);
    std::vector<int> sampled = {1, 0};
    NoGradGuard ng;
    Tensor loss = scst_loss(logits, sampled, 0.9375, 0.0);
    CHECK(loss.value() == doctest::Approx(-2.0 * std::log(0.5) * 0.9375).epsilon(1e-5));
    CHECK(loss.value() == doctest::Approx(1.29956).epsilon(1e-4));
    // Identical rollouts: zero advantage, zero loss.
    CHECK(scst_loss(logits, sampled, 0.5, 0.5).value() == 0.0);
    // Negative advantage flips the sign.
    CHECK(scst_loss(logits, sampled, 0.0, 0.9375).value() ==
          doctest::Approx(-1.29956).epsilon(1e-4));
}

TEST_CASE("scst gradients flow only through the log-probabilities") {
    DtypeGuard f64(Dtype::f64);
    std::vector<int> sampled = {1, 0, 1};
    double err = grad_check(
        [&sampled](const Tensor& x) { return scst_loss(x, sampled, 0.8, 0.3); },
        Tensor::from_data({3, 2}, {0.4, -0.2, 1.0, 0.3, -0.7, 0.2}, true));
    CHECK(err < 1e-4);
    // Same logits, different rewards with the same advantage: identical grads.
    Tensor a = Tensor::from_data({3, 2}, {0.4, -0.2, 1.0, 0.3, -0.7, 0.2}, true);
    backward(scst_loss(a, sampled, 0.8, 0.3));
    std::vector<double> ga = a.grad();
    Tensor b = Tensor::from_data({3, 2}, {0.4, -0.2, 1.0, 0.3, -0.7, 0.2}, true);
    backward(scst_loss(b, sampled, 0.5, 0.0));
    for (size_t i = 0; i < ga.size(); ++i)
        CHECK(ga[i] == doctest::Approx(b.grad()[i]).epsilon(1e-9));
}

TEST_CASE("rl action sampling follows the categorical distribution") {
    NoGradGuard ng;
    // Degenerate distribution: always freeze.
    Tensor frozen = Tensor::from_data({2, 2}, {50.0, -50.0, 50.0, -50.0});
    std::mt19937_64 rng(7);
    auto acts = rl_actions(frozen, rng);
    CHECK(acts.sampled == std::vector<int>{0, 0});
    CHECK(acts.greedy == std::vector<int>{0, 0});
    // Argmax ties break toward freeze.
    Tensor tied = Tensor::zeros({2, 2});
    CHECK(rl_actions(tied, rng).greedy == std::vector<int>{0, 0});
    // Uniform distribution: sampled fine-tune frequency near one half.
    int ones = 0;
    const int draws = 100000;
    Tensor uniform = Tensor::zeros({1, 2});
    for (int i = 0; i < draws; ++i) ones += rl_actions(uniform, rng).sampled[0];
    CHECK(std::fabs(static_cast<double>(ones) / draws - 0.5) < 0.01);
}

TEST_CASE("random policy is seed deterministic with a fair rate") {
    auto a = random_policy(99, 6);
    auto b = random_policy(99, 6);
    CHECK(a.gates == b.gates);
    CHECK(a.gates.size() == 6);
    for (double g : a.gates) CHECK((g == 0.0 || g == 1.0));
    CHECK(random_policy(99, 0).gates.empty());
    int ones = 0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        auto d = random_policy(static_cast<uint64_t>(i), 1);
        ones += d.gates[0] == 1.0 ? 1 : 0;
    }
    CHECK(std::fabs(static_cast<double>(ones) / draws - 0.5) < 0.01);
}

TEST_CASE("policy mode strings round trip") {
    for (auto m : {PolicyMode::hard, PolicyMode::soft, PolicyMode::rl, PolicyMode::random})
        CHECK(policy_mode_from_string(to_string(m)) == m);
    CHECK_THROWS(policy_mode_from_string("warm"));
}
