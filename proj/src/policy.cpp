#include "uaf/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace uaf {

PolicyMode policy_mode_from_string(const std::string& s) {
    if (s == "hard") return PolicyMode::hard;
    if (s == "soft") return PolicyMode::soft;
    if (s == "rl") return PolicyMode::rl;
    if (s == "random") return PolicyMode::random;
    throw std::invalid_argument("unknown policy strategy: " + s);
}

std::string to_string(PolicyMode m) {
    switch (m) {
        case PolicyMode::hard: return "hard";
        case PolicyMode::soft: return "soft";
        case PolicyMode::rl: return "rl";
        case PolicyMode::random: return "random";
    }
    return "?";
}

PolicyNetwork PolicyNetwork::init(const PolicyConfig& cfg, uint64_t seed) {
    if (cfg.num_gates < 0) throw std::invalid_argument("policy: negative gate count");
    std::mt19937_64 rng(seed);
    PolicyNetwork net;
    net.cfg = cfg;
    net.embedding = Tensor::randn({cfg.vocab_size, cfg.embed_dim}, rng, 0.02, true);
    const std::vector<int> dilations = {1, 2, 4, 8};
    for (size_t l = 0; l < dilations.size(); l += 2)
        net.blocks.push_back(ResidualBlock::init(cfg.embed_dim, cfg.kernel_size,
                                                 dilations[l], dilations[l + 1], rng, true));
    const int out = cfg.mode == PolicyMode::soft ? cfg.num_gates : cfg.num_gates * 2;
    net.head_w = Tensor::randn({cfg.embed_dim, std::max(1, out)}, rng, 0.02, true);
    net.head_b = Tensor::zeros({std::max(1, out)}, true);
    return net;
}

Tensor PolicyNetwork::hidden(const std::vector<int>& padded_seq) const {
    Tensor h = uaf::embedding(embedding, padded_seq);
    for (const auto& b : blocks) h = b.forward(h);
    return row(h, static_cast<int>(padded_seq.size()) - 1);
}

Tensor PolicyNetwork::forward_logits(const std::vector<int>& padded_seq) const {
    Tensor flat = linear(hidden(padded_seq), head_w, head_b);
    if (cfg.mode == PolicyMode::soft) return flat;  // [N] pre-sigmoid
    return reshape(flat, {cfg.num_gates, 2});
}

std::vector<Tensor> PolicyNetwork::params() const {
    std::vector<Tensor> out = {embedding};
    for (const auto& b : blocks)
        for (const auto& p : b.params()) out.push_back(p);
    out.push_back(head_w);
    out.push_back(head_b);
    return out;
}

std::vector<std::pair<std::string, Tensor>> PolicyNetwork::named_params() const {
    static const char* kBlockNames[] = {"conv1_w", "conv1_b", "ln1_g", "ln1_b",
                                        "conv2_w", "conv2_b", "ln2_g", "ln2_b"};
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embedding", embedding);
    for (size_t l = 0; l < blocks.size(); ++l) {
        auto ps = blocks[l].params();
        for (size_t i = 0; i < ps.size(); ++i)
            out.emplace_back("block" + std::to_string(l) + "." + kBlockNames[i], ps[i]);
    }
    out.emplace_back("head_w", head_w);
    out.emplace_back("head_b", head_b);
    return out;
}

double gumbel_noise(double u) {
    if (u <= 0.0 || u >= 1.0) throw std::invalid_argument("gumbel_noise: u must be in (0,1)");
    return -std::log(-std::log(u));
}

double sample_gumbel(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(std::numeric_limits<double>::min(), 1.0);
    double u = d(rng);
    while (u >= 1.0) u = d(rng);
    return gumbel_noise(u);
}

int gumbel_hard_sample(const std::vector<double>& log_pi, const std::vector<double>& g) {
    if (log_pi.size() != g.size() || log_pi.empty())
        throw std::invalid_argument("gumbel_hard_sample: length mismatch");
    int best = 0;
    double best_v = log_pi[0] + g[0];
    for (size_t i = 1; i < log_pi.size(); ++i) {
        const double v = log_pi[i] + g[i];
        if (v > best_v) {  // strict: ties break toward the lowest index
            best_v = v;
            best = static_cast<int>(i);
        }
    }
    return best;
}

std::vector<double> gumbel_softmax_relax(const std::vector<double>& log_pi,
                                         const std::vector<double>& g, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax_relax: tau must be > 0");
    if (log_pi.size() != g.size()) throw std::invalid_argument("gumbel_softmax_relax: length mismatch");
    std::vector<double> y(log_pi.size());
    double mx = -1e300;
    for (size_t i = 0; i < y.size(); ++i) {
        y[i] = (log_pi[i] + g[i]) / tau;
        mx = std::max(mx, y[i]);
    }
    double z = 0;
    for (double& v : y) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : y) v /= z;
    return y;
}

Tensor straight_through_gates(const Tensor& logits,
                              const std::vector<std::vector<double>>& noise, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("straight_through_gates: tau must be > 0");
    if (logits.shape().size() != 2 || logits.dim(1) != 2)
        throw std::invalid_argument("straight_through_gates: logits must be [N,2]");
    const int n = logits.dim(0);
    if (static_cast<int>(noise.size()) != n)
        throw std::invalid_argument("straight_through_gates: noise length mismatch");

    Tensor log_pi = log_softmax_rows(logits);
    std::vector<double> noise_flat(static_cast<size_t>(n) * 2);
    for (int l = 0; l < n; ++l) {
        noise_flat[static_cast<size_t>(l) * 2] = noise[static_cast<size_t>(l)][0];
        noise_flat[static_cast<size_t>(l) * 2 + 1] = noise[static_cast<size_t>(l)][1];
    }
    Tensor perturbed = add(log_pi, Tensor::from_data({n, 2}, noise_flat));
    Tensor alpha = softmax_rows(affine(perturbed, 1.0 / tau, 0.0));
    Tensor alpha1 = column(alpha, 1);  // relaxed fine-tune probability per block

    std::vector<double> hard(static_cast<size_t>(n));
    for (int l = 0; l < n; ++l) {
        const double v0 = perturbed.at(l, 0), v1 = perturbed.at(l, 1);
        hard[static_cast<size_t>(l)] = v1 > v0 ? 1.0 : 0.0;  // tie -> freeze
    }
    // forward = hard, backward = relaxed
    Tensor correction = sub(Tensor::from_data({n}, hard), detach(alpha1));
    return add(alpha1, correction);
}

std::vector<int> hard_gates_greedy(const Tensor& logits) {
    const int n = logits.dim(0);
    std::vector<int> out(static_cast<size_t>(n));
    for (int l = 0; l < n; ++l)
        out[static_cast<size_t>(l)] = logits.at(l, 1) > logits.at(l, 0) ? 1 : 0;
    return out;
}

Tensor soft_gates(const Tensor& values) { return sigmoid(values); }

double reward(const std::vector<int>& actions, bool correct, const RewardConfig& cfg) {
    if (cfg.gamma < 0) throw std::invalid_argument("reward: gamma must be >= 0");
    if (static_cast<int>(actions.size()) != cfg.num_blocks)
        throw std::invalid_argument("reward: action count mismatch");
    if (!correct) return -cfg.gamma;
    double used = 0;
    for (int a : actions) used += a != 0 ? 1.0 : 0.0;
    const double frac = used / static_cast<double>(cfg.num_blocks);
    return 1.0 - frac * frac;
}

RlActions rl_actions(const Tensor& logits, std::mt19937_64& rng) {
    if (logits.shape().size() != 2 || logits.dim(1) != 2)
        throw std::invalid_argument("rl_actions: logits must be [N,2]");
    const int n = logits.dim(0);
    RlActions out;
    out.sampled.resize(static_cast<size_t>(n));
    out.greedy.resize(static_cast<size_t>(n));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int l = 0; l < n; ++l) {
        const double v0 = logits.at(l, 0), v1 = logits.at(l, 1);
        const double mx = std::max(v0, v1);
        const double p1 = std::exp(v1 - mx) / (std::exp(v0 - mx) + std::exp(v1 - mx));
        out.sampled[static_cast<size_t>(l)] = u01(rng) < p1 ? 1 : 0;
        out.greedy[static_cast<size_t>(l)] = v1 > v0 ? 1 : 0;  // tie -> freeze
    }
    return out;
}

Tensor scst_loss(const Tensor& logits, const std::vector<int>& sampled,
                 double sampled_reward, double greedy_reward) {
    Tensor log_pi = log_softmax_rows(logits);
    Tensor picked = gather_rows(log_pi, sampled);
    for (double lp : picked.data())
        if (lp == -std::numeric_limits<double>::infinity())
            throw std::runtime_error("scst_loss: sampled action has zero probability");
    const double advantage = sampled_reward - greedy_reward;
    std::vector<double> w(sampled.size(), -advantage);
    return weighted_sum(picked, w);
}

PolicyDecision random_policy(uint64_t seed, int num_blocks) {
    if (num_blocks < 0) throw std::invalid_argument("random_policy: negative block count");
    PolicyDecision d;
    d.mode = PolicyMode::random;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> coin(0, 1);
    d.gates.resize(static_cast<size_t>(num_blocks));
    for (double& g : d.gates) g = static_cast<double>(coin(rng));
    return d;
}

}  // namespace uaf
