#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "uaf/backbone.hpp"
#include "uaf/tensor.hpp"

namespace uaf {

enum class PolicyMode { hard, soft, rl, random };

PolicyMode policy_mode_from_string(const std::string& s);
std::string to_string(PolicyMode m);

struct PolicyConfig {
    int vocab_size = 0;   // source vocab including pad
    int embed_dim = 16;
    int seq_len = 20;
    int num_gates = 0;    // N, block count of the fine-tuned backbone
    int kernel_size = 3;
    PolicyMode mode = PolicyMode::hard;
};

// Lightweight sequence model with dilations {1,2,4,8} emitting all per-block
// decisions from the final-position hidden state in one pass.
struct PolicyNetwork {
    PolicyConfig cfg;
    Tensor embedding;
    std::vector<ResidualBlock> blocks;  // 2 residual blocks
    Tensor head_w;  // [k, N*2] (hard/rl) or [k, N] (soft)
    Tensor head_b;

    static PolicyNetwork init(const PolicyConfig& cfg, uint64_t seed);

    Tensor hidden(const std::vector<int>& padded_seq) const;  // h_p, [k]
    // hard/rl: [N,2] per-block class logits; soft: [N] pre-sigmoid values.
    Tensor forward_logits(const std::vector<int>& padded_seq) const;

    std::vector<Tensor> params() const;
    std::vector<std::pair<std::string, Tensor>> named_params() const;
};

struct PolicyDecision {
    PolicyMode mode = PolicyMode::hard;
    std::vector<double> gates;   // I_l per block; {0,1} for hard/rl/random
    std::vector<int> sampled;    // RL exploration actions, empty otherwise
    std::vector<int> greedy;     // RL greedy actions, empty otherwise
};

struct RewardConfig {
    double gamma = 1.0;
    int num_blocks = 0;
};

// g = -log(-log(u)) for u in (0,1).
double gumbel_noise(double u);
double sample_gumbel(std::mt19937_64& rng);

// one_hot(argmax_i[g_i + log pi_i]) over {freeze, fine-tune};
// ties break toward index 0. Returns the chosen index.
int gumbel_hard_sample(const std::vector<double>& log_pi, const std::vector<double>& g);

// alpha_i = softmax((log pi + g) / tau).
std::vector<double> gumbel_softmax_relax(const std::vector<double>& log_pi,
                                         const std::vector<double>& g, double tau);

// Straight-through gates for all blocks: forward values are the hard one-hot
// picks, gradients follow the relaxed softmax at the same noise.
// logits is the [N,2] policy output; noise is [N][2].
Tensor straight_through_gates(const Tensor& logits,
                              const std::vector<std::vector<double>>& noise, double tau);

// Noise-free argmax of log pi per block (serving-time Hard policy).
std::vector<int> hard_gates_greedy(const Tensor& logits);

// Sigmoid of the soft head output; returns the [N] gate tensor.
Tensor soft_gates(const Tensor& values);

// R = 1 - (finetuned/N)^2 if correct, else -gamma.
double reward(const std::vector<int>& actions, bool correct, const RewardConfig& cfg);

// Sampled (categorical) and greedy actions from [N,2] logits.
struct RlActions {
    std::vector<int> sampled;
    std::vector<int> greedy;
};
RlActions rl_actions(const Tensor& logits, std::mt19937_64& rng);

// L_RL = -sum_l log p(A^s_l) * (R(A^s) - R(A_hat)); advantage is a constant.
Tensor scst_loss(const Tensor& logits, const std::vector<int>& sampled,
                 double sampled_reward, double greedy_reward);

// Bernoulli(0.5) per block; deterministic per seed.
PolicyDecision random_policy(uint64_t seed, int num_blocks);

}  // namespace uaf
