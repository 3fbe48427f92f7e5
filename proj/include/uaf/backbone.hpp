#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "uaf/checkpoint.hpp"
#include "uaf/tensor.hpp"

namespace uaf {

struct BackboneConfig {
    int vocab_size = 0;   // |X| including pad slot 0
    int embed_dim = 32;
    std::vector<int> dilations = {1, 2, 4, 8, 1, 2, 4, 8};  // two conv layers per block
    int kernel_size = 3;
    int seq_len = 20;

    int num_blocks() const { return static_cast<int>(dilations.size()) / 2; }
    void validate() const;
};

// Two dilated causal conv layers with layer norm and ReLU, wrapped by an
// additive shortcut.
struct ResidualBlock {
    Tensor conv1_w, conv1_b, ln1_g, ln1_b;
    Tensor conv2_w, conv2_b, ln2_g, ln2_b;
    int dilation1 = 1, dilation2 = 2;

    static ResidualBlock init(int embed_dim, int kernel, int d1, int d2,
                              std::mt19937_64& rng, bool trainable);
    ResidualBlock clone(bool trainable) const;
    // The residual mapping F(x) alone, without the shortcut.
    Tensor mapping(const Tensor& x) const;
    Tensor forward(const Tensor& x) const;  // F(x) + x
    std::vector<Tensor> params() const;
    void set_trainable(bool on);
};

struct BackboneModel {
    BackboneConfig cfg;
    Tensor embedding;  // [vocab, k]
    std::vector<ResidualBlock> blocks;
    Tensor out_w;  // [k, vocab], untied from the embedding table
    Tensor out_b;  // [vocab]

    static BackboneModel init(const BackboneConfig& cfg, uint64_t seed);

    Tensor embed(const std::vector<int>& items) const;
    Tensor features(const std::vector<int>& items) const;  // [n,k] after all blocks
    Tensor logits(const Tensor& features) const;           // [n,vocab]
    // -sum_t log p(x_{t+1} | x_{1:t}); positions with pad targets contribute 0.
    Tensor autoregressive_nll(const std::vector<int>& padded_items) const;

    std::vector<Tensor> params() const;
    std::vector<std::pair<std::string, Tensor>> named_params() const;

    Checkpoint to_checkpoint() const;
    static BackboneModel from_checkpoint(const Checkpoint& ckpt);
};

struct PretrainConfig {
    int epochs = 3;
    int batch_size = 64;
    double lr = 1e-4;
    uint64_t seed = 1;
};

struct PretrainResult {
    BackboneModel model;
    std::vector<double> epoch_losses;  // mean per-sequence NLL per epoch
};

PretrainResult pretrain(const std::vector<std::vector<int>>& corpus,
                        const BackboneConfig& cfg, const PretrainConfig& train);

}  // namespace uaf
