#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uaf/backbone.hpp"
#include "uaf/data.hpp"
#include "uaf/eval.hpp"
#include "uaf/policy.hpp"

namespace uaf {

enum class Regime { zero, cls, last1, last2, all };

Regime regime_from_string(const std::string& s);
std::string to_string(Regime r);

Tensor bpr_loss(const Tensor& o_pos, const Tensor& o_neg);

// Single-path model used by the baseline fine-tuning regimes.
struct TargetModel {
    BackboneConfig cfg;
    int target_vocab = 0;
    Regime regime = Regime::all;
    Tensor embedding;
    std::vector<ResidualBlock> blocks;
    Tensor head_w, head_b;  // [k, |Y|], [|Y|]

    static TargetModel from_backbone(const BackboneModel& base, int target_vocab,
                                     Regime regime, uint64_t head_seed);
    static TargetModel random_init(const BackboneConfig& cfg, int target_vocab,
                                   uint64_t seed);

    Tensor hidden(const std::vector<int>& padded_seq) const;  // h_n, [k]
    Tensor full_scores(const Tensor& h) const;                // [|Y|]
    Tensor score_item(const Tensor& h, int item) const;

    std::vector<Tensor> all_params() const;
    std::vector<Tensor> trainable_params() const;
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    Checkpoint to_checkpoint() const;
    static TargetModel from_checkpoint(const Checkpoint& ckpt);
};

// Gated dual-path model: frozen pre-trained blocks plus trainable copies,
// mixed per block by a per-user policy gate, with a new target-domain head.
struct UafModel {
    BackboneConfig cfg;
    int target_vocab = 0;
    PolicyMode strategy = PolicyMode::hard;
    bool tune_embedding = true;
    uint64_t random_seed = 0;  // random strategy: per-user gate stream

    Tensor embedding;  // shared by both paths
    std::vector<ResidualBlock> frozen;  // never updated
    std::vector<ResidualBlock> tuned;   // initialized bit-equal to frozen
    Tensor head_w, head_b;
    PolicyNetwork policy;

    static UafModel from_backbone(const BackboneModel& base, int target_vocab,
                                  PolicyMode strategy, uint64_t seed,
                                  int policy_embed_dim = 16);

    int num_blocks() const { return static_cast<int>(frozen.size()); }

    // E_l = I*Fhat(E) + (1-I)*F(E) + E with per-block gate tensors.
    Tensor hidden_gated(const std::vector<int>& padded_seq, const Tensor& gates) const;
    // Same with constant gates; skips the unused path at exactly 0 or 1.
    Tensor hidden_const(const std::vector<int>& padded_seq,
                        const std::vector<double>& gates) const;

    Tensor full_scores(const Tensor& h) const;
    Tensor score_item(const Tensor& h, int item) const;

    // Serving-time decision: noise-free and deterministic per user.
    PolicyDecision decide(const TrainExample& ex) const;

    uint64_t frozen_hash() const;

    std::vector<Tensor> trainable_params() const;
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    Checkpoint to_checkpoint() const;
    static UafModel from_checkpoint(const Checkpoint& ckpt);
};

struct FinetuneOptions {
    int epochs = 10;
    int batch_size = 64;
    double lr = 1e-4;
    double tau = 10.0;
    double gamma = 1.0;
    double beta = 1.0;
    uint64_t seed = 1;
    int metric_n = 5;
    bool tune_embedding = true;
    int policy_embed_dim = 16;
    BackboneConfig arch{};  // architecture for regime zero when no checkpoint
};

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mrr = 0.0;
    double val_hr = 0.0;
};

struct UafRun {
    UafModel model;  // restored to the best-validation epoch
    std::vector<EpochRow> curve;
    int best_epoch = 0;
    MetricReport test;
};

struct BaselineRun {
    TargetModel model;
    std::vector<EpochRow> curve;
    int best_epoch = 0;
    MetricReport test;
};

// Single training steps (one batch), exposed for testing; return mean loss.
double finetune_step(std::vector<TrainExample>& batch, UafModel& model, Adam& opt,
                     const FinetuneOptions& opts, std::mt19937_64& noise_rng);
double baseline_step(std::vector<TrainExample>& batch, TargetModel& model, Adam& opt,
                     std::mt19937_64& rng);

UafRun run_uaf(const CrossDomainDataset& ds, const Split& split,
               const BackboneModel& pretrained, PolicyMode strategy,
               const FinetuneOptions& opts);
BaselineRun run_baseline(const CrossDomainDataset& ds, const Split& split,
                         const BackboneModel* pretrained, Regime regime,
                         const FinetuneOptions& opts);

// Full-catalog scorers for the evaluation harness.
Scorer make_scorer(const UafModel& model);
Scorer make_scorer(const TargetModel& model);
GateFn make_gate_fn(const UafModel& model);

}  // namespace uaf
