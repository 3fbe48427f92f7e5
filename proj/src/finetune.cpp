#include "uaf/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace uaf {

namespace {

constexpr double kInitStd = 0.02;

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    return splitmix64(seed ^ splitmix64(a ^ splitmix64(b)));
}

std::pair<Tensor, Tensor> make_target_head(int embed_dim, int target_vocab,
                                           uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor w = Tensor::randn({embed_dim, target_vocab}, rng, kInitStd, true);
    Tensor b = Tensor::zeros({target_vocab}, true);
    return {w, b};
}

std::vector<int> dilations_from_string(const std::string& s) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

std::string dilations_to_string(const std::vector<int>& d) {
    std::string s;
    for (size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
    return s;
}

void add_block_params(std::vector<std::pair<std::string, Tensor>>& out,
                      const std::string& prefix, const ResidualBlock& b) {
    static const char* kNames[] = {"conv1_w", "conv1_b", "ln1_g", "ln1_b",
                                   "conv2_w", "conv2_b", "ln2_g", "ln2_b"};
    auto ps = b.params();
    for (size_t i = 0; i < ps.size(); ++i) out.emplace_back(prefix + kNames[i], ps[i]);
}

}  // namespace

Regime regime_from_string(const std::string& s) {
    if (s == "zero") return Regime::zero;
    if (s == "cls") return Regime::cls;
    if (s == "last1") return Regime::last1;
    if (s == "last2") return Regime::last2;
    if (s == "all") return Regime::all;
    throw std::invalid_argument("unknown regime: " + s);
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::zero: return "zero";
        case Regime::cls: return "cls";
        case Regime::last1: return "last1";
        case Regime::last2: return "last2";
        case Regime::all: return "all";
    }
    return "?";
}

Tensor bpr_loss(const Tensor& o_pos, const Tensor& o_neg) {
    return neg(log_sigmoid(sub(o_pos, o_neg)));
}

// --- TargetModel ---

TargetModel TargetModel::from_backbone(const BackboneModel& base, int target_vocab,
                                       Regime regime, uint64_t head_seed) {
    if (regime == Regime::zero)
        throw std::invalid_argument("regime zero does not load a pre-trained model");
    TargetModel m;
    m.cfg = base.cfg;
    m.target_vocab = target_vocab;
    m.regime = regime;
    m.embedding = base.embedding.clone();
    for (const auto& b : base.blocks) m.blocks.push_back(b.clone(true));
    std::tie(m.head_w, m.head_b) = make_target_head(base.cfg.embed_dim, target_vocab, head_seed);

    // Trainable-parameter mask: cls = head only; lastK = head + last K blocks.
    const int n = static_cast<int>(m.blocks.size());
    const int tail = regime == Regime::cls ? 0 : regime == Regime::last1 ? 1
                     : regime == Regime::last2                           ? 2
                                                                         : n;
    if (regime != Regime::all) m.embedding.set_requires_grad(false);
    for (int l = 0; l < n; ++l) m.blocks[static_cast<size_t>(l)].set_trainable(l >= n - tail);
    return m;
}

TargetModel TargetModel::random_init(const BackboneConfig& cfg, int target_vocab,
                                     uint64_t seed) {
    BackboneModel base = BackboneModel::init(cfg, seed);
    TargetModel m;
    m.cfg = cfg;
    m.target_vocab = target_vocab;
    m.regime = Regime::zero;
    m.embedding = base.embedding;
    m.blocks = std::move(base.blocks);
    std::tie(m.head_w, m.head_b) = make_target_head(cfg.embed_dim, target_vocab, mix_seed(seed, 0x7ead));
    return m;
}

Tensor TargetModel::hidden(const std::vector<int>& padded_seq) const {
    bool all_pad = true;
    for (int id : padded_seq) all_pad &= id == 0;
    if (padded_seq.empty() || all_pad) throw std::runtime_error("hidden: all-padding sequence");
    Tensor h = uaf::embedding(embedding, padded_seq);
    for (const auto& b : blocks) h = b.forward(h);
    return row(h, static_cast<int>(padded_seq.size()) - 1);
}

Tensor TargetModel::full_scores(const Tensor& h) const { return linear(h, head_w, head_b); }

Tensor TargetModel::score_item(const Tensor& h, int item) const {
    return add(dot(column(head_w, item), h), index(head_b, item));
}

std::vector<Tensor> TargetModel::all_params() const {
    std::vector<Tensor> out = {embedding};
    for (const auto& b : blocks)
        for (const auto& p : b.params()) out.push_back(p);
    out.push_back(head_w);
    out.push_back(head_b);
    return out;
}

std::vector<Tensor> TargetModel::trainable_params() const {
    std::vector<Tensor> out;
    for (const auto& p : all_params())
        if (p.requires_grad()) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, Tensor>> TargetModel::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embedding", embedding);
    for (size_t l = 0; l < blocks.size(); ++l)
        add_block_params(out, "block" + std::to_string(l) + ".", blocks[l]);
    out.emplace_back("head_w", head_w);
    out.emplace_back("head_b", head_b);
    return out;
}

Checkpoint TargetModel::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.meta["model"] = "target";
    ckpt.meta["regime"] = to_string(regime);
    ckpt.meta["vocab_size"] = std::to_string(cfg.vocab_size);
    ckpt.meta["embed_dim"] = std::to_string(cfg.embed_dim);
    ckpt.meta["dilations"] = dilations_to_string(cfg.dilations);
    ckpt.meta["kernel_size"] = std::to_string(cfg.kernel_size);
    ckpt.meta["seq_len"] = std::to_string(cfg.seq_len);
    ckpt.meta["target_vocab"] = std::to_string(target_vocab);
    for (auto& [name, t] : named_params()) ckpt.add(name, t);
    return ckpt;
}

TargetModel TargetModel::from_checkpoint(const Checkpoint& ckpt) {
    BackboneConfig cfg;
    cfg.vocab_size = std::stoi(ckpt.meta_at("vocab_size"));
    cfg.embed_dim = std::stoi(ckpt.meta_at("embed_dim"));
    cfg.dilations = dilations_from_string(ckpt.meta_at("dilations"));
    cfg.kernel_size = std::stoi(ckpt.meta_at("kernel_size"));
    cfg.seq_len = std::stoi(ckpt.meta_at("seq_len"));
    TargetModel m = random_init(cfg, std::stoi(ckpt.meta_at("target_vocab")), 0);
    m.regime = regime_from_string(ckpt.meta_at("regime"));
    for (auto& [name, t] : m.named_params()) {
        Tensor loaded = ckpt.require(name);
        if (loaded.shape() != t.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        t.data() = loaded.data();
    }
    return m;
}

// --- UafModel ---

UafModel UafModel::from_backbone(const BackboneModel& base, int target_vocab,
                                 PolicyMode strategy, uint64_t seed,
                                 int policy_embed_dim) {
    UafModel m;
    m.cfg = base.cfg;
    m.target_vocab = target_vocab;
    m.strategy = strategy;
    m.random_seed = mix_seed(seed, 0xa11d0);
    m.embedding = base.embedding.clone();
    m.embedding.set_requires_grad(true);
    for (const auto& b : base.blocks) {
        m.frozen.push_back(b.clone(false));
        m.tuned.push_back(b.clone(true));
    }
    std::tie(m.head_w, m.head_b) = make_target_head(base.cfg.embed_dim, target_vocab, seed);

    PolicyConfig pcfg;
    pcfg.vocab_size = base.cfg.vocab_size;
    pcfg.embed_dim = policy_embed_dim;
    pcfg.seq_len = base.cfg.seq_len;
    pcfg.num_gates = static_cast<int>(m.frozen.size());
    pcfg.kernel_size = base.cfg.kernel_size;
    pcfg.mode = strategy;
    m.policy = PolicyNetwork::init(pcfg, mix_seed(seed, 0x9019c));
    return m;
}

static void check_not_all_pad(const std::vector<int>& seq) {
    for (int id : seq)
        if (id != 0) return;
    throw std::runtime_error("forward: all-padding sequence");
}

Tensor UafModel::hidden_gated(const std::vector<int>& padded_seq, const Tensor& gates) const {
    if (gates.size() != num_blocks())
        throw std::invalid_argument("hidden_gated: gate count mismatch");
    check_not_all_pad(padded_seq);
    Tensor h = uaf::embedding(embedding, padded_seq);
    for (int l = 0; l < num_blocks(); ++l) {
        Tensor g = index(gates, l);
        Tensor mixed = add(mul_scalar(tuned[static_cast<size_t>(l)].mapping(h), g),
                           mul_scalar(frozen[static_cast<size_t>(l)].mapping(h),
                                      affine(g, -1.0, 1.0)));
        h = add(mixed, h);
    }
    return row(h, static_cast<int>(padded_seq.size()) - 1);
}

Tensor UafModel::hidden_const(const std::vector<int>& padded_seq,
                              const std::vector<double>& gates) const {
    if (static_cast<int>(gates.size()) != num_blocks())
        throw std::invalid_argument("hidden_const: gate count mismatch");
    check_not_all_pad(padded_seq);
    Tensor h = uaf::embedding(embedding, padded_seq);
    for (int l = 0; l < num_blocks(); ++l) {
        const double g = gates[static_cast<size_t>(l)];
        if (g < 0.0 || g > 1.0) throw std::invalid_argument("hidden_const: gate outside [0,1]");
        if (g == 0.0) {
            h = frozen[static_cast<size_t>(l)].forward(h);
        } else if (g == 1.0) {
            h = tuned[static_cast<size_t>(l)].forward(h);
        } else {
            Tensor mixed = add(affine(tuned[static_cast<size_t>(l)].mapping(h), g, 0.0),
                               affine(frozen[static_cast<size_t>(l)].mapping(h), 1.0 - g, 0.0));
            h = add(mixed, h);
        }
    }
    return row(h, static_cast<int>(padded_seq.size()) - 1);
}

Tensor UafModel::full_scores(const Tensor& h) const { return linear(h, head_w, head_b); }

Tensor UafModel::score_item(const Tensor& h, int item) const {
    return add(dot(column(head_w, item), h), index(head_b, item));
}

PolicyDecision UafModel::decide(const TrainExample& ex) const {
    PolicyDecision d;
    d.mode = strategy;
    if (strategy == PolicyMode::random) {
        return random_policy(mix_seed(random_seed, static_cast<uint64_t>(ex.user)),
                             num_blocks());
    }
    NoGradGuard ng;
    Tensor logits = policy.forward_logits(ex.padded_source);
    if (strategy == PolicyMode::soft) {
        Tensor g = soft_gates(logits);
        d.gates = g.data();
    } else {
        const auto picks = hard_gates_greedy(logits);
        d.greedy = picks;
        d.gates.assign(picks.size(), 0.0);
        for (size_t i = 0; i < picks.size(); ++i) d.gates[i] = picks[i];
    }
    return d;
}

uint64_t UafModel::frozen_hash() const {
    std::vector<Tensor> ts;
    for (const auto& b : frozen)
        for (const auto& p : b.params()) ts.push_back(p);
    return hash_tensors(ts);
}

std::vector<Tensor> UafModel::trainable_params() const {
    std::vector<Tensor> out;
    if (tune_embedding) out.push_back(embedding);
    for (const auto& b : tuned)
        for (const auto& p : b.params()) out.push_back(p);
    out.push_back(head_w);
    out.push_back(head_b);
    if (strategy != PolicyMode::random)
        for (const auto& p : policy.params()) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, Tensor>> UafModel::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embedding", embedding);
    for (size_t l = 0; l < frozen.size(); ++l)
        add_block_params(out, "frozen.block" + std::to_string(l) + ".", frozen[l]);
    for (size_t l = 0; l < tuned.size(); ++l)
        add_block_params(out, "tuned.block" + std::to_string(l) + ".", tuned[l]);
    out.emplace_back("head_w", head_w);
    out.emplace_back("head_b", head_b);
    for (auto& [name, t] : policy.named_params()) out.emplace_back("policy." + name, t);
    return out;
}

Checkpoint UafModel::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.meta["model"] = "uaf";
    ckpt.meta["strategy"] = to_string(strategy);
    ckpt.meta["gate_mode"] = strategy == PolicyMode::soft ? "soft" : "binary";
    ckpt.meta["vocab_size"] = std::to_string(cfg.vocab_size);
    ckpt.meta["embed_dim"] = std::to_string(cfg.embed_dim);
    ckpt.meta["dilations"] = dilations_to_string(cfg.dilations);
    ckpt.meta["kernel_size"] = std::to_string(cfg.kernel_size);
    ckpt.meta["seq_len"] = std::to_string(cfg.seq_len);
    ckpt.meta["target_vocab"] = std::to_string(target_vocab);
    ckpt.meta["policy_embed_dim"] = std::to_string(policy.cfg.embed_dim);
    ckpt.meta["tune_embedding"] = tune_embedding ? "1" : "0";
    ckpt.meta["random_seed"] = std::to_string(random_seed);
    for (auto& [name, t] : named_params()) ckpt.add(name, t);
    return ckpt;
}

UafModel UafModel::from_checkpoint(const Checkpoint& ckpt) {
    BackboneConfig cfg;
    cfg.vocab_size = std::stoi(ckpt.meta_at("vocab_size"));
    cfg.embed_dim = std::stoi(ckpt.meta_at("embed_dim"));
    cfg.dilations = dilations_from_string(ckpt.meta_at("dilations"));
    cfg.kernel_size = std::stoi(ckpt.meta_at("kernel_size"));
    cfg.seq_len = std::stoi(ckpt.meta_at("seq_len"));
    BackboneModel base = BackboneModel::init(cfg, 0);
    UafModel m = from_backbone(base, std::stoi(ckpt.meta_at("target_vocab")),
                               policy_mode_from_string(ckpt.meta_at("strategy")), 0,
                               std::stoi(ckpt.meta_at("policy_embed_dim")));
    m.tune_embedding = ckpt.meta_at("tune_embedding") == "1";
    m.random_seed = std::stoull(ckpt.meta_at("random_seed"));
    for (auto& [name, t] : m.named_params()) {
        Tensor loaded = ckpt.require(name);
        if (loaded.shape() != t.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        t.data() = loaded.data();
    }
    return m;
}

// --- training ---

namespace {

// One example's loss under the hard (straight-through) strategy.
Tensor hard_example_loss(const TrainExample& ex, UafModel& model, double tau,
                         std::mt19937_64& noise_rng) {
    Tensor logits = model.policy.forward_logits(ex.padded_source);
    std::vector<std::vector<double>> noise(static_cast<size_t>(model.num_blocks()));
    for (auto& pair : noise) pair = {sample_gumbel(noise_rng), sample_gumbel(noise_rng)};
    Tensor gates = straight_through_gates(logits, noise, tau);
    Tensor h = model.hidden_gated(ex.padded_source, gates);
    return bpr_loss(model.score_item(h, ex.pos), model.score_item(h, ex.neg));
}

Tensor soft_example_loss(const TrainExample& ex, UafModel& model) {
    Tensor gates = soft_gates(model.policy.forward_logits(ex.padded_source));
    Tensor h = model.hidden_gated(ex.padded_source, gates);
    return bpr_loss(model.score_item(h, ex.pos), model.score_item(h, ex.neg));
}

Tensor rl_example_loss(const TrainExample& ex, UafModel& model,
                       const FinetuneOptions& opts, std::mt19937_64& noise_rng) {
    Tensor logits = model.policy.forward_logits(ex.padded_source);
    RlActions actions = rl_actions(logits, noise_rng);

    std::vector<double> sampled_gates(actions.sampled.begin(), actions.sampled.end());
    Tensor h = model.hidden_const(ex.padded_source, sampled_gates);
    Tensor o_pos = model.score_item(h, ex.pos);
    Tensor o_neg = model.score_item(h, ex.neg);
    Tensor bpr = bpr_loss(o_pos, o_neg);
    const bool sampled_correct = o_pos.value() > o_neg.value();

    bool greedy_correct;
    {
        NoGradGuard ng;
        std::vector<double> greedy_gates(actions.greedy.begin(), actions.greedy.end());
        Tensor hg = model.hidden_const(ex.padded_source, greedy_gates);
        greedy_correct = model.score_item(hg, ex.pos).value() >
                         model.score_item(hg, ex.neg).value();
    }

    RewardConfig rcfg{opts.gamma, model.num_blocks()};
    const double r_sampled = reward(actions.sampled, sampled_correct, rcfg);
    const double r_greedy = reward(actions.greedy, greedy_correct, rcfg);
    if (opts.beta == 0.0) return bpr;
    Tensor scst = scst_loss(logits, actions.sampled, r_sampled, r_greedy);
    return add(bpr, affine(scst, opts.beta, 0.0));
}

Tensor random_example_loss(const TrainExample& ex, UafModel& model) {
    PolicyDecision d = random_policy(
        mix_seed(model.random_seed, static_cast<uint64_t>(ex.user)), model.num_blocks());
    Tensor h = model.hidden_const(ex.padded_source, d.gates);
    return bpr_loss(model.score_item(h, ex.pos), model.score_item(h, ex.neg));
}

void ensure_grads(const std::vector<Tensor>& params) {
    for (auto p : params)
        if (!p.has_grad()) p.zero_grad();
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.data());
    return out;
}

void restore(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
    for (size_t i = 0; i < params.size(); ++i) params[i].data() = snap[i];
}

void fill_negatives(std::vector<TrainExample>& examples, int target_vocab,
                    std::mt19937_64& rng) {
    for (auto& ex : examples) ex.neg = sample_negative(ex.pos, target_vocab - 1, rng);
}

}  // namespace

double finetune_step(std::vector<TrainExample>& batch, UafModel& model, Adam& opt,
                     const FinetuneOptions& opts, std::mt19937_64& noise_rng) {
    if (batch.empty()) throw std::invalid_argument("finetune_step: empty batch");
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0;
    for (auto& ex : batch) {
        Tensor loss;
        switch (model.strategy) {
            case PolicyMode::hard: loss = hard_example_loss(ex, model, opts.tau, noise_rng); break;
            case PolicyMode::soft: loss = soft_example_loss(ex, model); break;
            case PolicyMode::rl: loss = rl_example_loss(ex, model, opts, noise_rng); break;
            case PolicyMode::random: loss = random_example_loss(ex, model); break;
        }
        total += loss.value();
        backward(affine(loss, inv, 0.0));
    }
    ensure_grads(opt.params());
    opt.step();
    return total * inv;
}

double baseline_step(std::vector<TrainExample>& batch, TargetModel& model, Adam& opt,
                     std::mt19937_64&) {
    if (batch.empty()) throw std::invalid_argument("baseline_step: empty batch");
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0;
    for (auto& ex : batch) {
        Tensor h = model.hidden(ex.padded_source);
        Tensor loss = bpr_loss(model.score_item(h, ex.pos), model.score_item(h, ex.neg));
        total += loss.value();
        backward(affine(loss, inv, 0.0));
    }
    ensure_grads(opt.params());
    opt.step();
    return total * inv;
}

Scorer make_scorer(const UafModel& model) {
    return [&model](const TrainExample& ex) {
        NoGradGuard ng;
        PolicyDecision d = model.decide(ex);
        Tensor h = model.hidden_const(ex.padded_source, d.gates);
        return model.full_scores(h).data();
    };
}

Scorer make_scorer(const TargetModel& model) {
    return [&model](const TrainExample& ex) {
        NoGradGuard ng;
        return model.full_scores(model.hidden(ex.padded_source)).data();
    };
}

GateFn make_gate_fn(const UafModel& model) {
    return [&model](const TrainExample& ex) { return model.decide(ex).gates; };
}

UafRun run_uaf(const CrossDomainDataset& ds, const Split& split,
               const BackboneModel& pretrained, PolicyMode strategy,
               const FinetuneOptions& opts) {
    UafModel model = UafModel::from_backbone(pretrained, ds.target_vocab, strategy,
                                             opts.seed, opts.policy_embed_dim);
    model.tune_embedding = opts.tune_embedding;
    Adam opt(model.trainable_params(), {.lr = opts.lr});

    std::vector<TrainExample> train = make_examples(ds, split.train, model.cfg.seq_len);
    std::vector<TrainExample> val = make_examples(ds, split.val, model.cfg.seq_len);
    std::vector<TrainExample> test = make_examples(ds, split.test, model.cfg.seq_len);

    std::mt19937_64 rng(mix_seed(opts.seed, 0x7ea1));
    std::mt19937_64 noise_rng(mix_seed(opts.seed, 0x9015e));

    UafRun run{std::move(model), {}, 0, {}};
    Scorer live_scorer = make_scorer(run.model);
    std::vector<Tensor> params = run.model.trainable_params();
    std::vector<std::vector<double>> best = snapshot(params);
    double best_hr = -1;

    std::vector<int> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        fill_negatives(train, ds.target_vocab, rng);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(opts.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(opts.batch_size));
            std::vector<TrainExample> batch;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) batch.push_back(train[static_cast<size_t>(order[i])]);
            loss_sum += finetune_step(batch, run.model, opt, opts, noise_rng);
            ++batches;
        }
        MetricReport vr = evaluate(live_scorer, val, opts.metric_n);
        run.curve.push_back({epoch, loss_sum / static_cast<double>(std::max<size_t>(1, batches)),
                             vr.mrr, vr.hr});
        if (vr.hr > best_hr) {
            best_hr = vr.hr;
            best = snapshot(params);
            run.best_epoch = epoch;
        }
    }
    restore(params, best);
    run.test = evaluate(live_scorer, test, opts.metric_n);
    run.test.tag = "uaf-" + to_string(strategy);
    run.test.seed = opts.seed;
    return run;
}

BaselineRun run_baseline(const CrossDomainDataset& ds, const Split& split,
                         const BackboneModel* pretrained, Regime regime,
                         const FinetuneOptions& opts) {
    if (regime != Regime::zero && pretrained == nullptr)
        throw std::invalid_argument("run_baseline: regime requires a pre-trained model");
    if (pretrained != nullptr && pretrained->cfg.vocab_size != ds.source_vocab)
        throw std::runtime_error("run_baseline: checkpoint/vocab mismatch");

    TargetModel model = [&] {
        if (regime == Regime::zero) {
            BackboneConfig cfg = pretrained ? pretrained->cfg : opts.arch;
            cfg.vocab_size = ds.source_vocab;
            if (cfg.seq_len != ds.seq_len && !pretrained) cfg.seq_len = ds.seq_len;
            return TargetModel::random_init(cfg, ds.target_vocab, opts.seed);
        }
        return TargetModel::from_backbone(*pretrained, ds.target_vocab, regime, opts.seed);
    }();
    Adam opt(model.trainable_params(), {.lr = opts.lr});

    std::vector<TrainExample> train = make_examples(ds, split.train, model.cfg.seq_len);
    std::vector<TrainExample> val = make_examples(ds, split.val, model.cfg.seq_len);
    std::vector<TrainExample> test = make_examples(ds, split.test, model.cfg.seq_len);

    std::mt19937_64 rng(mix_seed(opts.seed, 0x7ea1));
    BaselineRun run{std::move(model), {}, 0, {}};
    Scorer scorer = make_scorer(run.model);
    std::vector<Tensor> params = run.model.trainable_params();
    std::vector<std::vector<double>> best = snapshot(params);
    double best_hr = -1;

    std::vector<int> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        fill_negatives(train, ds.target_vocab, rng);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(opts.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(opts.batch_size));
            std::vector<TrainExample> batch;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) batch.push_back(train[static_cast<size_t>(order[i])]);
            loss_sum += baseline_step(batch, run.model, opt, rng);
            ++batches;
        }
        MetricReport vr = evaluate(scorer, val, opts.metric_n);
        run.curve.push_back({epoch, loss_sum / static_cast<double>(std::max<size_t>(1, batches)),
                             vr.mrr, vr.hr});
        if (vr.hr > best_hr) {
            best_hr = vr.hr;
            best = snapshot(params);
            run.best_epoch = epoch;
        }
    }
    restore(params, best);
    run.test = evaluate(scorer, test, opts.metric_n);
    run.test.tag = "finetune-" + to_string(regime);
    run.test.seed = opts.seed;
    return run;
}

}  // namespace uaf
