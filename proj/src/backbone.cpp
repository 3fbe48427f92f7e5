#include "uaf/backbone.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "uaf/data.hpp"

namespace uaf {

namespace {
constexpr double kInitStd = 0.02;
}

void BackboneConfig::validate() const {
    if (vocab_size < 2) throw std::invalid_argument("backbone: vocab_size must be >= 2");
    if (embed_dim < 1) throw std::invalid_argument("backbone: embed_dim must be positive");
    if (kernel_size < 2) throw std::invalid_argument("backbone: kernel_size must be >= 2");
    if (seq_len < 2) throw std::invalid_argument("backbone: seq_len must be >= 2");
    if (dilations.empty() || dilations.size() % 2 != 0)
        throw std::invalid_argument("backbone: dilation schedule length must be even");
}

ResidualBlock ResidualBlock::init(int embed_dim, int kernel, int d1, int d2,
                                  std::mt19937_64& rng, bool trainable) {
    ResidualBlock b;
    b.dilation1 = d1;
    b.dilation2 = d2;
    b.conv1_w = Tensor::randn({kernel, embed_dim, embed_dim}, rng, kInitStd, trainable);
    b.conv1_b = Tensor::zeros({embed_dim}, trainable);
    b.ln1_g = Tensor::full({embed_dim}, 1.0, trainable);
    b.ln1_b = Tensor::zeros({embed_dim}, trainable);
    b.conv2_w = Tensor::randn({kernel, embed_dim, embed_dim}, rng, kInitStd, trainable);
    b.conv2_b = Tensor::zeros({embed_dim}, trainable);
    b.ln2_g = Tensor::full({embed_dim}, 1.0, trainable);
    b.ln2_b = Tensor::zeros({embed_dim}, trainable);
    return b;
}

ResidualBlock ResidualBlock::clone(bool trainable) const {
    ResidualBlock b;
    b.dilation1 = dilation1;
    b.dilation2 = dilation2;
    b.conv1_w = conv1_w.clone();
    b.conv1_b = conv1_b.clone();
    b.ln1_g = ln1_g.clone();
    b.ln1_b = ln1_b.clone();
    b.conv2_w = conv2_w.clone();
    b.conv2_b = conv2_b.clone();
    b.ln2_g = ln2_g.clone();
    b.ln2_b = ln2_b.clone();
    b.set_trainable(trainable);
    return b;
}

Tensor ResidualBlock::mapping(const Tensor& x) const {
    Tensor h = causal_conv1d(x, conv1_w, conv1_b, dilation1);
    h = relu(layer_norm(h, ln1_g, ln1_b));
    h = causal_conv1d(h, conv2_w, conv2_b, dilation2);
    return relu(layer_norm(h, ln2_g, ln2_b));
}

Tensor ResidualBlock::forward(const Tensor& x) const { return add(mapping(x), x); }

std::vector<Tensor> ResidualBlock::params() const {
    return {conv1_w, conv1_b, ln1_g, ln1_b, conv2_w, conv2_b, ln2_g, ln2_b};
}

void ResidualBlock::set_trainable(bool on) {
    for (auto& p : params()) p.set_requires_grad(on);
}

BackboneModel BackboneModel::init(const BackboneConfig& cfg, uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    BackboneModel m;
    m.cfg = cfg;
    m.embedding = Tensor::randn({cfg.vocab_size, cfg.embed_dim}, rng, kInitStd, true);
    for (int l = 0; l < cfg.num_blocks(); ++l)
        m.blocks.push_back(ResidualBlock::init(cfg.embed_dim, cfg.kernel_size,
                                               cfg.dilations[static_cast<size_t>(2 * l)],
                                               cfg.dilations[static_cast<size_t>(2 * l + 1)],
                                               rng, true));
    m.out_w = Tensor::randn({cfg.embed_dim, cfg.vocab_size}, rng, kInitStd, true);
    m.out_b = Tensor::zeros({cfg.vocab_size}, true);
    return m;
}

Tensor BackboneModel::embed(const std::vector<int>& items) const {
    return uaf::embedding(embedding, items);
}

Tensor BackboneModel::features(const std::vector<int>& items) const {
    Tensor h = embed(items);
    for (const auto& b : blocks) h = b.forward(h);
    return h;
}

Tensor BackboneModel::logits(const Tensor& features) const {
    return add_rowvec(matmul(features, out_w), out_b);
}

Tensor BackboneModel::autoregressive_nll(const std::vector<int>& padded_items) const {
    const int n = static_cast<int>(padded_items.size());
    if (n < 2) throw std::invalid_argument("nll: sequence too short");
    bool any_target = false;
    std::vector<int> targets(static_cast<size_t>(n - 1));
    for (int t = 0; t + 1 < n; ++t) {
        targets[static_cast<size_t>(t)] = padded_items[static_cast<size_t>(t + 1)];
        any_target |= targets[static_cast<size_t>(t)] != 0;
    }
    if (!any_target) throw std::runtime_error("nll: all-padding sequence");
    std::vector<int> inputs(padded_items.begin(), padded_items.end() - 1);
    Tensor lg = logits(features(inputs));
    return nll_masked(log_softmax_rows(lg), targets, 0);
}

std::vector<Tensor> BackboneModel::params() const {
    std::vector<Tensor> out = {embedding};
    for (const auto& b : blocks)
        for (const auto& p : b.params()) out.push_back(p);
    out.push_back(out_w);
    out.push_back(out_b);
    return out;
}

std::vector<std::pair<std::string, Tensor>> BackboneModel::named_params() const {
    static const char* kBlockNames[] = {"conv1_w", "conv1_b", "ln1_g", "ln1_b",
                                        "conv2_w", "conv2_b", "ln2_g", "ln2_b"};
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embedding", embedding);
    for (size_t l = 0; l < blocks.size(); ++l) {
        auto ps = blocks[l].params();
        for (size_t i = 0; i < ps.size(); ++i)
            out.emplace_back("block" + std::to_string(l) + "." + kBlockNames[i], ps[i]);
    }
    out.emplace_back("out_w", out_w);
    out.emplace_back("out_b", out_b);
    return out;
}

static std::string dilations_to_string(const std::vector<int>& d) {
    std::string s;
    for (size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
    return s;
}

static std::vector<int> dilations_from_string(const std::string& s) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

Checkpoint BackboneModel::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.meta["model"] = "backbone";
    ckpt.meta["vocab_size"] = std::to_string(cfg.vocab_size);
    ckpt.meta["embed_dim"] = std::to_string(cfg.embed_dim);
    ckpt.meta["dilations"] = dilations_to_string(cfg.dilations);
    ckpt.meta["kernel_size"] = std::to_string(cfg.kernel_size);
    ckpt.meta["seq_len"] = std::to_string(cfg.seq_len);
    for (auto& [name, t] : named_params()) ckpt.add(name, t);
    return ckpt;
}

BackboneModel BackboneModel::from_checkpoint(const Checkpoint& ckpt) {
    BackboneConfig cfg;
    cfg.vocab_size = std::stoi(ckpt.meta_at("vocab_size"));
    cfg.embed_dim = std::stoi(ckpt.meta_at("embed_dim"));
    cfg.dilations = dilations_from_string(ckpt.meta_at("dilations"));
    cfg.kernel_size = std::stoi(ckpt.meta_at("kernel_size"));
    cfg.seq_len = std::stoi(ckpt.meta_at("seq_len"));
    BackboneModel m = init(cfg, 0);
    for (auto& [name, t] : m.named_params()) {
        Tensor loaded = ckpt.require(name);
        if (loaded.shape() != t.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        t.data() = loaded.data();
    }
    return m;
}

PretrainResult pretrain(const std::vector<std::vector<int>>& corpus,
                        const BackboneConfig& cfg, const PretrainConfig& train) {
    if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
    BackboneModel model = BackboneModel::init(cfg, train.seed);
    Adam opt(model.params(), {.lr = train.lr});
    std::mt19937_64 rng(train.seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<std::vector<int>> padded;
    padded.reserve(corpus.size());
    for (const auto& seq : corpus) padded.push_back(pad_sequence(seq, cfg.seq_len));

    PretrainResult result{std::move(model), {}};
    std::vector<int> order(padded.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < train.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(train.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(train.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (size_t i = start; i < end; ++i) {
                Tensor nll = result.model.autoregressive_nll(padded[static_cast<size_t>(order[i])]);
                epoch_loss += nll.value();
                backward(affine(nll, inv_batch, 0.0));
            }
            opt.step();
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(padded.size()));
    }
    return result;
}

}  // namespace uaf
