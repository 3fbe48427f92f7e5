#include "uaf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uaf {

const std::vector<int>& CrossDomainDataset::source_of(int user) const {
    auto it = user_index.find(user);
    if (it == user_index.end())
        throw std::runtime_error("dataset: unknown user " + std::to_string(user));
    return source_seqs[static_cast<size_t>(it->second)];
}

static void validate(const CrossDomainDataset& ds) {
    if (ds.target.empty()) throw std::runtime_error("dataset: no target interactions");
    for (size_t i = 0; i < ds.source_seqs.size(); ++i) {
        for (int item : ds.source_seqs[i])
            if (item < 1 || item >= ds.source_vocab)
                throw std::runtime_error("dataset: source item id out of range");
    }
    for (const auto& [user, item] : ds.target) {
        if (!ds.user_index.count(user))
            throw std::runtime_error("dataset: target user " + std::to_string(user) +
                                     " absent from source records");
        if (item < 1 || item >= ds.target_vocab)
            throw std::runtime_error("dataset: target item id out of range");
    }
}

std::vector<std::vector<int>> load_source_sequences(const std::string& path,
                                                    int* max_item) {
    std::ifstream src(path);
    if (!src) throw std::runtime_error("dataset: cannot open " + path);
    std::vector<std::vector<int>> out;
    std::string line;
    int lineno = 0, mx = 0;
    while (std::getline(src, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected user_id<TAB>items");
        std::istringstream items(line.substr(tab + 1));
        std::vector<int> seq;
        int item;
        while (items >> item) {
            if (item < 1)
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": item ids must be positive");
            seq.push_back(item);
            mx = std::max(mx, item);
        }
        if (seq.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty sequence");
        out.push_back(std::move(seq));
    }
    if (max_item) *max_item = mx;
    return out;
}

CrossDomainDataset load_dataset(const std::string& source_path,
                                const std::string& target_path) {
    CrossDomainDataset ds;
    std::ifstream src(source_path);
    if (!src) throw std::runtime_error("dataset: cannot open " + source_path);
    std::string line;
    int lineno = 0;
    int max_source_item = 0, max_len = 0;
    while (std::getline(src, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(source_path + ":" + std::to_string(lineno) +
                                     ": expected user_id<TAB>items");
        int user;
        try {
            user = std::stoi(line.substr(0, tab));
        } catch (...) {
            throw std::runtime_error(source_path + ":" + std::to_string(lineno) +
                                     ": bad user id");
        }
        std::istringstream items(line.substr(tab + 1));
        std::vector<int> seq;
        int item;
        while (items >> item) {
            if (item < 1)
                throw std::runtime_error(source_path + ":" + std::to_string(lineno) +
                                         ": item ids must be positive");
            seq.push_back(item);
            max_source_item = std::max(max_source_item, item);
        }
        if (seq.empty())
            throw std::runtime_error(source_path + ":" + std::to_string(lineno) +
                                     ": empty sequence");
        if (ds.user_index.count(user))
            throw std::runtime_error(source_path + ":" + std::to_string(lineno) +
                                     ": duplicate user " + std::to_string(user));
        ds.user_index[user] = static_cast<int>(ds.user_ids.size());
        ds.user_ids.push_back(user);
        max_len = std::max(max_len, static_cast<int>(seq.size()));
        ds.source_seqs.push_back(std::move(seq));
    }

    std::ifstream tgt(target_path);
    if (!tgt) throw std::runtime_error("dataset: cannot open " + target_path);
    lineno = 0;
    int max_target_item = 0;
    while (std::getline(tgt, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        int user, item;
        if (!(ls >> user >> item))
            throw std::runtime_error(target_path + ":" + std::to_string(lineno) +
                                     ": expected user_id<TAB>item_id");
        ds.target.emplace_back(user, item);
        max_target_item = std::max(max_target_item, item);
    }

    ds.source_vocab = max_source_item + 1;
    ds.target_vocab = max_target_item + 1;
    ds.seq_len = max_len;
    validate(ds);
    return ds;
}

void save_dataset(const CrossDomainDataset& ds, const std::string& source_path,
                  const std::string& target_path) {
    std::ofstream src(source_path);
    if (!src) throw std::runtime_error("dataset: cannot open " + source_path + " for writing");
    for (size_t i = 0; i < ds.user_ids.size(); ++i) {
        src << ds.user_ids[i] << '\t';
        const auto& seq = ds.source_seqs[i];
        for (size_t j = 0; j < seq.size(); ++j) src << (j ? " " : "") << seq[j];
        src << '\n';
    }
    std::ofstream tgt(target_path);
    if (!tgt) throw std::runtime_error("dataset: cannot open " + target_path + " for writing");
    for (const auto& [user, item] : ds.target) tgt << user << '\t' << item << '\n';
}

std::vector<int> pad_sequence(const std::vector<int>& items, int n) {
    if (items.empty()) throw std::invalid_argument("pad_sequence: empty input");
    std::vector<int> out(static_cast<size_t>(n), 0);
    const size_t take = std::min(items.size(), static_cast<size_t>(n));
    std::copy(items.end() - static_cast<long>(take), items.end(),
              out.end() - static_cast<long>(take));
    return out;
}

Split split_dataset(const CrossDomainDataset& ds, uint64_t seed) {
    const size_t n = ds.target.size();
    if (n < 3) throw std::runtime_error("split: need at least 3 target records");
    std::vector<int> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);

    size_t n_train = static_cast<size_t>(std::llround(0.80 * static_cast<double>(n)));
    const size_t n_val = std::max<size_t>(1, static_cast<size_t>(std::llround(0.05 * static_cast<double>(n))));
    // Keep at least one test record on tiny datasets.
    if (n_train + n_val >= n) n_train = n - n_val - 1;
    Split split;
    split.seed = seed;
    split.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
    split.val.assign(idx.begin() + static_cast<long>(n_train),
                     idx.begin() + static_cast<long>(n_train + n_val));
    split.test.assign(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
    if (split.test.empty()) throw std::runtime_error("split: too few records");
    return split;
}

int sample_negative(int positive, int item_count, std::mt19937_64& rng) {
    if (item_count < 2) throw std::invalid_argument("sample_negative: need >= 2 items");
    std::uniform_int_distribution<int> d(1, item_count - 1);
    int r = d(rng);
    if (r >= positive) ++r;  // skip over the positive, stays uniform
    return r;
}

Split subsample_training(const Split& split, double fraction, uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("subsample: fraction out of (0,1]");
    if (fraction == 1.0) return split;
    Split out = split;
    std::mt19937_64 rng(seed);
    std::vector<int> train = split.train;
    std::shuffle(train.begin(), train.end(), rng);
    const size_t keep = static_cast<size_t>(
        std::ceil(fraction * static_cast<double>(train.size())));
    train.resize(keep);
    out.train = std::move(train);
    return out;
}

namespace {

// Draws from softmax(sharpness * scores) by inverse-CDF on the fly.
int sample_softmax(const std::vector<double>& scores, double sharpness,
                   std::mt19937_64& rng) {
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double z = 0;
    for (double s : scores) z += std::exp(sharpness * (s - mx));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double u = u01(rng) * z;
    for (size_t i = 0; i < scores.size(); ++i) {
        u -= std::exp(sharpness * (scores[i] - mx));
        if (u <= 0) return static_cast<int>(i);
    }
    return static_cast<int>(scores.size()) - 1;
}

}  // namespace

CrossDomainDataset generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.rho < 0.0 || cfg.rho > 1.0)
        throw std::invalid_argument("synthetic: rho must be in [0,1]");
    if (cfg.users < 1 || cfg.source_vocab < 3 || cfg.target_vocab < 3 || cfg.factors < 1)
        throw std::invalid_argument("synthetic: invalid config");

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const int f = cfg.factors;
    const double fscale = 1.0 / std::sqrt(static_cast<double>(f));

    // Item factor matrices; row 0 is the pad slot and never sampled.
    std::vector<double> src_factors(static_cast<size_t>(cfg.source_vocab) * f);
    std::vector<double> tgt_factors(static_cast<size_t>(cfg.target_vocab) * f);
    for (double& v : src_factors) v = nd(rng) * fscale;
    for (double& v : tgt_factors) v = nd(rng) * fscale;

    CrossDomainDataset ds;
    ds.source_vocab = cfg.source_vocab;
    ds.target_vocab = cfg.target_vocab;
    ds.seq_len = cfg.seq_len;

    std::uniform_int_distribution<int> len_dist(cfg.min_source_len, cfg.max_source_len);
    std::uniform_int_distribution<int> inter_dist(cfg.min_interactions, cfg.max_interactions);

    std::vector<double> src_scores(static_cast<size_t>(cfg.source_vocab - 1));
    std::vector<double> tgt_scores(static_cast<size_t>(cfg.target_vocab - 1));

    for (int u = 0; u < cfg.users; ++u) {
        const int user_id = u + 1;
        std::vector<double> latent(static_cast<size_t>(f)), noise(static_cast<size_t>(f));
        for (double& v : latent) v = nd(rng);
        for (double& v : noise) v = nd(rng);
        // rho-blend keeps unit variance: rho*z + sqrt(1-rho^2)*eps
        std::vector<double> target_latent(static_cast<size_t>(f));
        const double w = std::sqrt(std::max(0.0, 1.0 - cfg.rho * cfg.rho));
        for (int i = 0; i < f; ++i)
            target_latent[static_cast<size_t>(i)] =
                cfg.rho * latent[static_cast<size_t>(i)] + w * noise[static_cast<size_t>(i)];

        for (int x = 1; x < cfg.source_vocab; ++x) {
            double s = 0;
            for (int i = 0; i < f; ++i)
                s += src_factors[static_cast<size_t>(x) * f + i] * latent[static_cast<size_t>(i)];
            src_scores[static_cast<size_t>(x - 1)] = s;
        }
        const int len = len_dist(rng);
        std::vector<int> seq(static_cast<size_t>(len));
        for (int& item : seq) item = 1 + sample_softmax(src_scores, cfg.sharpness, rng);

        ds.user_index[user_id] = static_cast<int>(ds.user_ids.size());
        ds.user_ids.push_back(user_id);
        ds.source_seqs.push_back(std::move(seq));

        for (int y = 1; y < cfg.target_vocab; ++y) {
            double s = 0;
            for (int i = 0; i < f; ++i)
                s += tgt_factors[static_cast<size_t>(y) * f + i] * target_latent[static_cast<size_t>(i)];
            tgt_scores[static_cast<size_t>(y - 1)] = s;
        }
        const int count = inter_dist(rng);
        for (int c = 0; c < count; ++c)
            ds.target.emplace_back(user_id, 1 + sample_softmax(tgt_scores, cfg.sharpness, rng));
    }
    return ds;
}

std::vector<TrainExample> make_examples(const CrossDomainDataset& ds,
                                        const std::vector<int>& indices, int seq_len) {
    const int n = seq_len > 0 ? seq_len : ds.seq_len;
    std::vector<TrainExample> out;
    out.reserve(indices.size());
    for (int i : indices) {
        const auto& [user, item] = ds.target[static_cast<size_t>(i)];
        TrainExample ex;
        ex.user = user;
        ex.padded_source = pad_sequence(ds.source_of(user), n);
        ex.pos = item;
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace uaf
