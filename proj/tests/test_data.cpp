#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "uaf/data.hpp"

using namespace uaf;

namespace {

void write_file(const std::string& path, const std::string& body) {
    std::ofstream f(path);
    f << body;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

// Similarity-weighted vote: score target items for a held-out user by how
// often users with overlapping source histories interacted with them.
double knn_hr_at_5(const CrossDomainDataset& ds) {
    const size_t half = ds.user_ids.size() / 2;
    std::vector<std::set<int>> item_sets(ds.user_ids.size());
    for (size_t i = 0; i < ds.user_ids.size(); ++i)
        item_sets[i] = std::set<int>(ds.source_seqs[i].begin(), ds.source_seqs[i].end());
    std::vector<std::vector<int>> train_items(half);
    for (const auto& [user, item] : ds.target) {
        size_t row = static_cast<size_t>(ds.user_index.at(user));
        if (row < half) train_items[row].push_back(item);
    }
    int hits = 0, total = 0;
    for (const auto& [user, item] : ds.target) {
        size_t row = static_cast<size_t>(ds.user_index.at(user));
        if (row < half) continue;
        std::vector<double> scores(static_cast<size_t>(ds.target_vocab), 0.0);
        std::vector<double> consumers(static_cast<size_t>(ds.target_vocab), 0.0);
        for (size_t v = 0; v < half; ++v) {
            int inter = 0;
            for (int x : item_sets[row])
                if (item_sets[v].count(x)) ++inter;
            const double uni = static_cast<double>(item_sets[row].size() +
                                                   item_sets[v].size() - inter);
            const double sim = uni > 0 ? inter / uni : 0.0;
            for (int y : train_items[v]) {
                scores[static_cast<size_t>(y)] += sim;
                consumers[static_cast<size_t>(y)] += 1.0;
            }
        }
        // Mean similarity of an item's consumers: popularity cancels out.
        for (int y = 1; y < ds.target_vocab; ++y)
            if (consumers[static_cast<size_t>(y)] > 0)
                scores[static_cast<size_t>(y)] /= consumers[static_cast<size_t>(y)];
        int higher = 0;
        for (int y = 1; y < ds.target_vocab; ++y)
            if (y != item && scores[static_cast<size_t>(y)] >= scores[static_cast<size_t>(item)])
                ++higher;
        if (higher < 5) ++hits;
        ++total;
    }
    return total ? static_cast<double>(hits) / total : 0.0;
}

}  // namespace

TEST_CASE("pad_sequence left pads and truncates to the most recent items") {
    CHECK(pad_sequence({5, 7}, 5) == std::vector<int>{0, 0, 0, 5, 7});
    CHECK(pad_sequence({1, 2, 3}, 3) == std::vector<int>{1, 2, 3});
    CHECK(pad_sequence({9, 1, 2, 3, 4, 5}, 3) == std::vector<int>{3, 4, 5});
    CHECK_THROWS(pad_sequence({}, 4));
}

TEST_CASE("two-user fixture loads as an exact mirror") {
    write_file("src_fixture.tsv", "10\t3 1 4\n20\t2 2\n");
    write_file("tgt_fixture.tsv", "10\t5\n20\t1\n20\t3\n");
    auto ds = load_dataset("src_fixture.tsv", "tgt_fixture.tsv");
    CHECK(ds.user_ids == std::vector<int>{10, 20});
    CHECK(ds.source_seqs[0] == std::vector<int>{3, 1, 4});
    CHECK(ds.source_seqs[1] == std::vector<int>{2, 2});
    CHECK(ds.target == std::vector<std::pair<int, int>>{{10, 5}, {20, 1}, {20, 3}});
    CHECK(ds.source_vocab == 5);
    CHECK(ds.target_vocab == 6);
    CHECK(ds.seq_len == 3);
    CHECK(ds.source_of(20) == std::vector<int>{2, 2});
    CHECK_THROWS(ds.source_of(30));
    std::remove("src_fixture.tsv");
    std::remove("tgt_fixture.tsv");
}

TEST_CASE("loader reports malformed input with line numbers") {
    write_file("src_bad.tsv", "1\t2 3\nnot-a-line\n");
    write_file("tgt_ok.tsv", "1\t1\n");
    CHECK_THROWS_WITH_AS(load_dataset("src_bad.tsv", "tgt_ok.tsv"),
                         doctest::Contains(":2:"), std::runtime_error);
    write_file("src_ok.tsv", "1\t2 3\n");
    write_file("tgt_empty.tsv", "");
    CHECK_THROWS_WITH_AS(load_dataset("src_ok.tsv", "tgt_empty.tsv"),
                         doctest::Contains("no target interactions"), std::runtime_error);
    write_file("tgt_orphan.tsv", "9\t1\n");
    CHECK_THROWS(load_dataset("src_ok.tsv", "tgt_orphan.tsv"));
    CHECK_THROWS(load_dataset("missing.tsv", "tgt_ok.tsv"));
    for (const char* p : {"src_bad.tsv", "tgt_ok.tsv", "src_ok.tsv", "tgt_empty.tsv",
                          "tgt_orphan.tsv"})
        std::remove(p);
}

TEST_CASE("save then load round trips a generated dataset") {
    SyntheticConfig cfg;
    cfg.users = 40;
    cfg.source_vocab = 30;
    cfg.target_vocab = 20;
    cfg.factors = 6;
    cfg.seed = 5;
    auto ds = generate_synthetic(cfg);
    save_dataset(ds, "rt_src.tsv", "rt_tgt.tsv");
    auto loaded = load_dataset("rt_src.tsv", "rt_tgt.tsv");
    CHECK(loaded.user_ids == ds.user_ids);
    CHECK(loaded.source_seqs == ds.source_seqs);
    CHECK(loaded.target == ds.target);
    std::remove("rt_src.tsv");
    std::remove("rt_tgt.tsv");
}

TEST_CASE("split proportions are 80/5/15") {
    CrossDomainDataset ds;
    for (int u = 1; u <= 100; ++u) {
        ds.user_index[u] = u - 1;
        ds.user_ids.push_back(u);
        ds.source_seqs.push_back({1});
        ds.target.emplace_back(u, 1);
    }
    ds.source_vocab = ds.target_vocab = 2;
    ds.seq_len = 1;
    Split split = split_dataset(ds, 7);
    CHECK(split.train.size() == 80);
    CHECK(split.val.size() == 5);
    CHECK(split.test.size() == 15);
    Split again = split_dataset(ds, 7);
    CHECK(again.train == split.train);
    CHECK(again.val == split.val);
    CHECK(again.test == split.test);
    CHECK(split_dataset(ds, 8).train != split.train);
}

TEST_CASE("splits are disjoint and exhaustive across random sizes") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 400);
        CrossDomainDataset ds;
        ds.user_index[1] = 0;
        ds.user_ids.push_back(1);
        ds.source_seqs.push_back({1});
        for (int i = 0; i < n; ++i) ds.target.emplace_back(1, 1);
        ds.source_vocab = ds.target_vocab = 2;
        ds.seq_len = 1;
        Split split = split_dataset(ds, rng());
        std::vector<int> all;
        all.insert(all.end(), split.train.begin(), split.train.end());
        all.insert(all.end(), split.val.begin(), split.val.end());
        all.insert(all.end(), split.test.begin(), split.test.end());
        CHECK(static_cast<int>(all.size()) == n);
        std::sort(all.begin(), all.end());
        CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
        CHECK(all.front() == 0);
        CHECK(all.back() == n - 1);
        CHECK(!split.val.empty());
        CHECK(!split.test.empty());
    }
    CrossDomainDataset tiny;
    tiny.user_index[1] = 0;
    tiny.user_ids.push_back(1);
    tiny.source_seqs.push_back({1});
    tiny.target.emplace_back(1, 1);
    tiny.source_vocab = tiny.target_vocab = 2;
    tiny.seq_len = 1;
    CHECK_THROWS(split_dataset(tiny, 1));
}

TEST_CASE("negative sampler avoids the positive and the pad id") {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 1000; ++i) CHECK(sample_negative(1, 2, rng) == 2);
    for (int i = 0; i < 100000; ++i) {
        int neg = sample_negative(7, 20, rng);
        CHECK(neg != 7);
        CHECK(neg >= 1);
        CHECK(neg <= 20);
    }
    CHECK_THROWS(sample_negative(1, 1, rng));
}

TEST_CASE("negative sampler is uniform by chi-squared test") {
    std::mt19937_64 rng(17);
    const int item_count = 20, positive = 7, draws = 100000;
    std::vector<int> counts(static_cast<size_t>(item_count + 1), 0);
    for (int i = 0; i < draws; ++i) ++counts[static_cast<size_t>(sample_negative(positive, item_count, rng))];
    CHECK(counts[0] == 0);
    CHECK(counts[static_cast<size_t>(positive)] == 0);
    const double expected = static_cast<double>(draws) / (item_count - 1);
    double chi2 = 0;
    for (int y = 1; y <= item_count; ++y) {
        if (y == positive) continue;
        const double d = counts[static_cast<size_t>(y)] - expected;
        chi2 += d * d / expected;
    }
    // 18 degrees of freedom, p > 0.01 critical value.
    CHECK(chi2 < 34.805);
}

TEST_CASE("training subsample keeps ceil(fraction * count) and is deterministic") {
    Split split;
    for (int i = 0; i < 1000; ++i) split.train.push_back(i);
    split.val = {1000};
    split.test = {1001};
    Split same = subsample_training(split, 1.0, 3);
    CHECK(same.train == split.train);
    Split tenth = subsample_training(split, 0.1, 3);
    CHECK(tenth.train.size() == 100);
    CHECK(tenth.val == split.val);
    CHECK(tenth.test == split.test);
    CHECK(subsample_training(split, 0.1, 3).train == tenth.train);
    CHECK(subsample_training(split, 0.0003, 3).train.size() == 1);  // ceil
    CHECK_THROWS(subsample_training(split, 0.0, 3));
    CHECK_THROWS(subsample_training(split, 1.5, 3));
}

TEST_CASE("generator is seed deterministic and respects invariants") {
    SyntheticConfig cfg;
    cfg.users = 50;
    cfg.source_vocab = 40;
    cfg.target_vocab = 25;
    cfg.factors = 8;
    cfg.seed = 21;
    auto a = generate_synthetic(cfg);
    auto b = generate_synthetic(cfg);
    CHECK(a.source_seqs == b.source_seqs);
    CHECK(a.target == b.target);
    for (const auto& seq : a.source_seqs)
        for (int item : seq) {
            CHECK(item >= 1);
            CHECK(item < cfg.source_vocab);
        }
    for (const auto& [user, item] : a.target) {
        CHECK(a.user_index.count(user) == 1);
        CHECK(item >= 1);
        CHECK(item < cfg.target_vocab);
        size_t count = 0;
        for (const auto& [u2, i2] : a.target)
            if (u2 == user) ++count;
        CHECK(count >= 1);
        CHECK(count <= 5);
    }
    cfg.rho = 1.5;
    CHECK_THROWS(generate_synthetic(cfg));
}

TEST_CASE("cross-domain correlation controls source-to-target transfer") {
    SyntheticConfig cfg;
    cfg.users = 400;
    cfg.source_vocab = 200;
    cfg.target_vocab = 50;
    cfg.factors = 8;
    cfg.min_interactions = 2;
    cfg.max_interactions = 5;
    cfg.seed = 31;

    cfg.rho = 1.0;
    double hr_shared = knn_hr_at_5(generate_synthetic(cfg));
    cfg.rho = 0.0;
    double hr_independent = knn_hr_at_5(generate_synthetic(cfg));

    const double random_hr = 5.0 / (cfg.target_vocab - 1);
    CHECK(hr_shared >= 3.0 * random_hr);
    CHECK(hr_independent < 2.0 * random_hr);
    CHECK(hr_shared > hr_independent);
}

TEST_CASE("make_examples pairs each interaction with the padded source") {
    write_file("mk_src.tsv", "1\t3 1 4 1 5\n2\t2 6\n");
    write_file("mk_tgt.tsv", "1\t5\n2\t1\n2\t3\n");
    auto ds = load_dataset("mk_src.tsv", "mk_tgt.tsv");
    auto examples = make_examples(ds, {0, 2}, 4);
    REQUIRE(examples.size() == 2);
    CHECK(examples[0].user == 1);
    CHECK(examples[0].padded_source == std::vector<int>{1, 4, 1, 5});  // recent 4
    CHECK(examples[0].pos == 5);
    CHECK(examples[1].user == 2);
    CHECK(examples[1].padded_source == std::vector<int>{0, 0, 2, 6});
    CHECK(examples[1].pos == 3);
    std::remove("mk_src.tsv");
    std::remove("mk_tgt.tsv");
}
