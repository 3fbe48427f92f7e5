#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "uaf/eval.hpp"

using namespace uaf;

namespace {

// Brute-force oracle: stable sort by (score desc, id asc) over ids >= 1.
int rank_by_sort(const std::vector<double>& scores, int target) {
    std::vector<int> ids;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i) ids.push_back(i);
    std::sort(ids.begin(), ids.end(), [&scores](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;
    });
    for (size_t i = 0; i < ids.size(); ++i)
        if (ids[i] == target) return static_cast<int>(i) + 1;
    return -1;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("rank of target follows the tie rule") {
    // Unique max wins.
    CHECK(rank_of_target({0.0, 0.1, 0.9, 0.5}, 2) == 1);
    // All equal: smallest non-pad id ranks first.
    CHECK(rank_of_target({9.9, 0.5, 0.5, 0.5}, 1) == 1);
    CHECK(rank_of_target({9.9, 0.5, 0.5, 0.5}, 3) == 3);
    // The pad slot's score is ignored even when it is the largest.
    CHECK(rank_of_target({100.0, 0.2, 0.1}, 1) == 1);
}

TEST_CASE("rank of target matches a brute-force sort oracle") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> coarse(0, 3);
    for (int trial = 0; trial < 500; ++trial) {
        const int vocab = 2 + static_cast<int>(rng() % 30);
        std::vector<double> scores(static_cast<size_t>(vocab));
        // Mix continuous and heavily tied score vectors.
        for (auto& s : scores) s = trial % 2 ? u(rng) : 0.25 * coarse(rng);
        const int target = 1 + static_cast<int>(rng() % (vocab - 1));
        CHECK(rank_of_target(scores, target) == rank_by_sort(scores, target));
    }
}

TEST_CASE("mrr and hr closed forms") {
    CHECK(mrr_at_n({1}, 5) == 1.0);
    CHECK(hr_at_n({1}, 5) == 1.0);
    CHECK(mrr_at_n({3}, 5) == doctest::Approx(1.0 / 3).epsilon(1e-9));
    CHECK(hr_at_n({3}, 5) == 1.0);
    CHECK(mrr_at_n({6}, 5) == 0.0);
    CHECK(hr_at_n({6}, 5) == 0.0);
    CHECK(mrr_at_n({1, 2, 10}, 5) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(hr_at_n({1, 2, 10}, 5) == doctest::Approx(2.0 / 3).epsilon(1e-9));
    CHECK_THROWS(mrr_at_n({}, 5));
    CHECK_THROWS(hr_at_n({}, 5));
}

TEST_CASE("mrr never exceeds hr") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> ranks(1 + rng() % 50);
        for (auto& r : ranks) r = 1 + static_cast<int>(rng() % 20);
        CHECK(mrr_at_n(ranks, 5) <= hr_at_n(ranks, 5));
        CHECK(hr_at_n(ranks, 5) <= 1.0);
        CHECK(mrr_at_n(ranks, 5) >= 0.0);
    }
}

TEST_CASE("evaluate aggregates scorer output deterministically") {
    std::vector<TrainExample> examples(3);
    examples[0].pos = 2;
    examples[1].pos = 1;
    examples[2].pos = 3;
    // Fixed scores: example 0 hits rank 1, example 1 rank 2, example 2 rank 4.
    Scorer scorer = [](const TrainExample& ex) -> std::vector<double> {
        if (ex.pos == 2) return {0.0, 0.1, 0.9, 0.2, 0.3};
        if (ex.pos == 1) return {0.0, 0.5, 0.1, 0.9, 0.2};
        return {0.0, 0.9, 0.8, 0.1, 0.7};
    };
    MetricReport r = evaluate(scorer, examples, 3);
    CHECK(r.count == 3);
    CHECK(r.n == 3);
    CHECK(r.reciprocal_ranks.size() == 3);
    CHECK(r.mrr == doctest::Approx((1.0 + 0.5 + 0.0) / 3).epsilon(1e-9));
    CHECK(r.hr == doctest::Approx(2.0 / 3).epsilon(1e-9));
    MetricReport again = evaluate(scorer, examples, 3);
    CHECK(again.mrr == r.mrr);
    CHECK(again.reciprocal_ranks == r.reciprocal_ranks);
}

TEST_CASE("constant scorer matches the uniform-ranking analysis") {
    // With all scores tied, rank equals the target's position among non-pad
    // ids, so HR@5 = 5/|Y-1| exactly when targets are uniform.
    const int vocab = 41;  // 40 real items
    std::mt19937_64 rng(9);
    std::vector<TrainExample> examples(20000);
    for (auto& ex : examples) ex.pos = 1 + static_cast<int>(rng() % (vocab - 1));
    Scorer flat = [vocab](const TrainExample&) {
        return std::vector<double>(static_cast<size_t>(vocab), 0.0);
    };
    MetricReport r = evaluate(flat, examples, 5);
    const double p = 5.0 / 40.0;
    const double sigma = std::sqrt(p * (1 - p) / 20000.0);
    CHECK(std::fabs(r.hr - p) < 3 * sigma);
}

TEST_CASE("metrics are invariant under monotone score transforms") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<TrainExample> examples(50);
    for (auto& ex : examples) ex.pos = 1 + static_cast<int>(rng() % 19);
    std::vector<std::vector<double>> raw(50, std::vector<double>(20));
    for (auto& v : raw)
        for (auto& s : v) s = u(rng);
    Scorer base = [&raw, &examples](const TrainExample& ex) {
        return raw[static_cast<size_t>(&ex - examples.data())];
    };
    Scorer warped = [&raw, &examples](const TrainExample& ex) {
        auto v = raw[static_cast<size_t>(&ex - examples.data())];
        for (auto& s : v) s = std::tanh(s) * 3.0 + 7.0;  // strictly monotone
        return v;
    };
    MetricReport a = evaluate(base, examples, 5);
    MetricReport b = evaluate(warped, examples, 5);
    CHECK(a.mrr == b.mrr);
    CHECK(a.hr == b.hr);
    CHECK(a.reciprocal_ranks == b.reciprocal_ranks);
}

TEST_CASE("utilization profile averages gates per block") {
    std::vector<TrainExample> examples(4);
    for (int i = 0; i < 4; ++i) examples[static_cast<size_t>(i)].user = i + 1;
    GateFn all_freeze = [](const TrainExample&) {
        return std::vector<double>{0.0, 0.0, 0.0};
    };
    auto zeros = utilization_profile(all_freeze, examples);
    CHECK(zeros == std::vector<double>{0.0, 0.0, 0.0});

    GateFn block1_always = [](const TrainExample& ex) {
        return std::vector<double>{1.0, ex.user <= 2 ? 1.0 : 0.0, 0.0};
    };
    auto mixed = utilization_profile(block1_always, examples);
    CHECK(mixed[0] == 1.0);
    CHECK(mixed[1] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(mixed[2] == 0.0);
    CHECK_THROWS(utilization_profile(all_freeze, {}));
}

TEST_CASE("utilization equals the mean of the exported per-user decisions") {
    std::mt19937_64 rng(13);
    std::vector<TrainExample> examples(30);
    std::vector<int> users;
    std::vector<std::vector<double>> decisions;
    for (int i = 0; i < 30; ++i) {
        examples[static_cast<size_t>(i)].user = i + 1;
        users.push_back(i + 1);
        decisions.push_back({static_cast<double>(rng() % 2),
                             static_cast<double>(rng() % 2)});
    }
    GateFn lookup = [&decisions](const TrainExample& ex) {
        return decisions[static_cast<size_t>(ex.user - 1)];
    };
    auto profile = utilization_profile(lookup, examples);
    write_decisions_csv("util_decisions.csv", users, decisions);
    // Recompute the means from the CSV itself.
    std::ifstream f("util_decisions.csv");
    std::string line;
    std::getline(f, line);  // header
    std::vector<double> mean(2, 0.0);
    int rows = 0;
    while (std::getline(f, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        int user;
        double g0, g1;
        ls >> user >> g0 >> g1;
        mean[0] += g0;
        mean[1] += g1;
        ++rows;
    }
    CHECK(rows == 30);
    for (int l = 0; l < 2; ++l)
        CHECK(profile[static_cast<size_t>(l)] ==
              doctest::Approx(mean[static_cast<size_t>(l)] / rows).epsilon(1e-9));
    std::remove("util_decisions.csv");
}

TEST_CASE("csv writers emit documented headers with six significant digits") {
    MetricReport r;
    r.n = 5;
    r.mrr = 0.123456789;
    r.hr = 1.0 / 3.0;
    r.count = 7;
    write_metrics_csv("eval_metrics.csv", r);
    std::string metrics = read_file("eval_metrics.csv");
    CHECK(metrics.find("metric,value") == 0);
    CHECK(metrics.find("0.123457") != std::string::npos);
    CHECK(metrics.find("0.333333") != std::string::npos);

    write_utilization_csv("eval_util.csv", {0.0, 0.25, 1.0});
    std::string util = read_file("eval_util.csv");
    CHECK(util.find("block,utilization") == 0);
    CHECK(util.find("2,0.25") != std::string::npos);

    CHECK(format_fixed(0.123456789) == "0.123457");
    CHECK(format_fixed(0.0) == "0");
    std::remove("eval_metrics.csv");
    std::remove("eval_util.csv");
}
