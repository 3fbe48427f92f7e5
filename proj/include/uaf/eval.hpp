#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uaf/data.hpp"

namespace uaf {

struct MetricReport {
    int n = 5;  // cutoff
    double mrr = 0.0;
    double hr = 0.0;
    std::vector<double> reciprocal_ranks;  // per evaluated example
    int count = 0;
    std::string tag;
    uint64_t seed = 0;
};

// Scores indexed by target item id; index 0 is the padding slot and is
// excluded from the catalog.
using Scorer = std::function<std::vector<double>(const TrainExample&)>;

// 1-based rank of the target: 1 + strictly-higher count, ties broken by
// item id ascending.
int rank_of_target(const std::vector<double>& scores, int target);

double mrr_at_n(const std::vector<int>& ranks, int n);
double hr_at_n(const std::vector<int>& ranks, int n);

MetricReport evaluate(const Scorer& scorer, const std::vector<TrainExample>& examples,
                      int n);

// Per-block mean gate value over the given users' examples.
using GateFn = std::function<std::vector<double>(const TrainExample&)>;
std::vector<double> utilization_profile(const GateFn& gates,
                                        const std::vector<TrainExample>& examples);

void write_metrics_csv(const std::string& path, const MetricReport& report);
void write_utilization_csv(const std::string& path, const std::vector<double>& profile);
void write_decisions_csv(const std::string& path, const std::vector<int>& users,
                         const std::vector<std::vector<double>>& gates);
std::string format_fixed(double v);  // 6 significant digits

}  // namespace uaf
