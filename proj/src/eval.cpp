#include "uaf/eval.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uaf {

int rank_of_target(const std::vector<double>& scores, int target) {
    if (target < 1 || target >= static_cast<int>(scores.size()))
        throw std::invalid_argument("rank_of_target: target out of range");
    const double ts = scores[static_cast<size_t>(target)];
    int rank = 1;
    for (size_t i = 1; i < scores.size(); ++i) {  // pad slot 0 excluded
        if (static_cast<int>(i) == target) continue;
        if (scores[i] > ts || (scores[i] == ts && static_cast<int>(i) < target)) ++rank;
    }
    return rank;
}

double mrr_at_n(const std::vector<int>& ranks, int n) {
    if (ranks.empty()) throw std::invalid_argument("mrr_at_n: empty input");
    double s = 0;
    for (int r : ranks) {
        if (r < 1) throw std::invalid_argument("mrr_at_n: rank must be >= 1");
        if (r <= n) s += 1.0 / r;
    }
    return s / static_cast<double>(ranks.size());
}

double hr_at_n(const std::vector<int>& ranks, int n) {
    if (ranks.empty()) throw std::invalid_argument("hr_at_n: empty input");
    double s = 0;
    for (int r : ranks) {
        if (r < 1) throw std::invalid_argument("hr_at_n: rank must be >= 1");
        if (r <= n) s += 1.0;
    }
    return s / static_cast<double>(ranks.size());
}

MetricReport evaluate(const Scorer& scorer, const std::vector<TrainExample>& examples,
                      int n) {
    MetricReport report;
    report.n = n;
    std::vector<int> ranks;
    ranks.reserve(examples.size());
    for (const auto& ex : examples) {
        const int r = rank_of_target(scorer(ex), ex.pos);
        ranks.push_back(r);
        report.reciprocal_ranks.push_back(r <= n ? 1.0 / r : 0.0);
    }
    report.mrr = mrr_at_n(ranks, n);
    report.hr = hr_at_n(ranks, n);
    report.count = static_cast<int>(ranks.size());
    return report;
}

std::vector<double> utilization_profile(const GateFn& gates,
                                        const std::vector<TrainExample>& examples) {
    if (examples.empty()) throw std::invalid_argument("utilization_profile: no users");
    std::vector<double> acc;
    for (const auto& ex : examples) {
        const auto g = gates(ex);
        if (acc.empty()) acc.assign(g.size(), 0.0);
        if (g.size() != acc.size())
            throw std::runtime_error("utilization_profile: inconsistent gate length");
        for (size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
    for (double& v : acc) v /= static_cast<double>(examples.size());
    return acc;
}

std::string format_fixed(double v) {
    std::ostringstream ss;
    ss.precision(6);
    ss << v;
    return ss.str();
}

void write_metrics_csv(const std::string& path, const MetricReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "metric,value\n";
    out << "mrr_at_" << report.n << "," << format_fixed(report.mrr) << "\n";
    out << "hr_at_" << report.n << "," << format_fixed(report.hr) << "\n";
    out << "count," << report.count << "\n";
}

void write_utilization_csv(const std::string& path, const std::vector<double>& profile) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "block,utilization\n";
    for (size_t i = 0; i < profile.size(); ++i)
        out << (i + 1) << "," << format_fixed(profile[i]) << "\n";
}

void write_decisions_csv(const std::string& path, const std::vector<int>& users,
                         const std::vector<std::vector<double>>& gates) {
    if (users.size() != gates.size())
        throw std::invalid_argument("write_decisions_csv: length mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "user_id";
    if (!gates.empty())
        for (size_t i = 0; i < gates[0].size(); ++i) out << ",gate" << (i + 1);
    out << "\n";
    for (size_t u = 0; u < users.size(); ++u) {
        out << users[u];
        for (double g : gates[u]) out << "," << format_fixed(g);
        out << "\n";
    }
}

}  // namespace uaf
