#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace uaf {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value run configuration. Unknown keys are rejected; the exact
// config in effect is echoed into every output directory.
struct RunConfig {
    // model / optimization
    int k = 128;
    std::vector<int> dilations = {1, 2, 4, 8, 1, 2, 4, 8, 1, 2, 4, 8, 1, 2, 4, 8};
    int kernel = 3;
    int n = 20;  // sequence length
    double lr = 0.0001;
    int batch = 256;
    double tau = 10.0;
    double gamma = 1.0;
    double beta = 1.0;
    std::string strategy = "hard";
    std::string regime;  // non-empty selects a baseline fine-tuning regime
    int epochs = 10;
    uint64_t seed = 1;
    int metric_n = 5;
    double train_fraction = 1.0;
    int policy_k = 16;
    bool tune_embedding = true;

    // paths
    std::string source, target, checkpoint, out;

    // synthetic generator
    int users = 5000;
    int x_vocab = 1000;
    int y_vocab = 200;
    int factors = 16;
    double rho = 0.9;
    int min_inter = 1;
    int max_inter = 5;
    int min_source_len = 10;
    int max_source_len = 20;
    double sharpness = 3.0;

    void set(const std::string& key, const std::string& value);
    std::string serialize() const;  // key=value lines, stable order
};

// argv past the subcommand: --config <path> first if present, then
// --key value overrides in order.
RunConfig parse_run_config(const std::vector<std::string>& args);
RunConfig load_config_file(const std::string& path);

}  // namespace uaf
