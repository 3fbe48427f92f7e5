#include "uaf/run_config.hpp"

#include <fstream>
#include <sstream>

namespace uaf {

namespace {

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

std::string join_ints(const std::vector<int>& xs) {
    std::ostringstream ss;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) ss << ',';
        ss << xs[i];
    }
    return ss.str();
}

std::string fmt_double(double x) {
    std::ostringstream ss;
    ss.precision(17);
    ss << x;
    return ss.str();
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "k") k = parse_int(key, value);
    else if (key == "dilations") dilations = parse_int_list(key, value);
    else if (key == "kernel") kernel = parse_int(key, value);
    else if (key == "n") n = parse_int(key, value);
    else if (key == "lr") lr = parse_double(key, value);
    else if (key == "batch") batch = parse_int(key, value);
    else if (key == "tau") tau = parse_double(key, value);
    else if (key == "gamma") gamma = parse_double(key, value);
    else if (key == "beta") beta = parse_double(key, value);
    else if (key == "strategy") strategy = value;
    else if (key == "regime") regime = value;
    else if (key == "epochs") epochs = parse_int(key, value);
    else if (key == "seed") seed = parse_u64(key, value);
    else if (key == "metric_n") metric_n = parse_int(key, value);
    else if (key == "train_fraction") train_fraction = parse_double(key, value);
    else if (key == "policy_k") policy_k = parse_int(key, value);
    else if (key == "tune_embedding") tune_embedding = parse_bool(key, value);
    else if (key == "source") source = value;
    else if (key == "target") target = value;
    else if (key == "checkpoint") checkpoint = value;
    else if (key == "out") out = value;
    else if (key == "users") users = parse_int(key, value);
    else if (key == "x_vocab") x_vocab = parse_int(key, value);
    else if (key == "y_vocab") y_vocab = parse_int(key, value);
    else if (key == "factors") factors = parse_int(key, value);
    else if (key == "rho") rho = parse_double(key, value);
    else if (key == "min_inter") min_inter = parse_int(key, value);
    else if (key == "max_inter") max_inter = parse_int(key, value);
    else if (key == "min_source_len") min_source_len = parse_int(key, value);
    else if (key == "max_source_len") max_source_len = parse_int(key, value);
    else if (key == "sharpness") sharpness = parse_double(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::serialize() const {
    std::ostringstream ss;
    ss << "k=" << k << '\n';
    ss << "dilations=" << join_ints(dilations) << '\n';
    ss << "kernel=" << kernel << '\n';
    ss << "n=" << n << '\n';
    ss << "lr=" << fmt_double(lr) << '\n';
    ss << "batch=" << batch << '\n';
    ss << "tau=" << fmt_double(tau) << '\n';
    ss << "gamma=" << fmt_double(gamma) << '\n';
    ss << "beta=" << fmt_double(beta) << '\n';
    ss << "strategy=" << strategy << '\n';
    ss << "regime=" << regime << '\n';
    ss << "epochs=" << epochs << '\n';
    ss << "seed=" << seed << '\n';
    ss << "metric_n=" << metric_n << '\n';
    ss << "train_fraction=" << fmt_double(train_fraction) << '\n';
    ss << "policy_k=" << policy_k << '\n';
    ss << "tune_embedding=" << (tune_embedding ? "true" : "false") << '\n';
    ss << "source=" << source << '\n';
    ss << "target=" << target << '\n';
    ss << "checkpoint=" << checkpoint << '\n';
    ss << "out=" << out << '\n';
    ss << "users=" << users << '\n';
    ss << "x_vocab=" << x_vocab << '\n';
    ss << "y_vocab=" << y_vocab << '\n';
    ss << "factors=" << factors << '\n';
    ss << "rho=" << fmt_double(rho) << '\n';
    ss << "min_inter=" << min_inter << '\n';
    ss << "max_inter=" << max_inter << '\n';
    ss << "min_source_len=" << min_source_len << '\n';
    ss << "max_source_len=" << max_source_len << '\n';
    ss << "sharpness=" << fmt_double(sharpness) << '\n';
    return ss.str();
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        // strip leading spaces
        size_t b = line.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        if (line[b] == '#') continue;
        size_t eq = line.find('=', b);
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(b, eq - b);
        size_t ke = key.find_last_not_of(" \t");
        key = key.substr(0, ke + 1);
        std::string value = line.substr(eq + 1);
        size_t vb = value.find_first_not_of(" \t");
        value = vb == std::string::npos ? "" : value.substr(vb);
        cfg.set(key, value);
    }
    return cfg;
}

RunConfig parse_run_config(const std::vector<std::string>& args) {
    RunConfig cfg;
    size_t i = 0;
    // --config must come first so later flags override the file.
    if (args.size() >= 2 && args[0] == "--config") {
        cfg = load_config_file(args[1]);
        i = 2;
    }
    for (; i < args.size(); i += 2) {
        const std::string& flag = args[i];
        if (flag.size() < 3 || flag.substr(0, 2) != "--")
            throw ConfigError("expected --key, got '" + flag + "'");
        if (flag == "--config")
            throw ConfigError("--config must be the first argument");
        if (i + 1 >= args.size())
            throw ConfigError("missing value for '" + flag + "'");
        cfg.set(flag.substr(2), args[i + 1]);
    }
    return cfg;
}

}  // namespace uaf
