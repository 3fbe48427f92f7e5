#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "uaf/backbone.hpp"
#include "uaf/checkpoint.hpp"
#include "uaf/data.hpp"
#include "uaf/eval.hpp"
#include "uaf/finetune.hpp"
#include "uaf/policy.hpp"
#include "uaf/run_config.hpp"
#include "uaf/tensor.hpp"

namespace fs = std::filesystem;
using namespace uaf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

void require_path(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ConfigError("missing required --" + flag + " <path>");
}

fs::path prepare_out(const RunConfig& cfg) {
    require_path(cfg.out, "out");
    fs::path out(cfg.out);
    fs::create_directories(out);
    std::ofstream f(out / "config.txt");
    if (!f) throw std::runtime_error("cannot write " + (out / "config.txt").string());
    f << cfg.serialize();
    return out;
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << body;
}

BackboneConfig backbone_config(const RunConfig& cfg, int vocab_size) {
    BackboneConfig bc;
    bc.vocab_size = vocab_size;
    bc.embed_dim = cfg.k;
    bc.dilations = cfg.dilations;
    bc.kernel_size = cfg.kernel;
    bc.seq_len = cfg.n;
    bc.validate();
    return bc;
}

FinetuneOptions finetune_options(const RunConfig& cfg) {
    FinetuneOptions opts;
    opts.epochs = cfg.epochs;
    opts.batch_size = cfg.batch;
    opts.lr = cfg.lr;
    opts.tau = cfg.tau;
    opts.gamma = cfg.gamma;
    opts.beta = cfg.beta;
    opts.seed = cfg.seed;
    opts.metric_n = cfg.metric_n;
    opts.tune_embedding = cfg.tune_embedding;
    opts.policy_embed_dim = cfg.policy_k;
    return opts;
}

std::string curve_csv(const std::vector<EpochRow>& curve) {
    std::ostringstream ss;
    ss << "epoch,train_loss,val_mrr,val_hr\n";
    for (const auto& row : curve)
        ss << row.epoch << ',' << format_fixed(row.train_loss) << ','
           << format_fixed(row.val_mrr) << ',' << format_fixed(row.val_hr) << '\n';
    return ss.str();
}

int cmd_generate(const RunConfig& cfg) {
    if (cfg.rho < 0.0 || cfg.rho > 1.0)
        throw ConfigError("rho must lie in [0,1]");
    fs::path out = prepare_out(cfg);
    SyntheticConfig sc;
    sc.users = cfg.users;
    sc.source_vocab = cfg.x_vocab;
    sc.target_vocab = cfg.y_vocab;
    sc.seq_len = cfg.n;
    sc.factors = cfg.factors;
    sc.rho = cfg.rho;
    sc.min_interactions = cfg.min_inter;
    sc.max_interactions = cfg.max_inter;
    sc.min_source_len = cfg.min_source_len;
    sc.max_source_len = cfg.max_source_len;
    sc.sharpness = cfg.sharpness;
    sc.seed = cfg.seed;
    CrossDomainDataset ds = generate_synthetic(sc);
    std::string src = cfg.source.empty() ? (out / "source.tsv").string() : cfg.source;
    std::string tgt = cfg.target.empty() ? (out / "target.tsv").string() : cfg.target;
    save_dataset(ds, src, tgt);
    std::cout << "generated " << ds.user_ids.size() << " users, "
              << ds.target.size() << " target interactions\n"
              << "source: " << src << "\ntarget: " << tgt << "\n";
    return kExitOk;
}

int cmd_pretrain(const RunConfig& cfg) {
    require_path(cfg.source, "source");
    fs::path out = prepare_out(cfg);
    int max_item = 0;
    std::vector<std::vector<int>> corpus = load_source_sequences(cfg.source, &max_item);
    BackboneConfig bc = backbone_config(cfg, max_item + 1);
    PretrainConfig pc;
    pc.epochs = cfg.epochs;
    pc.batch_size = cfg.batch;
    pc.lr = cfg.lr;
    pc.seed = cfg.seed;
    PretrainResult result = pretrain(corpus, bc, pc);

    save_checkpoint(result.model.to_checkpoint(), (out / "checkpoint.bin").string());
    std::ostringstream ss;
    ss << "epoch,loss\n";
    for (size_t e = 0; e < result.epoch_losses.size(); ++e)
        ss << (e + 1) << ',' << format_fixed(result.epoch_losses[e]) << '\n';
    write_text(out / "pretrain_loss.csv", ss.str());
    std::cout << "pretrained " << bc.num_blocks() << " blocks on "
              << corpus.size() << " sequences; final loss "
              << format_fixed(result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back())
              << "\ncheckpoint: " << (out / "checkpoint.bin").string() << "\n";
    return kExitOk;
}

int cmd_finetune(const RunConfig& cfg) {
    require_path(cfg.source, "source");
    require_path(cfg.target, "target");
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction > 1.0)
        throw ConfigError("train_fraction must lie in (0,1]");
    fs::path out = prepare_out(cfg);
    CrossDomainDataset ds = load_dataset(cfg.source, cfg.target);
    Split split = split_dataset(ds, cfg.seed);
    if (cfg.train_fraction < 1.0)
        split = subsample_training(split, cfg.train_fraction, cfg.seed);
    FinetuneOptions opts = finetune_options(cfg);

    std::vector<EpochRow> curve;
    MetricReport test;
    Checkpoint ckpt;
    if (!cfg.regime.empty()) {
        Regime regime = regime_from_string(cfg.regime);
        BackboneModel pretrained;
        bool have_ckpt = false;
        if (regime == Regime::zero) {
            if (!cfg.checkpoint.empty())
                std::cerr << "warning: regime=zero trains from scratch; ignoring --checkpoint\n";
            opts.arch = backbone_config(cfg, ds.source_vocab);
        } else {
            require_path(cfg.checkpoint, "checkpoint");
            pretrained = BackboneModel::from_checkpoint(load_checkpoint(cfg.checkpoint));
            have_ckpt = true;
        }
        BaselineRun run = run_baseline(ds, split, have_ckpt ? &pretrained : nullptr,
                                       regime, opts);
        curve = run.curve;
        test = run.test;
        ckpt = run.model.to_checkpoint();
    } else {
        PolicyMode strategy = policy_mode_from_string(cfg.strategy);
        require_path(cfg.checkpoint, "checkpoint");
        BackboneModel pretrained =
            BackboneModel::from_checkpoint(load_checkpoint(cfg.checkpoint));
        UafRun run = run_uaf(ds, split, pretrained, strategy, opts);
        curve = run.curve;
        test = run.test;
        ckpt = run.model.to_checkpoint();
    }

    save_checkpoint(ckpt, (out / "checkpoint.bin").string());
    write_text(out / "curves.csv", curve_csv(curve));
    write_metrics_csv((out / "metrics.csv").string(), test);
    std::cout << "test MRR@" << test.n << " " << format_fixed(test.mrr)
              << "  HR@" << test.n << " " << format_fixed(test.hr)
              << " over " << test.count << " interactions\n";
    return kExitOk;
}

// Test-split examples with negatives left at 0; ranking ignores them.
std::vector<TrainExample> test_examples(const CrossDomainDataset& ds, uint64_t seed,
                                        int seq_len) {
    Split split = split_dataset(ds, seed);
    return make_examples(ds, split.test, seq_len);
}

int cmd_evaluate(const RunConfig& cfg) {
    require_path(cfg.checkpoint, "checkpoint");
    fs::path out = prepare_out(cfg);
    Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    std::string kind = ckpt.meta_at("model");
    MetricReport report;
    if (kind == "backbone") {
        // Source-domain next-item ranking: last item is the held-out target.
        require_path(cfg.source, "source");
        BackboneModel model = BackboneModel::from_checkpoint(ckpt);
        std::vector<std::vector<int>> corpus = load_source_sequences(cfg.source);
        std::vector<TrainExample> examples;
        for (const auto& seq : corpus) {
            if (seq.size() < 2) continue;
            TrainExample ex;
            ex.pos = seq.back();
            ex.padded_source = pad_sequence(
                std::vector<int>(seq.begin(), seq.end() - 1), model.cfg.seq_len);
            examples.push_back(std::move(ex));
        }
        NoGradGuard ng;
        Scorer scorer = [&model](const TrainExample& ex) {
            Tensor scores = model.logits(model.features(ex.padded_source));
            return row(scores, model.cfg.seq_len - 1).data();
        };
        report = evaluate(scorer, examples, cfg.metric_n);
    } else if (kind == "target") {
        require_path(cfg.source, "source");
        require_path(cfg.target, "target");
        TargetModel model = TargetModel::from_checkpoint(ckpt);
        CrossDomainDataset ds = load_dataset(cfg.source, cfg.target);
        NoGradGuard ng;
        report = evaluate(make_scorer(model),
                          test_examples(ds, cfg.seed, model.cfg.seq_len), cfg.metric_n);
    } else if (kind == "uaf") {
        require_path(cfg.source, "source");
        require_path(cfg.target, "target");
        UafModel model = UafModel::from_checkpoint(ckpt);
        CrossDomainDataset ds = load_dataset(cfg.source, cfg.target);
        NoGradGuard ng;
        report = evaluate(make_scorer(model),
                          test_examples(ds, cfg.seed, model.cfg.seq_len), cfg.metric_n);
    } else {
        throw std::runtime_error("checkpoint: unknown model kind '" + kind + "'");
    }
    report.seed = cfg.seed;
    write_metrics_csv((out / "metrics.csv").string(), report);
    std::cout << "MRR@" << report.n << " " << format_fixed(report.mrr)
              << "  HR@" << report.n << " " << format_fixed(report.hr)
              << " over " << report.count << " examples\n";
    return kExitOk;
}

int cmd_policy_viz(const RunConfig& cfg) {
    require_path(cfg.checkpoint, "checkpoint");
    require_path(cfg.source, "source");
    require_path(cfg.target, "target");
    fs::path out = prepare_out(cfg);
    Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    if (ckpt.meta_at("model") != "uaf")
        throw std::runtime_error("policy-viz requires a gated-model checkpoint");
    UafModel model = UafModel::from_checkpoint(ckpt);
    CrossDomainDataset ds = load_dataset(cfg.source, cfg.target);

    // One decision per user: the policy reads only the source sequence.
    NoGradGuard ng;
    std::vector<TrainExample> per_user;
    std::vector<std::vector<double>> gates;
    for (size_t i = 0; i < ds.user_ids.size(); ++i) {
        TrainExample ex;
        ex.user = ds.user_ids[i];
        ex.padded_source = pad_sequence(ds.source_seqs[i], model.cfg.seq_len);
        gates.push_back(model.decide(ex).gates);
        per_user.push_back(std::move(ex));
    }
    std::vector<double> profile = utilization_profile(make_gate_fn(model), per_user);
    write_utilization_csv((out / "utilization.csv").string(), profile);
    write_decisions_csv((out / "decisions.csv").string(), ds.user_ids, gates);
    std::cout << "utilization:";
    for (double p : profile) std::cout << ' ' << format_fixed(p);
    std::cout << '\n';
    return kExitOk;
}

void print_usage(std::ostream& os) {
    os << "usage: uaf <command> [--config <path>] [--key value ...]\n"
          "commands:\n"
          "  generate    write a synthetic cross-domain dataset\n"
          "  pretrain    train the source-domain backbone\n"
          "  finetune    adapt to the target domain (strategy or regime)\n"
          "  evaluate    score a checkpoint on the held-out test split\n"
          "  policy-viz  export per-user gate decisions and block utilization\n";
}

}  // namespace

int main(int argc, char** argv) {
    try {
        if (argc < 2) {
            print_usage(std::cerr);
            return kExitConfig;
        }
        std::string command = argv[1];
        if (command == "--help" || command == "-h" || command == "help") {
            print_usage(std::cout);
            return kExitOk;
        }
        std::vector<std::string> args(argv + 2, argv + argc);
        RunConfig cfg = parse_run_config(args);
        if (command == "generate") return cmd_generate(cfg);
        if (command == "pretrain") return cmd_pretrain(cfg);
        if (command == "finetune") return cmd_finetune(cfg);
        if (command == "evaluate") return cmd_evaluate(cfg);
        if (command == "policy-viz") return cmd_policy_viz(cfg);
        std::cerr << "error: unknown command '" << command << "'\n";
        print_usage(std::cerr);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return std::string(e.what()).find("non-finite") != std::string::npos
                   ? kExitNumeric
                   : kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
