#include "mixscale/runtime/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <CLI11.hpp>

#include "mixscale/data/image_io.hpp"
#include "mixscale/diag/diagnostics.hpp"
#include "mixscale/eval/report.hpp"
#include "mixscale/runtime/inference.hpp"
#include "mixscale/runtime/trainer.hpp"

namespace fs = std::filesystem;

namespace mixscale {

namespace {

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
    RunConfig cfg = load_config_file(config_path);
    for (const auto& o : overrides) apply_override(cfg, o);
    if (const char* env_root = std::getenv("MIXSCALE_DATA_ROOT"); env_root && *env_root)
        cfg.data_root = env_root;
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

int cmd_train(const RunConfig& cfg) {
    if (cfg.data_root.empty())
        throw DatasetError("train requires data.root (or MIXSCALE_DATA_ROOT)");
    IndexResult index = index_dataset(cfg.data_root);
    std::printf("indexed %zu sample pairs (%zu unmatched files)\n", index.pairs.size(),
                index.unmatched.size());
    Normalization nrm = Normalization::for_backbone(cfg.model.backbone);
    DiskSampleSource source(index.pairs, cfg.train.main_scale, nrm, cfg.train.hflip,
                            cfg.train.rotate, cfg.train.seed, /*skip_undecodable=*/true);
    SegmentationNetwork<float> net(cfg.model, cfg.train.seed);
    std::printf("model: %zu trainable parameters\n", net.parameter_count());
    TrainResult result = train_model(net, cfg.train, source, cfg.out_dir);
    std::printf("trained %zu iterations; checkpoint: %s\nloss log: %s\n",
                result.log.size(), result.checkpoint_path.c_str(),
                result.loss_log_path.c_str());
    return 0;
}

int cmd_infer(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw ConfigError("infer requires run.checkpoint");
    if (cfg.data_root.empty())
        throw DatasetError("infer requires data.root (or MIXSCALE_DATA_ROOT)");
    SegmentationNetwork<float> net(cfg.model, cfg.train.seed);
    CheckpointRecord record = load_checkpoint(cfg.checkpoint);
    restore_model(net, nullptr, record, config_fingerprint(cfg.model, cfg.train));
    fs::path out = fs::path(cfg.out_dir) / "predictions";
    size_t n = infer_folder(net, cfg.train.main_scale, cfg.data_root, out.string(),
                            cfg.dump_debug);
    std::printf("wrote %zu prediction maps to %s\n", n, out.string().c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    std::string pred_dir = cfg.pred_dir;
    if (pred_dir.empty() && !cfg.checkpoint.empty()) {
        // run inference first, then evaluate against the dataset GT
        if (cfg.data_root.empty())
            throw DatasetError("eval without eval.pred_dir requires data.root");
        SegmentationNetwork<float> net(cfg.model, cfg.train.seed);
        CheckpointRecord record = load_checkpoint(cfg.checkpoint);
        restore_model(net, nullptr, record, config_fingerprint(cfg.model, cfg.train));
        pred_dir = (fs::path(cfg.out_dir) / "predictions").string();
        infer_folder(net, cfg.train.main_scale, cfg.data_root, pred_dir);
    }
    if (pred_dir.empty()) throw ConfigError("eval requires eval.pred_dir or run.checkpoint");
    std::string gt_dir = cfg.gt_dir;
    if (gt_dir.empty() && !cfg.data_root.empty())
        gt_dir = (fs::path(cfg.data_root) / "GT").string();
    if (gt_dir.empty()) throw ConfigError("eval requires eval.gt_dir or data.root");

    MetricConfig mcfg;
    MetricReport report = evaluate_folders(pred_dir, gt_dir, mcfg, cfg.fig9_band);
    write_report_files(report, cfg.out_dir);
    std::printf("%s\n", report_to_json(report).c_str());
    std::printf("report written to %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_diag(const RunConfig& cfg) {
    DiagReport report = run_diagnostics(cfg.model, cfg.diag_input_size, cfg.diag_gradcheck,
                                        cfg.checkpoint);
    std::string json = diag_report_json(report);
    fs::create_directories(cfg.out_dir);
    std::ofstream out(fs::path(cfg.out_dir) / "diag_report.json");
    out << json << "\n";
    std::printf("%s\n", json.c_str());
    return report.passed ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"mixed-scale segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string command;
    for (const char* name : {"train", "infer", "eval", "diag"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "config file (key=value lines)")
            ->required();
        sub->add_option("--set", overrides, "override, key=value (repeatable)");
        sub->callback([&command, name] { command = name; });
    }

    std::vector<const char*> argv;
    argv.push_back("mixscale");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = load_run_config(config_path, overrides);
        if (command == "train") return cmd_train(cfg);
        if (command == "infer") return cmd_infer(cfg);
        if (command == "eval") return cmd_eval(cfg);
        return cmd_diag(cfg);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const FingerprintError& e) {
        std::fprintf(stderr, "refused: %s\n", e.what());
        return 4;
    } catch (const IntegrityError& e) {
        std::fprintf(stderr, "checkpoint integrity error: %s\n", e.what());
        return 4;
    } catch (const DatasetError& e) {
        std::fprintf(stderr, "dataset error: %s\n", e.what());
        return 3;
    } catch (const ImageIoError& e) {
        std::fprintf(stderr, "image i/o error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace mixscale
