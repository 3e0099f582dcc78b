#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "optbench/errors.hpp"
#include "optbench/harness.hpp"
#include "optbench/selftest.hpp"

namespace fs = std::filesystem;
using namespace optbench;

namespace {

int cmd_report(const fs::path& runs_dir, const std::string& csv_dir, const std::string& metric) {
    ReportOptions opts;
    opts.field = parse_metric_field(metric);
    std::vector<RunRecord> runs;
    const auto files = list_run_files(runs_dir);
    if (files.empty()) throw DataError("no run logs (*.jsonl) in " + runs_dir.string());
    for (const auto& f : files) runs.push_back(read_run_record(f));
    const Report report = build_report(runs, opts);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << report.table;
    if (!csv_dir.empty()) {
        fs::create_directories(csv_dir);
        std::ofstream(fs::path(csv_dir) / "best_scores.csv") << report.csv;
        for (std::size_t i = 0; i < files.size(); ++i) {
            std::ofstream(fs::path(csv_dir) / (files[i].stem().string() + "_curve.csv")) << curve_csv(runs[i]);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"optbench: optimizer benchmarking on small image classifiers"};
    app.require_subcommand(1);

    RunConfig cfg;
    bool no_transpose = false;
    bool quiet = false;
    auto* train = app.add_subcommand("train", "train one (model, optimizer, seed) run");
    train->add_option("--model", cfg.model, "alexnet | vgg-lite | resnet-lite")->required();
    train->add_option("--optimizer", cfg.optimizer, "sgd | adam | adabelief | padam")->required();
    train->add_option("--lr", cfg.hp.lr, "learning rate")->capture_default_str();
    train->add_option("--momentum", cfg.hp.momentum, "SGD momentum")->capture_default_str();
    train->add_option("--beta1", cfg.hp.beta1)->capture_default_str();
    train->add_option("--beta2", cfg.hp.beta2)->capture_default_str();
    train->add_option("--eps", cfg.hp.eps)->capture_default_str();
    train->add_option("--padam-p", cfg.hp.padam_p, "Padam partial exponent, in (0, 0.5]")->capture_default_str();
    train->add_option("--weight-decay", cfg.hp.weight_decay, "decoupled weight decay")->capture_default_str();
    train->add_option("--batch-size", cfg.batch_size)->capture_default_str();
    train->add_option("--epochs", cfg.epochs)->capture_default_str();
    std::vector<std::uint64_t> seeds{0};
    train->add_option("--seed", seeds, "repeat for several seeds; one run each")->capture_default_str();
    train->add_option("--data", cfg.data, "EMNIST directory or 'synthetic'")->capture_default_str();
    train->add_option("--out", cfg.out_dir, "directory for run logs")->capture_default_str();
    train->add_option("--val-fraction", cfg.val_fraction, "held-out share of the training pool; 0 disables validation")->capture_default_str();
    train->add_option("--width-divisor", cfg.model_options.width_divisor, "shrink conv and hidden widths")
        ->capture_default_str();
    train->add_flag("--batch-norm", cfg.model_options.batch_norm, "resnet-lite: batch norm after each conv");
    train->add_flag("--lrn", cfg.model_options.local_response_norm, "alexnet: local response norm after conv1/2");
    train->add_flag("--no-transpose", no_transpose, "keep IDX images in file orientation");
    train->add_option("--synthetic-classes", cfg.synthetic.classes)->capture_default_str();
    train->add_option("--synthetic-train", cfg.synthetic.train_per_class, "train samples per class")
        ->capture_default_str();
    train->add_option("--synthetic-test", cfg.synthetic.test_per_class, "test samples per class")
        ->capture_default_str();
    train->add_flag("--no-checkpoint", [&](std::int64_t) { cfg.save_checkpoint = false; });
    train->add_flag("--quiet", quiet);

    std::string runs_dir = "runs", csv_dir, metric = "test";
    auto* report = app.add_subcommand("report", "best-score table over a directory of run logs");
    report->add_option("--runs", runs_dir)->capture_default_str();
    report->add_option("--csv", csv_dir, "also write best_scores.csv and per-run curves here");
    report->add_option("--metric", metric, "test | val")->capture_default_str();

    SelftestOptions st;
    auto* selftest = app.add_subcommand("selftest", "gradient and optimizer self checks");
    selftest->add_flag("--quick", st.reduced_models, "check the models at reduced width");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*train) {
            cfg.transpose_idx = !no_transpose;
            for (std::uint64_t seed : seeds) {
                cfg.seed = seed;
                run_training(cfg, quiet ? nullptr : &std::cerr);
                std::cout << (cfg.out_dir / (cfg.run_name() + ".jsonl")).string() << '\n';
            }
            return 0;
        }
        if (*report) return cmd_report(runs_dir, csv_dir, metric);
        if (*selftest) return run_selftest(std::cout, st) == 0 ? 0 : 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
