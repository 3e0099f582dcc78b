#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "optbench/errors.hpp"
#include "optbench/harness.hpp"

using namespace optbench;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("optbench_harness_" + name);
    fs::remove_all(d);
    return d;
}

// Small, fast configuration: 4-class blobs, vgg-lite at 1/8 width.
RunConfig tiny_config(const std::string& name) {
    RunConfig c;
    c.model = "vgg-lite";
    c.optimizer = "adam";
    c.epochs = 3;
    c.batch_size = 32;
    c.seed = 3;
    c.model_options.width_divisor = 8;
    c.synthetic = SyntheticSpec{4, 50, 10};
    c.out_dir = temp_dir(name);
    c.save_checkpoint = false;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(RunTraining, LearnsOnSeparableData) {
    RunConfig c = tiny_config("learn");
    c.synthetic = SyntheticSpec{4, 200, 0};
    const RunRecord r = run_training(c);
    ASSERT_EQ(r.rows.size(), 3u);
    EXPECT_LT(r.rows.back().train_loss, r.rows.front().train_loss);
    EXPECT_FALSE(r.rows.front().test_f1.has_value());
    EXPECT_TRUE(r.rows.front().val_f1.has_value());
}

TEST(RunTraining, SameConfigIsBitIdentical) {
    const RunRecord a = run_training(tiny_config("det_a"));
    const RunRecord b = run_training(tiny_config("det_b"));
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_TRUE(a.rows[i].same_metrics(b.rows[i])) << i;
    EXPECT_EQ(a.header.init_param_hash, b.header.init_param_hash);
    EXPECT_EQ(a.header.epoch0_order_hash, b.header.epoch0_order_hash);
}

TEST(RunTraining, ZeroEpochsWritesHeaderOnly) {
    RunConfig c = tiny_config("zero");
    c.epochs = 0;
    const RunRecord r = run_training(c);
    EXPECT_TRUE(r.rows.empty());
    const RunRecord back = read_run_record(c.out_dir / (c.run_name() + ".jsonl"));
    EXPECT_TRUE(back.rows.empty());
    EXPECT_EQ(back.header.model, "vgg-lite");
}

TEST(RunTraining, LogMatchesReturnedRecord) {
    RunConfig c = tiny_config("log");
    c.save_checkpoint = true;
    const RunRecord r = run_training(c);
    const RunRecord back = read_run_record(c.out_dir / "vgg-lite_adam_seed3.jsonl");
    ASSERT_EQ(back.rows.size(), r.rows.size());
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        EXPECT_TRUE(back.rows[i].same_metrics(r.rows[i]));
        EXPECT_EQ(back.rows[i].wall_seconds, r.rows[i].wall_seconds);
    }
    EXPECT_EQ(back.header.code_version, kCodeVersion);
    EXPECT_EQ(back.header.config.at("optimizer"), "adam");
    EXPECT_TRUE(fs::exists(c.out_dir / "vgg-lite_adam_seed3.obck"));
    EXPECT_EQ(r.rows.back().optimizer_steps, 3u * 6u);  // 167 train samples / 32 = 6 batches per epoch
}

TEST(RunTraining, OptimizersShareInitAndOrder) {
    std::string init, order;
    for (const char* opt : {"sgd", "adam", "adabelief", "padam"}) {
        RunConfig c = tiny_config(std::string("fair_") + opt);
        c.optimizer = opt;
        c.epochs = 1;
        const RunRecord r = run_training(c);
        if (init.empty()) init = r.header.init_param_hash, order = r.header.epoch0_order_hash;
        EXPECT_EQ(r.header.init_param_hash, init) << opt;
        EXPECT_EQ(r.header.epoch0_order_hash, order) << opt;
    }
    RunConfig other = tiny_config("fair_other");
    other.seed = 4;
    other.epochs = 0;
    EXPECT_NE(run_training(other).header.init_param_hash, init);
}

TEST(RunTraining, DivergenceIsNumericalError) {
    RunConfig c = tiny_config("nan");
    c.optimizer = "sgd";
    c.hp.lr = 1e300;  // the first update overflows the weights
    try {
        run_training(c);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST(RunTraining, ConfigErrors) {
    RunConfig c = tiny_config("cfg");
    c.model = "lenet";
    EXPECT_THROW(run_training(c), ConfigError);
    c = tiny_config("cfg");
    c.optimizer = "rmsprop";
    EXPECT_THROW(run_training(c), ConfigError);
    c = tiny_config("cfg");
    c.batch_size = 0;
    EXPECT_THROW(run_training(c), ConfigError);
    c = tiny_config("cfg");
    c.val_fraction = 1.0;
    EXPECT_THROW(run_training(c), ConfigError);
    c = tiny_config("cfg");
    c.data = "/nonexistent/emnist";
    EXPECT_THROW(run_training(c), DataError);
}

TEST(RunTraining, NoValidationWhenFractionIsZero) {
    RunConfig c = tiny_config("noval");
    c.val_fraction = 0.0;
    c.epochs = 1;
    const RunRecord r = run_training(c);
    EXPECT_FALSE(r.rows[0].val_f1.has_value());
    EXPECT_TRUE(r.rows[0].test_f1.has_value());
    EXPECT_EQ(r.rows[0].optimizer_steps, 7u);  // 200 / 32 rounded up
}

// ---- run log format -------------------------------------------------------

namespace {

RunRecord sample_record() {
    RunRecord r;
    r.header.model = "alexnet";
    r.header.optimizer = "padam";
    r.header.seed = 18446744073709551615ULL;
    r.header.start_time = "2026-01-01T00:00:00Z";
    r.header.config = {{"lr", 0.0005}};
    for (std::size_t e = 1; e <= 4; ++e) {
        EpochRow row;
        row.epoch = e;
        row.train_loss = 1.0 / 3.0 + static_cast<double>(e);
        row.test_loss = std::nextafter(0.1 * static_cast<double>(e), 1.0);
        row.test_f1 = 0.90591 - 1e-17 * static_cast<double>(e);
        if (e % 2 == 0) row.val_f1 = 2.0 / 7.0;
        row.wall_seconds = 0.125;
        row.optimizer_steps = 10 * e;
        r.rows.push_back(row);
    }
    return r;
}

}  // namespace

TEST(RunLog, RoundTripIsLossless) {
    const fs::path dir = temp_dir("roundtrip");
    fs::create_directories(dir);
    const RunRecord r = sample_record();
    write_run_record(dir / "r.jsonl", r);
    const RunRecord back = read_run_record(dir / "r.jsonl");
    EXPECT_EQ(back.header.seed, r.header.seed);
    EXPECT_EQ(back.header.config, r.header.config);
    ASSERT_EQ(back.rows.size(), r.rows.size());
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        EXPECT_TRUE(back.rows[i].same_metrics(r.rows[i]));
        EXPECT_EQ(back.rows[i].val_f1.has_value(), r.rows[i].val_f1.has_value());
    }
}

TEST(RunLog, MissingStreamsAreNull) {
    EpochRow row;
    row.epoch = 1;
    row.train_loss = 0.5;
    const std::string line = row_line(row);
    EXPECT_NE(line.find("\"val_f1\":null"), std::string::npos);
    EXPECT_NE(line.find("\"test_loss\":null"), std::string::npos);
}

TEST(RunLog, TruncatedFinalLineIsDropped) {
    const RunRecord r = sample_record();
    std::string full = header_line(r.header) + "\n";
    std::vector<std::size_t> row_end;
    for (const auto& row : r.rows) {
        full += row_line(row) + "\n";
        row_end.push_back(full.size());
    }
    // Cut anywhere inside row 3: exactly two complete rows survive.
    for (std::size_t cut = row_end[1] + 1; cut < row_end[2] - 1; ++cut) {
        std::istringstream in(full.substr(0, cut));
        const RunRecord back = parse_run_record(in, "cut.jsonl");
        ASSERT_EQ(back.rows.size(), 2u) << "cut at " << cut;
    }
}

TEST(RunLog, MalformedMiddleLineNamesFileAndLine) {
    const RunRecord r = sample_record();
    const std::string text = header_line(r.header) + "\n" + row_line(r.rows[0]) + "\n{broken\n" + row_line(r.rows[1]) + "\n";
    std::istringstream in(text);
    try {
        parse_run_record(in, "runs/x.jsonl");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("runs/x.jsonl:3"), std::string::npos) << e.what();
    }
}

TEST(RunLog, RowBeforeHeaderOrMissingFields) {
    const RunRecord r = sample_record();
    std::istringstream a(row_line(r.rows[0]) + "\n");
    EXPECT_THROW(parse_run_record(a, "a"), ParseError);
    std::istringstream b(header_line(r.header) + "\n{\"type\":\"epoch\",\"epoch\":1}\n");
    EXPECT_THROW(parse_run_record(b, "b"), ParseError);
    std::istringstream c("");
    EXPECT_THROW(parse_run_record(c, "c"), ParseError);
}

TEST(RunLog, InterruptedRunKeepsCompletedEpochs) {
    // Train, then chop the log inside the last row as a killed process would leave it.
    RunConfig c = tiny_config("killed");
    c.epochs = 3;
    run_training(c);
    const fs::path log = c.out_dir / (c.run_name() + ".jsonl");
    const std::string text = slurp(log);
    const std::size_t last_row = text.rfind('\n', text.size() - 2) + 1;
    std::ofstream(log, std::ios::trunc) << text.substr(0, last_row + 20);
    EXPECT_EQ(read_run_record(log).rows.size(), 2u);
}

// ---- best score -----------------------------------------------------------

TEST(BestScore, EarliestTieWins) {
    RunRecord r;
    for (double f : {0.5, 0.9, 0.9}) {
        EpochRow row;
        row.epoch = r.rows.size() + 1;
        row.test_f1 = f;
        r.rows.push_back(row);
    }
    const BestScore b = best_score(r, MetricField::test_f1);
    EXPECT_EQ(b.value, 0.9);
    EXPECT_EQ(b.epoch, 2u);
}

TEST(BestScore, SingleRow) {
    RunRecord r;
    EpochRow row;
    row.epoch = 1;
    row.val_f1 = 0.3;
    r.rows.push_back(row);
    EXPECT_EQ(best_score(r, MetricField::val_f1).value, 0.3);
    EXPECT_EQ(best_score(r, MetricField::val_f1).epoch, 1u);
    EXPECT_THROW(best_score(r, MetricField::test_f1), DataError);
}

TEST(BestScore, FieldNames) {
    EXPECT_EQ(parse_metric_field("test"), MetricField::test_f1);
    EXPECT_EQ(parse_metric_field("val"), MetricField::val_f1);
    EXPECT_THROW(parse_metric_field("train"), ConfigError);
}
