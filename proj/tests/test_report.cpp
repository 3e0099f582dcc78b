#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "optbench/errors.hpp"
#include "optbench/harness.hpp"

using namespace optbench;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::string row_for(const std::string& table, const std::string& optimizer) {
    for (const auto& l : lines_of(table))
        if (l.rfind(optimizer + " ", 0) == 0) return l;
    return {};
}

// Cells of a table row, split on '|' and trimmed.
std::vector<std::string> cells(const std::string& row) {
    std::vector<std::string> out;
    std::istringstream in(row);
    for (std::string c; std::getline(in, c, '|');) {
        std::istringstream words(c);
        for (std::string w; words >> w;) out.push_back(w);
    }
    return out;
}

}  // namespace

TEST(BestScore, ReferenceFixtureValues) {
    for (const auto& t : fixtures::reference_grid()) {
        const BestScore b = best_score(fixtures::curve_run(t.model, t.optimizer, t.best_f1, t.epoch),
                                       MetricField::test_f1);
        EXPECT_EQ(b.value, t.best_f1) << t.model << "/" << t.optimizer;
        EXPECT_EQ(b.epoch, t.epoch) << t.model << "/" << t.optimizer;
    }
}

TEST(Report, AlexNetColumnVerbatim) {
    const Report r = build_report(fixtures::reference_runs("alexnet"));
    EXPECT_EQ(cells(row_for(r.table, "sgd")), (std::vector<std::string>{"sgd", "0.90106", "30"}));
    EXPECT_EQ(cells(row_for(r.table, "adam")), (std::vector<std::string>{"adam", "0.90397", "11"}));
    EXPECT_EQ(cells(row_for(r.table, "adabelief")), (std::vector<std::string>{"adabelief", "0.90388", "12"}));
    EXPECT_EQ(cells(row_for(r.table, "padam")), (std::vector<std::string>{"padam", "0.90591", "14"}));
    EXPECT_NE(r.csv.find("alexnet,padam,test_f1,1,0.90591,0.90591,0.90591,14,0"), std::string::npos) << r.csv;
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Report, FullTableShape) {
    const Report r = build_report(fixtures::reference_runs());
    const auto header = lines_of(r.table).at(2);
    EXPECT_LT(header.find("alexnet"), header.find("vgg-lite"));
    EXPECT_LT(header.find("vgg-lite"), header.find("resnet-lite"));
    const char* order[] = {"sgd", "adam", "adabelief", "padam"};
    std::size_t last = 0;
    for (const char* o : order) {
        const std::string row = row_for(r.table, o);
        ASSERT_FALSE(row.empty()) << o;
        EXPECT_EQ(cells(row).size(), 7u) << row;
        const std::size_t at = r.table.find(row);
        EXPECT_GT(at, last);
        last = at;
    }
    EXPECT_EQ(cells(row_for(r.table, "adam")),
              (std::vector<std::string>{"adam", "0.90397", "11", "0.90267", "19", "0.89720", "5"}));
    EXPECT_EQ(lines_of(r.csv).size(), 13u);
}

TEST(Report, TwoRunsOneModel) {
    std::vector<RunRecord> runs = {fixtures::curve_run("vgg-lite", "padam", 0.8, 3, 0, 5),
                                   fixtures::curve_run("vgg-lite", "sgd", 0.7, 5, 0, 5)};
    const Report r = build_report(runs);
    EXPECT_EQ(r.table.find("alexnet"), std::string::npos);
    EXPECT_EQ(cells(row_for(r.table, "sgd")), (std::vector<std::string>{"sgd", "0.70000", "5"}));
    EXPECT_EQ(cells(row_for(r.table, "padam")), (std::vector<std::string>{"padam", "0.80000", "3"}));
    EXPECT_TRUE(row_for(r.table, "adam").empty());
    EXPECT_LT(r.table.find("sgd "), r.table.find("padam "));
}

TEST(Report, MixedCodeVersionsWarn) {
    auto runs = fixtures::reference_runs("alexnet");
    runs[2].header.code_version = "0.0.9";
    const Report r = build_report(runs);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("code versions"), std::string::npos);
    EXPECT_FALSE(r.table.empty());
}

TEST(Report, SeedsAggregateAsMeanAndHalfRange) {
    std::vector<RunRecord> runs = {fixtures::curve_run("alexnet", "adam", 0.90, 4, 1, 10),
                                   fixtures::curve_run("alexnet", "adam", 0.92, 6, 2, 10),
                                   fixtures::curve_run("alexnet", "adam", 0.91, 5, 3, 10)};
    const Report r = build_report(runs);
    EXPECT_NE(row_for(r.table, "adam").find("0.91000 +/- 0.01000"), std::string::npos) << r.table;
    EXPECT_NE(row_for(r.table, "adam").find("4/6/5"), std::string::npos);
    EXPECT_NE(r.csv.find(",3,0.91"), std::string::npos);
    EXPECT_NE(r.csv.find(",4;6;5,1;2;3"), std::string::npos) << r.csv;
}

TEST(Report, DuplicateSeedWarnsAndIsIgnored) {
    std::vector<RunRecord> runs = {fixtures::curve_run("alexnet", "adam", 0.90, 4, 1, 10),
                                   fixtures::curve_run("alexnet", "adam", 0.50, 2, 1, 10)};
    const Report r = build_report(runs);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_EQ(cells(row_for(r.table, "adam")), (std::vector<std::string>{"adam", "0.90000", "4"}));
}

TEST(Report, ValidationStreamSwitch) {
    const Report r = build_report(fixtures::reference_runs("alexnet"), ReportOptions{MetricField::val_f1});
    EXPECT_EQ(cells(row_for(r.table, "sgd")), (std::vector<std::string>{"sgd", "0.89906", "30"}));
    EXPECT_NE(r.table.find("val_f1"), std::string::npos);
}

TEST(Report, EmptyInputIsDataError) { EXPECT_THROW(build_report({}), DataError); }

TEST(CurveCsv, ColumnsAndExactValues) {
    const RunRecord run = fixtures::curve_run("alexnet", "sgd", 0.5, 2, 0, 3);
    const auto l = lines_of(curve_csv(run));
    ASSERT_EQ(l.size(), 4u);
    EXPECT_EQ(l[0], "epoch,train_loss,test_loss,test_f1");
    EXPECT_EQ(l[2], "2,1.0,0.3,0.5");
    RunRecord val_only = run;
    for (auto& row : val_only.rows) row.test_f1.reset(), row.test_loss.reset();
    EXPECT_EQ(lines_of(curve_csv(val_only))[0], "epoch,train_loss,val_loss,val_f1");
}

TEST(ListRunFiles, SortedJsonlOnly) {
    const fs::path dir = fs::temp_directory_path() / "optbench_report_list";
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const char* n : {"b.jsonl", "a.jsonl", "c.obck", "notes.txt"}) std::ofstream(dir / n) << "x";
    const auto files = list_run_files(dir);
    ASSERT_EQ(files.size(), 2u);
    EXPECT_EQ(files[0].filename(), "a.jsonl");
    EXPECT_EQ(files[1].filename(), "b.jsonl");
    fs::remove_all(dir);
}
