#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "optbench/models.hpp"
#include "optbench/optim.hpp"

namespace optbench {

inline constexpr std::string_view kCodeVersion = "0.1.0";

struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 50;
};

struct RunConfig {
    std::string model = "vgg-lite";
    std::string optimizer = "adam";
    HyperParams hp;
    std::size_t batch_size = 64;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    /// "synthetic" or a directory holding EMNIST IDX files.
    std::string data = "synthetic";
    std::filesystem::path out_dir = "runs";
    double val_fraction = 1.0 / 6.0;
    ModelOptions model_options;
    bool transpose_idx = true;
    SyntheticSpec synthetic;
    /// Write the final parameters next to the run log.
    bool save_checkpoint = true;

    void validate() const;
    /// "<model>_<optimizer>_seed<seed>"
    std::string run_name() const;
    nlohmann::json to_json() const;
};

struct EpochRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // sample-weighted mean of the epoch's minibatch losses
    std::optional<double> val_loss, val_f1;
    std::optional<double> test_loss, test_f1;
    double wall_seconds = 0.0;
    std::uint64_t optimizer_steps = 0;

    /// Metric equality, ignoring wall-clock time.
    bool same_metrics(const EpochRow& other) const noexcept;
};

struct RunHeader {
    std::string model;
    std::string optimizer;
    std::uint64_t seed = 0;
    std::string code_version{kCodeVersion};
    std::string start_time;
    std::string init_param_hash;    // FNV-1a over the initial parameter bytes
    std::string epoch0_order_hash;  // FNV-1a over the first epoch's batch order
    nlohmann::json config = nlohmann::json::object();
};

/// One JSON object per line: a header line, then one line per epoch. Floating
/// point metrics are written with 17 significant digits.
struct RunRecord {
    RunHeader header;
    std::vector<EpochRow> rows;
};

std::string header_line(const RunHeader& header);
std::string row_line(const EpochRow& row);

/// Parses a run log. A final line without a trailing newline that does not
/// parse is treated as an interrupted write and dropped; any other malformed
/// line raises ParseError naming `source` and the line number.
RunRecord parse_run_record(std::istream& in, const std::string& source);
RunRecord read_run_record(const std::filesystem::path& path);
void write_run_record(const std::filesystem::path& path, const RunRecord& record);

/// Executes the training protocol: split, then per epoch shuffle into batches
/// and for every batch forward, cross entropy, backward, optimizer step and
/// gradient clear; evaluate after every epoch and append the row to
/// `<out_dir>/<run_name>.jsonl` before the next epoch starts.
/// Throws NumericalError naming the epoch and batch on a non-finite loss.
RunRecord run_training(const RunConfig& cfg, std::ostream* progress = nullptr);

enum class MetricField { test_f1, val_f1 };
MetricField parse_metric_field(std::string_view name);
std::string_view to_string(MetricField field);

struct BestScore {
    double value = 0.0;
    std::size_t epoch = 0;
};

/// Maximum of the field and its earliest epoch; rows where the field is
/// missing are skipped. Throws DataError if no row carries the field.
BestScore best_score(const RunRecord& record, MetricField field);

struct ReportOptions {
    MetricField field = MetricField::test_f1;
};

struct Report {
    std::string table;
    std::string csv;
    std::vector<std::string> warnings;
};

/// Grid of best score / epoch per (model, optimizer). Several seeds for the
/// same pair are shown as mean +/- half the min-max spread.
Report build_report(const std::vector<RunRecord>& runs, const ReportOptions& options = {});
/// epoch,train_loss,test_loss,test_f1 (val columns when there is no test stream)
std::string curve_csv(const RunRecord& record);
/// `*.jsonl` files in `dir`, sorted by name.
std::vector<std::filesystem::path> list_run_files(const std::filesystem::path& dir);

}  // namespace optbench
