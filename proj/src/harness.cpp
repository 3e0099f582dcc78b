#include "optbench/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include "optbench/checkpoint.hpp"
#include "optbench/data.hpp"
#include "optbench/errors.hpp"
#include "optbench/metrics.hpp"
#include "optbench/random.hpp"

namespace optbench {

using nlohmann::json;

// ---- RunConfig ------------------------------------------------------------

void RunConfig::validate() const {
    model_config(model, model_options);
    parse_optimizer(optimizer);
    hp.validate();
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        throw ConfigError("validation fraction must lie in [0, 1), got " + std::to_string(val_fraction));
    }
    if (data == "synthetic") {
        if (synthetic.classes == 0 || synthetic.classes > kNumClasses) {
            throw ConfigError("synthetic classes must lie in [1, 47]");
        }
        if (synthetic.train_per_class == 0) throw ConfigError("synthetic train samples per class must be >= 1");
    }
}

std::string RunConfig::run_name() const { return model + "_" + optimizer + "_seed" + std::to_string(seed); }

json RunConfig::to_json() const {
    return json{
        {"model", model},
        {"optimizer", optimizer},
        {"lr", hp.lr},
        {"beta1", hp.beta1},
        {"beta2", hp.beta2},
        {"eps", hp.eps},
        {"momentum", hp.momentum},
        {"padam_p", hp.padam_p},
        {"weight_decay", hp.weight_decay},
        {"batch_size", batch_size},
        {"epochs", epochs},
        {"seed", seed},
        {"data", data},
        {"val_fraction", val_fraction},
        {"width_divisor", model_options.width_divisor},
        {"batch_norm", model_options.batch_norm},
        {"local_response_norm", model_options.local_response_norm},
        {"transpose_idx", transpose_idx},
        {"synthetic",
         {{"classes", synthetic.classes},
          {"train_per_class", synthetic.train_per_class},
          {"test_per_class", synthetic.test_per_class}}},
    };
}

// ---- Serialisation --------------------------------------------------------

namespace {

std::string number(double v) {
    if (!std::isfinite(v)) throw NumericalError("cannot serialise non-finite metric value");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string number(const std::optional<double>& v) { return v ? number(*v) : "null"; }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::optional<double> optional_number(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
}

}  // namespace

bool EpochRow::same_metrics(const EpochRow& o) const noexcept {
    return epoch == o.epoch && train_loss == o.train_loss && val_loss == o.val_loss && val_f1 == o.val_f1 &&
           test_loss == o.test_loss && test_f1 == o.test_f1 && optimizer_steps == o.optimizer_steps;
}

std::string header_line(const RunHeader& h) {
    json j{{"type", "header"},
           {"model", h.model},
           {"optimizer", h.optimizer},
           {"seed", h.seed},
           {"code_version", h.code_version},
           {"start_time", h.start_time},
           {"init_param_hash", h.init_param_hash},
           {"epoch0_order_hash", h.epoch0_order_hash},
           {"config", h.config}};
    return j.dump();
}

std::string row_line(const EpochRow& r) {
    std::ostringstream os;
    os << "{\"type\":\"epoch\",\"epoch\":" << r.epoch << ",\"train_loss\":" << number(r.train_loss)
       << ",\"val_loss\":" << number(r.val_loss) << ",\"val_f1\":" << number(r.val_f1)
       << ",\"test_loss\":" << number(r.test_loss) << ",\"test_f1\":" << number(r.test_f1)
       << ",\"wall_seconds\":" << number(r.wall_seconds) << ",\"optimizer_steps\":" << r.optimizer_steps << "}";
    return os.str();
}

RunRecord parse_run_record(std::istream& in, const std::string& source) {
    std::vector<std::pair<std::string, bool>> lines;  // text, newline-terminated
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            lines.emplace_back(text.substr(pos), false);
            break;
        }
        lines.emplace_back(text.substr(pos, nl - pos), true);
        pos = nl + 1;
    }

    RunRecord rec;
    bool have_header = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& [line, terminated] = lines[i];
        const std::string where = source + ":" + std::to_string(i + 1);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            if (!terminated && i + 1 == lines.size()) break;  // interrupted final write
            throw ParseError(where + ": " + e.what());
        }
        try {
            const std::string type = j.at("type").get<std::string>();
            if (type == "header") {
                if (have_header) throw ParseError(where + ": duplicate header");
                RunHeader& h = rec.header;
                h.model = j.at("model").get<std::string>();
                h.optimizer = j.at("optimizer").get<std::string>();
                h.seed = j.at("seed").get<std::uint64_t>();
                h.code_version = j.at("code_version").get<std::string>();
                h.start_time = j.value("start_time", "");
                h.init_param_hash = j.value("init_param_hash", "");
                h.epoch0_order_hash = j.value("epoch0_order_hash", "");
                h.config = j.value("config", json::object());
                have_header = true;
            } else if (type == "epoch") {
                if (!have_header) throw ParseError(where + ": epoch row before header");
                EpochRow r;
                r.epoch = j.at("epoch").get<std::size_t>();
                r.train_loss = j.at("train_loss").get<double>();
                r.val_loss = optional_number(j, "val_loss");
                r.val_f1 = optional_number(j, "val_f1");
                r.test_loss = optional_number(j, "test_loss");
                r.test_f1 = optional_number(j, "test_f1");
                r.wall_seconds = j.value("wall_seconds", 0.0);
                r.optimizer_steps = j.value("optimizer_steps", std::uint64_t{0});
                if (r.epoch != rec.rows.size() + 1) {
                    throw ParseError(where + ": expected epoch " + std::to_string(rec.rows.size() + 1) + ", found " +
                                     std::to_string(r.epoch));
                }
                rec.rows.push_back(r);
            } else {
                throw ParseError(where + ": unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    if (!have_header) throw ParseError(source + ": missing header line");
    return rec;
}

RunRecord read_run_record(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run file '" + path.string() + "'");
    return parse_run_record(in, path.string());
}

void write_run_record(const std::filesystem::path& path, const RunRecord& record) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << header_line(record.header) << '\n';
    for (const auto& r : record.rows) out << row_line(r) << '\n';
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---- Training ---------------------------------------------------------------

namespace {

struct Splits {
    Dataset train, val;
    std::optional<Dataset> test;
};

Splits load_data(const RunConfig& cfg, std::uint64_t split_seed) {
    Dataset pool;
    std::optional<Dataset> test;
    if (cfg.data == "synthetic") {
        const auto& s = cfg.synthetic;
        pool = synthetic_blobs(s.train_per_class, s.classes, kImageSize, derive_seed(cfg.seed, "synthetic"));
        if (s.test_per_class > 0) {
            test = synthetic_blobs(s.test_per_class, s.classes, kImageSize, derive_seed(cfg.seed, "synthetic-test"));
        }
    } else {
        const auto files = locate_emnist(cfg.data);
        const IdxOptions opt{cfg.transpose_idx};
        pool = read_idx(files.train_images, files.train_labels, opt);
        if (files.test_images) test = read_idx(*files.test_images, *files.test_labels, opt);
    }
    if (cfg.val_fraction == 0.0) {
        if (pool.empty()) throw DataError("training split is empty");
        return Splits{std::move(pool), Dataset{}, std::move(test)};
    }
    auto [train, val] = split_train_val(pool, cfg.val_fraction, split_seed);
    if (train.empty()) throw DataError("training split is empty");
    return Splits{std::move(train), std::move(val), std::move(test)};
}

std::uint64_t parameter_hash(const Model& model) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const Parameter& p : model.parameters()) h = fnv1a64(std::as_bytes(p.value.data()), h);
    return h;
}

void require_finite(double v, const std::string& what, std::size_t epoch) {
    if (!std::isfinite(v)) {
        throw NumericalError("non-finite " + what + " after epoch " + std::to_string(epoch));
    }
}

}  // namespace

RunRecord run_training(const RunConfig& cfg, std::ostream* progress) {
    cfg.validate();
    const std::uint64_t init_seed = derive_seed(cfg.seed, "init");
    const std::uint64_t split_seed = derive_seed(cfg.seed, "split");
    const std::uint64_t shuffle_seed = derive_seed(cfg.seed, "shuffle");

    Splits data = load_data(cfg, split_seed);
    Model model = build_model(cfg.model, init_seed, cfg.model_options);
    Optimizer opt(parse_optimizer(cfg.optimizer), cfg.hp);
    const std::size_t n_train = data.train.size();

    RunRecord record;
    RunHeader& h = record.header;
    h.model = cfg.model;
    h.optimizer = cfg.optimizer;
    h.seed = cfg.seed;
    h.start_time = utc_now();
    h.init_param_hash = hex64(parameter_hash(model));
    h.epoch0_order_hash = hex64(fnv1a64(make_batch_plan(n_train, cfg.batch_size, shuffle_seed, 0).order));
    h.config = cfg.to_json();

    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg.out_dir.string() + "': " + ec.message());
    const auto log_path = cfg.out_dir / (cfg.run_name() + ".jsonl");
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open '" + log_path.string() + "' for writing");
    log << header_line(h) << '\n' << std::flush;

    if (progress) {
        *progress << "run " << cfg.run_name() << ": " << n_train << " train / " << data.val.size() << " val / "
                  << (data.test ? data.test->size() : 0) << " test samples, " << model.param_count()
                  << " parameters\n";
    }

    const auto params = model.parameters();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        const BatchPlan plan = make_batch_plan(n_train, cfg.batch_size, shuffle_seed, epoch - 1);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < plan.batch_count(); ++b) {
            const Batch batch = make_batch(data.train, plan, b);
            Tape tape;
            const Var logits = model.forward(tape, batch.images, Mode::train);
            const Var loss = tape.softmax_cross_entropy(logits, batch.labels);
            const double loss_value = tape.value(loss)[0];
            if (!std::isfinite(loss_value)) {
                throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(b + 1));
            }
            tape.backward(loss);
            opt.step(params);
            opt.clear_grads(params);
            loss_sum += loss_value * static_cast<double>(batch.labels.size());
        }

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(n_train);
        require_finite(row.train_loss, "training loss", epoch);
        if (!data.val.empty()) {
            const auto r = epoch_eval(model, data.val, cfg.batch_size);
            require_finite(r.loss, "validation loss", epoch);
            row.val_loss = r.loss;
            row.val_f1 = r.micro_f1;
        }
        if (data.test) {
            const auto r = epoch_eval(model, *data.test, cfg.batch_size);
            require_finite(r.loss, "test loss", epoch);
            row.test_loss = r.loss;
            row.test_f1 = r.micro_f1;
        }
        row.optimizer_steps = opt.state().step;
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        log << row_line(row) << '\n' << std::flush;
        if (!log) throw IoError("failed appending to '" + log_path.string() + "'");
        record.rows.push_back(row);

        if (progress) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "epoch %3zu  train_loss %.5f  val_f1 %s  test_f1 %s  (%.1fs)\n", epoch,
                          row.train_loss, row.val_f1 ? std::to_string(*row.val_f1).c_str() : "-",
                          row.test_f1 ? std::to_string(*row.test_f1).c_str() : "-", row.wall_seconds);
            *progress << buf << std::flush;
        }
    }

    if (cfg.save_checkpoint) {
        write_checkpoint(cfg.out_dir / (cfg.run_name() + ".obck"), checkpoint_of(model));
    }
    return record;
}

// ---- Scores ---------------------------------------------------------------

MetricField parse_metric_field(std::string_view name) {
    if (name == "test" || name == "test_f1") return MetricField::test_f1;
    if (name == "val" || name == "val_f1") return MetricField::val_f1;
    throw ConfigError("unknown metric stream '" + std::string(name) + "' (expected test or val)");
}

std::string_view to_string(MetricField field) { return field == MetricField::test_f1 ? "test_f1" : "val_f1"; }

BestScore best_score(const RunRecord& record, MetricField field) {
    std::optional<BestScore> best;
    for (const EpochRow& r : record.rows) {
        const auto& v = field == MetricField::test_f1 ? r.test_f1 : r.val_f1;
        if (!v) continue;
        if (!best || *v > best->value) best = BestScore{*v, r.epoch};
    }
    if (!best) {
        throw DataError("run " + record.header.model + "/" + record.header.optimizer + " has no " +
                        std::string(to_string(field)) + " rows");
    }
    return *best;
}

}  // namespace optbench
