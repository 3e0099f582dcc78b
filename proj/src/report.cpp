#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "optbench/errors.hpp"
#include "optbench/harness.hpp"

namespace optbench {

namespace {

// Shortest text that reads back as the same double.
std::string exact(double v) { return nlohmann::json(v).dump(); }

std::string fixed5(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.5f", v);
    return buf;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

template <typename Canonical>
std::vector<std::string> ordered(const std::set<std::string>& names, const Canonical& canonical) {
    std::vector<std::string> out;
    for (auto c : canonical) {
        if (names.count(std::string(c))) out.emplace_back(c);
    }
    for (const auto& n : names) {
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    }
    return out;
}

struct Cell {
    std::vector<std::uint64_t> seeds;
    std::vector<BestScore> scores;

    double mean() const {
        double s = 0.0;
        for (const auto& b : scores) s += b.value;
        return s / static_cast<double>(scores.size());
    }
    double min() const {
        return std::min_element(scores.begin(), scores.end(), [](auto& a, auto& b) { return a.value < b.value; })->value;
    }
    double max() const {
        return std::max_element(scores.begin(), scores.end(), [](auto& a, auto& b) { return a.value < b.value; })->value;
    }
    std::string value_text() const {
        if (scores.size() == 1) return fixed5(scores.front().value);
        return fixed5(mean()) + " +/- " + fixed5((max() - min()) / 2.0);
    }
    std::string epoch_text(char sep) const {
        std::string s;
        for (const auto& b : scores) {
            if (!s.empty()) s += sep;
            s += std::to_string(b.epoch);
        }
        return s;
    }
};

}  // namespace

Report build_report(const std::vector<RunRecord>& runs, const ReportOptions& options) {
    if (runs.empty()) throw DataError("report needs at least one run file");
    Report report;
    std::map<std::pair<std::string, std::string>, Cell> cells;  // (model, optimizer)
    std::set<std::string> models, optimizers, versions;
    for (const RunRecord& r : runs) {
        const auto& h = r.header;
        Cell& cell = cells[{h.model, h.optimizer}];
        if (std::find(cell.seeds.begin(), cell.seeds.end(), h.seed) != cell.seeds.end()) {
            report.warnings.push_back("duplicate run for " + h.model + "/" + h.optimizer + " seed " +
                                      std::to_string(h.seed) + " ignored");
            continue;
        }
        cell.seeds.push_back(h.seed);
        cell.scores.push_back(best_score(r, options.field));
        models.insert(h.model);
        optimizers.insert(h.optimizer);
        versions.insert(h.code_version);
    }
    if (versions.size() > 1) {
        std::string list;
        for (const auto& v : versions) list += (list.empty() ? "" : ", ") + v;
        report.warnings.push_back("run files come from different code versions: " + list);
    }

    const auto model_order = ordered(models, model_names());
    std::vector<std::string_view> canonical_opts;
    for (auto k : kAllOptimizers) canonical_opts.push_back(to_string(k));
    const auto opt_order = ordered(optimizers, canonical_opts);

    constexpr std::size_t kFirst = 12, kValue = 20, kEpoch = 10;
    const std::string field(to_string(options.field));
    std::ostringstream t;
    t << "Best " << field << " and epoch per model and optimizer\n\n";
    t << pad("optimizer", kFirst);
    for (const auto& m : model_order) t << "| " << pad(m, kValue + kEpoch);
    t << '\n' << pad("", kFirst);
    for (std::size_t i = 0; i < model_order.size(); ++i) t << "| " << pad("best " + field, kValue) << pad("epoch", kEpoch);
    t << '\n' << std::string(kFirst, '-');
    for (std::size_t i = 0; i < model_order.size(); ++i) t << '+' << std::string(kValue + kEpoch + 1, '-');
    t << '\n';
    for (const auto& o : opt_order) {
        t << pad(o, kFirst);
        for (const auto& m : model_order) {
            auto it = cells.find({m, o});
            if (it == cells.end()) {
                t << "| " << pad("-", kValue) << pad("-", kEpoch);
            } else {
                t << "| " << pad(it->second.value_text(), kValue) << pad(it->second.epoch_text('/'), kEpoch);
            }
        }
        t << '\n';
    }
    report.table = t.str();

    std::ostringstream csv;
    csv << "model,optimizer,metric,runs,best_mean,best_min,best_max,epochs,seeds\n";
    for (const auto& m : model_order) {
        for (const auto& o : opt_order) {
            auto it = cells.find({m, o});
            if (it == cells.end()) continue;
            const Cell& c = it->second;
            std::string seeds;
            for (auto s : c.seeds) seeds += (seeds.empty() ? "" : ";") + std::to_string(s);
            csv << m << ',' << o << ',' << field << ',' << c.scores.size() << ',' << exact(c.mean()) << ','
                << exact(c.min()) << ',' << exact(c.max()) << ',' << c.epoch_text(';') << ',' << seeds << '\n';
        }
    }
    report.csv = csv.str();
    return report;
}

std::string curve_csv(const RunRecord& record) {
    const bool has_test = std::any_of(record.rows.begin(), record.rows.end(), [](auto& r) { return r.test_f1.has_value(); });
    std::ostringstream os;
    os << (has_test ? "epoch,train_loss,test_loss,test_f1\n" : "epoch,train_loss,val_loss,val_f1\n");
    auto opt = [](const std::optional<double>& v) { return v ? exact(*v) : std::string(); };
    for (const auto& r : record.rows) {
        os << r.epoch << ',' << exact(r.train_loss) << ',' << opt(has_test ? r.test_loss : r.val_loss) << ','
           << opt(has_test ? r.test_f1 : r.val_f1) << '\n';
    }
    return os.str();
}

std::vector<std::filesystem::path> list_run_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("run directory '" + dir.string() + "' does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace optbench
