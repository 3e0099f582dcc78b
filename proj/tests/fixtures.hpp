#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "optbench/harness.hpp"

namespace fixtures {

struct ReferenceCell {
    const char* model;
    const char* optimizer;
    double best_f1;
    std::size_t epoch;
};

// Reference best test F1 and epoch per (model, optimizer) for 30-epoch EMNIST runs.
inline const std::vector<ReferenceCell>& reference_grid() {
    static const std::vector<ReferenceCell> entries = {
        {"alexnet", "sgd", 0.90106, 30},     {"alexnet", "adam", 0.90397, 11},
        {"alexnet", "adabelief", 0.90388, 12}, {"alexnet", "padam", 0.90591, 14},
        {"vgg-lite", "sgd", 0.90202, 26},    {"vgg-lite", "adam", 0.90267, 19},
        {"vgg-lite", "adabelief", 0.90278, 23}, {"vgg-lite", "padam", 0.90196, 30},
        {"resnet-lite", "sgd", 0.90450, 22}, {"resnet-lite", "adam", 0.89720, 5},
        {"resnet-lite", "adabelief", 0.89873, 16}, {"resnet-lite", "padam", 0.90282, 30},
    };
    return entries;
}

// A 30-epoch record whose test F1 curve peaks at exactly (best_f1, epoch).
// Every other epoch scores strictly lower; validation runs slightly below test.
inline optbench::RunRecord curve_run(const std::string& model, const std::string& optimizer, double best_f1,
                                     std::size_t best_epoch, std::uint64_t seed = 0, std::size_t epochs = 30) {
    optbench::RunRecord r;
    r.header.model = model;
    r.header.optimizer = optimizer;
    r.header.seed = seed;
    r.header.start_time = "2026-01-01T00:00:00Z";
    for (std::size_t e = 1; e <= epochs; ++e) {
        optbench::EpochRow row;
        row.epoch = e;
        const double gap = static_cast<double>(e > best_epoch ? e - best_epoch : best_epoch - e);
        row.train_loss = 2.0 / static_cast<double>(e);
        row.test_loss = 0.3 + 0.01 * gap;
        row.test_f1 = e == best_epoch ? best_f1 : best_f1 - 0.0004 * gap - 0.00001;
        row.val_f1 = *row.test_f1 - 0.002;
        row.val_loss = *row.test_loss + 0.01;
        row.wall_seconds = 1.0;
        row.optimizer_steps = 100 * e;
        r.rows.push_back(row);
    }
    return r;
}

inline std::vector<optbench::RunRecord> reference_runs(const std::string& only_model = "") {
    std::vector<optbench::RunRecord> runs;
    for (const auto& t : reference_grid()) {
        if (!only_model.empty() && only_model != t.model) continue;
        runs.push_back(curve_run(t.model, t.optimizer, t.best_f1, t.epoch));
    }
    return runs;
}

}  // namespace fixtures
