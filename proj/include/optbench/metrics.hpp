#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "optbench/data.hpp"
#include "optbench/models.hpp"

namespace optbench {

/// Pooled single-label counts. For every sample exactly one of tp / (fp + fn)
/// moves: a hit adds tp[target]; a miss adds fp[pred] and fn[target].
struct ConfusionCounts {
    std::vector<std::uint64_t> tp, fp, fn;
    std::uint64_t total = 0;
};

ConfusionCounts confusion_counts(std::span<const int> preds, std::span<const int> targets,
                                 std::size_t classes = kNumClasses);

/// sum(tp) / (sum(tp) + (sum(fp) + sum(fn)) / 2)
double micro_f1(const ConfusionCounts& counts);
/// Computes micro-F1 and accuracy and checks that they agree exactly.
double micro_f1(std::span<const int> preds, std::span<const int> targets);
double accuracy(std::span<const int> preds, std::span<const int> targets);

struct EvalResult {
    double loss = 0.0;  // sample-weighted mean cross entropy
    double micro_f1 = 0.0;
    double accuracy = 0.0;
    std::size_t samples = 0;
};

/// Eval-mode pass over `data` in dataset order. Per-sample losses are summed in
/// sample order, so the result does not depend on batch_size.
EvalResult epoch_eval(Model& model, const Dataset& data, std::size_t batch_size);

}  // namespace optbench
