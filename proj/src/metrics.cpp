#include "optbench/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "optbench/errors.hpp"
#include "optbench/kernels.hpp"

namespace optbench {

namespace {

void check_lengths(std::span<const int> preds, std::span<const int> targets) {
    if (preds.size() != targets.size()) {
        throw DataError("prediction/target length mismatch: " + std::to_string(preds.size()) + " vs " +
                        std::to_string(targets.size()));
    }
    if (preds.empty()) throw DataError("metrics need at least one sample");
}

std::uint64_t sum(const std::vector<std::uint64_t>& v) { return std::accumulate(v.begin(), v.end(), std::uint64_t{0}); }

}  // namespace

ConfusionCounts confusion_counts(std::span<const int> preds, std::span<const int> targets, std::size_t classes) {
    check_lengths(preds, targets);
    ConfusionCounts c{std::vector<std::uint64_t>(classes), std::vector<std::uint64_t>(classes),
                      std::vector<std::uint64_t>(classes), 0};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i], t = targets[i];
        if (p < 0 || t < 0 || static_cast<std::size_t>(p) >= classes || static_cast<std::size_t>(t) >= classes) {
            throw DataError("class index out of range at sample " + std::to_string(i));
        }
        if (p == t) {
            ++c.tp[static_cast<std::size_t>(t)];
        } else {
            ++c.fp[static_cast<std::size_t>(p)];
            ++c.fn[static_cast<std::size_t>(t)];
        }
        ++c.total;
    }
    return c;
}

double micro_f1(const ConfusionCounts& counts) {
    const std::uint64_t tp = sum(counts.tp);
    const std::uint64_t errors = sum(counts.fp) + sum(counts.fn);
    const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(errors);
    return denom == 0.0 ? 0.0 : static_cast<double>(tp) / denom;
}

double accuracy(std::span<const int> preds, std::span<const int> targets) {
    check_lengths(preds, targets);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == targets[i];
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double micro_f1(std::span<const int> preds, std::span<const int> targets) {
    check_lengths(preds, targets);
    int top = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) top = std::max({top, preds[i], targets[i]});
    const double f1 = micro_f1(confusion_counts(preds, targets, std::max<std::size_t>(kNumClasses, top + 1)));
    if (f1 != accuracy(preds, targets)) {
        throw std::logic_error("micro-F1 differs from accuracy on single-label data");
    }
    return f1;
}

EvalResult epoch_eval(Model& model, const Dataset& data, std::size_t batch_size) {
    if (data.empty()) throw DataError("cannot evaluate on an empty dataset");
    if (batch_size == 0) throw ConfigError("evaluation batch size must be >= 1");
    std::vector<int> preds;
    preds.reserve(data.size());
    double loss_sum = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
        const std::size_t end = std::min(data.size(), begin + batch_size);
        idx.resize(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const Dataset part = subset(data, idx);
        const Tensor logits = model.predict(part.images);
        for (double l : kernels::cross_entropy_per_sample(logits, part.labels)) loss_sum += l;
        for (int p : kernels::argmax_rows(logits)) preds.push_back(p);
    }
    EvalResult r;
    r.samples = data.size();
    r.loss = loss_sum / static_cast<double>(data.size());
    r.micro_f1 = micro_f1(preds, data.labels);
    r.accuracy = accuracy(preds, data.labels);
    return r;
}

}  // namespace optbench
