#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "optbench/tensor.hpp"

namespace optbench {

/// Images [N x 1 x H x W] with pixels in [0, 1] and integer labels in [0, 47).
/// An empty dataset has a default-constructed images tensor.
struct Dataset {
    Tensor images;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
};

Dataset subset(const Dataset& d, std::span<const std::size_t> indices);
std::size_t distinct_labels(const Dataset& d);

// ---- IDX ----------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxOptions {
    /// EMNIST stores every image transposed; undo that on load.
    bool transpose = true;
};

/// Parses an IDX image/label pair; either buffer may be gzip-compressed
/// (recognised by the 0x1f 0x8b prefix). Pixels are divided by 255.
Dataset decode_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                   const IdxOptions& options = {});
Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const IdxOptions& options = {});

std::vector<std::uint8_t> encode_idx_images(std::span<const std::uint8_t> pixels, std::size_t count, std::size_t rows,
                                            std::size_t cols);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> gzip_decompress(std::span<const std::uint8_t> bytes);
bool is_gzip(std::span<const std::uint8_t> bytes) noexcept;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Official EMNIST file pairs found in a directory by the
/// `*-images-idx3-ubyte[.gz]` / `*-labels-idx1-ubyte[.gz]` naming scheme.
struct EmnistFiles {
    std::filesystem::path train_images, train_labels;
    std::optional<std::filesystem::path> test_images, test_labels;
};
EmnistFiles locate_emnist(const std::filesystem::path& dir);

// ---- Splitting and batching ---------------------------------------------

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

/// Stratified: each class contributes round(count * val_fraction) samples to
/// the validation side, chosen by a seeded shuffle. Both sides keep dataset order.
SplitIndices split_indices(std::span<const int> labels, double val_fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> split_train_val(const Dataset& d, double val_fraction, std::uint64_t seed);

struct BatchPlan {
    std::uint64_t seed = 0;
    std::size_t batch_size = 64;
    std::size_t epoch = 0;
    std::vector<std::size_t> order;  // permutation of [0, N)

    std::size_t batch_count() const noexcept {
        return batch_size == 0 ? 0 : (order.size() + batch_size - 1) / batch_size;
    }
};

/// order = Fisher-Yates permutation from SplitMix64(derive_seed(seed, epoch)).
BatchPlan make_batch_plan(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t epoch);

struct Batch {
    Tensor images;
    std::vector<int> labels;
};

/// Batch `index` of the plan; the last batch may be short.
Batch make_batch(const Dataset& d, const BatchPlan& plan, std::size_t index);
std::vector<Batch> batches(const Dataset& d, const BatchPlan& plan);

// ---- Synthetic data -----------------------------------------------------

/// Class-conditional Gaussian blobs: each class owns a grid position, every
/// sample is a blob there (jittered by a fraction of the grid spacing) plus
/// Gaussian pixel noise, clamped to [0, 1]. Labels are interleaved
/// 0, 1, ..., classes-1, 0, 1, ...
Dataset synthetic_blobs(std::size_t n_per_class, std::size_t classes, std::size_t image_size, std::uint64_t seed);

}  // namespace optbench
