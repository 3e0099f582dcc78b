#include "optbench/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>

#include "optbench/errors.hpp"
#include "optbench/models.hpp"
#include "optbench/random.hpp"

namespace optbench {

Dataset subset(const Dataset& d, std::span<const std::size_t> indices) {
    Dataset out;
    if (indices.empty()) return out;
    const Shape& s = d.images.shape();
    const std::size_t stride = d.images.size() / d.size();
    Shape shape = s;
    shape[0] = indices.size();
    std::vector<double> data(indices.size() * stride);
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= d.size()) throw DataError("subset index " + std::to_string(src) + " out of range");
        std::copy_n(d.images.raw() + src * stride, stride, data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        out.labels.push_back(d.labels[src]);
    }
    out.images = Tensor(std::move(shape), std::move(data));
    return out;
}

std::size_t distinct_labels(const Dataset& d) { return std::set<int>(d.labels.begin(), d.labels.end()).size(); }

// ---- IDX ----------------------------------------------------------------

bool is_gzip(std::span<const std::uint8_t> bytes) noexcept {
    return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> bytes) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw IoError("deflateInit2 failed");
    }
    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())) + 32);
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw IoError("gzip compression failed");
    return out;
}

std::vector<std::uint8_t> gzip_decompress(std::span<const std::uint8_t> bytes) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoError("inflateInit2 failed");
    std::vector<std::uint8_t> out;
    std::vector<std::uint8_t> chunk(1 << 16);
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = chunk.data();
        zs.avail_out = static_cast<uInt>(chunk.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            if (rc == Z_BUF_ERROR) throw TruncationError("gzip stream ends early");
            throw FormatError("corrupt gzip stream");
        }
        out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
        if (rc != Z_STREAM_END && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw TruncationError("gzip stream ends early");
        }
    }
    inflateEnd(&zs);
    return out;
}

namespace {

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::size_t v) {
    const auto x = static_cast<std::uint32_t>(v);
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(x >> s));
}

struct IdxArray {
    std::vector<std::size_t> dims;
    std::span<const std::uint8_t> payload;
};

IdxArray parse_idx(std::span<const std::uint8_t> bytes, std::uint32_t magic, std::size_t rank, const char* what) {
    if (bytes.size() < 4) throw TruncationError(std::string(what) + " file shorter than its magic number");
    const std::uint32_t got = be32(bytes, 0);
    if (got != magic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s file has magic 0x%08X, expected 0x%08X", what, got, magic);
        throw FormatError(buf);
    }
    const std::size_t header = 4 + 4 * rank;
    if (bytes.size() < header) throw TruncationError(std::string(what) + " file header truncated");
    IdxArray a;
    std::size_t total = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        a.dims.push_back(be32(bytes, 4 + 4 * i));
        total *= a.dims.back();
    }
    if (bytes.size() - header < total) {
        throw TruncationError(std::string(what) + " payload truncated: expected " + std::to_string(total) +
                              " bytes, found " + std::to_string(bytes.size() - header));
    }
    a.payload = bytes.subspan(header, total);
    return a;
}

}  // namespace

Dataset decode_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                   const IdxOptions& options) {
    std::vector<std::uint8_t> img_buf, lbl_buf;
    if (is_gzip(images)) {
        img_buf = gzip_decompress(images);
        images = img_buf;
    }
    if (is_gzip(labels)) {
        lbl_buf = gzip_decompress(labels);
        labels = lbl_buf;
    }
    const IdxArray img = parse_idx(images, kIdxImagesMagic, 3, "images");
    const IdxArray lbl = parse_idx(labels, kIdxLabelsMagic, 1, "labels");
    const std::size_t n = img.dims[0], rows = img.dims[1], cols = img.dims[2];
    if (n != lbl.dims[0]) {
        throw DataError("images file holds " + std::to_string(n) + " items but labels file holds " +
                        std::to_string(lbl.dims[0]));
    }
    if (n == 0 || rows == 0 || cols == 0) throw DataError("IDX files contain no images");
    const bool transpose = options.transpose;
    const std::size_t out_rows = transpose ? cols : rows, out_cols = transpose ? rows : cols;
    Dataset d;
    d.images = Tensor({n, 1, out_rows, out_cols});
    double* px = d.images.raw();
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* src = img.payload.data() + i * rows * cols;
        double* dst = px + i * rows * cols;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double v = static_cast<double>(src[r * cols + c]) / 255.0;
                if (transpose) {
                    dst[c * out_cols + r] = v;
                } else {
                    dst[r * out_cols + c] = v;
                }
            }
        }
    }
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = lbl.payload[i];
        if (label >= static_cast<int>(kNumClasses)) {
            throw DataError("label " + std::to_string(label) + " at index " + std::to_string(i) + " is not below " +
                            std::to_string(kNumClasses));
        }
        d.labels[i] = label;
    }
    return d;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const IdxOptions& options) {
    const auto img = read_file(images);
    const auto lbl = read_file(labels);
    return decode_idx(img, lbl, options);
}

std::vector<std::uint8_t> encode_idx_images(std::span<const std::uint8_t> pixels, std::size_t count, std::size_t rows,
                                            std::size_t cols) {
    if (pixels.size() != count * rows * cols) throw DataError("pixel count does not match IDX dimensions");
    std::vector<std::uint8_t> out;
    put_be32(out, kIdxImagesMagic);
    put_be32(out, count);
    put_be32(out, rows);
    put_be32(out, cols);
    out.insert(out.end(), pixels.begin(), pixels.end());
    return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    put_be32(out, kIdxLabelsMagic);
    put_be32(out, labels.size());
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

EmnistFiles locate_emnist(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("data directory '" + dir.string() + "' does not exist");
    std::map<std::string, std::vector<fs::path>> found;  // "<split>-<kind>" -> candidates
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name.ends_with(".gz")) name.resize(name.size() - 3);
        std::string kind;
        if (name.ends_with("-images-idx3-ubyte")) kind = "images";
        else if (name.ends_with("-labels-idx1-ubyte")) kind = "labels";
        else continue;
        const std::string split = name.find("train") != std::string::npos  ? "train"
                                  : name.find("test") != std::string::npos ? "test"
                                                                           : "";
        if (split.empty()) continue;
        found[split + "-" + kind].push_back(entry.path());
    }
    auto pick = [&](const std::string& key) -> std::optional<fs::path> {
        auto it = found.find(key);
        if (it == found.end()) return std::nullopt;
        auto& c = it->second;
        std::sort(c.begin(), c.end());
        if (c.size() == 1) return c.front();
        for (const auto& p : c) {
            if (p.filename().string().find("balanced") != std::string::npos) return p;
        }
        throw DataError("ambiguous " + key + " files in '" + dir.string() + "'");
    };
    EmnistFiles files;
    auto ti = pick("train-images");
    auto tl = pick("train-labels");
    if (!ti || !tl) {
        throw DataError("no *train*-images-idx3-ubyte / *train*-labels-idx1-ubyte pair in '" + dir.string() + "'");
    }
    files.train_images = *ti;
    files.train_labels = *tl;
    files.test_images = pick("test-images");
    files.test_labels = pick("test-labels");
    if (files.test_images.has_value() != files.test_labels.has_value()) {
        throw DataError("test images and labels must both be present in '" + dir.string() + "'");
    }
    return files;
}

// ---- Splitting and batching ---------------------------------------------

SplitIndices split_indices(std::span<const int> labels, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ConfigError("validation fraction must lie in (0, 1), got " + std::to_string(val_fraction));
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    SplitMix64 rng(seed);
    SplitIndices s;
    for (auto& [label, idx] : by_class) {
        (void)label;
        shuffle(idx, rng);
        const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * val_fraction));
        s.val.insert(s.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
        s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    return s;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& d, double val_fraction, std::uint64_t seed) {
    const auto s = split_indices(d.labels, val_fraction, seed);
    return {subset(d, s.train), subset(d, s.val)};
}

BatchPlan make_batch_plan(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t epoch) {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    return BatchPlan{seed, batch_size, epoch, permutation(n, rng)};
}

Batch make_batch(const Dataset& d, const BatchPlan& plan, std::size_t index) {
    const std::size_t begin = index * plan.batch_size;
    if (begin >= plan.order.size()) throw DataError("batch index " + std::to_string(index) + " out of range");
    const std::size_t end = std::min(plan.order.size(), begin + plan.batch_size);
    Dataset part = subset(d, std::span(plan.order).subspan(begin, end - begin));
    return Batch{std::move(part.images), std::move(part.labels)};
}

std::vector<Batch> batches(const Dataset& d, const BatchPlan& plan) {
    if (plan.order.size() != d.size()) throw DataError("batch plan does not match dataset size");
    std::vector<Batch> out;
    out.reserve(plan.batch_count());
    for (std::size_t b = 0; b < plan.batch_count(); ++b) out.push_back(make_batch(d, plan, b));
    return out;
}

// ---- Synthetic data -----------------------------------------------------

Dataset synthetic_blobs(std::size_t n_per_class, std::size_t classes, std::size_t image_size, std::uint64_t seed) {
    if (classes == 0 || classes > kNumClasses) {
        throw ConfigError("synthetic classes must lie in [1, 47], got " + std::to_string(classes));
    }
    if (image_size < 8) throw ConfigError("synthetic image size must be >= 8");
    if (n_per_class == 0) throw ConfigError("synthetic samples per class must be >= 1");

    const auto grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(classes))));
    const double size = static_cast<double>(image_size);
    const double margin = 0.2 * size;
    const double spacing = grid > 1 ? (size - 1.0 - 2.0 * margin) / static_cast<double>(grid - 1) : 0.0;
    const double sigma = std::max(1.0, 0.35 * spacing);
    const double jitter = 0.15 * spacing;
    constexpr double kNoise = 0.05;

    SplitMix64 rng(seed);
    const std::size_t n = n_per_class * classes;
    Dataset d;
    d.images = Tensor({n, 1, image_size, image_size});
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        d.labels[i] = static_cast<int>(c);
        const double cy = (grid > 1 ? margin + spacing * static_cast<double>(c / grid) : size / 2.0) +
                          rng.uniform(-jitter, jitter);
        const double cx = (grid > 1 ? margin + spacing * static_cast<double>(c % grid) : size / 2.0) +
                          rng.uniform(-jitter, jitter);
        double* px = d.images.raw() + i * image_size * image_size;
        for (std::size_t y = 0; y < image_size; ++y) {
            for (std::size_t x = 0; x < image_size; ++x) {
                const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
                const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma)) + kNoise * rng.normal();
                px[y * image_size + x] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return d;
}

}  // namespace optbench
