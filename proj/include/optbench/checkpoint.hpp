#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "optbench/models.hpp"
#include "optbench/tensor.hpp"

namespace optbench {

// Model checkpoint container, all integers little-endian:
//
//   "OBCK"                 4 bytes magic
//   version                u32 (currently 1)
//   model name             u32 length + UTF-8 bytes
//   tensor count           u32
//   per tensor:
//     name                 u32 length + UTF-8 bytes
//     dtype tag            u8 (1 = f64)
//     rank                 u32
//     dims                 rank x u64
//     payload              product(dims) x f64

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    std::string model_name;
    std::vector<NamedTensor> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on a bad magic/version/dtype and TruncationError on short input.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Parameters followed by batch-norm running statistics.
Checkpoint checkpoint_of(const Model& model);
/// Copies tensors into the model by name; throws DataError on a model-name,
/// tensor-name or shape mismatch.
void load_checkpoint(Model& model, const Checkpoint& ckpt);

}  // namespace optbench
