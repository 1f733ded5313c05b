#pragma once

#include <filesystem>

#include "c2f/model.hpp"

namespace c2f {

// Binary: "C2FC", u32 version, u32 tensor count, then per tensor u32 name
// length, name bytes, u32 ndim, u32 dims, f32 payload. The model topology is
// stored as the tensor "meta.config".
void save_checkpoint(const std::filesystem::path& path, Model& model);

/// Rebuilds the stored topology and restores every tensor; throws FormatError
/// on a bad magic, a missing or unexpected tensor, or a shape mismatch.
Model load_checkpoint(const std::filesystem::path& path);

Tensor encode_config(const ModelConfig& cfg);
ModelConfig decode_config(const Tensor& t);

}  // namespace c2f
