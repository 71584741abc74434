#pragma once

#include <filesystem>

#include "brainof/tensor.hpp"

namespace brainof::npy {

// NPY v1.0, little-endian float64 ('<f8'), C order. The only on-disk tensor
// format used by datasets and checkpoints.
void save(const std::filesystem::path& path, const Tensor& t);
Tensor load(const std::filesystem::path& path);

}  // namespace brainof::npy
