#pragma once

#include <filesystem>
#include <string>

#include "verif/tensor.hpp"

namespace verif {

/// Reads NPY format versions 1-3 (little-endian float32/float64/int/uint8, C order).
Tensor load_npy(const std::filesystem::path& path);
Tensor parse_npy(const std::string& bytes);

/// Writes a version 1.0 NPY file holding `<f8` data.
void save_npy(const std::filesystem::path& path, const Tensor& tensor);
std::string encode_npy(const Tensor& tensor);

/// Reads a comma-separated numeric table as a [rows, cols] tensor. Blank lines
/// and lines starting with '#' are skipped.
Tensor load_csv(const std::filesystem::path& path);

}  // namespace verif
