#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "normpert/tensor.hpp"

namespace normpert {

// .tsr files: one JSON header line {"dtype": "float32"|"float64", "shape": [...]}
// followed by the values as a flat little-endian payload.

struct TsrBlob {
  std::string dtype;
  Shape shape;
  std::vector<double> values;
};

template <typename T>
void write_tsr(std::ostream& os, const Shape& shape, std::span<const T> values);
template <typename T>
void write_tsr(const std::filesystem::path& path, const Shape& shape, std::span<const T> values);
template <typename T>
void write_tsr(const std::filesystem::path& path, const Tensor<T>& tensor) {
  write_tsr<T>(path, tensor.shape(), tensor.data());
}

TsrBlob read_tsr_blob(std::istream& is);
TsrBlob read_tsr_blob(const std::filesystem::path& path);

/// Reads any .tsr file and converts its values to T.
template <typename T>
Tensor<T> read_tsr(const std::filesystem::path& path);

}  // namespace normpert
