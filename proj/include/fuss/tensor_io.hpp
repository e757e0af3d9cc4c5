#pragma once

// Portable tensor file format:
//   "FUSS" | version u32 | dtype u32 | rank u32 | dims (rank x u64) | payload
// All integers and the payload are little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fuss/tensor.hpp"

namespace fuss {

inline constexpr std::uint32_t kTensorFormatVersion = 1;

enum class DType : std::uint32_t {
  Float32 = 0,
  Int32 = 1,
  Float64 = 2,  // lossless extension, not used on the wire
};

struct TensorFile {
  DType dtype = DType::Float32;
  std::vector<std::uint64_t> dims;
  std::vector<double> reals;          // Float32 / Float64 payloads
  std::vector<std::int32_t> integers;  // Int32 payload

  std::uint64_t element_count() const;
};

std::string encode_tensor(const TensorFile& tensor);
TensorFile decode_tensor(const std::string& bytes);

void write_tensor_file(const std::filesystem::path& path, const TensorFile& tensor);
TensorFile read_tensor_file(const std::filesystem::path& path);

TensorFile to_tensor_file(const FeatureMap& features, DType dtype = DType::Float32);
FeatureMap feature_map_from(const TensorFile& tensor);

TensorFile to_tensor_file(const SegmentationMask& mask);
SegmentationMask mask_from(const TensorFile& tensor);

TensorFile to_tensor_file(const Matrix& matrix, DType dtype = DType::Float32);
Matrix matrix_from(const TensorFile& tensor);

}  // namespace fuss
