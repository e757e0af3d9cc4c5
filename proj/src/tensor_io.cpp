#include "fuss/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/core.h>

#include "fuss/errors.hpp"

namespace fuss {
namespace {

constexpr char kMagic[4] = {'F', 'U', 'S', 'S'};

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    if (pos_ + sizeof(U) > bytes_.size()) throw DataError("tensor file truncated");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  void expect_magic() {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), kMagic, 4) != 0) {
      throw DataError("not a FUSS tensor file (bad magic)");
    }
    pos_ = 4;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint64_t> dims_of(std::initializer_list<std::size_t> dims) {
  return {dims.begin(), dims.end()};
}

}  // namespace

std::uint64_t TensorFile::element_count() const {
  std::uint64_t count = 1;
  for (auto d : dims) count *= d;
  return count;
}

std::string encode_tensor(const TensorFile& tensor) {
  const auto count = tensor.element_count();
  const bool integral = tensor.dtype == DType::Int32;
  if ((integral ? tensor.integers.size() : tensor.reals.size()) != count) {
    throw ConfigError(fmt::format("tensor payload has wrong element count (expected {})", count));
  }
  std::string out(kMagic, 4);
  put_le(out, kTensorFormatVersion);
  put_le(out, static_cast<std::uint32_t>(tensor.dtype));
  put_le(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_le(out, d);
  switch (tensor.dtype) {
    case DType::Float32:
      for (double v : tensor.reals) put_le(out, static_cast<float>(v));
      break;
    case DType::Float64:
      for (double v : tensor.reals) put_le(out, v);
      break;
    case DType::Int32:
      for (auto v : tensor.integers) put_le(out, v);
      break;
  }
  return out;
}

TensorFile decode_tensor(const std::string& bytes) {
  Reader in(bytes);
  in.expect_magic();
  const auto version = in.get<std::uint32_t>();
  if (version != kTensorFormatVersion) {
    throw DataError(fmt::format("unsupported tensor format version {}", version));
  }
  TensorFile tensor;
  const auto code = in.get<std::uint32_t>();
  if (code > 2) throw DataError(fmt::format("unknown dtype code {}", code));
  tensor.dtype = static_cast<DType>(code);
  const auto rank = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < rank; ++i) tensor.dims.push_back(in.get<std::uint64_t>());
  const auto count = tensor.element_count();
  switch (tensor.dtype) {
    case DType::Float32:
      tensor.reals.reserve(count);
      for (std::uint64_t i = 0; i < count; ++i) tensor.reals.push_back(in.get<float>());
      break;
    case DType::Float64:
      tensor.reals.reserve(count);
      for (std::uint64_t i = 0; i < count; ++i) tensor.reals.push_back(in.get<double>());
      break;
    case DType::Int32:
      tensor.integers.reserve(count);
      for (std::uint64_t i = 0; i < count; ++i) tensor.integers.push_back(in.get<std::int32_t>());
      break;
  }
  if (!in.at_end()) throw DataError("trailing bytes after tensor payload");
  return tensor;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot open {} for writing", path.string()));
  const auto bytes = encode_tensor(tensor);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

TensorFile to_tensor_file(const FeatureMap& features, DType dtype) {
  if (dtype == DType::Int32) throw ConfigError("feature maps need a real dtype");
  return {dtype, dims_of({features.height(), features.width(), features.dim()}),
          {features.values().begin(), features.values().end()}, {}};
}

FeatureMap feature_map_from(const TensorFile& tensor) {
  if (tensor.dtype == DType::Int32 || tensor.dims.size() != 3) {
    throw DataError("feature tensor must be a rank-3 real tensor");
  }
  return FeatureMap(tensor.dims[0], tensor.dims[1], tensor.dims[2], tensor.reals);
}

TensorFile to_tensor_file(const SegmentationMask& mask) {
  return {DType::Int32, dims_of({mask.height(), mask.width()}), {},
          {mask.labels().begin(), mask.labels().end()}};
}

SegmentationMask mask_from(const TensorFile& tensor) {
  if (tensor.dtype != DType::Int32 || tensor.dims.size() != 2) {
    throw DataError("mask tensor must be a rank-2 int32 tensor");
  }
  return SegmentationMask(tensor.dims[0], tensor.dims[1], tensor.integers);
}

TensorFile to_tensor_file(const Matrix& matrix, DType dtype) {
  if (dtype == DType::Int32) throw ConfigError("matrices need a real dtype");
  return {dtype, dims_of({matrix.rows(), matrix.cols()}),
          {matrix.values().begin(), matrix.values().end()}, {}};
}

Matrix matrix_from(const TensorFile& tensor) {
  if (tensor.dtype == DType::Int32) throw DataError("matrix tensor must be real");
  if (tensor.dims.size() == 1) return Matrix(tensor.dims[0], 1, tensor.reals);
  if (tensor.dims.size() != 2) throw DataError("matrix tensor must be rank 1 or 2");
  return Matrix(tensor.dims[0], tensor.dims[1], tensor.reals);
}

}  // namespace fuss
