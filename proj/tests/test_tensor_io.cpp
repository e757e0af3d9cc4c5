#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "fuss/errors.hpp"
#include "fuss/tensor_io.hpp"
#include "oracles.hpp"

namespace fuss {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fuss_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(TensorFormat, HeaderLayout) {
  TensorFile t;
  t.dtype = DType::Float32;
  t.dims = {1, 2};
  t.reals = {1.5, -2.0};
  const auto bytes = encode_tensor(t);
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 4 + 2 * 8 + 2 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "FUSS");
  std::uint32_t version, dtype, rank;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&dtype, bytes.data() + 8, 4);
  std::memcpy(&rank, bytes.data() + 12, 4);
  EXPECT_EQ(version, kTensorFormatVersion);
  EXPECT_EQ(dtype, 0u);
  EXPECT_EQ(rank, 2u);
  std::uint64_t d1;
  std::memcpy(&d1, bytes.data() + 24, 8);
  EXPECT_EQ(d1, 2u);
  float first;
  std::memcpy(&first, bytes.data() + 32, 4);
  EXPECT_EQ(first, 1.5f);
}

TEST(TensorFormat, ByteExactRoundTrip) {
  std::mt19937_64 rng(4);
  TensorFile t;
  t.dims = {3, 2, 5};
  for (int i = 0; i < 30; ++i) t.reals.push_back(static_cast<float>(oracle::random_vector(1, rng)[0]));
  const auto bytes = encode_tensor(t);
  const auto back = decode_tensor(bytes);
  EXPECT_EQ(back.dims, t.dims);
  EXPECT_EQ(back.reals, t.reals);
  EXPECT_EQ(encode_tensor(back), bytes);

  TensorFile ints;
  ints.dtype = DType::Int32;
  ints.dims = {2, 2};
  ints.integers = {0, 7, -3, 2};
  EXPECT_EQ(decode_tensor(encode_tensor(ints)).integers, ints.integers);
}

TEST(TensorFormat, RejectsMalformed) {
  TensorFile t;
  t.dims = {2};
  t.reals = {1, 2};
  auto bytes = encode_tensor(t);
  EXPECT_THROW(decode_tensor(bytes.substr(0, bytes.size() - 1)), DataError);
  EXPECT_THROW(decode_tensor(bytes + "x"), DataError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_tensor(bad), DataError);
  auto ver = bytes;
  ver[4] = 9;
  EXPECT_THROW(decode_tensor(ver), DataError);
  auto dt = bytes;
  dt[8] = 5;
  EXPECT_THROW(decode_tensor(dt), DataError);
  t.reals.push_back(3);
  EXPECT_THROW(encode_tensor(t), ConfigError);
}

TEST(TensorFormat, FeatureMapMaskMatrixFiles) {
  const auto dir = scratch("files");
  std::mt19937_64 rng(8);
  const auto f = oracle::random_map(2, 3, 4, rng);
  write_tensor_file(dir / "f.fuss", to_tensor_file(f, DType::Float64));
  EXPECT_EQ(feature_map_from(read_tensor_file(dir / "f.fuss")), f);

  const auto f32 = feature_map_from(decode_tensor(encode_tensor(to_tensor_file(f))));
  for (std::size_t i = 0; i < f.values().size(); ++i)
    EXPECT_EQ(f32.values()[i], static_cast<double>(static_cast<float>(f.values()[i])));

  SegmentationMask m(2, 2, {0, 1, 1, 3});
  EXPECT_EQ(mask_from(decode_tensor(encode_tensor(to_tensor_file(m)))), m);
  EXPECT_THROW(mask_from(to_tensor_file(f)), DataError);
  EXPECT_THROW(feature_map_from(to_tensor_file(m)), DataError);

  Matrix mat(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(matrix_from(decode_tensor(encode_tensor(to_tensor_file(mat)))), mat);
  EXPECT_THROW(read_tensor_file(dir / "missing.fuss"), DataError);
}

}  // namespace
}  // namespace fuss
