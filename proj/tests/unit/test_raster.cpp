#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <cstring>
#include <set>

#include "hcd/binary_io.hpp"
#include "hcd/error.hpp"
#include "hcd/raster.hpp"
#include "hcd/rng.hpp"

namespace {

namespace fs = std::filesystem;

hcd::Raster random_raster(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  auto e = hcd::make_engine(seed);
  std::vector<float> v(h * w * c);
  for (auto& x : v) {
    x = static_cast<float>(10.0 * hcd::uniform01(e) - 5.0);
  }
  return hcd::Raster(h, w, c, std::move(v));
}

fs::path temp_dir(const char* name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Raster, RejectsWrongLengthAndNonFinite) {
  EXPECT_THROW(hcd::Raster(2, 2, 1, std::vector<float>(3)), hcd::DimensionMismatch);
  std::vector<float> v(4, 0.0f);
  v[2] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(hcd::Raster(2, 2, 1, v), hcd::InvalidArgument);
  v[2] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(hcd::Raster(2, 2, 1, v), hcd::InvalidArgument);
}

TEST(Raster, LayoutIsRowMajorChannelInterleaved) {
  const hcd::Raster r(2, 3, 2, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  EXPECT_EQ(r.at(1, 2, 1), 11.0f);
  EXPECT_EQ(r.at(0, 1, 0), 2.0f);
  EXPECT_EQ(r.pixel(4)[0], 8.0f);
  const auto m = r.to_matrix();
  EXPECT_EQ(m.rows(), 6);
  EXPECT_EQ(m(5, 1), 11.0);
  EXPECT_EQ(hcd::Raster::from_matrix(2, 3, m), r);
}

TEST(Normalize, ChannelExamples) {
  const hcd::Raster r(1, 3, 3, {2, 5, 0, 4, 5, 1, 6, 5, 0.5f});
  const auto n = hcd::normalize_channels(r);
  EXPECT_EQ(n.at(0, 0, 0), 0.0f);
  EXPECT_EQ(n.at(0, 1, 0), 0.5f);
  EXPECT_EQ(n.at(0, 2, 0), 1.0f);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(n.at(0, c, 1), 0.0f);  // constant channel
  }
  EXPECT_EQ(n.at(0, 0, 2), 0.0f);
  EXPECT_EQ(n.at(0, 1, 2), 1.0f);
  EXPECT_EQ(n.at(0, 2, 2), 0.5f);
}

TEST(Normalize, IsIdempotent) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto once = hcd::normalize_channels(random_raster(7, 5, 3, seed));
    EXPECT_EQ(hcd::normalize_channels(once), once);
  }
}

TEST(Normalize, EmptyRasterThrows) {
  EXPECT_THROW((void)hcd::normalize_channels(hcd::Raster()), hcd::InvalidArgument);
}

TEST(ExtractPairs, RowMajorOrderAndValues) {
  const auto x = random_raster(3, 3, 2, 1);
  const auto y = random_raster(3, 3, 1, 2);
  hcd::Mask m(3, 3);
  m.set(2, 1, true);
  m.set(0, 0, true);
  m.set(1, 1, true);
  const auto t = hcd::extract_pairs(x, y, m);
  ASSERT_EQ(t.rows(), 3u);
  EXPECT_EQ(t.pixels()[0], (hcd::PixelIndex{0, 0}));
  EXPECT_EQ(t.pixels()[1], (hcd::PixelIndex{1, 1}));
  EXPECT_EQ(t.pixels()[2], (hcd::PixelIndex{2, 1}));
  EXPECT_EQ(t.inputs()(2, 1), static_cast<double>(x.at(2, 1, 1)));
  EXPECT_EQ(t.targets()(1, 0), static_cast<double>(y.at(1, 1, 0)));
}

TEST(ExtractPairs, AllTrueMaskGivesEveryPixel) {
  const auto t = hcd::extract_pairs(random_raster(4, 5, 1, 3), random_raster(4, 5, 2, 4), hcd::Mask(4, 5, true));
  EXPECT_EQ(t.rows(), 20u);
  EXPECT_EQ(t.output_dim(), 2u);
}

TEST(ExtractPairs, Errors) {
  const auto x = random_raster(4, 4, 1, 1);
  EXPECT_THROW((void)hcd::extract_pairs(x, random_raster(4, 5, 1, 2), hcd::Mask(4, 4, true)),
               hcd::DimensionMismatch);
  EXPECT_THROW((void)hcd::extract_pairs(x, x, hcd::Mask(4, 4, false)), hcd::InvalidArgument);
  EXPECT_THROW((void)hcd::extract_pairs(x, x, hcd::Mask(3, 4, true)), hcd::DimensionMismatch);
}

TEST(Subsample, CountDeterminismAndMultiset) {
  const auto full = hcd::extract_pairs(random_raster(10, 10, 2, 5), random_raster(10, 10, 1, 6),
                                       hcd::Mask(10, 10, true));
  EXPECT_EQ(hcd::subsample(full, 0.02, 1).rows(), 2u);
  EXPECT_EQ(hcd::subsample(full, 0.07, 1).rows(), 7u);
  EXPECT_EQ(hcd::subsample(full, 0.021, 1).rows(), 3u);
  const auto a = hcd::subsample(full, 0.3, 9);
  const auto b = hcd::subsample(full, 0.3, 9);
  EXPECT_EQ(a.inputs(), b.inputs());
  EXPECT_EQ(a.pixels(), b.pixels());

  const auto same = hcd::subsample(full, 1.0, 3);
  std::multiset<std::pair<double, double>> lhs;
  std::multiset<std::pair<double, double>> rhs;
  for (std::size_t i = 0; i < full.rows(); ++i) {
    lhs.insert({full.inputs()(i, 0), full.targets()(i, 0)});
    rhs.insert({same.inputs()(i, 0), same.targets()(i, 0)});
  }
  EXPECT_EQ(lhs, rhs);
}

TEST(Subsample, FractionOutOfRange) {
  const auto full = hcd::extract_pairs(random_raster(10, 10, 1, 5), random_raster(10, 10, 1, 6),
                                       hcd::Mask(10, 10, true));
  EXPECT_THROW((void)hcd::subsample(full, 0.0, 1), hcd::InvalidArgument);
  EXPECT_THROW((void)hcd::subsample(full, 1.5, 1), hcd::InvalidArgument);
  EXPECT_THROW((void)hcd::subsample(full, 0.001, 1), hcd::InvalidArgument);
}

TEST(SubsampleMask, KeepsOnlySelectedPixels) {
  hcd::Mask region(20, 20);
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 20; ++c) {
      region.set(r, c, true);
    }
  }
  const auto m = hcd::subsample_mask(region, 0.1, 4);
  EXPECT_EQ(m.count(), 20u);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) {
      EXPECT_TRUE(region[i]);
    }
  }
}

TEST(Hcdr, RoundTripIsBitExact) {
  const auto dir = temp_dir("hcd_raster_rt");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = random_raster(3 + seed, 4, 1 + seed % 3, seed);
    hcd::write_raster(r, dir / "r.hcdr");
    EXPECT_EQ(hcd::read_raster(dir / "r.hcdr"), r);
  }
  fs::remove_all(dir);
}

TEST(Hcdr, HeaderLayout) {
  const auto bytes = hcd::encode_raster(hcd::Raster(2, 3, 1, {1, 2, 3, 4, 5, 6}));
  ASSERT_EQ(bytes.size(), 20u + 24u);
  EXPECT_EQ(static_cast<char>(bytes[0]), 'H');
  EXPECT_EQ(static_cast<char>(bytes[3]), 'R');
  hcd::ByteReader r{std::span<const std::byte>(bytes).subspan(4), "t"};
  EXPECT_EQ(r.u32(), 1u);
  EXPECT_EQ(r.u32(), 2u);
  EXPECT_EQ(r.u32(), 3u);
  EXPECT_EQ(r.u32(), 1u);
  EXPECT_EQ(r.f32(), 1.0f);
}

TEST(Hcdr, DecodeErrors) {
  auto good = hcd::encode_raster(hcd::Raster(2, 2, 1, {1, 2, 3, 4}));

  auto truncated = good;
  truncated.resize(truncated.size() - 4);  // 2x2x1 header with 3 floats
  EXPECT_THROW((void)hcd::decode_raster(truncated), hcd::FormatError);

  auto magic = good;
  magic[0] = std::byte{'X'};
  EXPECT_THROW((void)hcd::decode_raster(magic), hcd::FormatError);

  auto version = good;
  version[4] = std::byte{2};
  EXPECT_THROW((void)hcd::decode_raster(version), hcd::FormatError);

  auto trailing = good;
  trailing.push_back(std::byte{0});
  EXPECT_THROW((void)hcd::decode_raster(trailing), hcd::FormatError);

  auto nan = good;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 20, &q, 4);
  EXPECT_THROW((void)hcd::decode_raster(nan), hcd::FormatError);

  EXPECT_THROW((void)hcd::decode_raster({}), hcd::FormatError);
}

TEST(Mask, FileRoundTripAndStrictValues) {
  const auto dir = temp_dir("hcd_mask_rt");
  hcd::Mask m(3, 4);
  m.set(0, 1, true);
  m.set(2, 3, true);
  hcd::write_mask(m, dir / "m.hcdr");
  EXPECT_EQ(hcd::read_mask(dir / "m.hcdr"), m);
  EXPECT_THROW((void)hcd::raster_to_mask(hcd::Raster(1, 2, 1, {0.0f, 0.5f})), hcd::FormatError);
  EXPECT_THROW((void)hcd::raster_to_mask(hcd::Raster(1, 2, 2, {0, 1, 0, 1})), hcd::FormatError);
  fs::remove_all(dir);
}

TEST(Pgm, WritesBinaryGreyscale) {
  const auto dir = temp_dir("hcd_pgm");
  hcd::write_pgm(hcd::DistanceImage(2, 2, {0.0, 0.5, 1.0, 2.0}), dir / "d.pgm");
  const auto bytes = hcd::read_file(dir / "d.pgm");
  const std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  ASSERT_EQ(text.substr(0, 2), "P5");
  const auto pixels = text.substr(text.size() - 4);
  EXPECT_EQ(static_cast<unsigned char>(pixels[0]), 0);
  EXPECT_EQ(static_cast<unsigned char>(pixels[2]), 255);
  EXPECT_EQ(static_cast<unsigned char>(pixels[3]), 255);  // clamped
  fs::remove_all(dir);
}

TEST(DistanceImage, RejectsNegativeAndNonFinite) {
  EXPECT_THROW(hcd::DistanceImage(1, 2, {0.0, -1.0}), hcd::InvalidArgument);
  EXPECT_THROW(hcd::DistanceImage(1, 2, {0.0, std::nan("")}), hcd::InvalidArgument);
  EXPECT_THROW(hcd::DistanceImage(1, 2, {0.0}), hcd::DimensionMismatch);
}

TEST(TrainingSet, Validation) {
  EXPECT_THROW(hcd::TrainingSet(hcd::RowMatrix(0, 2), hcd::RowMatrix(0, 1)), hcd::InvalidArgument);
  EXPECT_THROW(hcd::TrainingSet(hcd::RowMatrix::Zero(3, 2), hcd::RowMatrix::Zero(2, 1)), hcd::DimensionMismatch);
  hcd::RowMatrix x = hcd::RowMatrix::Zero(2, 1);
  x(0, 0) = std::nan("");
  EXPECT_THROW(hcd::TrainingSet(x, hcd::RowMatrix::Zero(2, 1)), hcd::InvalidArgument);
}

}  // namespace
