#pragma once

#include <Eigen/Core>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hcd {

/// Dense row-major matrix used for every sample-by-feature table.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PixelIndex {
  std::uint32_t row = 0;
  std::uint32_t col = 0;

  friend auto operator<=>(const PixelIndex&, const PixelIndex&) = default;
};

/// H x W x C image of finite 32-bit values, row-major with channels
/// interleaved per pixel. Immutable once constructed.
class Raster {
 public:
  Raster() = default;
  /// Zero-filled raster.
  Raster(std::size_t height, std::size_t width, std::size_t channels);
  /// Validates the length and rejects NaN/Inf.
  Raster(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data);

  [[nodiscard]] std::size_t height() const noexcept { return height_; }
  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t channels() const noexcept { return channels_; }
  [[nodiscard]] std::size_t pixel_count() const noexcept { return height_ * width_; }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] float at(std::size_t row, std::size_t col, std::size_t channel) const {
    return data_[(row * width_ + col) * channels_ + channel];
  }
  [[nodiscard]] std::span<const float> pixel(std::size_t index) const {
    return {data_.data() + index * channels_, channels_};
  }
  [[nodiscard]] std::span<const float> data() const noexcept { return data_; }

  /// Pixels as an N x C table, one row per pixel in row-major order.
  [[nodiscard]] RowMatrix to_matrix() const;
  /// Inverse of to_matrix(); values are rounded to float.
  static Raster from_matrix(std::size_t height, std::size_t width, const RowMatrix& table);

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> data_;
};

/// Per-pixel boolean map (training region, ground truth or change map).
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t height, std::size_t width, bool fill = false);
  Mask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values);

  [[nodiscard]] std::size_t height() const noexcept { return height_; }
  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] bool operator()(std::size_t row, std::size_t col) const {
    return values_[row * width_ + col] != 0;
  }
  [[nodiscard]] bool operator[](std::size_t index) const { return values_[index] != 0; }
  void set(std::size_t row, std::size_t col, bool value) {
    values_[row * width_ + col] = value ? 1 : 0;
  }
  [[nodiscard]] std::size_t count() const;
  [[nodiscard]] std::span<const std::uint8_t> values() const noexcept { return values_; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> values_;
};

/// H x W map of non-negative finite reals (prediction error, fused score).
class DistanceImage {
 public:
  DistanceImage() = default;
  DistanceImage(std::size_t height, std::size_t width, std::vector<double> values);

  [[nodiscard]] std::size_t height() const noexcept { return height_; }
  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] double operator()(std::size_t row, std::size_t col) const {
    return values_[row * width_ + col];
  }
  [[nodiscard]] double operator[](std::size_t index) const { return values_[index]; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const DistanceImage&, const DistanceImage&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

/// M paired samples: inputs (M x P) from one raster and targets (M x Q) from
/// the co-registered other, plus the pixel each row came from.
class TrainingSet {
 public:
  TrainingSet(RowMatrix inputs, RowMatrix targets, std::vector<PixelIndex> pixels = {});

  [[nodiscard]] std::size_t rows() const noexcept { return static_cast<std::size_t>(inputs_.rows()); }
  [[nodiscard]] std::size_t input_dim() const noexcept { return static_cast<std::size_t>(inputs_.cols()); }
  [[nodiscard]] std::size_t output_dim() const noexcept { return static_cast<std::size_t>(targets_.cols()); }
  [[nodiscard]] const RowMatrix& inputs() const noexcept { return inputs_; }
  [[nodiscard]] const RowMatrix& targets() const noexcept { return targets_; }
  [[nodiscard]] const std::vector<PixelIndex>& pixels() const noexcept { return pixels_; }

  /// Same pairs with the roles of inputs and targets exchanged.
  [[nodiscard]] TrainingSet swapped() const;
  /// Subset of rows, in the order given.
  [[nodiscard]] TrainingSet select(std::span<const std::size_t> rows) const;

 private:
  RowMatrix inputs_;
  RowMatrix targets_;
  std::vector<PixelIndex> pixels_;
};

/// Per-channel min-max scaling to [0, 1]; constant channels become 0.
Raster normalize_channels(const Raster& raster);

/// One row per selected mask pixel, in row-major scan order.
TrainingSet extract_pairs(const Raster& x, const Raster& y, const Mask& train_mask);

/// ceil(fraction * M) rows drawn uniformly without replacement. Selected
/// rows keep their original relative order.
TrainingSet subsample(const TrainingSet& set, double fraction, std::uint64_t seed);

/// Mask keeping ceil(fraction * count) of the true pixels of `mask`.
Mask subsample_mask(const Mask& mask, double fraction, std::uint64_t seed);

// HCDR container: "HCDR", u32 version = 1, u32 height, u32 width,
// u32 channels, then height*width*channels little-endian float32.
std::vector<std::byte> encode_raster(const Raster& raster);
Raster decode_raster(std::span<const std::byte> bytes);
Raster read_raster(const std::filesystem::path& path);
void write_raster(const Raster& raster, const std::filesystem::path& path);

/// Masks are single-channel HCDR files holding 0.0 or 1.0.
Mask read_mask(const std::filesystem::path& path);
void write_mask(const Mask& mask, const std::filesystem::path& path);
Raster mask_to_raster(const Mask& mask);
Mask raster_to_mask(const Raster& raster);

/// Single-channel HCDR export of a distance image (values rounded to float).
void write_distance_image(const DistanceImage& image, const std::filesystem::path& path);

/// Binary 8-bit PGM (P5); values in [0, 1] scale linearly to 0..255,
/// anything outside is clamped.
void write_pgm(const DistanceImage& image, const std::filesystem::path& path);
void write_pgm(const Mask& mask, const std::filesystem::path& path);
/// PGM preview of one raster channel after min-max stretching.
void write_pgm(const Raster& raster, std::size_t channel, const std::filesystem::path& path);

}  // namespace hcd
