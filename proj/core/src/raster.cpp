#include "hcd/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hcd/binary_io.hpp"
#include "hcd/error.hpp"
#include "hcd/rng.hpp"

namespace hcd {
namespace {

constexpr std::string_view kRasterMagic = "HCDR";
constexpr std::uint32_t kRasterVersion = 1;

std::string dims(std::size_t h, std::size_t w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

std::size_t ceil_count(double fraction, std::size_t total) {
  // The small slack absorbs representation error such as 0.07 * 100.
  const double raw = fraction * static_cast<double>(total);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

void check_fraction(double fraction, std::size_t total) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  if (fraction * static_cast<double>(total) < 1.0 - 1e-9) {
    throw InvalidArgument("fraction " + std::to_string(fraction) + " of " +
                          std::to_string(total) + " rows selects nothing");
  }
}

void write_pgm_bytes(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& gray,
                     const std::filesystem::path& path) {
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::byte> bytes;
  bytes.reserve(header.size() + gray.size());
  for (const char c : header) {
    bytes.push_back(static_cast<std::byte>(c));
  }
  for (const auto g : gray) {
    bytes.push_back(static_cast<std::byte>(g));
  }
  write_file_atomic(path, bytes);
}

std::uint8_t to_gray(double value) {
  const double clamped = std::clamp(value, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

}  // namespace

Raster::Raster(std::size_t height, std::size_t width, std::size_t channels)
    : height_(height), width_(width), channels_(channels), data_(height * width * channels, 0.0f) {}

Raster::Raster(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != height * width * channels) {
    throw DimensionMismatch("raster " + dims(height, width) + "x" + std::to_string(channels) +
                            " needs " + std::to_string(height * width * channels) +
                            " values, got " + std::to_string(data_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw InvalidArgument("raster value at flat index " + std::to_string(i) + " is not finite");
    }
  }
}

RowMatrix Raster::to_matrix() const {
  RowMatrix table(static_cast<Eigen::Index>(pixel_count()), static_cast<Eigen::Index>(channels_));
  for (std::size_t i = 0; i < data_.size(); ++i) {
    table.data()[i] = static_cast<double>(data_[i]);
  }
  return table;
}

Raster Raster::from_matrix(std::size_t height, std::size_t width, const RowMatrix& table) {
  if (static_cast<std::size_t>(table.rows()) != height * width) {
    throw DimensionMismatch("table has " + std::to_string(table.rows()) + " rows, raster " +
                            dims(height, width) + " needs " + std::to_string(height * width));
  }
  std::vector<float> data(static_cast<std::size_t>(table.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<float>(table.data()[i]);
  }
  return Raster(height, width, static_cast<std::size_t>(table.cols()), std::move(data));
}

Mask::Mask(std::size_t height, std::size_t width, bool fill)
    : height_(height), width_(width), values_(height * width, fill ? 1 : 0) {}

Mask::Mask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != height * width) {
    throw DimensionMismatch("mask " + dims(height, width) + " needs " +
                            std::to_string(height * width) + " values, got " +
                            std::to_string(values_.size()));
  }
  for (auto& v : values_) {
    v = v != 0 ? 1 : 0;
  }
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

DistanceImage::DistanceImage(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != height * width) {
    throw DimensionMismatch("distance image " + dims(height, width) + " needs " +
                            std::to_string(height * width) + " values, got " +
                            std::to_string(values_.size()));
  }
  for (const double v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidArgument("distance image values must be finite and non-negative");
    }
  }
}

TrainingSet::TrainingSet(RowMatrix inputs, RowMatrix targets, std::vector<PixelIndex> pixels)
    : inputs_(std::move(inputs)), targets_(std::move(targets)), pixels_(std::move(pixels)) {
  if (inputs_.rows() != targets_.rows()) {
    throw DimensionMismatch("training inputs have " + std::to_string(inputs_.rows()) +
                            " rows but targets have " + std::to_string(targets_.rows()));
  }
  if (inputs_.rows() < 1) {
    throw InvalidArgument("training set needs at least one row");
  }
  if (inputs_.cols() < 1 || targets_.cols() < 1) {
    throw InvalidArgument("training set needs at least one input and one target column");
  }
  if (!pixels_.empty() && pixels_.size() != rows()) {
    throw DimensionMismatch("pixel index list does not match the row count");
  }
  if (!inputs_.allFinite() || !targets_.allFinite()) {
    throw InvalidArgument("training set contains non-finite values");
  }
}

TrainingSet TrainingSet::swapped() const { return TrainingSet(targets_, inputs_, pixels_); }

TrainingSet TrainingSet::select(std::span<const std::size_t> rows) const {
  RowMatrix in(static_cast<Eigen::Index>(rows.size()), inputs_.cols());
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), targets_.cols());
  std::vector<PixelIndex> pixels;
  pixels.reserve(pixels_.empty() ? 0 : rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    in.row(static_cast<Eigen::Index>(i)) = inputs_.row(r);
    out.row(static_cast<Eigen::Index>(i)) = targets_.row(r);
    if (!pixels_.empty()) {
      pixels.push_back(pixels_[rows[i]]);
    }
  }
  return TrainingSet(std::move(in), std::move(out), std::move(pixels));
}

Raster normalize_channels(const Raster& raster) {
  if (raster.empty()) {
    throw InvalidArgument("cannot normalize an empty raster");
  }
  const std::size_t channels = raster.channels();
  std::vector<float> lo(channels, std::numeric_limits<float>::infinity());
  std::vector<float> hi(channels, -std::numeric_limits<float>::infinity());
  const auto data = raster.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t c = i % channels;
    lo[c] = std::min(lo[c], data[i]);
    hi[c] = std::max(hi[c], data[i]);
  }
  std::vector<float> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t c = i % channels;
    const double range = static_cast<double>(hi[c]) - static_cast<double>(lo[c]);
    out[i] = range > 0.0
                 ? static_cast<float>((static_cast<double>(data[i]) - static_cast<double>(lo[c])) / range)
                 : 0.0f;
  }
  return Raster(raster.height(), raster.width(), channels, std::move(out));
}

TrainingSet extract_pairs(const Raster& x, const Raster& y, const Mask& train_mask) {
  if (x.height() != y.height() || x.width() != y.width()) {
    throw DimensionMismatch("images are " + dims(x.height(), x.width()) + " and " +
                            dims(y.height(), y.width()));
  }
  if (train_mask.height() != x.height() || train_mask.width() != x.width()) {
    throw DimensionMismatch("training mask is " + dims(train_mask.height(), train_mask.width()) +
                            ", images are " + dims(x.height(), x.width()));
  }
  const std::size_t count = train_mask.count();
  if (count == 0) {
    throw InvalidArgument("training mask selects no pixels");
  }
  RowMatrix inputs(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(x.channels()));
  RowMatrix targets(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(y.channels()));
  std::vector<PixelIndex> pixels;
  pixels.reserve(count);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < train_mask.size(); ++i) {
    if (!train_mask[i]) {
      continue;
    }
    const auto px = x.pixel(i);
    const auto py = y.pixel(i);
    for (std::size_t c = 0; c < px.size(); ++c) {
      inputs(row, static_cast<Eigen::Index>(c)) = px[c];
    }
    for (std::size_t c = 0; c < py.size(); ++c) {
      targets(row, static_cast<Eigen::Index>(c)) = py[c];
    }
    pixels.push_back({static_cast<std::uint32_t>(i / x.width()),
                      static_cast<std::uint32_t>(i % x.width())});
    ++row;
  }
  return TrainingSet(std::move(inputs), std::move(targets), std::move(pixels));
}

TrainingSet subsample(const TrainingSet& set, double fraction, std::uint64_t seed) {
  check_fraction(fraction, set.rows());
  const std::size_t keep = std::min(set.rows(), ceil_count(fraction, set.rows()));
  auto engine = make_engine(seed);
  auto rows = sample_without_replacement(engine, set.rows(), keep);
  std::sort(rows.begin(), rows.end());
  return set.select(rows);
}

Mask subsample_mask(const Mask& mask, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      selected.push_back(i);
    }
  }
  check_fraction(fraction, selected.size());
  const std::size_t keep = std::min(selected.size(), ceil_count(fraction, selected.size()));
  auto engine = make_engine(seed);
  const auto picks = sample_without_replacement(engine, selected.size(), keep);
  std::vector<std::uint8_t> values(mask.size(), 0);
  for (const auto p : picks) {
    values[selected[p]] = 1;
  }
  return Mask(mask.height(), mask.width(), std::move(values));
}

std::vector<std::byte> encode_raster(const Raster& raster) {
  ByteWriter writer;
  writer.bytes(kRasterMagic);
  writer.u32(kRasterVersion);
  writer.u32(static_cast<std::uint32_t>(raster.height()));
  writer.u32(static_cast<std::uint32_t>(raster.width()));
  writer.u32(static_cast<std::uint32_t>(raster.channels()));
  for (const float v : raster.data()) {
    writer.f32(v);
  }
  return std::move(writer).take();
}

Raster decode_raster(std::span<const std::byte> bytes) {
  ByteReader reader(bytes, "HCDR raster");
  if (reader.remaining() < 4 || reader.bytes(4) != kRasterMagic) {
    throw FormatError("HCDR raster: bad magic");
  }
  const auto version = reader.u32();
  if (version != kRasterVersion) {
    throw FormatError("HCDR raster: unsupported version " + std::to_string(version));
  }
  const std::size_t height = reader.u32();
  const std::size_t width = reader.u32();
  const std::size_t channels = reader.u32();
  const std::size_t count = height * width * channels;
  if (reader.remaining() < count * 4) {
    throw FormatError("HCDR raster: truncated payload, header declares " + std::to_string(count) +
                      " floats but only " + std::to_string(reader.remaining() / 4) + " present");
  }
  if (reader.remaining() > count * 4) {
    throw FormatError("HCDR raster: trailing bytes after payload");
  }
  std::vector<float> data(count);
  for (auto& v : data) {
    v = reader.f32();
    if (!std::isfinite(v)) {
      throw FormatError("HCDR raster: non-finite value in payload");
    }
  }
  return Raster(height, width, channels, std::move(data));
}

Raster read_raster(const std::filesystem::path& path) {
  try {
    return decode_raster(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_raster(const Raster& raster, const std::filesystem::path& path) {
  write_file_atomic(path, encode_raster(raster));
}

Raster mask_to_raster(const Mask& mask) {
  std::vector<float> data(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    data[i] = mask[i] ? 1.0f : 0.0f;
  }
  return Raster(mask.height(), mask.width(), 1, std::move(data));
}

Mask raster_to_mask(const Raster& raster) {
  if (raster.channels() != 1) {
    throw FormatError("mask must have exactly one channel, found " +
                      std::to_string(raster.channels()));
  }
  std::vector<std::uint8_t> values(raster.pixel_count());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = raster.data()[i];
    if (v != 0.0f && v != 1.0f) {
      throw FormatError("mask values must be 0 or 1, found " + std::to_string(v));
    }
    values[i] = v == 1.0f ? 1 : 0;
  }
  return Mask(raster.height(), raster.width(), std::move(values));
}

Mask read_mask(const std::filesystem::path& path) {
  const Raster raster = read_raster(path);
  try {
    return raster_to_mask(raster);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_mask(const Mask& mask, const std::filesystem::path& path) {
  write_raster(mask_to_raster(mask), path);
}

void write_distance_image(const DistanceImage& image, const std::filesystem::path& path) {
  std::vector<float> data(image.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<float>(image[i]);
  }
  write_raster(Raster(image.height(), image.width(), 1, std::move(data)), path);
}

void write_pgm(const DistanceImage& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> gray(image.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = to_gray(image[i]);
  }
  write_pgm_bytes(image.height(), image.width(), gray, path);
}

void write_pgm(const Mask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> gray(mask.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = mask[i] ? 255 : 0;
  }
  write_pgm_bytes(mask.height(), mask.width(), gray, path);
}

void write_pgm(const Raster& raster, std::size_t channel, const std::filesystem::path& path) {
  if (channel >= raster.channels()) {
    throw InvalidArgument("channel " + std::to_string(channel) + " out of range");
  }
  const Raster scaled = normalize_channels(raster);
  std::vector<std::uint8_t> gray(raster.pixel_count());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = to_gray(scaled.pixel(i)[channel]);
  }
  write_pgm_bytes(raster.height(), raster.width(), gray, path);
}

}  // namespace hcd
