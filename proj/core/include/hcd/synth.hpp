#pragma once

#include <cstdint>
#include <string_view>

#include "hcd/raster.hpp"

namespace hcd {

enum class SensorStyle { optical, sar_like };

std::string_view to_string(SensorStyle style);
SensorStyle parse_sensor_style(std::string_view text);

struct SynthConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t latent_channels = 3;
  std::size_t channels_a = 7;
  std::size_t channels_b = 3;
  SensorStyle sensor_b_style = SensorStyle::optical;
  double change_fraction = 0.05;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticPair {
  Raster x;
  Raster y;
  Mask change;
  /// Pixels at least three pixels away from the change rectangle (the
  /// complement of its 2-pixel dilation).
  Mask unchanged;
};

/// Co-registered pair observing one smooth latent scene through two
/// different nonlinear sensors. Inside a random rectangle the scene seen by
/// the second sensor is replaced by an independent one.
SyntheticPair generate(const SynthConfig& config);

}  // namespace hcd
