#include "hcd/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "hcd/error.hpp"
#include "hcd/rng.hpp"

namespace hcd {
namespace {

// Latent planes are H x W, one per latent channel.
using Plane = std::vector<double>;

struct Rect {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  [[nodiscard]] bool contains(std::size_t r, std::size_t c) const {
    return r >= row && r < row + height && c >= col && c < col + width;
  }
};

void smooth_once(Plane& plane, std::size_t h, std::size_t w) {
  static constexpr std::array<double, 5> kTaps{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const auto clamp_index = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  Plane tmp(plane.size());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kTaps.size(); ++k) {
        const auto cc = clamp_index(static_cast<std::ptrdiff_t>(c + k) - 2, w);
        acc += kTaps[k] * plane[r * w + cc];
      }
      tmp[r * w + c] = acc;
    }
  }
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kTaps.size(); ++k) {
        const auto rr = clamp_index(static_cast<std::ptrdiff_t>(r + k) - 2, h);
        acc += kTaps[k] * tmp[rr * w + c];
      }
      plane[r * w + c] = acc;
    }
  }
}

void standardize(Plane& plane) {
  double mean = 0.0;
  for (const double v : plane) {
    mean += v;
  }
  mean /= static_cast<double>(plane.size());
  double var = 0.0;
  for (const double v : plane) {
    var += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(var / static_cast<double>(plane.size()));
  for (auto& v : plane) {
    v = sd > 0.0 ? (v - mean) / sd : 0.0;
  }
}

std::vector<Plane> latent_field(const SynthConfig& cfg, Engine& engine) {
  std::vector<Plane> planes(cfg.latent_channels, Plane(cfg.height * cfg.width));
  for (auto& plane : planes) {
    for (auto& v : plane) {
      v = 2.0 * uniform01(engine) - 1.0;
    }
    for (int pass = 0; pass < 3; ++pass) {
      smooth_once(plane, cfg.height, cfg.width);
    }
    standardize(plane);
  }
  return planes;
}

// Per-output-channel linear map of the latent vector, followed by a fixed
// per-channel affine applied after the nonlinearity.
struct Sensor {
  std::vector<double> weights;  // out x latent
  std::vector<double> offset;
  std::vector<double> gain;
  std::vector<double> bias;
  std::size_t latent = 0;

  Sensor(std::size_t out, std::size_t latent_dim, double scale, Engine& engine) : latent(latent_dim) {
    std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(latent_dim)));
    for (std::size_t i = 0; i < out * latent_dim; ++i) {
      weights.push_back(normal(engine));
    }
    for (std::size_t c = 0; c < out; ++c) {
      offset.push_back(0.5 * (2.0 * uniform01(engine) - 1.0));
      gain.push_back(0.5 + uniform01(engine));
      bias.push_back(uniform01(engine));
    }
  }

  [[nodiscard]] double linear(std::size_t c, const std::vector<Plane>& planes, std::size_t i) const {
    double acc = offset[c];
    for (std::size_t l = 0; l < latent; ++l) {
      acc += weights[c * latent + l] * planes[l][i];
    }
    return acc;
  }
};

Rect draw_rectangle(const SynthConfig& cfg, Engine& engine) {
  const double area = cfg.change_fraction * static_cast<double>(cfg.height * cfg.width);
  const double aspect = std::exp(std::log(0.5) + uniform01(engine) * std::log(4.0));  // in [0.5, 2)
  Rect rect;
  rect.height = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(std::sqrt(area * aspect))), 1,
                                        cfg.height);
  rect.width = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(area / static_cast<double>(rect.height))), 1, cfg.width);
  rect.row = uniform_index(engine, cfg.height - rect.height + 1);
  rect.col = uniform_index(engine, cfg.width - rect.width + 1);
  return rect;
}

}  // namespace

std::string_view to_string(SensorStyle style) {
  return style == SensorStyle::optical ? "optical" : "sar_like";
}

SensorStyle parse_sensor_style(std::string_view text) {
  if (text == "optical") {
    return SensorStyle::optical;
  }
  if (text == "sar_like") {
    return SensorStyle::sar_like;
  }
  throw InvalidArgument("unknown sensor style '" + std::string(text) + "'");
}

void SynthConfig::validate() const {
  if (height < 16 || width < 16) {
    throw InvalidArgument("synthetic images must be at least 16 x 16");
  }
  if (latent_channels == 0 || channels_a == 0 || channels_b == 0) {
    throw InvalidArgument("channel counts must be positive");
  }
  if (!(change_fraction > 0.0 && change_fraction < 1.0)) {
    throw InvalidArgument("change_fraction must be in (0, 1)");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw InvalidArgument("noise_sigma must be finite and non-negative");
  }
}

SyntheticPair generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.height * cfg.width;

  // Independent streams so that changing one stage leaves the others alone.
  auto scene_rng = make_engine(split_seed(cfg.seed, 0));
  auto altered_rng = make_engine(split_seed(cfg.seed, 1));
  auto sensor_rng = make_engine(split_seed(cfg.seed, 2));
  auto rect_rng = make_engine(split_seed(cfg.seed, 3));
  auto noise_rng = make_engine(split_seed(cfg.seed, 4));

  const auto scene = latent_field(cfg, scene_rng);
  const auto altered = latent_field(cfg, altered_rng);
  const Rect rect = draw_rectangle(cfg, rect_rng);

  std::vector<Plane> scene_b = scene;
  for (std::size_t r = rect.row; r < rect.row + rect.height; ++r) {
    for (std::size_t c = rect.col; c < rect.col + rect.width; ++c) {
      for (std::size_t l = 0; l < cfg.latent_channels; ++l) {
        scene_b[l][r * cfg.width + c] = altered[l][r * cfg.width + c];
      }
    }
  }

  const Sensor sensor_a(cfg.channels_a, cfg.latent_channels, 1.0, sensor_rng);
  const Sensor sensor_b(cfg.channels_b, cfg.latent_channels,
                        cfg.sensor_b_style == SensorStyle::optical ? 1.0 : 2.0, sensor_rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  std::gamma_distribution<double> speckle(4.0, 0.25);

  std::vector<float> xs(n * cfg.channels_a);
  std::vector<float> ys(n * cfg.channels_b);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cfg.channels_a; ++c) {
      const double v = sensor_a.gain[c] * std::tanh(sensor_a.linear(c, scene, i)) + sensor_a.bias[c];
      xs[i * cfg.channels_a + c] = static_cast<float>(v + cfg.noise_sigma * noise(noise_rng));
    }
    for (std::size_t c = 0; c < cfg.channels_b; ++c) {
      double v = 0.0;
      if (cfg.sensor_b_style == SensorStyle::optical) {
        v = sensor_b.gain[c] * std::tanh(sensor_b.linear(c, scene_b, i)) + sensor_b.bias[c] +
            cfg.noise_sigma * noise(noise_rng);
      } else {
        v = std::exp(sensor_b.linear(c, scene_b, i)) * speckle(noise_rng);
      }
      ys[i * cfg.channels_b + c] = static_cast<float>(v);
    }
  }

  SyntheticPair out{Raster(cfg.height, cfg.width, cfg.channels_a, std::move(xs)),
                    Raster(cfg.height, cfg.width, cfg.channels_b, std::move(ys)),
                    Mask(cfg.height, cfg.width), Mask(cfg.height, cfg.width)};
  const Rect grown{rect.row >= 2 ? rect.row - 2 : 0, rect.col >= 2 ? rect.col - 2 : 0, 0, 0};
  const std::size_t grown_bottom = std::min(cfg.height, rect.row + rect.height + 2);
  const std::size_t grown_right = std::min(cfg.width, rect.col + rect.width + 2);
  for (std::size_t r = 0; r < cfg.height; ++r) {
    for (std::size_t c = 0; c < cfg.width; ++c) {
      out.change.set(r, c, rect.contains(r, c));
      const bool near = r >= grown.row && r < grown_bottom && c >= grown.col && c < grown_right;
      out.unchanged.set(r, c, !near);
    }
  }
  return out;
}

}  // namespace hcd
