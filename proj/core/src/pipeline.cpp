#include "hcd/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <string>

#include "hcd/error.hpp"
#include "hcd/parallel.hpp"

namespace hcd {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_same_shape(const DistanceImage& a, const DistanceImage& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionMismatch("distance images differ in size");
  }
}

void require_nonempty(const DistanceImage& d) {
  if (d.size() == 0) {
    throw InvalidArgument("distance image is empty");
  }
}

}  // namespace

TwoWayPrediction two_way_regress(const Raster& x, const Raster& y, const Mask& train_mask,
                                 const RegressorSpec& spec) {
  const TrainingSet forward = extract_pairs(x, y, train_mask);
  const TrainingSet backward = forward.swapped();

  TwoWayPrediction out;
  auto t0 = Clock::now();
  const auto f1 = fit(spec, forward);
  out.timings.fit_xy = seconds_since(t0);
  t0 = Clock::now();
  out.y_hat = predict_raster(*f1, x);
  out.timings.predict_xy = seconds_since(t0);

  t0 = Clock::now();
  const auto f2 = fit(spec, backward);
  out.timings.fit_yx = seconds_since(t0);
  t0 = Clock::now();
  out.x_hat = predict_raster(*f2, y);
  out.timings.predict_yx = seconds_since(t0);
  return out;
}

DistanceImage distance_image(const Raster& a, const Raster& b) {
  return distance_image(a, b, [](std::span<const float> p, std::span<const float> q) {
    double r = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      const double d = static_cast<double>(p[c]) - static_cast<double>(q[c]);
      r += d * d;
    }
    return std::sqrt(r);
  });
}

DistanceImage distance_image(const Raster& a, const Raster& b, const PixelDistance& metric) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
    throw DimensionMismatch("distance_image operands differ in shape");
  }
  std::vector<double> values(a.pixel_count());
  parallel_for(values.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      values[i] = metric(a.pixel(i), b.pixel(i));
    }
  }, 1024);
  return DistanceImage(a.height(), a.width(), std::move(values));
}

DistanceImage clip_outliers(const DistanceImage& d, double k) {
  require_nonempty(d);
  const auto values = d.values();
  const auto n = static_cast<double>(values.size());
  double mean = 0.0;
  for (const double v : values) {
    mean += v;
  }
  mean /= n;
  double var = 0.0;
  for (const double v : values) {
    var += (v - mean) * (v - mean);
  }
  const double bound = mean + k * std::sqrt(var / n);
  std::vector<double> out(values.begin(), values.end());
  for (auto& v : out) {
    v = std::min(v, bound);
  }
  // A negative k could push the bound below zero; distances stay >= 0.
  for (auto& v : out) {
    v = std::max(v, 0.0);
  }
  return DistanceImage(d.height(), d.width(), std::move(out));
}

DistanceImage normalize01(const DistanceImage& d) {
  require_nonempty(d);
  const auto values = d.values();
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  std::vector<double> out(values.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = (values[i] - lo) / range;
    }
  }
  return DistanceImage(d.height(), d.width(), std::move(out));
}

DistanceImage fuse(const DistanceImage& a, const DistanceImage& b) {
  require_same_shape(a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * (a[i] + b[i]);
  }
  return DistanceImage(a.height(), a.width(), std::move(out));
}

DistanceImage median_filter3(const DistanceImage& d) {
  const std::size_t h = d.height();
  const std::size_t w = d.width();
  if (h == 0 || w == 0) {
    throw InvalidArgument("median filter needs a non-empty image");
  }
  std::vector<double> out(d.size());
  parallel_for(h, [&](std::size_t row_begin, std::size_t row_end) {
    std::array<double, 9> window{};
    for (std::size_t r = row_begin; r < row_end; ++r) {
      const std::size_t r0 = r == 0 ? 0 : r - 1;
      const std::size_t r1 = std::min(h - 1, r + 1);
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t c0 = c == 0 ? 0 : c - 1;
        const std::size_t c1 = std::min(w - 1, c + 1);
        std::size_t n = 0;
        for (std::size_t rr = r0; rr <= r1; ++rr) {
          for (std::size_t cc = c0; cc <= c1; ++cc) {
            window[n++] = d(rr, cc);
          }
        }
        const auto mid = window.begin() + static_cast<std::ptrdiff_t>((n - 1) / 2);
        std::nth_element(window.begin(), mid, window.begin() + static_cast<std::ptrdiff_t>(n));
        out[r * w + c] = *mid;
      }
    }
  }, 16);
  return DistanceImage(h, w, std::move(out));
}

Mask threshold(const DistanceImage& d, double t) {
  std::vector<std::uint8_t> values(d.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = d[i] > t ? 1 : 0;
  }
  return Mask(d.height(), d.width(), std::move(values));
}

double otsu_threshold(const DistanceImage& d) {
  require_nonempty(d);
  constexpr std::size_t kBins = 256;
  std::array<double, kBins> hist{};
  for (const double v : d.values()) {
    const auto bin = static_cast<std::size_t>(std::clamp(v, 0.0, 1.0) * (kBins - 1) + 0.5);
    hist[bin] += 1.0;
  }
  const auto n = static_cast<double>(d.size());
  double total_mean = 0.0;
  for (std::size_t b = 0; b < kBins; ++b) {
    total_mean += static_cast<double>(b) * hist[b];
  }
  double weight_low = 0.0;
  double sum_low = 0.0;
  double best_var = -1.0;
  std::size_t best_bin = 0;
  for (std::size_t b = 0; b + 1 < kBins; ++b) {
    weight_low += hist[b];
    sum_low += static_cast<double>(b) * hist[b];
    const double weight_high = n - weight_low;
    if (weight_low == 0.0 || weight_high == 0.0) {
      continue;
    }
    const double mean_low = sum_low / weight_low;
    const double mean_high = (total_mean - sum_low) / weight_high;
    const double between = weight_low * weight_high * (mean_low - mean_high) * (mean_low - mean_high);
    if (between > best_var) {
      best_var = between;
      best_bin = b;
    }
  }
  return (static_cast<double>(best_bin) + 0.5) / static_cast<double>(kBins - 1);
}

Raster log_intensity(const Raster& raster) {
  std::vector<float> out(raster.data().begin(), raster.data().end());
  for (auto& v : out) {
    if (!(v > 0.0f)) {
      throw InvalidArgument("log intensity needs strictly positive values");
    }
    v = std::log(v);
  }
  return Raster(raster.height(), raster.width(), raster.channels(), std::move(out));
}

namespace {

Raster prepare_input(const Raster& raster, bool take_log, bool normalize) {
  const Raster logged = take_log ? log_intensity(raster) : raster;
  return normalize ? normalize_channels(logged) : logged;
}

}  // namespace

ChangeResult run_pipeline(const Raster& x, const Raster& y, const Mask& train_mask,
                          const RegressorSpec& spec, const PipelineOptions& options) {
  const Raster xn = prepare_input(x, options.log_x, options.normalize_inputs);
  const Raster yn = prepare_input(y, options.log_y, options.normalize_inputs);

  ChangeResult result;
  auto prediction = two_way_regress(xn, yn, train_mask, spec);
  result.timings = prediction.timings;
  result.y_hat = std::move(prediction.y_hat);
  result.x_hat = std::move(prediction.x_hat);

  result.distance_x = distance_image(xn, result.x_hat);
  result.distance_y = distance_image(yn, result.y_hat);
  result.clipped_x = clip_outliers(result.distance_x, options.clip_sigma);
  result.clipped_y = clip_outliers(result.distance_y, options.clip_sigma);
  result.normalized_x = normalize01(result.clipped_x);
  result.normalized_y = normalize01(result.clipped_y);
  result.fused = fuse(result.normalized_x, result.normalized_y);
  result.score = options.median_filter ? median_filter3(result.fused) : result.fused;
  result.threshold_used = options.auto_threshold ? otsu_threshold(result.score) : options.threshold;
  result.change_map = threshold(result.score, result.threshold_used);
  return result;
}

}  // namespace hcd
