#pragma once

#include <functional>
#include <optional>
#include <span>

#include "hcd/raster.hpp"
#include "hcd/regressor.hpp"

namespace hcd {

/// Wall-clock seconds of each regression stage.
struct RegressionTimings {
  double fit_xy = 0.0;      // f1: x -> y domain
  double predict_xy = 0.0;
  double fit_yx = 0.0;      // f2: y -> x domain
  double predict_yx = 0.0;

  /// From the start of the first fit to the end of the second prediction.
  [[nodiscard]] double total() const noexcept { return fit_xy + predict_xy + fit_yx + predict_yx; }
};

struct TwoWayPrediction {
  Raster y_hat;  // x mapped into the y domain
  Raster x_hat;  // y mapped into the x domain
  RegressionTimings timings;
};

/// Fits f1 on (x -> y) and f2 on (y -> x) over the masked pixels, with the
/// same seed in both directions, and applies each to its whole image.
TwoWayPrediction two_way_regress(const Raster& x, const Raster& y, const Mask& train_mask,
                                 const RegressorSpec& spec);

using PixelDistance = std::function<double(std::span<const float>, std::span<const float>)>;

/// Per-pixel Euclidean norm of (a - b) across channels.
DistanceImage distance_image(const Raster& a, const Raster& b);
/// Same, with a caller-supplied per-pixel metric.
DistanceImage distance_image(const Raster& a, const Raster& b, const PixelDistance& metric);

/// Replaces values above mean + k * stddev (population statistics of `d`)
/// with that bound.
DistanceImage clip_outliers(const DistanceImage& d, double k = 4.0);

/// (d - min) / (max - min); a constant image maps to zeros.
DistanceImage normalize01(const DistanceImage& d);

/// Pixel-wise average.
DistanceImage fuse(const DistanceImage& a, const DistanceImage& b);

/// 3x3 median with edge-truncated windows at the border. Even-sized border
/// windows take the lower median, so every output is an input value.
DistanceImage median_filter3(const DistanceImage& d);

/// True where d > t.
Mask threshold(const DistanceImage& d, double t);

/// Otsu's between-class-variance threshold over a 256-bin histogram of a
/// [0, 1] map. Offered as an automatic alternative to a fixed threshold.
double otsu_threshold(const DistanceImage& d);

/// Element-wise natural log; throws InvalidArgument on values <= 0.
Raster log_intensity(const Raster& raster);

struct PipelineOptions {
  double clip_sigma = 4.0;
  double threshold = 0.5;
  bool median_filter = true;
  bool auto_threshold = false;
  /// Per-channel min-max scaling of both inputs before regression.
  bool normalize_inputs = true;
  /// Natural log of an input before normalization, for multiplicative-noise
  /// (SAR intensity) images. The image must be strictly positive.
  bool log_x = false;
  bool log_y = false;
};

/// Every intermediate of one change-detection run, in stage order.
struct ChangeResult {
  Raster y_hat;
  Raster x_hat;
  DistanceImage distance_x;  // d(X, X_hat)
  DistanceImage distance_y;  // d(Y, Y_hat)
  DistanceImage clipped_x;
  DistanceImage clipped_y;
  DistanceImage normalized_x;
  DistanceImage normalized_y;
  DistanceImage fused;
  DistanceImage score;  // fused, median-filtered when enabled
  Mask change_map;      // score > threshold_used
  double threshold_used = 0.0;
  RegressionTimings timings;
};

/// Optional log and min-max scaling of the inputs, then
/// two_way_regress -> distance images -> clip -> normalize01 -> fuse ->
/// median filter -> threshold.
ChangeResult run_pipeline(const Raster& x, const Raster& y, const Mask& train_mask,
                          const RegressorSpec& spec, const PipelineOptions& options = {});

}  // namespace hcd
