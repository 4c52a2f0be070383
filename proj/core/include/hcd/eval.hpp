#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hcd/pipeline.hpp"
#include "hcd/raster.hpp"
#include "hcd/regressor.hpp"

namespace hcd {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// ROC curve with one point per distinct score, from (0,0) to (1,1).
struct RocResult {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Trapezoidal AUC. Equal scores form one threshold step, which gives a tie
/// half credit, the same as P(s+ > s-) + P(s+ == s-) / 2. Absent when the
/// truth has only one class.
std::optional<RocResult> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truth);
std::optional<RocResult> roc_auc(const DistanceImage& scores, const Mask& truth);

/// Training mask for run `seed`.
using MaskSampler = std::function<Mask(std::uint64_t seed)>;

/// Draws ceil(fraction * H * W) pixels uniformly from `region` (all of it
/// if it holds fewer).
MaskSampler fraction_sampler(Mask region, double fraction);

/// Always returns `mask`.
MaskSampler fixed_sampler(Mask mask);

struct RunSample {
  std::uint64_t seed = 0;
  double auc = 0.0;
  double elapsed_s = 0.0;
};

struct BenchmarkRecord {
  Method method = Method::rf;
  std::string hyperparams;
  double auc_mean = 0.0;
  double auc_std = 0.0;
  double time_mean_s = 0.0;
  double time_std_s = 0.0;
  std::size_t runs = 0;
  std::vector<RunSample> samples;
};

/// Mean and population standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

/// Runs the pipeline `n_runs` times, each with a fresh training mask. Run r
/// draws its mask from split_seed(spec.seed, 2r) and fits with
/// split_seed(spec.seed, 2r + 1).
BenchmarkRecord repeated_runs(const Raster& x, const Raster& y, const Mask& truth,
                              const RegressorSpec& spec, std::size_t n_runs,
                              const MaskSampler& sampler, const PipelineOptions& options = {});

enum class Selection {
  cross_validation,   // k-fold regression error, both directions
  oob,                // random forest out-of-bag error, both directions
  auc_on_validation,  // 1 - AUC against a labelled validation map
};

std::string_view to_string(Selection selection);
Selection parse_selection(std::string_view text);

/// Criterion used when none is requested: OOB for random forests,
/// cross-validation otherwise.
Selection default_selection(Method method);

struct GridOptions {
  Selection selection = Selection::cross_validation;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  PipelineOptions pipeline;
  /// Required by auc_on_validation.
  std::optional<Mask> validation_truth;
};

struct GridPoint {
  RegressorSpec spec;
  double score = 0.0;  // lower is better
  double elapsed_s = 0.0;
};

struct GridResult {
  std::vector<GridPoint> points;
  std::size_t best_index = 0;

  [[nodiscard]] const RegressorSpec& best() const { return points.at(best_index).spec; }
};

/// Scores every grid point and picks the smallest score; the first of equal
/// scores wins.
GridResult grid_search(const Raster& x, const Raster& y, const Mask& train_mask,
                       std::span<const RegressorSpec> grid, const GridOptions& options);

/// Mean squared Euclidean error over k folds, in both directions.
double cross_validation_error(const TrainingSet& set, const RegressorSpec& spec, std::size_t folds,
                              std::uint64_t seed);

/// 10^lo, 10^(lo+1), ..., 10^hi.
std::vector<double> decades(int lo, int hi);

std::vector<RegressorSpec> rf_grid(std::span<const int> trees, std::span<const int> min_leaf,
                                   const RfHyper& base = {}, std::uint64_t seed = 0);
std::vector<RegressorSpec> hpt_grid(std::span<const int> neighbours, std::span<const double> gammas,
                                    const HptHyper& base = {}, std::uint64_t seed = 0);
std::vector<RegressorSpec> svr_grid(std::span<const double> penalties, std::span<const double> epsilons,
                                    std::span<const double> widths, const SvrHyper& base = {},
                                    std::uint64_t seed = 0);

struct ScatterRow {
  std::string method;
  std::string hyperparams;
  double elapsed_s = 0.0;
  double auc = 0.0;

  friend bool operator==(const ScatterRow&, const ScatterRow&) = default;
};

/// One row per run, sorted by method name then elapsed time.
std::vector<ScatterRow> scatter_rows(std::span<const BenchmarkRecord> records);
/// "method,hyperparams,elapsed_s,auc" header plus rows; reals use 17
/// significant digits so parsing gives back the same doubles.
std::string scatter_csv(std::span<const BenchmarkRecord> records);
std::vector<ScatterRow> parse_scatter_csv(const std::string& text);

/// One JSON object per record, without a trailing newline.
std::string record_to_json(const BenchmarkRecord& record);
BenchmarkRecord record_from_json(const std::string& line);
std::string records_to_jsonl(std::span<const BenchmarkRecord> records);

}  // namespace hcd
