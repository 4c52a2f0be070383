#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hcd/model.hpp"
#include "hcd/raster.hpp"

namespace hcd {

enum class DistanceNorm {
  relative,  // divide by the largest of the query's own K distances
  absolute,  // divide by the largest query-neighbour distance in the batch
};

/// Homogeneous pixel transformation: K-nearest-neighbour regression with
/// weights exp(-gamma * normalized distance).
struct HptHyper {
  int neighbours = 300;        // K
  double kernel_width = 100.0;  // gamma
  DistanceNorm distance_norm = DistanceNorm::absolute;
  /// Divide the weights by their sum. Off reproduces the raw weighted sum.
  bool weight_norm = true;

  void validate() const;
};

struct Neighbour {
  std::size_t index = 0;
  double distance = 0.0;
};

class HptModel final : public Model {
 public:
  HptModel(HptHyper hyper, RowMatrix inputs, RowMatrix targets);

  [[nodiscard]] Method method() const noexcept override { return Method::hpt; }
  [[nodiscard]] const HptHyper& hyper() const noexcept { return hyper_; }
  [[nodiscard]] const RowMatrix& inputs() const noexcept { return inputs_; }
  [[nodiscard]] const RowMatrix& targets() const noexcept { return targets_; }

  /// Largest K-th neighbour distance over the batch: the absolute-mode
  /// normalizer.
  [[nodiscard]] double batch_max_distance(const RowMatrix& batch) const;

  void write_payload(ByteWriter& writer) const override;
  static std::unique_ptr<HptModel> read_payload(ByteReader& reader, std::size_t input_dim,
                                                std::size_t output_dim);

 protected:
  /// Two passes in absolute mode: batch-wide maximum first, then the
  /// per-row weighted sums.
  [[nodiscard]] RowMatrix predict_checked(const RowMatrix& batch) const override;

 private:
  HptHyper hyper_;
  RowMatrix inputs_;
  RowMatrix targets_;
};

/// The K training rows closest to x in Euclidean distance, ascending; equal
/// distances are ordered by row index.
std::vector<Neighbour> knn(std::span<const double> x, const HptModel& model);

/// Relative mode ignores `global_max` and divides by max(d). A zero
/// denominator maps every distance to 0.
std::vector<double> normalize_distances(std::span<const double> distances, DistanceNorm mode,
                                        double global_max);

/// Prediction for one query. In absolute mode `global_max` is the batch
/// normalizer; when absent the query forms a batch of one.
std::vector<double> hpt_predict(std::span<const double> x, const HptModel& model,
                                std::optional<double> global_max = std::nullopt);

std::unique_ptr<HptModel> hpt_fit(const TrainingSet& set, const HptHyper& hyper);

}  // namespace hcd
