#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hcd/model.hpp"
#include "hcd/raster.hpp"

namespace hcd {

enum class SplitStrategy {
  variance_best,     // best feature/threshold among m features by summed child SSE
  random_threshold,  // one uniform threshold per candidate feature, best of those
};

enum class FeatureRule { log2, third };

/// floor(log2 P) or floor(P / 3), never below 1.
std::size_t default_m(std::size_t feature_count, FeatureRule rule);

struct RfHyper {
  int trees = 128;
  /// Features drawn per node; 0 selects default_m(P, feature_rule).
  int features_per_node = 0;
  FeatureRule feature_rule = FeatureRule::third;
  /// A node is split only if both children keep at least this many rows.
  int min_leaf = 5;
  SplitStrategy split = SplitStrategy::variance_best;
  /// Disabling bootstrap trains every tree on the full set (diagnostics).
  bool bootstrap = true;

  void validate() const;
  [[nodiscard]] std::size_t resolved_m(std::size_t feature_count) const;
};

class RegressionTree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // x[feature] <= threshold goes left
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t leaf = 0;  // index into the leaf tables when feature < 0

    [[nodiscard]] bool is_leaf() const noexcept { return feature < 0; }
    friend bool operator==(const Node&, const Node&) = default;
  };

  RegressionTree(std::size_t output_dim, std::vector<Node> nodes, std::vector<double> leaf_values,
                 std::vector<std::vector<std::uint32_t>> leaf_rows, std::vector<std::uint32_t> in_bag);

  [[nodiscard]] std::size_t leaf_index(std::span<const double> x) const;
  [[nodiscard]] std::span<const double> leaf_value(std::size_t leaf) const {
    return {leaf_values_.data() + leaf * output_dim_, output_dim_};
  }
  /// Training rows (with bootstrap multiplicity) that ended in `leaf`.
  [[nodiscard]] const std::vector<std::uint32_t>& leaf_rows(std::size_t leaf) const {
    return leaf_rows_[leaf];
  }
  [[nodiscard]] std::size_t leaf_count() const noexcept { return leaf_rows_.size(); }
  [[nodiscard]] const std::vector<Node>& nodes() const noexcept { return nodes_; }
  /// Bootstrap multiplicity of every training row.
  [[nodiscard]] const std::vector<std::uint32_t>& in_bag() const noexcept { return in_bag_; }

  void write(ByteWriter& writer) const;
  static RegressionTree read(ByteReader& reader, std::size_t output_dim);

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  std::size_t output_dim_;
  std::vector<Node> nodes_;
  std::vector<double> leaf_values_;
  std::vector<std::vector<std::uint32_t>> leaf_rows_;
  std::vector<std::uint32_t> in_bag_;
};

class RfModel final : public Model {
 public:
  RfModel(std::size_t input_dim, std::size_t output_dim, RfHyper hyper,
          std::vector<RegressionTree> trees);

  [[nodiscard]] Method method() const noexcept override { return Method::rf; }
  [[nodiscard]] const RfHyper& hyper() const noexcept { return hyper_; }
  [[nodiscard]] const std::vector<RegressionTree>& trees() const noexcept { return trees_; }

  /// Leaf payload of one tree for x.
  [[nodiscard]] std::span<const double> tree_predict(std::size_t tree, std::span<const double> x) const;

  void write_payload(ByteWriter& writer) const override;
  static std::unique_ptr<RfModel> read_payload(ByteReader& reader, std::size_t input_dim,
                                               std::size_t output_dim);

 protected:
  [[nodiscard]] RowMatrix predict_checked(const RowMatrix& batch) const override;

 private:
  RfHyper hyper_;
  std::vector<RegressionTree> trees_;
};

std::unique_ptr<RfModel> rf_fit(const TrainingSet& set, const RfHyper& hyper, std::uint64_t seed);

/// Mean of the T leaf payloads reached by x.
std::vector<double> rf_predict(const RfModel& model, std::span<const double> x);

/// Mean squared Euclidean error of each row predicted by the trees that did
/// not see it. Rows inside every bootstrap are skipped; if that leaves no
/// rows the estimate is absent.
std::optional<double> oob_error(const RfModel& model, const TrainingSet& set);

}  // namespace hcd
