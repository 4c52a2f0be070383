#include "hcd/rf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "hcd/error.hpp"
#include "hcd/parallel.hpp"
#include "hcd/rng.hpp"

namespace hcd {
namespace {

struct Split {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double score = std::numeric_limits<double>::infinity();
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& set, const RfHyper& hyper, std::size_t m, Engine& engine)
      : x_(set.inputs()),
        y_(set.targets()),
        q_(set.output_dim()),
        m_(m),
        min_leaf_(static_cast<std::size_t>(hyper.min_leaf)),
        strategy_(hyper.split),
        engine_(engine) {}

  RegressionTree build(std::vector<std::uint32_t> rows, std::vector<std::uint32_t> in_bag) {
    rows_ = std::move(rows);
    nodes_.assign(1, RegressionTree::Node{});
    struct Frame {
      std::uint32_t node;
      std::size_t begin;
      std::size_t end;
    };
    std::vector<Frame> stack{{0, 0, rows_.size()}};
    while (!stack.empty()) {
      const Frame frame = stack.back();
      stack.pop_back();
      const Split split = find_split(frame.begin, frame.end);
      if (split.feature < 0) {
        make_leaf(frame.node, frame.begin, frame.end);
        continue;
      }
      const auto f = static_cast<Eigen::Index>(split.feature);
      const auto middle = std::stable_partition(
          rows_.begin() + static_cast<std::ptrdiff_t>(frame.begin),
          rows_.begin() + static_cast<std::ptrdiff_t>(frame.end),
          [&](std::uint32_t r) { return x_(r, f) <= split.threshold; });
      const auto mid = static_cast<std::size_t>(middle - rows_.begin());
      const auto left = static_cast<std::uint32_t>(nodes_.size());
      nodes_.push_back({});
      nodes_.push_back({});
      auto& node = nodes_[frame.node];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, mid, frame.end});
      stack.push_back({left, frame.begin, mid});
    }
    return RegressionTree(q_, std::move(nodes_), std::move(leaf_values_), std::move(leaf_rows_),
                          std::move(in_bag));
  }

 private:
  bool targets_constant(std::size_t begin, std::size_t end) const {
    const auto first = static_cast<Eigen::Index>(rows_[begin]);
    for (std::size_t i = begin + 1; i < end; ++i) {
      if (y_.row(static_cast<Eigen::Index>(rows_[i])) != y_.row(first)) {
        return false;
      }
    }
    return true;
  }

  Split find_split(std::size_t begin, std::size_t end) {
    Split best;
    const std::size_t n = end - begin;
    if (n < 2 * min_leaf_ || targets_constant(begin, end)) {
      return best;
    }
    auto features = sample_without_replacement(engine_, static_cast<std::size_t>(x_.cols()), m_);
    std::sort(features.begin(), features.end());

    std::vector<std::pair<double, std::uint32_t>> values(n);
    std::vector<double> total_sum(q_, 0.0);
    std::vector<double> total_sq(q_, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t c = 0; c < q_; ++c) {
        const double v = y_(rows_[i], static_cast<Eigen::Index>(c));
        total_sum[c] += v;
        total_sq[c] += v * v;
      }
    }
    std::vector<double> left_sum(q_);
    std::vector<double> left_sq(q_);
    auto score_of = [&](std::size_t left_n) {
      const auto nl = static_cast<double>(left_n);
      const auto nr = static_cast<double>(n - left_n);
      double score = 0.0;
      for (std::size_t c = 0; c < q_; ++c) {
        const double rs = total_sum[c] - left_sum[c];
        const double rq = total_sq[c] - left_sq[c];
        score += (left_sq[c] - left_sum[c] * left_sum[c] / nl) + (rq - rs * rs / nr);
      }
      return score;
    };
    auto add_left = [&](std::uint32_t row) {
      for (std::size_t c = 0; c < q_; ++c) {
        const double v = y_(row, static_cast<Eigen::Index>(c));
        left_sum[c] += v;
        left_sq[c] += v * v;
      }
    };

    for (const std::size_t feature : features) {
      const auto f = static_cast<Eigen::Index>(feature);
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t r = rows_[begin + i];
        values[i] = {x_(r, f), r};
      }
      std::sort(values.begin(), values.end());
      if (values.front().first == values.back().first) {
        continue;
      }
      std::fill(left_sum.begin(), left_sum.end(), 0.0);
      std::fill(left_sq.begin(), left_sq.end(), 0.0);

      if (strategy_ == SplitStrategy::variance_best) {
        for (std::size_t i = 1; i < n; ++i) {
          add_left(values[i - 1].second);
          if (i < min_leaf_ || n - i < min_leaf_) {
            continue;
          }
          const double lo = values[i - 1].first;
          const double hi = values[i].first;
          if (lo == hi) {
            continue;
          }
          const double score = score_of(i);
          if (score < best.score) {
            double threshold = lo + 0.5 * (hi - lo);
            if (threshold >= hi) {
              threshold = lo;
            }
            best = {static_cast<std::int32_t>(feature), threshold, score};
          }
        }
      } else {
        // Thresholds are drawn where both children keep min_leaf rows.
        const double lo = values[min_leaf_ - 1].first;
        const double hi = values[n - min_leaf_].first;
        if (!(lo < hi)) {
          continue;
        }
        double threshold = lo + (hi - lo) * uniform01(engine_);
        if (threshold >= hi) {
          threshold = lo;
        }
        std::size_t left_n = 0;
        while (left_n < n && values[left_n].first <= threshold) {
          add_left(values[left_n].second);
          ++left_n;
        }
        const double score = score_of(left_n);
        if (score < best.score) {
          best = {static_cast<std::int32_t>(feature), threshold, score};
        }
      }
    }
    return best;
  }

  void make_leaf(std::uint32_t node, std::size_t begin, std::size_t end) {
    const auto leaf = static_cast<std::uint32_t>(leaf_rows_.size());
    nodes_[node].feature = -1;
    nodes_[node].leaf = leaf;
    std::vector<double> mean(q_, 0.0);
    std::vector<std::uint32_t> members(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                       rows_.begin() + static_cast<std::ptrdiff_t>(end));
    for (const std::uint32_t r : members) {
      for (std::size_t c = 0; c < q_; ++c) {
        mean[c] += y_(r, static_cast<Eigen::Index>(c));
      }
    }
    for (auto& v : mean) {
      v /= static_cast<double>(members.size());
    }
    leaf_values_.insert(leaf_values_.end(), mean.begin(), mean.end());
    leaf_rows_.push_back(std::move(members));
  }

  const RowMatrix& x_;
  const RowMatrix& y_;
  std::size_t q_;
  std::size_t m_;
  std::size_t min_leaf_;
  SplitStrategy strategy_;
  Engine& engine_;
  std::vector<std::uint32_t> rows_;
  std::vector<RegressionTree::Node> nodes_;
  std::vector<double> leaf_values_;
  std::vector<std::vector<std::uint32_t>> leaf_rows_;
};

std::span<const double> row_span(const RowMatrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

std::size_t default_m(std::size_t feature_count, FeatureRule rule) {
  std::size_t m = 0;
  if (rule == FeatureRule::third) {
    m = feature_count / 3;
  } else {
    while ((std::size_t{2} << m) <= feature_count) {
      ++m;
    }
  }
  return std::max<std::size_t>(1, m);
}

void RfHyper::validate() const {
  if (trees < 1) {
    throw InvalidArgument("RF needs at least one tree");
  }
  if (features_per_node < 0) {
    throw InvalidArgument("RF features_per_node must be non-negative (0 = default rule)");
  }
  if (min_leaf < 1) {
    throw InvalidArgument("RF min_leaf must be at least 1");
  }
}

std::size_t RfHyper::resolved_m(std::size_t feature_count) const {
  if (features_per_node == 0) {
    return default_m(feature_count, feature_rule);
  }
  const auto m = static_cast<std::size_t>(features_per_node);
  if (m > feature_count) {
    throw InvalidArgument("RF features_per_node " + std::to_string(m) + " exceeds the " +
                          std::to_string(feature_count) + " available features");
  }
  return m;
}

RegressionTree::RegressionTree(std::size_t output_dim, std::vector<Node> nodes,
                               std::vector<double> leaf_values,
                               std::vector<std::vector<std::uint32_t>> leaf_rows,
                               std::vector<std::uint32_t> in_bag)
    : output_dim_(output_dim),
      nodes_(std::move(nodes)),
      leaf_values_(std::move(leaf_values)),
      leaf_rows_(std::move(leaf_rows)),
      in_bag_(std::move(in_bag)) {}

std::size_t RegressionTree::leaf_index(std::span<const double> x) const {
  std::uint32_t current = 0;
  while (!nodes_[current].is_leaf()) {
    const auto& node = nodes_[current];
    current = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return nodes_[current].leaf;
}

void RegressionTree::write(ByteWriter& writer) const {
  writer.u32(static_cast<std::uint32_t>(nodes_.size()));
  for (const auto& node : nodes_) {
    writer.u32(static_cast<std::uint32_t>(node.feature));
    writer.f64(node.threshold);
    writer.u32(node.left);
    writer.u32(node.right);
    writer.u32(node.leaf);
  }
  writer.u32(static_cast<std::uint32_t>(leaf_rows_.size()));
  writer.f64s(leaf_values_);
  for (const auto& rows : leaf_rows_) {
    writer.u32(static_cast<std::uint32_t>(rows.size()));
    for (const auto r : rows) {
      writer.u32(r);
    }
  }
  writer.u32(static_cast<std::uint32_t>(in_bag_.size()));
  for (const auto c : in_bag_) {
    writer.u32(c);
  }
}

RegressionTree RegressionTree::read(ByteReader& reader, std::size_t output_dim) {
  std::vector<Node> nodes(reader.u32());
  for (auto& node : nodes) {
    node.feature = static_cast<std::int32_t>(reader.u32());
    node.threshold = reader.f64();
    node.left = reader.u32();
    node.right = reader.u32();
    node.leaf = reader.u32();
  }
  const std::size_t leaves = reader.u32();
  auto values = reader.f64s(leaves * output_dim);
  std::vector<std::vector<std::uint32_t>> leaf_rows(leaves);
  for (auto& rows : leaf_rows) {
    rows.resize(reader.u32());
    for (auto& r : rows) {
      r = reader.u32();
    }
  }
  std::vector<std::uint32_t> in_bag(reader.u32());
  for (auto& c : in_bag) {
    c = reader.u32();
  }
  for (const auto& node : nodes) {
    if ((node.is_leaf() && node.leaf >= leaves) ||
        (!node.is_leaf() && (node.left >= nodes.size() || node.right >= nodes.size()))) {
      throw FormatError("HCDM random forest: corrupt tree structure");
    }
  }
  return RegressionTree(output_dim, std::move(nodes), std::move(values), std::move(leaf_rows),
                        std::move(in_bag));
}

RfModel::RfModel(std::size_t input_dim, std::size_t output_dim, RfHyper hyper,
                 std::vector<RegressionTree> trees)
    : Model(input_dim, output_dim), hyper_(std::move(hyper)), trees_(std::move(trees)) {}

std::span<const double> RfModel::tree_predict(std::size_t tree, std::span<const double> x) const {
  const auto& t = trees_.at(tree);
  return t.leaf_value(t.leaf_index(x));
}

RowMatrix RfModel::predict_checked(const RowMatrix& batch) const {
  const auto q = static_cast<Eigen::Index>(output_dim());
  RowMatrix out(batch.rows(), q);
  const double scale = 1.0 / static_cast<double>(trees_.size());
  parallel_for(static_cast<std::size_t>(batch.rows()), [&](std::size_t begin, std::size_t end) {
    for (auto n = static_cast<Eigen::Index>(begin); n < static_cast<Eigen::Index>(end); ++n) {
      const auto x = row_span(batch, n);
      for (Eigen::Index c = 0; c < q; ++c) {
        out(n, c) = 0.0;
      }
      for (const auto& tree : trees_) {
        const auto leaf = tree.leaf_value(tree.leaf_index(x));
        for (Eigen::Index c = 0; c < q; ++c) {
          out(n, c) += leaf[static_cast<std::size_t>(c)];
        }
      }
      for (Eigen::Index c = 0; c < q; ++c) {
        out(n, c) *= scale;
      }
    }
  });
  return out;
}

void RfModel::write_payload(ByteWriter& writer) const {
  writer.u32(static_cast<std::uint32_t>(hyper_.trees));
  writer.u32(static_cast<std::uint32_t>(hyper_.features_per_node));
  writer.u32(static_cast<std::uint32_t>(hyper_.feature_rule));
  writer.u32(static_cast<std::uint32_t>(hyper_.min_leaf));
  writer.u32(static_cast<std::uint32_t>(hyper_.split));
  writer.u32(hyper_.bootstrap ? 1 : 0);
  writer.u32(static_cast<std::uint32_t>(trees_.size()));
  for (const auto& tree : trees_) {
    tree.write(writer);
  }
}

std::unique_ptr<RfModel> RfModel::read_payload(ByteReader& reader, std::size_t input_dim,
                                               std::size_t output_dim) {
  RfHyper hyper;
  hyper.trees = static_cast<int>(reader.u32());
  hyper.features_per_node = static_cast<int>(reader.u32());
  hyper.feature_rule = static_cast<FeatureRule>(reader.u32());
  hyper.min_leaf = static_cast<int>(reader.u32());
  hyper.split = static_cast<SplitStrategy>(reader.u32());
  hyper.bootstrap = reader.u32() != 0;
  std::vector<RegressionTree> trees;
  const std::size_t count = reader.u32();
  if (count == 0) {
    throw FormatError("HCDM random forest: no trees");
  }
  trees.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    trees.push_back(RegressionTree::read(reader, output_dim));
    for (const auto& node : trees.back().nodes()) {
      if (!node.is_leaf() && static_cast<std::size_t>(node.feature) >= input_dim) {
        throw FormatError("HCDM random forest: split feature out of range");
      }
    }
  }
  return std::make_unique<RfModel>(input_dim, output_dim, hyper, std::move(trees));
}

std::unique_ptr<RfModel> rf_fit(const TrainingSet& set, const RfHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  const std::size_t m = hyper.resolved_m(set.input_dim());
  const std::size_t rows = set.rows();
  const auto n_trees = static_cast<std::size_t>(hyper.trees);

  std::vector<std::optional<RegressionTree>> built(n_trees);
  parallel_for(
      n_trees,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
          auto engine = make_engine(split_seed(seed, t));
          std::vector<std::uint32_t> sample(rows);
          std::vector<std::uint32_t> in_bag(rows, 0);
          for (std::size_t i = 0; i < rows; ++i) {
            const auto r = static_cast<std::uint32_t>(hyper.bootstrap ? uniform_index(engine, rows) : i);
            sample[i] = r;
            ++in_bag[r];
          }
          std::sort(sample.begin(), sample.end());
          TreeBuilder builder(set, hyper, m, engine);
          built[t] = builder.build(std::move(sample), std::move(in_bag));
        }
      },
      1);

  std::vector<RegressionTree> trees;
  trees.reserve(n_trees);
  for (auto& tree : built) {
    trees.push_back(std::move(*tree));
  }
  return std::make_unique<RfModel>(set.input_dim(), set.output_dim(), hyper, std::move(trees));
}

std::vector<double> rf_predict(const RfModel& model, std::span<const double> x) {
  RowMatrix batch(1, static_cast<Eigen::Index>(x.size()));
  std::copy(x.begin(), x.end(), batch.data());
  const RowMatrix out = model.predict(batch);
  return {out.data(), out.data() + out.size()};
}

std::optional<double> oob_error(const RfModel& model, const TrainingSet& set) {
  const auto& trees = model.trees();
  if (set.input_dim() != model.input_dim() || set.output_dim() != model.output_dim() ||
      trees.front().in_bag().size() != set.rows()) {
    throw DimensionMismatch("OOB error needs the training set the forest was fitted on");
  }
  const std::size_t q = set.output_dim();
  double total = 0.0;
  std::size_t counted = 0;
  std::vector<double> acc(q);
  for (std::size_t r = 0; r < set.rows(); ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    std::size_t voters = 0;
    const auto x = row_span(set.inputs(), static_cast<Eigen::Index>(r));
    for (const auto& tree : trees) {
      if (tree.in_bag()[r] != 0) {
        continue;
      }
      const auto leaf = tree.leaf_value(tree.leaf_index(x));
      for (std::size_t c = 0; c < q; ++c) {
        acc[c] += leaf[c];
      }
      ++voters;
    }
    if (voters == 0) {
      continue;
    }
    double err = 0.0;
    for (std::size_t c = 0; c < q; ++c) {
      const double d = set.targets()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) -
                       acc[c] / static_cast<double>(voters);
      err += d * d;
    }
    total += err;
    ++counted;
  }
  if (counted == 0) {
    return std::nullopt;
  }
  return total / static_cast<double>(counted);
}

}  // namespace hcd
