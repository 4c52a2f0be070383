#include "hcd/hpt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hcd/error.hpp"
#include "hcd/parallel.hpp"

namespace hcd {
namespace {

std::span<const double> row_span(const RowMatrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// Exhaustive scan; `order` and `sq` are caller-owned scratch buffers.
void nearest(std::span<const double> x, const RowMatrix& inputs, std::size_t k,
             std::vector<std::size_t>& order, std::vector<double>& sq, std::vector<Neighbour>& out) {
  const auto m = static_cast<std::size_t>(inputs.rows());
  sq.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto row = row_span(inputs, static_cast<Eigen::Index>(j));
    double r = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double d = x[c] - row[c];
      r += d * d;
    }
    sq[j] = r;
  }
  order.resize(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto less = [&](std::size_t a, std::size_t b) {
    return sq[a] < sq[b] || (sq[a] == sq[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), less);
  out.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = {order[i], std::sqrt(sq[order[i]])};
  }
}

void weighted_sum(const std::vector<Neighbour>& neighbours, const HptModel& model, double global_max,
                  std::vector<double>& distances, std::span<double> out) {
  const auto& hyper = model.hyper();
  distances.resize(neighbours.size());
  for (std::size_t i = 0; i < neighbours.size(); ++i) {
    distances[i] = neighbours[i].distance;
  }
  const auto normalized = normalize_distances(distances, hyper.distance_norm, global_max);
  // Normalized weights are invariant to a common shift of the exponent;
  // shifting by the smallest distance keeps large gamma from underflowing.
  const double shift =
      hyper.weight_norm ? *std::min_element(normalized.begin(), normalized.end()) : 0.0;
  std::fill(out.begin(), out.end(), 0.0);
  double weight_total = 0.0;
  const RowMatrix& targets = model.targets();
  for (std::size_t i = 0; i < neighbours.size(); ++i) {
    const double w = std::exp(-hyper.kernel_width * (normalized[i] - shift));
    weight_total += w;
    const auto target = row_span(targets, static_cast<Eigen::Index>(neighbours[i].index));
    for (std::size_t c = 0; c < out.size(); ++c) {
      out[c] += w * target[c];
    }
  }
  if (hyper.weight_norm) {
    for (auto& v : out) {
      v /= weight_total;
    }
  }
}

}  // namespace

void HptHyper::validate() const {
  if (neighbours < 1) {
    throw InvalidArgument("HPT needs K >= 1 neighbours");
  }
  if (!(kernel_width >= 0.0)) {
    throw InvalidArgument("HPT kernel width gamma must be non-negative");
  }
}

HptModel::HptModel(HptHyper hyper, RowMatrix inputs, RowMatrix targets)
    : Model(static_cast<std::size_t>(inputs.cols()), static_cast<std::size_t>(targets.cols())),
      hyper_(hyper),
      inputs_(std::move(inputs)),
      targets_(std::move(targets)) {
  hyper_.validate();
  if (static_cast<std::size_t>(hyper_.neighbours) > static_cast<std::size_t>(inputs_.rows())) {
    throw InvalidArgument("HPT K = " + std::to_string(hyper_.neighbours) + " exceeds the " +
                          std::to_string(inputs_.rows()) + " training rows");
  }
}

double HptModel::batch_max_distance(const RowMatrix& batch) const {
  const auto k = static_cast<std::size_t>(hyper_.neighbours);
  const std::size_t n = static_cast<std::size_t>(batch.rows());
  std::vector<double> kth(n, 0.0);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> order;
    std::vector<double> sq;
    std::vector<Neighbour> found;
    for (std::size_t i = begin; i < end; ++i) {
      nearest(row_span(batch, static_cast<Eigen::Index>(i)), inputs_, k, order, sq, found);
      kth[i] = found.back().distance;
    }
  });
  return kth.empty() ? 0.0 : *std::max_element(kth.begin(), kth.end());
}

RowMatrix HptModel::predict_checked(const RowMatrix& batch) const {
  const double global_max =
      hyper_.distance_norm == DistanceNorm::absolute ? batch_max_distance(batch) : 0.0;
  const auto k = static_cast<std::size_t>(hyper_.neighbours);
  RowMatrix out(batch.rows(), targets_.cols());
  parallel_for(static_cast<std::size_t>(batch.rows()), [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> order;
    std::vector<double> sq;
    std::vector<double> distances;
    std::vector<Neighbour> found;
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      nearest(row_span(batch, row), inputs_, k, order, sq, found);
      weighted_sum(found, *this, global_max, distances,
                   {out.data() + row * out.cols(), static_cast<std::size_t>(out.cols())});
    }
  });
  return out;
}

void HptModel::write_payload(ByteWriter& writer) const {
  writer.u32(static_cast<std::uint32_t>(hyper_.neighbours));
  writer.f64(hyper_.kernel_width);
  writer.u32(static_cast<std::uint32_t>(hyper_.distance_norm));
  writer.u32(hyper_.weight_norm ? 1 : 0);
  writer.u32(static_cast<std::uint32_t>(inputs_.rows()));
  writer.f64s({inputs_.data(), static_cast<std::size_t>(inputs_.size())});
  writer.f64s({targets_.data(), static_cast<std::size_t>(targets_.size())});
}

std::unique_ptr<HptModel> HptModel::read_payload(ByteReader& reader, std::size_t input_dim,
                                                 std::size_t output_dim) {
  HptHyper hyper;
  hyper.neighbours = static_cast<int>(reader.u32());
  hyper.kernel_width = reader.f64();
  hyper.distance_norm = static_cast<DistanceNorm>(reader.u32());
  hyper.weight_norm = reader.u32() != 0;
  const std::size_t rows = reader.u32();
  RowMatrix inputs(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(input_dim));
  const auto in_values = reader.f64s(rows * input_dim);
  std::copy(in_values.begin(), in_values.end(), inputs.data());
  RowMatrix targets(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(output_dim));
  const auto out_values = reader.f64s(rows * output_dim);
  std::copy(out_values.begin(), out_values.end(), targets.data());
  return std::make_unique<HptModel>(hyper, std::move(inputs), std::move(targets));
}

std::vector<Neighbour> knn(std::span<const double> x, const HptModel& model) {
  if (x.size() != model.input_dim()) {
    throw DimensionMismatch("HPT expects " + std::to_string(model.input_dim()) +
                            " input features, got " + std::to_string(x.size()));
  }
  std::vector<std::size_t> order;
  std::vector<double> sq;
  std::vector<Neighbour> out;
  nearest(x, model.inputs(), static_cast<std::size_t>(model.hyper().neighbours), order, sq, out);
  return out;
}

std::vector<double> normalize_distances(std::span<const double> distances, DistanceNorm mode,
                                        double global_max) {
  double denom = global_max;
  if (mode == DistanceNorm::relative) {
    denom = distances.empty() ? 0.0 : *std::max_element(distances.begin(), distances.end());
  }
  std::vector<double> out(distances.size(), 0.0);
  if (denom > 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = distances[i] / denom;
    }
  }
  return out;
}

std::vector<double> hpt_predict(std::span<const double> x, const HptModel& model,
                                std::optional<double> global_max) {
  const auto neighbours = knn(x, model);
  const double normalizer = global_max.value_or(neighbours.back().distance);
  std::vector<double> out(model.output_dim());
  std::vector<double> scratch;
  weighted_sum(neighbours, model, normalizer, scratch, out);
  return out;
}

std::unique_ptr<HptModel> hpt_fit(const TrainingSet& set, const HptHyper& hyper) {
  hyper.validate();
  return std::make_unique<HptModel>(hyper, set.inputs(), set.targets());
}

}  // namespace hcd
