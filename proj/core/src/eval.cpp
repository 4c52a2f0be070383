#include "hcd/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hcd/error.hpp"
#include "hcd/rf.hpp"
#include "hcd/rng.hpp"

namespace hcd {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_real(double v) {
  char buffer[64];
  const int n = std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return std::string(buffer, static_cast<std::size_t>(n));
}

double parse_real(std::string_view text, const char* what) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw FormatError(std::string("bad ") + what + " field '" + std::string(text) + "'");
  }
  return v;
}

double squared_error(const RowMatrix& predicted, const RowMatrix& truth) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < truth.rows(); ++i) {
    total += (predicted.row(i) - truth.row(i)).squaredNorm();
  }
  return total;
}

double one_direction_cv(const TrainingSet& set, const RegressorSpec& spec,
                        const std::vector<std::size_t>& order, std::size_t folds) {
  const std::size_t m = set.rows();
  double total = 0.0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t begin = f * m / folds;
    const std::size_t end = (f + 1) * m / folds;
    std::vector<std::size_t> held(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<std::size_t> kept;
    kept.reserve(m - held.size());
    kept.insert(kept.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(begin));
    kept.insert(kept.end(), order.begin() + static_cast<std::ptrdiff_t>(end), order.end());
    std::sort(held.begin(), held.end());
    std::sort(kept.begin(), kept.end());
    const TrainingSet train = set.select(kept);
    const TrainingSet test = set.select(held);
    const auto model = fit(spec, train);
    total += squared_error(model->predict(test.inputs()), test.targets());
  }
  return total / static_cast<double>(m);
}

double oob_score(const TrainingSet& set, const RegressorSpec& spec) {
  const auto* hyper = std::get_if<RfHyper>(&spec.hyper);
  if (hyper == nullptr) {
    throw InvalidArgument("oob selection needs a random forest spec");
  }
  double total = 0.0;
  for (const TrainingSet& direction : {set, set.swapped()}) {
    const auto model = rf_fit(direction, *hyper, spec.seed);
    const auto err = oob_error(*model, direction);
    if (!err) {
      throw NumericalError("no out-of-bag rows; add trees or training pixels");
    }
    total += *err;
  }
  return 0.5 * total;
}

}  // namespace

std::optional<RocResult> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) {
    throw DimensionMismatch("score and truth sizes differ");
  }
  std::uint64_t positives = 0;
  for (const auto t : truth) {
    positives += t != 0 ? 1 : 0;
  }
  const std::uint64_t negatives = truth.size() - positives;
  if (positives == 0 || negatives == 0) {
    return std::nullopt;
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Twice the number of correctly ordered (positive, negative) pairs, with a
  // tie counting once. Integer arithmetic keeps it exact.
  std::uint64_t twice_pairs = 0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  RocResult result;
  result.points.push_back({0.0, 0.0});
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t p = 0;
    std::uint64_t n = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (truth[order[j]] != 0 ? p : n) += 1;
      ++j;
    }
    const std::uint64_t negatives_below = negatives - fp - n;
    twice_pairs += 2 * p * negatives_below + p * n;
    tp += p;
    fp += n;
    result.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                             static_cast<double>(tp) / static_cast<double>(positives)});
    i = j;
  }
  result.auc = static_cast<double>(twice_pairs) / (2.0 * static_cast<double>(positives) *
                                                   static_cast<double>(negatives));
  return result;
}

std::optional<RocResult> roc_auc(const DistanceImage& scores, const Mask& truth) {
  if (scores.height() != truth.height() || scores.width() != truth.width()) {
    throw DimensionMismatch("score map and truth mask differ in size");
  }
  return roc_auc(scores.values(), truth.values());
}

MaskSampler fraction_sampler(Mask region, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("training fraction must be in (0, 1]");
  }
  const std::size_t available = region.count();
  if (available == 0) {
    throw InvalidArgument("sampling region is empty");
  }
  const auto wanted = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(region.size()) - 1e-9));
  const std::size_t keep = std::clamp<std::size_t>(wanted, 1, available);
  return [region = std::move(region), keep](std::uint64_t seed) {
    std::vector<std::size_t> candidates;
    candidates.reserve(keep);
    for (std::size_t i = 0; i < region.size(); ++i) {
      if (region[i]) {
        candidates.push_back(i);
      }
    }
    auto engine = make_engine(seed);
    const auto picks = sample_without_replacement(engine, candidates.size(), keep);
    std::vector<std::uint8_t> values(region.size(), 0);
    for (const auto p : picks) {
      values[candidates[p]] = 1;
    }
    return Mask(region.height(), region.width(), std::move(values));
  };
}

MaskSampler fixed_sampler(Mask mask) {
  return [mask = std::move(mask)](std::uint64_t) { return mask; };
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) {
    throw InvalidArgument("mean of an empty sample");
  }
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
  return {mean, std::sqrt(var / n)};
}

BenchmarkRecord repeated_runs(const Raster& x, const Raster& y, const Mask& truth,
                              const RegressorSpec& spec, std::size_t n_runs,
                              const MaskSampler& sampler, const PipelineOptions& options) {
  if (n_runs == 0) {
    throw InvalidArgument("repeated_runs needs at least one run");
  }
  BenchmarkRecord record;
  record.method = spec.method();
  record.hyperparams = describe(spec);
  record.runs = n_runs;
  std::vector<double> aucs;
  std::vector<double> times;
  for (std::size_t r = 0; r < n_runs; ++r) {
    const Mask train = sampler(split_seed(spec.seed, 2 * r));
    RegressorSpec run_spec = spec;
    run_spec.seed = split_seed(spec.seed, 2 * r + 1);
    const ChangeResult result = run_pipeline(x, y, train, run_spec, options);
    const auto roc = roc_auc(result.score, truth);
    if (!roc) {
      throw InvalidArgument("ground truth needs both changed and unchanged pixels");
    }
    record.samples.push_back({run_spec.seed, roc->auc, result.timings.total()});
    aucs.push_back(roc->auc);
    times.push_back(result.timings.total());
  }
  std::tie(record.auc_mean, record.auc_std) = mean_std(aucs);
  std::tie(record.time_mean_s, record.time_std_s) = mean_std(times);
  return record;
}

std::string_view to_string(Selection selection) {
  switch (selection) {
    case Selection::cross_validation:
      return "cross_validation";
    case Selection::oob:
      return "oob";
    case Selection::auc_on_validation:
      return "auc_on_validation";
  }
  return "unknown";
}

Selection parse_selection(std::string_view text) {
  for (const auto s : {Selection::cross_validation, Selection::oob, Selection::auc_on_validation}) {
    if (text == to_string(s)) {
      return s;
    }
  }
  throw InvalidArgument("unknown selection '" + std::string(text) + "'");
}

Selection default_selection(Method method) {
  return method == Method::rf ? Selection::oob : Selection::cross_validation;
}

double cross_validation_error(const TrainingSet& set, const RegressorSpec& spec, std::size_t folds,
                              std::uint64_t seed) {
  if (folds < 2 || folds > set.rows()) {
    throw InvalidArgument("fold count must be in [2, training rows]");
  }
  auto engine = make_engine(seed);
  const auto order = sample_without_replacement(engine, set.rows(), set.rows());
  const double forward = one_direction_cv(set, spec, order, folds);
  const double backward = one_direction_cv(set.swapped(), spec, order, folds);
  return 0.5 * (forward + backward);
}

GridResult grid_search(const Raster& x, const Raster& y, const Mask& train_mask,
                       std::span<const RegressorSpec> grid, const GridOptions& options) {
  if (grid.empty()) {
    throw InvalidArgument("grid is empty");
  }
  if (options.selection == Selection::auc_on_validation && !options.validation_truth) {
    throw InvalidArgument("auc_on_validation needs a validation truth mask");
  }
  const TrainingSet set = extract_pairs(x, y, train_mask);
  GridResult result;
  for (const auto& spec : grid) {
    const auto t0 = Clock::now();
    double score = 0.0;
    switch (options.selection) {
      case Selection::cross_validation:
        score = cross_validation_error(set, spec, options.folds, options.seed);
        break;
      case Selection::oob:
        score = oob_score(set, spec);
        break;
      case Selection::auc_on_validation: {
        const ChangeResult run = run_pipeline(x, y, train_mask, spec, options.pipeline);
        const auto roc = roc_auc(run.score, *options.validation_truth);
        if (!roc) {
          throw InvalidArgument("validation truth needs both classes");
        }
        score = 1.0 - roc->auc;
        break;
      }
    }
    result.points.push_back({spec, score, seconds_since(t0)});
  }
  for (std::size_t i = 1; i < result.points.size(); ++i) {
    if (result.points[i].score < result.points[result.best_index].score) {
      result.best_index = i;
    }
  }
  return result;
}

std::vector<double> decades(int lo, int hi) {
  std::vector<double> out;
  for (int e = lo; e <= hi; ++e) {
    out.push_back(std::pow(10.0, e));
  }
  return out;
}

std::vector<RegressorSpec> rf_grid(std::span<const int> trees, std::span<const int> min_leaf,
                                   const RfHyper& base, std::uint64_t seed) {
  std::vector<RegressorSpec> grid;
  for (const int t : trees) {
    for (const int p : min_leaf) {
      RfHyper h = base;
      h.trees = t;
      h.min_leaf = p;
      grid.push_back({h, seed});
    }
  }
  return grid;
}

std::vector<RegressorSpec> hpt_grid(std::span<const int> neighbours, std::span<const double> gammas,
                                    const HptHyper& base, std::uint64_t seed) {
  std::vector<RegressorSpec> grid;
  for (const int k : neighbours) {
    for (const double g : gammas) {
      HptHyper h = base;
      h.neighbours = k;
      h.kernel_width = g;
      grid.push_back({h, seed});
    }
  }
  return grid;
}

std::vector<RegressorSpec> svr_grid(std::span<const double> penalties, std::span<const double> epsilons,
                                    std::span<const double> widths, const SvrHyper& base,
                                    std::uint64_t seed) {
  std::vector<RegressorSpec> grid;
  for (const double c : penalties) {
    for (const double e : epsilons) {
      for (const double s : widths) {
        SvrHyper h = base;
        h.penalty = c;
        h.insensitivity = e;
        h.kernel_width = s;
        grid.push_back({h, seed});
      }
    }
  }
  return grid;
}

std::vector<ScatterRow> scatter_rows(std::span<const BenchmarkRecord> records) {
  std::vector<ScatterRow> rows;
  for (const auto& record : records) {
    for (const auto& sample : record.samples) {
      rows.push_back({std::string(to_string(record.method)), record.hyperparams, sample.elapsed_s, sample.auc});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ScatterRow& a, const ScatterRow& b) {
    if (a.method != b.method) {
      return a.method < b.method;
    }
    return a.elapsed_s < b.elapsed_s;
  });
  return rows;
}

std::string scatter_csv(std::span<const BenchmarkRecord> records) {
  std::string out = "method,hyperparams,elapsed_s,auc\n";
  for (const auto& row : scatter_rows(records)) {
    out += row.method + ',' + row.hyperparams + ',' + format_real(row.elapsed_s) + ',' +
           format_real(row.auc) + '\n';
  }
  return out;
}

std::vector<ScatterRow> parse_scatter_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "method,hyperparams,elapsed_s,auc") {
    throw FormatError("scatter csv header missing");
  }
  std::vector<ScatterRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos;) {
      fields.push_back(rest.substr(0, pos));
      rest.remove_prefix(pos + 1);
    }
    fields.push_back(rest);
    if (fields.size() != 4) {
      throw FormatError("scatter csv row has " + std::to_string(fields.size()) + " fields");
    }
    rows.push_back({std::string(fields[0]), std::string(fields[1]), parse_real(fields[2], "elapsed_s"),
                    parse_real(fields[3], "auc")});
  }
  return rows;
}

std::string record_to_json(const BenchmarkRecord& record) {
  nlohmann::json j;
  j["method"] = to_string(record.method);
  j["hyperparams"] = record.hyperparams;
  j["auc_mean"] = record.auc_mean;
  j["auc_std"] = record.auc_std;
  j["time_mean_s"] = record.time_mean_s;
  j["time_std_s"] = record.time_std_s;
  j["runs"] = record.runs;
  auto samples = nlohmann::json::array();
  for (const auto& s : record.samples) {
    samples.push_back({{"seed", s.seed}, {"auc", s.auc}, {"elapsed_s", s.elapsed_s}});
  }
  j["samples"] = std::move(samples);
  return j.dump();
}

BenchmarkRecord record_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    BenchmarkRecord r;
    r.method = parse_method(j.at("method").get<std::string>());
    r.hyperparams = j.at("hyperparams").get<std::string>();
    r.auc_mean = j.at("auc_mean").get<double>();
    r.auc_std = j.at("auc_std").get<double>();
    r.time_mean_s = j.at("time_mean_s").get<double>();
    r.time_std_s = j.at("time_std_s").get<double>();
    r.runs = j.at("runs").get<std::size_t>();
    for (const auto& s : j.at("samples")) {
      r.samples.push_back({s.at("seed").get<std::uint64_t>(), s.at("auc").get<double>(),
                           s.at("elapsed_s").get<double>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("benchmark record: ") + e.what());
  }
}

std::string records_to_jsonl(std::span<const BenchmarkRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r);
    out += '\n';
  }
  return out;
}

}  // namespace hcd
