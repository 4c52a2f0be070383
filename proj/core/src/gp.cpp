#include "hcd/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

#include "hcd/error.hpp"
#include "hcd/parallel.hpp"
#include "hcd/rng.hpp"

namespace hcd {
namespace {

constexpr double kLogParamBound = 18.420680743952367;  // log(1e8)

double scaled_sq_distance(std::span<const double> a, std::span<const double> b,
                          const std::vector<double>& inv_sq_lengthscales) {
  double r = 0.0;
  if (inv_sq_lengthscales.size() == 1) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      r += d * d;
    }
    return r * inv_sq_lengthscales[0];
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    r += d * d * inv_sq_lengthscales[k];
  }
  return r;
}

std::vector<double> inverse_squares(const std::vector<double>& lengthscales) {
  std::vector<double> out(lengthscales.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 1.0 / (lengthscales[i] * lengthscales[i]);
  }
  return out;
}

std::span<const double> row_span(const RowMatrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

void check_lengthscales(const GpHyper& hyper, std::size_t input_dim) {
  if (!hyper.isotropic() && hyper.lengthscales.size() != input_dim) {
    throw DimensionMismatch("GP has " + std::to_string(hyper.lengthscales.size()) +
                            " length-scales for " + std::to_string(input_dim) + " input features");
  }
}

/// Kernel without the noise term, shared by the likelihood and its gradient.
Eigen::MatrixXd signal_kernel(const RowMatrix& x, const GpHyper& hyper) {
  const auto inv = inverse_squares(hyper.lengthscales);
  const Eigen::Index m = x.rows();
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    k(j, j) = hyper.signal_variance;
    for (Eigen::Index i = j + 1; i < m; ++i) {
      const double v =
          hyper.signal_variance * std::exp(-0.5 * scaled_sq_distance(row_span(x, i), row_span(x, j), inv));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Eigen::LLT<Eigen::MatrixXd> factorize(const Eigen::MatrixXd& k) {
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const Eigen::MatrixXd& l = llt.matrixLLT();
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
      if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) {
        ok = false;
        break;
      }
    }
  }
  if (!ok) {
    throw NumericalError(
        "GP kernel matrix is not positive definite; increase noise_variance or remove duplicate "
        "training pixels");
  }
  return llt;
}

std::optional<LogLikelihood> try_likelihood(const GpHyper& hyper, const TrainingSet& set) {
  try {
    LogLikelihood ll = log_marginal_likelihood(hyper, set);
    if (!std::isfinite(ll.value) || !ll.gradient.allFinite()) {
      return std::nullopt;
    }
    return ll;
  } catch (const NumericalError&) {
    return std::nullopt;
  }
}

struct AscentResult {
  Eigen::VectorXd params;
  double value = -std::numeric_limits<double>::infinity();
  bool ok = false;
};

Eigen::VectorXd clamp_params(Eigen::VectorXd params, const GpHyper& base) {
  const Eigen::Index noise = params.size() - 1;
  for (Eigen::Index i = 0; i < noise; ++i) {
    params[i] = std::clamp(params[i], -kLogParamBound, kLogParamBound);
  }
  if (base.optimize_noise) {
    params[noise] = std::clamp(params[noise], std::log(base.noise_floor), kLogParamBound);
  }
  return params;
}

AscentResult ascend(const GpHyper& base, const TrainingSet& set, Eigen::VectorXd params) {
  AscentResult result;
  auto current = try_likelihood(unpack_log_params(base, params), set);
  if (!current) {
    return result;
  }
  const Eigen::Index noise = params.size() - 1;
  auto masked = [&](Eigen::VectorXd g) {
    if (!base.optimize_noise) {
      g[noise] = 0.0;
    }
    return g;
  };
  Eigen::VectorXd gradient = masked(current->gradient);
  double value = current->value;
  double step = 1.0;
  for (int iter = 0; iter < base.max_ascent_steps; ++iter) {
    const double norm = gradient.norm();
    if (norm < 1e-10) {
      break;
    }
    const Eigen::VectorXd direction = gradient / norm;
    bool accepted = false;
    while (step > 1e-10) {
      const Eigen::VectorXd candidate = clamp_params(params + step * direction, base);
      const auto trial = try_likelihood(unpack_log_params(base, candidate), set);
      if (trial && trial->value > value) {
        const double gain = trial->value - value;
        params = candidate;
        value = trial->value;
        gradient = masked(trial->gradient);
        step = std::min(step * 2.0, 4.0);
        accepted = true;
        if (gain < base.step_tolerance * (1.0 + std::abs(value))) {
          result.params = params;
          result.value = value;
          result.ok = true;
          return result;
        }
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      break;
    }
  }
  result.params = params;
  result.value = value;
  result.ok = true;
  return result;
}

}  // namespace

void GpHyper::validate() const {
  if (!(signal_variance > 0.0)) {
    throw InvalidArgument("GP signal_variance must be positive");
  }
  if (lengthscales.empty()) {
    throw InvalidArgument("GP needs at least one length-scale");
  }
  for (const double l : lengthscales) {
    if (!(l > 0.0)) {
      throw InvalidArgument("GP length-scales must be positive");
    }
  }
  if (!(noise_variance >= 0.0)) {
    throw InvalidArgument("GP noise_variance must be non-negative");
  }
  if (restarts < 1) {
    throw InvalidArgument("GP restarts must be at least 1");
  }
  if (max_ascent_steps < 0) {
    throw InvalidArgument("GP max_ascent_steps must be non-negative");
  }
  if (!(init_low > 0.0 && init_high >= init_low)) {
    throw InvalidArgument("GP initialization range must satisfy 0 < low <= high");
  }
  if (!(noise_floor > 0.0)) {
    throw InvalidArgument("GP noise_floor must be positive");
  }
}

double rbf(std::span<const double> a, std::span<const double> b, const GpHyper& hyper) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("rbf inputs have " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()) + " features");
  }
  check_lengthscales(hyper, a.size());
  return hyper.signal_variance *
         std::exp(-0.5 * scaled_sq_distance(a, b, inverse_squares(hyper.lengthscales)));
}

Eigen::MatrixXd kernel_matrix(const RowMatrix& x, const GpHyper& hyper) {
  check_lengthscales(hyper, static_cast<std::size_t>(x.cols()));
  Eigen::MatrixXd k = signal_kernel(x, hyper);
  k.diagonal().array() += hyper.noise_variance;
  return k;
}

Eigen::MatrixXd kernel_matrix(const RowMatrix& a, const RowMatrix& b, const GpHyper& hyper) {
  if (a.cols() != b.cols()) {
    throw DimensionMismatch("kernel_matrix operands have " + std::to_string(a.cols()) + " and " +
                            std::to_string(b.cols()) + " columns");
  }
  check_lengthscales(hyper, static_cast<std::size_t>(a.cols()));
  const auto inv = inverse_squares(hyper.lengthscales);
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      k(i, j) = hyper.signal_variance *
                std::exp(-0.5 * scaled_sq_distance(row_span(a, i), row_span(b, j), inv));
    }
  }
  return k;
}

LogLikelihood log_marginal_likelihood(const GpHyper& hyper, const TrainingSet& set) {
  const RowMatrix& x = set.inputs();
  check_lengthscales(hyper, set.input_dim());
  const Eigen::Index m = x.rows();
  const auto q = static_cast<double>(set.output_dim());

  const Eigen::MatrixXd k_signal = signal_kernel(x, hyper);
  Eigen::MatrixXd k = k_signal;
  k.diagonal().array() += hyper.noise_variance;
  const auto llt = factorize(k);
  const Eigen::MatrixXd y = set.targets();
  const Eigen::MatrixXd alpha = llt.solve(y);

  const double half_log_det = llt.matrixLLT().diagonal().array().log().sum();
  LogLikelihood out;
  out.value = -0.5 * (y.array() * alpha.array()).sum() - q * half_log_det -
              0.5 * q * static_cast<double>(m) * std::log(2.0 * std::numbers::pi);

  // d/dtheta = 0.5 tr((alpha alpha^T - Q K^-1) dK/dtheta)
  const Eigen::MatrixXd k_inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
  const Eigen::MatrixXd w = alpha * alpha.transpose() - q * k_inv;

  const std::size_t n_scales = hyper.lengthscales.size();
  out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_scales + 2));
  out.gradient[0] = 0.5 * (w.array() * k_signal.array()).sum();

  if (hyper.isotropic()) {
    const double inv = 1.0 / (hyper.lengthscales[0] * hyper.lengthscales[0]);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = j + 1; i < m; ++i) {
        double r = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
          const double d = x(i, c) - x(j, c);
          r += d * d;
        }
        acc += 2.0 * w(i, j) * k_signal(i, j) * r * inv;
      }
    }
    out.gradient[1] = 0.5 * acc;
  } else {
    for (std::size_t c = 0; c < n_scales; ++c) {
      const double inv = 1.0 / (hyper.lengthscales[c] * hyper.lengthscales[c]);
      const auto col = static_cast<Eigen::Index>(c);
      double acc = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = j + 1; i < m; ++i) {
          const double d = x(i, col) - x(j, col);
          acc += 2.0 * w(i, j) * k_signal(i, j) * d * d * inv;
        }
      }
      out.gradient[static_cast<Eigen::Index>(1 + c)] = 0.5 * acc;
    }
  }
  out.gradient[static_cast<Eigen::Index>(n_scales + 1)] =
      0.5 * hyper.noise_variance * w.diagonal().sum();
  return out;
}

Eigen::VectorXd pack_log_params(const GpHyper& hyper) {
  const auto n = static_cast<Eigen::Index>(hyper.lengthscales.size());
  Eigen::VectorXd p(n + 2);
  p[0] = std::log(hyper.signal_variance);
  for (Eigen::Index i = 0; i < n; ++i) {
    p[1 + i] = std::log(hyper.lengthscales[static_cast<std::size_t>(i)]);
  }
  p[n + 1] = std::log(hyper.noise_variance);
  return p;
}

GpHyper unpack_log_params(const GpHyper& base, const Eigen::VectorXd& log_params) {
  if (log_params.size() < 3) {
    throw InvalidArgument("GP log-parameter vector needs at least 3 entries");
  }
  GpHyper out = base;
  const Eigen::Index n = log_params.size() - 2;
  out.signal_variance = std::exp(log_params[0]);
  out.lengthscales.assign(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.lengthscales[static_cast<std::size_t>(i)] = std::exp(log_params[1 + i]);
  }
  out.noise_variance = std::exp(log_params[n + 1]);
  return out;
}

GpModel::GpModel(GpHyper hyper, RowMatrix inputs, Eigen::MatrixXd cholesky, Eigen::MatrixXd weights,
                 double log_likelihood, std::vector<double> restart_log_likelihoods)
    : Model(static_cast<std::size_t>(inputs.cols()), static_cast<std::size_t>(weights.cols())),
      hyper_(std::move(hyper)),
      inputs_(std::move(inputs)),
      cholesky_(std::move(cholesky)),
      weights_(std::move(weights)),
      log_likelihood_(log_likelihood),
      restart_log_likelihoods_(std::move(restart_log_likelihoods)) {}

RowMatrix GpModel::predict_checked(const RowMatrix& batch) const { return gp_predict_mean(*this, batch); }

void GpModel::write_payload(ByteWriter& writer) const {
  writer.f64(hyper_.signal_variance);
  writer.u32(static_cast<std::uint32_t>(hyper_.lengthscales.size()));
  writer.f64s(hyper_.lengthscales);
  writer.f64(hyper_.noise_variance);
  writer.u32(static_cast<std::uint32_t>(inputs_.rows()));
  writer.f64s({inputs_.data(), static_cast<std::size_t>(inputs_.size())});
  writer.f64s({cholesky_.data(), static_cast<std::size_t>(cholesky_.size())});
  writer.f64s({weights_.data(), static_cast<std::size_t>(weights_.size())});
  writer.f64(log_likelihood_);
  writer.u32(static_cast<std::uint32_t>(restart_log_likelihoods_.size()));
  writer.f64s(restart_log_likelihoods_);
}

std::unique_ptr<GpModel> GpModel::read_payload(ByteReader& reader, std::size_t input_dim,
                                               std::size_t output_dim) {
  GpHyper hyper;
  hyper.optimize = false;
  hyper.signal_variance = reader.f64();
  hyper.lengthscales = reader.f64s(reader.u32());
  hyper.noise_variance = reader.f64();
  const std::size_t rows = reader.u32();
  const auto r = static_cast<Eigen::Index>(rows);
  RowMatrix inputs(r, static_cast<Eigen::Index>(input_dim));
  auto in_values = reader.f64s(rows * input_dim);
  std::copy(in_values.begin(), in_values.end(), inputs.data());
  Eigen::MatrixXd chol(r, r);
  auto chol_values = reader.f64s(rows * rows);
  std::copy(chol_values.begin(), chol_values.end(), chol.data());
  Eigen::MatrixXd weights(r, static_cast<Eigen::Index>(output_dim));
  auto w_values = reader.f64s(rows * output_dim);
  std::copy(w_values.begin(), w_values.end(), weights.data());
  const double ll = reader.f64();
  auto restarts = reader.f64s(reader.u32());
  return std::make_unique<GpModel>(std::move(hyper), std::move(inputs), std::move(chol),
                                   std::move(weights), ll, std::move(restarts));
}

std::unique_ptr<GpModel> gp_fit(const TrainingSet& set, const GpHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  if (set.rows() > hyper.max_rows) {
    throw InvalidArgument("GP training set has " + std::to_string(set.rows()) +
                          " rows, above the exact-GP cap of " + std::to_string(hyper.max_rows) +
                          "; subsample the training mask first");
  }
  const std::size_t p = set.input_dim();

  GpHyper chosen = hyper;
  std::vector<double> restart_values;
  if (!hyper.optimize) {
    check_lengthscales(hyper, p);
  } else {
    GpHyper base = hyper;
    base.lengthscales.assign(hyper.anisotropic ? p : 1, 1.0);
    if (hyper.optimize_noise) {
      base.noise_variance = std::max(hyper.noise_variance, hyper.noise_floor);
    }
    const auto n_restarts = static_cast<std::size_t>(hyper.restarts);
    std::vector<AscentResult> results(n_restarts);
    const double lo = std::log(hyper.init_low);
    const double hi = std::log(hyper.init_high);
    parallel_for(
        n_restarts,
        [&](std::size_t begin, std::size_t end) {
          for (std::size_t r = begin; r < end; ++r) {
            auto engine = make_engine(split_seed(seed, r));
            Eigen::VectorXd start = pack_log_params(base);
            const Eigen::Index last = start.size() - 1;
            for (Eigen::Index i = 0; i < start.size(); ++i) {
              if (i == last && !hyper.optimize_noise) {
                continue;
              }
              start[i] = lo + (hi - lo) * uniform01(engine);
            }
            results[r] = ascend(base, set, clamp_params(start, base));
          }
        },
        1);

    std::optional<std::size_t> best;
    restart_values.reserve(n_restarts);
    for (std::size_t r = 0; r < n_restarts; ++r) {
      restart_values.push_back(results[r].value);
      if (results[r].ok && (!best || results[r].value > results[*best].value)) {
        best = r;
      }
    }
    if (!best) {
      throw NumericalError("all " + std::to_string(n_restarts) +
                           " GP restarts hit a non positive-definite kernel matrix; raise "
                           "noise_variance or noise_floor");
    }
    chosen = unpack_log_params(base, results[*best].params);
  }

  const Eigen::MatrixXd k = kernel_matrix(set.inputs(), chosen);
  const auto llt = factorize(k);
  Eigen::MatrixXd weights = llt.solve(Eigen::MatrixXd(set.targets()));
  const double ll = log_marginal_likelihood(chosen, set).value;
  if (restart_values.empty()) {
    restart_values.push_back(ll);
  }
  Eigen::MatrixXd chol = llt.matrixL();
  return std::make_unique<GpModel>(std::move(chosen), set.inputs(), std::move(chol),
                                   std::move(weights), ll, std::move(restart_values));
}

RowMatrix gp_predict_mean(const GpModel& model, const RowMatrix& queries) {
  if (static_cast<std::size_t>(queries.cols()) != model.input_dim()) {
    throw DimensionMismatch("GP expects " + std::to_string(model.input_dim()) +
                            " input features, got " + std::to_string(queries.cols()));
  }
  const RowMatrix& x = model.inputs();
  const Eigen::MatrixXd& w = model.weights();
  const auto inv = inverse_squares(model.hyper().lengthscales);
  const double sf2 = model.hyper().signal_variance;
  RowMatrix out(queries.rows(), w.cols());
  parallel_for(static_cast<std::size_t>(queries.rows()), [&](std::size_t begin, std::size_t end) {
    std::vector<double> k(static_cast<std::size_t>(x.rows()));
    for (auto n = static_cast<Eigen::Index>(begin); n < static_cast<Eigen::Index>(end); ++n) {
      for (Eigen::Index j = 0; j < x.rows(); ++j) {
        k[static_cast<std::size_t>(j)] =
            sf2 * std::exp(-0.5 * scaled_sq_distance(row_span(queries, n), row_span(x, j), inv));
      }
      for (Eigen::Index q = 0; q < w.cols(); ++q) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < x.rows(); ++j) {
          acc += k[static_cast<std::size_t>(j)] * w(j, q);
        }
        out(n, q) = acc;
      }
    }
  });
  return out;
}

Eigen::MatrixXd gp_predict_cov(const GpModel& model, const RowMatrix& queries) {
  if (static_cast<std::size_t>(queries.cols()) != model.input_dim()) {
    throw DimensionMismatch("GP expects " + std::to_string(model.input_dim()) +
                            " input features, got " + std::to_string(queries.cols()));
  }
  const Eigen::MatrixXd k_star = kernel_matrix(queries, queries, model.hyper());
  const Eigen::MatrixXd k_cross = kernel_matrix(model.inputs(), queries, model.hyper());
  const Eigen::MatrixXd v =
      model.cholesky().triangularView<Eigen::Lower>().solve(k_cross);
  Eigen::MatrixXd cov = k_star - v.transpose() * v;
  cov = 0.5 * (cov + cov.transpose()).eval();
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    cov(i, i) = std::max(cov(i, i), 0.0);
  }
  return cov;
}

}  // namespace hcd
