#include "hcd/svr.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <string>

#include "hcd/error.hpp"
#include "hcd/parallel.hpp"

namespace hcd {
namespace {

constexpr double kSystemJitter = 1e-10;
constexpr double kPruneThreshold = 1e-12;

double sq_distance(const RowMatrix& a, Eigen::Index i, const RowMatrix& b, Eigen::Index j) {
  double r = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    r += d * d;
  }
  return r;
}

Eigen::MatrixXd residuals(const Eigen::MatrixXd& kernel, const Eigen::MatrixXd& coefficients,
                          const Eigen::VectorXd& bias, const RowMatrix& targets) {
  Eigen::MatrixXd e = targets - kernel * coefficients;
  e.rowwise() -= bias.transpose();
  return e;
}

struct DualState {
  Eigen::MatrixXd beta;
  Eigen::VectorXd bias;
};

}  // namespace

void SvrHyper::validate() const {
  if (!(penalty > 0.0)) {
    throw InvalidArgument("SVR penalty C must be positive");
  }
  if (!(insensitivity >= 0.0)) {
    throw InvalidArgument("SVR insensitivity epsilon must be non-negative");
  }
  if (!(kernel_width > 0.0)) {
    throw InvalidArgument("SVR kernel width sigma must be positive");
  }
  if (max_iterations < 0) {
    throw InvalidArgument("SVR max_iterations must be non-negative");
  }
  if (!(cost_tolerance >= 0.0)) {
    throw InvalidArgument("SVR cost_tolerance must be non-negative");
  }
}

double quadratic_eps_loss(double mu, double eps) {
  if (mu < eps) {
    return 0.0;
  }
  return mu * mu - 2.0 * mu * eps + eps * eps;
}

SvrModel::SvrModel(RowMatrix inputs, Eigen::MatrixXd coefficients, Eigen::VectorXd bias,
                   double kernel_width)
    : Model(static_cast<std::size_t>(inputs.cols()), static_cast<std::size_t>(coefficients.cols())),
      inputs_(std::move(inputs)),
      coefficients_(std::move(coefficients)),
      bias_(std::move(bias)),
      kernel_width_(kernel_width) {
  support_.assign(static_cast<std::size_t>(coefficients_.rows()), false);
  for (Eigen::Index m = 0; m < coefficients_.rows(); ++m) {
    if (coefficients_.row(m).cwiseAbs().maxCoeff() >= kPruneThreshold) {
      support_[static_cast<std::size_t>(m)] = true;
      support_rows_.push_back(m);
    }
  }
}

RowMatrix SvrModel::predict_checked(const RowMatrix& batch) const {
  RowMatrix out(batch.rows(), coefficients_.cols());
  const double scale = -1.0 / (2.0 * kernel_width_ * kernel_width_);
  parallel_for(static_cast<std::size_t>(batch.rows()), [&](std::size_t begin, std::size_t end) {
    for (auto n = static_cast<Eigen::Index>(begin); n < static_cast<Eigen::Index>(end); ++n) {
      for (Eigen::Index q = 0; q < coefficients_.cols(); ++q) {
        out(n, q) = bias_[q];
      }
      for (const Eigen::Index m : support_rows_) {
        const double k = std::exp(scale * sq_distance(batch, n, inputs_, m));
        for (Eigen::Index q = 0; q < coefficients_.cols(); ++q) {
          out(n, q) += coefficients_(m, q) * k;
        }
      }
    }
  });
  return out;
}

void SvrModel::write_payload(ByteWriter& writer) const {
  writer.f64(kernel_width_);
  writer.u32(static_cast<std::uint32_t>(inputs_.rows()));
  writer.f64s({inputs_.data(), static_cast<std::size_t>(inputs_.size())});
  writer.f64s({coefficients_.data(), static_cast<std::size_t>(coefficients_.size())});
  writer.f64s({bias_.data(), static_cast<std::size_t>(bias_.size())});
}

std::unique_ptr<SvrModel> SvrModel::read_payload(ByteReader& reader, std::size_t input_dim,
                                                 std::size_t output_dim) {
  const double width = reader.f64();
  const std::size_t rows = reader.u32();
  RowMatrix inputs(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(input_dim));
  const auto in_values = reader.f64s(rows * input_dim);
  std::copy(in_values.begin(), in_values.end(), inputs.data());
  Eigen::MatrixXd beta(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(output_dim));
  const auto beta_values = reader.f64s(rows * output_dim);
  std::copy(beta_values.begin(), beta_values.end(), beta.data());
  Eigen::VectorXd bias(static_cast<Eigen::Index>(output_dim));
  const auto bias_values = reader.f64s(output_dim);
  std::copy(bias_values.begin(), bias_values.end(), bias.data());
  return std::make_unique<SvrModel>(std::move(inputs), std::move(beta), std::move(bias), width);
}

Eigen::MatrixXd svr_kernel(const RowMatrix& x, double kernel_width) {
  const double scale = -1.0 / (2.0 * kernel_width * kernel_width);
  const Eigen::Index m = x.rows();
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    k(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < m; ++i) {
      const double v = std::exp(scale * sq_distance(x, i, x, j));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Eigen::VectorXd residual_norms(const SvrModel& model, const TrainingSet& set) {
  if (set.input_dim() != model.input_dim() || set.output_dim() != model.output_dim() ||
      set.rows() != static_cast<std::size_t>(model.coefficients().rows())) {
    throw DimensionMismatch("SVR model does not match the training set it is evaluated on");
  }
  const Eigen::MatrixXd k = svr_kernel(set.inputs(), model.kernel_width());
  return residuals(k, model.coefficients(), model.bias(), set.targets()).rowwise().norm();
}

double svr_cost(const Eigen::MatrixXd& kernel, const Eigen::MatrixXd& coefficients,
                const Eigen::VectorXd& bias, const RowMatrix& targets, const SvrHyper& hyper) {
  const Eigen::VectorXd mu = residuals(kernel, coefficients, bias, targets).rowwise().norm();
  double loss = 0.0;
  for (Eigen::Index m = 0; m < mu.size(); ++m) {
    loss += quadratic_eps_loss(mu[m], hyper.insensitivity);
  }
  const double regularizer = 0.5 * (coefficients.array() * (kernel * coefficients).array()).sum();
  return regularizer + hyper.penalty * loss;
}

double svr_cost(const SvrModel& model, const TrainingSet& set, const SvrHyper& hyper) {
  if (set.rows() != static_cast<std::size_t>(model.coefficients().rows())) {
    throw DimensionMismatch("SVR model does not match the training set it is evaluated on");
  }
  const Eigen::MatrixXd k = svr_kernel(set.inputs(), model.kernel_width());
  return svr_cost(k, model.coefficients(), model.bias(), set.targets(), hyper);
}

std::unique_ptr<SvrModel> svr_fit(const TrainingSet& set, const SvrHyper& hyper) {
  hyper.validate();
  const auto m = static_cast<Eigen::Index>(set.rows());
  const auto q = static_cast<Eigen::Index>(set.output_dim());
  const RowMatrix& y = set.targets();
  const Eigen::MatrixXd k = svr_kernel(set.inputs(), hyper.kernel_width);

  // Start from the better of the mean-bias and all-zero models, so the fit
  // can never end above the trivial zero model.
  DualState state{Eigen::MatrixXd::Zero(m, q), y.colwise().mean().transpose()};
  double cost = svr_cost(k, state.beta, state.bias, y, hyper);
  {
    const Eigen::VectorXd zero_bias = Eigen::VectorXd::Zero(q);
    const double zero_cost = svr_cost(k, state.beta, zero_bias, y, hyper);
    if (zero_cost < cost) {
      state.bias = zero_bias;
      cost = zero_cost;
    }
  }

  std::vector<double> history{cost};
  std::string diagnosis;
  for (int iter = 0; iter < hyper.max_iterations; ++iter) {
    const Eigen::MatrixXd e = residuals(k, state.beta, state.bias, y);
    const Eigen::VectorXd mu = e.rowwise().norm();
    std::vector<Eigen::Index> active;
    std::vector<double> weight;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (mu[i] >= hyper.insensitivity && mu[i] > 0.0) {
        active.push_back(i);
        weight.push_back(2.0 * hyper.penalty * (mu[i] - hyper.insensitivity) / mu[i]);
      }
    }

    DualState candidate{Eigen::MatrixXd::Zero(m, q), state.bias};
    if (active.empty()) {
      if (state.beta.isZero(0.0)) {
        diagnosis =
            "every residual lies inside the epsilon tube: the trivial model is optimal and the "
            "weighted system is empty (epsilon too large for these targets)";
        break;
      }
    } else {
      // [K_ss + D_a^-1, 1; 1^T, 0] [beta; b] = [y_s; 0], solved through the
      // SPD block by a Schur complement on the bias.
      const auto s = static_cast<Eigen::Index>(active.size());
      Eigen::MatrixXd a(s, s);
      for (Eigen::Index j = 0; j < s; ++j) {
        for (Eigen::Index i = 0; i < s; ++i) {
          a(i, j) = k(active[static_cast<std::size_t>(i)], active[static_cast<std::size_t>(j)]);
        }
        a(j, j) += 1.0 / weight[static_cast<std::size_t>(j)] + kSystemJitter;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(a);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("SVR weighted system is not positive definite at iteration " +
                             std::to_string(iter) + "; try a larger kernel width or smaller C");
      }
      Eigen::MatrixXd rhs(s, q);
      for (Eigen::Index i = 0; i < s; ++i) {
        rhs.row(i) = y.row(active[static_cast<std::size_t>(i)]);
      }
      const Eigen::VectorXd u = llt.solve(Eigen::VectorXd::Ones(s));
      const Eigen::MatrixXd v = llt.solve(rhs);
      const double denom = u.sum();
      for (Eigen::Index c = 0; c < q; ++c) {
        const double b = v.col(c).sum() / denom;
        candidate.bias[c] = b;
        const Eigen::VectorXd beta_s = v.col(c) - b * u;
        for (Eigen::Index i = 0; i < s; ++i) {
          candidate.beta(active[static_cast<std::size_t>(i)], c) = beta_s[i];
        }
      }
    }

    // Backtracking along the IRWLS direction keeps the cost monotone.
    double step = 1.0;
    bool accepted = false;
    DualState trial;
    double trial_cost = cost;
    while (step >= 1e-8) {
      trial.beta = state.beta + step * (candidate.beta - state.beta);
      trial.bias = state.bias + step * (candidate.bias - state.bias);
      trial_cost = svr_cost(k, trial.beta, trial.bias, y, hyper);
      if (trial_cost <= cost) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      break;
    }
    const double decrease = cost - trial_cost;
    state = std::move(trial);
    cost = trial_cost;
    history.push_back(cost);
    if (cost <= 0.0 || decrease <= hyper.cost_tolerance * (cost + decrease)) {
      break;
    }
  }

  auto model = std::make_unique<SvrModel>(set.inputs(), std::move(state.beta), std::move(state.bias),
                                          hyper.kernel_width);
  model->set_training_report(std::move(history), std::move(diagnosis));
  return model;
}

std::vector<double> svr_predict(const SvrModel& model, std::span<const double> x) {
  RowMatrix batch(1, static_cast<Eigen::Index>(x.size()));
  std::copy(x.begin(), x.end(), batch.data());
  const RowMatrix out = model.predict(batch);
  return {out.data(), out.data() + out.size()};
}

}  // namespace hcd
