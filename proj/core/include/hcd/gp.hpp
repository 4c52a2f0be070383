#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "hcd/model.hpp"
#include "hcd/raster.hpp"

namespace hcd {

/// Hyperparameters of the zero-mean RBF Gaussian process.
///
/// `lengthscales` holds one value (isotropic kernel) or one per input
/// feature (anisotropic, diagonal L). When `optimize` is set the stored
/// signal variance and length-scales are ignored: every restart draws them
/// log-uniformly from [init_low, init_high] and climbs the log marginal
/// likelihood. The noise term is a numerical jitter on the diagonal of
/// K(X, X); zero recovers exact interpolation.
struct GpHyper {
  double signal_variance = 1.0;
  std::vector<double> lengthscales{1.0};
  double noise_variance = 1e-6;
  bool anisotropic = true;
  bool optimize = true;
  bool optimize_noise = true;
  int restarts = 1;
  int max_ascent_steps = 200;
  double step_tolerance = 1e-7;
  double init_low = 1e-2;
  double init_high = 1e2;
  double noise_floor = 1e-8;
  std::size_t max_rows = 4000;

  void validate() const;
  [[nodiscard]] bool isotropic() const noexcept { return lengthscales.size() == 1; }
};

/// sigma_f^2 * exp(-0.5 * (a - b)^T L (a - b)).
double rbf(std::span<const double> a, std::span<const double> b, const GpHyper& hyper);

/// K(X, X) + noise * I.
Eigen::MatrixXd kernel_matrix(const RowMatrix& x, const GpHyper& hyper);
/// Cross covariance K(A, B), no noise term.
Eigen::MatrixXd kernel_matrix(const RowMatrix& a, const RowMatrix& b, const GpHyper& hyper);

/// Log marginal likelihood summed over the Q independent output columns,
/// with its gradient in log-parameter space ordered as
/// [log sigma_f^2, log l_1 .. log l_k, log noise].
struct LogLikelihood {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

LogLikelihood log_marginal_likelihood(const GpHyper& hyper, const TrainingSet& set);

/// Packs / unpacks the log-domain parameter vector used by the gradient.
Eigen::VectorXd pack_log_params(const GpHyper& hyper);
GpHyper unpack_log_params(const GpHyper& base, const Eigen::VectorXd& log_params);

class GpModel final : public Model {
 public:
  GpModel(GpHyper hyper, RowMatrix inputs, Eigen::MatrixXd cholesky, Eigen::MatrixXd weights,
          double log_likelihood, std::vector<double> restart_log_likelihoods);

  [[nodiscard]] Method method() const noexcept override { return Method::gp; }
  [[nodiscard]] const GpHyper& hyper() const noexcept { return hyper_; }
  [[nodiscard]] const RowMatrix& inputs() const noexcept { return inputs_; }
  /// Lower Cholesky factor of K(X, X) + noise * I.
  [[nodiscard]] const Eigen::MatrixXd& cholesky() const noexcept { return cholesky_; }
  /// (K + noise * I)^-1 Y, one column per output.
  [[nodiscard]] const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  [[nodiscard]] double log_likelihood() const noexcept { return log_likelihood_; }
  /// Final likelihood of every restart; failed restarts hold -inf.
  [[nodiscard]] const std::vector<double>& restart_log_likelihoods() const noexcept {
    return restart_log_likelihoods_;
  }

  void write_payload(ByteWriter& writer) const override;
  static std::unique_ptr<GpModel> read_payload(ByteReader& reader, std::size_t input_dim,
                                               std::size_t output_dim);

 protected:
  [[nodiscard]] RowMatrix predict_checked(const RowMatrix& batch) const override;

 private:
  GpHyper hyper_;
  RowMatrix inputs_;
  Eigen::MatrixXd cholesky_;
  Eigen::MatrixXd weights_;
  double log_likelihood_;
  std::vector<double> restart_log_likelihoods_;
};

std::unique_ptr<GpModel> gp_fit(const TrainingSet& set, const GpHyper& hyper, std::uint64_t seed);

/// K(X*, X) (K + noise I)^-1 Y.
RowMatrix gp_predict_mean(const GpModel& model, const RowMatrix& queries);

/// K(X*, X*) - K(X*, X) (K + noise I)^-1 K(X, X*); negative diagonal round-off
/// is clamped to zero.
Eigen::MatrixXd gp_predict_cov(const GpModel& model, const RowMatrix& queries);

}  // namespace hcd
