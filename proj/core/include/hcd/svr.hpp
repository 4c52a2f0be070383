#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "hcd/model.hpp"
#include "hcd/raster.hpp"

namespace hcd {

/// Multi-output SVR with a joint 2-norm epsilon-insensitive loss.
struct SvrHyper {
  double penalty = 1.0;        // C
  double insensitivity = 0.1;  // epsilon, half-width of the tube
  double kernel_width = 1.0;   // sigma of the RBF kernel
  int max_iterations = 200;
  double cost_tolerance = 1e-9;

  void validate() const;
};

/// Quadratic epsilon-insensitive loss: 0 below the tube, (mu - eps)^2 above.
double quadratic_eps_loss(double mu, double eps);

class SvrModel final : public Model {
 public:
  SvrModel(RowMatrix inputs, Eigen::MatrixXd coefficients, Eigen::VectorXd bias, double kernel_width);

  [[nodiscard]] Method method() const noexcept override { return Method::svr; }
  [[nodiscard]] const RowMatrix& inputs() const noexcept { return inputs_; }
  /// Dual coefficients beta, M x Q.
  [[nodiscard]] const Eigen::MatrixXd& coefficients() const noexcept { return coefficients_; }
  [[nodiscard]] const Eigen::VectorXd& bias() const noexcept { return bias_; }
  [[nodiscard]] double kernel_width() const noexcept { return kernel_width_; }
  /// Rows whose coefficients are not all below 1e-12 in magnitude.
  [[nodiscard]] const std::vector<bool>& support() const noexcept { return support_; }
  [[nodiscard]] std::size_t support_count() const noexcept { return support_rows_.size(); }

  /// Primal cost after every accepted IRWLS iterate (first entry = start).
  [[nodiscard]] const std::vector<double>& cost_history() const noexcept { return cost_history_; }
  [[nodiscard]] const std::string& diagnosis() const noexcept { return diagnosis_; }

  void set_training_report(std::vector<double> history, std::string diagnosis) {
    cost_history_ = std::move(history);
    diagnosis_ = std::move(diagnosis);
  }

  void write_payload(ByteWriter& writer) const override;
  static std::unique_ptr<SvrModel> read_payload(ByteReader& reader, std::size_t input_dim,
                                                std::size_t output_dim);

 protected:
  [[nodiscard]] RowMatrix predict_checked(const RowMatrix& batch) const override;

 private:
  RowMatrix inputs_;
  Eigen::MatrixXd coefficients_;
  Eigen::VectorXd bias_;
  double kernel_width_;
  std::vector<bool> support_;
  std::vector<Eigen::Index> support_rows_;
  std::vector<double> cost_history_;
  std::string diagnosis_;
};

/// RBF Gram matrix exp(-|a - b|^2 / (2 sigma^2)) over the rows of x.
Eigen::MatrixXd svr_kernel(const RowMatrix& x, double kernel_width);

/// Euclidean norm of each row's Q-dimensional residual, using all
/// coefficients (no support pruning).
Eigen::VectorXd residual_norms(const SvrModel& model, const TrainingSet& set);

/// 0.5 tr(beta^T K beta) + C sum_m L(mu_m).
double svr_cost(const SvrModel& model, const TrainingSet& set, const SvrHyper& hyper);

/// Same cost for raw dual variables; used by the trainer and by oracles.
double svr_cost(const Eigen::MatrixXd& kernel, const Eigen::MatrixXd& coefficients,
                const Eigen::VectorXd& bias, const RowMatrix& targets, const SvrHyper& hyper);

/// Iteratively re-weighted least squares on the dual variables. Every
/// accepted iterate lowers (or keeps) the cost; the run stops when the
/// relative decrease falls below cost_tolerance.
std::unique_ptr<SvrModel> svr_fit(const TrainingSet& set, const SvrHyper& hyper);

std::vector<double> svr_predict(const SvrModel& model, std::span<const double> x);

}  // namespace hcd
