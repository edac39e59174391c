#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "traitsteer/hook.hpp"

namespace traitsteer {

/// Which input feeds the L1 penalty. kRaw is ReLU(z W_enc + b_enc), the
/// penalty exactly as usually printed; kCentered subtracts b_dec first so the
/// penalised activations are the ones the encoder actually emits.
enum class SparsityInput { kRaw, kCentered };

/// SAE(z) = ReLU((z - b_dec) W_enc + b_enc) W_dec + b_dec.
/// Rows of w_dec are the learned feature directions.
struct SAEModel {
  Eigen::MatrixXd w_enc;  // d x m
  Eigen::MatrixXd w_dec;  // m x d
  Eigen::VectorXd b_enc;  // m
  Eigen::VectorXd b_dec;  // d
  int layer = 0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  SparsityInput sparsity_input = SparsityInput::kRaw;
  std::string id;

  Eigen::Index d() const { return b_dec.size(); }
  Eigen::Index m() const { return b_enc.size(); }

  /// Shape consistency and finite entries. With `require_overcomplete`, also
  /// m >= d; loaders pass false and only warn.
  void validate(bool require_overcomplete = true) const;

  bool operator==(const SAEModel&) const = default;
};

/// Zero biases, small uniform weights, unit-norm decoder rows.
SAEModel sae_init(Eigen::Index d, Eigen::Index m, std::uint64_t seed, int layer = 0);

Eigen::VectorXd sae_encode(const Eigen::VectorXd& z, const SAEModel& sae);
Eigen::VectorXd sae_decode(const Eigen::VectorXd& a, const SAEModel& sae);
Eigen::VectorXd sae_reconstruct(const Eigen::VectorXd& z, const SAEModel& sae);

/// Encodes every row of `z` (n x d) -> (n x m).
Eigen::MatrixXd sae_encode_rows(const Eigen::MatrixXd& z, const SAEModel& sae);

struct SAELoss {
  double reconstruction = 0.0;
  double sparsity = 0.0;
  double total = 0.0;
};

SAELoss sae_loss(const Eigen::VectorXd& z, const SAEModel& sae, double alpha,
                 SparsityInput input = SparsityInput::kRaw);

/// Mean of the per-sample loss over the rows of `z`.
SAELoss sae_mean_loss(const Eigen::MatrixXd& z, const SAEModel& sae, double alpha,
                      SparsityInput input = SparsityInput::kRaw);

struct SAEGradient {
  Eigen::MatrixXd w_enc, w_dec;
  Eigen::VectorXd b_enc, b_dec;
};

/// Analytic gradient of sae_mean_loss with respect to every parameter.
/// Subgradient 0 is used at ReLU kinks.
SAEGradient sae_loss_gradient(const Eigen::MatrixXd& z, const SAEModel& sae, double alpha,
                              SparsityInput input = SparsityInput::kRaw);

struct SAETrainConfig {
  Eigen::Index n_features = 0;  // m; 0 means 2 * d
  double alpha = 0.01;
  double learning_rate = 0.01;
  int steps = 1000;
  int batch_size = 64;
  std::uint64_t seed = 0;
  SparsityInput sparsity_input = SparsityInput::kRaw;
  // Project decoder rows back to unit norm after every step.
  bool unit_norm_decoder = false;
  double holdout_fraction = 0.1;
  int layer = 0;

  void validate() const;
};

struct SAETrainResult {
  SAEModel model;
  double initial_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
};

/// Plain minibatch SGD on the rows of `activations` (n x d). The trailing
/// `holdout_fraction` of rows is held out and never trained on. Deterministic
/// for a given seed; throws kDivergence if the loss goes non-finite.
SAETrainResult sae_train(const Eigen::MatrixXd& activations, const SAETrainConfig& config);

/// One SGD step from `sae` on the given batch.
SAEModel sae_sgd_step(const SAEModel& sae, const Eigen::MatrixXd& batch, double alpha,
                      double learning_rate, SparsityInput input = SparsityInput::kRaw);

/// Average number of nonzero encoded activations per row.
double sae_mean_l0(const Eigen::MatrixXd& z, const SAEModel& sae);

/// Decoder row `index` as a background feature at the SAE's layer.
FeatureVector feature_vector(const SAEModel& sae, std::int64_t index);

}  // namespace traitsteer
