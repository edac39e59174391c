#include "traitsteer/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "traitsteer/error.hpp"

namespace traitsteer {

namespace {

void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": expected length " +
                                                   std::to_string(want) + ", got " + std::to_string(got));
  }
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

Eigen::MatrixXd pre_activations(const Eigen::MatrixXd& z, const SAEModel& sae) {
  Eigen::MatrixXd centered = z.rowwise() - sae.b_dec.transpose();
  Eigen::MatrixXd pre = centered * sae.w_enc;
  pre.rowwise() += sae.b_enc.transpose();
  return pre;
}

Eigen::MatrixXd sparsity_pre_activations(const Eigen::MatrixXd& z, const SAEModel& sae,
                                         SparsityInput input) {
  if (input == SparsityInput::kCentered) return pre_activations(z, sae);
  Eigen::MatrixXd pre = z * sae.w_enc;
  pre.rowwise() += sae.b_enc.transpose();
  return pre;
}

}  // namespace

void SAEModel::validate(bool require_overcomplete) const {
  const Eigen::Index dd = d();
  const Eigen::Index mm = m();
  if (dd < 1 || mm < 1) throw Error(ErrorCode::kInvalidArgument, "SAE needs d >= 1 and m >= 1");
  if (w_enc.rows() != dd || w_enc.cols() != mm) throw Error(ErrorCode::kDimensionMismatch, "W_enc must be d x m");
  if (w_dec.rows() != mm || w_dec.cols() != dd) throw Error(ErrorCode::kDimensionMismatch, "W_dec must be m x d");
  if (require_overcomplete && mm < dd) {
    throw Error(ErrorCode::kInvalidArgument, "SAE feature count m=" + std::to_string(mm) +
                                                 " is smaller than input dimension d=" + std::to_string(dd));
  }
  if (!w_enc.allFinite() || !w_dec.allFinite() || !b_enc.allFinite() || !b_dec.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "SAE parameters must be finite");
  }
  if (!(alpha >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "SAE alpha must be >= 0");
}

SAEModel sae_init(Eigen::Index d, Eigen::Index m, std::uint64_t seed, int layer) {
  if (d < 1 || m < d) {
    throw Error(ErrorCode::kInvalidArgument, "sae_init needs 1 <= d <= m");
  }
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  SAEModel sae;
  sae.w_enc.resize(d, m);
  sae.w_dec.resize(m, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < m; ++c) sae.w_enc(r, c) = uniform(rng);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) sae.w_dec(r, c) = uniform(rng);
    sae.w_dec.row(r).normalize();
  }
  sae.b_enc = Eigen::VectorXd::Zero(m);
  sae.b_dec = Eigen::VectorXd::Zero(d);
  sae.layer = layer;
  sae.seed = seed;
  return sae;
}

Eigen::VectorXd sae_encode(const Eigen::VectorXd& z, const SAEModel& sae) {
  require_dim(z.size(), sae.d(), "sae_encode input");
  return ((z - sae.b_dec).transpose() * sae.w_enc + sae.b_enc.transpose()).cwiseMax(0.0).transpose();
}

Eigen::VectorXd sae_decode(const Eigen::VectorXd& a, const SAEModel& sae) {
  require_dim(a.size(), sae.m(), "sae_decode input");
  return (a.transpose() * sae.w_dec).transpose() + sae.b_dec;
}

Eigen::VectorXd sae_reconstruct(const Eigen::VectorXd& z, const SAEModel& sae) {
  return sae_decode(sae_encode(z, sae), sae);
}

Eigen::MatrixXd sae_encode_rows(const Eigen::MatrixXd& z, const SAEModel& sae) {
  require_dim(z.cols(), sae.d(), "sae_encode_rows input");
  return relu(pre_activations(z, sae));
}

SAELoss sae_loss(const Eigen::VectorXd& z, const SAEModel& sae, double alpha, SparsityInput input) {
  require_dim(z.size(), sae.d(), "sae_loss input");
  return sae_mean_loss(z.transpose(), sae, alpha, input);
}

SAELoss sae_mean_loss(const Eigen::MatrixXd& z, const SAEModel& sae, double alpha,
                      SparsityInput input) {
  if (!(alpha >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be >= 0");
  require_dim(z.cols(), sae.d(), "sae_mean_loss input");
  if (z.rows() == 0) throw Error(ErrorCode::kEmptyInput, "sae_mean_loss needs at least one row");
  Eigen::MatrixXd recon = relu(pre_activations(z, sae)) * sae.w_dec;
  recon.rowwise() += sae.b_dec.transpose();
  const double n = static_cast<double>(z.rows());
  SAELoss loss;
  loss.reconstruction = (z - recon).squaredNorm() / n;
  loss.sparsity = relu(sparsity_pre_activations(z, sae, input)).sum() / n;
  loss.total = loss.reconstruction + alpha * loss.sparsity;
  return loss;
}

SAEGradient sae_loss_gradient(const Eigen::MatrixXd& z, const SAEModel& sae, double alpha,
                              SparsityInput input) {
  require_dim(z.cols(), sae.d(), "sae_loss_gradient input");
  if (z.rows() == 0) throw Error(ErrorCode::kEmptyInput, "sae_loss_gradient needs at least one row");
  const double n = static_cast<double>(z.rows());
  const Eigen::MatrixXd centered = z.rowwise() - sae.b_dec.transpose();
  Eigen::MatrixXd pre = centered * sae.w_enc;
  pre.rowwise() += sae.b_enc.transpose();
  const Eigen::MatrixXd acts = relu(pre);
  Eigen::MatrixXd recon = acts * sae.w_dec;
  recon.rowwise() += sae.b_dec.transpose();

  // d/d recon of ||z - recon||^2, averaged over rows.
  const Eigen::MatrixXd g_recon = 2.0 * (recon - z) / n;
  const Eigen::MatrixXd active = (pre.array() > 0.0).cast<double>().matrix();
  const Eigen::MatrixXd g_pre = (g_recon * sae.w_dec.transpose()).cwiseProduct(active);

  SAEGradient g;
  g.w_dec = acts.transpose() * g_recon;
  g.w_enc = centered.transpose() * g_pre;
  g.b_enc = g_pre.colwise().sum().transpose();
  g.b_dec = g_recon.colwise().sum().transpose() -
            (g_pre.colwise().sum() * sae.w_enc.transpose()).transpose();

  if (alpha != 0.0) {
    const Eigen::MatrixXd s_pre = sparsity_pre_activations(z, sae, input);
    const Eigen::MatrixXd s_active = (s_pre.array() > 0.0).cast<double>().matrix() * (alpha / n);
    const Eigen::MatrixXd& s_input = input == SparsityInput::kCentered ? centered : z;
    g.w_enc += s_input.transpose() * s_active;
    g.b_enc += s_active.colwise().sum().transpose();
    if (input == SparsityInput::kCentered) {
      g.b_dec -= (s_active.colwise().sum() * sae.w_enc.transpose()).transpose();
    }
  }
  return g;
}

SAEModel sae_sgd_step(const SAEModel& sae, const Eigen::MatrixXd& batch, double alpha,
                      double learning_rate, SparsityInput input) {
  const SAEGradient g = sae_loss_gradient(batch, sae, alpha, input);
  SAEModel next = sae;
  next.w_enc -= learning_rate * g.w_enc;
  next.w_dec -= learning_rate * g.w_dec;
  next.b_enc -= learning_rate * g.b_enc;
  next.b_dec -= learning_rate * g.b_dec;
  return next;
}

void SAETrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be >= 0");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning_rate must be > 0");
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "steps must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "holdout_fraction must be in [0, 1)");
  }
}

SAETrainResult sae_train(const Eigen::MatrixXd& activations, const SAETrainConfig& config) {
  config.validate();
  if (activations.rows() == 0) throw Error(ErrorCode::kEmptyInput, "sae_train needs a non-empty dataset");
  if (!activations.allFinite()) throw Error(ErrorCode::kInvalidArgument, "training activations must be finite");
  const Eigen::Index d = activations.cols();
  const Eigen::Index m = config.n_features > 0 ? config.n_features : 2 * d;

  const Eigen::Index n = activations.rows();
  Eigen::Index n_holdout = static_cast<Eigen::Index>(std::floor(config.holdout_fraction * static_cast<double>(n)));
  if (n_holdout >= n) n_holdout = n - 1;
  const Eigen::Index n_train = n - n_holdout;
  const Eigen::MatrixXd holdout =
      n_holdout > 0 ? Eigen::MatrixXd(activations.bottomRows(n_holdout)) : Eigen::MatrixXd(activations.topRows(n_train));

  SAETrainResult result;
  SAEModel sae = sae_init(d, m, config.seed, config.layer);
  sae.alpha = config.alpha;
  sae.sparsity_input = config.sparsity_input;
  result.initial_holdout_loss = sae_mean_loss(holdout, sae, config.alpha, config.sparsity_input).total;

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  const Eigen::Index batch_size = std::min<Eigen::Index>(config.batch_size, n_train);
  Eigen::MatrixXd batch(batch_size, d);
  for (int step = 0; step < config.steps; ++step) {
    for (Eigen::Index r = 0; r < batch_size; ++r) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.row(r) = activations.row(order[cursor++]);
    }
    sae = sae_sgd_step(sae, batch, config.alpha, config.learning_rate, config.sparsity_input);
    if (config.unit_norm_decoder) {
      for (Eigen::Index r = 0; r < sae.w_dec.rows(); ++r) {
        const double norm = sae.w_dec.row(r).norm();
        if (norm > 0.0) sae.w_dec.row(r) /= norm;
      }
    }
    if (!sae.w_enc.allFinite() || !sae.w_dec.allFinite() || !sae.b_enc.allFinite() ||
        !sae.b_dec.allFinite()) {
      throw Error(ErrorCode::kDivergence, "SAE parameters became non-finite at step " + std::to_string(step));
    }
  }
  result.final_holdout_loss = sae_mean_loss(holdout, sae, config.alpha, config.sparsity_input).total;
  if (!std::isfinite(result.final_holdout_loss)) {
    throw Error(ErrorCode::kDivergence, "SAE holdout loss is non-finite after training");
  }
  result.model = std::move(sae);
  return result;
}

double sae_mean_l0(const Eigen::MatrixXd& z, const SAEModel& sae) {
  if (z.rows() == 0) return 0.0;
  const Eigen::MatrixXd acts = sae_encode_rows(z, sae);
  return static_cast<double>((acts.array() > 0.0).count()) / static_cast<double>(z.rows());
}

FeatureVector feature_vector(const SAEModel& sae, std::int64_t index) {
  if (index < 0 || index >= sae.m()) {
    throw Error(ErrorCode::kIndexOutOfRange, "feature index " + std::to_string(index) +
                                                 " not in [0, " + std::to_string(sae.m()) + ")");
  }
  FeatureVector f;
  f.kind = FeatureKind::kBackground;
  f.layer = sae.layer;
  f.index = index;
  f.values = sae.w_dec.row(index).transpose();
  return f;
}

}  // namespace traitsteer
