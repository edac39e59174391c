#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "traitsteer/background_features.hpp"
#include "traitsteer/sae.hpp"
#include "traitsteer/toy_model.hpp"

namespace tsupport {

using namespace traitsteer;

inline ToyModel toy(int n_layers = 2, int d_model = 16, std::uint64_t seed = 1, int d_ff = 32) {
  ToyModelConfig c;
  c.n_layers = n_layers;
  c.d_model = d_model;
  c.n_heads = 4;
  c.d_ff = d_ff;
  c.max_seq_len = 512;
  c.seed = seed;
  return ToyModel(c);
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                                     double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("traitsteer-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Factors whose home phrases carry a marker byte, plus an SAE with one
/// detector per marker, an always-on feature and dead padding.
struct PlantedBackground {
  ToyModel model;
  SAEModel sae;
  std::vector<FactorSpec> specs;
  std::int64_t warm_feature = 1;
  std::int64_t big_feature = 2;
  std::int64_t dense_feature = 3;
};

inline std::vector<FactorSpec> planted_specs() {
  return {
      {"Tone",
       {{"warm", {"a ~kind~ voice", "soft ~glow~ here", "gentle words ~ always"}},
        {"cold", {"a harsh voice", "frost on the glass", "blunt words always"}}}},
      {"Size",
       {{"big", {"a ^huge^ hall", "vast ^open^ plains", "giant steps ^"}},
        {"small", {"a tiny room", "narrow lanes", "little steps"}}}},
  };
}

/// Encoder column for a byte detector on `rows`: the marker-vs-rest mean
/// difference, thresholded just above every non-marker row.
inline void plant_detector(SAEModel& sae, std::int64_t feature, char marker,
                           const std::vector<std::pair<Eigen::MatrixXd, std::string>>& captured) {
  const Eigen::Index d = sae.d();
  Eigen::VectorXd on = Eigen::VectorXd::Zero(d), off = Eigen::VectorXd::Zero(d);
  double n_on = 0, n_off = 0;
  for (const auto& [rows, text] : captured) {
    for (Eigen::Index t = 0; t < rows.rows(); ++t) {
      if (text[static_cast<std::size_t>(t)] == marker) {
        on += rows.row(t).transpose();
        n_on += 1;
      } else {
        off += rows.row(t).transpose();
        n_off += 1;
      }
    }
  }
  Eigen::VectorXd w = on / n_on - off / n_off;
  w.normalize();
  double max_off = -1e300;
  for (const auto& [rows, text] : captured) {
    for (Eigen::Index t = 0; t < rows.rows(); ++t) {
      if (text[static_cast<std::size_t>(t)] != marker) max_off = std::max(max_off, rows.row(t).dot(w));
    }
  }
  sae.w_enc.col(feature) = w;
  sae.b_enc(feature) = -(max_off + 1e-3);
}

inline PlantedBackground planted_background() {
  PlantedBackground p{toy(1, 32, 11, 64), {}, planted_specs()};
  const Eigen::Index d = 32, m = 64;
  std::mt19937_64 rng(5);
  p.sae.w_enc = Eigen::MatrixXd::Zero(d, m);
  p.sae.w_dec = random_matrix(rng, m, d);
  p.sae.w_dec.rowwise().normalize();
  p.sae.b_enc = Eigen::VectorXd::Constant(m, -1e6);  // dead unless planted
  p.sae.b_dec = Eigen::VectorXd::Zero(d);
  p.sae.layer = 0;
  p.sae.id = "planted";

  std::vector<std::pair<Eigen::MatrixXd, std::string>> captured;
  for (const auto& spec : p.specs) {
    for (const auto& phrase : spec.all_phrases()) {
      CaptureMap caps = forward_with_capture(p.model.tokenize(phrase), {0}, p.model);
      captured.emplace_back(caps.at(0).values.front(), phrase);
    }
  }
  plant_detector(p.sae, p.warm_feature, '~', captured);
  plant_detector(p.sae, p.big_feature, '^', captured);
  p.sae.b_enc(p.dense_feature) = 1.0;  // zero weights: constant activation 1
  return p;
}

}  // namespace tsupport
