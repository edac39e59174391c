#pragma once

// Reference implementations written with explicit loops, kept independent of
// the library code they check.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "traitsteer/assessment.hpp"
#include "traitsteer/sae.hpp"

namespace oracle {

using traitsteer::SAEModel;
using traitsteer::SparsityInput;

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline std::vector<double> encode(const std::vector<double>& z, const SAEModel& s) {
  const auto d = static_cast<std::size_t>(s.d()), m = static_cast<std::size_t>(s.m());
  std::vector<double> a(m);
  for (std::size_t j = 0; j < m; ++j) {
    double acc = s.b_enc(static_cast<Eigen::Index>(j));
    for (std::size_t i = 0; i < d; ++i) {
      acc += (z[i] - s.b_dec(static_cast<Eigen::Index>(i))) *
             s.w_enc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    a[j] = relu(acc);
  }
  return a;
}

inline std::vector<double> decode(const std::vector<double>& a, const SAEModel& s) {
  const auto d = static_cast<std::size_t>(s.d()), m = static_cast<std::size_t>(s.m());
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = s.b_dec(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < m; ++j) {
      acc += a[j] * s.w_dec(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    }
    out[i] = acc;
  }
  return out;
}

/// Per-sample loss: squared reconstruction error plus alpha times the L1 of
/// ReLU(x W_enc + b_enc), with x = z (raw) or z - b_dec (centered).
inline double loss(const std::vector<double>& z, const SAEModel& s, double alpha, SparsityInput input) {
  const auto d = static_cast<std::size_t>(s.d()), m = static_cast<std::size_t>(s.m());
  const std::vector<double> recon = decode(encode(z, s), s);
  double rec = 0.0;
  for (std::size_t i = 0; i < d; ++i) rec += (z[i] - recon[i]) * (z[i] - recon[i]);
  double l1 = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double acc = s.b_enc(static_cast<Eigen::Index>(j));
    for (std::size_t i = 0; i < d; ++i) {
      const double x = input == SparsityInput::kRaw ? z[i] : z[i] - s.b_dec(static_cast<Eigen::Index>(i));
      acc += x * s.w_enc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    l1 += relu(acc);
  }
  return rec + alpha * l1;
}

inline double mean_loss(const Eigen::MatrixXd& z, const SAEModel& s, double alpha, SparsityInput input) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index c = 0; c < z.cols(); ++c) row[static_cast<std::size_t>(c)] = z(r, c);
    total += loss(row, s, alpha, input);
  }
  return total / static_cast<double>(z.rows());
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

/// Synthetic activations: each of k unit directions switches on with
/// probability p and amplitude U(0.5, 1.5).
struct PlantedData {
  Eigen::MatrixXd directions;  // k x d
  Eigen::MatrixXd samples;     // n x d
};

inline PlantedData planted_data(int d, int k, int n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlantedData out;
  out.directions.resize(k, d);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < d; ++j) out.directions(i, j) = g(rng);
    out.directions.row(i).normalize();
  }
  out.samples = Eigen::MatrixXd::Zero(n, d);
  for (int r = 0; r < n; ++r) {
    for (int i = 0; i < k; ++i) {
      if (u(rng) < p) out.samples.row(r) += (0.5 + u(rng)) * out.directions.row(i);
    }
  }
  return out;
}

/// For each planted direction, the best cosine against any decoder row.
inline std::vector<double> best_cosines(const Eigen::MatrixXd& planted, const Eigen::MatrixXd& w_dec) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < planted.rows(); ++i) {
    double best = -1.0;
    for (Eigen::Index r = 0; r < w_dec.rows(); ++r) {
      const double nr = w_dec.row(r).norm();
      if (nr == 0.0) continue;
      best = std::max(best, w_dec.row(r).dot(planted.row(i)) / (nr * planted.row(i).norm()));
    }
    out.push_back(best);
  }
  return out;
}

/// Brute-force scoring: per subscale, 100 * aligned / total.
inline std::map<std::string, double> count_scores(const std::vector<traitsteer::AssessmentItem>& items,
                                                  const std::map<std::string, std::string>& answers) {
  std::map<std::string, int> aligned, total;
  for (const auto& item : items) {
    total[item.subscale] += 1;
    if (item.aligned_keys.count(answers.at(item.id))) aligned[item.subscale] += 1;
  }
  std::map<std::string, double> out;
  for (const auto& [s, n] : total) out[s] = 100.0 * aligned[s] / n;
  return out;
}

/// Largest consecutive run of any n-gram with n <= window.
inline std::size_t longest_ngram_run(const std::vector<std::string>& toks, std::size_t window) {
  std::size_t best = toks.empty() ? 0 : 1;
  for (std::size_t n = 1; n <= window; ++n) {
    for (std::size_t s = 0; s + n <= toks.size(); ++s) {
      std::size_t run = 1;
      for (std::size_t next = s + n; next + n <= toks.size(); next += n) {
        bool same = true;
        for (std::size_t q = 0; q < n; ++q) same = same && toks[s + q] == toks[next + q];
        if (!same) break;
        ++run;
      }
      best = std::max(best, run);
    }
  }
  return best;
}

}  // namespace oracle
