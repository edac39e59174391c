#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "traitsteer/model_adapter.hpp"
#include "traitsteer/registry.hpp"
#include "traitsteer/sae.hpp"

namespace traitsteer {

struct FactorCategory {
  std::string name;
  std::vector<std::string> phrases;
};

/// One background factor and its descriptor phrases per category.
struct FactorSpec {
  std::string factor;
  std::vector<FactorCategory> categories;

  std::vector<std::string> all_phrases() const;
  void validate() const;
};

/// Parses a factor file. Each factor maps either to an object
/// {category: phrases} or to a list of categories (named "category_<i>").
/// A category's phrases are a list of strings or one multi-line string with
/// one descriptor per line.
std::vector<FactorSpec> parse_factor_specs(std::string_view json_text, const std::string& source);
std::vector<FactorSpec> load_factor_specs(const std::filesystem::path& path);

/// Splits a multi-line descriptor block into trimmed, non-empty lines.
std::vector<std::string> split_descriptor_block(std::string_view block);

/// Residual rows at `layer` for every token position of every text, stacked
/// in input order. Used as SAE training data.
Eigen::MatrixXd collect_residual_rows(std::span<const std::string> texts, int layer,
                                      const ModelAdapter& model);

struct SearchThresholds {
  double tau_on = 0.1;
  double tau_off = 1e-6;
};

/// SAE encoding of `phrase` at sae.layer, max-pooled over token positions.
Eigen::VectorXd pooled_encoding(const std::string& phrase, const SAEModel& sae,
                                const ModelAdapter& model);

/// Mean over phrases of the max-pooled SAE encoding (length m, >= 0).
Eigen::VectorXd activation_profile(std::span<const std::string> phrases, const SAEModel& sae,
                                   const ModelAdapter& model);

/// Indices with pos >= tau_on and neg <= tau_off, ranked by pos - neg
/// descending, ties by ascending index, truncated to k.
std::vector<std::int64_t> rank_contrastive(const Eigen::VectorXd& pos_profile,
                                           const Eigen::VectorXd& neg_profile, double tau_on,
                                           double tau_off, std::size_t k);

std::vector<std::int64_t> contrastive_feature_search(std::span<const std::string> pos_phrases,
                                                     std::span<const std::string> neg_phrases,
                                                     const SAEModel& sae, const ModelAdapter& model,
                                                     double tau_on, double tau_off, std::size_t k);

struct MonosemanticityResult {
  bool pass = true;
  std::vector<std::string> offending_factors;
};

/// Passes iff the feature's profile over every other factor's phrases stays
/// at or below tau_off.
MonosemanticityResult monosemanticity_check(std::int64_t feature, const std::string& home_factor,
                                            std::span<const FactorSpec> all_specs,
                                            const SAEModel& sae, const ModelAdapter& model,
                                            double tau_off);

/// Names a feature. The default returns "feature-<idx>"; an LLM-backed
/// explainer can be plugged in here.
using Explainer = std::function<std::string(std::int64_t index, const std::string& factor,
                                            const std::string& category)>;

std::string default_explanation(std::int64_t index, const std::string& factor,
                                const std::string& category);

struct RegistryBuildOptions {
  SearchThresholds thresholds;
  std::size_t k = 2;
  Explainer explainer = default_explanation;
  std::string sae_id;
};

/// Runs the contrastive search (or, for single-category factors, a plain
/// activation search) per category, keeps the monosemantic survivors, and
/// records the top k. Empty categories are kept and reported in `warnings`.
FactorRegistry build_factor_registry(std::span<const FactorSpec> specs, const SAEModel& sae,
                                     const ModelAdapter& model, const RegistryBuildOptions& options,
                                     std::vector<std::string>* warnings = nullptr);

}  // namespace traitsteer
