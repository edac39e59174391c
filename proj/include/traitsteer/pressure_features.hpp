#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "traitsteer/hook.hpp"
#include "traitsteer/model_adapter.hpp"

namespace traitsteer {

/// Persona prompts that push toward (positive) and away from (negative) one
/// short-term pressure such as "Competence".
struct ContrastPair {
  std::string pressure;
  std::string negative;
  std::string positive;

  void validate() const;
};

struct Stimulus {
  int polarity = 0;  // +1 positive, -1 negative
  std::string text;
  std::size_t question = 0;
};

struct StimulusSet {
  std::string pressure;
  std::vector<Stimulus> items;
};

/// Question-major, negative before positive; text is "<prompt> <question>".
StimulusSet build_contrast_dataset(const ContrastPair& pair, std::span<const std::string> questions);

struct LastTokenActivations {
  std::vector<Eigen::VectorXd> positive;
  std::vector<Eigen::VectorXd> negative;
};

/// Residual at `layer`, final position, one vector per stimulus in input order.
LastTokenActivations capture_last_token_activations(const StimulusSet& stimuli, int layer,
                                                    const ModelAdapter& model);

struct DirectionDiagnostics {
  double explained_variance = 0.0;  // share of the leading component
  double sign_alignment = 0.0;      // cos(direction, mean difference)
};

struct DirectionResult {
  FeatureVector direction;  // kind = pressure, unit norm
  int layer = 0;
  DirectionDiagnostics diagnostics;
};

/// Unit direction separating positive from negative activations. The i-th
/// positive and negative vectors are treated as a pair; the direction is the
/// leading principal axis of the pair differences, oriented so the positive
/// mean projects above the negative mean. Throws kZeroDifference when the
/// means coincide.
DirectionResult direction_extract(std::span<const Eigen::VectorXd> positive,
                                  std::span<const Eigen::VectorXd> negative, int layer = 0,
                                  const std::string& pressure = {});

std::vector<ContrastPair> load_contrast_pairs(const std::filesystem::path& path);

/// One question per line (blank lines and lines starting with '#' skipped),
/// or, for .jsonl files, the "question" field of each record.
std::vector<std::string> load_questions(const std::filesystem::path& path);

}  // namespace traitsteer
