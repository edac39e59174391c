#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "traitsteer/hook.hpp"
#include "traitsteer/model_adapter.hpp"

namespace traitsteer {

/// Validates `layer` and the feature dimension against `model`; the position
/// rule defaults from the feature kind.
SteeringHook make_hook(const FeatureVector& feature, double coefficient, int layer,
                       const ModelAdapter& model, std::optional<PositionRule> rule = std::nullopt);

/// Choice-token logits per coefficient.
struct LikelihoodCurve {
  std::vector<double> grid;  // strictly increasing
  std::vector<std::string> options;
  std::map<std::string, std::vector<double>> logits;  // option -> one per grid point
  std::vector<std::string> chosen;                    // argmax option per grid point

  void validate() const;
};

/// Argmax over options; equal logits resolve to the alphabetically first key.
std::string choose_option(const ChoiceLogits& logits);

LikelihoodCurve coefficient_scan(const ModelAdapter& model, const FeatureVector& feature, int layer,
                                 std::span<const double> grid, std::string_view probe_prompt,
                                 std::span<const std::string> options);

/// Greedy continuation of `prompt` under the hook at every grid coefficient.
std::map<double, std::string> scan_generations(const ModelAdapter& model,
                                               const FeatureVector& feature, int layer,
                                               std::span<const double> grid,
                                               std::string_view prompt, std::size_t max_tokens);

struct OverSteerSettings {
  std::size_t window = 3;      // longest n-gram checked
  std::size_t max_repeat = 5;  // consecutive repeats tolerated
};

/// True iff some n-gram of length <= window occurs back to back more than
/// max_repeat times.
bool has_consecutive_repeats(std::span<const std::string> tokens, std::size_t window,
                             std::size_t max_repeat);

/// Repetition check on whitespace-delimited words, and on characters to catch
/// degenerate output with no whitespace at all.
bool over_steer_detect(std::string_view text, std::size_t window = 3, std::size_t max_repeat = 5);

/// Largest grid coefficient whose generation is clean and whose chosen option
/// is constant over the last `stability_window` grid points ending at it
/// (truncated at the start of the grid).
double select_coefficient(const LikelihoodCurve& curve,
                          const std::map<double, std::string>& generations,
                          std::size_t stability_window = 3, OverSteerSettings settings = {});

/// start, start+step, ..., up to stop inclusive; values rounded to 1e-9 so
/// decimal steps print cleanly.
std::vector<double> make_grid(double start, double stop, double step);

struct GridSpec {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  std::vector<double> values() const { return make_grid(start, stop, step); }
};

/// Layer and coefficients chosen for one model.
struct ModelProfile {
  std::string name;
  int layer = 0;
  double background_coefficient = 0.0;
  double pressure_coefficient = 0.0;
  GridSpec background_grid{0.0, 2000.0, 100.0};
  GridSpec pressure_grid{0.0, 10.0, 0.2};
};

/// Reference settings: Gemma-2B-Instruct (layer 12, 200 / 1.6) and
/// Gemma-2-9B-Instruct (layer 31, 800 / 1.8).
ModelProfile gemma_2b_it_profile();
ModelProfile gemma_2_9b_it_profile();
std::optional<ModelProfile> builtin_profile(std::string_view name);

/// coefficient,option,logit rows in grid order then option order.
std::string curve_to_csv(const LikelihoodCurve& curve);

}  // namespace traitsteer
