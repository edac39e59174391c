#include "traitsteer/steering.hpp"

#include <cmath>
#include <sstream>

#include "traitsteer/error.hpp"
#include "traitsteer/io.hpp"

namespace traitsteer {

SteeringHook make_hook(const FeatureVector& feature, double coefficient, int layer,
                       const ModelAdapter& model, std::optional<PositionRule> rule) {
  if (layer < 0 || layer >= model.info().n_layers) {
    throw Error(ErrorCode::kLayerOutOfRange, "hook layer " + std::to_string(layer) + " not in [0, " +
                                                 std::to_string(model.info().n_layers) + ")");
  }
  if (feature.values.size() != model.info().d_model) {
    throw Error(ErrorCode::kDimensionMismatch, "feature dimension " +
                                                   std::to_string(feature.values.size()) +
                                                   " != d_model " + std::to_string(model.info().d_model));
  }
  if (!std::isfinite(coefficient)) {
    throw Error(ErrorCode::kInvalidArgument, "steering coefficient must be finite");
  }
  return SteeringHook{feature, coefficient, layer, rule.value_or(default_position_rule(feature.kind))};
}

void LikelihoodCurve::validate() const {
  if (grid.empty()) throw Error(ErrorCode::kInvalidArgument, "likelihood curve has no grid points");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument, "coefficient grid must be strictly increasing");
    }
  }
  if (chosen.size() != grid.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one chosen option per grid point required");
  }
  for (const auto& option : options) {
    auto it = logits.find(option);
    if (it == logits.end() || it->second.size() != grid.size()) {
      throw Error(ErrorCode::kInvalidArgument, "option '" + option + "' needs one logit per grid point");
    }
  }
}

std::string choose_option(const ChoiceLogits& logits) {
  if (logits.empty()) throw Error(ErrorCode::kInvalidArgument, "no options to choose from");
  // std::map iterates keys in order, so strict '>' keeps the first key on ties.
  auto best = logits.begin();
  for (auto it = logits.begin(); it != logits.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

LikelihoodCurve coefficient_scan(const ModelAdapter& model, const FeatureVector& feature, int layer,
                                 std::span<const double> grid, std::string_view probe_prompt,
                                 std::span<const std::string> options) {
  LikelihoodCurve curve;
  curve.grid.assign(grid.begin(), grid.end());
  curve.options.assign(options.begin(), options.end());
  if (curve.grid.empty()) throw Error(ErrorCode::kInvalidArgument, "coefficient grid is empty");
  for (std::size_t i = 1; i < curve.grid.size(); ++i) {
    if (!(curve.grid[i] > curve.grid[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument, "coefficient grid must be strictly increasing");
    }
  }
  for (const auto& option : options) curve.logits[option].reserve(grid.size());
  for (double c : curve.grid) {
    const SteeringHook hook = make_hook(feature, c, layer, model);
    const ChoiceLogits logits = choice_logits(probe_prompt, options, model, std::span(&hook, 1));
    for (const auto& [option, value] : logits) curve.logits[option].push_back(value);
    curve.chosen.push_back(choose_option(logits));
  }
  return curve;
}

std::map<double, std::string> scan_generations(const ModelAdapter& model,
                                               const FeatureVector& feature, int layer,
                                               std::span<const double> grid,
                                               std::string_view prompt, std::size_t max_tokens) {
  std::map<double, std::string> out;
  for (double c : grid) {
    const SteeringHook hook = make_hook(feature, c, layer, model);
    out[c] = generate_with_hooks(prompt, std::span(&hook, 1), max_tokens, model);
  }
  return out;
}

bool has_consecutive_repeats(std::span<const std::string> tokens, std::size_t window,
                             std::size_t max_repeat) {
  if (window < 1) throw Error(ErrorCode::kInvalidArgument, "window must be >= 1");
  const std::size_t n = tokens.size();
  for (std::size_t len = 1; len <= window; ++len) {
    if (len * (max_repeat + 1) > n) break;
    for (std::size_t start = 0; start + len <= n; ++start) {
      std::size_t repeats = 1;
      std::size_t next = start + len;
      while (next + len <= n &&
             std::equal(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                        tokens.begin() + static_cast<std::ptrdiff_t>(start + len),
                        tokens.begin() + static_cast<std::ptrdiff_t>(next))) {
        ++repeats;
        next += len;
      }
      if (repeats > max_repeat) return true;
    }
  }
  return false;
}

bool over_steer_detect(std::string_view text, std::size_t window, std::size_t max_repeat) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) words.push_back(std::move(w));
  if (has_consecutive_repeats(words, window, max_repeat)) return true;

  std::vector<std::string> chars;
  chars.reserve(text.size());
  for (char c : text) chars.emplace_back(1, c);
  return has_consecutive_repeats(chars, window, max_repeat);
}

double select_coefficient(const LikelihoodCurve& curve,
                          const std::map<double, std::string>& generations,
                          std::size_t stability_window, OverSteerSettings settings) {
  curve.validate();
  if (stability_window < 1) throw Error(ErrorCode::kInvalidArgument, "stability window must be >= 1");
  for (std::size_t i = curve.grid.size(); i-- > 0;) {
    const double c = curve.grid[i];
    auto gen = generations.find(c);
    if (gen == generations.end()) {
      throw Error(ErrorCode::kInvalidArgument, "no generation recorded for coefficient " + format_double(c));
    }
    if (over_steer_detect(gen->second, settings.window, settings.max_repeat)) continue;
    const std::size_t first = i + 1 >= stability_window ? i + 1 - stability_window : 0;
    bool stable = true;
    for (std::size_t j = first; j < i; ++j) stable = stable && curve.chosen[j] == curve.chosen[i];
    if (stable) return c;
  }
  throw Error(ErrorCode::kNoAdmissibleCoefficient,
              "every grid coefficient over-steers or has an unstable choice");
}

std::vector<double> make_grid(double start, double stop, double step) {
  if (!(step > 0.0) || !(stop >= start) || !std::isfinite(start) || !std::isfinite(stop)) {
    throw Error(ErrorCode::kInvalidArgument, "grid needs finite start <= stop and step > 0");
  }
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> grid;
  grid.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    grid.push_back(std::round((start + static_cast<double>(i) * step) * 1e9) / 1e9);
  }
  return grid;
}

ModelProfile gemma_2b_it_profile() {
  ModelProfile p;
  p.name = "gemma-2b-it";
  p.layer = 12;
  p.background_coefficient = 200.0;
  p.pressure_coefficient = 1.6;
  return p;
}

ModelProfile gemma_2_9b_it_profile() {
  ModelProfile p;
  p.name = "gemma-2-9b-it";
  p.layer = 31;
  p.background_coefficient = 800.0;
  p.pressure_coefficient = 1.8;
  return p;
}

std::optional<ModelProfile> builtin_profile(std::string_view name) {
  if (name == "gemma-2b-it") return gemma_2b_it_profile();
  if (name == "gemma-2-9b-it") return gemma_2_9b_it_profile();
  return std::nullopt;
}

std::string curve_to_csv(const LikelihoodCurve& curve) {
  curve.validate();
  std::string out = "coefficient,option,logit\n";
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    for (const auto& option : curve.options) {
      out += format_double(curve.grid[i]) + "," + option + "," +
             format_double(curve.logits.at(option)[i]) + "\n";
    }
  }
  return out;
}

}  // namespace traitsteer
