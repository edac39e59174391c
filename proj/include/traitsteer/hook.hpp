#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace traitsteer {

enum class FeatureKind { kBackground, kPressure };

const char* to_string(FeatureKind kind) noexcept;

/// A direction in residual space. Background features are SAE decoder rows
/// (index = row); pressure features are extracted unit directions (index -1).
struct FeatureVector {
  FeatureKind kind = FeatureKind::kBackground;
  int layer = 0;
  std::int64_t index = -1;
  std::string explanation;
  Eigen::VectorXd values;
};

enum class PositionRule {
  kAllButLast,  // R[:, :t-1, :] += c f
  kLastOnly,    // R[:, t-1, :]  += c f
};

const char* to_string(PositionRule rule) noexcept;

/// Background features steer every position but the last; pressure features
/// steer only the last position.
PositionRule default_position_rule(FeatureKind kind) noexcept;

struct SteeringHook {
  FeatureVector feature;
  double coefficient = 0.0;
  int layer = 0;
  PositionRule rule = PositionRule::kAllButLast;
};

/// Adds `coefficient * feature` to the rows of `residual` (t x d, one row per
/// position) selected by the hook's position rule. A zero coefficient leaves
/// the tensor untouched bit for bit.
void apply_hook(const SteeringHook& hook, Eigen::Ref<Eigen::MatrixXd> residual);

}  // namespace traitsteer
