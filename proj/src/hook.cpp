#include "traitsteer/hook.hpp"

#include "traitsteer/error.hpp"

namespace traitsteer {

const char* to_string(FeatureKind kind) noexcept {
  return kind == FeatureKind::kBackground ? "background" : "pressure";
}

const char* to_string(PositionRule rule) noexcept {
  return rule == PositionRule::kAllButLast ? "all_but_last" : "last_only";
}

PositionRule default_position_rule(FeatureKind kind) noexcept {
  return kind == FeatureKind::kBackground ? PositionRule::kAllButLast
                                          : PositionRule::kLastOnly;
}

void apply_hook(const SteeringHook& hook, Eigen::Ref<Eigen::MatrixXd> residual) {
  if (hook.feature.values.size() != residual.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "hook feature has dimension " + std::to_string(hook.feature.values.size()) +
                    ", residual has " + std::to_string(residual.cols()));
  }
  // Adding +0.0 would turn -0.0 entries into +0.0.
  if (hook.coefficient == 0.0) return;
  const Eigen::Index t = residual.rows();
  if (t == 0) return;
  const Eigen::RowVectorXd delta = hook.coefficient * hook.feature.values.transpose();
  if (hook.rule == PositionRule::kAllButLast) {
    residual.topRows(t - 1).rowwise() += delta;
  } else {
    residual.row(t - 1) += delta;
  }
}

}  // namespace traitsteer
