#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "traitsteer/hook.hpp"

namespace traitsteer {

using TokenId = std::int32_t;
using Tokens = std::vector<TokenId>;

enum class Backend { kToy, kExternalPort };

struct ModelInfo {
  std::string model_id;
  int n_layers = 0;
  int d_model = 0;
  Backend backend = Backend::kToy;
};

/// Residual stream R^l at one layer. `values[b]` is the (t x d) slab for
/// batch row b.
struct ActivationCapture {
  int layer = 0;
  std::vector<Eigen::MatrixXd> values;

  std::array<Eigen::Index, 3> shape() const;
};

using CaptureMap = std::map<int, ActivationCapture>;

/// Next-token logit per option string, ordered by option.
using ChoiceLogits = std::map<std::string, double>;

/// Contract a causal LM backend must satisfy. Implementations are immutable
/// after construction and every method must be safe to call concurrently;
/// hooks travel with each call, never as adapter state.
///
/// The toy backend implements this in-process. A bridge to a real model
/// (e.g. a Gemma runtime) implements the same four entry points.
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;

  virtual const ModelInfo& info() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t max_sequence_length() const = 0;

  virtual Tokens tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const TokenId> tokens) const = 0;

  /// Runs one sequence through the model. Residuals at `capture_layers` are
  /// recorded before any hook touches them; hooks for layer l are applied to
  /// the residual leaving block l. Returns the next-token logits at the final
  /// position (length vocab_size()).
  virtual Eigen::VectorXd forward(std::span<const TokenId> tokens,
                                  std::span<const SteeringHook> hooks,
                                  const std::set<int>& capture_layers,
                                  CaptureMap* captures) const = 0;
};

Tokens tokenize(std::string_view text, const ModelAdapter& model);

CaptureMap forward_with_capture(std::span<const TokenId> tokens,
                                const std::set<int>& layers,
                                const ModelAdapter& model);

Eigen::VectorXd next_token_logits(std::span<const TokenId> tokens,
                                  std::span<const SteeringHook> hooks,
                                  const ModelAdapter& model);

/// Logit of each single-token option at the prompt's final position, after
/// the hooks are applied. Throws kMultiTokenOption for options that do not
/// map to exactly one token.
ChoiceLogits choice_logits(std::string_view prompt,
                           std::span<const std::string> options,
                           const ModelAdapter& model,
                           std::span<const SteeringHook> hooks = {});

/// Greedy decoding (lowest token id wins ties). Hooks are re-applied to the
/// full sequence at every step. Returns only the generated continuation.
std::string generate_with_hooks(std::string_view prompt,
                                std::span<const SteeringHook> hooks,
                                std::size_t max_tokens,
                                const ModelAdapter& model);

}  // namespace traitsteer
