#include "traitsteer/model_adapter.hpp"

#include <algorithm>

#include "traitsteer/error.hpp"

namespace traitsteer {

std::array<Eigen::Index, 3> ActivationCapture::shape() const {
  if (values.empty()) return {0, 0, 0};
  return {static_cast<Eigen::Index>(values.size()), values.front().rows(),
          values.front().cols()};
}

Tokens tokenize(std::string_view text, const ModelAdapter& model) {
  return model.tokenize(text);
}

CaptureMap forward_with_capture(std::span<const TokenId> tokens,
                                const std::set<int>& layers,
                                const ModelAdapter& model) {
  CaptureMap captures;
  model.forward(tokens, {}, layers, &captures);
  return captures;
}

Eigen::VectorXd next_token_logits(std::span<const TokenId> tokens,
                                  std::span<const SteeringHook> hooks,
                                  const ModelAdapter& model) {
  return model.forward(tokens, hooks, {}, nullptr);
}

ChoiceLogits choice_logits(std::string_view prompt,
                           std::span<const std::string> options,
                           const ModelAdapter& model,
                           std::span<const SteeringHook> hooks) {
  if (options.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "choice_logits needs at least one option");
  }
  std::vector<TokenId> option_ids;
  option_ids.reserve(options.size());
  for (const auto& option : options) {
    Tokens ids = option.empty() ? Tokens{} : model.tokenize(option);
    if (ids.size() != 1) {
      throw Error(ErrorCode::kMultiTokenOption,
                  "option '" + option + "' maps to " + std::to_string(ids.size()) +
                      " tokens; options must be single tokens");
    }
    option_ids.push_back(ids.front());
  }
  const Tokens tokens = model.tokenize(prompt);
  const Eigen::VectorXd logits = model.forward(tokens, hooks, {}, nullptr);
  ChoiceLogits out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    out[options[i]] = logits(option_ids[i]);
  }
  return out;
}

std::string generate_with_hooks(std::string_view prompt,
                                std::span<const SteeringHook> hooks,
                                std::size_t max_tokens,
                                const ModelAdapter& model) {
  if (max_tokens < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_tokens must be >= 1");
  }
  Tokens sequence = model.tokenize(prompt);
  const std::size_t prompt_len = sequence.size();
  if (prompt_len + max_tokens > model.max_sequence_length()) {
    throw Error(ErrorCode::kSequenceTooLong,
                "prompt plus " + std::to_string(max_tokens) +
                    " generated tokens exceeds the model context of " +
                    std::to_string(model.max_sequence_length()));
  }
  for (std::size_t step = 0; step < max_tokens; ++step) {
    const Eigen::VectorXd logits = model.forward(sequence, hooks, {}, nullptr);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i) {
      if (logits(i) > logits(best)) best = i;
    }
    sequence.push_back(static_cast<TokenId>(best));
  }
  return model.detokenize(std::span<const TokenId>(sequence).subspan(prompt_len));
}

}  // namespace traitsteer
