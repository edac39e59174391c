#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "traitsteer/model_adapter.hpp"

namespace traitsteer {

struct ToyModelConfig {
  int n_layers = 2;
  int d_model = 32;
  int n_heads = 4;
  // Byte-level identity vocabulary: token id == byte value.
  int vocab_size = 256;
  int max_seq_len = 1024;
  int d_ff = 128;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ToyModelConfig&) const = default;
};

struct ToyBlockWeights {
  Eigen::VectorXd ln1_gain, ln1_bias;
  Eigen::MatrixXd w_q, w_k, w_v, w_o;  // d x d
  Eigen::VectorXd ln2_gain, ln2_bias;
  Eigen::MatrixXd w_in;   // d x d_ff
  Eigen::VectorXd b_in;   // d_ff
  Eigen::MatrixXd w_out;  // d_ff x d
  Eigen::VectorXd b_out;  // d
};

struct ToyWeights {
  Eigen::MatrixXd token_embedding;     // vocab x d, tied with the unembedding
  Eigen::MatrixXd position_embedding;  // max_seq_len x d
  std::vector<ToyBlockWeights> blocks;
  Eigen::VectorXd final_gain, final_bias;
};

/// Small pre-LayerNorm decoder-only transformer with learned positions and a
/// tied unembedding. Weights are drawn from `config.seed`; it is never trained.
class ToyModel final : public ModelAdapter {
 public:
  explicit ToyModel(const ToyModelConfig& config);
  ToyModel(const ToyModelConfig& config, ToyWeights weights);

  static ToyModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const ToyModelConfig& config() const { return config_; }
  const ToyWeights& weights() const { return weights_; }

  const ModelInfo& info() const override { return info_; }
  std::size_t vocab_size() const override;
  std::size_t max_sequence_length() const override;
  Tokens tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> tokens) const override;
  Eigen::VectorXd forward(std::span<const TokenId> tokens,
                          std::span<const SteeringHook> hooks,
                          const std::set<int>& capture_layers,
                          CaptureMap* captures) const override;

 private:
  ToyModelConfig config_;
  ToyWeights weights_;
  ModelInfo info_;
};

}  // namespace traitsteer
