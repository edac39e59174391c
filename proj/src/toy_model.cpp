#include "traitsteer/toy_model.hpp"

#include <cmath>
#include <random>

#include "traitsteer/error.hpp"
#include "traitsteer/io.hpp"

namespace traitsteer {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr const char* kCheckpointFormat = "traitsteer-toy-lm";

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

// Row-wise LayerNorm over the feature dimension.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                           const Eigen::VectorXd& bias) {
  const double d = static_cast<double>(x.cols());
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / d;
    const Eigen::RowVectorXd centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / d;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    out.row(r) = (centered * inv).cwiseProduct(gain.transpose()) + bias.transpose();
  }
  return out;
}

double gelu(double x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

Eigen::MatrixXd causal_attention(const Eigen::MatrixXd& h, const ToyBlockWeights& w, int n_heads) {
  const Eigen::Index t = h.rows();
  const Eigen::Index d = h.cols();
  const Eigen::Index head_dim = d / n_heads;
  const Eigen::MatrixXd q = h * w.w_q;
  const Eigen::MatrixXd k = h * w.w_k;
  const Eigen::MatrixXd v = h * w.w_v;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Eigen::MatrixXd mixed(t, d);
  Eigen::VectorXd weights(t);
  for (int head = 0; head < n_heads; ++head) {
    const Eigen::Index off = head * head_dim;
    const auto qh = q.middleCols(off, head_dim);
    const auto kh = k.middleCols(off, head_dim);
    const auto vh = v.middleCols(off, head_dim);
    for (Eigen::Index i = 0; i < t; ++i) {
      double max_score = -INFINITY;
      for (Eigen::Index j = 0; j <= i; ++j) {
        weights(j) = qh.row(i).dot(kh.row(j)) * scale;
        max_score = std::max(max_score, weights(j));
      }
      double total = 0.0;
      for (Eigen::Index j = 0; j <= i; ++j) {
        weights(j) = std::exp(weights(j) - max_score);
        total += weights(j);
      }
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(head_dim);
      for (Eigen::Index j = 0; j <= i; ++j) acc += (weights(j) / total) * vh.row(j);
      mixed.block(i, off, 1, head_dim) = acc;
    }
  }
  return mixed * w.w_o;
}

Json tensor_entry(const std::string& name, const Eigen::MatrixXd& m) {
  return Json{{"name", name}, {"shape", {m.rows(), m.cols()}}, {"data", matrix_to_json(m)}};
}

Json tensor_entry(const std::string& name, const Eigen::VectorXd& v) {
  return Json{{"name", name}, {"shape", {v.size()}}, {"data", vector_to_json(v)}};
}

}  // namespace

void ToyModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, "toy config: " + msg); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (d_model < 1) fail("d_model must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  // 'A'..'D' are byte ids 65..68; ASCII coverage keeps prompts tokenizable.
  if (vocab_size < 128 || vocab_size > 256) fail("vocab_size must be in [128, 256]");
  if (max_seq_len < 1) fail("max_seq_len must be >= 1");
  if (d_ff < 1) fail("d_ff must be >= 1");
}

ToyModel::ToyModel(const ToyModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const int d = config_.d_model;
  const double attn_std = 1.0 / std::sqrt(static_cast<double>(d));
  weights_.token_embedding = gaussian(rng, config_.vocab_size, d, 1.0);
  weights_.position_embedding = gaussian(rng, config_.max_seq_len, d, 0.2);
  for (int l = 0; l < config_.n_layers; ++l) {
    ToyBlockWeights b;
    b.ln1_gain = Eigen::VectorXd::Ones(d);
    b.ln1_bias = Eigen::VectorXd::Zero(d);
    b.w_q = gaussian(rng, d, d, attn_std);
    b.w_k = gaussian(rng, d, d, attn_std);
    b.w_v = gaussian(rng, d, d, attn_std);
    b.w_o = gaussian(rng, d, d, 0.5 * attn_std);
    b.ln2_gain = Eigen::VectorXd::Ones(d);
    b.ln2_bias = Eigen::VectorXd::Zero(d);
    b.w_in = gaussian(rng, d, config_.d_ff, attn_std);
    b.b_in = Eigen::VectorXd::Zero(config_.d_ff);
    b.w_out = gaussian(rng, config_.d_ff, d, 0.5 / std::sqrt(static_cast<double>(config_.d_ff)));
    b.b_out = Eigen::VectorXd::Zero(d);
    weights_.blocks.push_back(std::move(b));
  }
  weights_.final_gain = Eigen::VectorXd::Ones(d);
  weights_.final_bias = Eigen::VectorXd::Zero(d);
  info_ = ModelInfo{"toy-l" + std::to_string(config_.n_layers) + "-d" + std::to_string(d) +
                        "-s" + std::to_string(config_.seed),
                    config_.n_layers, d, Backend::kToy};
}

ToyModel::ToyModel(const ToyModelConfig& config, ToyWeights weights)
    : config_(config), weights_(std::move(weights)) {
  config_.validate();
  const Eigen::Index d = config_.d_model;
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kSchema, "toy weights: bad shape for " + what);
  };
  check(weights_.token_embedding.rows() == config_.vocab_size && weights_.token_embedding.cols() == d,
        "token_embedding");
  check(weights_.position_embedding.rows() == config_.max_seq_len &&
            weights_.position_embedding.cols() == d,
        "position_embedding");
  check(static_cast<int>(weights_.blocks.size()) == config_.n_layers, "blocks");
  for (const auto& b : weights_.blocks) {
    check(b.w_q.rows() == d && b.w_q.cols() == d && b.w_k.rows() == d && b.w_k.cols() == d &&
              b.w_v.rows() == d && b.w_v.cols() == d && b.w_o.rows() == d && b.w_o.cols() == d,
          "attention");
    check(b.ln1_gain.size() == d && b.ln1_bias.size() == d && b.ln2_gain.size() == d &&
              b.ln2_bias.size() == d,
          "layer norm");
    check(b.w_in.rows() == d && b.w_in.cols() == config_.d_ff && b.b_in.size() == config_.d_ff &&
              b.w_out.rows() == config_.d_ff && b.w_out.cols() == d && b.b_out.size() == d,
          "mlp");
  }
  check(weights_.final_gain.size() == d && weights_.final_bias.size() == d, "final layer norm");
  info_ = ModelInfo{"toy-l" + std::to_string(config_.n_layers) + "-d" + std::to_string(d) + "-s" +
                        std::to_string(config_.seed),
                    config_.n_layers, config_.d_model, Backend::kToy};
}

std::size_t ToyModel::vocab_size() const { return static_cast<std::size_t>(config_.vocab_size); }

std::size_t ToyModel::max_sequence_length() const {
  return static_cast<std::size_t>(config_.max_seq_len);
}

Tokens ToyModel::tokenize(std::string_view text) const {
  if (text.empty()) throw Error(ErrorCode::kEmptyInput, "cannot tokenize empty text");
  Tokens ids;
  ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto byte = static_cast<unsigned char>(text[i]);
    if (byte >= config_.vocab_size) {
      throw Error(ErrorCode::kUnknownSymbol, "byte " + std::to_string(byte) + " at offset " +
                                                 std::to_string(i) + " is outside the toy vocabulary");
    }
    ids.push_back(static_cast<TokenId>(byte));
  }
  return ids;
}

std::string ToyModel::detokenize(std::span<const TokenId> tokens) const {
  std::string out;
  out.reserve(tokens.size());
  for (TokenId id : tokens) {
    if (id < 0 || id >= config_.vocab_size) {
      throw Error(ErrorCode::kUnknownSymbol, "token id " + std::to_string(id) + " out of range");
    }
    out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return out;
}

Eigen::VectorXd ToyModel::forward(std::span<const TokenId> tokens,
                                  std::span<const SteeringHook> hooks,
                                  const std::set<int>& capture_layers,
                                  CaptureMap* captures) const {
  if (tokens.empty()) throw Error(ErrorCode::kEmptyInput, "forward needs at least one token");
  if (tokens.size() > max_sequence_length()) {
    throw Error(ErrorCode::kSequenceTooLong, "sequence of " + std::to_string(tokens.size()) +
                                                 " tokens exceeds max_seq_len " +
                                                 std::to_string(config_.max_seq_len));
  }
  for (int layer : capture_layers) {
    if (layer < 0 || layer >= config_.n_layers) {
      throw Error(ErrorCode::kLayerOutOfRange, "capture layer " + std::to_string(layer) +
                                                   " not in [0, " + std::to_string(config_.n_layers) + ")");
    }
  }
  for (const auto& hook : hooks) {
    if (hook.layer < 0 || hook.layer >= config_.n_layers) {
      throw Error(ErrorCode::kLayerOutOfRange, "hook layer " + std::to_string(hook.layer) +
                                                   " not in [0, " + std::to_string(config_.n_layers) + ")");
    }
  }
  if (!capture_layers.empty() && captures == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "capture layers requested without a capture map");
  }

  const Eigen::Index t = static_cast<Eigen::Index>(tokens.size());
  Eigen::MatrixXd x(t, config_.d_model);
  for (Eigen::Index i = 0; i < t; ++i) {
    const TokenId id = tokens[static_cast<std::size_t>(i)];
    if (id < 0 || id >= config_.vocab_size) {
      throw Error(ErrorCode::kUnknownSymbol, "token id " + std::to_string(id) + " out of range");
    }
    x.row(i) = weights_.token_embedding.row(id) + weights_.position_embedding.row(i);
  }

  for (int l = 0; l < config_.n_layers; ++l) {
    const ToyBlockWeights& b = weights_.blocks[static_cast<std::size_t>(l)];
    x += causal_attention(layer_norm(x, b.ln1_gain, b.ln1_bias), b, config_.n_heads);
    Eigen::MatrixXd pre = layer_norm(x, b.ln2_gain, b.ln2_bias) * b.w_in;
    pre.rowwise() += b.b_in.transpose();
    Eigen::MatrixXd mlp = pre.unaryExpr([](double v) { return gelu(v); }) * b.w_out;
    mlp.rowwise() += b.b_out.transpose();
    x += mlp;

    if (capture_layers.count(l) != 0) {
      (*captures)[l] = ActivationCapture{l, {x}};
    }
    for (const auto& hook : hooks) {
      if (hook.layer == l) apply_hook(hook, x);
    }
  }

  const Eigen::MatrixXd last = layer_norm(x.bottomRows(1), weights_.final_gain, weights_.final_bias);
  return weights_.token_embedding * last.row(0).transpose();
}

void ToyModel::save(const std::filesystem::path& path) const {
  Json tensors = Json::array();
  tensors.push_back(tensor_entry("token_embedding", weights_.token_embedding));
  tensors.push_back(tensor_entry("position_embedding", weights_.position_embedding));
  for (std::size_t l = 0; l < weights_.blocks.size(); ++l) {
    const auto& b = weights_.blocks[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    tensors.push_back(tensor_entry(p + "ln1_gain", b.ln1_gain));
    tensors.push_back(tensor_entry(p + "ln1_bias", b.ln1_bias));
    tensors.push_back(tensor_entry(p + "w_q", b.w_q));
    tensors.push_back(tensor_entry(p + "w_k", b.w_k));
    tensors.push_back(tensor_entry(p + "w_v", b.w_v));
    tensors.push_back(tensor_entry(p + "w_o", b.w_o));
    tensors.push_back(tensor_entry(p + "ln2_gain", b.ln2_gain));
    tensors.push_back(tensor_entry(p + "ln2_bias", b.ln2_bias));
    tensors.push_back(tensor_entry(p + "w_in", b.w_in));
    tensors.push_back(tensor_entry(p + "b_in", b.b_in));
    tensors.push_back(tensor_entry(p + "w_out", b.w_out));
    tensors.push_back(tensor_entry(p + "b_out", b.b_out));
  }
  tensors.push_back(tensor_entry("final_gain", weights_.final_gain));
  tensors.push_back(tensor_entry("final_bias", weights_.final_bias));

  Json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["format"] = kCheckpointFormat;
  doc["config"] = Json{{"n_layers", config_.n_layers}, {"d_model", config_.d_model},
                       {"n_heads", config_.n_heads},   {"vocab_size", config_.vocab_size},
                       {"max_seq_len", config_.max_seq_len}, {"d_ff", config_.d_ff},
                       {"seed", config_.seed}};
  doc["tensors"] = std::move(tensors);
  atomic_write(path, dump_json(doc));
}

ToyModel ToyModel::load(const std::filesystem::path& path) {
  const Json doc = load_json(path);
  const std::string where = path.string();
  require_schema_version(doc, where);
  if (doc.value("format", std::string{}) != kCheckpointFormat) {
    throw Error(ErrorCode::kSchema, where + ": not a toy model checkpoint");
  }
  ToyModelConfig cfg;
  try {
    const Json& c = doc.at("config");
    cfg.n_layers = c.at("n_layers").get<int>();
    cfg.d_model = c.at("d_model").get<int>();
    cfg.n_heads = c.at("n_heads").get<int>();
    cfg.vocab_size = c.at("vocab_size").get<int>();
    cfg.max_seq_len = c.at("max_seq_len").get<int>();
    cfg.d_ff = c.at("d_ff").get<int>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, where + ": bad config block: " + e.what());
  }
  cfg.validate();

  std::map<std::string, const Json*> by_name;
  for (const Json& t : doc.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
  auto mat = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::kSchema, where + ": missing tensor " + name);
    const Json& shape = it->second->at("shape");
    if (shape != Json{rows, cols}) {
      throw Error(ErrorCode::kSchema, where + ": tensor " + name + " has shape " + shape.dump());
    }
    return matrix_from_json(it->second->at("data"), rows, cols, name);
  };
  auto vec = [&](const std::string& name, Eigen::Index size) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::kSchema, where + ": missing tensor " + name);
    if (it->second->at("shape") != Json{size}) {
      throw Error(ErrorCode::kSchema, where + ": tensor " + name + " has shape " +
                                          it->second->at("shape").dump());
    }
    return vector_from_json(it->second->at("data"), size, name);
  };

  const Eigen::Index d = cfg.d_model;
  ToyWeights w;
  w.token_embedding = mat("token_embedding", cfg.vocab_size, d);
  w.position_embedding = mat("position_embedding", cfg.max_seq_len, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    ToyBlockWeights b;
    b.ln1_gain = vec(p + "ln1_gain", d);
    b.ln1_bias = vec(p + "ln1_bias", d);
    b.w_q = mat(p + "w_q", d, d);
    b.w_k = mat(p + "w_k", d, d);
    b.w_v = mat(p + "w_v", d, d);
    b.w_o = mat(p + "w_o", d, d);
    b.ln2_gain = vec(p + "ln2_gain", d);
    b.ln2_bias = vec(p + "ln2_bias", d);
    b.w_in = mat(p + "w_in", d, cfg.d_ff);
    b.b_in = vec(p + "b_in", cfg.d_ff);
    b.w_out = mat(p + "w_out", cfg.d_ff, d);
    b.b_out = vec(p + "b_out", d);
    w.blocks.push_back(std::move(b));
  }
  w.final_gain = vec("final_gain", d);
  w.final_bias = vec("final_bias", d);
  return ToyModel(cfg, std::move(w));
}

}  // namespace traitsteer
