#include "traitsteer/pressure_features.hpp"

#include <cmath>
#include <sstream>

#include "traitsteer/error.hpp"
#include "traitsteer/io.hpp"

namespace traitsteer {

void ContrastPair::validate() const {
  if (pressure.empty()) throw Error(ErrorCode::kSchema, "contrast pair needs a pressure name");
  if (negative.empty() || positive.empty()) {
    throw Error(ErrorCode::kSchema, "contrast pair '" + pressure + "' has an empty prompt");
  }
  if (negative == positive) {
    throw Error(ErrorCode::kSchema, "contrast pair '" + pressure + "' has identical prompts");
  }
}

StimulusSet build_contrast_dataset(const ContrastPair& pair, std::span<const std::string> questions) {
  pair.validate();
  if (questions.empty()) throw Error(ErrorCode::kEmptyInput, "contrast dataset needs questions");
  StimulusSet set{pair.pressure, {}};
  set.items.reserve(2 * questions.size());
  for (std::size_t q = 0; q < questions.size(); ++q) {
    set.items.push_back({-1, pair.negative + " " + questions[q], q});
    set.items.push_back({+1, pair.positive + " " + questions[q], q});
  }
  return set;
}

LastTokenActivations capture_last_token_activations(const StimulusSet& stimuli, int layer,
                                                    const ModelAdapter& model) {
  if (layer < 0 || layer >= model.info().n_layers) {
    throw Error(ErrorCode::kLayerOutOfRange, "layer " + std::to_string(layer) + " out of range");
  }
  LastTokenActivations out;
  for (const auto& item : stimuli.items) {
    const Tokens tokens = model.tokenize(item.text);
    const CaptureMap captures = forward_with_capture(tokens, {layer}, model);
    const Eigen::MatrixXd& r = captures.at(layer).values.front();
    Eigen::VectorXd last = r.row(r.rows() - 1).transpose();
    (item.polarity > 0 ? out.positive : out.negative).push_back(std::move(last));
  }
  return out;
}

DirectionResult direction_extract(std::span<const Eigen::VectorXd> positive,
                                  std::span<const Eigen::VectorXd> negative, int layer,
                                  const std::string& pressure) {
  if (positive.empty() || negative.empty()) {
    throw Error(ErrorCode::kEmptyInput, "direction_extract needs positive and negative activations");
  }
  if (positive.size() != negative.size()) {
    throw Error(ErrorCode::kInvalidArgument, "positive and negative activations must pair up (" +
                                                 std::to_string(positive.size()) + " vs " +
                                                 std::to_string(negative.size()) + ")");
  }
  const Eigen::Index d = positive.front().size();
  const auto n = static_cast<Eigen::Index>(positive.size());
  Eigen::MatrixXd diffs(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = positive[static_cast<std::size_t>(i)];
    const auto& q = negative[static_cast<std::size_t>(i)];
    if (p.size() != d || q.size() != d) {
      throw Error(ErrorCode::kDimensionMismatch, "activation vectors differ in dimension");
    }
    diffs.row(i) = (p - q).transpose();
  }

  const Eigen::VectorXd mean_diff = diffs.colwise().mean().transpose();
  const double mean_norm = mean_diff.norm();
  if (!(mean_norm >= 1e-12)) {
    throw Error(ErrorCode::kZeroDifference, "positive and negative means coincide");
  }

  // Leading eigenvector of the (uncentered) second-moment matrix of the
  // differences. Centering would cancel the shared contrast axis itself.
  const Eigen::MatrixXd second_moment = diffs.transpose() * diffs / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(second_moment);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::kInvalidArgument, "eigen-decomposition of pair differences failed");
  }
  Eigen::VectorXd axis = eig.eigenvectors().col(d - 1);
  axis.normalize();
  if (axis.dot(mean_diff) < 0.0) axis = -axis;

  const double total = eig.eigenvalues().sum();
  DirectionResult result;
  result.layer = layer;
  result.direction.kind = FeatureKind::kPressure;
  result.direction.layer = layer;
  result.direction.index = -1;
  result.direction.explanation = pressure;
  result.direction.values = std::move(axis);
  result.diagnostics.explained_variance = total > 0.0 ? eig.eigenvalues()(d - 1) / total : 0.0;
  result.diagnostics.sign_alignment = result.direction.values.dot(mean_diff) / mean_norm;
  return result;
}

std::vector<ContrastPair> load_contrast_pairs(const std::filesystem::path& path) {
  const Json doc = load_json(path);
  const Json& list = doc.is_object() && doc.contains("pairs") ? doc.at("pairs") : doc;
  if (!list.is_array()) throw Error(ErrorCode::kSchema, path.string() + ": expected a list of pairs");
  std::vector<ContrastPair> pairs;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const Json& p = list[i];
    try {
      ContrastPair pair{p.at("pressure").get<std::string>(), p.at("negative").get<std::string>(),
                        p.at("positive").get<std::string>()};
      pair.validate();
      pairs.push_back(std::move(pair));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchema, path.string() + ": pair " + std::to_string(i) + ": " + e.what());
    }
  }
  return pairs;
}

std::vector<std::string> load_questions(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const bool jsonl = path.extension() == ".jsonl";
  std::vector<std::string> questions;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (jsonl) {
      const Json record = parse_json(line, path.string() + ":" + std::to_string(line_no));
      if (!record.contains("question") || !record.at("question").is_string()) {
        throw Error(ErrorCode::kSchema, path.string() + ":" + std::to_string(line_no) + ": missing question");
      }
      questions.push_back(record.at("question").get<std::string>());
    } else if (line.front() != '#') {
      questions.push_back(line);
    }
  }
  if (questions.empty()) throw Error(ErrorCode::kEmptyInput, path.string() + ": no questions");
  return questions;
}

}  // namespace traitsteer
