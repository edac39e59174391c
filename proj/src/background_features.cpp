#include "traitsteer/background_features.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "traitsteer/error.hpp"
#include "traitsteer/io.hpp"

namespace traitsteer {

namespace {

std::vector<std::string> phrases_from_json(const Json& value, const std::string& where) {
  std::vector<std::string> out;
  auto add_block = [&](const Json& v) {
    if (!v.is_string()) throw Error(ErrorCode::kSchema, where + ": phrases must be strings");
    for (auto& line : split_descriptor_block(v.get<std::string>())) out.push_back(std::move(line));
  };
  if (value.is_array()) {
    for (const Json& v : value) add_block(v);
  } else {
    add_block(value);
  }
  return out;
}

// Pooled encodings keyed by phrase text, shared across profiles.
class PooledCache {
 public:
  PooledCache(const SAEModel& sae, const ModelAdapter& model) : sae_(sae), model_(model) {}

  const Eigen::VectorXd& get(const std::string& phrase) {
    auto it = cache_.find(phrase);
    if (it == cache_.end()) it = cache_.emplace(phrase, pooled_encoding(phrase, sae_, model_)).first;
    return it->second;
  }

  Eigen::VectorXd profile(std::span<const std::string> phrases) {
    if (phrases.empty()) throw Error(ErrorCode::kEmptyInput, "activation profile needs phrases");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(sae_.m());
    for (const auto& p : phrases) sum += get(p);
    return sum / static_cast<double>(phrases.size());
  }

 private:
  const SAEModel& sae_;
  const ModelAdapter& model_;
  std::map<std::string, Eigen::VectorXd> cache_;
};

MonosemanticityResult check_against(std::int64_t feature, const std::string& home_factor,
                                    std::span<const FactorSpec> specs, PooledCache& cache,
                                    double tau_off) {
  MonosemanticityResult result;
  for (const auto& spec : specs) {
    if (spec.factor == home_factor) continue;
    const auto phrases = spec.all_phrases();
    if (phrases.empty()) continue;
    if (cache.profile(phrases)(feature) > tau_off) {
      result.pass = false;
      result.offending_factors.push_back(spec.factor);
    }
  }
  return result;
}

}  // namespace

std::vector<std::string> FactorSpec::all_phrases() const {
  std::vector<std::string> out;
  for (const auto& c : categories) out.insert(out.end(), c.phrases.begin(), c.phrases.end());
  return out;
}

void FactorSpec::validate() const {
  if (factor.empty()) throw Error(ErrorCode::kSchema, "factor name must be non-empty");
  if (categories.empty()) throw Error(ErrorCode::kSchema, "factor '" + factor + "' has no categories");
  for (const auto& c : categories) {
    if (c.phrases.empty()) {
      throw Error(ErrorCode::kSchema, "factor '" + factor + "' category '" + c.name + "' has no phrases");
    }
    for (const auto& p : c.phrases) {
      if (p.empty()) throw Error(ErrorCode::kSchema, "factor '" + factor + "' has an empty phrase");
    }
  }
}

std::vector<std::string> split_descriptor_block(std::string_view block) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= block.size()) {
    std::size_t end = block.find('\n', start);
    if (end == std::string_view::npos) end = block.size();
    std::string_view line = block.substr(start, end - start);
    const auto first = line.find_first_not_of(" \t\r");
    if (first != std::string_view::npos) {
      const auto last = line.find_last_not_of(" \t\r");
      lines.emplace_back(line.substr(first, last - first + 1));
    }
    start = end + 1;
  }
  return lines;
}

std::vector<FactorSpec> parse_factor_specs(std::string_view json_text, const std::string& source) {
  const Json doc = parse_json(json_text, source);
  if (!doc.is_object()) throw Error(ErrorCode::kSchema, source + ": expected an object of factors");
  std::vector<FactorSpec> specs;
  for (const auto& [factor, body] : doc.items()) {
    if (factor == "schema_version") continue;
    FactorSpec spec;
    spec.factor = factor;
    const std::string where = source + ": " + factor;
    if (body.is_object()) {
      for (const auto& [category, phrases] : body.items()) {
        spec.categories.push_back({category, phrases_from_json(phrases, where + "." + category)});
      }
    } else if (body.is_array()) {
      for (std::size_t i = 0; i < body.size(); ++i) {
        spec.categories.push_back(
            {"category_" + std::to_string(i), phrases_from_json(body[i], where + "[" + std::to_string(i) + "]")});
      }
    } else {
      throw Error(ErrorCode::kSchema, where + ": expected an object or a list of categories");
    }
    spec.validate();
    specs.push_back(std::move(spec));
  }
  return specs;
}

std::vector<FactorSpec> load_factor_specs(const std::filesystem::path& path) {
  return parse_factor_specs(read_file(path), path.string());
}

Eigen::MatrixXd collect_residual_rows(std::span<const std::string> texts, int layer,
                                      const ModelAdapter& model) {
  std::vector<Eigen::MatrixXd> slabs;
  Eigen::Index rows = 0;
  for (const auto& text : texts) {
    const Tokens tokens = tokenize(text, model);
    CaptureMap caps = forward_with_capture(tokens, {layer}, model);
    slabs.push_back(std::move(caps.at(layer).values.front()));
    rows += slabs.back().rows();
  }
  Eigen::MatrixXd out(rows, model.info().d_model);
  Eigen::Index r = 0;
  for (const auto& slab : slabs) {
    out.middleRows(r, slab.rows()) = slab;
    r += slab.rows();
  }
  return out;
}

Eigen::VectorXd pooled_encoding(const std::string& phrase, const SAEModel& sae,
                                const ModelAdapter& model) {
  if (sae.d() != model.info().d_model) {
    throw Error(ErrorCode::kDimensionMismatch, "SAE input dimension " + std::to_string(sae.d()) +
                                                   " does not match model d_model " +
                                                   std::to_string(model.info().d_model));
  }
  const Tokens tokens = model.tokenize(phrase);
  const CaptureMap captures = forward_with_capture(tokens, {sae.layer}, model);
  const Eigen::MatrixXd encoded = sae_encode_rows(captures.at(sae.layer).values.front(), sae);
  return encoded.colwise().maxCoeff().transpose();
}

Eigen::VectorXd activation_profile(std::span<const std::string> phrases, const SAEModel& sae,
                                   const ModelAdapter& model) {
  PooledCache cache(sae, model);
  return cache.profile(phrases);
}

std::vector<std::int64_t> rank_contrastive(const Eigen::VectorXd& pos_profile,
                                           const Eigen::VectorXd& neg_profile, double tau_on,
                                           double tau_off, std::size_t k) {
  if (pos_profile.size() != neg_profile.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "profiles differ in length");
  }
  if (!(tau_on > tau_off) || tau_off < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "thresholds need tau_on > tau_off >= 0");
  }
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  std::vector<std::int64_t> hits;
  for (Eigen::Index i = 0; i < pos_profile.size(); ++i) {
    if (pos_profile(i) >= tau_on && neg_profile(i) <= tau_off) hits.push_back(i);
  }
  std::stable_sort(hits.begin(), hits.end(), [&](std::int64_t a, std::int64_t b) {
    return pos_profile(a) - neg_profile(a) > pos_profile(b) - neg_profile(b);
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

std::vector<std::int64_t> contrastive_feature_search(std::span<const std::string> pos_phrases,
                                                     std::span<const std::string> neg_phrases,
                                                     const SAEModel& sae, const ModelAdapter& model,
                                                     double tau_on, double tau_off, std::size_t k) {
  PooledCache cache(sae, model);
  return rank_contrastive(cache.profile(pos_phrases), cache.profile(neg_phrases), tau_on, tau_off, k);
}

MonosemanticityResult monosemanticity_check(std::int64_t feature, const std::string& home_factor,
                                            std::span<const FactorSpec> all_specs,
                                            const SAEModel& sae, const ModelAdapter& model,
                                            double tau_off) {
  if (feature < 0 || feature >= sae.m()) {
    throw Error(ErrorCode::kIndexOutOfRange, "feature " + std::to_string(feature) + " not in SAE");
  }
  PooledCache cache(sae, model);
  return check_against(feature, home_factor, all_specs, cache, tau_off);
}

std::string default_explanation(std::int64_t index, const std::string&, const std::string&) {
  return "feature-" + std::to_string(index);
}

FactorRegistry build_factor_registry(std::span<const FactorSpec> specs, const SAEModel& sae,
                                     const ModelAdapter& model, const RegistryBuildOptions& options,
                                     std::vector<std::string>* warnings) {
  if (options.k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  for (const auto& spec : specs) spec.validate();
  const double tau_on = options.thresholds.tau_on;
  const double tau_off = options.thresholds.tau_off;
  const Explainer explain = options.explainer ? options.explainer : Explainer(default_explanation);

  PooledCache cache(sae, model);
  FactorRegistry registry;
  registry.layer = sae.layer;
  registry.sae_id = options.sae_id.empty() ? sae.id : options.sae_id;

  for (const auto& spec : specs) {
    RegistryFactor factor{spec.factor, {}};
    for (std::size_t c = 0; c < spec.categories.size(); ++c) {
      const auto& category = spec.categories[c];
      const Eigen::VectorXd pos = cache.profile(category.phrases);
      std::vector<std::int64_t> candidates;
      if (spec.categories.size() == 1) {
        // No contrast inside the factor; rank by raw activation and let the
        // cross-factor check do the filtering.
        for (Eigen::Index i = 0; i < pos.size(); ++i) {
          if (pos(i) >= tau_on) candidates.push_back(i);
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [&](std::int64_t a, std::int64_t b) { return pos(a) > pos(b); });
      } else {
        std::vector<std::string> negatives;
        for (std::size_t o = 0; o < spec.categories.size(); ++o) {
          if (o == c) continue;
          const auto& ph = spec.categories[o].phrases;
          negatives.insert(negatives.end(), ph.begin(), ph.end());
        }
        candidates = rank_contrastive(pos, cache.profile(negatives), tau_on, tau_off,
                                      static_cast<std::size_t>(pos.size()));
      }

      RegistryCategory out{category.name, {}};
      for (std::int64_t idx : candidates) {
        if (out.entries.size() >= options.k) break;
        if (!check_against(idx, spec.factor, specs, cache, tau_off).pass) continue;
        std::string key = explain(idx, spec.factor, category.name);
        const bool taken = std::any_of(out.entries.begin(), out.entries.end(),
                                       [&](const RegistryEntry& e) { return e.explanation == key; });
        if (taken) key += " (" + std::to_string(idx) + ")";
        out.entries.push_back({std::move(key), idx});
      }
      if (out.entries.empty() && warnings != nullptr) {
        warnings->push_back("no monosemantic feature found for " + spec.factor + " / " + category.name);
      }
      factor.categories.push_back(std::move(out));
    }
    registry.factors.push_back(std::move(factor));
  }
  return registry;
}

}  // namespace traitsteer
