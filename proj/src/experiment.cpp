#include "traitsteer/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "traitsteer/error.hpp"
#include "traitsteer/io.hpp"
#include "traitsteer/pressure_features.hpp"

namespace traitsteer {

namespace fs = std::filesystem;

const char* to_string(Harness h) noexcept {
  return h == Harness::kPersonality ? "personality" : "safety";
}

Harness harness_from_string(const std::string& name) {
  if (name == "personality") return Harness::kPersonality;
  if (name == "safety") return Harness::kSafety;
  throw Error(ErrorCode::kInvalidArgument, "unknown harness '" + name + "' (personality|safety)");
}

// ---- config -----------------------------------------------------------------

namespace {

[[noreturn]] void config_error(const std::string& source, const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kSchema, source + ": " + path + ": " + what);
}

void reject_unknown(const Json& obj, std::initializer_list<const char*> known, const std::string& source,
                    const std::string& path) {
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      config_error(source, path + "." + key, "unknown key");
    }
  }
}

template <typename T>
T get_as(const Json& obj, const char* key, const T& fallback, const std::string& source,
         const std::string& path) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj[key].get<T>();
  } catch (const Json::exception&) {
    config_error(source, path + "." + key, "wrong type");
  }
}

fs::path resolve(const fs::path& base, const Json& value, const std::string& source, const std::string& path) {
  if (!value.is_string()) config_error(source, path, "expected a path string");
  fs::path p = value.get<std::string>();
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

std::optional<fs::path> optional_path(const Json& obj, const char* key, const fs::path& base,
                                      const std::string& source, const std::string& path) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  return resolve(base, obj[key], source, path + "." + key);
}

GridSpec parse_grid(const Json& j, const GridSpec& fallback, const std::string& source, const std::string& path) {
  if (!j.is_object()) config_error(source, path, "expected {start, stop, step}");
  reject_unknown(j, {"start", "stop", "step"}, source, path);
  GridSpec g;
  g.start = get_as<double>(j, "start", fallback.start, source, path);
  g.stop = get_as<double>(j, "stop", fallback.stop, source, path);
  g.step = get_as<double>(j, "step", fallback.step, source, path);
  return g;
}

ModelProfile parse_profile(const Json& j, const std::string& source) {
  if (j.is_string()) {
    auto p = builtin_profile(j.get<std::string>());
    if (!p) config_error(source, "$.profile", "unknown built-in profile '" + j.get<std::string>() + "'");
    return *p;
  }
  if (!j.is_object()) config_error(source, "$.profile", "expected a name or an object");
  reject_unknown(j, {"name", "base", "layer", "background_coefficient", "pressure_coefficient",
                     "background_grid", "pressure_grid"},
                 source, "$.profile");
  ModelProfile p;
  if (j.contains("base")) {
    auto b = builtin_profile(get_as<std::string>(j, "base", "", source, "$.profile"));
    if (!b) config_error(source, "$.profile.base", "unknown built-in profile");
    p = *b;
  }
  p.name = get_as<std::string>(j, "name", p.name.empty() ? "custom" : p.name, source, "$.profile");
  p.layer = get_as<int>(j, "layer", p.layer, source, "$.profile");
  p.background_coefficient = get_as<double>(j, "background_coefficient", p.background_coefficient, source, "$.profile");
  p.pressure_coefficient = get_as<double>(j, "pressure_coefficient", p.pressure_coefficient, source, "$.profile");
  if (j.contains("background_grid")) p.background_grid = parse_grid(j["background_grid"], p.background_grid, source, "$.profile.background_grid");
  if (j.contains("pressure_grid")) p.pressure_grid = parse_grid(j["pressure_grid"], p.pressure_grid, source, "$.profile.pressure_grid");
  if (!std::isfinite(p.background_coefficient) || !std::isfinite(p.pressure_coefficient)) {
    config_error(source, "$.profile", "coefficients must be finite");
  }
  return p;
}

SAETrainConfig parse_sae_training(const Json& j, const std::string& source) {
  const std::string path = "$.extraction.sae_training";
  if (!j.is_object()) config_error(source, path, "expected an object");
  reject_unknown(j, {"n_features", "alpha", "learning_rate", "steps", "batch_size", "sparsity_input",
                     "unit_norm_decoder", "holdout_fraction"},
                 source, path);
  SAETrainConfig c;
  c.n_features = get_as<Eigen::Index>(j, "n_features", c.n_features, source, path);
  c.alpha = get_as<double>(j, "alpha", c.alpha, source, path);
  c.learning_rate = get_as<double>(j, "learning_rate", c.learning_rate, source, path);
  c.steps = get_as<int>(j, "steps", c.steps, source, path);
  c.batch_size = get_as<int>(j, "batch_size", c.batch_size, source, path);
  c.unit_norm_decoder = get_as<bool>(j, "unit_norm_decoder", c.unit_norm_decoder, source, path);
  c.holdout_fraction = get_as<double>(j, "holdout_fraction", c.holdout_fraction, source, path);
  const std::string input = get_as<std::string>(j, "sparsity_input", "raw", source, path);
  if (input == "raw") {
    c.sparsity_input = SparsityInput::kRaw;
  } else if (input == "centered") {
    c.sparsity_input = SparsityInput::kCentered;
  } else {
    config_error(source, path + ".sparsity_input", "expected \"raw\" or \"centered\"");
  }
  return c;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view text, const fs::path& config_path) {
  const std::string source = config_path.string();
  const Json doc = parse_json(text, source);
  if (!doc.is_object()) config_error(source, "$", "expected an object");
  require_schema_version(doc, source);
  reject_unknown(doc, {"schema_version", "seed", "model", "profile", "output_dir", "registry", "sae",
                       "directions", "items", "prompt_template", "top_k_average", "threads",
                       "extraction", "scan"},
                 source, "$");
  const fs::path base = config_path.parent_path();

  ExperimentConfig c;
  c.config_path = config_path;
  c.seed = get_as<std::uint64_t>(doc, "seed", 0, source, "$");

  if (doc.contains("model")) {
    const Json& m = doc["model"];
    if (!m.is_object()) config_error(source, "$.model", "expected an object");
    reject_unknown(m, {"checkpoint", "toy"}, source, "$.model");
    c.checkpoint = optional_path(m, "checkpoint", base, source, "$.model");
    if (m.contains("toy")) {
      const Json& t = m["toy"];
      if (!t.is_object()) config_error(source, "$.model.toy", "expected an object");
      reject_unknown(t, {"n_layers", "d_model", "n_heads", "vocab_size", "max_seq_len", "d_ff"}, source,
                     "$.model.toy");
      c.toy.n_layers = get_as<int>(t, "n_layers", c.toy.n_layers, source, "$.model.toy");
      c.toy.d_model = get_as<int>(t, "d_model", c.toy.d_model, source, "$.model.toy");
      c.toy.n_heads = get_as<int>(t, "n_heads", c.toy.n_heads, source, "$.model.toy");
      c.toy.vocab_size = get_as<int>(t, "vocab_size", c.toy.vocab_size, source, "$.model.toy");
      c.toy.max_seq_len = get_as<int>(t, "max_seq_len", c.toy.max_seq_len, source, "$.model.toy");
      c.toy.d_ff = get_as<int>(t, "d_ff", c.toy.d_ff, source, "$.model.toy");
    }
  }
  c.toy.seed = c.seed;
  c.profile = doc.contains("profile") ? parse_profile(doc["profile"], source) : ModelProfile{"toy", 0, 1.0, 1.0};

  c.output_dir = doc.contains("output_dir") ? resolve(base, doc["output_dir"], source, "$.output_dir")
                                            : (base / "out").lexically_normal();
  c.registry = optional_path(doc, "registry", base, source, "$");
  c.sae = optional_path(doc, "sae", base, source, "$");
  if (doc.contains("directions")) {
    if (!doc["directions"].is_object()) config_error(source, "$.directions", "expected {pressure: path}");
    for (const auto& [name, value] : doc["directions"].items()) {
      c.directions.emplace_back(name, resolve(base, value, source, "$.directions." + name));
    }
  }
  if (doc.contains("items")) {
    const Json& items = doc["items"];
    if (!items.is_object()) config_error(source, "$.items", "expected an object");
    reject_unknown(items, {"personality", "safety"}, source, "$.items");
    c.personality_items = optional_path(items, "personality", base, source, "$.items");
    c.safety_items = optional_path(items, "safety", base, source, "$.items");
  }
  if (doc.contains("prompt_template")) {
    const Json& t = doc["prompt_template"];
    if (!t.is_object()) config_error(source, "$.prompt_template", "expected an object");
    reject_unknown(t, {"version", "instruction", "answer_cue"}, source, "$.prompt_template");
    c.prompt_template.version = get_as<std::string>(t, "version", c.prompt_template.version, source, "$.prompt_template");
    c.prompt_template.instruction = get_as<std::string>(t, "instruction", c.prompt_template.instruction, source, "$.prompt_template");
    c.prompt_template.answer_cue = get_as<std::string>(t, "answer_cue", c.prompt_template.answer_cue, source, "$.prompt_template");
  }
  c.top_k_average = get_as<std::size_t>(doc, "top_k_average", 1, source, "$");
  if (c.top_k_average < 1) config_error(source, "$.top_k_average", "must be >= 1");
  c.threads = std::max<std::size_t>(1, get_as<std::size_t>(doc, "threads", 1, source, "$"));

  if (doc.contains("extraction")) {
    const Json& e = doc["extraction"];
    if (!e.is_object()) config_error(source, "$.extraction", "expected an object");
    reject_unknown(e, {"factors", "contrast_pairs", "questions", "sae_corpus", "sae_training", "tau_on",
                       "tau_off", "k"},
                   source, "$.extraction");
    c.factors = optional_path(e, "factors", base, source, "$.extraction");
    c.contrast_pairs = optional_path(e, "contrast_pairs", base, source, "$.extraction");
    c.questions = optional_path(e, "questions", base, source, "$.extraction");
    c.sae_corpus = optional_path(e, "sae_corpus", base, source, "$.extraction");
    if (e.contains("sae_training")) c.sae_training = parse_sae_training(e["sae_training"], source);
    c.thresholds.tau_on = get_as<double>(e, "tau_on", c.thresholds.tau_on, source, "$.extraction");
    c.thresholds.tau_off = get_as<double>(e, "tau_off", c.thresholds.tau_off, source, "$.extraction");
    c.registry_k = get_as<std::size_t>(e, "k", c.registry_k, source, "$.extraction");
  }
  if (doc.contains("scan")) {
    const Json& s = doc["scan"];
    if (!s.is_object()) config_error(source, "$.scan", "expected an object");
    reject_unknown(s, {"probe_prompt", "generation_prompt", "options", "max_tokens", "stability_window",
                       "window", "max_repeat"},
                   source, "$.scan");
    c.scan.probe_prompt = get_as<std::string>(s, "probe_prompt", c.scan.probe_prompt, source, "$.scan");
    c.scan.generation_prompt = get_as<std::string>(s, "generation_prompt", c.scan.generation_prompt, source, "$.scan");
    c.scan.options = get_as<std::vector<std::string>>(s, "options", c.scan.options, source, "$.scan");
    c.scan.max_tokens = get_as<std::size_t>(s, "max_tokens", c.scan.max_tokens, source, "$.scan");
    c.scan.stability_window = get_as<std::size_t>(s, "stability_window", c.scan.stability_window, source, "$.scan");
    c.scan.over_steer.window = get_as<std::size_t>(s, "window", c.scan.over_steer.window, source, "$.scan");
    c.scan.over_steer.max_repeat = get_as<std::size_t>(s, "max_repeat", c.scan.over_steer.max_repeat, source, "$.scan");
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return parse_experiment_config(read_file(path), path);
}

fs::path ExperimentConfig::registry_path() const {
  return registry ? *registry : layout().registry_file("registry");
}

fs::path ExperimentConfig::sae_path() const {
  return sae ? *sae : layout().sae_file("sae-l" + std::to_string(profile.layer));
}

fs::path ExperimentConfig::direction_path(const std::string& pressure) const {
  for (const auto& [name, path] : directions) {
    if (name == pressure) return path;
  }
  return layout().direction_file(pressure);
}

std::unique_ptr<ModelAdapter> build_model(const ExperimentConfig& config) {
  if (config.checkpoint) return std::make_unique<ToyModel>(ToyModel::load(*config.checkpoint));
  return std::make_unique<ToyModel>(config.toy);
}

// ---- context ----------------------------------------------------------------

ExperimentContext::ExperimentContext(ExperimentConfig config)
    : ExperimentContext(config, build_model(config)) {}

ExperimentContext::ExperimentContext(ExperimentConfig config, std::unique_ptr<ModelAdapter> model)
    : config_(std::move(config)), model_(std::move(model)) {
  if (!model_) throw Error(ErrorCode::kInvalidArgument, "experiment needs a model");
  if (config_.profile.layer < 0 || config_.profile.layer >= model_->info().n_layers) {
    throw Error(ErrorCode::kLayerOutOfRange, "profile layer " + std::to_string(config_.profile.layer) +
                                                 " not in model with " +
                                                 std::to_string(model_->info().n_layers) + " layers");
  }
}

namespace {

const fs::path& items_path(const ExperimentConfig& c, Harness h) {
  const auto& p = h == Harness::kPersonality ? c.personality_items : c.safety_items;
  if (!p) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config has no ") + to_string(h) + " item file");
  }
  return *p;
}

std::string cache_key(const ExperimentConfig& c, Harness h) {
  return std::string(to_string(h)) + "\n" + items_path(c, h).string();
}

}  // namespace

const std::vector<AssessmentItem>& ExperimentContext::items(Harness h) {
  const std::string key = cache_key(config_, h);
  auto it = items_.find(key);
  if (it == items_.end()) it = items_.emplace(key, load_items(items_path(config_, h))).first;
  return it->second;
}

ScoreTable ExperimentContext::score(Harness h, std::span<const SteeringHook> hooks) {
  EvalOptions options;
  options.tmpl = config_.prompt_template;
  options.threads = config_.threads;
  const auto& list = items(h);
  return h == Harness::kPersonality ? run_inventory(*model_, list, hooks, options)
                                    : run_safety(*model_, list, hooks, options);
}

const ScoreTable& ExperimentContext::base_scores(Harness h) {
  const std::string key = cache_key(config_, h);
  auto it = base_.find(key);
  if (it == base_.end()) it = base_.emplace(key, score(h, {})).first;
  return it->second;
}

const SAEModel& ExperimentContext::sae() {
  if (!sae_) {
    sae_ = load_sae(config_.sae_path());
    if (sae_->layer != config_.profile.layer) {
      throw Error(ErrorCode::kInvalidArgument, "SAE layer " + std::to_string(sae_->layer) +
                                                   " != profile layer " + std::to_string(config_.profile.layer));
    }
    if (sae_->d() != model_->info().d_model) {
      throw Error(ErrorCode::kDimensionMismatch, "SAE width " + std::to_string(sae_->d()) +
                                                     " != d_model " + std::to_string(model_->info().d_model));
    }
  }
  return *sae_;
}

const FactorRegistry& ExperimentContext::registry() {
  if (!registry_) {
    FactorRegistry reg = load_registry(config_.registry_path());
    validate_registry_against(reg, sae());
    registry_ = std::move(reg);
  }
  return *registry_;
}

// ---- sweeps -----------------------------------------------------------------

const SubscaleReport& SweepResult::at(const std::string& subscale, const std::string& condition) const {
  return rows.at(subscale).at(condition);
}

std::map<std::string, std::size_t> compute_highlights(const SweepResult& result) {
  std::map<std::string, std::size_t> out;
  for (const auto& subscale : result.subscales) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < result.conditions.size(); ++i) {
      if (result.at(subscale, result.conditions[i]).delta > result.at(subscale, result.conditions[best]).delta) {
        best = i;
      }
    }
    out[subscale] = best;
  }
  return out;
}

SweepResult assemble_sweep(std::string title, Harness harness, const ScoreTable& base,
                           const std::vector<std::pair<std::string, ScoreTable>>& steered) {
  if (steered.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep has no conditions");
  SweepResult r;
  r.title = std::move(title);
  r.harness = harness;
  r.subscales = ordered_subscales(
      base, harness == Harness::kPersonality ? personality_subscales() : safety_categories());
  if (r.subscales.empty()) throw Error(ErrorCode::kEmptyInput, "no scored subscales");
  for (const auto& s : r.subscales) r.base[s] = base.at(s);
  std::set<std::string> seen;
  for (const auto& [condition, scores] : steered) {
    if (!seen.insert(condition).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate condition '" + condition + "'");
    }
    r.conditions.push_back(condition);
    for (const auto& s : r.subscales) {
      auto it = scores.find(s);
      if (it == scores.end()) {
        throw Error(ErrorCode::kInvalidArgument, "condition '" + condition + "' lacks subscale " + s);
      }
      r.rows[s][condition] = make_report(s, base.at(s), it->second);
    }
  }
  r.highlight = compute_highlights(r);
  return r;
}

FeatureVector category_feature(const RegistryCategory& category, const SAEModel& sae, std::size_t top_k) {
  if (category.entries.empty()) {
    throw Error(ErrorCode::kMissingFactor, "category '" + category.name + "' has no registry features");
  }
  const std::size_t k = std::min(std::max<std::size_t>(top_k, 1), category.entries.size());
  FeatureVector f = feature_vector(sae, category.entries.front().index);
  f.explanation = category.entries.front().explanation;
  for (std::size_t i = 1; i < k; ++i) f.values += feature_vector(sae, category.entries[i].index).values;
  if (k > 1) {
    f.values /= static_cast<double>(k);
    f.explanation = "mean of top " + std::to_string(k) + " features of " + category.name;
  }
  return f;
}

SweepResult run_factor_sweep(ExperimentContext& ctx, const std::string& factor, Harness harness) {
  const FactorRegistry& reg = ctx.registry();
  const RegistryFactor* f = reg.find(factor);
  if (!f) throw Error(ErrorCode::kMissingFactor, "registry has no factor '" + factor + "'");
  if (f->categories.empty()) throw Error(ErrorCode::kMissingFactor, "factor '" + factor + "' has no categories");
  if (reg.layer && *reg.layer != ctx.config().profile.layer) {
    throw Error(ErrorCode::kInvalidArgument, "registry layer " + std::to_string(*reg.layer) +
                                                 " != profile layer " + std::to_string(ctx.config().profile.layer));
  }
  const ScoreTable& base = ctx.base_scores(harness);
  std::vector<std::pair<std::string, ScoreTable>> steered;
  for (const auto& category : f->categories) {
    const FeatureVector feature = category_feature(category, ctx.sae(), ctx.config().top_k_average);
    const SteeringHook hook = make_hook(feature, ctx.config().profile.background_coefficient,
                                        ctx.config().profile.layer, ctx.model());
    steered.emplace_back(category.name, ctx.score(harness, std::span(&hook, 1)));
  }
  return assemble_sweep(factor, harness, base, steered);
}

SweepResult run_pressure_sweep(ExperimentContext& ctx, Harness harness) {
  std::vector<std::string> pressures;
  for (const auto& [name, path] : ctx.config().directions) pressures.push_back(name);
  if (pressures.empty() && ctx.config().contrast_pairs) {
    for (const auto& pair : load_contrast_pairs(*ctx.config().contrast_pairs)) pressures.push_back(pair.pressure);
  }
  if (pressures.empty()) throw Error(ErrorCode::kMissingDirection, "no pressure directions configured");

  std::vector<FeatureVector> features;
  for (const auto& pressure : pressures) {
    const fs::path path = ctx.config().direction_path(pressure);
    if (!fs::exists(path)) {
      throw Error(ErrorCode::kMissingDirection, "direction for '" + pressure + "' not found at " + path.string());
    }
    DirectionResult d = load_direction(path);
    if (d.layer != ctx.config().profile.layer) {
      throw Error(ErrorCode::kInvalidArgument, path.string() + ": direction layer " + std::to_string(d.layer) +
                                                   " != profile layer " +
                                                   std::to_string(ctx.config().profile.layer));
    }
    features.push_back(std::move(d.direction));
  }
  const ScoreTable& base = ctx.base_scores(harness);
  std::vector<std::pair<std::string, ScoreTable>> steered;
  for (std::size_t i = 0; i < pressures.size(); ++i) {
    const SteeringHook hook = make_hook(features[i], ctx.config().profile.pressure_coefficient,
                                        ctx.config().profile.layer, ctx.model());
    steered.emplace_back(pressures[i], ctx.score(harness, std::span(&hook, 1)));
  }
  return assemble_sweep("Short-term pressures", harness, base, steered);
}

// ---- reports ----------------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

double parse_double_field(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw Error(ErrorCode::kSchema, "not a number: '" + s + "'");
  return v;
}

}  // namespace

std::string emit_report(const SweepResult& result, ReportFormat format) {
  if (result.conditions.empty() || result.subscales.empty()) {
    throw Error(ErrorCode::kEmptyInput, "empty sweep result");
  }
  std::string out;
  if (format == ReportFormat::kCsv) {
    out = "subscale,condition,base,steered,delta,direction\n";
    for (const auto& s : result.subscales) {
      for (const auto& c : result.conditions) {
        const SubscaleReport& r = result.at(s, c);
        out += csv_field(s) + "," + csv_field(c) + "," + format_double(r.base_score) + "," +
               format_double(r.steered_score) + "," + format_double(r.delta) + "," + to_string(r.direction) + "\n";
      }
    }
    return out;
  }
  out = "## " + md_cell(result.title) + " (" + to_string(result.harness) + ")\n\n";
  out += "| Subscale | Base |";
  for (const auto& c : result.conditions) out += " " + md_cell(c) + " |";
  out += "\n|---|---|";
  for (std::size_t i = 0; i < result.conditions.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& s : result.subscales) {
    out += "| " + md_cell(s) + " | " + format_score(result.base.at(s)) + " |";
    const std::size_t hi = result.highlight.at(s);
    for (std::size_t i = 0; i < result.conditions.size(); ++i) {
      const SubscaleReport& r = result.at(s, result.conditions[i]);
      const bool bold = i == hi && r.direction != DeltaDirection::kFlat;
      out += bold ? " **" + r.cell() + "** |" : " " + r.cell() + " |";
    }
    out += "\n";
  }
  return out;
}

std::vector<CsvReportRow> parse_report_csv(std::string_view csv) {
  std::vector<CsvReportRow> rows;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < csv.size()) {
    std::size_t end = csv.find('\n', start);
    if (end == std::string_view::npos) end = csv.size();
    const std::string_view line = csv.substr(start, end - start);
    start = end + 1;
    if (line_no++ == 0) {
      if (line != "subscale,condition,base,steered,delta,direction") {
        throw Error(ErrorCode::kSchema, "unexpected report CSV header");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) {
      throw Error(ErrorCode::kSchema, "report CSV line " + std::to_string(line_no) + ": expected 6 fields");
    }
    rows.push_back({f[0], f[1], parse_double_field(f[2]), parse_double_field(f[3]), parse_double_field(f[4]), f[5]});
  }
  return rows;
}

// ---- recorded runs ----------------------------------------------------------

SweepResult run_sweep(ExperimentContext& ctx, const std::map<std::string, std::string>& params) {
  auto get = [&](const std::string& key, const std::string& fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  const Harness harness = harness_from_string(get("harness", "personality"));
  const std::string kind = get("kind", "factor");
  if (kind == "factor") {
    const std::string factor = get("factor", "");
    if (factor.empty()) throw Error(ErrorCode::kInvalidArgument, "factor sweep needs a factor name");
    return run_factor_sweep(ctx, factor, harness);
  }
  if (kind == "pressure") return run_pressure_sweep(ctx, harness);
  throw Error(ErrorCode::kInvalidArgument, "unknown sweep kind '" + kind + "' (factor|pressure)");
}

namespace {

std::vector<std::pair<std::string, fs::path>> sweep_inputs(const ExperimentConfig& c,
                                                           const std::map<std::string, std::string>& params) {
  std::vector<std::pair<std::string, fs::path>> inputs;
  if (c.checkpoint) inputs.emplace_back("checkpoint", *c.checkpoint);
  const std::string harness = params.count("harness") ? params.at("harness") : "personality";
  inputs.emplace_back("items", items_path(c, harness_from_string(harness)));
  const std::string kind = params.count("kind") ? params.at("kind") : "factor";
  if (kind == "factor") {
    inputs.emplace_back("registry", c.registry_path());
    inputs.emplace_back("sae", c.sae_path());
  } else {
    std::vector<std::string> pressures;
    for (const auto& [name, path] : c.directions) pressures.push_back(name);
    if (pressures.empty() && c.contrast_pairs) {
      inputs.emplace_back("contrast_pairs", *c.contrast_pairs);
      for (const auto& pair : load_contrast_pairs(*c.contrast_pairs)) pressures.push_back(pair.pressure);
    }
    for (const auto& p : pressures) inputs.emplace_back("direction:" + p, c.direction_path(p));
  }
  return inputs;
}

}  // namespace

RunRecord run_and_record(ExperimentContext& ctx, const std::map<std::string, std::string>& params,
                         const std::string& timestamp) {
  const SweepResult result = run_sweep(ctx, params);
  RunRecord rec;
  rec.markdown = emit_report(result, ReportFormat::kMarkdown);
  rec.csv = emit_report(result, ReportFormat::kCsv);
  rec.run_dir = ctx.config().layout().new_run_dir(timestamp);
  atomic_write(rec.run_dir / "report.md", rec.markdown);
  atomic_write(rec.run_dir / "report.csv", rec.csv);

  RunManifest m;
  m.timestamp = timestamp;
  m.tool_version = std::string(kToolVersion);
  m.command = "sweep";
  m.parameters = params;
  const FileDigest cfg = digest_file("config", ctx.config().config_path, rec.run_dir);
  m.config_path = cfg.path;
  m.config_sha256 = cfg.sha256;
  m.seeds["seed"] = ctx.config().seed;
  for (const auto& [role, path] : sweep_inputs(ctx.config(), params)) {
    m.inputs.push_back(digest_file(role, path, rec.run_dir));
  }
  m.artifacts.push_back(digest_file("report.md", rec.run_dir / "report.md", rec.run_dir));
  m.artifacts.push_back(digest_file("report.csv", rec.run_dir / "report.csv", rec.run_dir));
  rec.manifest_path = write_manifest(m, rec.run_dir);
  return rec;
}

ReplayResult replay_manifest(const fs::path& manifest_path) {
  const RunManifest m = load_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  ReplayResult out;
  out.problems = verify_manifest(m, base);
  if (!out.problems.empty()) return out;
  if (m.command != "sweep") {
    out.problems.push_back("cannot replay command '" + m.command + "'");
    return out;
  }
  const fs::path config_path = fs::path(m.config_path).is_absolute() ? fs::path(m.config_path)
                                                                      : (base / m.config_path).lexically_normal();
  ExperimentConfig config = load_experiment_config(config_path);
  if (auto it = m.seeds.find("seed"); it != m.seeds.end()) {
    config.seed = it->second;
    config.toy.seed = it->second;
  }
  // the run may have used a different store root than the config default
  if (base.parent_path().filename() == "runs") config.output_dir = base.parent_path().parent_path();
  ExperimentContext ctx(std::move(config));
  const SweepResult result = run_sweep(ctx, m.parameters);
  out.markdown = emit_report(result, ReportFormat::kMarkdown);
  out.csv = emit_report(result, ReportFormat::kCsv);
  for (const auto& a : m.artifacts) {
    const std::string& fresh = a.role == "report.md" ? out.markdown : out.csv;
    if (sha256_hex(fresh) != a.sha256) out.problems.push_back(a.role + ": replayed bytes differ");
  }
  out.identical = out.problems.empty();
  return out;
}

}  // namespace traitsteer
