// traitsteer: command-line front end. Every subcommand prints one JSON
// document on stdout; failures print {"error": {...}} on stderr.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "traitsteer/assessment.hpp"
#include "traitsteer/background_features.hpp"
#include "traitsteer/error.hpp"
#include "traitsteer/experiment.hpp"
#include "traitsteer/io.hpp"
#include "traitsteer/pressure_features.hpp"
#include "traitsteer/registry_store.hpp"
#include "traitsteer/sae.hpp"
#include "traitsteer/steering.hpp"

namespace fs = std::filesystem;
using namespace traitsteer;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
};

ExperimentConfig load_config(const GlobalOptions& g) {
  if (g.config.empty()) throw Error(ErrorCode::kInvalidArgument, "--config is required");
  ExperimentConfig c = load_experiment_config(g.config);
  if (g.seed) {
    c.seed = *g.seed;
    c.toy.seed = *g.seed;
  }
  if (!g.output_dir.empty()) c.output_dir = g.output_dir;
  return c;
}

void print(const Json& doc) { std::cout << dump_json(doc); }

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  for (auto& line : split_descriptor_block(read_file(path))) {
    if (line.front() != '#') lines.push_back(std::move(line));
  }
  return lines;
}

// ---- extract-background ------------------------------------------------------

void extract_background(const GlobalOptions& g, bool retrain) {
  const ExperimentConfig c = load_config(g);
  if (!c.factors) throw Error(ErrorCode::kInvalidArgument, "config has no extraction.factors file");
  const auto specs = load_factor_specs(*c.factors);
  auto model = build_model(c);
  Json out = Json::object();

  SAEModel sae;
  const fs::path sae_path = c.sae_path();
  if (fs::exists(sae_path) && !retrain) {
    std::vector<std::string> warnings;
    sae = load_sae(sae_path, &warnings);
    out["sae_warnings"] = warnings;
    out["sae_trained"] = false;
  } else {
    if (!c.sae_training) {
      throw Error(ErrorCode::kInvalidArgument,
                  sae_path.string() + " does not exist and the config has no extraction.sae_training block");
    }
    std::vector<std::string> corpus;
    for (const auto& spec : specs) {
      for (auto& p : spec.all_phrases()) corpus.push_back(std::move(p));
    }
    if (c.questions) {
      for (auto& q : load_questions(*c.questions)) corpus.push_back(std::move(q));
    }
    if (c.sae_corpus) {
      for (auto& l : read_lines(*c.sae_corpus)) corpus.push_back(std::move(l));
    }
    const Eigen::MatrixXd acts = collect_residual_rows(corpus, c.profile.layer, *model);
    SAETrainConfig tc = *c.sae_training;
    tc.seed = c.seed;
    tc.layer = c.profile.layer;
    SAETrainResult trained = sae_train(acts, tc);
    sae = std::move(trained.model);
    sae.id = model->info().model_id + "-sae-l" + std::to_string(c.profile.layer) + "-s" + std::to_string(c.seed);
    save_sae(sae, sae_path);
    out["sae_trained"] = true;
    out["training_rows"] = acts.rows();
    out["initial_holdout_loss"] = trained.initial_holdout_loss;
    out["final_holdout_loss"] = trained.final_holdout_loss;
  }

  RegistryBuildOptions options;
  options.thresholds = c.thresholds;
  options.k = c.registry_k;
  options.sae_id = sae.id;
  std::vector<std::string> warnings;
  const FactorRegistry registry = build_factor_registry(specs, sae, *model, options, &warnings);
  const fs::path registry_path = c.registry_path();
  save_registry(registry, registry_path);

  out["sae"] = sae_path.string();
  out["registry"] = registry_path.string();
  out["features"] = registry.all_indices().size();
  out["warnings"] = warnings;
  print(out);
}

// ---- extract-pressure --------------------------------------------------------

void extract_pressure(const GlobalOptions& g) {
  const ExperimentConfig c = load_config(g);
  if (!c.contrast_pairs || !c.questions) {
    throw Error(ErrorCode::kInvalidArgument, "config needs extraction.contrast_pairs and extraction.questions");
  }
  const auto pairs = load_contrast_pairs(*c.contrast_pairs);
  const auto questions = load_questions(*c.questions);
  auto model = build_model(c);
  Json out = Json::array();
  for (const auto& pair : pairs) {
    const StimulusSet stimuli = build_contrast_dataset(pair, questions);
    const LastTokenActivations acts = capture_last_token_activations(stimuli, c.profile.layer, *model);
    const DirectionResult d = direction_extract(acts.positive, acts.negative, c.profile.layer, pair.pressure);
    const fs::path path = c.direction_path(pair.pressure);
    save_direction(d, path);
    out.push_back(Json{{"pressure", pair.pressure},
                       {"path", path.string()},
                       {"explained_variance", d.diagnostics.explained_variance},
                       {"sign_alignment", d.diagnostics.sign_alignment}});
  }
  print(Json{{"directions", out}});
}

// ---- feature selection shared by scan and assess -----------------------------

struct FeatureChoice {
  std::string factor;
  std::string category;
  std::string pressure;
};

FeatureVector resolve_feature(ExperimentContext& ctx, const FeatureChoice& f) {
  if (!f.pressure.empty()) {
    const fs::path path = ctx.config().direction_path(f.pressure);
    if (!fs::exists(path)) {
      throw Error(ErrorCode::kMissingDirection, "direction for '" + f.pressure + "' not found at " + path.string());
    }
    return load_direction(path).direction;
  }
  if (f.factor.empty() || f.category.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "pick a feature with --factor and --category, or --pressure");
  }
  const RegistryFactor* factor = ctx.registry().find(f.factor);
  if (!factor) throw Error(ErrorCode::kMissingFactor, "registry has no factor '" + f.factor + "'");
  const RegistryCategory* category = factor->find(f.category);
  if (!category) {
    throw Error(ErrorCode::kMissingFactor, "factor '" + f.factor + "' has no category '" + f.category + "'");
  }
  return category_feature(*category, ctx.sae(), ctx.config().top_k_average);
}

// ---- scan --------------------------------------------------------------------

void scan(const GlobalOptions& g, const FeatureChoice& choice, std::optional<double> start,
          std::optional<double> stop, std::optional<double> step) {
  ExperimentContext ctx(load_config(g));
  const ExperimentConfig& c = ctx.config();
  const FeatureVector feature = resolve_feature(ctx, choice);
  GridSpec grid = feature.kind == FeatureKind::kPressure ? c.profile.pressure_grid : c.profile.background_grid;
  if (start) grid.start = *start;
  if (stop) grid.stop = *stop;
  if (step) grid.step = *step;
  const auto values = grid.values();

  const LikelihoodCurve curve =
      coefficient_scan(ctx.model(), feature, c.profile.layer, values, c.scan.probe_prompt, c.scan.options);
  const auto generations = scan_generations(ctx.model(), feature, c.profile.layer, values,
                                            c.scan.generation_prompt, c.scan.max_tokens);

  const std::string name = choice.pressure.empty() ? choice.factor + "-" + choice.category : choice.pressure;
  const fs::path dir = c.output_dir / "scans";
  const fs::path csv_path = dir / (slugify(name) + ".csv");
  atomic_write(csv_path, curve_to_csv(curve));

  Json gens = Json::array();
  for (double v : values) {
    const std::string& text = generations.at(v);
    gens.push_back(Json{{"coefficient", v},
                        {"chosen", curve.chosen[gens.size()]},
                        {"over_steered", over_steer_detect(text, c.scan.over_steer.window, c.scan.over_steer.max_repeat)},
                        {"text", text}});
  }
  Json out = Json::object();
  out["schema_version"] = kSchemaVersion;
  out["feature"] = name;
  out["layer"] = c.profile.layer;
  out["curve_csv"] = csv_path.string();
  out["generations"] = gens;
  try {
    out["selected_coefficient"] = select_coefficient(curve, generations, c.scan.stability_window, c.scan.over_steer);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoAdmissibleCoefficient) throw;
    out["selected_coefficient"] = nullptr;
    out["selection_error"] = e.what();
  }
  const fs::path json_path = dir / (slugify(name) + ".json");
  atomic_write(json_path, dump_json(out));
  print(out);
  if (out["selected_coefficient"].is_null()) {
    throw Error(ErrorCode::kNoAdmissibleCoefficient, out["selection_error"].get<std::string>());
  }
}

// ---- assess ------------------------------------------------------------------

void assess(const GlobalOptions& g, const std::string& harness_name, const FeatureChoice& choice,
            std::optional<double> coefficient) {
  ExperimentContext ctx(load_config(g));
  const Harness harness = harness_from_string(harness_name);
  std::vector<SteeringHook> hooks;
  if (!choice.pressure.empty() || !choice.factor.empty()) {
    const FeatureVector feature = resolve_feature(ctx, choice);
    const double c = coefficient.value_or(feature.kind == FeatureKind::kPressure
                                              ? ctx.config().profile.pressure_coefficient
                                              : ctx.config().profile.background_coefficient);
    hooks.push_back(make_hook(feature, c, ctx.config().profile.layer, ctx.model()));
  }
  const ScoreTable scores = ctx.score(harness, hooks);
  Json table = Json::object();
  for (const auto& name : ordered_subscales(
           scores, harness == Harness::kPersonality ? personality_subscales() : safety_categories())) {
    table[name] = scores.at(name);
  }
  Json out = Json::object();
  out["harness"] = to_string(harness);
  out["steered"] = !hooks.empty();
  if (!hooks.empty()) out["coefficient"] = hooks.front().coefficient;
  out["scores"] = table;
  print(out);
}

// ---- sweep / report ----------------------------------------------------------

void sweep(const GlobalOptions& g, const std::string& kind, const std::string& factor,
           const std::string& harness, const std::string& timestamp) {
  ExperimentContext ctx(load_config(g));
  std::map<std::string, std::string> params{{"kind", kind}, {"harness", harness}};
  if (kind == "factor") params["factor"] = factor;
  const RunRecord rec = run_and_record(ctx, params, timestamp.empty() ? utc_timestamp() : timestamp);
  print(Json{{"run_dir", rec.run_dir.string()},
             {"manifest", rec.manifest_path.string()},
             {"report_md", (rec.run_dir / "report.md").string()},
             {"report_csv", (rec.run_dir / "report.csv").string()}});
}

void report(const std::string& manifest, const std::string& format, bool replay) {
  const fs::path path = fs::is_directory(manifest) ? fs::path(manifest) / "manifest.json" : fs::path(manifest);
  if (format != "markdown" && format != "csv") {
    throw Error(ErrorCode::kInvalidArgument, "--format must be markdown or csv");
  }
  if (replay) {
    const ReplayResult r = replay_manifest(path);
    if (!r.identical) {
      std::string msg = "replay mismatch";
      for (const auto& p : r.problems) msg += "; " + p;
      throw Error(ErrorCode::kDigestMismatch, msg);
    }
    std::cout << (format == "csv" ? r.csv : r.markdown);
    return;
  }
  const auto problems = verify_manifest(load_manifest(path), path.parent_path());
  if (!problems.empty()) {
    std::string msg = "manifest verification failed";
    for (const auto& p : problems) msg += "; " + p;
    throw Error(ErrorCode::kDigestMismatch, msg);
  }
  std::cout << read_file(path.parent_path() / (format == "csv" ? "report.csv" : "report.md"));
}

int fail(const std::string& code, const std::string& message, int status) {
  std::cerr << Json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Steer a language model with background and pressure features and score the result."};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("-c,--config", g.config, "experiment config (JSON)");
  auto* seed_opt = app.add_option("-s,--seed", seed, "override the config seed");
  app.add_option("-o,--output-dir", g.output_dir, "override the store root");

  auto* bg = app.add_subcommand("extract-background", "train or load the SAE and build the factor registry");
  bool retrain = false;
  bg->add_flag("--retrain", retrain, "train a new SAE even if one exists");

  auto* pr = app.add_subcommand("extract-pressure", "extract one direction per contrast pair");

  FeatureChoice choice;
  auto add_feature_opts = [&](CLI::App* sub) {
    sub->add_option("--factor", choice.factor, "registry factor");
    sub->add_option("--category", choice.category, "category within the factor");
    sub->add_option("--pressure", choice.pressure, "pressure direction name");
  };

  auto* sc = app.add_subcommand("scan", "likelihood curve and over-steer check over a coefficient grid");
  add_feature_opts(sc);
  std::optional<double> start, stop, step;
  sc->add_option("--start", start);
  sc->add_option("--stop", stop);
  sc->add_option("--step", step);

  auto* as = app.add_subcommand("assess", "score an item file, optionally under one hook");
  add_feature_opts(as);
  std::string harness = "personality";
  std::optional<double> coefficient;
  as->add_option("--harness", harness, "personality or safety");
  as->add_option("--coefficient", coefficient, "defaults to the profile coefficient");

  auto* sw = app.add_subcommand("sweep", "run a factor or pressure sweep and record it under runs/");
  std::string kind = "factor", factor, timestamp;
  sw->add_option("--kind", kind, "factor or pressure");
  sw->add_option("--factor", factor, "registry factor for factor sweeps");
  sw->add_option("--harness", harness, "personality or safety");
  sw->add_option("--timestamp", timestamp, "run directory name (default: current UTC time)");

  auto* rp = app.add_subcommand("report", "print a recorded report, optionally replaying it first");
  std::string manifest, format = "markdown";
  bool replay = false;
  rp->add_option("manifest", manifest, "manifest.json or its run directory")->required();
  rp->add_option("--format", format, "markdown or csv");
  rp->add_flag("--replay", replay, "re-run from the manifest and require identical bytes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*bg) extract_background(g, retrain);
    if (*pr) extract_pressure(g);
    if (*sc) scan(g, choice, start, stop, step);
    if (*as) assess(g, harness, choice, coefficient);
    if (*sw) sweep(g, kind, factor, harness, timestamp);
    if (*rp) report(manifest, format, replay);
  } catch (const Error& e) {
    return fail(to_string(e.code()), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
