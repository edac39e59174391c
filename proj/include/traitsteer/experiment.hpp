#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "traitsteer/assessment.hpp"
#include "traitsteer/background_features.hpp"
#include "traitsteer/model_adapter.hpp"
#include "traitsteer/registry_store.hpp"
#include "traitsteer/sae.hpp"
#include "traitsteer/steering.hpp"
#include "traitsteer/toy_model.hpp"

namespace traitsteer {

enum class Harness { kPersonality, kSafety };
const char* to_string(Harness h) noexcept;
Harness harness_from_string(const std::string& name);

struct ScanSettings {
  std::string probe_prompt = "Question: Do you enjoy meeting new people?\n(A) Yes\n(B) No\nAnswer: (";
  std::string generation_prompt = "Tell me about yourself.";
  std::vector<std::string> options{"A", "B"};
  std::size_t max_tokens = 32;
  std::size_t stability_window = 3;
  OverSteerSettings over_steer;
};

/// Parsed experiment file. Relative paths are resolved against the directory
/// holding the config. See README for the schema.
struct ExperimentConfig {
  std::filesystem::path config_path;
  std::uint64_t seed = 0;

  std::optional<std::filesystem::path> checkpoint;  // toy checkpoint; otherwise built from `toy`
  ToyModelConfig toy;
  ModelProfile profile;

  std::filesystem::path output_dir;  // store root: registries/, directions/, saes/, runs/
  std::optional<std::filesystem::path> registry;
  std::optional<std::filesystem::path> sae;
  std::vector<std::pair<std::string, std::filesystem::path>> directions;  // pressure -> file
  std::optional<std::filesystem::path> personality_items;
  std::optional<std::filesystem::path> safety_items;
  PromptTemplate prompt_template;
  std::size_t top_k_average = 1;
  std::size_t threads = 1;

  std::optional<std::filesystem::path> factors;
  std::optional<std::filesystem::path> contrast_pairs;
  std::optional<std::filesystem::path> questions;
  std::optional<std::filesystem::path> sae_corpus;  // extra text lines for SAE training
  std::optional<SAETrainConfig> sae_training;
  SearchThresholds thresholds;
  std::size_t registry_k = 2;
  ScanSettings scan;

  StoreLayout layout() const { return StoreLayout{output_dir}; }
  std::filesystem::path registry_path() const;
  std::filesystem::path sae_path() const;
  std::filesystem::path direction_path(const std::string& pressure) const;
};

ExperimentConfig parse_experiment_config(std::string_view text,
                                         const std::filesystem::path& config_path);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::unique_ptr<ModelAdapter> build_model(const ExperimentConfig& config);

/// Owns the model and caches unsteered scores per (harness, item file) so
/// every sweep over the same profile shares one Base column.
class ExperimentContext {
 public:
  explicit ExperimentContext(ExperimentConfig config);
  ExperimentContext(ExperimentConfig config, std::unique_ptr<ModelAdapter> model);

  const ExperimentConfig& config() const { return config_; }
  const ModelAdapter& model() const { return *model_; }

  const std::vector<AssessmentItem>& items(Harness h);
  const ScoreTable& base_scores(Harness h);
  ScoreTable score(Harness h, std::span<const SteeringHook> hooks);

  const FactorRegistry& registry();
  const SAEModel& sae();

 private:
  ExperimentConfig config_;
  std::unique_ptr<ModelAdapter> model_;
  std::map<std::string, std::vector<AssessmentItem>> items_;
  std::map<std::string, ScoreTable> base_;
  std::optional<FactorRegistry> registry_;
  std::optional<SAEModel> sae_;
};

/// Subscale x condition matrix against one Base column.
struct SweepResult {
  std::string title;
  Harness harness = Harness::kPersonality;
  std::vector<std::string> conditions;
  std::vector<std::string> subscales;
  std::map<std::string, double> base;                               // subscale -> score
  std::map<std::string, std::map<std::string, SubscaleReport>> rows;  // subscale -> condition -> report
  std::map<std::string, std::size_t> highlight;                     // subscale -> condition index

  const SubscaleReport& at(const std::string& subscale, const std::string& condition) const;
};

/// Condition with the largest |delta| per subscale; earlier conditions win ties.
std::map<std::string, std::size_t> compute_highlights(const SweepResult& result);

/// Steering vector for one registry category: the top feature, or the mean
/// of the top `top_k` decoder rows.
FeatureVector category_feature(const RegistryCategory& category, const SAEModel& sae,
                               std::size_t top_k);

SweepResult assemble_sweep(std::string title, Harness harness, const ScoreTable& base,
                           const std::vector<std::pair<std::string, ScoreTable>>& steered);

/// One condition per category of `factor`, steering its registry feature at
/// the profile's background coefficient.
SweepResult run_factor_sweep(ExperimentContext& ctx, const std::string& factor, Harness harness);

/// One condition per configured pressure direction, last-position hooks at
/// the profile's pressure coefficient.
SweepResult run_pressure_sweep(ExperimentContext& ctx, Harness harness);

enum class ReportFormat { kMarkdown, kCsv };

/// Markdown bolds the highlighted cell when its delta is non-zero. CSV holds
/// subscale,condition,base,steered,delta,direction with full-precision scores.
std::string emit_report(const SweepResult& result, ReportFormat format);

struct CsvReportRow {
  std::string subscale;
  std::string condition;
  double base = 0.0;
  double steered = 0.0;
  double delta = 0.0;
  std::string direction;
};
std::vector<CsvReportRow> parse_report_csv(std::string_view csv);

/// Output of a sweep written to runs/<timestamp>/.
struct RunRecord {
  std::filesystem::path run_dir;
  std::filesystem::path manifest_path;
  std::string markdown;
  std::string csv;
};

/// Sweep parameters: "kind" = factor|pressure, "factor", "harness".
SweepResult run_sweep(ExperimentContext& ctx, const std::map<std::string, std::string>& params);

/// Runs the sweep, writes report.md, report.csv and manifest.json.
RunRecord run_and_record(ExperimentContext& ctx, const std::map<std::string, std::string>& params,
                         const std::string& timestamp);

struct ReplayResult {
  bool identical = false;
  std::vector<std::string> problems;
  std::string markdown;
  std::string csv;
};

/// Verifies input digests, re-runs the sweep from the recorded config and
/// parameters, and compares the new report bytes to the recorded ones.
ReplayResult replay_manifest(const std::filesystem::path& manifest_path);

}  // namespace traitsteer
