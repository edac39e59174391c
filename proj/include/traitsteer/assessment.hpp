#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "traitsteer/hook.hpp"
#include "traitsteer/model_adapter.hpp"

namespace traitsteer {

/// Personality subscales in report order.
const std::vector<std::string>& personality_subscales();
/// Safety categories in report order, "Average" first.
const std::vector<std::string>& safety_categories();
inline constexpr std::string_view kAverageRow = "Average";

/// One multiple-choice question. For personality items `aligned_keys` are
/// the options that count toward the subscale; for safety items it holds the
/// correct key.
struct AssessmentItem {
  std::string id;
  std::string question;
  std::map<std::string, std::string> options;  // key -> text
  std::string subscale;
  std::set<std::string> aligned_keys;

  void validate() const;
};

/// JSON-lines: {"id", "question", "options": {"A": ...}, "subscale",
/// "aligned_keys": [...]}. Blank lines are skipped. Errors name the line.
/// Items come back sorted by id.
std::vector<AssessmentItem> parse_items(std::string_view text, const std::string& source);
std::vector<AssessmentItem> load_items(const std::filesystem::path& path);

/// Fixed instruction block, question, lettered options, then an answer cue
/// after which the option key is the next token.
struct PromptTemplate {
  std::string version = "mcq-v1";
  std::string instruction =
      "Read the question and pick one option. Reply with the option letter only.";
  std::string answer_cue = "Answer: (";

  std::string render(const AssessmentItem& item) const;
};

/// Argmax of the option-key logits; exact ties go to the alphabetically
/// first key.
std::string answer_item(const ModelAdapter& model, const AssessmentItem& item,
                        std::span<const SteeringHook> hooks, const PromptTemplate& tmpl = {});

struct SubscaleCount {
  std::size_t aligned = 0;
  std::size_t total = 0;
  bool operator==(const SubscaleCount&) const = default;
};

using CountTable = std::map<std::string, SubscaleCount>;
using ScoreTable = std::map<std::string, double>;

/// Item id -> chosen key.
using AnswerSheet = std::map<std::string, std::string>;

struct EvalOptions {
  PromptTemplate tmpl;
  std::size_t threads = 1;  // items are independent; results merge by id
};

AnswerSheet answer_items(const ModelAdapter& model, std::span<const AssessmentItem> items,
                         std::span<const SteeringHook> hooks, const EvalOptions& options = {});

CountTable tally(std::span<const AssessmentItem> items, const AnswerSheet& answers);
void merge_counts(CountTable& into, const CountTable& from);

/// 100 * aligned / total per subscale; subscales with no items are absent.
ScoreTable scores_from_counts(const CountTable& counts);

/// Per-category accuracy plus "Average", the unweighted mean over the
/// categories present.
ScoreTable safety_scores_from_counts(const CountTable& counts);

ScoreTable run_inventory(const ModelAdapter& model, std::span<const AssessmentItem> items,
                         std::span<const SteeringHook> hooks, const EvalOptions& options = {});
ScoreTable run_safety(const ModelAdapter& model, std::span<const AssessmentItem> items,
                      std::span<const SteeringHook> hooks, const EvalOptions& options = {});

enum class DeltaDirection { kUp, kDown, kFlat };
const char* to_string(DeltaDirection d) noexcept;

/// Half-up rounding to one decimal place.
double round1(double value);

/// Scores are rounded before comparison so the printed delta always equals
/// the difference of the printed scores.
struct SubscaleReport {
  std::string subscale;
  double base_score = 0.0;
  double steered_score = 0.0;
  double delta = 0.0;  // |round1(steered) - round1(base)|, rounded
  DeltaDirection direction = DeltaDirection::kFlat;

  /// "92.7 ↓ (0.3)", "81.2 ↑ (2.0)", or bare "4.3" when flat.
  std::string cell() const;
};

SubscaleReport make_report(const std::string& subscale, double base, double steered);

/// One decimal place, e.g. "93.0".
std::string format_score(double value);

/// Canonical order first, then any remaining names alphabetically.
std::vector<std::string> ordered_subscales(const ScoreTable& scores,
                                           const std::vector<std::string>& canonical);

}  // namespace traitsteer
