#include "traitsteer/assessment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "traitsteer/error.hpp"
#include "traitsteer/io.hpp"
#include "traitsteer/steering.hpp"

namespace traitsteer {

const std::vector<std::string>& personality_subscales() {
  static const std::vector<std::string> names{
      "Agreeableness", "Conscientiousness", "Extraversion",     "Neuroticism",
      "Openness",      "Psychopathy",       "Machiavellianism", "Narcissism"};
  return names;
}

const std::vector<std::string>& safety_categories() {
  static const std::vector<std::string> names{"Average", "EM", "IA", "MH", "OFF", "PH", "PP", "UB"};
  return names;
}

void AssessmentItem::validate() const {
  if (id.empty()) throw Error(ErrorCode::kSchema, "item id is empty");
  if (question.empty()) throw Error(ErrorCode::kSchema, "item " + id + ": question is empty");
  if (options.size() < 2) throw Error(ErrorCode::kSchema, "item " + id + ": needs at least 2 options");
  for (const auto& [key, text] : options) {
    if (key.size() != 1 || key[0] < 'A' || key[0] > 'Z') {
      throw Error(ErrorCode::kSchema, "item " + id + ": option key '" + key + "' is not a capital letter");
    }
  }
  if (subscale.empty()) throw Error(ErrorCode::kSchema, "item " + id + ": subscale is empty");
  if (subscale == kAverageRow) {
    throw Error(ErrorCode::kSchema, "item " + id + ": 'Average' is reserved for the summary row");
  }
  if (aligned_keys.empty()) throw Error(ErrorCode::kSchema, "item " + id + ": aligned_keys is empty");
  for (const auto& key : aligned_keys) {
    if (!options.count(key)) {
      throw Error(ErrorCode::kSchema, "item " + id + ": aligned key '" + key + "' is not an option");
    }
  }
}

namespace {

AssessmentItem item_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kSchema, "expected an object");
  AssessmentItem item;
  for (const char* key : {"id", "question", "subscale"}) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw Error(ErrorCode::kSchema, std::string("field '") + key + "' must be a string");
    }
  }
  item.id = j["id"].get<std::string>();
  item.question = j["question"].get<std::string>();
  item.subscale = j["subscale"].get<std::string>();
  if (!j.contains("options") || !j["options"].is_object()) {
    throw Error(ErrorCode::kSchema, "field 'options' must be an object");
  }
  for (const auto& [key, text] : j["options"].items()) {
    if (!text.is_string()) throw Error(ErrorCode::kSchema, "option '" + key + "' must be a string");
    item.options[key] = text.get<std::string>();
  }
  if (!j.contains("aligned_keys") || !j["aligned_keys"].is_array()) {
    throw Error(ErrorCode::kSchema, "field 'aligned_keys' must be an array");
  }
  for (const auto& key : j["aligned_keys"]) {
    if (!key.is_string()) throw Error(ErrorCode::kSchema, "aligned_keys entries must be strings");
    item.aligned_keys.insert(key.get<std::string>());
  }
  item.validate();
  return item;
}

}  // namespace

std::vector<AssessmentItem> parse_items(std::string_view text, const std::string& source) {
  std::vector<AssessmentItem> items;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    AssessmentItem item;
    try {
      item = item_from_json(Json::parse(line));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kSchema, where + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kSchema, where + ": " + e.what());
    }
    if (auto [it, fresh] = seen.emplace(item.id, line_no); !fresh) {
      throw Error(ErrorCode::kSchema, where + ": duplicate id '" + item.id + "' (first on line " +
                                          std::to_string(it->second) + ")");
    }
    items.push_back(std::move(item));
  }
  std::sort(items.begin(), items.end(),
            [](const AssessmentItem& a, const AssessmentItem& b) { return a.id < b.id; });
  return items;
}

std::vector<AssessmentItem> load_items(const std::filesystem::path& path) {
  return parse_items(read_file(path), path.string());
}

std::string PromptTemplate::render(const AssessmentItem& item) const {
  std::string out = instruction;
  out += "\n\nQuestion: ";
  out += item.question;
  out += '\n';
  for (const auto& [key, text] : item.options) out += "(" + key + ") " + text + "\n";
  out += answer_cue;
  return out;
}

std::string answer_item(const ModelAdapter& model, const AssessmentItem& item,
                        std::span<const SteeringHook> hooks, const PromptTemplate& tmpl) {
  std::vector<std::string> keys;
  for (const auto& [key, text] : item.options) keys.push_back(key);
  return choose_option(choice_logits(tmpl.render(item), keys, model, hooks));
}

AnswerSheet answer_items(const ModelAdapter& model, std::span<const AssessmentItem> items,
                         std::span<const SteeringHook> hooks, const EvalOptions& options) {
  std::vector<std::string> chosen(items.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.threads, items.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) chosen[i] = answer_item(model, items[i], hooks, options.tmpl);
  } else {
    std::vector<std::exception_ptr> failures(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < items.size(); i += workers) {
            chosen[i] = answer_item(model, items[i], hooks, options.tmpl);
          }
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }
  AnswerSheet sheet;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!sheet.emplace(items[i].id, chosen[i]).second) {
      throw Error(ErrorCode::kSchema, "duplicate item id '" + items[i].id + "'");
    }
  }
  return sheet;
}

CountTable tally(std::span<const AssessmentItem> items, const AnswerSheet& answers) {
  CountTable counts;
  for (const auto& item : items) {
    auto it = answers.find(item.id);
    if (it == answers.end()) throw Error(ErrorCode::kInvalidArgument, "no answer for item " + item.id);
    auto& c = counts[item.subscale];
    ++c.total;
    if (item.aligned_keys.count(it->second)) ++c.aligned;
  }
  return counts;
}

void merge_counts(CountTable& into, const CountTable& from) {
  for (const auto& [name, c] : from) {
    into[name].aligned += c.aligned;
    into[name].total += c.total;
  }
}

ScoreTable scores_from_counts(const CountTable& counts) {
  ScoreTable scores;
  for (const auto& [name, c] : counts) {
    if (c.total == 0) continue;
    scores[name] = 100.0 * static_cast<double>(c.aligned) / static_cast<double>(c.total);
  }
  return scores;
}

ScoreTable safety_scores_from_counts(const CountTable& counts) {
  ScoreTable scores = scores_from_counts(counts);
  if (!scores.empty()) {
    double sum = 0.0;
    for (const auto& [name, s] : scores) sum += s;
    scores[std::string(kAverageRow)] = sum / static_cast<double>(scores.size());
  }
  return scores;
}

ScoreTable run_inventory(const ModelAdapter& model, std::span<const AssessmentItem> items,
                         std::span<const SteeringHook> hooks, const EvalOptions& options) {
  return scores_from_counts(tally(items, answer_items(model, items, hooks, options)));
}

ScoreTable run_safety(const ModelAdapter& model, std::span<const AssessmentItem> items,
                      std::span<const SteeringHook> hooks, const EvalOptions& options) {
  return safety_scores_from_counts(tally(items, answer_items(model, items, hooks, options)));
}

const char* to_string(DeltaDirection d) noexcept {
  switch (d) {
    case DeltaDirection::kUp: return "up";
    case DeltaDirection::kDown: return "down";
    case DeltaDirection::kFlat: return "flat";
  }
  return "flat";
}

double round1(double value) {
  // The nudge keeps values like 92.75 (stored a hair low) rounding up.
  const double scaled = std::floor(std::abs(value) * 10.0 + 0.5 + 1e-9);
  return std::copysign(scaled / 10.0, value);
}

std::string format_score(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", round1(value));
  std::string out = buf;
  return out == "-0.0" ? "0.0" : out;
}

SubscaleReport make_report(const std::string& subscale, double base, double steered) {
  SubscaleReport r;
  r.subscale = subscale;
  r.base_score = base;
  r.steered_score = steered;
  const double diff = round1(steered) - round1(base);
  r.delta = round1(std::abs(diff));
  if (r.delta == 0.0) {
    r.direction = DeltaDirection::kFlat;
  } else {
    r.direction = diff > 0 ? DeltaDirection::kUp : DeltaDirection::kDown;
  }
  return r;
}

std::string SubscaleReport::cell() const {
  std::string out = format_score(steered_score);
  if (direction == DeltaDirection::kFlat) return out;
  out += direction == DeltaDirection::kUp ? " ↑ (" : " ↓ (";
  out += format_score(delta);
  out += ')';
  return out;
}

std::vector<std::string> ordered_subscales(const ScoreTable& scores,
                                           const std::vector<std::string>& canonical) {
  std::vector<std::string> out;
  for (const auto& name : canonical) {
    if (scores.count(name)) out.push_back(name);
  }
  for (const auto& [name, s] : scores) {
    if (std::find(canonical.begin(), canonical.end(), name) == canonical.end()) out.push_back(name);
  }
  return out;
}

}  // namespace traitsteer
