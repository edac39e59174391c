#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "traitsteer/assessment.hpp"
#include "traitsteer/error.hpp"
#include "traitsteer/steering.hpp"

using namespace traitsteer;

namespace {

AssessmentItem item(std::string id, std::string sub, std::set<std::string> aligned) {
  AssessmentItem it;
  it.id = std::move(id);
  it.question = "q";
  it.options = {{"A", "a"}, {"B", "b"}, {"C", "c"}, {"D", "d"}};
  it.subscale = std::move(sub);
  it.aligned_keys = std::move(aligned);
  return it;
}

}  // namespace

TEST_CASE("shipped fixtures load") {
  const auto p = load_items(TRAITSTEER_DATA_DIR "/personality_items.jsonl");
  CHECK(p.size() == 24);
  std::set<std::string> subs;
  for (const auto& it : p) subs.insert(it.subscale);
  CHECK(subs.size() == 8);
  for (const auto& s : subs)
    CHECK(std::find(personality_subscales().begin(), personality_subscales().end(), s) !=
          personality_subscales().end());
  const auto s = load_items(TRAITSTEER_DATA_DIR "/safety_items.jsonl");
  CHECK(s.size() == 14);
  CHECK(safety_categories().front() == "Average");
  CHECK(safety_categories().size() == 8);
}

TEST_CASE("item validation") {
  const std::string good =
      R"({"id":"x1","question":"q","options":{"A":"a","B":"b"},"subscale":"S","aligned_keys":["A"]})";
  CHECK(parse_items(good, "t").size() == 1);
  CHECK(parse_items(good + "\n\n", "t").size() == 1);

  const std::string bad_key =
      R"({"id":"x1","question":"q","options":{"A":"a","B":"b"},"subscale":"S","aligned_keys":["E"]})";
  try {
    parse_items(bad_key, "fixture.jsonl");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("fixture.jsonl:1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_items(good + "\n" + good, "t"), Error);
  try {
    parse_items(good + "\n" + good, "dup.jsonl");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_items("{not json", "t"), Error);

  AssessmentItem it = item("a", "S", {"A"});
  it.options = {{"A", "a"}};
  CHECK_THROWS_AS(it.validate(), Error);
  it = item("a", "Average", {"A"});
  CHECK_THROWS_AS(it.validate(), Error);
  it = item("a", "S", {});
  CHECK_THROWS_AS(it.validate(), Error);
  it = item("a", "S", {"A"});
  it.options["ab"] = "x";
  CHECK_THROWS_AS(it.validate(), Error);
}

TEST_CASE("items are sorted by id") {
  const std::string text =
      R"({"id":"b","question":"q","options":{"A":"a","B":"b"},"subscale":"S","aligned_keys":["A"]})"
      "\n"
      R"({"id":"a","question":"q","options":{"A":"a","B":"b"},"subscale":"S","aligned_keys":["A"]})";
  const auto items = parse_items(text, "t");
  CHECK(items[0].id == "a");
  CHECK(items[1].id == "b");
}

TEST_CASE("prompt ends with the answer cue") {
  const auto it = item("a", "S", {"A"});
  const std::string p = PromptTemplate{}.render(it);
  CHECK(p.ends_with("Answer: ("));
  CHECK(p.find("(A) a") != std::string::npos);
  CHECK(p.find("(D) d") != std::string::npos);
}

TEST_CASE("rigged model always answers A") {
  const ToyModel m = tsupport::toy(2, 16);
  FeatureVector f;
  f.kind = FeatureKind::kPressure;
  f.values = m.weights().token_embedding.row('A').transpose();
  const std::vector<SteeringHook> hooks{make_hook(f, 500.0, 1, m)};
  const auto items = load_items(TRAITSTEER_DATA_DIR "/personality_items.jsonl");
  const AnswerSheet sheet = answer_items(m, items, hooks);
  for (const auto& [id, key] : sheet) CHECK(key == "A");
  const ScoreTable s = run_inventory(m, items, hooks);
  CHECK(s == oracle::count_scores(items, sheet));
  // aligned keys rotate AB, CD, AC, BD; three items per subscale
  CHECK(s.at("Agreeableness") == doctest::Approx(200.0 / 3.0));
}

TEST_CASE("zero coefficient answers match the unhooked model") {
  const ToyModel m = tsupport::toy(2, 16, 5);
  FeatureVector f;
  f.kind = FeatureKind::kBackground;
  f.values = Eigen::VectorXd::Ones(16);
  const std::vector<SteeringHook> hooks{make_hook(f, 0.0, 0, m)};
  const auto items = load_items(TRAITSTEER_DATA_DIR "/safety_items.jsonl");
  CHECK(answer_items(m, items, hooks) == answer_items(m, items, {}));
  EvalOptions threaded;
  threaded.threads = 4;
  CHECK(answer_items(m, items, {}, threaded) == answer_items(m, items, {}));
}

TEST_CASE("counting agrees with an independent oracle") {
  std::mt19937_64 rng(2024);
  const std::vector<std::string> keys{"A", "B", "C", "D"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<AssessmentItem> items;
    AnswerSheet answers;
    const int n = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) {
      std::set<std::string> aligned{keys[rng() % 4]};
      if (rng() % 2) aligned.insert(keys[rng() % 4]);
      items.push_back(item("i" + std::to_string(i), "S" + std::to_string(rng() % 5), aligned));
      answers[items.back().id] = keys[rng() % 4];
    }
    const auto expected = oracle::count_scores(items, answers);
    const auto got = scores_from_counts(tally(items, answers));
    REQUIRE(got.size() == expected.size());
    for (const auto& [s, v] : expected) CHECK(got.at(s) == doctest::Approx(v).epsilon(1e-12));

    // permutation invariance
    std::shuffle(items.begin(), items.end(), rng);
    CHECK(scores_from_counts(tally(items, answers)) == got);

    // additivity over a split
    const std::size_t cut = rng() % (items.size() + 1);
    CountTable merged = tally(std::span(items).first(cut), answers);
    merge_counts(merged, tally(std::span(items).subspan(cut), answers));
    CHECK(merged == tally(items, answers));
  }
}

TEST_CASE("small count examples") {
  std::vector<AssessmentItem> items{item("1", "S", {"A"}), item("2", "S", {"A"}), item("3", "S", {"A"}),
                                    item("4", "S", {"A"})};
  AnswerSheet ans{{"1", "A"}, {"2", "A"}, {"3", "A"}, {"4", "B"}};
  CHECK(scores_from_counts(tally(items, ans)).at("S") == 75.0);

  std::vector<AssessmentItem> two{item("1", "T", {"B"}), item("2", "T", {"B"})};
  CHECK(scores_from_counts(tally(two, {{"1", "B"}, {"2", "A"}})).at("T") == 50.0);
  CHECK_THROWS_AS(tally(two, {{"1", "B"}}), Error);
}

TEST_CASE("safety average is the unweighted category mean") {
  CountTable c{{"PP", {1, 2}}, {"UB", {9, 10}}};
  const ScoreTable s = safety_scores_from_counts(c);
  CHECK(s.at("Average") == doctest::Approx(70.0));
  CHECK(s.size() == 3);
  CHECK(safety_scores_from_counts({}).empty());
}

TEST_CASE("delta cells") {
  CHECK(make_report("x", 93.0, 92.7).cell() == "92.7 ↓ (0.3)");
  CHECK(make_report("x", 78.0, 76.4).cell() == "76.4 ↓ (1.6)");
  CHECK(make_report("x", 4.3, 4.3).cell() == "4.3");
  CHECK(make_report("x", 79.2, 81.2).cell() == "81.2 ↑ (2.0)");
  const auto r = make_report("x", 93.0, 92.7);
  CHECK(r.direction == DeltaDirection::kDown);
  CHECK(r.delta == doctest::Approx(0.3));
  CHECK(format_score(93.0) == "93.0");
  CHECK(round1(0.05) == doctest::Approx(0.1));
  CHECK(round1(2.25) == doctest::Approx(2.3));
  // unrounded scores that print the same are flat
  CHECK(make_report("x", 66.666666, 66.6500001).direction == DeltaDirection::kFlat);
}

TEST_CASE("printed delta is the difference of printed scores") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 500; ++i) {
    const double a = u(rng), b = u(rng);
    const auto r = make_report("x", a, b);
    const double diff = std::abs(std::stod(format_score(b)) - std::stod(format_score(a)));
    CHECK(format_score(r.delta) == format_score(diff));
  }
}

TEST_CASE("subscale ordering") {
  ScoreTable s{{"Zeta", 1}, {"Average", 2}, {"PP", 3}, {"Alpha", 4}};
  const auto order = ordered_subscales(s, safety_categories());
  CHECK(order == std::vector<std::string>{"Average", "PP", "Alpha", "Zeta"});
}
