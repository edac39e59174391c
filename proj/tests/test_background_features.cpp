#include <doctest.h>

#include "support.hpp"
#include "traitsteer/background_features.hpp"
#include "traitsteer/error.hpp"

using namespace traitsteer;

TEST_CASE("descriptor blocks split into trimmed lines") {
  const auto lines = split_descriptor_block("Limited education\n        Basic schooling\n\n   Minimal formal education  ");
  CHECK(lines == std::vector<std::string>{"Limited education", "Basic schooling", "Minimal formal education"});
}

TEST_CASE("factor files: named categories and list form") {
  const auto specs = parse_factor_specs(R"({
    "Gender": ["your gender is woman", "your gender is man"],
    "Socioeconomic status": {"rich": "Well-off family\nAffluent household", "poor": ["Low-income family"]}
  })", "inline");
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].factor == "Gender");
  CHECK(specs[0].categories.size() == 2);
  CHECK(specs[0].categories[0].name == "category_0");
  CHECK(specs[1].categories[0].name == "rich");
  CHECK(specs[1].categories[0].phrases == std::vector<std::string>{"Well-off family", "Affluent household"});
  CHECK(specs[1].all_phrases().size() == 3);
}

TEST_CASE("shipped factor file parses") {
  const auto specs = load_factor_specs(TRAITSTEER_DATA_DIR "/factors.json");
  CHECK(specs.size() == 9);
  for (const auto& s : specs) CHECK_NOTHROW(s.validate());
  CHECK(specs[2].factor == "Education level");
  CHECK(specs[2].categories.size() == 3);
  CHECK(specs[2].categories[0].phrases.size() == 5);
}

TEST_CASE("malformed factor files") {
  CHECK_THROWS_AS(parse_factor_specs("[1, 2]", "x"), Error);
  CHECK_THROWS_AS(parse_factor_specs(R"({"A": {"c": [3]}})", "x"), Error);
  CHECK_THROWS_AS(parse_factor_specs(R"({"A": {"c": []}})", "x"), Error);
}

TEST_CASE("contrastive ranking: thresholds, order, ties, truncation") {
  Eigen::VectorXd pos(6), neg(6);
  pos << 0.5, 0.9, 0.05, 0.9, 0.7, 0.8;
  neg << 0.0, 0.0, 0.0, 0.0, 0.0, 0.3;
  // 2 fails tau_on, 5 fails tau_off; 1 and 3 tie on score -> ascending index.
  CHECK(rank_contrastive(pos, neg, 0.1, 1e-6, 10) == std::vector<std::int64_t>{1, 3, 4, 0});
  CHECK(rank_contrastive(pos, neg, 0.1, 1e-6, 2) == std::vector<std::int64_t>{1, 3});
  CHECK(rank_contrastive(pos, neg, 0.95, 1e-6, 10).empty());
  CHECK_THROWS_AS(rank_contrastive(pos, Eigen::VectorXd::Zero(5), 0.1, 0.0, 3), Error);
  CHECK_THROWS_AS(rank_contrastive(pos, neg, 0.1, 0.2, 3), Error);
}

TEST_CASE("profiles are max-pooled then averaged") {
  const auto p = tsupport::planted_background();
  const Eigen::VectorXd a = pooled_encoding("a ~kind~ voice", p.sae, p.model);
  CHECK(a(p.warm_feature) > 0.0);
  CHECK(a(p.big_feature) == 0.0);
  CHECK(a(p.dense_feature) == 1.0);
  CHECK(a(0) == 0.0);
  const std::vector<std::string> two{"a ~kind~ voice", "a harsh voice"};
  const Eigen::VectorXd prof = activation_profile(two, p.sae, p.model);
  CHECK(prof(p.warm_feature) == doctest::Approx(a(p.warm_feature) / 2));
  CHECK((prof.array() >= 0).all());
}

TEST_CASE("planted search returns the home feature only") {
  const auto p = tsupport::planted_background();
  const auto& tone = p.specs[0];
  const auto found = contrastive_feature_search(tone.categories[0].phrases, tone.categories[1].phrases,
                                                p.sae, p.model, 0.1, 1e-6, 5);
  CHECK(found == std::vector<std::int64_t>{p.warm_feature});
}

TEST_CASE("monosemanticity check") {
  const auto p = tsupport::planted_background();
  CHECK(monosemanticity_check(p.warm_feature, "Tone", p.specs, p.sae, p.model, 1e-6).pass);
  const auto dense = monosemanticity_check(p.dense_feature, "Tone", p.specs, p.sae, p.model, 1e-6);
  CHECK_FALSE(dense.pass);
  CHECK(dense.offending_factors == std::vector<std::string>{"Size"});
  // The Size detector fires on Size phrases, so it is not monosemantic for Tone.
  CHECK_FALSE(monosemanticity_check(p.big_feature, "Tone", p.specs, p.sae, p.model, 1e-6).pass);
}

TEST_CASE("registry build on the planted setup") {
  const auto p = tsupport::planted_background();
  RegistryBuildOptions opt;
  opt.sae_id = "planted";
  std::vector<std::string> warnings;
  const FactorRegistry reg = build_factor_registry(p.specs, p.sae, p.model, opt, &warnings);
  CHECK(reg.layer == 0);
  CHECK(reg.sae_id == "planted");
  REQUIRE(reg.factors.size() == 2);
  const RegistryCategory* warm = reg.find("Tone")->find("warm");
  REQUIRE(warm != nullptr);
  REQUIRE(warm->entries.size() == 1);
  CHECK(warm->entries[0].index == p.warm_feature);
  CHECK(warm->entries[0].explanation == "feature-1");
  CHECK(reg.find("Size")->find("big")->entries[0].index == p.big_feature);
  CHECK(reg.find("Tone")->find("cold")->entries.empty());
  CHECK(warnings.size() == 2);
  CHECK(reg.all_indices() == std::vector<std::int64_t>{p.warm_feature, p.big_feature});
}

TEST_CASE("custom explainer and duplicate explanation keys") {
  const auto p = tsupport::planted_background();
  RegistryBuildOptions opt;
  opt.explainer = [](std::int64_t, const std::string& f, const std::string& c) { return f + ":" + c; };
  const FactorRegistry reg = build_factor_registry(p.specs, p.sae, p.model, opt);
  CHECK(reg.find("Tone")->find("warm")->entries[0].explanation == "Tone:warm");
}

TEST_CASE("single-category factors rank by activation") {
  auto p = tsupport::planted_background();
  p.specs.push_back({"Lone", {{"only", {"plain ~ words"}}}});
  const FactorRegistry reg = build_factor_registry(p.specs, p.sae, p.model, RegistryBuildOptions{});
  // The Tone detector fires on Tone phrases as well, so it is rejected; only
  // the dense feature reaches tau_on and it fails the cross-factor check.
  CHECK(reg.find("Lone")->find("only")->entries.empty());
}
