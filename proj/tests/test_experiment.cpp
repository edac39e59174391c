#include <doctest.h>

#include <fstream>
#include <random>

#include "support.hpp"
#include "traitsteer/error.hpp"
#include "traitsteer/experiment.hpp"
#include "traitsteer/io.hpp"

using namespace traitsteer;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kPressures{"Trust", "Urgency", "Flattery", "Authority", "Scarcity", "Reciprocity",
                                          "Deliberation"};

// A small store in a temp dir: toy model d=16 with layer 1, an SAE and
// registry for one factor, and one random unit direction per pressure.
struct Workspace {
  tsupport::TempDir tmp{"exp"};
  fs::path config;

  explicit Workspace(double pressure_coef = 40.0, double background_coef = 40.0) {
    const fs::path root = tmp.path();
    fs::copy_file(TRAITSTEER_DATA_DIR "/personality_items.jsonl", root / "p.jsonl");
    fs::copy_file(TRAITSTEER_DATA_DIR "/safety_items.jsonl", root / "s.jsonl");

    SAEModel sae = sae_init(16, 32, 3, 1);
    sae.id = "unit";
    save_sae(sae, root / "sae.json");
    FactorRegistry reg;
    reg.layer = 1;
    reg.sae_id = "unit";
    reg.factors.push_back({"Tone", {{"warm", {{"w1", 1}, {"w2", 4}}}, {"cold", {{"c1", 2}}}, {"dry", {{"d1", 9}}}}});
    reg.factors.push_back({"Empty", {{"none", {}}}});
    save_registry(reg, root / "registry.json");

    Json dirs = Json::object();
    std::mt19937_64 rng(17);
    for (const auto& p : kPressures) {
      DirectionResult d;
      d.layer = 1;
      d.direction.kind = FeatureKind::kPressure;
      d.direction.explanation = p;
      d.direction.values = tsupport::random_vector(rng, 16).normalized();
      save_direction(d, root / (slugify(p) + ".json"));
      dirs[p] = slugify(p) + ".json";
    }
    Json cfg = {
        {"schema_version", 1},
        {"seed", 3},
        {"model", {{"toy", {{"n_layers", 2}, {"d_model", 16}, {"n_heads", 4}, {"d_ff", 32}}}}},
        {"profile",
         {{"name", "unit"}, {"layer", 1}, {"background_coefficient", background_coef},
          {"pressure_coefficient", pressure_coef}}},
        {"output_dir", "store"},
        {"registry", "registry.json"},
        {"sae", "sae.json"},
        {"directions", dirs},
        {"items", {{"personality", "p.jsonl"}, {"safety", "s.jsonl"}}},
    };
    config = root / "config.json";
    std::ofstream(config) << cfg.dump(4);
  }
};

}  // namespace

TEST_CASE("config parsing resolves paths next to the file") {
  Workspace w;
  const ExperimentConfig c = load_experiment_config(w.config);
  CHECK(c.seed == 3);
  CHECK(c.output_dir == w.tmp.path() / "store");
  CHECK(*c.registry == w.tmp.path() / "registry.json");
  CHECK(c.directions.size() == 7);
  CHECK(c.directions[0].first == "Trust");
  CHECK(c.profile.layer == 1);
  CHECK(c.toy.d_model == 16);
}

TEST_CASE("config rejects unknown keys and accepts built-in profiles") {
  try {
    parse_experiment_config(R"({"schema_version": 1, "colour": 1})", "/tmp/x.json");
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSchema);
    CHECK(std::string(e.what()).find("colour") != std::string::npos);
  }
  const auto c = parse_experiment_config(R"({"schema_version": 1, "profile": "gemma-2b-it"})", "/tmp/x.json");
  CHECK(c.profile.layer == 12);
  CHECK(c.profile.pressure_coefficient == 1.6);
  const auto o = parse_experiment_config(
      R"({"schema_version": 1, "profile": {"base": "gemma-2-9b-it", "pressure_coefficient": 2.0}})", "/tmp/x.json");
  CHECK(o.profile.layer == 31);
  CHECK(o.profile.pressure_coefficient == 2.0);
  CHECK_THROWS_AS(parse_experiment_config(R"({"schema_version": 7})", "/tmp/x.json"), Error);
}

TEST_CASE("pressure sweep has one column per direction and one Base") {
  Workspace w;
  ExperimentContext ctx(load_experiment_config(w.config));
  const SweepResult p = run_pressure_sweep(ctx, Harness::kPersonality);
  CHECK(p.conditions == kPressures);
  CHECK(p.subscales.size() == 8);
  for (const auto& s : p.subscales) CHECK(p.rows.at(s).size() == 7);

  const SweepResult s = run_pressure_sweep(ctx, Harness::kSafety);
  CHECK(s.subscales.front() == "Average");
  CHECK(s.subscales.size() == 8);

  // factor sweep shares the cached Base column
  const SweepResult f = run_factor_sweep(ctx, "Tone", Harness::kPersonality);
  CHECK(f.conditions == std::vector<std::string>{"warm", "cold", "dry"});
  CHECK(f.base == p.base);
  for (const auto& sub : f.subscales) CHECK(f.at(sub, "warm").base_score == p.base.at(sub));
}

TEST_CASE("zero coefficients leave every cell flat") {
  Workspace w(0.0, 0.0);
  ExperimentContext ctx(load_experiment_config(w.config));
  for (const SweepResult& r :
       {run_pressure_sweep(ctx, Harness::kSafety), run_factor_sweep(ctx, "Tone", Harness::kPersonality)}) {
    for (const auto& sub : r.subscales)
      for (const auto& cond : r.conditions) {
        CHECK(r.at(sub, cond).direction == DeltaDirection::kFlat);
        CHECK(r.at(sub, cond).steered_score == r.base.at(sub));
      }
  }
}

TEST_CASE("highlights pick the largest delta, first condition on ties") {
  const ScoreTable base{{"S", 50.0}, {"T", 10.0}};
  const SweepResult r = assemble_sweep("t", Harness::kPersonality, base,
                                       {{"a", {{"S", 52.0}, {"T", 10.0}}},
                                        {"b", {{"S", 47.0}, {"T", 10.0}}},
                                        {"c", {{"S", 53.0}, {"T", 10.0}}}});
  CHECK(r.highlight.at("S") == 1);
  CHECK(r.highlight.at("T") == 0);
  const std::string md = emit_report(r, ReportFormat::kMarkdown);
  CHECK(md.find("**47.0 ↓ (3.0)**") != std::string::npos);
  CHECK(md.find("**10.0**") == std::string::npos);
  CHECK(md.find("| Subscale | Base | a | b | c |") != std::string::npos);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 100);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<std::string, ScoreTable>> steered;
    for (int c = 0; c < 5; ++c) steered.push_back({"c" + std::to_string(c), {{"S", std::round(u(rng))}}});
    const SweepResult q = assemble_sweep("t", Harness::kPersonality, {{"S", 50.0}}, steered);
    std::size_t best = 0;
    for (std::size_t c = 1; c < 5; ++c)
      if (std::abs(steered[c].second.at("S") - 50.0) > std::abs(steered[best].second.at("S") - 50.0)) best = c;
    CHECK(q.highlight.at("S") == best);
  }
}

TEST_CASE("CSV report reproduces the markdown cells") {
  Workspace w;
  ExperimentContext ctx(load_experiment_config(w.config));
  const SweepResult r = run_pressure_sweep(ctx, Harness::kPersonality);
  const auto rows = parse_report_csv(emit_report(r, ReportFormat::kCsv));
  CHECK(rows.size() == r.subscales.size() * r.conditions.size());
  for (const auto& row : rows) {
    const SubscaleReport rebuilt = make_report(row.subscale, row.base, row.steered);
    CHECK(rebuilt.cell() == r.at(row.subscale, row.condition).cell());
    CHECK(row.direction == to_string(rebuilt.direction));
  }
}

TEST_CASE("sweeps are deterministic and replay byte for byte") {
  Workspace w;
  ExperimentContext a(load_experiment_config(w.config));
  ExperimentContext b(load_experiment_config(w.config));
  const std::map<std::string, std::string> params{{"kind", "pressure"}, {"harness", "safety"}};
  CHECK(emit_report(run_sweep(a, params), ReportFormat::kMarkdown) ==
        emit_report(run_sweep(b, params), ReportFormat::kMarkdown));

  const RunRecord rec = run_and_record(a, params, "T0");
  CHECK(fs::exists(rec.run_dir / "report.md"));
  CHECK(fs::exists(rec.run_dir / "report.csv"));
  const RunManifest m = load_manifest(rec.manifest_path);
  CHECK(m.parameters == params);
  CHECK(m.seeds.at("seed") == 3);

  const ReplayResult replay = replay_manifest(rec.manifest_path);
  CHECK(replay.problems.empty());
  CHECK(replay.identical);
  CHECK(replay.markdown == rec.markdown);

  // tampering with an input is reported
  std::ofstream(w.tmp.path() / "s.jsonl", std::ios::app) << "\n";
  CHECK_FALSE(replay_manifest(rec.manifest_path).problems.empty());

  const RunRecord second = run_and_record(a, {{"kind", "factor"}, {"factor", "Tone"}}, "T0");
  CHECK(second.run_dir.filename() == "T0-1");
}

TEST_CASE("missing factors and directions are errors") {
  Workspace w;
  ExperimentContext ctx(load_experiment_config(w.config));
  auto code = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIo;
  };
  CHECK(code([&] { run_factor_sweep(ctx, "Nope", Harness::kPersonality); }) == ErrorCode::kMissingFactor);
  CHECK(code([&] { run_factor_sweep(ctx, "Empty", Harness::kPersonality); }) == ErrorCode::kMissingFactor);
  fs::remove(w.tmp.path() / "urgency.json");
  CHECK(code([&] { run_pressure_sweep(ctx, Harness::kPersonality); }) == ErrorCode::kMissingDirection);
  CHECK(code([&] { run_sweep(ctx, {{"kind", "other"}}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("category feature averages the top-k decoder rows") {
  SAEModel sae = sae_init(4, 8, 1);
  const RegistryCategory cat{"c", {{"a", 2}, {"b", 5}, {"c", 7}}};
  CHECK(category_feature(cat, sae, 1).values == sae.w_dec.row(2).transpose());
  const Eigen::VectorXd mean = (sae.w_dec.row(2) + sae.w_dec.row(5)).transpose() / 2.0;
  CHECK((category_feature(cat, sae, 2).values - mean).norm() < 1e-15);
  CHECK(category_feature(cat, sae, 2).kind == FeatureKind::kBackground);
}
