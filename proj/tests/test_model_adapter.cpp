#include <doctest.h>

#include "support.hpp"
#include "traitsteer/error.hpp"
#include "traitsteer/io.hpp"
#include "traitsteer/model_adapter.hpp"
#include "traitsteer/toy_model.hpp"

using namespace traitsteer;
using tsupport::toy;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("byte tokenizer is the identity on bytes") {
  const ToyModel m = toy();
  const Tokens t = tokenize("Hi!", m);
  CHECK(t == Tokens{'H', 'i', '!'});
  CHECK(m.detokenize(t) == "Hi!");
  CHECK(code_of([&] { tokenize("", m); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("narrow vocabularies reject high bytes") {
  ToyModelConfig c;
  c.vocab_size = 128;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  const ToyModel m(c);
  CHECK(code_of([&] { m.tokenize("caf\xc3\xa9"); }) == ErrorCode::kUnknownSymbol);
}

TEST_CASE("config validation") {
  ToyModelConfig c;
  c.n_heads = 5;  // 32 % 5 != 0
  CHECK_THROWS_AS(ToyModel{c}, Error);
  c = ToyModelConfig{};
  c.vocab_size = 100;
  CHECK_THROWS_AS(ToyModel{c}, Error);
}

TEST_CASE("capture shape is (batch, t, d)") {
  const ToyModel m = toy(3, 16);
  const Tokens t = tokenize("hello world", m);
  CaptureMap caps = forward_with_capture(t, {0, 2}, m);
  REQUIRE(caps.size() == 2);
  const auto shape = caps.at(2).shape();
  CHECK(shape[0] == 1);
  CHECK(shape[1] == 11);
  CHECK(shape[2] == 16);
  CHECK(caps.at(0).values.front().allFinite());
}

TEST_CASE("layer and length limits") {
  const ToyModel m = toy(2, 16);
  const Tokens t = tokenize("abc", m);
  CHECK(code_of([&] { forward_with_capture(t, {2}, m); }) == ErrorCode::kLayerOutOfRange);
  CHECK(code_of([&] { forward_with_capture(t, {-1}, m); }) == ErrorCode::kLayerOutOfRange);
  const std::string long_text(m.max_sequence_length() + 1, 'x');
  CHECK(code_of([&] { next_token_logits(tokenize(long_text, m), {}, m); }) ==
        ErrorCode::kSequenceTooLong);
}

TEST_CASE("captures are taken before hooks at the same layer") {
  const ToyModel m = toy(2, 16);
  const Tokens t = tokenize("steer me", m);
  CaptureMap plain;
  m.forward(t, {}, {0, 1}, &plain);

  FeatureVector f;
  f.kind = FeatureKind::kPressure;
  f.values = Eigen::VectorXd::Ones(16);
  const SteeringHook hook{f, 3.0, 0, PositionRule::kLastOnly};
  CaptureMap hooked;
  const Eigen::VectorXd logits = m.forward(t, std::span(&hook, 1), {0, 1}, &hooked);

  CHECK(hooked.at(0).values.front() == plain.at(0).values.front());
  CHECK(hooked.at(1).values.front() != plain.at(1).values.front());
  CHECK(logits != next_token_logits(t, {}, m));
}

TEST_CASE("forward is deterministic and seed dependent") {
  const Tokens t{'a', 'b', 'c'};
  CHECK(next_token_logits(t, {}, toy(2, 16, 4)) == next_token_logits(t, {}, toy(2, 16, 4)));
  CHECK(next_token_logits(t, {}, toy(2, 16, 4)) != next_token_logits(t, {}, toy(2, 16, 5)));
}

TEST_CASE("logits at the last position ignore nothing before it but nothing after it") {
  // Causality: the residual at position i depends only on tokens <= i.
  const ToyModel m = toy(2, 16);
  CaptureMap a = forward_with_capture(tokenize("abcdef", m), {1}, m);
  CaptureMap b = forward_with_capture(tokenize("abcxyz", m), {1}, m);
  const Eigen::MatrixXd& ra = a.at(1).values.front();
  const Eigen::MatrixXd& rb = b.at(1).values.front();
  CHECK(ra.topRows(3) == rb.topRows(3));
  CHECK(ra.row(3) != rb.row(3));
}

TEST_CASE("checkpoint round trip is bit exact") {
  tsupport::TempDir dir("ckpt");
  const ToyModel m = toy(2, 16, 9);
  m.save(dir.path() / "toy.json");
  const ToyModel back = ToyModel::load(dir.path() / "toy.json");
  CHECK(back.config() == m.config());
  CHECK(back.info().model_id == m.info().model_id);
  const Tokens t = tokenize("round trip", m);
  CHECK(next_token_logits(t, {}, back) == next_token_logits(t, {}, m));
}

TEST_CASE("corrupt checkpoints are rejected") {
  tsupport::TempDir dir("ckpt-bad");
  atomic_write(dir.path() / "bad.json", "{\"schema_version\": 1, \"format\": \"other\"}");
  CHECK(code_of([&] { ToyModel::load(dir.path() / "bad.json"); }) == ErrorCode::kSchema);
  atomic_write(dir.path() / "v2.json", "{\"schema_version\": 2}");
  CHECK(code_of([&] { ToyModel::load(dir.path() / "v2.json"); }) == ErrorCode::kIncompatibleVersion);
}

TEST_CASE("choice logits read the next-token distribution") {
  const ToyModel m = toy();
  const std::vector<std::string> opts{"A", "B"};
  const ChoiceLogits l = choice_logits("Answer: (", opts, m);
  const Eigen::VectorXd full = next_token_logits(tokenize("Answer: (", m), {}, m);
  CHECK(l.at("A") == full('A'));
  CHECK(l.at("B") == full('B'));
  const std::vector<std::string> multi{"AB"};
  CHECK(code_of([&] { choice_logits("x", multi, m); }) == ErrorCode::kMultiTokenOption);
  const std::vector<std::string> none;
  CHECK(code_of([&] { choice_logits("x", none, m); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("greedy generation") {
  const ToyModel m = toy();
  const std::string a = generate_with_hooks("Once", {}, 8, m);
  CHECK(a.size() == 8);
  CHECK(a == generate_with_hooks("Once", {}, 8, m));
  // Greedy decoding of a prefix extends it.
  CHECK(generate_with_hooks("Once", {}, 4, m) == a.substr(0, 4));
  CHECK(code_of([&] { generate_with_hooks("Once", {}, 0, m); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { generate_with_hooks("Once", {}, m.max_sequence_length(), m); }) ==
        ErrorCode::kSequenceTooLong);
}

TEST_CASE("zero-coefficient hooks leave generations unchanged") {
  const ToyModel m = toy();
  FeatureVector f;
  f.values = Eigen::VectorXd::Constant(16, 0.7);
  const SteeringHook hook{f, 0.0, 1, PositionRule::kAllButLast};
  CHECK(generate_with_hooks("Hello", std::span(&hook, 1), 10, m) ==
        generate_with_hooks("Hello", {}, 10, m));
}
