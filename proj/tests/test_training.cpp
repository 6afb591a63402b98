#include <doctest.h>

#include <cmath>
#include <sstream>

#include "nwqm/error.hpp"
#include "nwqm/training.hpp"
#include "support.hpp"

using namespace nwqm;

namespace {

ClassDistribution with_label_probability(int label, double p) {
  ClassDistribution d;
  for (int c = 0; c < kNumClasses; ++c) d.p[static_cast<std::size_t>(c)] = (1.0 - p) / (kNumClasses - 1);
  d.p[static_cast<std::size_t>(label)] = p;
  return d;
}

std::vector<Example> random_examples(const ModelDims& d, std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(test::random_example(d, rng, static_cast<int>(i % kNumClasses)));
  return out;
}

}  // namespace

TEST_CASE("cross-entropy analytic points") {
  CHECK(cross_entropy(with_label_probability(2, 1.0), QualityClass::kC).loss == 0.0);
  ClassDistribution uniform;
  uniform.p.fill(1.0 / 6.0);
  CHECK(std::abs(cross_entropy(uniform, QualityClass::kFA).loss - std::log(6.0)) <= 1e-12);
  CHECK(std::abs(cross_entropy(with_label_probability(0, 0.25), QualityClass::kStub).loss - std::log(4.0)) <= 1e-12);
  const LossValue clamped = cross_entropy(with_label_probability(1, 0.0), QualityClass::kStart);
  CHECK(clamped.clamped);
  CHECK(clamped.loss == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("Adam with a zero gradient leaves parameters alone") {
  ParameterSet params;
  const TensorId w = params.add("w", 3, 2);
  params[w].value << 1, 2, 3, 4, 5, 6;
  const Matrix before = params[w].value;
  AdamState state(params, AdamConfig{0.1});
  Gradients g(params, std::vector<TensorId>{w});
  adam_step(params, g, state);
  CHECK(params[w].value == before);
  CHECK(state.step() == 1);
}

TEST_CASE("one Adam step on a unit gradient moves by the learning rate") {
  ParameterSet params;
  const TensorId w = params.add("w", 1);
  Gradients g(params, std::vector<TensorId>{w});
  g[w](0, 0) = 1.0;
  AdamState state(params, AdamConfig{0.1});
  adam_step(params, g, state);
  // m_hat = v_hat = 1 at t = 1.
  CHECK(std::abs(params[w].value(0, 0) - (-0.1 / (1.0 + 1e-8))) <= 1e-15);
  CHECK(state.first_moment(w)(0, 0) == doctest::Approx(0.1));
  CHECK(state.second_moment(w)(0, 0) == doctest::Approx(0.001));
}

TEST_CASE("Adam runs are bitwise repeatable") {
  const auto run = [] {
    ParameterSet params;
    const TensorId w = params.add("w", 4, 3);
    Rng rng(3);
    test::randomize(params, rng);
    AdamState state(params, AdamConfig{0.01});
    Gradients g(params, std::vector<TensorId>{w});
    for (int step = 0; step < 50; ++step) {
      g[w] = params[w].value.array().sin().matrix();
      adam_step(params, g, state);
    }
    return Matrix(params[w].value);
  };
  CHECK(run() == run());
}

TEST_CASE("an untrained model with a zero output layer starts at ln 6") {
  for (Variant v : kAllVariants) {
    const ModelConfig c = test::tiny_config(v);
    const Model model(c, 1);
    for (const Example& ex : random_examples(c.dims, 4, 6)) {
      Tape tape(model.params());
      const Var loss = tape.softmax_cross_entropy(model.forward(tape, ex).logits, ex.label);
      CHECK(std::abs(tape.scalar(loss) - std::log(6.0)) <= 1e-12);
    }
  }
}

TEST_CASE("the joint stage gives frozen encoder tensors no gradient") {
  const ModelConfig c = test::tiny_config(Variant::kFull);
  const Model model(c, 2);
  const auto trainable = trainable_for(model, Stage::kJoint);
  Gradients grads(model.params(), trainable);
  for (TensorId id : model.group(TensorGroup::kEncoder)) CHECK_FALSE(grads.has(id));
  for (TensorId id : model.group(TensorGroup::kSummarizer)) CHECK(grads.has(id));
  for (TensorId id : model.group(TensorGroup::kHead)) CHECK(grads.has(id));
}

TEST_CASE("summarizer and joint training leave the encoder bitwise unchanged") {
  const ModelConfig c = test::tiny_config(Variant::kFull);
  Model model(c, 3);
  const auto examples = random_examples(c.dims, 5, 12);
  std::vector<Matrix> before;
  for (TensorId id : model.group(TensorGroup::kEncoder)) before.push_back(model.params()[id].value);
  LossReport report;
  train_stage(model, Stage::kSummarizer, StageConfig{0.01, 3, 4}, 1, examples, {}, report);
  train_stage(model, Stage::kJoint, StageConfig{0.01, 3, 4}, 1, examples, {}, report);
  std::size_t i = 0;
  for (TensorId id : model.group(TensorGroup::kEncoder)) CHECK(model.params()[id].value == before[i++]);
}

TEST_CASE("a certain prediction has zero loss and zero gradients") {
  const ModelConfig c = test::tiny_config(Variant::kFull);
  Model model(c, 4);
  Rng rng(7);
  test::randomize(model.params(), rng);
  const Example ex = random_examples(c.dims, 8, 1).front();
  const TensorId out_bias = *model.params().find("head.out.bias");
  const TensorId out_weight = *model.params().find("head.out.weight");
  model.params()[out_weight].value.setZero();
  model.params()[out_bias].value.setZero();
  model.params()[out_bias].value(ex.label, 0) = 1000.0;
  const auto trainable = model.forward_tensors();
  Gradients grads(model.params(), trainable);
  const double loss = loss_and_gradients(model, Stage::kJoint, ex, nullptr, grads);
  CHECK(loss == 0.0);
  for (TensorId id : trainable) CHECK(grads[id].isZero(0.0));
}

TEST_CASE("gradients match central differences for every variant and stage") {
  for (Variant v : kAllVariants) {
    std::vector<Stage> stages = {Stage::kJoint};
    if (uses_text(v)) stages.insert(stages.end(), {Stage::kSummarizer, Stage::kPretrain});
    for (Stage stage : stages) {
      const auto r = test::gradient_suite(test::tiny_config(v), stage, 3, 40 + static_cast<std::uint64_t>(v));
      CAPTURE(to_string(v));
      CAPTURE(to_string(stage));
      CAPTURE(r.worst_tensor);
      REQUIRE(r.accepted == 3);
      CHECK(r.worst <= 1e-5);
    }
  }
}

TEST_CASE("gradients through every fusion mode and the other fold order") {
  for (FusionMode m : kAllFusionModes) {
    for (FoldOrder fold : {FoldOrder::kTextTalk, FoldOrder::kTextImage}) {
      ModelConfig c = test::tiny_config(Variant::kFull, m);
      c.fusion.fold = fold;
      c.summarizer.mask_padding = fold == FoldOrder::kTextImage;
      c.summarizer.attention.pooling = m == FusionMode::kProd ? AttentionPooling::kHidden : AttentionPooling::kProjected;
      const auto r = test::gradient_suite(c, Stage::kJoint, 1, 70 + static_cast<std::uint64_t>(m));
      CAPTURE(to_string(m));
      CAPTURE(r.worst_tensor);
      REQUIRE(r.accepted == 1);
      CHECK(r.worst <= 1e-5);
    }
  }
}

TEST_CASE("gradients with stored section vectors") {
  ModelConfig c = test::tiny_config(Variant::kWithoutImage);
  c.encoder = EncoderMode::kLookup;
  CHECK_FALSE(Model(c, 6).has_encoder());
  const auto r = test::gradient_suite(c, Stage::kJoint, 2, 61);
  CAPTURE(r.worst_tensor);
  REQUIRE(r.accepted == 2);
  CHECK(r.worst <= 1e-5);
}

TEST_CASE("the conditioning gate rejects draws below the rounding floor") {
  // A text model with small weights leaves the reset gates' gradients near 1e-6.
  const ModelConfig c = test::tiny_config(Variant::kFull);
  Model model(c, 11);
  Rng rng(100);
  test::randomize(model.params(), rng, 0.5);
  const Example ex = test::random_example(c.dims, rng, 1);
  CHECK_FALSE(test::well_conditioned(model, Stage::kJoint, ex, model.forward_tensors(), nullptr));
}

TEST_CASE("full-batch training with a small step never raises the loss") {
  ModelConfig c = test::tiny_config(Variant::kFull);
  c.dropout = 0.0;
  Model model(c, 9);
  const auto examples = random_examples(c.dims, 10, 10);
  LossReport report;
  train_stage(model, Stage::kJoint, StageConfig{1e-3, 30, 10}, 2, examples, {}, report);
  const auto rows = report.select(Stage::kJoint, "train");
  REQUIRE(rows.size() == 31);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].loss <= rows[i - 1].loss);
  CHECK(rows.back().loss < rows.front().loss);
}

TEST_CASE("training is deterministic and restores the best epoch") {
  const ModelConfig c = test::tiny_config(Variant::kFull);
  const auto train_set = random_examples(c.dims, 21, 18);
  const auto validation_set = random_examples(c.dims, 22, 6);
  TrainConfig cfg;
  cfg.pretrain = {0.01, 2, 4};
  cfg.summarizer = {0.01, 2, 4};
  cfg.joint = {0.01, 5, 8};
  const auto run = [&] {
    Model model(c, 31);
    const TrainResult r = train(model, train_set, validation_set, cfg);
    std::ostringstream out;
    r.report.write(out);
    return std::make_tuple(out.str(), r.best_validation, model.params()[TensorId{0}].value,
                           evaluate_split(model, validation_set).accuracy);
  };
  const auto a = run();
  const auto b = run();
  CHECK(std::get<0>(a) == std::get<0>(b));
  CHECK(std::get<2>(a) == std::get<2>(b));
  CHECK(std::get<1>(a) == std::get<3>(a));
  CHECK(std::get<0>(a).rfind("stage\tepoch\tsplit\tloss\taccuracy\n", 0) == 0);
}

TEST_CASE("an empty training split is an error") {
  Model model(test::tiny_config(Variant::kFull), 1);
  CHECK_THROWS_AS(train(model, {}, {}, TrainConfig{}), Error);
  TrainConfig bad;
  bad.joint.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoints round-trip and reject mismatches") {
  test::TempDir dir;
  const ModelConfig c = test::tiny_config(Variant::kFull);
  Model model(c, 12);
  Rng rng(1);
  test::randomize(model.params(), rng);
  model.save(dir / "m.ckpt", dir / "m.json");
  const Model back = Model::load(dir / "m.ckpt", dir / "m.json");
  back.save(dir / "again.ckpt", dir / "again.json");
  CHECK(test::slurp(dir / "m.ckpt") == test::slurp(dir / "again.ckpt"));
  for (std::uint32_t i = 0; i < model.params().size(); ++i) {
    const Matrix expected = model.params()[TensorId{i}].value.cast<float>().cast<double>();
    CHECK(back.params()[TensorId{i}].value == expected);
  }

  CHECK_THROWS_AS(Model::load(dir / "missing.ckpt", dir / "m.json"), MissingArtifactError);
  Model other(test::tiny_config(Variant::kWithoutImage), 12);
  other.save(dir / "o.ckpt", dir / "o.json");
  CHECK_THROWS_AS(Model::load(dir / "o.ckpt", dir / "m.json"), FormatError);
}
