#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "../support/synthetic.hpp"
#include "cdcl/config.hpp"
#include "cdcl/trainer.hpp"

namespace cdcl::trainer {
namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.estimator.width_divisor = 4;
  m.sr.channels = 16;
  m.sr.n_dags = 1;
  m.sr.n_dadaus = 2;
  return m;
}

TrainConfig tiny_train(std::uint64_t seed = 3) {
  TrainConfig t;
  t.batch = 4;
  t.views = 2;
  t.patch = 32;
  t.seed = seed;
  t.steps_per_epoch = 10;
  t.pretrain_epochs = 2;
  t.pretrain_drop_epoch = 1;
  t.joint_epochs = 2;
  return t;
}

std::vector<Image> tiny_corpus() { return testing::synthetic_corpus(4, 40, 40, 7); }

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cdcl_trainer_test_" + name);
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(AdamWTest, FirstStepMovesByLearningRateTimesSign) {
  auto w = Tensor::from({1, 1, 1, 3}, {0.5f, -0.25f, 2.0f}, true);
  sum(mul(w, Tensor::from({1, 1, 1, 3}, {3.0f, -0.5f, 0.0f}))).backward();
  AdamW opt;
  opt.step({{"w", w, true, nn::ParamRole::Weight}}, 0.01);
  const auto d = w.data();
  EXPECT_NEAR(d[0], 0.5 - 0.01, 1e-6);
  EXPECT_NEAR(d[1], -0.25 + 0.01, 1e-6);
  EXPECT_FLOAT_EQ(d[2], 2.0f);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(AdamWTest, MatchesClosedFormOverSeveralSteps) {
  const std::vector<double> grads = {0.3, -1.2, 0.7, 0.05};
  auto w = Tensor::from({1, 1, 1, 1}, {1.0f}, true);
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamW opt(cfg);
  double m = 0, v = 0, theta = 1.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    w.zero_grad();
    scale(w, grads[t - 1]).backward();
    opt.step({{"w", w, true, nn::ParamRole::Weight}}, 1e-2);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    theta -= 1e-2 * (mh / (std::sqrt(vh) + 1e-8) + 0.1 * theta);
    EXPECT_NEAR(w.data()[0], theta, 1e-6) << "step " << t;
  }
}

TEST(AdamWTest, ZeroGradientIsPureDecay) {
  auto w = Tensor::from({1, 1, 1, 2}, {2.0f, -4.0f}, true);
  sum(scale(w, 0.0)).backward();
  AdamWConfig cfg;
  cfg.weight_decay = 0.5;
  AdamW opt(cfg);
  opt.step({{"w", w, true, nn::ParamRole::Weight}}, 0.1);
  EXPECT_FLOAT_EQ(w.data()[0], 2.0f * (1 - 0.1 * 0.5));
  EXPECT_FLOAT_EQ(w.data()[1], -4.0f * (1 - 0.1 * 0.5));
}

TEST(AdamWTest, MissingGradientThrows) {
  auto w = Tensor::from({1, 1, 1, 1}, {1.0f}, true);
  AdamW opt;
  EXPECT_THROW(opt.step({{"w", w, true, nn::ParamRole::Weight}}, 1e-3), Error);
}

TEST(ScheduleTest, StepDecayEndpoints) {
  const auto s = Schedule::step_decay(60, 100);
  EXPECT_EQ(s.lr_at(0), 1e-3);
  EXPECT_EQ(s.lr_at(59), 1e-3);
  EXPECT_EQ(s.lr_at(60), 2e-4);
  EXPECT_EQ(s.lr_at(100), 2e-4);
}

TEST(ScheduleTest, CosineEndpointsAndMidpoint) {
  const auto s = Schedule::cosine(600);
  EXPECT_EQ(s.lr_at(0), 2e-4);
  EXPECT_EQ(s.lr_at(600), 1e-6);
  EXPECT_NEAR(s.lr_at(300), (2e-4 + 1e-6) / 2, 1e-15);
  for (int t = 1; t <= 600; ++t) EXPECT_LE(s.lr_at(t), s.lr_at(t - 1));
}

TEST(ScheduleTest, OutOfRangeThrows) {
  const auto s = Schedule::cosine(10);
  EXPECT_THROW(s.lr_at(-1), ConfigError);
  EXPECT_THROW(s.lr_at(11), ConfigError);
  EXPECT_THROW(Schedule::cosine(0), ConfigError);
}

TEST(TrainConfigTest, RejectsInvalidCombinations) {
  const auto m = tiny_model();
  auto t = tiny_train();
  EXPECT_NO_THROW(t.validate(m));
  t.views = 1;
  EXPECT_THROW(t.validate(m), ConfigError);
  t = tiny_train();
  t.views = 5;
  EXPECT_THROW(t.validate(m), ConfigError);
  t = tiny_train();
  t.patch = 30;
  EXPECT_THROW(t.validate(m), ConfigError);
  t = tiny_train();
  t.patch = 48;  // LR 12 is not a multiple of 4P = 8
  EXPECT_THROW(t.validate(m), ConfigError);
  t = tiny_train();
  t.scale = 3;
  EXPECT_THROW(t.validate(m), ConfigError);
}

TEST(CheckpointTest, SerializeParseRoundTrip) {
  Checkpoint c;
  c.meta["note"] = "x";
  c.tensors["a"] = {{1, 2, 1, 2}, {1.f, 2.f, 3.f, 4.f}};
  c.tensors["b"] = {{1, 1, 1, 1}, {-0.5f}};
  const auto bytes = serialize_checkpoint(c);
  const auto back = parse_checkpoint(bytes);
  EXPECT_EQ(back.meta.at("note"), "x");
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.tensors.at("a").values, c.tensors.at("a").values);
  EXPECT_TRUE(back.tensors.at("a").shape == (Shape{1, 2, 1, 2}));
  EXPECT_EQ(serialize_checkpoint(back), bytes);
}

TEST(CheckpointTest, CorruptInputRaisesFormatError) {
  Checkpoint c;
  c.tensors["a"] = {{1, 1, 1, 4}, {1.f, 2.f, 3.f, 4.f}};
  const auto bytes = serialize_checkpoint(c);
  EXPECT_THROW(parse_checkpoint("XXXX" + bytes.substr(4)), FormatError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, 10)), FormatError);
  auto wrong_version = bytes;
  wrong_version[4] = 9;
  EXPECT_THROW(parse_checkpoint(wrong_version), FormatError);
}

TEST(CheckpointTest, ShapeMismatchNamesTensor) {
  auto model = Model<float>::make(tiny_model(), 1);
  Checkpoint c;
  capture_model(model, c);
  c.tensors["sr.shallow.weight"].shape = {1, 1, 1, static_cast<std::int64_t>(c.tensors["sr.shallow.weight"].values.size())};
  try {
    restore_model(model, c);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("sr.shallow.weight"), std::string::npos);
  }
}

TEST(CheckpointTest, MissingAndUnknownTensors) {
  auto model = Model<float>::make(tiny_model(), 1);
  Checkpoint c;
  capture_model(model, c);
  auto extra = c;
  extra.tensors["bogus"] = {{1, 1, 1, 1}, {0.f}};
  EXPECT_THROW(restore_model(model, extra, true), FormatError);
  EXPECT_NO_THROW(restore_model(model, extra, false));
  c.tensors.erase(c.tensors.begin());
  EXPECT_THROW(restore_model(model, c), FormatError);
}

TEST(TrainerTest, InitialContrastiveLossNearLogB) {
  auto t = tiny_train();
  t.batch = 16;
  t.views = 4;
  t.patch = 64;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    t.seed = seed;
    auto model = tiny_model();
    model.estimator.width_divisor = 1;
    Trainer trainer(model, t, testing::synthetic_corpus(20, 64, 64, seed), Stage::Pretrain);
    const auto rec = trainer.step();
    EXPECT_NEAR(rec.l_contr, std::log(16.0), 0.2 * std::log(16.0)) << "seed " << seed;
    EXPECT_EQ(rec.l_l1, 0.0);
    EXPECT_EQ(rec.lr, 1e-3);
  }
}

TEST(TrainerTest, SameSeedGivesIdenticalTrace) {
  Trainer a(tiny_model(), tiny_train(), tiny_corpus(), Stage::Joint);
  Trainer b(tiny_model(), tiny_train(), tiny_corpus(), Stage::Joint);
  a.run(4);
  b.run(4);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.trace()[i].total, b.trace()[i].total);
    EXPECT_EQ(a.trace()[i].l_l1, b.trace()[i].l_l1);
  }
  EXPECT_GT(a.trace()[0].l_l1, 0.0);
}

TEST(TrainerTest, DifferentSeedsDiffer) {
  Trainer a(tiny_model(), tiny_train(1), tiny_corpus(), Stage::Pretrain);
  Trainer b(tiny_model(), tiny_train(2), tiny_corpus(), Stage::Pretrain);
  EXPECT_NE(a.step().total, b.step().total);
}

TEST(TrainerTest, ResumeReproducesUninterruptedTrace) {
  Trainer full(tiny_model(), tiny_train(), tiny_corpus(), Stage::Joint);
  full.run(6);

  Trainer first(tiny_model(), tiny_train(), tiny_corpus(), Stage::Joint);
  first.run(3);
  const auto path = temp_path("resume.ckpt");
  first.save(path);
  Trainer second(tiny_model(), tiny_train(), tiny_corpus(), Stage::Joint);
  second.resume(load_checkpoint(path));
  EXPECT_EQ(second.steps_done(), 3);
  second.run(3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(second.trace()[i].total, full.trace()[i + 3].total) << i;
  std::filesystem::remove(path);
}

TEST(TrainerTest, SaveLoadSaveIsByteIdentical) {
  Trainer t(tiny_model(), tiny_train(), tiny_corpus(), Stage::Pretrain);
  t.run(2);
  const auto p1 = temp_path("a.ckpt"), p2 = temp_path("b.ckpt");
  t.save(p1);
  save_checkpoint(p2, load_checkpoint(p1));
  EXPECT_EQ(read_bytes(p1), read_bytes(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST(TrainerTest, ResumeRejectsWrongStage) {
  Trainer t(tiny_model(), tiny_train(), tiny_corpus(), Stage::Pretrain);
  Trainer j(tiny_model(), tiny_train(), tiny_corpus(), Stage::Joint);
  EXPECT_THROW(j.resume(t.checkpoint()), ConfigError);
}

TEST(TrainerTest, PretrainLeavesSrUntouchedAndMovesAux) {
  Trainer t(tiny_model(), tiny_train(), tiny_corpus(), Stage::Pretrain);
  Checkpoint before;
  capture_model(t.model(), before);
  t.run(2);
  Checkpoint after;
  capture_model(t.model(), after);
  EXPECT_EQ(before.tensors.at("sr.shallow.weight").values, after.tensors.at("sr.shallow.weight").values);
  EXPECT_NE(before.tensors.at("leader.estimator.conv0.weight").values,
            after.tensors.at("leader.estimator.conv0.weight").values);
  EXPECT_NE(before.tensors.at("aux.estimator.conv0.weight").values,
            after.tensors.at("aux.estimator.conv0.weight").values);
}

TEST(TrainerTest, JointLoadsPretrainedEstimatorOnly) {
  Trainer pre(tiny_model(), tiny_train(), tiny_corpus(), Stage::Pretrain);
  pre.run(1);
  auto jt = tiny_train(99);
  Trainer joint(tiny_model(), jt, tiny_corpus(), Stage::Joint);
  Checkpoint fresh;
  capture_model(joint.model(), fresh);
  joint.load_weights(pre.checkpoint());
  Checkpoint loaded;
  capture_model(joint.model(), loaded);
  Checkpoint source;
  capture_model(pre.model(), source);
  EXPECT_EQ(loaded.tensors.at("leader.estimator.conv2.weight").values,
            source.tensors.at("leader.estimator.conv2.weight").values);
  EXPECT_EQ(loaded.tensors.at("sr.shallow.weight").values, fresh.tensors.at("sr.shallow.weight").values);
}

TEST(TrainerTest, LoadWeightsRejectsScaleMismatch) {
  auto m3 = tiny_model();
  m3.sr.scale = 3;
  auto t3 = tiny_train();
  t3.scale = 3;
  t3.patch = 24;
  Trainer pre(m3, t3, tiny_corpus(), Stage::Pretrain);
  Trainer joint(tiny_model(), tiny_train(), tiny_corpus(), Stage::Joint);
  EXPECT_THROW(joint.load_weights(pre.checkpoint()), ConfigError);
}

TEST(TrainerTest, ModelFromCheckpointRebuildsIdenticalModel) {
  Trainer t(tiny_model(), tiny_train(), tiny_corpus(), Stage::Joint);
  t.run(1);
  const auto rebuilt = model_from_checkpoint(t.checkpoint());
  const auto img = testing::synthetic_image(16, 16, 5);
  const auto a = srnet::sr_forward(img, t.model());
  const auto b = srnet::sr_forward(img, rebuilt);
  EXPECT_EQ(a.data, b.data);
}

TEST(TrainerTest, SmallCorpusImageRejected) {
  EXPECT_THROW(Trainer(tiny_model(), tiny_train(), testing::synthetic_corpus(2, 20, 20, 1), Stage::Pretrain),
               ConfigError);
}

TEST(TrainerTest, LossTraceCsv) {
  Trainer t(tiny_model(), tiny_train(), tiny_corpus(), Stage::Joint);
  t.run(2);
  const auto p = temp_path("trace.csv");
  write_loss_trace(p, t.trace());
  std::ifstream in(p);
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "step,lr,l_contr,l_l1,total");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2);
  std::filesystem::remove(p);
}

TEST(GridTest, Sizes) {
  EXPECT_EQ(make_grid("setting1x4").specs.size(), 3u);
  EXPECT_EQ(make_grid("setting1x3").scale, 3);
  const auto g3 = make_grid("setting3");
  ASSERT_EQ(g3.specs.size(), 8u);
  EXPECT_EQ(g3.specs.front().blur.kind, degradation::BlurKind::None);
  EXPECT_EQ(g3.specs.front().noise_level, 0.0);
  EXPECT_TRUE(g3.specs.back().jpeg_quality.has_value());
  EXPECT_THROW(make_grid("setting9"), ConfigError);
}

TEST(EvaluateTest, BicubicRowsAreFiniteAndPerSpec) {
  std::vector<NamedImage> imgs;
  for (int i = 0; i < 2; ++i) imgs.push_back({"img" + std::to_string(i), testing::synthetic_image(34, 30, 10 + i)});
  const auto grid = make_grid("setting1x4");
  const auto rows = evaluate(bicubic_upscaler(4), imgs, grid, {"synthetic", 1, 0});
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.psnr));
    EXPECT_GT(r.ssim, 0.0);
    EXPECT_LE(r.ssim, 1.0);
    EXPECT_EQ(r.dataset, "synthetic");
  }
  EXPECT_GT(rows[0].psnr, rows[2].psnr);
}

TEST(SeparationTest, IdenticalWithinClassIsInfinite) {
  RepresentationSet r;
  r.labels = {"a", "a", "b", "b"};
  r.embeddings = {{0, 0}, {0, 0}, {1, 1}, {1, 1}};
  EXPECT_EQ(separation_ratio(r), std::numeric_limits<double>::infinity());
}

TEST(SeparationTest, KnownValue) {
  RepresentationSet r;
  r.labels = {"a", "a", "b", "b"};
  r.embeddings = {{0}, {1}, {10}, {11}};
  // intra: |0-1| and |10-11| -> 1; inter: 10, 11, 9, 10 -> 10.
  EXPECT_DOUBLE_EQ(separation_ratio(r), 10.0);
}

TEST(SeparationTest, StructurelessIsNearOne) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  RepresentationSet r;
  for (int i = 0; i < 400; ++i) {
    r.labels.push_back(i % 2 ? "a" : "b");
    r.embeddings.push_back({g(rng), g(rng), g(rng)});
  }
  EXPECT_NEAR(separation_ratio(r), 1.0, 0.05);
}

TEST(SeparationTest, SingleClassThrows) {
  RepresentationSet r;
  r.labels = {"a", "a"};
  r.embeddings = {{0}, {1}};
  EXPECT_THROW(separation_ratio(r), ConfigError);
}

TEST(RepresentationTest, ExportShapesAndCsv) {
  const auto model = Model<float>::make(tiny_model(), 2);
  std::vector<degradation::DegradationSpec> specs(2);
  specs[0].blur.kind = specs[1].blur.kind = degradation::BlurKind::Isotropic;
  specs[0].blur.sigma = 0.2;
  specs[1].blur.sigma = 2.6;
  const auto reps = export_representations(model, testing::synthetic_corpus(3, 36, 36, 1), specs, 5);
  ASSERT_EQ(reps.embeddings.size(), 6u);
  EXPECT_EQ(reps.embeddings[0].size(), 64u);
  EXPECT_NE(reps.labels[0], reps.labels[5]);
  const auto p = temp_path("reps.csv");
  write_representations_csv(p, reps);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("sample_id,degradation_label,e0,e1", 0), 0u);
  std::filesystem::remove(p);
}

}  // namespace
}  // namespace cdcl::trainer
