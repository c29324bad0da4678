#include <gtest/gtest.h>
#include <torch/torch.h>

#include <fstream>

#include "checkpoint.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "test_support.hpp"
#include "trainer.hpp"

namespace monosfm::config {
namespace {

using test::TempDir;

std::string config_error_field(const json& doc) {
  try {
    from_json(doc).validate();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

TEST(ConfigTest, DefaultsParse) {
  const auto cfg = from_json(json::object());
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.depth.encoder.family, nets::EncoderFamily::kDeit);
  EXPECT_EQ(cfg.train.batch_size, 12);
  EXPECT_EQ(cfg.train.epochs, 20);
}

TEST(ConfigTest, UnknownKeyIsRejectedWithDottedName) {
  auto doc = test::tiny_config_json();
  doc["train"]["learning_rate"] = 1e-4;
  EXPECT_EQ(config_error_field(doc), "train.learning_rate");
  doc = test::tiny_config_json();
  doc["model"]["encoder"]["depht"] = 3;
  EXPECT_EQ(config_error_field(doc), "model.encoder.depht");
}

TEST(ConfigTest, WrongTypeNamesTheField) {
  auto doc = test::tiny_config_json();
  doc["train"]["batch_size"] = "four";
  EXPECT_EQ(config_error_field(doc), "train.batch_size");
}

TEST(ConfigTest, GivenIntrinsicsNeedCameraMatrices) {
  auto doc = test::tiny_config_json();
  doc["data"]["synthetic"]["intrinsics"] = false;
  EXPECT_EQ(config_error_field(doc), "train.intrinsics");
  doc["train"]["intrinsics"] = "learned";
  EXPECT_EQ(config_error_field(doc), "");
}

TEST(ConfigTest, OverridesApplyDottedPaths) {
  auto doc = test::tiny_config_json();
  apply_override(doc, "train.lr=0.5");
  apply_override(doc, "output_dir=runs/x");
  apply_override(doc, "model.reassemble.1.channels=12");
  const auto cfg = from_json(doc);
  EXPECT_DOUBLE_EQ(cfg.train.lr, 0.5);
  EXPECT_EQ(cfg.output_dir, "runs/x");
  EXPECT_EQ(cfg.depth.reassemble.taps[1].channels, 12);
  EXPECT_THROW(apply_override(doc, "train.lr"), ConfigError);
}

TEST(ConfigTest, LoadConfigReadsFileAndOverrides) {
  TempDir dir;
  std::ofstream(dir.path() / "c.json") << test::tiny_config_json().dump();
  const auto cfg = load_config(dir.path() / "c.json", {"train.seed=7"});
  EXPECT_EQ(cfg.train.seed, 7u);
  EXPECT_THROW(load_config(dir.path() / "missing.json"), ConfigError);
}

TEST(ConfigTest, JsonRoundTripPreservesEverything) {
  const auto cfg = test::tiny_config("learned");
  const auto again = from_json(to_json(cfg));
  EXPECT_EQ(to_json(again), to_json(cfg));
  EXPECT_EQ(config_hash(again), config_hash(cfg));
}

TEST(ConfigTest, HashChangesWithAnyField) {
  auto a = test::tiny_config();
  auto b = a;
  b.train.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 64u);
}

TEST(ConfigTest, LearningRateDefaultsByFamily) {
  auto cfg = from_json(json::object());
  EXPECT_DOUBLE_EQ(cfg.learning_rate(), 1e-5);
  cfg = from_json(json{{"model", {{"encoder", {{"family", "resnet"}}}}}});
  EXPECT_DOUBLE_EQ(cfg.learning_rate(), 1e-4);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  TempDir dir;
  const auto cfg = test::tiny_config("learned");
  auto models = train::build_models(cfg);
  train::TrainState state{3, 17, 2};
  train::save_checkpoint(dir.path() / "a.pt", cfg, models, nullptr, state);
  auto ck = train::load_checkpoint(dir.path() / "a.pt");
  EXPECT_EQ(to_json(ck.cfg), to_json(cfg));
  EXPECT_EQ(ck.state.step, 17);
  EXPECT_EQ(ck.state.epoch, 3);
  EXPECT_EQ(ck.state.batch_in_epoch, 2);
  auto a = models.depth->named_parameters();
  for (const auto& p : ck.models.depth->named_parameters()) {
    EXPECT_TRUE(torch::equal(p.value(), a[p.key()])) << p.key();
  }
  auto b = models.pose->named_parameters();
  for (const auto& p : ck.models.pose->named_parameters()) {
    EXPECT_TRUE(torch::equal(p.value(), b[p.key()])) << p.key();
  }
  models.train(false);
  ck.models.train(false);
  auto x = torch::rand({1, 3, 32, 96});
  EXPECT_TRUE(torch::equal(models.depth->forward(x)[0], ck.models.depth->forward(x)[0]));
}

TEST(CheckpointTest, ArchitectureMismatchIsAConfigError) {
  TempDir dir;
  const auto cfg = test::tiny_config();
  auto models = train::build_models(cfg);
  train::save_checkpoint(dir.path() / "a.pt", cfg, models, nullptr, {});
  auto other = cfg;
  other.depth.fusion_channels = 16;
  auto other_models = train::build_models(other);
  try {
    train::load_checkpoint_into(dir.path() / "a.pt", other, other_models);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "model");
  }
}

TEST(CheckpointTest, MissingFileIsADataError) {
  EXPECT_THROW(train::load_checkpoint("/nonexistent/ck.pt"), DataError);
}

}  // namespace
}  // namespace monosfm::config
