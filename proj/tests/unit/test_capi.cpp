#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <json.hpp>
#include <string>
#include <vector>

#include "api_support.hpp"
#include "monosfm/monosfm.h"

namespace {

using monosfm::apitest::quick_overrides;
using monosfm::apitest::TempDir;
using nlohmann::json;

std::string take(char* s) {
  std::string out = s ? s : "";
  msfm_free_string(s);
  return out;
}

std::string resolve(const std::vector<std::string>& overrides, msfm_status* status = nullptr) {
  std::vector<const char*> ptrs;
  for (const auto& o : overrides) ptrs.push_back(o.c_str());
  char* out = nullptr;
  const auto s = msfm_config_resolve(MONOSFM_TINY_CONFIG, ptrs.data(), ptrs.size(), &out);
  if (status) *status = s;
  return take(out);
}

// Trains the quick config once per test binary; returns the checkpoint path.
const std::string& trained_checkpoint() {
  static TempDir dir;
  static std::string checkpoint = [] {
    const auto cfg = resolve(quick_overrides(dir.str("run")));
    char* summary = nullptr;
    if (msfm_train(cfg.c_str(), nullptr, 0, nullptr, nullptr, &summary) != MSFM_OK) return std::string();
    return json::parse(take(summary))["checkpoint"].get<std::string>();
  }();
  return checkpoint;
}

TEST(CApiTest, StatusNamesAndVersion) {
  EXPECT_STRNE(msfm_version(), "");
  EXPECT_STREQ(msfm_status_name(MSFM_OK), "ok");
  EXPECT_EQ(msfm_attack_iterations(2.0), 3);
  EXPECT_EQ(msfm_attack_iterations(16.0), 20);
  EXPECT_EQ(msfm_attack_iterations(-1.0), -1);
}

TEST(CApiTest, InvalidConfigNamesTheField) {
  msfm_status s;
  resolve({"train.batchsize=4"}, &s);
  EXPECT_EQ(s, MSFM_ERR_CONFIG);
  EXPECT_NE(std::string(msfm_last_error()).find("train.batchsize"), std::string::npos) << msfm_last_error();
  resolve({"train.intrinsics=sometimes"}, &s);
  EXPECT_EQ(s, MSFM_ERR_CONFIG);
  EXPECT_NE(std::string(msfm_last_error()).find("train.intrinsics"), std::string::npos);
}

TEST(CApiTest, MissingCheckpointIsADataError) {
  msfm_model* m = nullptr;
  EXPECT_EQ(msfm_model_load("/nonexistent/ck.pt", &m), MSFM_ERR_DATA);
  EXPECT_EQ(m, nullptr);
}

TEST(CApiTest, TrainWritesRunArtifacts) {
  TempDir dir;
  const auto cfg = resolve(quick_overrides(dir.str("run")));
  int calls = 0;
  auto progress = [](const char* rec, void* user) {
    ++*static_cast<int*>(user);
    return json::parse(rec).contains("loss") ? 1 : 0;
  };
  char* summary = nullptr;
  ASSERT_EQ(msfm_train(cfg.c_str(), nullptr, 0, progress, &calls, &summary), MSFM_OK) << msfm_last_error();
  const auto j = json::parse(take(summary));
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(j["steps"], 2);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "run" / "metrics.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "run" / "manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(j["checkpoint"].get<std::string>()));
  const auto manifest = json::parse(monosfm::apitest::read_file(dir.path() / "run" / "manifest.json"));
  EXPECT_TRUE(manifest.contains("config_hash"));
}

TEST(CApiTest, ResumeWithoutCheckpointFails) {
  TempDir dir;
  const auto cfg = resolve(quick_overrides(dir.str("empty")));
  EXPECT_EQ(msfm_train(cfg.c_str(), nullptr, 1, nullptr, nullptr, nullptr), MSFM_ERR_DATA);
}

TEST(CApiTest, PredictDisparityChecksSize) {
  ASSERT_FALSE(trained_checkpoint().empty()) << msfm_last_error();
  msfm_model* m = nullptr;
  ASSERT_EQ(msfm_model_load(trained_checkpoint().c_str(), &m), MSFM_OK) << msfm_last_error();
  const auto cfg = json::parse(take([&] {
    char* out = nullptr;
    msfm_model_config(m, &out);
    return out;
  }()));
  const int64_t h = cfg["data"]["height"], w = cfg["data"]["width"];
  std::vector<float> rgb(3 * h * w, 0.5f), disp(h * w, -1.0f);
  ASSERT_EQ(msfm_predict_disparity(m, rgb.data(), h, w, disp.data()), MSFM_OK) << msfm_last_error();
  for (float d : disp) {
    ASSERT_GT(d, 0.0f);
    ASSERT_LT(d, 1.0f);
  }
  EXPECT_EQ(msfm_predict_disparity(m, rgb.data(), h / 2, w * 2, disp.data()), MSFM_ERR_SHAPE);
  msfm_model_free(m);
}

TEST(CApiTest, EvaluationIsDeterministicAndCorruptionChangesIt) {
  ASSERT_FALSE(trained_checkpoint().empty());
  msfm_model* m = nullptr;
  ASSERT_EQ(msfm_model_load(trained_checkpoint().c_str(), &m), MSFM_OK);
  auto run = [&](const json& opts) {
    char* out = nullptr;
    EXPECT_EQ(msfm_evaluate(m, opts.dump().c_str(), &out), MSFM_OK) << msfm_last_error();
    return json::parse(take(out));
  };
  const auto a = run({{"max_frames", 4}});
  const auto b = run({{"max_frames", 4}});
  EXPECT_EQ(a["depth"], b["depth"]);
  EXPECT_TRUE(a.contains("dataset_fingerprint"));
  const auto c = run({{"max_frames", 4}, {"corruption", "gaussian-noise:5"}});
  EXPECT_NE(a["depth"]["abs_rel"], c["depth"]["abs_rel"]);
  char* out = nullptr;
  EXPECT_EQ(msfm_evaluate(m, json{{"corruption", "gaussian-noise:9"}}.dump().c_str(), &out), MSFM_ERR_CONFIG);
  msfm_model_free(m);
}

TEST(CApiTest, CorruptBufferIsDeterministic) {
  std::vector<float> a(3 * 16 * 24), b;
  for (size_t i = 0; i < a.size(); ++i) a[i] = static_cast<float>((i * 37) % 101) / 100.0f;
  b = a;
  auto c = a;
  ASSERT_EQ(msfm_corrupt_buffer(a.data(), 16, 24, "shot-noise:3", 5), MSFM_OK);
  ASSERT_EQ(msfm_corrupt_buffer(b.data(), 16, 24, "shot-noise:3", 5), MSFM_OK);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(msfm_corrupt_buffer(c.data(), 16, 24, "rain:3", 5), MSFM_ERR_CONFIG);
}

TEST(CApiTest, BenchmarkReportsThroughput) {
  const auto cfg = resolve({});
  msfm_model* m = nullptr;
  ASSERT_EQ(msfm_model_create(cfg.c_str(), &m), MSFM_OK);
  char* out = nullptr;
  ASSERT_EQ(msfm_benchmark(m, R"({"passes": 2, "warmup": 1})", &out), MSFM_OK) << msfm_last_error();
  const auto j = json::parse(take(out));
  EXPECT_GT(j["fps"].get<double>(), 0.0);
  EXPECT_TRUE(j.contains("joules_per_frame"));
  EXPECT_EQ(msfm_benchmark(m, R"({"passes": 0})", &out), MSFM_ERR_DOMAIN);
  msfm_model_free(m);
}

}  // namespace
