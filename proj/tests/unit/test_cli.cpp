#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <json.hpp>
#include <string>

#include "api_support.hpp"

namespace {

using monosfm::apitest::read_file;
using monosfm::apitest::TempDir;
namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out, err;
};

Run cli(const std::string& args, const TempDir& scratch) {
  const auto out = scratch.path() / "stdout.txt";
  const auto err = scratch.path() / "stderr.txt";
  const std::string cmd = std::string("'") + MONOSFM_CLI_PATH + "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

// Width and height from the IHDR chunk.
std::pair<uint32_t, uint32_t> png_size(const fs::path& p) {
  const auto bytes = read_file(p);
  if (bytes.size() < 24) return {0, 0};
  auto be32 = [&](size_t o) {
    uint32_t v = 0;
    for (size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[o + i]);
    return v;
  };
  return {be32(16), be32(20)};
}

std::string quick_args(const TempDir& dir) {
  std::string s = std::string("-c '") + MONOSFM_TINY_CONFIG + "'";
  for (const auto& o : monosfm::apitest::quick_overrides(dir.str("run"))) s += " --set '" + o + "'";
  return s;
}

TEST(CliTest, HelpSucceeds) {
  TempDir t;
  const auto r = cli("--help", t);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train"), std::string::npos);
}

TEST(CliTest, UnknownSubcommandIsAUsageError) {
  TempDir t;
  EXPECT_EQ(cli("frobnicate", t).code, 2);
}

TEST(CliTest, InvalidConfigExitsTwoAndNamesTheField) {
  TempDir t;
  std::ofstream(t.path() / "bad.json") << R"({"train": {"batch_size": 2, "epochz": 3}})";
  const auto r = cli("config -c '" + t.str("bad.json") + "'", t);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("train.epochz"), std::string::npos) << r.err;
  const auto missing = cli("train -c '" + t.str("nope.json") + "'", t);
  EXPECT_EQ(missing.code, 2);
}

TEST(CliTest, ConfigPrintsResolvedJson) {
  TempDir t;
  const auto r = cli(std::string("config -c '") + MONOSFM_TINY_CONFIG + "' --set train.seed=5", t);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["train"]["seed"], 5);
}

TEST(CliTest, CorruptWritesAPng) {
  TempDir t;
  const auto r0 = cli("synth -o '" + t.str("ds") + "' --set frames=3 --set height=16 --set width=48", t);
  ASSERT_EQ(r0.code, 0) << r0.err;
  const auto img = t.path() / "ds" / "scene_000" / "rgb" / "000001.png";
  ASSERT_TRUE(fs::exists(img));
  const auto r = cli("corrupt fog:3 '" + img.string() + "' '" + t.str("fog.png") + "'", t);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(t.path() / "fog.png"));
  EXPECT_EQ(cli("corrupt fog:7 '" + img.string() + "' '" + t.str("x.png") + "'", t).code, 2);
}

TEST(CliTest, TrainEvalExportEndToEnd) {
  TempDir t;
  const auto train = cli("train -q " + quick_args(t), t);
  ASSERT_EQ(train.code, 0) << train.err;
  const auto summary = nlohmann::json::parse(train.out);
  const auto ck = summary["checkpoint"].get<std::string>();
  ASSERT_TRUE(fs::exists(ck));

  const auto e1 = cli("eval -k '" + ck + "' --max-frames 4 --json", t);
  ASSERT_EQ(e1.code, 0) << e1.err;
  const auto e2 = cli("eval -k '" + ck + "' --max-frames 4 --json -o '" + t.str("eval") + "'", t);
  ASSERT_EQ(e2.code, 0) << e2.err;
  const auto j1 = nlohmann::json::parse(e1.out), j2 = nlohmann::json::parse(e2.out);
  EXPECT_EQ(j1["depth"], j2["depth"]);
  for (const char* f : {"report.json", "table.txt", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(t.path() / "eval" / f)) << f;
  }
  const auto table = cli("eval -k '" + ck + "' --max-frames 4", t);
  ASSERT_EQ(table.code, 0);
  EXPECT_NE(table.out.find("abs_rel"), std::string::npos);

  const auto noisy = cli("eval -k '" + ck + "' --max-frames 4 --json --corruption impulse-noise:5", t);
  ASSERT_EQ(noisy.code, 0) << noisy.err;
  EXPECT_NE(nlohmann::json::parse(noisy.out)["depth"], j1["depth"]);
  EXPECT_EQ(cli("eval -k '" + ck + "' --corruption fog:1 --attack pgd:1", t).code, 2);

  // One image of a different size than the network input.
  cli("synth -o '" + t.str("imgs") + "' --set frames=3 --set height=40 --set width=100", t);
  const auto img = t.path() / "imgs" / "scene_000" / "rgb" / "000000.png";
  const auto ex = cli("export-disparity -k '" + ck + "' -o '" + t.str("disp") + "' '" + img.string() + "'", t);
  ASSERT_EQ(ex.code, 0) << ex.err;
  size_t tiffs = 0, pngs = 0;
  for (const auto& f : fs::directory_iterator(t.path() / "disp")) {
    tiffs += f.path().extension() == ".tiff";
    pngs += f.path().extension() == ".png";
  }
  EXPECT_EQ(tiffs, 1u);
  EXPECT_EQ(pngs, 1u);
  EXPECT_EQ(png_size(t.path() / "disp" / "000000_disp.png"), (std::pair<uint32_t, uint32_t>{100, 40}));
  EXPECT_TRUE(fs::exists(t.path() / "disp" / "manifest.json"));

  const auto atk = cli("attack -k '" + ck + "' pgd:1 --max-frames 2 -o '" + t.str("adv") + "'", t);
  ASSERT_EQ(atk.code, 0) << atk.err;
  EXPECT_LE(nlohmann::json::parse(atk.out)["max_linf_255"].get<double>(), 1.0 + 1e-3);
  EXPECT_TRUE(fs::exists(t.path() / "adv" / "manifest.json"));

  const auto resumed = cli("train -q --resume " + quick_args(t) + " --set train.max_steps=3", t);
  ASSERT_EQ(resumed.code, 0) << resumed.err;
  EXPECT_EQ(nlohmann::json::parse(resumed.out)["steps"], 3);
}

TEST(CliTest, MissingCheckpointIsARuntimeError) {
  TempDir t;
  EXPECT_EQ(cli("eval -k '" + t.str("none.pt") + "'", t).code, 3);
}

}  // namespace
