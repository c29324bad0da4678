#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "monosfm/monosfm.h"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Failure {
  msfm_status status;
};

void check(msfm_status s) {
  if (s != MSFM_OK) throw Failure{s};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  msfm_free_string(s);
  return out;
}

struct ModelHandle {
  msfm_model* ptr = nullptr;
  ~ModelHandle() { msfm_model_free(ptr); }
};

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

std::string resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  const auto ptrs = c_strings(overrides);
  char* out = nullptr;
  check(msfm_config_resolve(path.c_str(), ptrs.data(), ptrs.size(), &out));
  return take(out);
}

void load_model(ModelHandle& m, const std::string& checkpoint, const std::string& config,
                const std::vector<std::string>& overrides) {
  if (!checkpoint.empty()) {
    check(msfm_model_load(checkpoint.c_str(), &m.ptr));
  } else {
    check(msfm_model_create(resolve_config(config, overrides).c_str(), &m.ptr));
  }
}

int progress(const char* record, void* user) {
  const bool quiet = *static_cast<bool*>(user);
  if (!quiet) {
    const auto r = json::parse(record);
    std::printf("step %6lld  epoch %3lld  loss %.5f  photo %.5f  smooth %.5f\n",
                static_cast<long long>(r["step"].get<int64_t>()), static_cast<long long>(r["epoch"].get<int64_t>()),
                r["loss"].get<double>(), r["photometric"].get<double>(), r["smoothness"].get<double>());
    std::fflush(stdout);
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised monocular depth, pose and intrinsics learning"};
  app.set_version_flag("--version", msfm_version());
  app.require_subcommand(1);

  std::string config_path, checkpoint, run_dir, out_dir, corruption, attack, network = "depth";
  std::vector<std::string> overrides, images;
  std::string input, output, spec;
  uint64_t seed = 0;
  size_t max_frames = 0;
  bool resume = false, quiet = false, as_json = false;
  int64_t passes = 20, warmup = 3, batch = 1, sequences = 1;

  auto add_overrides = [&](CLI::App* c) {
    c->add_option("--set", overrides, "Config override a.b=value (repeatable)")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  };

  auto* cfg_cmd = app.add_subcommand("config", "Print the resolved configuration");
  cfg_cmd->add_option("-c,--config", config_path, "Config file (JSON)");
  add_overrides(cfg_cmd);

  auto* train = app.add_subcommand("train", "Train depth and pose networks");
  train->add_option("-c,--config", config_path, "Config file (JSON)");
  add_overrides(train);
  train->add_option("-o,--run-dir", run_dir, "Run directory (default: output_dir)");
  train->add_flag("--resume", resume, "Continue from the latest checkpoint in the run directory");
  train->add_flag("-q,--quiet", quiet, "Do not print per-step progress");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("-k,--checkpoint", checkpoint, "Checkpoint file")->required();
  add_overrides(eval);
  auto* eval_corruption = eval->add_option("--corruption", corruption, "Corrupt inputs first, kind:severity");
  eval->add_option("--attack", attack, "Attack inputs first, pgd|hflip|vflip:epsilon")->excludes(eval_corruption);
  eval->add_option("--seed", seed, "Seed for corruptions");
  eval->add_option("--max-frames", max_frames, "Evaluate at most this many frames (0: all)");
  eval->add_option("-o,--out", out_dir, "Write report.json, table.txt and manifest.json here");
  eval->add_flag("--json", as_json, "Print the full JSON report");

  auto* exp = app.add_subcommand("export-disparity", "Write disparity maps for images");
  exp->add_option("-k,--checkpoint", checkpoint, "Checkpoint file")->required();
  exp->add_option("-o,--out", out_dir, "Output directory")->required();
  exp->add_option("images", images, "Input images")->required();

  auto* corrupt = app.add_subcommand("corrupt", "Apply a corruption to an image file");
  corrupt->add_option("spec", spec, "kind:severity")->required();
  corrupt->add_option("input", input, "Input image")->required()->check(CLI::ExistingFile);
  corrupt->add_option("output", output, "Output PNG")->required();
  corrupt->add_option("--seed", seed, "Random seed");

  auto* atk = app.add_subcommand("attack", "Export adversarial evaluation frames");
  atk->add_option("-k,--checkpoint", checkpoint, "Checkpoint file")->required();
  atk->add_option("spec", attack, "pgd|hflip|vflip:epsilon")->required();
  atk->add_option("-o,--out", out_dir, "Output directory")->required();
  atk->add_option("--seed", seed, "Random seed");
  atk->add_option("--max-frames", max_frames, "Attack at most this many frames (0: all)");
  add_overrides(atk);

  auto* bench = app.add_subcommand("benchmark", "Measure inference speed and energy");
  auto* bench_ck = bench->add_option("-k,--checkpoint", checkpoint, "Checkpoint file");
  bench->add_option("-c,--config", config_path, "Config for freshly initialised networks")->excludes(bench_ck);
  add_overrides(bench);
  bench->add_option("--passes", passes, "Timed forward passes");
  bench->add_option("--warmup", warmup, "Untimed warm-up passes");
  bench->add_option("--batch", batch, "Batch size");
  bench->add_option("--network", network, "depth or pose")->check(CLI::IsMember({"depth", "pose"}));

  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset in the ddad layout");
  synth->add_option("-o,--out", out_dir, "Dataset root")->required();
  synth->add_option("--sequences", sequences, "Number of sequences");
  synth->add_option("--seed", seed, "Seed of the first sequence");
  add_overrides(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (cfg_cmd->parsed()) {
      std::cout << resolve_config(config_path, overrides) << '\n';
    } else if (train->parsed()) {
      const auto cfg = resolve_config(config_path, overrides);
      char* summary = nullptr;
      check(msfm_train(cfg.c_str(), run_dir.empty() ? nullptr : run_dir.c_str(), resume ? 1 : 0, progress, &quiet,
                       &summary));
      std::cout << take(summary) << '\n';
    } else if (eval->parsed()) {
      ModelHandle m;
      load_model(m, checkpoint, "", {});
      json opts{{"seed", seed}, {"max_frames", max_frames}, {"overrides", overrides}};
      if (!corruption.empty()) opts["corruption"] = corruption;
      if (!attack.empty()) opts["attack"] = attack;
      if (!out_dir.empty()) opts["out_dir"] = out_dir;
      char* report = nullptr;
      check(msfm_evaluate(m.ptr, opts.dump().c_str(), &report));
      const auto r = json::parse(take(report));
      if (as_json) {
        std::cout << r.dump(2) << '\n';
      } else {
        std::cout << r["table"].get<std::string>();
      }
    } else if (exp->parsed()) {
      ModelHandle m;
      load_model(m, checkpoint, "", {});
      const auto ptrs = c_strings(images);
      check(msfm_export_disparity(m.ptr, ptrs.data(), ptrs.size(), out_dir.c_str()));
      std::cout << "wrote " << images.size() << " disparity maps to " << out_dir << '\n';
    } else if (corrupt->parsed()) {
      check(msfm_corrupt_file(input.c_str(), output.c_str(), spec.c_str(), seed));
    } else if (atk->parsed()) {
      ModelHandle m;
      load_model(m, checkpoint, "", {});
      json opts{{"attack", attack}, {"seed", seed}, {"max_frames", max_frames}, {"overrides", overrides}};
      char* summary = nullptr;
      check(msfm_attack_export(m.ptr, opts.dump().c_str(), out_dir.c_str(), &summary));
      std::cout << take(summary) << '\n';
    } else if (bench->parsed()) {
      ModelHandle m;
      load_model(m, checkpoint, config_path, overrides);
      json opts{{"passes", passes}, {"warmup", warmup}, {"batch", batch}, {"network", network}};
      char* result = nullptr;
      check(msfm_benchmark(m.ptr, opts.dump().c_str(), &result));
      std::cout << take(result) << '\n';
    } else if (synth->parsed()) {
      json opts{{"sequences", sequences}, {"seed", seed}};
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got " + o);
        const auto key = o.substr(0, eq);
        const auto value = o.substr(eq + 1);
        opts[key] = json::accept(value) ? json::parse(value) : json(value);
      }
      check(msfm_synthesize_dataset(out_dir.c_str(), opts.dump().c_str()));
      std::cout << "wrote " << sequences << " sequence(s) to " << out_dir << '\n';
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << msfm_status_name(f.status) << ": " << msfm_last_error() << '\n';
    return f.status == MSFM_ERR_CONFIG ? kExitConfig : kExitRuntime;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
