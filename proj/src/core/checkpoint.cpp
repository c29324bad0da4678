#include "checkpoint.hpp"

#include <fstream>

#include "errors.hpp"
#include "util.hpp"

namespace monosfm::train {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& path, const config::RunConfig& cfg, const Models& models,
                     const torch::optim::Optimizer* optimizer, const TrainState& state) {
  torch::serialize::OutputArchive archive;
  archive.write("config", c10::IValue(config::to_json(cfg).dump()));
  archive.write("version", c10::IValue(std::string(version_string())));
  archive.write("state", torch::tensor({state.epoch, state.step, state.batch_in_epoch}, torch::kInt64));
  torch::serialize::OutputArchive depth;
  models.depth->save(depth);
  archive.write("depth", depth);
  torch::serialize::OutputArchive pose;
  models.pose->save(pose);
  archive.write("pose", pose);
  if (optimizer) {
    torch::serialize::OutputArchive opt;
    optimizer->save(opt);
    archive.write("optimizer", opt);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Write then rename so an interrupted save never leaves a truncated checkpoint.
  const auto tmp = fs::path(path.string() + ".tmp");
  archive.save_to(tmp.string());
  fs::rename(tmp, path);
}

namespace {

torch::serialize::InputArchive open_archive(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return archive;
}

config::RunConfig stored_config(torch::serialize::InputArchive& archive, const fs::path& path) {
  c10::IValue v;
  if (!archive.try_read("config", v) || !v.isString()) {
    throw DataError("checkpoint " + path.string() + " has no embedded config");
  }
  return config::from_json(nlohmann::json::parse(v.toStringRef()));
}

TrainState read_state(torch::serialize::InputArchive& archive) {
  torch::Tensor t;
  TrainState s;
  if (archive.try_read("state", t) && t.numel() == 3) {
    s.epoch = t[0].item<int64_t>();
    s.step = t[1].item<int64_t>();
    s.batch_in_epoch = t[2].item<int64_t>();
  }
  return s;
}

void load_weights(torch::serialize::InputArchive& archive, Models& models, torch::optim::Optimizer* optimizer,
                  const fs::path& path) {
  try {
    torch::serialize::InputArchive depth;
    archive.read("depth", depth);
    models.depth->load(depth);
    torch::serialize::InputArchive pose;
    archive.read("pose", pose);
    models.pose->load(pose);
    if (optimizer) {
      torch::serialize::InputArchive opt;
      if (archive.try_read("optimizer", opt)) optimizer->load(opt);
    }
  } catch (const c10::Error& e) {
    throw DataError("checkpoint " + path.string() + " does not match the network: " + e.what_without_backtrace());
  }
}

}  // namespace

config::RunConfig read_checkpoint_config(const fs::path& path) {
  auto archive = open_archive(path);
  return stored_config(archive, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  auto archive = open_archive(path);
  Checkpoint c{stored_config(archive, path), {}, {}};
  c.models = build_models(c.cfg);
  load_weights(archive, c.models, nullptr, path);
  c.state = read_state(archive);
  return c;
}

TrainState load_checkpoint_into(const fs::path& path, const config::RunConfig& cfg, Models& models,
                                torch::optim::Optimizer* optimizer) {
  auto archive = open_archive(path);
  const auto stored = stored_config(archive, path);
  if (config::model_json(stored) != config::model_json(cfg)) {
    throw ConfigError("model", "checkpoint " + path.string() + " was trained with a different architecture");
  }
  if (stored.learn_intrinsics() != cfg.learn_intrinsics()) {
    throw ConfigError("train.intrinsics", "checkpoint " + path.string() + " differs in intrinsics mode");
  }
  load_weights(archive, models, optimizer, path);
  return read_state(archive);
}

void write_manifest(const fs::path& dir, const config::RunConfig& cfg, const std::string& command,
                    const std::string& dataset_fingerprint, const std::vector<std::string>& outputs,
                    const nlohmann::json& extra) {
  fs::create_directories(dir);
  nlohmann::json m{{"command", command},
                   {"config_hash", config::config_hash(cfg)},
                   {"version", version_string()},
                   {"seed", cfg.train.seed},
                   {"dataset_fingerprint", dataset_fingerprint},
                   {"outputs", outputs},
                   {"config", config::to_json(cfg)}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
}

}  // namespace monosfm::train
