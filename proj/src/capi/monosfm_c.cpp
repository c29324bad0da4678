#include "monosfm/monosfm.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <nlohmann/json.hpp>
#include <string>

#include "attacks.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "corruptions.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "metrics.hpp"
#include "trainer.hpp"
#include "util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace monosfm;

struct msfm_model {
  config::RunConfig cfg;
  train::Models models;
  std::string checkpoint;
  std::string checkpoint_sha256;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
msfm_status guarded(F&& fn) {
  g_last_error.clear();
  try {
    fn();
    return MSFM_OK;
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return MSFM_ERR_CONFIG;
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return MSFM_ERR_CONFIG;
  } catch (const DataError& e) {
    g_last_error = e.what();
    return MSFM_ERR_DATA;
  } catch (const ShapeError& e) {
    g_last_error = e.what();
    return MSFM_ERR_SHAPE;
  } catch (const DomainError& e) {
    g_last_error = e.what();
    return MSFM_ERR_DOMAIN;
  } catch (const TrainingError& e) {
    g_last_error = e.what();
    return MSFM_ERR_TRAINING;
  } catch (const c10::Error& e) {
    g_last_error = e.what_without_backtrace();
    return MSFM_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MSFM_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return MSFM_ERR_RUNTIME;
  }
}

void require(const void* p, const char* name) {
  if (!p) throw ConfigError(name, "must not be NULL");
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_options(const char* text) {
  if (!text || !*text) return json::object();
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("options", "expected a JSON object");
  return j;
}

config::RunConfig parse_config_json(const char* text) {
  require(text, "config_json");
  auto doc = json::parse(text, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("", "config is not valid JSON");
  auto cfg = config::from_json(doc);
  cfg.validate();
  return cfg;
}

// Applies evaluation-time overrides; the architecture must stay the same.
config::RunConfig with_overrides(const config::RunConfig& base, const json& overrides) {
  if (overrides.is_null() || overrides.empty()) return base;
  auto doc = config::to_json(base);
  for (const auto& o : overrides) config::apply_override(doc, o.get<std::string>());
  auto cfg = config::from_json(doc);
  cfg.validate();
  if (config::model_json(cfg) != config::model_json(base) || cfg.learn_intrinsics() != base.learn_intrinsics()) {
    throw ConfigError("model", "overrides may not change the architecture of a trained model");
  }
  return cfg;
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

json provenance(const msfm_model& m, const json& request) {
  return {{"checkpoint", m.checkpoint}, {"checkpoint_sha256", m.checkpoint_sha256}, {"request", request}};
}

}  // namespace

extern "C" {

const char* msfm_version(void) { return version_string(); }

const char* msfm_last_error(void) { return g_last_error.c_str(); }

const char* msfm_status_name(msfm_status status) {
  switch (status) {
    case MSFM_OK: return "ok";
    case MSFM_ERR_CONFIG: return "config error";
    case MSFM_ERR_DATA: return "data error";
    case MSFM_ERR_SHAPE: return "shape error";
    case MSFM_ERR_DOMAIN: return "domain error";
    case MSFM_ERR_TRAINING: return "training error";
    case MSFM_ERR_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

void msfm_free_string(char* s) { std::free(s); }

msfm_status msfm_config_resolve(const char* config_path, const char* const* overrides, size_t n_overrides,
                                char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    std::vector<std::string> ov;
    for (size_t i = 0; i < n_overrides; ++i) {
      require(overrides[i], "overrides[i]");
      ov.emplace_back(overrides[i]);
    }
    const auto cfg = config::load_config(config_path ? fs::path(config_path) : fs::path(), ov);
    *out_json = dup_string(config::to_json(cfg).dump(2));
  });
}

msfm_status msfm_train(const char* config_json, const char* run_dir, int resume, msfm_progress_fn progress,
                       void* user, char** out_summary) {
  return guarded([&] {
    auto cfg = parse_config_json(config_json);
    const fs::path dir = run_dir && *run_dir ? fs::path(run_dir) : fs::path(cfg.output_dir);
    cfg.output_dir = dir.string();
    auto source = train::make_training_source(cfg);
    train::Trainer trainer(cfg, source, dir);
    if (resume) {
      const auto latest = trainer.latest_checkpoint();
      if (latest.empty()) throw DataError("nothing to resume in " + dir.string());
      trainer.resume(latest);
    }
    train::StepRecord last;
    const auto state = trainer.run([&](const train::StepRecord& r) {
      last = r;
      if (!progress) return true;
      const auto rec = train::to_json(r).dump();
      return progress(rec.c_str(), user) != 0;
    });
    const auto checkpoint = trainer.latest_checkpoint();
    std::vector<std::string> outputs{(dir / "metrics.jsonl").string()};
    if (!checkpoint.empty()) outputs.push_back(checkpoint.string());
    train::write_manifest(dir, cfg, "train", source->fingerprint(), outputs,
                          {{"steps", state.step}, {"epochs_completed", state.epoch}});
    if (out_summary) {
      json s{{"steps", state.step},
             {"epoch", state.epoch},
             {"final_loss", last.total},
             {"checkpoint", checkpoint.string()},
             {"run_dir", dir.string()}};
      *out_summary = dup_string(s.dump(2));
    }
  });
}

msfm_status msfm_model_load(const char* checkpoint_path, msfm_model** out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(out, "out");
    auto ck = train::load_checkpoint(checkpoint_path);
    ck.models.train(false);
    *out = new msfm_model{std::move(ck.cfg), std::move(ck.models), fs::absolute(checkpoint_path).string(),
                          file_sha256(checkpoint_path)};
  });
}

msfm_status msfm_model_create(const char* config_json, msfm_model** out) {
  return guarded([&] {
    require(out, "out");
    auto cfg = parse_config_json(config_json);
    auto models = train::build_models(cfg);
    models.train(false);
    *out = new msfm_model{std::move(cfg), std::move(models), "", ""};
  });
}

void msfm_model_free(msfm_model* model) { delete model; }

msfm_status msfm_model_config(const msfm_model* model, char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    *out_json = dup_string(config::to_json(model->cfg).dump(2));
  });
}

msfm_status msfm_predict_disparity(msfm_model* model, const float* rgb, int64_t height, int64_t width,
                                   float* out_disparity) {
  return guarded([&] {
    require(model, "model");
    require(rgb, "rgb");
    require(out_disparity, "out_disparity");
    if (height != model->cfg.data.height || width != model->cfg.data.width) {
      throw ShapeError("input must be " + std::to_string(model->cfg.data.height) + "x" +
                       std::to_string(model->cfg.data.width));
    }
    torch::NoGradGuard guard;
    model->models.train(false);
    auto x = torch::from_blob(const_cast<float*>(rgb), {1, 3, height, width}, torch::kFloat32).clone();
    auto disp = model->models.depth->forward(x).front().contiguous();
    std::memcpy(out_disparity, disp.data_ptr<float>(), sizeof(float) * height * width);
  });
}

msfm_status msfm_evaluate(msfm_model* model, const char* options_json, char** out_report) {
  return guarded([&] {
    require(model, "model");
    require(out_report, "out_report");
    const auto opts = parse_options(options_json);
    const auto cfg = with_overrides(model->cfg, opts.value("overrides", json::array()));
    eval::EvalRequest req;
    req.seed = opts.value("seed", uint64_t{0});
    req.max_frames = opts.value("max_frames", size_t{0});
    if (opts.contains("corruption") && !opts["corruption"].is_null()) {
      req.corruption = robust::parse_corruption_spec(opts["corruption"].get<std::string>(), req.seed);
    }
    if (opts.contains("attack") && !opts["attack"].is_null()) {
      req.attack = robust::parse_attack_spec(opts["attack"].get<std::string>());
    }
    const auto source = eval::make_eval_source(cfg);
    const auto report = eval::evaluate_model(model->models, cfg, *source, req);
    auto j = report.to_json();
    std::string label = "clean";
    if (!report.corruption.empty()) label = report.corruption;
    if (!report.attack.empty()) label = report.attack;
    j["table"] = report.table(label);
    j["dataset_fingerprint"] = source->fingerprint();
    j["config_hash"] = config::config_hash(cfg);
    if (opts.contains("out_dir")) {
      const fs::path dir(opts["out_dir"].get<std::string>());
      fs::create_directories(dir);
      std::ofstream(dir / "report.json") << j.dump(2) << '\n';
      std::ofstream(dir / "table.txt") << report.table(label);
      train::write_manifest(dir, cfg, "eval", source->fingerprint(), {"report.json", "table.txt"},
                            provenance(*model, opts));
    }
    *out_report = dup_string(j.dump(2));
  });
}

msfm_status msfm_export_disparity(msfm_model* model, const char* const* image_paths, size_t n_images,
                                  const char* out_dir) {
  return guarded([&] {
    require(model, "model");
    require(out_dir, "out_dir");
    torch::NoGradGuard guard;
    model->models.train(false);
    const auto h = model->cfg.data.height;
    const auto w = model->cfg.data.width;
    std::vector<std::string> outputs;
    for (size_t i = 0; i < n_images; ++i) {
      require(image_paths[i], "image_paths[i]");
      const fs::path in(image_paths[i]);
      const auto image = data::load_image(in);
      const auto x = data::resize_image(image, h, w).unsqueeze(0);
      const auto disp = model->models.depth->forward(x).front()[0];
      const auto stem = fs::path(out_dir) / in.stem();
      data::save_float_tiff(stem.string() + "_disp.tiff", disp);
      data::save_disparity_preview(stem.string() + "_disp.png", disp, image.size(1), image.size(2));
      outputs.push_back(stem.string() + "_disp.tiff");
      outputs.push_back(stem.string() + "_disp.png");
    }
    json request{{"images", json::array()}};
    for (size_t i = 0; i < n_images; ++i) request["images"].push_back(fs::absolute(image_paths[i]).string());
    train::write_manifest(out_dir, model->cfg, "export-disparity", "", outputs, provenance(*model, request));
  });
}

msfm_status msfm_corrupt_file(const char* input_path, const char* output_path, const char* spec, uint64_t seed) {
  return guarded([&] {
    require(input_path, "input_path");
    require(output_path, "output_path");
    require(spec, "spec");
    const auto s = robust::parse_corruption_spec(spec, seed);
    data::save_image_png(output_path, robust::corrupt(data::load_image(input_path), s));
  });
}

msfm_status msfm_corrupt_buffer(float* rgb, int64_t height, int64_t width, const char* spec, uint64_t seed) {
  return guarded([&] {
    require(rgb, "rgb");
    require(spec, "spec");
    if (height <= 0 || width <= 0) throw ShapeError("image size must be positive");
    const auto s = robust::parse_corruption_spec(spec, seed);
    auto x = torch::from_blob(rgb, {3, height, width}, torch::kFloat32);
    x.copy_(robust::corrupt(x.clone(), s));
  });
}

msfm_status msfm_attack_export(msfm_model* model, const char* options_json, const char* out_dir,
                               char** out_summary) {
  return guarded([&] {
    require(model, "model");
    require(out_dir, "out_dir");
    const auto opts = parse_options(options_json);
    if (!opts.contains("attack")) throw ConfigError("attack", "required, e.g. pgd:4");
    const auto spec = robust::parse_attack_spec(opts["attack"].get<std::string>());
    const auto seed = opts.value("seed", uint64_t{0});
    const auto cfg = with_overrides(model->cfg, opts.value("overrides", json::array()));
    const auto source = eval::make_eval_source(cfg);
    size_t n = opts.value("max_frames", size_t{0});
    n = n > 0 ? std::min(n, source->size()) : source->size();
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    json frames = json::array();
    std::vector<std::string> outputs;
    double max_linf = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const auto t = source->get(i);
      auto clean = data::collate({t}, true);
      data::Batch adv = clean;
      if (spec.kind == robust::AttackKind::kPgd) {
        adv = robust::pgd_untargeted(model->models, clean, cfg, spec, seed + i);
      } else {
        adv.center = robust::targeted_flip_attack(model->models.depth, clean.center, spec, cfg.depth.min_depth,
                                                  cfg.depth.max_depth);
      }
      json entry{{"sequence", t.sequence}, {"frame", t.frame}};
      auto save = [&](const torch::Tensor& a, const torch::Tensor& c, const char* role) {
        if (!a.defined()) return;
        std::ostringstream name;
        name << std::setw(6) << std::setfill('0') << i << "_" << role << ".tiff";
        data::save_float_tiff(dir / name.str(), a[0]);
        const double linf = (a - c).abs().max().item<double>();
        max_linf = std::max(max_linf, linf);
        entry[role] = {{"file", name.str()}, {"linf", linf}};
        outputs.push_back(name.str());
      };
      save(adv.prev, clean.prev, "prev");
      save(adv.center, clean.center, "center");
      save(adv.next, clean.next, "next");
      frames.push_back(entry);
    }
    auto extra = provenance(*model, opts);
    extra.update(json{{"attack", robust::to_string(spec.kind)},
                           {"epsilon", spec.epsilon},
                           {"iterations", spec.iterations()},
                           {"step_size", spec.step_size},
                           {"seed", seed},
                           {"max_linf", max_linf},
                           {"frames", frames}});
    train::write_manifest(dir, cfg, "attack", source->fingerprint(), outputs, extra);
    if (out_summary) {
      json s{{"frames", n}, {"iterations", spec.iterations()}, {"max_linf_255", max_linf * 255.0}};
      *out_summary = dup_string(s.dump(2));
    }
  });
}

msfm_status msfm_benchmark(msfm_model* model, const char* options_json, char** out_result) {
  return guarded([&] {
    require(model, "model");
    require(out_result, "out_result");
    const auto opts = parse_options(options_json);
    const auto passes = opts.value("passes", int64_t{20});
    const auto warmup = opts.value("warmup", int64_t{3});
    const auto batch = opts.value("batch", int64_t{1});
    const auto network = opts.value("network", std::string("depth"));
    if (batch <= 0) throw ConfigError("batch", "must be positive");
    torch::NoGradGuard guard;
    model->models.train(false);
    const auto h = model->cfg.data.height;
    const auto w = model->cfg.data.width;
    std::function<void()> forward;
    torch::Tensor x;
    if (network == "depth") {
      x = torch::rand({batch, 3, h, w});
      forward = [&] { model->models.depth->forward(x); };
    } else if (network == "pose") {
      x = torch::rand({batch, 6, h, w});
      forward = [&] { model->models.pose->forward(x); };
    } else {
      throw ConfigError("network", "expected depth or pose");
    }
    metrics::RaplPowerSampler rapl;
    const auto r = metrics::efficiency_benchmark(forward, passes, warmup, &rapl);
    json j{{"network", network},
           {"fps", r.fps * static_cast<double>(batch)},
           {"seconds", r.seconds},
           {"passes", r.passes},
           {"batch", batch},
           {"height", h},
           {"width", w}};
    j["joules_per_frame"] = r.joules_per_frame ? json(*r.joules_per_frame / static_cast<double>(batch)) : json(nullptr);
    *out_result = dup_string(j.dump(2));
  });
}

msfm_status msfm_synthesize_dataset(const char* out_root, const char* options_json) {
  return guarded([&] {
    require(out_root, "out_root");
    const auto opts = parse_options(options_json);
    // Reuse the config parser so option names and checks match data.synthetic.
    json doc{{"data", {{"synthetic", json::object()}}}};
    int64_t sequences = 1;
    for (const auto& [k, v] : opts.items()) {
      if (k == "height" || k == "width") {
        doc["data"][k] = v;
      } else if (k == "sequences") {
        sequences = v.get<int64_t>();
      } else {
        doc["data"]["synthetic"][k] = v;
      }
    }
    doc["train"] = {{"intrinsics", "learned"}};
    const auto cfg = config::from_json(doc);
    cfg.validate_data();
    if (sequences <= 0) throw ConfigError("sequences", "must be positive");
    for (int64_t s = 0; s < sequences; ++s) {
      auto o = cfg.data.synthetic;
      o.seed += static_cast<uint64_t>(s);
      std::ostringstream name;
      name << "scene_" << std::setw(3) << std::setfill('0') << s;
      data::write_synthetic_sequence(out_root, name.str(), data::render_synthetic_sequence(o));
    }
  });
}

int64_t msfm_attack_iterations(double epsilon) {
  try {
    return robust::pgd_iterations(epsilon);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return -1;
  }
}

}  // extern "C"
