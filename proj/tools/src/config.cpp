#include <algorithm>
#include <fstream>

#include "hcustom/errors.hpp"
#include "hcustom/harness.hpp"

namespace hcustom::harness {

std::string to_string(Task t) {
  switch (t) {
    case Task::t2v: return "t2v";
    case Task::single_subject: return "single_subject";
    case Task::multi_subject: return "multi_subject";
    case Task::audio_custom: return "audio_custom";
    case Task::video_custom: return "video_custom";
  }
  return "?";
}

Task task_from_string(std::string_view s) {
  for (Task t : {Task::t2v, Task::single_subject, Task::multi_subject, Task::audio_custom, Task::video_custom}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("task", "unknown task '" + std::string(s) +
                                "' (expected t2v|single_subject|multi_subject|audio_custom|video_custom)");
}

void RunConfig::normalize() {
  model.use_audio = task == Task::audio_custom;
  model.use_video = task == Task::video_custom;
  model.seed = derive_seed(seed, 1);
  train.seed = derive_seed(seed, 2);
  codec.seed = derive_seed(seed, 3);
  codec_train.seed = derive_seed(seed, 4);
  model.backbone.latent_channels = codec.latent_channels;
  model.normalize();
}

void RunConfig::validate() const {
  model.validate();
  codec.validate();
  if (model.backbone.latent_channels != codec.latent_channels) {
    throw ConfigError("model.backbone.latent_channels", "must equal codec.latent_channels");
  }
  if (model.use_audio != (task == Task::audio_custom)) {
    throw ConfigError("model.use_audio", "audio conditioning is only valid for task audio_custom");
  }
  if (model.use_video != (task == Task::video_custom)) {
    throw ConfigError("model.use_video", "video conditioning is only valid for task video_custom");
  }
  if (train.steps < 0) throw ConfigError("train.steps", "must be >= 0");
  if (train.batch < 1) throw ConfigError("train.batch", "must be >= 1");
  if (train.eval_draws < 1) throw ConfigError("train.eval_draws", "must be >= 1");
  train.schedule.validate();
  if (!(train.adam.lr > 0.0)) throw ConfigError("train.lr", "must be > 0");
  if (train.warmup_steps < 0) throw ConfigError("train.warmup_steps", "must be >= 0");
  if (!(train.final_lr_fraction > 0.0 && train.final_lr_fraction <= 1.0)) {
    throw ConfigError("train.final_lr_fraction", "must be in (0, 1]");
  }
  if (codec_train.steps < 0) throw ConfigError("codec_train.steps", "must be >= 0");
  if (codec_train.batch < 1) throw ConfigError("codec_train.batch", "must be >= 1");
  if (mask_dilate < 0) throw ConfigError("mask_dilate", "must be >= 0");
  if (max_samples < 0) throw ConfigError("max_samples", "must be >= 0");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"task", to_string(c.task)},
       {"dataset", c.dataset},
       {"out_dir", c.out_dir},
       {"seed", c.seed},
       {"model", c.model},
       {"codec", {{"spatial_factor", c.codec.spatial_factor},
                  {"latent_channels", c.codec.latent_channels},
                  {"hidden", c.codec.hidden}}},
       {"codec_train", {{"steps", c.codec_train.steps}, {"batch", c.codec_train.batch}, {"lr", c.codec_train.lr}}},
       {"train", c.train},
       {"init_checkpoint", c.init_checkpoint},
       {"codec_checkpoint", c.codec_checkpoint},
       {"mask_dilate", c.mask_dilate},
       {"max_samples", c.max_samples}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  static const char* known[] = {"task",  "dataset",         "out_dir",          "seed",        "model",      "codec",
                                "codec_train", "train", "init_checkpoint", "codec_checkpoint", "mask_dilate", "max_samples"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ConfigError(key, "unknown config key");
    }
  }
  try {
    if (j.contains("task")) c.task = task_from_string(j.at("task").get<std::string>());
    c.dataset = j.value("dataset", c.dataset);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.value("use_audio", false) && c.task != Task::audio_custom) {
        throw ConfigError("model.use_audio", "audio conditioning is only valid for task audio_custom");
      }
      if (m.value("use_video", false) && c.task != Task::video_custom) {
        throw ConfigError("model.use_video", "video conditioning is only valid for task video_custom");
      }
      c.model = m.get<model::ModelConfig>();
    }
    if (j.contains("codec")) {
      const auto& k = j.at("codec");
      c.codec.spatial_factor = k.value("spatial_factor", c.codec.spatial_factor);
      c.codec.latent_channels = k.value("latent_channels", c.codec.latent_channels);
      c.codec.hidden = k.value("hidden", c.codec.hidden);
    }
    if (j.contains("codec_train")) {
      const auto& k = j.at("codec_train");
      c.codec_train.steps = k.value("steps", c.codec_train.steps);
      c.codec_train.batch = k.value("batch", c.codec_train.batch);
      c.codec_train.lr = k.value("lr", c.codec_train.lr);
    }
    if (j.contains("train")) c.train = j.at("train").get<flow::TrainOptions>();
    c.init_checkpoint = j.value("init_checkpoint", c.init_checkpoint);
    c.codec_checkpoint = j.value("codec_checkpoint", c.codec_checkpoint);
    c.mask_dilate = j.value("mask_dilate", c.mask_dilate);
    c.max_samples = j.value("max_samples", c.max_samples);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", std::string("malformed value: ") + e.what());
  }
}

void apply_override(nlohmann::json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError(std::string(assignment), "override must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component in override");
    if (!node->is_object()) throw ConfigError(key, "override path crosses a non-object value");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

RunConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config", path.string() + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  RunConfig c = j.get<RunConfig>();
  c.normalize();
  c.validate();
  return c;
}

}  // namespace hcustom::harness
