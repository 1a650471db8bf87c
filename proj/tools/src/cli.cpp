#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hcustom/audio_net.hpp"
#include "hcustom/errors.hpp"
#include "hcustom/harness.hpp"
#include "hcustom/log.hpp"
#include "hcustom/rope3d.hpp"
#include "hcustom/video_inject.hpp"

namespace hcustom::harness {
namespace {

struct SubjectArg {
  std::string name;
  std::string image;
};

SubjectArg parse_subject(const std::string& text) {
  SubjectArg s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ConfigError("subject", "expected name=<word>,image=<path>, got '" + text + "'");
    const std::string key = part.substr(0, eq);
    const std::string value = part.substr(eq + 1);
    if (key == "name") {
      s.name = value;
    } else if (key == "image") {
      s.image = value;
    } else {
      throw ConfigError("subject", "unknown key '" + key + "'");
    }
  }
  if (s.name.empty() || s.image.empty()) throw ConfigError("subject", "both name and image are required");
  return s;
}

/// "WxHxF" latent grid.
std::array<int, 3> parse_grid(const std::string& text) {
  std::array<int, 3> v{};
  char x1 = 0, x2 = 0;
  std::istringstream in(text);
  if (!(in >> v[0] >> x1 >> v[1] >> x2 >> v[2]) || x1 != 'x' || x2 != 'x' || !in.eof() || v[0] < 1 || v[1] < 1 ||
      v[2] < 1) {
    throw ConfigError("latent", "expected WxHxF with positive integers, got '" + text + "'");
  }
  return v;
}

std::string out_override(const std::string& fallback) {
  const char* env = std::getenv("HCUSTOM_OUT");
  return env && *env ? std::string(env) : fallback;
}

void apply_codec_config(RunConfig& config, const std::string& path) {
  if (path.empty()) return;
  try {
    config.codec = nlohmann::json::parse(read_file(path)).get<codec::CodecConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("codec", std::string("cannot parse codec config: ") + e.what());
  }
  config.normalize();
  config.validate();
}

int cmd_gen_data(int count, std::uint64_t seed, const std::string& out, int subjects, int frames, int height,
                 int width) {
  synth::GenerateOptions o;
  o.count = count;
  o.seed = seed;
  o.subjects = subjects;
  o.scene.frames = frames;
  o.scene.height = height;
  o.scene.width = width;
  if (count < 1) throw ConfigError("count", "must be >= 1");
  if (subjects < 1 || subjects > static_cast<int>(synth::kShapes.size())) {
    throw ConfigError("subjects", "must be in [1, " + std::to_string(synth::kShapes.size()) + "]");
  }
  const auto m = synth::generate_dataset(out, o);
  log::record("gen_data_done", {{"out", out}, {"count", m.samples.size()}});
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets, const std::string& codec_config) {
  RunConfig config = load_config(config_path, sets);
  config.out_dir = out_override(config.out_dir);
  apply_codec_config(config, codec_config);
  const TrainOutcome o = train_run(config);
  std::cout << o.checkpoint.string() << "\n";
  return 0;
}

struct SampleArgs {
  std::string ckpt, prompt, template_mode, audio, condition_video, condition_mask, inject_mode, out;
  std::vector<std::string> subjects;
  std::optional<double> lambda;
  int frames = 33;
  int height = 64;
  int width = 64;
  int steps = 50;
  std::uint64_t seed = 0;
};

int cmd_sample(const SampleArgs& a) {
  flow::LoadedCheckpoint ck = flow::load_checkpoint(a.ckpt);
  model::Denoiser& m = *ck.model;
  const codec::LatentCodec& codec = *ck.codec;
  if (!a.inject_mode.empty() && video::inject_mode_from_string(a.inject_mode) != m.config().video_mode) {
    throw ConfigError("video-inject-mode", "checkpoint was trained with '" + video::to_string(m.config().video_mode) +
                                               "', got '" + a.inject_mode + "'");
  }
  if (a.lambda) m.set_audio_lambda(*a.lambda);
  if (!a.template_mode.empty()) m.set_template_mode(prompt::template_mode_from_string(a.template_mode));

  const int s = codec.config().spatial_factor;
  if (a.height % s || a.width % s) throw ConfigError("height", "height and width must be multiples of " + std::to_string(s));
  if (a.frames < 1) throw ConfigError("frames", "must be >= 1");
  const model::LatentShape shape{codec::latent_frame_count(a.frames), a.height / s, a.width / s,
                                 codec.config().latent_channels};

  model::ConditionBundle cond;
  cond.prompt = a.prompt;
  for (const auto& text : a.subjects) {
    const SubjectArg sa = parse_subject(text);
    codec::PixelVideo img = codec::load_video(sa.image);
    if (img.frames != 1) img = img.frame(0);
    if (m.config().identity != model::IdentityMode::none) cond.identity_latents.push_back(codec.encode(img));
    cond.subjects.push_back({sa.name, std::move(img)});
  }
  if (!a.audio.empty()) {
    const auto track = audio::get_audio(Container::load(a.audio), "audio");
    cond.audio = audio::align_audio(track, shape.frames, true);
  }
  if (!a.condition_video.empty()) {
    video::ConditionVideo cv{codec::load_video(a.condition_video), std::nullopt};
    if (!a.condition_mask.empty()) cv.mask = Container::load(a.condition_mask).get_u8("mask");
    cond.condition = video::encode_condition(cv, codec).embeddings;
  } else if (!a.condition_mask.empty()) {
    throw ConfigError("condition-mask", "requires --condition-video");
  }
  m.check(cond, shape);
  const codec::PixelVideo v = generate(m, codec, cond, shape, {a.steps, a.seed});
  codec::save_video(a.out, v);
  log::record("sample_done", {{"out", a.out}, {"frames", v.frames}});
  return 0;
}

int cmd_evaluate(const std::string& videos_dir, const std::string& refs, const std::string& report_path) {
  const auto samples = synth::load_dataset(refs);
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(videos_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".hcar") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<codec::PixelVideo> videos;
  videos.reserve(files.size());
  std::vector<metrics::EvalItem> items;
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    const auto it = std::find_if(samples.begin(), samples.end(), [&](const auto& s) { return s.id == id; });
    if (it == samples.end()) throw ValidationError("evaluate: no reference sample named '" + id + "'");
    videos.push_back(codec::load_video(f));
    items.push_back({id, nullptr, &it->identity_images.at(0), it->caption});
  }
  if (items.empty()) throw ValidationError("evaluate: no .hcar videos in " + videos_dir);
  for (std::size_t i = 0; i < items.size(); ++i) items[i].video = &videos[i];
  const auto report = metrics::evaluate(items, metrics::ToySpriteProvider{});
  write_file_atomic(report_path, report.to_json().dump(2) + "\n");
  std::cout << report.table();
  return 0;
}

int cmd_ablate(const std::string& axis, const std::string& config_path, const std::vector<std::string>& sets,
               int videos, int sampler_steps, const std::string& report_path) {
  RunConfig base = load_config(config_path, sets);
  base.out_dir = out_override(base.out_dir);
  const std::string canonical = canonical_axis(axis);
  const auto samples = synth::load_dataset(base.dataset);
  const nlohmann::json report = ablate(canonical, base, samples, videos, sampler_steps);
  const std::string path =
      report_path.empty() ? (std::filesystem::path(base.out_dir) / ("ablation_" + canonical + ".json")).string()
                          : report_path;
  write_file_atomic(path, report.dump(2) + "\n");
  std::cout << path << "\n";
  return 0;
}

int cmd_inspect_positions(int subjects, const std::string& latent) {
  if (subjects < 0) throw ConfigError("subjects", "must be >= 0");
  const auto [w, h, f] = parse_grid(latent);
  std::printf("%-10s %7s %5s %5s %5s\n", "segment", "subject", "t", "x", "y");
  for (int k = 1; k <= subjects; ++k) {
    for (const auto& p : rope::identity_positions(k, w, h)) {
      std::printf("%-10s %7d %5d %5d %5d\n", "identity", k, p.t, p.x, p.y);
    }
  }
  for (const auto& p : rope::video_positions(f, w, h)) std::printf("%-10s %7d %5d %5d %5d\n", "video", 0, p.t, p.x, p.y);
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"hcustom: subject-consistent video generation toolkit"};
  app.require_subcommand(1);

  int count = 50, subjects = 1, frames = 33, height = 64, width = 64;
  std::uint64_t seed = 0;
  std::string out = "data";
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic sprite dataset");
  gen->add_option("--count", count, "Number of samples");
  gen->add_option("--seed", seed, "Dataset seed");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--subjects", subjects, "Subjects per clip");
  gen->add_option("--frames", frames, "Pixel frames per clip");
  gen->add_option("--height", height, "Frame height");
  gen->add_option("--width", width, "Frame width");

  std::string config_path, codec_config;
  std::vector<std::string> sets;
  auto* train = app.add_subcommand("train", "Train a denoiser from a run config");
  train->add_option("--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--set", sets, "Override key=value (repeatable, last wins)");
  train->add_option("--codec-config", codec_config, "Codec config (JSON) replacing the run config's codec");

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Generate a video from a checkpoint");
  sample->add_option("--ckpt", sa.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  sample->add_option("--prompt", sa.prompt, "Text prompt")->required();
  sample->add_option("--subject", sa.subjects, "name=<word>,image=<path> (repeatable)");
  sample->add_option("--template", sa.template_mode, "embedded|appended");
  sample->add_option("--audio", sa.audio, "Audio track container");
  sample->add_option("--lambda-audio", sa.lambda, "Audio injection strength");
  sample->add_option("--condition-video", sa.condition_video, "Condition video container");
  sample->add_option("--condition-mask", sa.condition_mask, "Keep-mask container (u8 array 'mask')");
  sample->add_option("--video-inject-mode", sa.inject_mode, "add|concat (must match the checkpoint)");
  sample->add_option("--frames", sa.frames, "Pixel frames");
  sample->add_option("--height", sa.height, "Frame height");
  sample->add_option("--width", sa.width, "Frame width");
  sample->add_option("--steps", sa.steps, "Euler steps");
  sample->add_option("--seed", sa.seed, "Noise seed");
  sample->add_option("--out", sa.out, "Output video container")->required();

  std::string videos_dir, refs, report_path;
  auto* evaluate = app.add_subcommand("evaluate", "Score generated videos against dataset references");
  evaluate->add_option("--videos", videos_dir, "Directory of <sample_id>.hcar videos")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--refs", refs, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--report", report_path, "Report path (JSON)")->required();

  std::string axis;
  int ablate_videos = 20, sampler_steps = 50;
  auto* abl = app.add_subcommand("ablate", "Paired baseline/variant runs along one axis");
  abl->add_option("--axis", axis, "no_fusion|no_identity_enhancement|channel_concat|video_inject_concat")->required();
  abl->add_option("--config", config_path, "Base run config (JSON)")->required()->check(CLI::ExistingFile);
  abl->add_option("--set", sets, "Override key=value (repeatable, last wins)");
  abl->add_option("--videos", ablate_videos, "Generated videos per arm");
  abl->add_option("--sampler-steps", sampler_steps, "Euler steps per video");
  abl->add_option("--report", report_path, "Report path (JSON)");

  int inspect_subjects = 1;
  std::string latent = "4x4x3";
  auto* inspect = app.add_subcommand("inspect-positions", "Print rotary positions of identity and video tokens");
  inspect->add_option("--subjects", inspect_subjects, "Number of identity blocks");
  inspect->add_option("--latent", latent, "Latent grid WxHxF");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(count, seed, out, subjects, frames, height, width);
    if (*train) return cmd_train(config_path, sets, codec_config);
    if (*sample) return cmd_sample(sa);
    if (*evaluate) return cmd_evaluate(videos_dir, refs, report_path);
    if (*abl) return cmd_ablate(axis, config_path, sets, ablate_videos, sampler_steps, report_path);
    if (*inspect) return cmd_inspect_positions(inspect_subjects, latent);
  } catch (const ConfigError& e) {
    log::record("error", {{"kind", "config"}, {"field", e.field()}, {"message", e.what()}});
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    log::record("error", {{"kind", "validation"}, {"message", e.what()}});
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    log::record("error", {{"kind", "runtime"}, {"message", e.what()}});
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace hcustom::harness
