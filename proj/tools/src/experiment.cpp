#include <cstdio>
#include <fstream>

#include "hcustom/errors.hpp"
#include "hcustom/harness.hpp"
#include "hcustom/log.hpp"
#include "hcustom/pipeline.hpp"
#include "hcustom/video_inject.hpp"

namespace hcustom::harness {

codec::LatentCodec prepare_codec(const RunConfig& config, std::span<const synth::TrainSample> samples) {
  if (!config.codec_checkpoint.empty()) {
    codec::LatentCodec c = codec::LatentCodec::load(Container::load(config.codec_checkpoint));
    if (c.config().latent_channels != config.codec.latent_channels ||
        c.config().spatial_factor != config.codec.spatial_factor) {
      throw ConfigError("codec_checkpoint", "stored codec does not match the codec config");
    }
    return c;
  }
  if (samples.empty()) throw ValidationError("prepare_codec: no samples to train the codec on");
  std::vector<codec::PixelVideo> videos;
  for (const auto& s : samples) {
    videos.push_back(s.video);
    for (const auto& img : s.identity_images) videos.push_back(img);
  }
  codec::LatentCodec c(config.codec);
  c.train(videos, config.codec_train);
  return c;
}

std::vector<std::uint8_t> condition_mask(const synth::TrainSample& sample, int mask_dilate) {
  const auto& v = sample.video;
  std::vector<std::uint8_t> subject =
      mask_dilate > 0 ? pipeline::augment_video_mask(sample.mask, v.frames, v.height, v.width,
                                                     pipeline::MaskAugment::dilate, mask_dilate)
                      : sample.mask;
  for (auto& m : subject) m = m ? 0 : 1;
  return subject;
}

model::ConditionBundle make_conditions(Task task, const model::ModelConfig& model, const synth::TrainSample& sample,
                                       const codec::LatentCodec& codec, int mask_dilate) {
  model::ConditionBundle b;
  b.prompt = sample.caption;
  std::size_t subjects = 0;
  switch (task) {
    case Task::t2v: subjects = 0; break;
    case Task::multi_subject:
      if (sample.identities.size() < 2) {
        throw ValidationError(sample.id + ": multi_subject needs samples with at least two subjects");
      }
      subjects = sample.identities.size();
      break;
    default: subjects = 1; break;
  }
  for (std::size_t i = 0; i < subjects; ++i) {
    b.subjects.push_back({sample.identities[i].descriptor(), sample.identity_images[i]});
    if (model.identity != model::IdentityMode::none) b.identity_latents.push_back(codec.encode(sample.identity_images[i]));
  }
  if (task == Task::audio_custom) {
    b.audio = audio::align_audio(sample.audio, codec::latent_frame_count(sample.video.frames), true);
  }
  if (task == Task::video_custom) {
    video::ConditionVideo cv{sample.video, condition_mask(sample, mask_dilate)};
    b.condition = video::encode_condition(cv, codec).embeddings;
  }
  return b;
}

flow::Example make_example(Task task, const model::ModelConfig& model, const synth::TrainSample& sample,
                           const codec::LatentCodec& codec, int mask_dilate) {
  const codec::LatentVideo z = codec.encode(sample.video);
  flow::Example ex;
  ex.id = sample.id;
  ex.shape = {z.frames, z.height, z.width, z.channels};
  ex.z1 = z.data;
  ex.cond = make_conditions(task, model, sample, codec, mask_dilate);
  return ex;
}

namespace {

nlohmann::json stored_config(const RunConfig& c) {
  nlohmann::json j = c;
  j.erase("out_dir");  // checkpoints must not depend on where they are written
  return j;
}

std::span<const synth::TrainSample> limit(const RunConfig& c, std::span<const synth::TrainSample> samples) {
  if (c.max_samples > 0 && static_cast<std::size_t>(c.max_samples) < samples.size()) {
    return samples.first(static_cast<std::size_t>(c.max_samples));
  }
  return samples;
}

}  // namespace

TrainOutcome train_run(const RunConfig& config, std::span<const synth::TrainSample> all) {
  config.validate();
  const auto samples = limit(config, all);
  if (samples.empty()) throw ValidationError("train: dataset is empty");
  const std::filesystem::path out = config.out_dir;
  std::filesystem::create_directories(out);
  write_file_atomic(out / "config.json", nlohmann::json(config).dump(2) + "\n");

  TrainOutcome o;
  o.codec = std::make_unique<codec::LatentCodec>(prepare_codec(config, samples));
  for (const auto& s : samples) o.examples.push_back(make_example(config.task, config.model, s, *o.codec, config.mask_dilate));
  o.model = std::make_unique<model::Denoiser>(config.model);
  if (!config.init_checkpoint.empty()) flow::load_weights(config.init_checkpoint, *o.model);

  flow::TrainOptions opts = config.train;
  opts.loss_csv = out / "loss.csv";
  o.checkpoint = out / "checkpoint.hcar";
  const nlohmann::json extra = {{"task", to_string(config.task)}, {"run", stored_config(config)}};
  const auto hook = [&](std::int64_t step) {
    if (step == opts.steps) {
      flow::save_checkpoint(o.checkpoint, *o.model, *o.codec, step, extra);
    } else {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_step%06lld.hcar", static_cast<long long>(step));
      flow::save_checkpoint(out / name, *o.model, *o.codec, step, extra);
    }
  };
  o.result = flow::train(*o.model, o.examples, opts, hook);
  const nlohmann::json summary = {{"steps", o.result.steps},
                                  {"eval_loss_initial", o.result.initial_eval},
                                  {"eval_loss_final", o.result.final_eval},
                                  {"last_batch_loss", o.result.losses.empty() ? 0.0 : o.result.losses.back()}};
  write_file_atomic(out / "train_summary.json", summary.dump(2) + "\n");
  return o;
}

TrainOutcome train_run(const RunConfig& config) {
  if (config.dataset.empty()) throw ConfigError("dataset", "no dataset directory given");
  const auto samples = synth::load_dataset(config.dataset);
  return train_run(config, samples);
}

TrainOutcome load_outcome(const RunConfig& config, std::span<const synth::TrainSample> all,
                          const std::filesystem::path& checkpoint) {
  const auto samples = limit(config, all);
  flow::LoadedCheckpoint ck = flow::load_checkpoint(checkpoint);
  if (!(ck.model->config() == config.model)) throw ValidationError("load_outcome: checkpoint model config differs from the run");
  TrainOutcome o;
  o.model = std::move(ck.model);
  o.codec = std::move(ck.codec);
  o.checkpoint = checkpoint;
  o.result.steps = static_cast<int>(ck.step);
  for (const auto& s : samples) o.examples.push_back(make_example(config.task, config.model, s, *o.codec, config.mask_dilate));
  return o;
}

codec::PixelVideo generate(const model::Denoiser& model, const codec::LatentCodec& codec,
                           const model::ConditionBundle& cond, const model::LatentShape& shape,
                           const flow::SamplerConfig& sampler) {
  const flow::SampleResult r = flow::sample(model, cond, shape, sampler);
  codec::LatentVideo lv;
  lv.frames = shape.frames;
  lv.height = shape.height;
  lv.width = shape.width;
  lv.channels = shape.channels;
  lv.spatial_factor = codec.config().spatial_factor;
  lv.data = r.video_tokens();
  return codec.decode(lv);
}

GenerationEval evaluate_generation(const TrainOutcome& run, const RunConfig& config,
                                   std::span<const synth::TrainSample> all, int videos, int sampler_steps) {
  const auto samples = limit(config, all);
  if (videos < 1) throw ConfigError("videos", "must be >= 1");
  if (samples.size() != run.examples.size()) throw ValidationError("evaluate_generation: samples do not match the run");
  std::vector<codec::PixelVideo> generated;
  std::vector<metrics::EvalItem> items;
  GenerationEval out;
  double first = 0.0, background = 0.0;
  for (int i = 0; i < videos; ++i) {
    const std::size_t idx = static_cast<std::size_t>(i) % samples.size();
    const auto& ex = run.examples[idx];
    const flow::SamplerConfig sc{sampler_steps, derive_seed(config.seed, 0x5A00ULL + static_cast<std::uint64_t>(i))};
    generated.push_back(generate(*run.model, *run.codec, ex.cond, ex.shape, sc));
    const auto& target = samples[idx].video;
    first += metrics::frame_error(generated.back(), target, 0);
    if (config.task == Task::video_custom) {
      background += metrics::masked_error(generated.back(), target, condition_mask(samples[idx], config.mask_dilate), 1);
    }
  }
  for (int i = 0; i < videos; ++i) {
    const std::size_t idx = static_cast<std::size_t>(i) % samples.size();
    items.push_back({samples[idx].id, &generated[static_cast<std::size_t>(i)], &samples[idx].identity_images.at(0),
                     samples[idx].caption});
  }
  out.report = metrics::evaluate(items, metrics::ToySpriteProvider{});
  out.first_frame_error = first / videos;
  if (config.task == Task::video_custom) out.background_error = background / videos;
  return out;
}

std::string canonical_axis(std::string_view axis) {
  if (axis == "identity_enhancement") return "no_identity_enhancement";
  for (auto a : kAblationAxes) {
    if (a == axis) return std::string(a);
  }
  throw ConfigError("axis", "unknown ablation axis '" + std::string(axis) +
                                "' (expected no_fusion|no_identity_enhancement|channel_concat|video_inject_concat)");
}

std::pair<RunConfig, RunConfig> ablation_pair(std::string_view axis_in, const RunConfig& base_in) {
  const std::string axis = canonical_axis(axis_in);
  RunConfig base = base_in;
  if (axis == "video_inject_concat") {
    base.task = Task::video_custom;
    base.model.video_mode = video::InjectMode::add;
  } else {
    base.model.identity = model::IdentityMode::temporal;
    base.model.fusion_images = true;
  }
  RunConfig variant = base;
  if (axis == "no_fusion") variant.model.fusion_images = false;
  if (axis == "no_identity_enhancement") variant.model.identity = model::IdentityMode::none;
  if (axis == "channel_concat") variant.model.identity = model::IdentityMode::channel_concat;
  if (axis == "video_inject_concat") variant.model.video_mode = video::InjectMode::concat;
  const std::filesystem::path root = base_in.out_dir;
  base.out_dir = (root / "baseline").string();
  variant.out_dir = (root / "variant").string();
  base.normalize();
  variant.normalize();
  base.validate();
  variant.validate();
  return {base, variant};
}

nlohmann::json eval_to_json(const GenerationEval& e, const flow::TrainResult& r) {
  nlohmann::json j = e.report.to_json()["summary"];
  j["id_consistency"] = e.report.face_sim;
  j["first_frame_error"] = e.first_frame_error;
  j["background_error"] = e.background_error ? nlohmann::json(*e.background_error) : nlohmann::json(nullptr);
  j["missing_detections"] = e.report.missing_detections;
  j["eval_loss_initial"] = r.initial_eval;
  j["eval_loss_final"] = r.final_eval;
  return j;
}

nlohmann::json ablate(std::string_view axis_in, const RunConfig& base_in, std::span<const synth::TrainSample> samples,
                      int videos, int sampler_steps) {
  const std::string axis = canonical_axis(axis_in);
  auto [base, variant] = ablation_pair(axis, base_in);
  if (base.codec_checkpoint.empty()) {
    // Both arms share one codec so they differ only in the ablated switch.
    const auto codec = prepare_codec(base, limit(base, samples));
    Container c;
    codec.save(c);
    const std::filesystem::path path = std::filesystem::path(base_in.out_dir) / "codec.hcar";
    c.save(path);
    base.codec_checkpoint = variant.codec_checkpoint = path.string();
  }
  nlohmann::json report = {{"axis", axis}, {"videos", videos}, {"sampler_steps", sampler_steps}};
  for (auto* arm : {&base, &variant}) {
    log::record("ablation_arm", {{"axis", axis}, {"arm", arm == &base ? "baseline" : "variant"}});
    const TrainOutcome run = train_run(*arm, samples);
    const GenerationEval ev = evaluate_generation(run, *arm, samples, videos, sampler_steps);
    report[arm == &base ? "baseline" : "variant"] = eval_to_json(ev, run.result);
  }
  nlohmann::json delta = nlohmann::json::object();
  for (const auto& [key, value] : report["baseline"].items()) {
    const auto& other = report["variant"][key];
    if (value.is_number() && other.is_number()) delta[key] = other.get<double>() - value.get<double>();
  }
  report["delta"] = delta;
  report["baseline_config"] = nlohmann::json(base)["model"];
  report["variant_config"] = nlohmann::json(variant)["model"];
  return report;
}

}  // namespace hcustom::harness
