#pragma once

// Orchestration shared by the `hcustom` CLI and the acceptance suite:
// run configs, dataset -> training examples, training runs, generation,
// evaluation and paired ablations.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcustom/dataset.hpp"
#include "hcustom/denoiser.hpp"
#include "hcustom/eval_metrics.hpp"
#include "hcustom/flow_match.hpp"
#include "hcustom/latent_codec.hpp"

namespace hcustom::harness {

enum class Task { t2v, single_subject, multi_subject, audio_custom, video_custom };
std::string to_string(Task t);
Task task_from_string(std::string_view s);

struct RunConfig {
  Task task = Task::single_subject;
  std::string dataset;
  std::string out_dir = "runs/default";
  std::uint64_t seed = 0;
  model::ModelConfig model;
  codec::CodecConfig codec;
  codec::CodecTrainConfig codec_train;
  flow::TrainOptions train;
  /// Optional checkpoint whose matching weights seed this run (staged training).
  std::string init_checkpoint;
  /// Optional checkpoint whose codec is reused instead of training one.
  std::string codec_checkpoint;
  /// Dilation radius applied to subject masks before blanking condition videos.
  int mask_dilate = 2;
  /// 0 uses every sample in the dataset.
  int max_samples = 0;

  /// Derives sub-seeds from `seed` and task-driven model switches.
  void normalize();
  void validate() const;
};
void to_json(nlohmann::json& j, const RunConfig& c);
/// Rejects condition settings that do not belong to the task.
void from_json(const nlohmann::json& j, RunConfig& c);

/// "a.b.c=value": value parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& j, std::string_view assignment);
RunConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

/// Trains (or loads) the latent codec for a run.
codec::LatentCodec prepare_codec(const RunConfig& config, std::span<const synth::TrainSample> samples);

/// Condition bundle for one sample under `task`.
model::ConditionBundle make_conditions(Task task, const model::ModelConfig& model, const synth::TrainSample& sample,
                                       const codec::LatentCodec& codec, int mask_dilate);
/// Keep-mask for the condition video: 0 on the dilated subject region.
std::vector<std::uint8_t> condition_mask(const synth::TrainSample& sample, int mask_dilate);
flow::Example make_example(Task task, const model::ModelConfig& model, const synth::TrainSample& sample,
                           const codec::LatentCodec& codec, int mask_dilate);

struct TrainOutcome {
  flow::TrainResult result;
  std::unique_ptr<model::Denoiser> model;
  std::unique_ptr<codec::LatentCodec> codec;
  std::vector<flow::Example> examples;
  std::filesystem::path checkpoint;
};

/// Full training run; writes config.json, loss.csv and checkpoints into out_dir.
TrainOutcome train_run(const RunConfig& config, std::span<const synth::TrainSample> samples);
TrainOutcome train_run(const RunConfig& config);
/// Rebuilds a finished run from its checkpoint (no training).
TrainOutcome load_outcome(const RunConfig& config, std::span<const synth::TrainSample> samples,
                          const std::filesystem::path& checkpoint);

/// Samples video tokens and decodes them to pixels (identity tokens are discarded).
codec::PixelVideo generate(const model::Denoiser& model, const codec::LatentCodec& codec,
                           const model::ConditionBundle& cond, const model::LatentShape& shape,
                           const flow::SamplerConfig& sampler);

struct GenerationEval {
  metrics::MetricsReport report;
  double first_frame_error = 0.0;           // mean |generated - target| on frame 0
  std::optional<double> background_error;  // video task: mean error on kept background pixels
};

/// Generates `videos` samples from the training conditions and scores them.
GenerationEval evaluate_generation(const TrainOutcome& run, const RunConfig& config,
                                   std::span<const synth::TrainSample> samples, int videos, int sampler_steps);

inline constexpr std::string_view kAblationAxes[] = {"no_fusion", "no_identity_enhancement", "channel_concat",
                                                      "video_inject_concat"};
/// Accepts the listed axes plus "identity_enhancement" as an alias.
std::string canonical_axis(std::string_view axis);
/// Base and variant configs for an axis (seed-matched, differing only in the ablated switch).
std::pair<RunConfig, RunConfig> ablation_pair(std::string_view axis, const RunConfig& base);

/// Trains both arms, evaluates `videos` generations each and reports metrics and deltas.
nlohmann::json ablate(std::string_view axis, const RunConfig& base, std::span<const synth::TrainSample> samples,
                      int videos, int sampler_steps);

nlohmann::json eval_to_json(const GenerationEval& e, const flow::TrainResult& r);

/// CLI entry point; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace hcustom::harness
