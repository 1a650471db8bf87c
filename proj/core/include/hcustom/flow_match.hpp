#pragma once

// Flow matching between noise (t = 0) and data (t = 1): logit-normal time
// sampling, the identity-masked velocity loss, a deterministic trainer and an
// Euler sampler that only moves video tokens.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcustom/denoiser.hpp"
#include "hcustom/latent_codec.hpp"
#include "hcustom/params.hpp"

namespace hcustom::flow {

struct NoiseSchedule {
  double m = 0.0;
  double s = 1.0;

  void validate() const;
  /// sigmoid(m + s * n), n ~ N(0, 1); always strictly inside (0, 1).
  double sample(Rng& rng) const;
  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;
};

struct Interpolant {
  Matrix z_t;
  Matrix u_t;
};

/// z_t = (1 - t) z_0 + t z_1, u_t = z_1 - z_0.
Interpolant interpolate(const Matrix& z0, const Matrix& z1, double t);

/// One training unit: clean video tokens plus what they are conditioned on.
struct Example {
  std::string id;
  model::LatentShape shape;
  Matrix z1;  // video tokens, shape.video_rows() x c
  model::ConditionBundle cond;
};

/// Mean over video tokens of |v - u|^2; identity rows are excluded.
ad::Var loss(ad::Tape& tape, const model::Denoiser& model, const Example& ex, const Matrix& z0, double t);
double loss_value(const model::Denoiser& model, const Example& ex, const Matrix& z0, double t);

/// Loss averaged over a fixed set of seeded (t, z_0) draws per example.
double evaluation_loss(const model::Denoiser& model, std::span<const Example> data, const NoiseSchedule& schedule,
                       std::uint64_t seed, int draws);

struct TrainOptions {
  int steps = 1000;
  int batch = 1;
  AdamConfig adam;
  /// Linear warmup, then cosine decay from adam.lr to final_lr_fraction * adam.lr.
  /// A fraction of 1 keeps the rate constant after warmup.
  int warmup_steps = 0;
  double final_lr_fraction = 1.0;
  NoiseSchedule schedule;
  std::uint64_t seed = 0;
  /// 0 writes only the final checkpoint.
  int checkpoint_every = 0;
  double divergence_threshold = 1e3;
  int eval_draws = 2;
  int log_every = 25;
  /// When set, the loss curve is written here as CSV.
  std::filesystem::path loss_csv;
};
/// Learning rate used at `step` (1-based).
double learning_rate(const TrainOptions& o, int step);
void to_json(nlohmann::json& j, const TrainOptions& o);
void from_json(const nlohmann::json& j, TrainOptions& o);

struct TrainResult {
  std::vector<double> losses;  // per step, training batch loss
  double initial_eval = 0.0;
  double final_eval = 0.0;
  int steps = 0;
};

using CheckpointHook = std::function<void(std::int64_t step)>;

/// Seed-deterministic Adam training. Throws NumericalError when the batch loss
/// exceeds the divergence threshold.
TrainResult train(model::Denoiser& model, std::span<const Example> data, const TrainOptions& options,
                  const CheckpointHook& on_checkpoint = {});

struct SamplerConfig {
  int steps = 50;
  std::uint64_t seed = 0;
  void validate() const;
};

using VelocityField = std::function<Matrix(const Matrix& state, double t)>;

/// N Euler steps from t = 0 to t = 1. Rows [0, fixed_rows) are never updated.
Matrix euler(const VelocityField& field, Matrix state, Eigen::Index fixed_rows, int steps);

struct SampleResult {
  Matrix initial_state;
  Matrix final_state;
  Eigen::Index identity_rows = 0;
  Matrix video_tokens() const { return final_state.bottomRows(final_state.rows() - identity_rows); }
};

SampleResult sample(const model::Denoiser& model, const model::ConditionBundle& cond, const model::LatentShape& shape,
                    const SamplerConfig& config);

// ---- checkpoints -----------------------------------------------------------

inline constexpr const char* kCheckpointVersion = "hcustom-ckpt/1";

void save_checkpoint(const std::filesystem::path& path, const model::Denoiser& model, const codec::LatentCodec& codec,
                     std::int64_t step, const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  std::unique_ptr<model::Denoiser> model;
  std::unique_ptr<codec::LatentCodec> codec;
  std::int64_t step = 0;
  nlohmann::json meta;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameter values from a checkpoint into `model` for every matching name.
void load_weights(const std::filesystem::path& path, model::Denoiser& model);

}  // namespace hcustom::flow
