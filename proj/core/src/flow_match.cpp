#include "hcustom/flow_match.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "hcustom/container.hpp"
#include "hcustom/errors.hpp"
#include "hcustom/log.hpp"

namespace hcustom::flow {

void NoiseSchedule::validate() const {
  if (!std::isfinite(m)) throw ConfigError("schedule.m", "must be finite");
  if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("schedule.s", "must be > 0");
}

double NoiseSchedule::sample(Rng& rng) const {
  const double x = m + s * rng.normal();
  const double t = 1.0 / (1.0 + std::exp(-x));
  constexpr double lo = std::numeric_limits<double>::min();
  return std::clamp(t, lo, std::nextafter(1.0, 0.0));
}

Interpolant interpolate(const Matrix& z0, const Matrix& z1, double t) {
  if (z0.rows() != z1.rows() || z0.cols() != z1.cols()) throw DimensionError("interpolate: shape mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("interpolate: t must lie in [0, 1]");
  return {(1.0 - t) * z0 + t * z1, z1 - z0};
}

ad::Var loss(ad::Tape& tape, const model::Denoiser& model, const Example& ex, const Matrix& z0, double t) {
  const auto [z_t, u_t] = interpolate(z0, ex.z1, t);
  const Matrix state = model.make_state(ex.cond, ex.shape, z_t);
  ad::Var v = model.velocity(tape, ex.cond, ex.shape, tape.constant(state), t);
  const Eigen::Index id_rows = model.identity_rows(ex.cond, ex.shape);
  ad::Var out = ad::mean_row_sq_error(ad::slice_rows(v, id_rows, ex.shape.video_rows()), u_t);
  if (!std::isfinite(out.value()(0, 0))) throw NumericalError("flow loss is not finite");
  return out;
}

double loss_value(const model::Denoiser& model, const Example& ex, const Matrix& z0, double t) {
  ad::Tape tape(false);
  return loss(tape, model, ex, z0, t).value()(0, 0);
}

double evaluation_loss(const model::Denoiser& model, std::span<const Example> data, const NoiseSchedule& schedule,
                       std::uint64_t seed, int draws) {
  if (data.empty() || draws < 1) throw ValidationError("evaluation_loss: need data and draws >= 1");
  Rng rng(derive_seed(seed, 0xE7A1));
  double total = 0.0;
  for (const auto& ex : data) {
    for (int d = 0; d < draws; ++d) {
      const double t = schedule.sample(rng);
      const Matrix z0 = rng.normal_matrix(ex.z1.rows(), ex.z1.cols());
      total += loss_value(model, ex, z0, t);
    }
  }
  return total / static_cast<double>(data.size() * static_cast<std::size_t>(draws));
}

void to_json(nlohmann::json& j, const TrainOptions& o) {
  j = {{"steps", o.steps},
       {"batch", o.batch},
       {"lr", o.adam.lr},
       {"clip_norm", o.adam.clip_norm},
       {"warmup_steps", o.warmup_steps},
       {"final_lr_fraction", o.final_lr_fraction},
       {"schedule_m", o.schedule.m},
       {"schedule_s", o.schedule.s},
       {"seed", o.seed},
       {"checkpoint_every", o.checkpoint_every},
       {"divergence_threshold", o.divergence_threshold},
       {"eval_draws", o.eval_draws},
       {"log_every", o.log_every}};
}

void from_json(const nlohmann::json& j, TrainOptions& o) {
  o.steps = j.value("steps", o.steps);
  o.batch = j.value("batch", o.batch);
  o.adam.lr = j.value("lr", o.adam.lr);
  o.adam.clip_norm = j.value("clip_norm", o.adam.clip_norm);
  o.warmup_steps = j.value("warmup_steps", o.warmup_steps);
  o.final_lr_fraction = j.value("final_lr_fraction", o.final_lr_fraction);
  o.schedule.m = j.value("schedule_m", o.schedule.m);
  o.schedule.s = j.value("schedule_s", o.schedule.s);
  o.seed = j.value("seed", o.seed);
  o.checkpoint_every = j.value("checkpoint_every", o.checkpoint_every);
  o.divergence_threshold = j.value("divergence_threshold", o.divergence_threshold);
  o.eval_draws = j.value("eval_draws", o.eval_draws);
  o.log_every = j.value("log_every", o.log_every);
}

double learning_rate(const TrainOptions& o, int step) {
  if (step <= o.warmup_steps) return o.adam.lr * step / (o.warmup_steps + 1.0);
  const int span = o.steps - o.warmup_steps;
  if (span <= 1 || o.final_lr_fraction == 1.0) return o.adam.lr;
  const double progress = static_cast<double>(step - o.warmup_steps - 1) / (span - 1);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return o.adam.lr * (o.final_lr_fraction + (1.0 - o.final_lr_fraction) * cosine);
}

TrainResult train(model::Denoiser& model, std::span<const Example> data, const TrainOptions& options,
                  const CheckpointHook& on_checkpoint) {
  if (data.empty()) throw ValidationError("train: dataset is empty");
  if (options.steps < 0) throw ConfigError("train.steps", "must be >= 0");
  if (options.batch < 1) throw ConfigError("train.batch", "must be >= 1");
  if (options.warmup_steps < 0) throw ConfigError("train.warmup_steps", "must be >= 0");
  if (!(options.final_lr_fraction > 0.0 && options.final_lr_fraction <= 1.0)) {
    throw ConfigError("train.final_lr_fraction", "must be in (0, 1]");
  }
  options.schedule.validate();

  std::ofstream csv;
  if (!options.loss_csv.empty()) {
    if (options.loss_csv.has_parent_path()) std::filesystem::create_directories(options.loss_csv.parent_path());
    csv.open(options.loss_csv, std::ios::trunc);
    if (!csv) throw IoError("cannot open " + options.loss_csv.string());
    csv << "step,loss,grad_norm\n";
    csv.precision(17);
  }

  TrainResult result;
  result.initial_eval = evaluation_loss(model, data, options.schedule, options.seed, options.eval_draws);
  log::record("train_begin", {{"examples", data.size()},
                              {"steps", options.steps},
                              {"params", model.params().scalar_count()},
                              {"eval_loss", result.initial_eval}});

  Adam adam(options.adam);
  const int n = static_cast<int>(data.size());
  for (int step = 1; step <= options.steps; ++step) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(step)));
    model.params().zero_grad();
    adam.set_lr(learning_rate(options, step));
    ad::Tape tape(true);
    std::vector<ad::Var> terms;
    for (int b = 0; b < options.batch; ++b) {
      const Example& ex = data[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
      const double t = options.schedule.sample(rng);
      const Matrix z0 = rng.normal_matrix(ex.z1.rows(), ex.z1.cols());
      terms.push_back(loss(tape, model, ex, z0, t));
    }
    ad::Var total = terms.size() == 1 ? terms[0] : ad::scale(ad::sum(ad::concat_rows(terms)), 1.0 / options.batch);
    const double value = total.value()(0, 0);
    if (!(value <= options.divergence_threshold)) {
      throw NumericalError("training diverged at step " + std::to_string(step) + " (loss " + std::to_string(value) +
                           ")");
    }
    tape.backward(total);
    const double grad_norm = adam.step(model.params());
    result.losses.push_back(value);
    result.steps = step;
    if (csv.is_open()) csv << step << ',' << value << ',' << grad_norm << '\n';
    if (options.log_every > 0 && (step % options.log_every == 0 || step == 1)) {
      log::record("train_step", {{"step", step}, {"loss", value}, {"grad_norm", grad_norm}});
    }
    if (on_checkpoint && options.checkpoint_every > 0 && step % options.checkpoint_every == 0 && step != options.steps) {
      on_checkpoint(step);
    }
  }
  result.final_eval = evaluation_loss(model, data, options.schedule, options.seed, options.eval_draws);
  log::record("train_end", {{"steps", result.steps},
                            {"eval_loss_initial", result.initial_eval},
                            {"eval_loss_final", result.final_eval}});
  if (on_checkpoint) on_checkpoint(options.steps);
  return result;
}

void SamplerConfig::validate() const {
  if (steps < 1) throw ConfigError("sampler.steps", "must be >= 1");
}

Matrix euler(const VelocityField& field, Matrix state, Eigen::Index fixed_rows, int steps) {
  if (steps < 1) throw ConfigError("sampler.steps", "must be >= 1");
  if (fixed_rows < 0 || fixed_rows > state.rows()) throw DimensionError("euler: fixed_rows out of range");
  const Eigen::Index moving = state.rows() - fixed_rows;
  const double dt = 1.0 / steps;
  for (int i = 0; i < steps; ++i) {
    const Matrix v = field(state, i * dt);
    if (v.rows() != state.rows() || v.cols() != state.cols()) throw DimensionError("euler: velocity shape mismatch");
    state.bottomRows(moving) += dt * v.bottomRows(moving);
  }
  return state;
}

SampleResult sample(const model::Denoiser& model, const model::ConditionBundle& cond, const model::LatentShape& shape,
                    const SamplerConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const Matrix noise = rng.normal_matrix(shape.video_rows(), shape.channels);
  SampleResult out;
  out.initial_state = model.make_state(cond, shape, noise);
  out.identity_rows = model.identity_rows(cond, shape);
  out.final_state = euler([&](const Matrix& z, double t) { return model.velocity(cond, shape, z, t); },
                          out.initial_state, out.identity_rows, config.steps);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const model::Denoiser& model, const codec::LatentCodec& codec,
                     std::int64_t step, const nlohmann::json& extra) {
  Container c;
  codec.save(c);
  for (const Parameter* p : model.params().all()) c.put_matrix("model/" + p->name, p->value);
  c.meta["version"] = kCheckpointVersion;
  c.meta["step"] = step;
  c.meta["model"] = model.config();
  c.meta["extra"] = extra;
  c.save(path);
}

namespace {

void copy_weights(const Container& c, model::Denoiser& model, bool require_all) {
  for (Parameter* p : model.params().all()) {
    const std::string name = "model/" + p->name;
    if (!c.has(name)) {
      if (require_all) throw IoError("checkpoint is missing parameter " + p->name);
      continue;
    }
    Matrix m = c.get_matrix(name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw ConfigError(p->name, "checkpoint shape differs from the model config");
    }
    p->value = std::move(m);
  }
}

Container open_checkpoint(const std::filesystem::path& path) {
  Container c = Container::load(path);
  if (c.meta.value("version", std::string()) != kCheckpointVersion) {
    throw IoError(path.string() + " is not a " + std::string(kCheckpointVersion) + " checkpoint");
  }
  return c;
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const Container c = open_checkpoint(path);
  LoadedCheckpoint out;
  out.model = std::make_unique<model::Denoiser>(c.meta.at("model").get<model::ModelConfig>());
  copy_weights(c, *out.model, true);
  out.codec = std::make_unique<codec::LatentCodec>(codec::LatentCodec::load(c));
  out.step = c.meta.at("step").get<std::int64_t>();
  out.meta = c.meta;
  return out;
}

void load_weights(const std::filesystem::path& path, model::Denoiser& model) {
  copy_weights(open_checkpoint(path), model, false);
}

}  // namespace hcustom::flow
