#include "hcustom/denoiser.hpp"

#include "hcustom/errors.hpp"

namespace hcustom::model {

std::string to_string(IdentityMode m) {
  switch (m) {
    case IdentityMode::temporal: return "temporal";
    case IdentityMode::none: return "none";
    case IdentityMode::channel_concat: return "channel_concat";
  }
  return "?";
}

IdentityMode identity_mode_from_string(std::string_view s) {
  if (s == "temporal") return IdentityMode::temporal;
  if (s == "none") return IdentityMode::none;
  if (s == "channel_concat") return IdentityMode::channel_concat;
  throw ConfigError("model.identity", "expected temporal|none|channel_concat, got '" + std::string(s) + "'");
}

void ModelConfig::normalize() {
  backbone.input_channels =
      identity == IdentityMode::channel_concat ? 2 * backbone.latent_channels : backbone.latent_channels;
}

void ModelConfig::validate() const {
  backbone.validate();
  const int want =
      identity == IdentityMode::channel_concat ? 2 * backbone.latent_channels : backbone.latent_channels;
  if (backbone.input_channels != want) {
    throw ConfigError("model.backbone.input_channels",
                      "must be " + std::to_string(want) + " for identity mode " + to_string(identity));
  }
  if (use_audio) {
    audio.validate();
    if (backbone.width % audio.heads != 0) throw ConfigError("model.audio.heads", "must divide backbone width");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"backbone", c.backbone},
       {"audio", c.audio},
       {"use_audio", c.use_audio},
       {"use_video", c.use_video},
       {"video_mode", video::to_string(c.video_mode)},
       {"identity", to_string(c.identity)},
       {"fusion_images", c.fusion_images},
       {"template", prompt::to_string(c.template_mode)},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("backbone")) c.backbone = j.at("backbone").get<backbone::BackboneConfig>();
  if (j.contains("audio")) c.audio = j.at("audio").get<audio::AudioInjectConfig>();
  c.use_audio = j.value("use_audio", c.use_audio);
  c.use_video = j.value("use_video", c.use_video);
  if (j.contains("video_mode")) c.video_mode = video::inject_mode_from_string(j.at("video_mode").get<std::string>());
  if (j.contains("identity")) c.identity = identity_mode_from_string(j.at("identity").get<std::string>());
  c.fusion_images = j.value("fusion_images", c.fusion_images);
  if (j.contains("template")) c.template_mode = prompt::template_mode_from_string(j.at("template").get<std::string>());
  c.seed = j.value("seed", c.seed);
}

Denoiser::Denoiser(ModelConfig config) : config_(std::move(config)), store_(std::make_unique<ParamStore>()) {
  config_.validate();
  const auto& bc = config_.backbone;
  encoder_ = std::make_unique<prompt::ToyEncoder>(*store_, bc.text_width, derive_seed(config_.seed, 1));
  backbone_ = std::make_unique<backbone::Backbone>(*store_, bc, derive_seed(config_.seed, 2));
  if (config_.use_audio) {
    for (int b = 0; b < bc.blocks; ++b) {
      audio_nets_.emplace_back(*store_, "audio.block" + std::to_string(b), bc.width, config_.audio,
                               derive_seed(config_.seed, 100 + static_cast<std::uint64_t>(b)));
    }
  }
  if (config_.use_video) {
    if (config_.video_mode == video::InjectMode::add) {
      align_ = std::make_unique<video::AlignmentNet>(*store_, bc.latent_channels, bc.width, derive_seed(config_.seed, 3));
    } else {
      compress_ = std::make_unique<video::ConcatCompressor>(*store_, bc.latent_channels);
    }
  }
}

void Denoiser::set_audio_lambda(double lambda) {
  config_.audio.lambda = lambda;
  config_.audio.validate();
  for (auto& net : audio_nets_) net.set_lambda(lambda);
}

void Denoiser::check(const ConditionBundle& cond, const LatentShape& shape) const {
  const int c = config_.backbone.latent_channels;
  if (shape.frames < 1 || shape.height < 1 || shape.width < 1) throw ValidationError("latent shape is empty");
  if (shape.channels != c) {
    throw ValidationError("latent has " + std::to_string(shape.channels) + " channels, model expects " +
                          std::to_string(c));
  }
  if (config_.identity != IdentityMode::none) {
    if (cond.identity_latents.size() != cond.subjects.size()) {
      throw ValidationError("one identity latent per subject is required");
    }
    for (const auto& z : cond.identity_latents) {
      if (z.frames != 1 || z.height != shape.height || z.width != shape.width || z.channels != c) {
        throw ValidationError("identity latent shape does not match the video latent");
      }
    }
    if (config_.identity == IdentityMode::channel_concat && cond.identity_latents.size() > 1) {
      throw ValidationError("channel-concat identity supports a single subject");
    }
  }
  if (config_.use_audio) {
    if (!cond.audio) throw ValidationError("model expects audio but none was given");
    if (cond.audio->frames != shape.frames + 1 || cond.audio->features != config_.audio.features) {
      throw ValidationError("aligned audio must have latent frames + 1 groups and " +
                            std::to_string(config_.audio.features) + " features");
    }
  } else if (cond.audio) {
    throw ValidationError("audio given to a model without audio injection");
  }
  if (config_.use_video) {
    if (!cond.condition) throw ValidationError("model expects a condition video but none was given");
    if (cond.condition->rows() != shape.video_rows() || cond.condition->cols() != c) {
      throw ValidationError("condition tokens must be " + std::to_string(shape.video_rows()) + " x " +
                            std::to_string(c));
    }
  } else if (cond.condition) {
    throw ValidationError("condition video given to a model without video injection");
  }
}

Eigen::Index Denoiser::identity_rows(const ConditionBundle& cond, const LatentShape& shape) const {
  if (config_.identity != IdentityMode::temporal) return 0;
  return static_cast<Eigen::Index>(cond.identity_latents.size()) * shape.cells();
}

Eigen::Index Denoiser::sequence_length(const ConditionBundle& cond, const LatentShape& shape) const {
  return identity_rows(cond, shape) + shape.video_rows();
}

Matrix Denoiser::make_state(const ConditionBundle& cond, const LatentShape& shape, const Matrix& video_tokens) const {
  check(cond, shape);
  if (video_tokens.rows() != shape.video_rows() || video_tokens.cols() != shape.channels) {
    throw DimensionError("make_state: video tokens do not match the latent shape");
  }
  const Eigen::Index id_rows = identity_rows(cond, shape);
  Matrix state(id_rows + video_tokens.rows(), shape.channels);
  for (std::size_t k = 0; k < cond.identity_latents.size() && id_rows > 0; ++k) {
    state.middleRows(static_cast<Eigen::Index>(k) * shape.cells(), shape.cells()) = cond.identity_latents[k].data;
  }
  state.bottomRows(video_tokens.rows()) = video_tokens;
  return state;
}

rope::PositionGrid Denoiser::positions(const ConditionBundle& cond, const LatentShape& shape) const {
  rope::PositionGrid grid;
  if (config_.identity == IdentityMode::temporal) {
    for (std::size_t k = 0; k < cond.identity_latents.size(); ++k) {
      auto id = rope::identity_positions(static_cast<int>(k) + 1, shape.width, shape.height);
      grid.insert(grid.end(), id.begin(), id.end());
    }
  }
  auto v = rope::video_positions(shape.frames, shape.width, shape.height);
  grid.insert(grid.end(), v.begin(), v.end());
  return grid;
}

ad::Var Denoiser::velocity(ad::Tape& tape, const ConditionBundle& cond, const LatentShape& shape, const ad::Var& state,
                           double t) const {
  check(cond, shape);
  const Eigen::Index id_rows = identity_rows(cond, shape);
  if (state.rows() != id_rows + shape.video_rows() || state.cols() != shape.channels) {
    throw DimensionError("velocity: state has the wrong shape");
  }

  ad::Var tokens = state;
  if (config_.use_video) {
    tokens = video::inject_video(tape, tokens, tape.constant(*cond.condition), id_rows, config_.video_mode,
                                 align_.get(), compress_.get());
  }
  if (config_.identity == IdentityMode::channel_concat) {
    Matrix id = Matrix::Zero(shape.video_rows(), shape.channels);
    if (!cond.identity_latents.empty()) {
      for (int f = 0; f < shape.frames; ++f) id.middleRows(f * shape.cells(), shape.cells()) = cond.identity_latents[0].data;
    }
    const ad::Var parts[] = {tokens, tape.constant(std::move(id))};
    tokens = ad::concat_cols(parts);
  }

  prompt::PromptSpec spec{cond.prompt, cond.subjects, config_.template_mode};
  prompt::FuseOptions fo;
  fo.images = config_.fusion_images;
  ad::Var text = prompt::fuse(tape, spec, *encoder_, fo).embeddings;

  const rope::PositionGrid grid = positions(cond, shape);
  backbone::ForwardInputs in{tokens, &grid, text, t, std::nullopt};
  if (config_.use_audio) {
    const int cells = static_cast<int>(shape.cells());
    if (id_rows > 0) {
      // The identity block nearest the video plays the role of the extra frame.
      in.audio = backbone::AudioContext{tape.constant(cond.audio->data), id_rows - shape.cells(), shape.frames + 1, cells};
    } else {
      in.audio = backbone::AudioContext{
          tape.constant(cond.audio->data.bottomRows(static_cast<Eigen::Index>(shape.frames) * audio::kGroupedTokens)),
          0, shape.frames, cells};
    }
  }
  return backbone_->forward(tape, in, audio_nets_);
}

Matrix Denoiser::velocity(const ConditionBundle& cond, const LatentShape& shape, const Matrix& state, double t) const {
  ad::Tape tape(false);
  return velocity(tape, cond, shape, tape.constant(state), t).value();
}

}  // namespace hcustom::model
