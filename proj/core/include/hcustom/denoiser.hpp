#pragma once

// The conditioned velocity model: prompt fusion, identity token blocks,
// video-condition injection and the backbone (with per-block audio nets)
// assembled behind one call.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcustom/audio_net.hpp"
#include "hcustom/backbone.hpp"
#include "hcustom/latent_codec.hpp"
#include "hcustom/prompt_fusion.hpp"
#include "hcustom/video_inject.hpp"

namespace hcustom::model {

/// temporal: identity latents as extra frames at negative time.
/// none: no identity tokens at all.
/// channel_concat: identity latent broadcast over frames and stacked on channels.
enum class IdentityMode { temporal, none, channel_concat };
std::string to_string(IdentityMode m);
IdentityMode identity_mode_from_string(std::string_view s);

struct ModelConfig {
  backbone::BackboneConfig backbone;
  audio::AudioInjectConfig audio;
  bool use_audio = false;
  bool use_video = false;
  video::InjectMode video_mode = video::InjectMode::add;
  IdentityMode identity = IdentityMode::temporal;
  /// false: the prompt carries text only (no image tokens, no <SEP>).
  bool fusion_images = true;
  prompt::TemplateMode template_mode = prompt::TemplateMode::image_appended;
  std::uint64_t seed = 0;

  /// Applies the channel-concat input widening; call after editing fields.
  void normalize();
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct LatentShape {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;

  Eigen::Index cells() const { return static_cast<Eigen::Index>(height) * width; }
  Eigen::Index video_rows() const { return cells() * frames; }
  friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

/// Everything a generation is conditioned on.
struct ConditionBundle {
  std::string prompt;
  /// Descriptor word + identity image per subject, in subject order.
  std::vector<prompt::Subject> subjects;
  /// Encoded identity images (one frame each), same order as `subjects`.
  std::vector<codec::LatentVideo> identity_latents;
  std::optional<audio::AlignedAudio> audio;
  /// Condition-video tokens, f*h*w x c.
  std::optional<Matrix> condition;
};

class Denoiser {
 public:
  explicit Denoiser(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }
  const prompt::ToyEncoder& encoder() const { return *encoder_; }
  const backbone::Backbone& network() const { return *backbone_; }
  void set_audio_lambda(double lambda);
  void set_template_mode(prompt::TemplateMode mode) { config_.template_mode = mode; }

  /// Rows of the state occupied by clean identity tokens; the sampler never updates them.
  Eigen::Index identity_rows(const ConditionBundle& cond, const LatentShape& shape) const;
  /// [z_I,1 .. z_I,m ; video] for temporal mode, the video tokens alone otherwise.
  Matrix make_state(const ConditionBundle& cond, const LatentShape& shape, const Matrix& video_tokens) const;
  /// Positions of every state row.
  rope::PositionGrid positions(const ConditionBundle& cond, const LatentShape& shape) const;

  /// Velocity for every state row (state.rows() x c).
  ad::Var velocity(ad::Tape& tape, const ConditionBundle& cond, const LatentShape& shape, const ad::Var& state,
                   double t) const;
  Matrix velocity(const ConditionBundle& cond, const LatentShape& shape, const Matrix& state, double t) const;

  /// Number of tokens the backbone attends over for this input.
  Eigen::Index sequence_length(const ConditionBundle& cond, const LatentShape& shape) const;

  /// Checks the bundle against the config; throws ValidationError.
  void check(const ConditionBundle& cond, const LatentShape& shape) const;

 private:
  ModelConfig config_;
  std::unique_ptr<ParamStore> store_;
  std::unique_ptr<prompt::ToyEncoder> encoder_;
  std::unique_ptr<backbone::Backbone> backbone_;
  std::vector<audio::AudioNet> audio_nets_;
  std::unique_ptr<video::AlignmentNet> align_;
  std::unique_ptr<video::ConcatCompressor> compress_;
};

}  // namespace hcustom::model
