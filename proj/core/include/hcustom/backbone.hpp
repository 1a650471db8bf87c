#pragma once

// Toy diffusion transformer over [identity tokens || video tokens].
//
// Each block: adaLN-modulated self-attention with 3D rotary positions on
// queries/keys, optional per-frame audio cross-attention, adaLN-modulated
// cross-attention to the fused prompt, and an adaLN-modulated MLP. All
// modulation comes from the flow-matching timestep embedding.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcustom/audio_net.hpp"
#include "hcustom/autodiff.hpp"
#include "hcustom/latent_codec.hpp"
#include "hcustom/params.hpp"
#include "hcustom/rope3d.hpp"
#include "hcustom/tokens.hpp"

namespace hcustom::backbone {

struct BackboneConfig {
  int width = 128;
  int heads = 4;
  int blocks = 4;
  int latent_channels = 16;
  /// Columns of the token input; 2c for the channel-concat ablation.
  int input_channels = 16;
  int text_width = 128;
  int freq_dim = 64;
  int mlp_ratio = 4;
  double rope_base = 10000.0;

  int head_dim() const { return width / heads; }
  rope::RopeConfig rope() const { return rope::RopeConfig::for_head_dim(head_dim(), rope_base); }
  void validate() const;
  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};
void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

/// z = {z_I,1 .. z_I,m, z_t}: identity blocks first (subject k at time -k,
/// spatially shifted), then the video tokens.
std::pair<TokenSequence, rope::PositionGrid> concat_identity(const codec::LatentVideo& video,
                                                             std::span<const codec::LatentVideo> identities);

/// Sinusoidal features of t (scaled by 1000), freq_dim wide.
Matrix timestep_features(double t, int freq_dim);

/// Audio to inject inside every block; rows follow the latent frame layout.
struct AudioContext {
  ad::Var aligned;         // (frames * 16) x features
  Eigen::Index row_begin;  // first latent row covered
  int frames;
  int cells_per_frame;
};

struct ForwardInputs {
  ad::Var tokens;                       // L x input_channels
  const rope::PositionGrid* positions;  // L entries
  ad::Var text;                         // T x text_width (T may be 0)
  double t = 0.0;
  std::optional<AudioContext> audio;
};

class Backbone {
 public:
  Backbone(ParamStore& store, BackboneConfig config, std::uint64_t seed);

  /// Velocity for every input token (L x latent_channels).
  /// `audio_nets` must hold one AudioNet per block when inputs.audio is set.
  ad::Var forward(ad::Tape& tape, const ForwardInputs& inputs, std::span<const audio::AudioNet> audio_nets = {}) const;

  ad::Var timestep_embedding(ad::Tape& tape, double t) const;
  const BackboneConfig& config() const { return config_; }

 private:
  ad::Var p(ad::Tape& tape, const std::string& name) const;

  ParamStore* store_;
  BackboneConfig config_;
};

}  // namespace hcustom::backbone
