#pragma once

// Identity-disentangled audio conditioning.
//
// align_audio front-pads per-frame audio features to (f+1)*4 frames and
// groups every 4 consecutive frames (4 tokens each) into one 16-token frame.
// AudioNet then lets each latent frame's spatial tokens cross-attend to the
// 16 audio tokens of the same frame only, scaled by lambda_A.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "hcustom/autodiff.hpp"
#include "hcustom/container.hpp"
#include "hcustom/params.hpp"

namespace hcustom::audio {

inline constexpr int kTokensPerFrame = 4;
inline constexpr int kGroupedTokens = 16;

/// Tensor [frames, 4, features] stored as (frames*4) x features rows.
struct AudioTrack {
  int frames = 0;
  int features = 0;
  Matrix data;

  double& at(int f, int token, int c) { return data(static_cast<Eigen::Index>(f) * kTokensPerFrame + token, c); }
  double at(int f, int token, int c) const { return data(static_cast<Eigen::Index>(f) * kTokensPerFrame + token, c); }
  void validate() const;
};

/// Tensor [f+1, 16, features] stored as ((f+1)*16) x features rows.
struct AlignedAudio {
  int frames = 0;  // latent frames + 1
  int features = 0;
  Matrix data;

  double at(int g, int slot, int c) const { return data(static_cast<Eigen::Index>(g) * kGroupedTokens + slot, c); }
};

/// Pads and regroups `audio` for a latent of `latent_frames` video frames.
/// With strict=true the audio must satisfy latent_frames == floor(f'_a/4)+1.
AlignedAudio align_audio(const AudioTrack& audio, int latent_frames, bool strict = true);

struct AudioInjectConfig {
  double lambda = 1.0;
  int heads = 4;
  int features = 32;
  void validate() const;
  friend bool operator==(const AudioInjectConfig&, const AudioInjectConfig&) = default;
};
void to_json(nlohmann::json& j, const AudioInjectConfig& c);
void from_json(const nlohmann::json& j, AudioInjectConfig& c);

/// Per-frame spatial cross-attention block. Reads only latent tokens and
/// aligned audio: no identity input exists in its interface.
class AudioNet {
 public:
  AudioNet(ParamStore& store, std::string prefix, int width, AudioInjectConfig config, std::uint64_t seed);

  /// latent: (frames * cells) x width; audio: (frames * 16) x features.
  /// Returns latent + lambda * CrossAttn(audio -> latent), frame by frame.
  ad::Var inject(ad::Tape& tape, const ad::Var& latent, const ad::Var& audio, int frames, int cells_per_frame) const;
  /// Convenience for non-differentiable use.
  Matrix inject(const Matrix& latent, const AlignedAudio& audio, int cells_per_frame) const;

  const AudioInjectConfig& config() const { return config_; }
  void set_lambda(double lambda) { config_.lambda = lambda; }
  const std::string& prefix() const { return prefix_; }

 private:
  ParamStore* store_;
  std::string prefix_;
  int width_;
  AudioInjectConfig config_;
};

void put_audio(Container& c, const std::string& name, const AudioTrack& a);
AudioTrack get_audio(const Container& c, const std::string& name);

}  // namespace hcustom::audio
