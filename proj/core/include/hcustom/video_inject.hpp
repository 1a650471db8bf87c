#pragma once

// Identity-disentangled video conditioning: the condition video is encoded
// with the latent codec, aligned by a four-layer MLP, and added frame by frame
// to the noisy video latent. Identity frames are never touched. The
// token-concatenation variant is kept for ablations.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hcustom/autodiff.hpp"
#include "hcustom/latent_codec.hpp"
#include "hcustom/params.hpp"
#include "hcustom/tokens.hpp"

namespace hcustom::video {

struct ConditionVideo {
  codec::PixelVideo pixels;
  /// Optional [frames][H][W] mask; 1 keeps the pixel, 0 marks the region to replace.
  std::optional<std::vector<std::uint8_t>> mask;
};

inline constexpr float kBlankValue = 0.5f;

/// Blanks mask==0 pixels to gray, encodes, and tokenizes (f*h*w x c).
TokenSequence encode_condition(const ConditionVideo& video, const codec::LatentCodec& codec);

enum class InjectMode { add, concat };
std::string to_string(InjectMode m);
InjectMode inject_mode_from_string(std::string_view s);

/// c -> hidden -> hidden -> hidden -> c, bias-free, GELU between layers, last layer zero-initialised.
class AlignmentNet {
 public:
  AlignmentNet(ParamStore& store, int channels, int hidden, std::uint64_t seed);

  ad::Var apply(ad::Tape& tape, const ad::Var& tokens) const;
  Matrix apply(const Matrix& tokens) const;
  static constexpr int layer_count() { return 4; }

 private:
  ParamStore* store_;
};

/// Learned 2c -> c compression for the concat variant, initialised to keep the latent.
class ConcatCompressor {
 public:
  ConcatCompressor(ParamStore& store, int channels);
  ad::Var apply(ad::Tape& tape, const ad::Var& latent, const ad::Var& condition) const;

 private:
  ParamStore* store_;
};

/// latent: (identity_rows + f*cells) x c tokens. condition: f*cells x c.
/// add    — condition is passed through `align` and added to the video rows.
/// concat — video rows become compress([latent || condition]).
/// Identity rows are returned unchanged in both modes.
ad::Var inject_video(ad::Tape& tape, const ad::Var& latent, const ad::Var& condition, Eigen::Index identity_rows,
                     InjectMode mode, const AlignmentNet* align, const ConcatCompressor* compress);

}  // namespace hcustom::video
