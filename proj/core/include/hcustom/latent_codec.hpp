#pragma once

// Small trainable causal video autoencoder.
//
// Latent frame 0 encodes pixel frame 0 alone; latent frame k >= 1 encodes
// pixel frames 4k-3 .. 4k. Each latent cell sees one s x s spatial patch, so
// the codec is a strided causal convolution with kernel == stride.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcustom/container.hpp"
#include "hcustom/params.hpp"
#include "hcustom/rope3d.hpp"
#include "hcustom/tensor.hpp"
#include "hcustom/tokens.hpp"

namespace hcustom::codec {

inline constexpr int kTemporalStride = 4;

/// Raw frames, values in [0,1], stored [frame][y][x][rgb].
struct PixelVideo {
  int frames = 0;
  int height = 0;
  int width = 0;
  double fps = 24.0;
  std::vector<float> data;

  static PixelVideo filled(int frames, int height, int width, float value);

  float& at(int f, int y, int x, int c) { return data[index(f, y, x, c)]; }
  float at(int f, int y, int x, int c) const { return data[index(f, y, x, c)]; }
  std::size_t index(int f, int y, int x, int c) const {
    return ((static_cast<std::size_t>(f) * height + y) * width + x) * 3 + c;
  }
  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width * 3; }
  /// Frame `f` as a standalone one-frame video.
  PixelVideo frame(int f) const;
  void validate() const;
};

struct CodecConfig {
  int spatial_factor = 8;
  int latent_channels = 16;
  int hidden = 128;
  int temporal_stride = kTemporalStride;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const CodecConfig&, const CodecConfig&) = default;
};
void to_json(nlohmann::json& j, const CodecConfig& c);
void from_json(const nlohmann::json& j, CodecConfig& c);

/// Latent cells stored one row per cell in (t, y, x) order; `channels` columns.
struct LatentVideo {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  int spatial_factor = 0;
  Matrix data;

  Eigen::Index cells_per_frame() const { return static_cast<Eigen::Index>(height) * width; }
};

/// f = floor(f' / 4) + 1
int latent_frame_count(int pixel_frames);
/// f' = 4 (f - 1) + 1
int pixel_frame_count(int latent_frames);

struct CodecTrainConfig {
  int steps = 1500;
  int batch = 256;
  double lr = 2e-3;
  std::uint64_t seed = 1;
};

struct CodecTrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// Mean |decode(encode(v)) - v| over the training videos.
  double mean_abs_error = 0.0;
};

class LatentCodec {
 public:
  explicit LatentCodec(CodecConfig config);

  const CodecConfig& config() const { return config_; }

  LatentVideo encode(const PixelVideo& video) const;
  PixelVideo decode(const LatentVideo& latent) const;

  /// Trains the autoencoder (MSE on pixels) then fits per-channel latent
  /// normalisation so encoded latents are roughly zero-mean, unit-variance.
  CodecTrainReport train(std::span<const PixelVideo> videos, const CodecTrainConfig& tc);
  void fit_normalization(std::span<const PixelVideo> videos);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Parameters go under "codec.*", config under meta["codec"].
  void save(Container& out) const;
  static LatentCodec load(const Container& in);

 private:
  Matrix patches(const PixelVideo& video, int latent_frame) const;
  Matrix run_encoder(const Matrix& patches, bool first) const;
  Matrix run_decoder(const Matrix& latent, bool first) const;

  CodecConfig config_;
  ParamStore params_;
};

/// (t, y, x)-ordered tokens with positions (t, x, y).
std::pair<TokenSequence, rope::PositionGrid> tokenize(const LatentVideo& latent);
LatentVideo untokenize(const TokenSequence& tokens, int frames, int height, int width, int spatial_factor);

/// Video stored as f32 [frames, H, W, 3] with meta {"fps"}.
void put_video(Container& c, const std::string& name, const PixelVideo& v);
PixelVideo get_video(const Container& c, const std::string& name);
void save_video(const std::filesystem::path& path, const PixelVideo& v);
PixelVideo load_video(const std::filesystem::path& path);

}  // namespace hcustom::codec
