#pragma once

// Evaluation aggregation over pluggable embedding providers.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "hcustom/latent_codec.hpp"
#include "hcustom/synth_data.hpp"

namespace hcustom::metrics {

using Embedding = Eigen::VectorXd;

struct Detection {
  synth::BBox box;
  codec::PixelVideo crop;  // one frame
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Unit vector for a single frame.
  virtual Embedding embed_frame(const codec::PixelVideo& frame) const = 0;
  virtual Embedding embed_text(const std::string& text) const = 0;
  virtual std::optional<Detection> detect_subject(const codec::PixelVideo& frame) const = 0;
};

/// Cosine similarity; inputs are normalised internally. Zero vectors give 0.
double cosine(const Embedding& a, const Embedding& b);

/// Mean over frames of cos(ref, frame).
double id_consistency(const Embedding& ref, std::span<const Embedding> frames);
/// Mean over i >= 1 of (cos(e_i, e_{i-1}) + cos(e_i, e_0)) / 2. Needs >= 2 frames.
double temporal_consistency(std::span<const Embedding> frames);
/// Mean absolute inter-frame difference, values assumed in [0, 1]. 0 for one frame.
double dynamic_degree(const codec::PixelVideo& video);

/// Mean |a - b| over frame `frame` of two same-shaped videos.
double frame_error(const codec::PixelVideo& a, const codec::PixelVideo& b, int frame);
/// Mean |a - b| over pixels whose mask equals `value` (mask is [frames][H][W]).
double masked_error(const codec::PixelVideo& a, const codec::PixelVideo& b, std::span<const std::uint8_t> mask,
                    std::uint8_t value);

/// Sprite embedder built from rendering parameters: hue on the unit circle,
/// a shape one-hot from the fill ratio of the largest saturated component,
/// a solid/patterned one-hot, and a null axis used when nothing is detected.
class ToySpriteProvider final : public EmbeddingProvider {
 public:
  static constexpr int kDim = 9;
  static constexpr double kMinSaturation = 0.45;
  static constexpr double kMinValue = 0.25;
  static constexpr int kMinPixels = 6;

  Embedding embed_frame(const codec::PixelVideo& frame) const override;
  Embedding embed_text(const std::string& text) const override;
  std::optional<Detection> detect_subject(const codec::PixelVideo& frame) const override;

  /// Shape whose reference fill ratio is nearest to `fill`.
  static synth::Shape classify_fill(double fill);
  static double reference_fill(synth::Shape shape);
};

inline constexpr std::array<const char*, 5> kTableColumns = {"Face-Sim", "CLIP-B-T", "DINO-Sim", "Temp-Consis", "DD"};

struct VideoMetrics {
  std::string id;
  double face_sim = 0.0;
  double clip_bt = 0.0;
  std::optional<double> dino_sim;
  double temp_consis = 0.0;
  double dd = 0.0;
  int frames = 0;
  int missing_detections = 0;
};

struct MetricsReport {
  std::vector<VideoMetrics> videos;
  double face_sim = 0.0;
  double clip_bt = 0.0;
  std::optional<double> dino_sim;  // absent when no frame had a detection
  double temp_consis = 0.0;
  double dd = 0.0;
  int missing_detections = 0;

  nlohmann::json to_json() const;
  /// Markdown table with the five metric columns.
  std::string table() const;
};

struct EvalItem {
  std::string id;
  const codec::PixelVideo* video = nullptr;
  const codec::PixelVideo* reference = nullptr;  // identity image, one frame
  std::string prompt;
};

MetricsReport evaluate(std::span<const EvalItem> items, const EmbeddingProvider& provider);

}  // namespace hcustom::metrics
