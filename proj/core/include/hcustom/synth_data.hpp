#pragma once

// Procedural moving-sprite clips with exact ground truth: identity, boxes,
// masks, frame-locked audio and a caption naming the subject.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcustom/audio_net.hpp"
#include "hcustom/latent_codec.hpp"
#include "hcustom/params.hpp"

namespace hcustom::synth {

enum class Shape { circle, square, triangle, star };
inline constexpr std::array<Shape, 4> kShapes = {Shape::circle, Shape::square, Shape::triangle, Shape::star};
std::string to_string(Shape s);
Shape shape_from_string(std::string_view s);

enum class Texture { solid, stripes, checker };
std::string to_string(Texture t);
Texture texture_from_string(std::string_view s);

inline constexpr int kHueLevels = 12;
inline constexpr double kSpriteSaturation = 0.9;
inline constexpr double kBrightValue = 0.95;
inline constexpr double kDarkValue = 0.55;

struct SpriteIdentity {
  Shape shape = Shape::circle;
  int hue = 0;  // quantized, 0 .. kHueLevels-1
  Texture texture = Texture::solid;
  int size = 10;  // radius in pixels at unit scale
  bool human = false;
  std::string category = "object";

  double hue_value() const { return static_cast<double>(hue) / kHueLevels; }
  std::string descriptor() const { return to_string(shape); }
  void validate() const;
  friend bool operator==(const SpriteIdentity&, const SpriteIdentity&) = default;
};
void to_json(nlohmann::json& j, const SpriteIdentity& s);
void from_json(const nlohmann::json& j, SpriteIdentity& s);

/// Half-open pixel box [x0, x1) x [y0, y1).
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return valid() ? static_cast<long long>(width()) * height() : 0; }
  bool valid() const { return x0 < x1 && y0 < y1; }
  friend bool operator==(const BBox&, const BBox&) = default;
};
void to_json(nlohmann::json& j, const BBox& b);
void from_json(const nlohmann::json& j, BBox& b);
/// Empty (area 0) when the boxes do not overlap.
BBox intersect(const BBox& a, const BBox& b);

struct SceneParams {
  int frames = 33;
  int height = 64;
  int width = 64;
  double fps = 24.0;
  /// Peak audio amplitude A; the sprite scale is 1 + 0.35 a_k with a_k in [0, A].
  double audio_amplitude = 1.0;
  double audio_period = 8.0;  // frames per amplitude cycle
  double speed = 1.5;         // pixels per frame
  int audio_features = 32;

  void validate() const;
  friend bool operator==(const SceneParams&, const SceneParams&) = default;
};
void to_json(nlohmann::json& j, const SceneParams& s);
void from_json(const nlohmann::json& j, SceneParams& s);

struct SubjectDetection {
  int subject_id = 0;
  BBox box;
  std::optional<BBox> face;
};

struct FrameAnnotation {
  int frame = 0;
  std::vector<SubjectDetection> subjects;
};

struct AnnotationRecord {
  std::string clip_id;
  int width = 0;
  int height = 0;
  std::vector<FrameAnnotation> frames;
  /// Pairs of per-frame ids known to be the same subject.
  std::vector<std::pair<int, int>> id_links;
  std::optional<double> koala;
  std::optional<double> sync;
  std::optional<double> iqa;
  std::string caption;
  std::vector<std::string> descriptors;
  int split_point = 0;

  void validate() const;
};
void to_json(nlohmann::json& j, const AnnotationRecord& r);
void from_json(const nlohmann::json& j, AnnotationRecord& r);

struct TrainSample {
  std::string id;
  std::uint64_t seed = 0;
  SceneParams scene;
  std::vector<SpriteIdentity> identities;
  codec::PixelVideo video;
  /// One clean render per identity on a neutral gray background.
  std::vector<codec::PixelVideo> identity_images;
  audio::AudioTrack audio;
  /// [frames][H][W], 1 on subject pixels.
  std::vector<std::uint8_t> mask;
  std::string caption;
  AnnotationRecord annotation;
};

SpriteIdentity random_identity(Rng& rng);
/// `count` identities with pairwise distinct shapes (count <= 4).
std::vector<SpriteIdentity> random_identities(Rng& rng, int count);

/// a_k = A (0.5 + 0.5 sin(2 pi k / period + phase)), sampled at sub-frame time k.
double audio_envelope(const SceneParams& scene, double phase, double k);

TrainSample generate_sample(const SpriteIdentity& identity, const SceneParams& scene, std::uint64_t seed);
TrainSample generate_scene(std::span<const SpriteIdentity> identities, const SceneParams& scene, std::uint64_t seed);

/// The identity image: sprite at unit scale, centred, on 0.5 gray.
codec::PixelVideo render_identity_image(const SpriteIdentity& identity, int height, int width);

/// Exact sprite coverage test for a pixel centre offset (dx, dy) from the sprite centre at radius r.
bool sprite_contains(Shape shape, double dx, double dy, double r);

void hsv_to_rgb(double h, double s, double v, double rgb[3]);
void rgb_to_hsv(const double rgb[3], double& h, double& s, double& v);

}  // namespace hcustom::synth
