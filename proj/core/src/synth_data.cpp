#include "hcustom/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hcustom/errors.hpp"

namespace hcustom::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kScaleGain = 0.35;
constexpr double kStarInner = 0.45;
constexpr int kStripe = 3;

}  // namespace

std::string to_string(Shape s) {
  switch (s) {
    case Shape::circle: return "circle";
    case Shape::square: return "square";
    case Shape::triangle: return "triangle";
    case Shape::star: return "star";
  }
  return "?";
}

Shape shape_from_string(std::string_view s) {
  for (Shape sh : kShapes) {
    if (to_string(sh) == s) return sh;
  }
  throw ConfigError("shape", "unknown shape '" + std::string(s) + "'");
}

std::string to_string(Texture t) {
  switch (t) {
    case Texture::solid: return "solid";
    case Texture::stripes: return "stripes";
    case Texture::checker: return "checker";
  }
  return "?";
}

Texture texture_from_string(std::string_view s) {
  if (s == "solid") return Texture::solid;
  if (s == "stripes") return Texture::stripes;
  if (s == "checker") return Texture::checker;
  throw ConfigError("texture", "unknown texture '" + std::string(s) + "'");
}

void SpriteIdentity::validate() const {
  if (hue < 0 || hue >= kHueLevels) throw ValidationError("sprite hue index out of range");
  if (size < 2) throw ValidationError("sprite size must be >= 2");
}

void to_json(nlohmann::json& j, const SpriteIdentity& s) {
  j = {{"shape", to_string(s.shape)}, {"hue", s.hue},     {"texture", to_string(s.texture)},
       {"size", s.size},              {"human", s.human}, {"category", s.category}};
}

void from_json(const nlohmann::json& j, SpriteIdentity& s) {
  s.shape = shape_from_string(j.at("shape").get<std::string>());
  s.hue = j.at("hue").get<int>();
  s.texture = texture_from_string(j.at("texture").get<std::string>());
  s.size = j.at("size").get<int>();
  s.human = j.value("human", false);
  s.category = j.value("category", std::string("object"));
}

void to_json(nlohmann::json& j, const BBox& b) { j = {b.x0, b.y0, b.x1, b.y1}; }

void from_json(const nlohmann::json& j, BBox& b) {
  b.x0 = j.at(0).get<int>();
  b.y0 = j.at(1).get<int>();
  b.x1 = j.at(2).get<int>();
  b.y1 = j.at(3).get<int>();
}

BBox intersect(const BBox& a, const BBox& b) {
  BBox r{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
  if (!r.valid()) return BBox{};
  return r;
}

void SceneParams::validate() const {
  if (frames < 1) throw ConfigError("scene.frames", "must be >= 1");
  if (height < 8 || width < 8) throw ConfigError("scene.size", "frames must be at least 8x8");
  if (!(fps > 0.0)) throw ConfigError("scene.fps", "must be > 0");
  if (audio_amplitude < 0.0) throw ConfigError("scene.audio_amplitude", "must be >= 0");
  if (!(audio_period > 0.0)) throw ConfigError("scene.audio_period", "must be > 0");
  if (speed < 0.0) throw ConfigError("scene.speed", "must be >= 0");
  if (audio_features < 1) throw ConfigError("scene.audio_features", "must be >= 1");
}

void to_json(nlohmann::json& j, const SceneParams& s) {
  j = {{"frames", s.frames},
       {"height", s.height},
       {"width", s.width},
       {"fps", s.fps},
       {"audio_amplitude", s.audio_amplitude},
       {"audio_period", s.audio_period},
       {"speed", s.speed},
       {"audio_features", s.audio_features}};
}

void from_json(const nlohmann::json& j, SceneParams& s) {
  s.frames = j.value("frames", s.frames);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.fps = j.value("fps", s.fps);
  s.audio_amplitude = j.value("audio_amplitude", s.audio_amplitude);
  s.audio_period = j.value("audio_period", s.audio_period);
  s.speed = j.value("speed", s.speed);
  s.audio_features = j.value("audio_features", s.audio_features);
}

void AnnotationRecord::validate() const {
  for (const auto& f : frames) {
    for (const auto& d : f.subjects) {
      const auto in_frame = [&](const BBox& b) {
        return b.valid() && b.x0 >= 0 && b.y0 >= 0 && b.x1 <= width && b.y1 <= height;
      };
      if (!in_frame(d.box)) throw ValidationError(clip_id + ": subject box outside the frame");
      if (d.face && !in_frame(*d.face)) throw ValidationError(clip_id + ": face box outside the frame");
    }
  }
  for (const auto& s : {koala, sync, iqa}) {
    if (s && !std::isfinite(*s)) throw ValidationError(clip_id + ": non-finite quality score");
  }
}

void to_json(nlohmann::json& j, const AnnotationRecord& r) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : r.frames) {
    nlohmann::json subs = nlohmann::json::array();
    for (const auto& d : f.subjects) {
      nlohmann::json s = {{"id", d.subject_id}, {"box", d.box}};
      if (d.face) s["face"] = *d.face;
      subs.push_back(std::move(s));
    }
    frames.push_back({{"frame", f.frame}, {"subjects", std::move(subs)}});
  }
  j = {{"clip_id", r.clip_id},   {"width", r.width},       {"height", r.height},
       {"frames", frames},       {"id_links", r.id_links}, {"caption", r.caption},
       {"descriptors", r.descriptors}, {"split_point", r.split_point}};
  if (r.koala) j["koala"] = *r.koala;
  if (r.sync) j["sync"] = *r.sync;
  if (r.iqa) j["iqa"] = *r.iqa;
}

void from_json(const nlohmann::json& j, AnnotationRecord& r) {
  r.clip_id = j.value("clip_id", std::string());
  r.width = j.value("width", 0);
  r.height = j.value("height", 0);
  r.frames.clear();
  for (const auto& f : j.value("frames", nlohmann::json::array())) {
    FrameAnnotation fa;
    fa.frame = f.at("frame").get<int>();
    for (const auto& s : f.at("subjects")) {
      SubjectDetection d;
      d.subject_id = s.at("id").get<int>();
      d.box = s.at("box").get<BBox>();
      if (s.contains("face")) d.face = s.at("face").get<BBox>();
      fa.subjects.push_back(d);
    }
    r.frames.push_back(std::move(fa));
  }
  r.id_links = j.value("id_links", std::vector<std::pair<int, int>>{});
  r.koala = j.contains("koala") ? std::optional<double>(j.at("koala").get<double>()) : std::nullopt;
  r.sync = j.contains("sync") ? std::optional<double>(j.at("sync").get<double>()) : std::nullopt;
  r.iqa = j.contains("iqa") ? std::optional<double>(j.at("iqa").get<double>()) : std::nullopt;
  r.caption = j.value("caption", std::string());
  r.descriptors = j.value("descriptors", std::vector<std::string>{});
  r.split_point = j.value("split_point", 0);
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int i = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  const double table[6][3] = {{v, t, p}, {q, v, p}, {p, v, t}, {p, q, v}, {t, p, v}, {v, p, q}};
  for (int c = 0; c < 3; ++c) rgb[c] = table[i][c];
}

void rgb_to_hsv(const double rgb[3], double& h, double& s, double& v) {
  const double mx = std::max({rgb[0], rgb[1], rgb[2]});
  const double mn = std::min({rgb[0], rgb[1], rgb[2]});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  double hh;
  if (mx == rgb[0]) {
    hh = std::fmod((rgb[1] - rgb[2]) / d, 6.0);
  } else if (mx == rgb[1]) {
    hh = (rgb[2] - rgb[0]) / d + 2.0;
  } else {
    hh = (rgb[0] - rgb[1]) / d + 4.0;
  }
  h = hh / 6.0;
  if (h < 0.0) h += 1.0;
}

bool sprite_contains(Shape shape, double dx, double dy, double r) {
  switch (shape) {
    case Shape::circle: return dx * dx + dy * dy <= r * r;
    case Shape::square: return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
    case Shape::triangle: {
      // apex (0, -r), base from (-r, 0.8r) to (r, 0.8r)
      if (dy < -r || dy > 0.8 * r) return false;
      const double half = r * (dy + r) / (1.8 * r);
      return std::abs(dx) <= half;
    }
    case Shape::star: {
      double px[10], py[10];
      for (int i = 0; i < 10; ++i) {
        const double rad = (i % 2 == 0) ? r : kStarInner * r;
        const double a = -std::numbers::pi / 2.0 + i * std::numbers::pi / 5.0;
        px[i] = rad * std::cos(a);
        py[i] = rad * std::sin(a);
      }
      bool inside = false;
      for (int i = 0, j = 9; i < 10; j = i++) {
        if ((py[i] > dy) != (py[j] > dy) && dx < (px[j] - px[i]) * (dy - py[i]) / (py[j] - py[i]) + px[i]) {
          inside = !inside;
        }
      }
      return inside;
    }
  }
  return false;
}

namespace {

/// Texture brightness at an offset from the sprite centre.
double texture_value(Texture t, double dx, double dy) {
  switch (t) {
    case Texture::solid: return kBrightValue;
    case Texture::stripes:
      return (static_cast<int>(std::floor(dy / kStripe)) & 1) ? kDarkValue : kBrightValue;
    case Texture::checker: {
      const int a = static_cast<int>(std::floor(dx / kStripe));
      const int b = static_cast<int>(std::floor(dy / kStripe));
      return ((a + b) & 1) ? kDarkValue : kBrightValue;
    }
  }
  return kBrightValue;
}

/// Draws one sprite; returns its tight pixel box (empty if nothing was drawn).
BBox draw_sprite(codec::PixelVideo& v, int frame, const SpriteIdentity& id, double cx, double cy, double scale,
                 std::vector<std::uint8_t>* mask) {
  const double r = id.size * scale;
  BBox box{v.width, v.height, 0, 0};
  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
  const int y_hi = std::min(v.height, static_cast<int>(std::ceil(cy + r + 1)));
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
  const int x_hi = std::min(v.width, static_cast<int>(std::ceil(cx + r + 1)));
  for (int y = y_lo; y < y_hi; ++y) {
    for (int x = x_lo; x < x_hi; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      if (!sprite_contains(id.shape, dx, dy, r)) continue;
      double rgb[3];
      hsv_to_rgb(id.hue_value(), kSpriteSaturation, texture_value(id.texture, dx, dy), rgb);
      for (int c = 0; c < 3; ++c) v.at(frame, y, x, c) = static_cast<float>(rgb[c]);
      if (mask) (*mask)[(static_cast<std::size_t>(frame) * v.height + y) * v.width + x] = 1;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x + 1);
      box.y1 = std::max(box.y1, y + 1);
    }
  }
  return box.valid() ? box : BBox{};
}

struct Background {
  double hue, f1, f2, p1, p2;
};

void paint_background(codec::PixelVideo& v, const Background& bg) {
  for (int y = 0; y < v.height; ++y) {
    for (int x = 0; x < v.width; ++x) {
      const double val = 0.45 + 0.15 * std::sin(kTwoPi * bg.f1 * x / v.width + bg.p1) *
                                    std::cos(kTwoPi * bg.f2 * y / v.height + bg.p2);
      double rgb[3];
      hsv_to_rgb(bg.hue, 0.08, val, rgb);
      for (int f = 0; f < v.frames; ++f) {
        for (int c = 0; c < 3; ++c) v.at(f, y, x, c) = static_cast<float>(rgb[c]);
      }
    }
  }
}

std::string caption_for(std::span<const SpriteIdentity> ids) {
  if (ids.size() == 1) return "A " + ids[0].descriptor() + " drifts across the scene";
  std::string out = "A " + ids[0].descriptor();
  for (std::size_t i = 1; i < ids.size(); ++i) {
    out += (i + 1 == ids.size()) ? " and a " : ", a ";
    out += ids[i].descriptor();
  }
  return out + " drift across the scene";
}

}  // namespace

SpriteIdentity random_identity(Rng& rng) {
  SpriteIdentity s;
  s.shape = kShapes[static_cast<std::size_t>(rng.uniform_int(0, 3))];
  s.hue = rng.uniform_int(0, kHueLevels - 1);
  s.texture = static_cast<Texture>(rng.uniform_int(0, 2));
  s.size = rng.uniform_int(8, 12);
  s.human = rng.uniform() < 0.25;
  s.category = s.human ? "human" : "object";
  return s;
}

std::vector<SpriteIdentity> random_identities(Rng& rng, int count) {
  if (count < 1 || count > static_cast<int>(kShapes.size())) {
    throw ConfigError("subjects", "must be between 1 and 4");
  }
  std::vector<SpriteIdentity> out;
  while (static_cast<int>(out.size()) < count) {
    SpriteIdentity s = random_identity(rng);
    const bool clash = std::any_of(out.begin(), out.end(), [&](const SpriteIdentity& o) { return o.shape == s.shape; });
    if (!clash) out.push_back(s);
  }
  return out;
}

double audio_envelope(const SceneParams& scene, double phase, double k) {
  return scene.audio_amplitude * (0.5 + 0.5 * std::sin(kTwoPi * k / scene.audio_period + phase));
}

codec::PixelVideo render_identity_image(const SpriteIdentity& identity, int height, int width) {
  identity.validate();
  codec::PixelVideo img = codec::PixelVideo::filled(1, height, width, 0.5f);
  draw_sprite(img, 0, identity, width / 2.0, height / 2.0, 1.0, nullptr);
  return img;
}

TrainSample generate_sample(const SpriteIdentity& identity, const SceneParams& scene, std::uint64_t seed) {
  return generate_scene(std::span<const SpriteIdentity>(&identity, 1), scene, seed);
}

TrainSample generate_scene(std::span<const SpriteIdentity> identities, const SceneParams& scene, std::uint64_t seed) {
  scene.validate();
  if (identities.empty()) throw ValidationError("generate_scene: need at least one identity");
  for (const auto& id : identities) id.validate();

  Rng rng(seed);
  TrainSample s;
  s.seed = seed;
  s.scene = scene;
  s.identities.assign(identities.begin(), identities.end());
  s.id = "clip_" + std::to_string(seed);

  s.video = codec::PixelVideo::filled(scene.frames, scene.height, scene.width, 0.0f);
  s.video.fps = scene.fps;
  const Background bg{rng.uniform(), rng.uniform_int(1, 2) * 0.5, rng.uniform_int(1, 2) * 0.5, rng.uniform(0, kTwoPi),
                      rng.uniform(0, kTwoPi)};
  paint_background(s.video, bg);
  s.mask.assign(static_cast<std::size_t>(scene.frames) * scene.height * scene.width, 0);

  // One envelope drives every sprite so the audio explains all scale changes.
  const double phase = rng.uniform(0, kTwoPi);
  std::vector<double> scale(static_cast<std::size_t>(scene.frames));
  for (int k = 0; k < scene.frames; ++k) scale[k] = 1.0 + kScaleGain * audio_envelope(scene, phase, k);

  struct Walker {
    double x, y, heading;
  };
  std::vector<std::vector<std::pair<double, double>>> paths;
  for (const auto& id : identities) {
    const double margin = id.size * (1.0 + kScaleGain * scene.audio_amplitude) + 1.0;
    const double lo_x = std::min(margin, scene.width / 2.0), hi_x = std::max(scene.width - margin, scene.width / 2.0);
    const double lo_y = std::min(margin, scene.height / 2.0), hi_y = std::max(scene.height - margin, scene.height / 2.0);
    Walker w{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y), rng.uniform(0, kTwoPi)};
    std::vector<std::pair<double, double>> path;
    for (int k = 0; k < scene.frames; ++k) {
      path.emplace_back(w.x, w.y);
      w.heading += rng.normal(0.0, 0.3);
      w.x += scene.speed * std::cos(w.heading);
      w.y += scene.speed * std::sin(w.heading);
      if (w.x < lo_x || w.x > hi_x) {
        w.x = std::clamp(w.x, lo_x, hi_x);
        w.heading = std::numbers::pi - w.heading;
      }
      if (w.y < lo_y || w.y > hi_y) {
        w.y = std::clamp(w.y, lo_y, hi_y);
        w.heading = -w.heading;
      }
    }
    paths.push_back(std::move(path));
  }

  s.annotation.clip_id = s.id;
  s.annotation.width = scene.width;
  s.annotation.height = scene.height;
  for (int k = 0; k < scene.frames; ++k) {
    FrameAnnotation fa;
    fa.frame = k;
    for (std::size_t i = 0; i < identities.size(); ++i) {
      const auto [cx, cy] = paths[i][static_cast<std::size_t>(k)];
      const BBox box = draw_sprite(s.video, k, identities[i], cx, cy, scale[static_cast<std::size_t>(k)], &s.mask);
      if (!box.valid()) continue;
      SubjectDetection d;
      d.subject_id = static_cast<int>(i) + 1;
      d.box = box;
      if (identities[i].human) {
        d.face = BBox{box.x0, box.y0, box.x1, box.y0 + std::max(1, static_cast<int>(box.height() * 0.4))};
      }
      fa.subjects.push_back(d);
    }
    s.annotation.frames.push_back(std::move(fa));
  }

  for (const auto& id : identities) s.identity_images.push_back(render_identity_image(id, scene.height, scene.width));

  s.audio.frames = scene.frames;
  s.audio.features = scene.audio_features;
  s.audio.data = Matrix(static_cast<Eigen::Index>(scene.frames) * audio::kTokensPerFrame, scene.audio_features);
  for (int k = 0; k < scene.frames; ++k) {
    for (int b = 0; b < audio::kTokensPerFrame; ++b) {
      const double a = audio_envelope(scene, phase, k + b / static_cast<double>(audio::kTokensPerFrame));
      for (int j = 0; j < scene.audio_features; ++j) {
        s.audio.at(k, b, j) = a * std::cos(std::numbers::pi * (j + 1) * (2 * b + 1) / 16.0);
      }
    }
  }

  s.caption = caption_for(identities);
  s.annotation.caption = s.caption;
  for (const auto& id : identities) s.annotation.descriptors.push_back(id.descriptor());
  s.annotation.koala = rng.uniform(0.03, 0.12);
  s.annotation.sync = rng.uniform(1.0, 8.0);
  s.annotation.iqa = rng.uniform(30.0, 70.0);
  s.annotation.split_point = scene.frames;
  return s;
}

}  // namespace hcustom::synth
