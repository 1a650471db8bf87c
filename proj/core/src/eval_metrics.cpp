#include "hcustom/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numbers>

#include "hcustom/errors.hpp"
#include "hcustom/prompt_fusion.hpp"

namespace hcustom::metrics {

double cosine(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw DimensionError("cosine: embedding sizes differ");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

double id_consistency(const Embedding& ref, std::span<const Embedding> frames) {
  if (frames.empty()) throw ValidationError("id_consistency: no frames");
  double s = 0.0;
  for (const auto& f : frames) s += cosine(ref, f);
  return s / static_cast<double>(frames.size());
}

double temporal_consistency(std::span<const Embedding> frames) {
  if (frames.size() < 2) throw ValidationError("temporal_consistency: need at least two frames");
  double s = 0.0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    s += 0.5 * (cosine(frames[i], frames[i - 1]) + cosine(frames[i], frames[0]));
  }
  return s / static_cast<double>(frames.size() - 1);
}

double dynamic_degree(const codec::PixelVideo& video) {
  video.validate();
  if (video.frames < 2) return 0.0;
  const std::size_t n = video.frame_size();
  double s = 0.0;
  for (int f = 1; f < video.frames; ++f) {
    const float* a = video.data.data() + f * n;
    const float* b = a - n;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  }
  return s / (static_cast<double>(n) * (video.frames - 1));
}

double frame_error(const codec::PixelVideo& a, const codec::PixelVideo& b, int frame) {
  if (a.height != b.height || a.width != b.width) throw DimensionError("frame_error: frame sizes differ");
  if (frame < 0 || frame >= a.frames || frame >= b.frames) throw DimensionError("frame_error: frame out of range");
  const std::size_t n = a.frame_size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += std::abs(static_cast<double>(a.data[frame * n + i]) - b.data[frame * n + i]);
  }
  return s / static_cast<double>(n);
}

double masked_error(const codec::PixelVideo& a, const codec::PixelVideo& b, std::span<const std::uint8_t> mask,
                    std::uint8_t value) {
  if (a.frames != b.frames || a.height != b.height || a.width != b.width) {
    throw DimensionError("masked_error: video shapes differ");
  }
  const std::size_t cells = static_cast<std::size_t>(a.frames) * a.height * a.width;
  if (mask.size() != cells) throw DimensionError("masked_error: mask shape differs");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    if (mask[i] != value) continue;
    for (int c = 0; c < 3; ++c) s += std::abs(static_cast<double>(a.data[i * 3 + c]) - b.data[i * 3 + c]);
    count += 3;
  }
  return count ? s / static_cast<double>(count) : 0.0;
}

// ---- toy provider ------------------------------------------------------

namespace {

struct Component {
  std::vector<int> pixels;  // y * W + x
  synth::BBox box;
};

Component largest_component(const codec::PixelVideo& frame) {
  const int H = frame.height, W = frame.width;
  std::vector<std::uint8_t> on(static_cast<std::size_t>(H) * W, 0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double rgb[3] = {frame.at(0, y, x, 0), frame.at(0, y, x, 1), frame.at(0, y, x, 2)};
      double h, s, v;
      synth::rgb_to_hsv(rgb, h, s, v);
      on[static_cast<std::size_t>(y) * W + x] =
          (s >= ToySpriteProvider::kMinSaturation && v >= ToySpriteProvider::kMinValue) ? 1 : 0;
    }
  }
  Component best;
  std::vector<std::uint8_t> seen(on.size(), 0);
  for (int start = 0; start < H * W; ++start) {
    if (!on[start] || seen[start]) continue;
    Component c;
    c.box = {W, H, 0, 0};
    std::deque<int> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      c.pixels.push_back(p);
      const int y = p / W, x = p % W;
      c.box.x0 = std::min(c.box.x0, x);
      c.box.y0 = std::min(c.box.y0, y);
      c.box.x1 = std::max(c.box.x1, x + 1);
      c.box.y1 = std::max(c.box.y1, y + 1);
      const int nbr[4][2] = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
      for (const auto& d : nbr) {
        const int yy = y + d[0], xx = x + d[1];
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
        const int q = yy * W + xx;
        if (on[q] && !seen[q]) {
          seen[q] = 1;
          queue.push_back(q);
        }
      }
    }
    if (c.pixels.size() > best.pixels.size()) best = std::move(c);
  }
  return best;
}

Embedding null_embedding() {
  Embedding e = Embedding::Zero(ToySpriteProvider::kDim);
  e(ToySpriteProvider::kDim - 1) = 1.0;
  return e;
}

int shape_index(synth::Shape s) { return static_cast<int>(s); }

}  // namespace

double ToySpriteProvider::reference_fill(synth::Shape shape) {
  static const std::array<double, 4> table = [] {
    std::array<double, 4> t{};
    constexpr int kSize = 64;
    constexpr double r = 20.0;
    for (synth::Shape s : synth::kShapes) {
      int count = 0, x0 = kSize, y0 = kSize, x1 = 0, y1 = 0;
      for (int y = 0; y < kSize; ++y) {
        for (int x = 0; x < kSize; ++x) {
          if (!synth::sprite_contains(s, x + 0.5 - kSize / 2.0, y + 0.5 - kSize / 2.0, r)) continue;
          ++count;
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x + 1);
          y1 = std::max(y1, y + 1);
        }
      }
      t[static_cast<std::size_t>(shape_index(s))] = static_cast<double>(count) / ((x1 - x0) * (y1 - y0));
    }
    return t;
  }();
  return table[static_cast<std::size_t>(shape_index(shape))];
}

synth::Shape ToySpriteProvider::classify_fill(double fill) {
  synth::Shape best = synth::Shape::circle;
  double best_d = 1e9;
  for (synth::Shape s : synth::kShapes) {
    const double d = std::abs(fill - reference_fill(s));
    if (d < best_d) {
      best_d = d;
      best = s;
    }
  }
  return best;
}

Embedding ToySpriteProvider::embed_frame(const codec::PixelVideo& frame) const {
  if (frame.frames != 1) throw DimensionError("embed_frame: expected a single frame");
  const Component c = largest_component(frame);
  if (static_cast<int>(c.pixels.size()) < kMinPixels) return null_embedding();
  double hc = 0.0, hs = 0.0;
  int dark = 0;
  for (int p : c.pixels) {
    const int y = p / frame.width, x = p % frame.width;
    const double rgb[3] = {frame.at(0, y, x, 0), frame.at(0, y, x, 1), frame.at(0, y, x, 2)};
    double h, s, v;
    synth::rgb_to_hsv(rgb, h, s, v);
    hc += std::cos(2.0 * std::numbers::pi * h);
    hs += std::sin(2.0 * std::numbers::pi * h);
    if (v < 0.5 * (synth::kBrightValue + synth::kDarkValue)) ++dark;
  }
  Embedding e = Embedding::Zero(kDim);
  const double hn = std::hypot(hc, hs);
  if (hn > 0.0) {
    e(0) = hc / hn;
    e(1) = hs / hn;
  }
  const double fill = static_cast<double>(c.pixels.size()) / static_cast<double>(c.box.area());
  e(2 + shape_index(classify_fill(fill))) = 0.8;
  const bool patterned = dark > 0.2 * static_cast<double>(c.pixels.size());
  e(patterned ? 7 : 6) = 0.5;
  return e.normalized();
}

Embedding ToySpriteProvider::embed_text(const std::string& text) const {
  for (const auto& w : prompt::split_words(text)) {
    std::string lw = w;
    std::transform(lw.begin(), lw.end(), lw.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    for (synth::Shape s : synth::kShapes) {
      if (synth::to_string(s) == lw) {
        Embedding e = Embedding::Zero(kDim);
        e(2 + shape_index(s)) = 1.0;
        return e;
      }
    }
  }
  return null_embedding();
}

std::optional<Detection> ToySpriteProvider::detect_subject(const codec::PixelVideo& frame) const {
  if (frame.frames != 1) throw DimensionError("detect_subject: expected a single frame");
  const Component c = largest_component(frame);
  if (static_cast<int>(c.pixels.size()) < kMinPixels) return std::nullopt;
  Detection d;
  d.box = c.box;
  d.crop = codec::PixelVideo::filled(1, c.box.height(), c.box.width(), 0.0f);
  d.crop.fps = frame.fps;
  for (int y = c.box.y0; y < c.box.y1; ++y) {
    for (int x = c.box.x0; x < c.box.x1; ++x) {
      for (int ch = 0; ch < 3; ++ch) d.crop.at(0, y - c.box.y0, x - c.box.x0, ch) = frame.at(0, y, x, ch);
    }
  }
  return d;
}

// ---- report ------------------------------------------------------------

nlohmann::json MetricsReport::to_json() const {
  const auto metric_row = [](double face, double clip, std::optional<double> dino, double temp, double dd) {
    nlohmann::json j = {{"Face-Sim", face}, {"CLIP-B-T", clip}, {"Temp-Consis", temp}, {"DD", dd}};
    j["DINO-Sim"] = dino ? nlohmann::json(*dino) : nlohmann::json(nullptr);
    return j;
  };
  nlohmann::json j;
  j["columns"] = kTableColumns;
  j["summary"] = metric_row(face_sim, clip_bt, dino_sim, temp_consis, dd);
  j["missing_detections"] = missing_detections;
  j["videos"] = nlohmann::json::array();
  for (const auto& v : videos) {
    nlohmann::json row = metric_row(v.face_sim, v.clip_bt, v.dino_sim, v.temp_consis, v.dd);
    row["id"] = v.id;
    row["frames"] = v.frames;
    row["missing_detections"] = v.missing_detections;
    j["videos"].push_back(std::move(row));
  }
  return j;
}

std::string MetricsReport::table() const {
  std::string out = "|";
  for (const char* c : kTableColumns) out += std::string(" ") + c + " |";
  out += "\n|";
  for (std::size_t i = 0; i < kTableColumns.size(); ++i) out += "---|";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "\n| %.4f | %.4f | %s | %.4f | %.4f |\n", face_sim, clip_bt,
                dino_sim ? std::to_string(*dino_sim).c_str() : "n/a", temp_consis, dd);
  return out + buf;
}

MetricsReport evaluate(std::span<const EvalItem> items, const EmbeddingProvider& provider) {
  if (items.empty()) throw ValidationError("evaluate: no videos");
  MetricsReport report;
  double dino_sum = 0.0;
  int dino_videos = 0;
  for (const auto& item : items) {
    if (!item.video || !item.reference) throw ValidationError("evaluate: missing video or reference for " + item.id);
    const codec::PixelVideo& v = *item.video;
    v.validate();
    VideoMetrics m;
    m.id = item.id;
    m.frames = v.frames;

    const Embedding ref = provider.embed_frame(*item.reference);
    const auto ref_det = provider.detect_subject(*item.reference);
    const Embedding ref_subject = ref_det ? provider.embed_frame(ref_det->crop) : ref;
    const Embedding text = provider.embed_text(item.prompt);

    std::vector<Embedding> frames;
    double clip = 0.0, dino = 0.0;
    int detected = 0;
    for (int f = 0; f < v.frames; ++f) {
      const codec::PixelVideo frame = v.frame(f);
      frames.push_back(provider.embed_frame(frame));
      clip += cosine(text, frames.back());
      if (auto det = provider.detect_subject(frame)) {
        dino += cosine(ref_subject, provider.embed_frame(det->crop));
        ++detected;
      } else {
        ++m.missing_detections;
      }
    }
    m.face_sim = id_consistency(ref, frames);
    m.clip_bt = clip / v.frames;
    m.temp_consis = frames.size() >= 2 ? temporal_consistency(frames) : 1.0;
    m.dd = dynamic_degree(v);
    if (detected > 0) {
      m.dino_sim = dino / detected;
      dino_sum += *m.dino_sim;
      ++dino_videos;
    }
    report.missing_detections += m.missing_detections;
    report.face_sim += m.face_sim;
    report.clip_bt += m.clip_bt;
    report.temp_consis += m.temp_consis;
    report.dd += m.dd;
    report.videos.push_back(std::move(m));
  }
  const double n = static_cast<double>(items.size());
  report.face_sim /= n;
  report.clip_bt /= n;
  report.temp_consis /= n;
  report.dd /= n;
  if (dino_videos > 0) report.dino_sim = dino_sum / dino_videos;
  return report;
}

}  // namespace hcustom::metrics
