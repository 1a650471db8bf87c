#include "hcustom/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "hcustom/errors.hpp"

namespace hcustom::pipeline {

namespace {

class UnionFind {
 public:
  int find(int x) {
    auto it = parent_.try_emplace(x, x).first;
    if (it->second == x) return x;
    const int root = find(it->second);
    parent_[x] = root;
    return root;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);  // root is always the lowest id
  }
  const std::map<int, int>& parents() const { return parent_; }

 private:
  std::map<int, int> parent_;
};

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

}  // namespace

std::optional<std::vector<int>> select_main_subject(const AnnotationRecord& record, int min_frames) {
  UnionFind uf;
  for (const auto& f : record.frames) {
    for (const auto& d : f.subjects) uf.find(d.subject_id);
  }
  for (const auto& [a, b] : record.id_links) uf.unite(a, b);

  std::map<int, std::set<int>> frames_of;  // root -> frames
  for (const auto& f : record.frames) {
    for (const auto& d : f.subjects) frames_of[uf.find(d.subject_id)].insert(f.frame);
  }
  int best = -1;
  std::size_t best_count = 0;
  for (const auto& [root, frames] : frames_of) {  // ascending root: first max wins ties
    if (frames.size() > best_count) {
      best = root;
      best_count = frames.size();
    }
  }
  if (best < 0 || best_count < static_cast<std::size_t>(std::max(min_frames, 0))) return std::nullopt;
  std::vector<int> ids;
  for (const auto& [id, _] : uf.parents()) {
    if (uf.find(id) == best) ids.push_back(id);
  }
  return ids;
}

bool validate_face_in_body(const BBox& face, const BBox& body, double threshold) {
  if (!face.valid() || !body.valid()) throw ValidationError("validate_face_in_body: degenerate box");
  const double ratio = static_cast<double>(synth::intersect(face, body).area()) / static_cast<double>(face.area());
  return ratio >= threshold;
}

bool validate_bbox_size(const BBox& box, int frame_width, int frame_height, double ratio) {
  if (!box.valid()) throw ValidationError("validate_bbox_size: degenerate box");
  return box.width() >= ratio * frame_width && box.height() >= ratio * frame_height;
}

std::string to_string(Aspect a) {
  switch (a) {
    case Aspect::square: return "1:1";
    case Aspect::three_four: return "3:4";
    case Aspect::nine_sixteen: return "9:16";
  }
  return "?";
}

Aspect aspect_from_string(std::string_view s) {
  if (s == "1:1") return Aspect::square;
  if (s == "3:4") return Aspect::three_four;
  if (s == "9:16") return Aspect::nine_sixteen;
  throw ConfigError("aspect", "expected 1:1|3:4|9:16, got '" + std::string(s) + "'");
}

std::pair<int, int> aspect_ratio(Aspect a) {
  switch (a) {
    case Aspect::square: return {1, 1};
    case Aspect::three_four: return {3, 4};
    case Aspect::nine_sixteen: return {9, 16};
  }
  return {1, 1};
}

BBox union_box(std::span<const BBox> boxes) {
  if (boxes.empty()) throw ValidationError("union_box: no boxes");
  BBox u = boxes[0];
  for (const auto& b : boxes) {
    if (!b.valid()) throw ValidationError("union_box: degenerate box");
    u.x0 = std::min(u.x0, b.x0);
    u.y0 = std::min(u.y0, b.y0);
    u.x1 = std::max(u.x1, b.x1);
    u.y1 = std::max(u.y1, b.y1);
  }
  return u;
}

BBox crop_with_coverage(std::span<const BBox> boxes, int frame_width, int frame_height, Aspect aspect,
                        double coverage) {
  if (frame_width < 1 || frame_height < 1) throw ValidationError("crop_with_coverage: empty frame");
  const BBox u = union_box(boxes);
  const BBox frame{0, 0, frame_width, frame_height};
  const long long target_area = u.area();
  const auto [a, b] = aspect_ratio(aspect);
  for (int n = std::min(frame_width / a, frame_height / b); n >= 1; --n) {
    const int cw = a * n;
    const int ch = b * n;
    const int x0 = std::clamp(floor_div(u.x0 + u.x1 - cw, 2), 0, frame_width - cw);
    const int y0 = std::clamp(floor_div(u.y0 + u.y1 - ch, 2), 0, frame_height - ch);
    const BBox crop{x0, y0, x0 + cw, y0 + ch};
    const long long kept = synth::intersect(synth::intersect(crop, u), frame).area();
    if (static_cast<double>(kept) >= coverage * static_cast<double>(target_area)) return crop;
  }
  throw ValidationError("crop_with_coverage: no " + to_string(aspect) + " crop keeps " +
                        std::to_string(coverage) + " of the union box");
}

Mask augment_mask(const Mask& mask, MaskAugment mode, int radius) {
  if (mask.data.size() != static_cast<std::size_t>(mask.height) * mask.width) {
    throw DimensionError("augment_mask: data size does not match height x width");
  }
  Mask out{mask.height, mask.width, std::vector<std::uint8_t>(mask.data.size(), 0)};
  if (mode == MaskAugment::to_bbox) {
    int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height; ++y) {
      for (int x = 0; x < mask.width; ++x) {
        if (!mask.at(y, x)) continue;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) out.at(y, x) = 1;
    }
    return out;
  }
  if (radius < 0) throw ValidationError("augment_mask: radius must be >= 0");
  // Separable: a square element is the product of two 1-D windows.
  Mask rows{mask.height, mask.width, std::vector<std::uint8_t>(mask.data.size(), 0)};
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      for (int xx = std::max(0, x - radius); xx <= std::min(mask.width - 1, x + radius); ++xx) rows.at(y, xx) = 1;
    }
  }
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!rows.at(y, x)) continue;
      for (int yy = std::max(0, y - radius); yy <= std::min(mask.height - 1, y + radius); ++yy) out.at(yy, x) = 1;
    }
  }
  return out;
}

std::vector<std::uint8_t> augment_video_mask(std::span<const std::uint8_t> mask, int frames, int height, int width,
                                             MaskAugment mode, int radius) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (mask.size() != plane * frames) throw DimensionError("augment_video_mask: size mismatch");
  std::vector<std::uint8_t> out;
  out.reserve(mask.size());
  for (int f = 0; f < frames; ++f) {
    Mask m{height, width, std::vector<std::uint8_t>(mask.begin() + f * plane, mask.begin() + (f + 1) * plane)};
    const Mask a = augment_mask(m, mode, radius);
    out.insert(out.end(), a.data.begin(), a.data.end());
  }
  return out;
}

bool passes_filters(const AnnotationRecord& r, const FilterThresholds& t) {
  if (r.koala && *r.koala < t.koala_min) return false;
  if (r.sync && *r.sync < t.sync_min) return false;
  if (r.iqa && *r.iqa < t.iqa_min) return false;
  return true;
}

std::vector<AnnotationRecord> filter_clips(std::span<const AnnotationRecord> records, const FilterThresholds& t) {
  std::vector<AnnotationRecord> out;
  for (const auto& r : records) {
    if (passes_filters(r, t)) out.push_back(r);
  }
  return out;
}

codec::PixelVideo resize(const codec::PixelVideo& video, int height, int width) {
  video.validate();
  if (height < 1 || width < 1) throw DimensionError("resize: target must be at least 1x1");
  if (height == video.height && width == video.width) return video;
  codec::PixelVideo out = codec::PixelVideo::filled(video.frames, height, width, 0.0f);
  out.fps = video.fps;
  const double sy = static_cast<double>(video.height) / height;
  const double sx = static_cast<double>(video.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, video.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, video.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, video.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, video.width - 1);
      const double wx = fx - x0;
      for (int f = 0; f < video.frames; ++f) {
        for (int c = 0; c < 3; ++c) {
          const double top = (1 - wx) * video.at(f, y0, x0, c) + wx * video.at(f, y0, x1, c);
          const double bot = (1 - wx) * video.at(f, y1, x0, c) + wx * video.at(f, y1, x1, c);
          out.at(f, y, x, c) = static_cast<float>((1 - wy) * top + wy * bot);
        }
      }
    }
  }
  return out;
}

codec::PixelVideo resize_short_side(const codec::PixelVideo& video, int short_side) {
  if (short_side < 1) throw ConfigError("short_side", "must be >= 1");
  const int s = std::min(video.height, video.width);
  const int h = static_cast<int>(std::lround(static_cast<double>(video.height) * short_side / s));
  const int w = static_cast<int>(std::lround(static_cast<double>(video.width) * short_side / s));
  return resize(video, video.height == s ? short_side : h, video.width == s ? short_side : w);
}

codec::PixelVideo standardize_resolution(const codec::PixelVideo& video, int short_side, Aspect aspect) {
  const codec::PixelVideo r = resize_short_side(video, short_side);
  const auto [a, b] = aspect_ratio(aspect);
  // a:b is short:long; orientation follows the input.
  const int lo = std::min(a, b), hi = std::max(a, b);
  const int long_side = static_cast<int>(std::lround(static_cast<double>(short_side) * hi / lo));
  const bool portrait = r.height > r.width;
  const int th = portrait ? long_side : short_side;
  const int tw = portrait ? short_side : long_side;
  if (th == r.height && tw == r.width) return r;
  codec::PixelVideo out = codec::PixelVideo::filled(r.frames, th, tw, 0.5f);
  out.fps = r.fps;
  const int oy = (r.height - th) / 2;  // > 0 crops, < 0 pads
  const int ox = (r.width - tw) / 2;
  for (int f = 0; f < r.frames; ++f) {
    for (int y = 0; y < th; ++y) {
      const int sy = y + oy;
      if (sy < 0 || sy >= r.height) continue;
      for (int x = 0; x < tw; ++x) {
        const int sx = x + ox;
        if (sx < 0 || sx >= r.width) continue;
        for (int c = 0; c < 3; ++c) out.at(f, y, x, c) = r.at(f, sy, sx, c);
      }
    }
  }
  return out;
}

}  // namespace hcustom::pipeline
