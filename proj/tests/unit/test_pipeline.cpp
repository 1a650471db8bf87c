#include <doctest.h>

#include <algorithm>
#include <optional>

#include "hcustom/errors.hpp"
#include "hcustom/pipeline.hpp"

using namespace hcustom;
using namespace hcustom::pipeline;
using synth::AnnotationRecord;

namespace {

AnnotationRecord track_record(const std::vector<std::pair<int, int>>& frame_ids) {
  AnnotationRecord r;
  r.clip_id = "c";
  r.width = r.height = 64;
  int last = -1;
  for (const auto& [frame, id] : frame_ids) {
    if (frame != last) r.frames.push_back({frame, {}});
    last = frame;
    r.frames.back().subjects.push_back({id, BBox{0, 0, 10, 10}, std::nullopt});
  }
  return r;
}

long long covered(const BBox& crop, const BBox& u) {
  long long n = 0;
  for (int y = u.y0; y < u.y1; ++y)
    for (int x = u.x0; x < u.x1; ++x) n += (x >= crop.x0 && x < crop.x1 && y >= crop.y0 && y < crop.y1);
  return n;
}

}  // namespace

TEST_CASE("main subject requires at least min_frames frames") {
  std::vector<std::pair<int, int>> ids;
  for (int f = 0; f < 50; ++f) ids.push_back({f, 7});
  CHECK(select_main_subject(track_record(ids)) == std::vector<int>{7});
  ids.pop_back();
  CHECK_FALSE(select_main_subject(track_record(ids)).has_value());
}

TEST_CASE("linked ids merge into one track; ties go to the lowest id") {
  std::vector<std::pair<int, int>> ids;
  for (int f = 0; f < 30; ++f) ids.push_back({f, 4});
  for (int f = 30; f < 60; ++f) ids.push_back({f, 9});
  for (int f = 0; f < 40; ++f) ids.push_back({f, 2});
  AnnotationRecord r = track_record(ids);
  std::sort(r.frames.begin(), r.frames.end(), [](auto& a, auto& b) { return a.frame < b.frame; });
  CHECK_FALSE(select_main_subject(r, 50).has_value());
  r.id_links.push_back({9, 4});
  CHECK(select_main_subject(r, 50) == std::vector<int>{4, 9});

  std::vector<std::pair<int, int>> tie;
  for (int f = 0; f < 10; ++f) {
    tie.push_back({f, 5});
    tie.push_back({f, 3});
  }
  CHECK(select_main_subject(track_record(tie), 10) == std::vector<int>{3});
}

TEST_CASE("face-in-body ratio boundary at 0.5") {
  const BBox face{0, 0, 10, 10};
  CHECK(validate_face_in_body(face, BBox{5, 0, 20, 20}));        // exactly half
  CHECK_FALSE(validate_face_in_body(face, BBox{6, 0, 20, 20}));  // 0.4
  CHECK(validate_face_in_body(face, BBox{-5, -5, 30, 30}));
  CHECK_THROWS_AS(validate_face_in_body(BBox{3, 3, 3, 9}, face), ValidationError);
}

TEST_CASE("bbox size boundary at 0.3 of the frame on both axes") {
  CHECK(validate_bbox_size(BBox{0, 0, 30, 30}, 100, 100));
  CHECK_FALSE(validate_bbox_size(BBox{0, 0, 29, 30}, 100, 100));
  CHECK_FALSE(validate_bbox_size(BBox{0, 0, 30, 29}, 100, 100));
  CHECK(validate_bbox_size(BBox{0, 0, 30, 60}, 100, 200));
}

TEST_CASE("score filters pass at the threshold and reject just below") {
  AnnotationRecord r;
  r.koala = 0.06;
  r.sync = 3.0;
  r.iqa = 40.0;
  CHECK(passes_filters(r));
  for (int which = 0; which < 3; ++which) {
    AnnotationRecord low = r;
    if (which == 0) low.koala = 0.0599;
    if (which == 1) low.sync = 2.999;
    if (which == 2) low.iqa = 39.99;
    CHECK_FALSE(passes_filters(low));
  }
  AnnotationRecord missing;
  CHECK(passes_filters(missing));
}

TEST_CASE("raising thresholds never admits a rejected record") {
  Rng rng(3);
  std::vector<AnnotationRecord> recs(200);
  for (auto& r : recs) {
    r.koala = rng.uniform(0, 0.12);
    r.sync = rng.uniform(0, 8);
    r.iqa = rng.uniform(20, 70);
  }
  FilterThresholds lo, hi{0.08, 4.0, 45.0};
  const auto a = filter_clips(recs, lo);
  const auto b = filter_clips(recs, hi);
  CHECK(b.size() <= a.size());
  for (const auto& r : b) CHECK(passes_filters(r, lo));
}

TEST_CASE("coverage crop: largest crop that keeps >= 70% of the union box (pixel-count oracle)") {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const int W = rng.uniform_int(20, 90), H = rng.uniform_int(20, 90);
    std::vector<BBox> boxes;
    for (int k = 0; k < rng.uniform_int(1, 3); ++k) {
      const int x0 = rng.uniform_int(0, W - 2), y0 = rng.uniform_int(0, H - 2);
      boxes.push_back({x0, y0, rng.uniform_int(x0 + 1, W), rng.uniform_int(y0 + 1, H)});
    }
    const BBox u = union_box(boxes);
    for (Aspect a : {Aspect::square, Aspect::three_four, Aspect::nine_sixteen}) {
      const auto [aw, ah] = aspect_ratio(a);
      // Oracle: centred candidates of decreasing size, coverage by pixel counting.
      std::optional<BBox> want;
      for (int n = std::min(W / aw, H / ah); n >= 1 && !want; --n) {
        const int cw = aw * n, ch = ah * n;
        const int cx2 = u.x0 + u.x1, cy2 = u.y0 + u.y1;
        int x0 = (cx2 - cw) >= 0 ? (cx2 - cw) / 2 : -((cw - cx2 + 1) / 2);
        int y0 = (cy2 - ch) >= 0 ? (cy2 - ch) / 2 : -((ch - cy2 + 1) / 2);
        x0 = std::clamp(x0, 0, W - cw);
        y0 = std::clamp(y0, 0, H - ch);
        const BBox c{x0, y0, x0 + cw, y0 + ch};
        if (covered(c, u) >= 0.7 * u.area()) want = c;
      }
      if (want) {
        const BBox crop = crop_with_coverage(boxes, W, H, a);
        CHECK(crop == *want);
        CHECK(crop.x0 >= 0);
        CHECK(crop.y0 >= 0);
        CHECK(crop.x1 <= W);
        CHECK(crop.y1 <= H);
        CHECK(crop.width() * ah == crop.height() * aw);
      } else {
        CHECK_THROWS_AS(crop_with_coverage(boxes, W, H, a), ValidationError);
      }
    }
  }
}

TEST_CASE("coverage crop is centred on the union box when it fits") {
  const BBox b[] = {{40, 40, 60, 60}};
  const BBox crop = crop_with_coverage(b, 100, 100, Aspect::square);
  CHECK(crop == BBox{0, 0, 100, 100});
  const BBox small = crop_with_coverage(b, 100, 120, Aspect::nine_sixteen);
  CHECK(small.width() * 16 == small.height() * 9);
  CHECK(small.height() <= 120);
}

TEST_CASE("dilation matches a brute-force square window; to_bbox fills the hull") {
  Rng rng(6);
  Mask m{12, 15, std::vector<std::uint8_t>(180, 0)};
  for (auto& v : m.data) v = rng.uniform() < 0.08;
  for (int r = 0; r <= 3; ++r) {
    const Mask d = augment_mask(m, MaskAugment::dilate, r);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 15; ++x) {
        int want = 0;
        for (int yy = y - r; yy <= y + r; ++yy)
          for (int xx = x - r; xx <= x + r; ++xx)
            if (yy >= 0 && yy < 12 && xx >= 0 && xx < 15 && m.at(yy, xx)) want = 1;
        CHECK(d.at(y, x) == want);
      }
  }
  CHECK(augment_mask(m, MaskAugment::dilate, 0) == m);
  Mask dot{5, 5, std::vector<std::uint8_t>(25, 0)};
  dot.at(1, 1) = dot.at(3, 2) = 1;
  const Mask hull = augment_mask(dot, MaskAugment::to_bbox);
  int n = 0;
  for (auto v : hull.data) n += v;
  CHECK(n == 3 * 2);
}

TEST_CASE("resolution standardisation") {
  codec::PixelVideo v = codec::PixelVideo::filled(2, 40, 80, 0.25f);
  CHECK(resize(v, 40, 80).data == v.data);
  const codec::PixelVideo r = resize_short_side(v, 64);
  CHECK(r.height == 64);
  CHECK(r.width == 128);
  for (float x : r.data) CHECK(x == doctest::Approx(0.25f));
  const codec::PixelVideo sq = standardize_resolution(v, 64, Aspect::square);
  CHECK(sq.height == 64);
  CHECK(sq.width == 64);
  const codec::PixelVideo tall = standardize_resolution(codec::PixelVideo::filled(1, 90, 40, 0.1f), 64, Aspect::nine_sixteen);
  CHECK(tall.width == 64);
  CHECK(tall.height == 114);  // round(64 * 16 / 9), portrait kept
}
