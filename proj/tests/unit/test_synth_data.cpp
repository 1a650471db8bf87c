#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hcustom/dataset.hpp"
#include "hcustom/errors.hpp"
#include "hcustom/synth_data.hpp"

using namespace hcustom;
using namespace hcustom::synth;

namespace {

SceneParams small_scene() {
  SceneParams s;
  s.frames = 9;
  s.height = 32;
  s.width = 32;
  return s;
}

}  // namespace

TEST_CASE("samples are a pure function of identity, scene and seed") {
  SpriteIdentity id{Shape::star, 3, Texture::stripes, 9, false, "object"};
  const TrainSample a = generate_sample(id, small_scene(), 21);
  const TrainSample b = generate_sample(id, small_scene(), 21);
  const TrainSample c = generate_sample(id, small_scene(), 22);
  CHECK(a.video.data == b.video.data);
  CHECK(a.audio.data == b.audio.data);
  CHECK(a.video.data != c.video.data);
}

TEST_CASE("ground truth agrees with the rendered pixels") {
  SpriteIdentity id{Shape::square, 5, Texture::solid, 8, true, "human"};
  const TrainSample s = generate_sample(id, small_scene(), 3);
  REQUIRE(s.annotation.frames.size() == 9u);
  CHECK(s.caption.find("square") != std::string::npos);
  CHECK(s.annotation.descriptors == std::vector<std::string>{"square"});
  for (const auto& fa : s.annotation.frames) {
    REQUIRE(fa.subjects.size() == 1u);
    const BBox& box = fa.subjects[0].box;
    BBox tight{32, 32, 0, 0};
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (s.mask[(static_cast<std::size_t>(fa.frame) * 32 + y) * 32 + x]) {
          tight = {std::min(tight.x0, x), std::min(tight.y0, y), std::max(tight.x1, x + 1), std::max(tight.y1, y + 1)};
        }
    CHECK(tight == box);
    REQUIRE(fa.subjects[0].face.has_value());
    CHECK(intersect(*fa.subjects[0].face, box) == *fa.subjects[0].face);
  }
  CHECK(s.audio.frames == 9);
  CHECK(s.identity_images.size() == 1u);
  CHECK(s.identity_images[0].frames == 1);
}

TEST_CASE("sprite scale follows the audio envelope") {
  SpriteIdentity id{Shape::circle, 0, Texture::solid, 10, false, "object"};
  SceneParams sc = small_scene();
  sc.frames = 17;
  sc.height = sc.width = 64;
  const TrainSample s = generate_sample(id, sc, 5);
  std::vector<double> area, energy;
  for (int f = 0; f < sc.frames; ++f) {
    double a = 0;
    for (int i = 0; i < 64 * 64; ++i) a += s.mask[static_cast<std::size_t>(f) * 64 * 64 + i];
    area.push_back(a);
    double e = 0;
    for (int t = 0; t < 4; ++t) e += std::abs(s.audio.at(f, t, 0));
    energy.push_back(e);
  }
  double ma = 0, me = 0;
  for (int f = 0; f < sc.frames; ++f) {
    ma += area[f] / sc.frames;
    me += energy[f] / sc.frames;
  }
  double cov = 0, va = 0, ve = 0;
  for (int f = 0; f < sc.frames; ++f) {
    cov += (area[f] - ma) * (energy[f] - me);
    va += (area[f] - ma) * (area[f] - ma);
    ve += (energy[f] - me) * (energy[f] - me);
  }
  CHECK(cov / std::sqrt(va * ve) > 0.8);
}

TEST_CASE("multi-subject identities have distinct shapes") {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto ids = random_identities(rng, 3);
    CHECK(ids[0].shape != ids[1].shape);
    CHECK(ids[1].shape != ids[2].shape);
    CHECK(ids[0].shape != ids[2].shape);
  }
  CHECK_THROWS_AS(random_identities(rng, 5), ConfigError);
}

TEST_CASE("hsv conversion round-trips") {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const double h = rng.uniform(0, 0.999), s = rng.uniform(0.05, 1), v = rng.uniform(0.05, 1);
    double rgb[3], h2, s2, v2;
    hsv_to_rgb(h, s, v, rgb);
    rgb_to_hsv(rgb, h2, s2, v2);
    CHECK(std::abs(s - s2) < 1e-9);
    CHECK(std::abs(v - v2) < 1e-9);
    CHECK(std::min(std::abs(h - h2), 1 - std::abs(h - h2)) < 1e-9);
  }
}

TEST_CASE("sprite geometry") {
  CHECK(sprite_contains(Shape::circle, 0, 0, 5));
  CHECK_FALSE(sprite_contains(Shape::circle, 4, 4, 5));
  CHECK(sprite_contains(Shape::square, 4, 4, 5));
  CHECK_FALSE(sprite_contains(Shape::triangle, 0, -5.5, 5));
  CHECK(sprite_contains(Shape::star, 0, 0, 5));
}

TEST_CASE("datasets round-trip through disk") {
  const auto dir = std::filesystem::temp_directory_path() / "hcustom_dataset_test";
  std::filesystem::remove_all(dir);
  GenerateOptions o;
  o.count = 3;
  o.seed = 12;
  o.subjects = 2;
  o.scene = small_scene();
  const Manifest m = generate_dataset(dir, o);
  CHECK(m.samples.size() == 3u);
  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == 3u);
  for (int i = 0; i < 3; ++i) {
    const TrainSample direct = generate_indexed(o, i);
    CHECK(loaded[i].id == direct.id);
    CHECK(loaded[i].video.data == direct.video.data);
    CHECK(loaded[i].identity_images.size() == 2u);
    CHECK(loaded[i].mask == direct.mask);
    CHECK(loaded[i].audio.data == direct.audio.data);
    CHECK(loaded[i].identities == direct.identities);
    CHECK(loaded[i].caption == direct.caption);
  }
  std::filesystem::remove_all(dir);
}
