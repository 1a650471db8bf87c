#include <doctest.h>

#include <filesystem>

#include "helpers.hpp"
#include "hcustom/container.hpp"
#include "hcustom/errors.hpp"

using namespace hcustom;
using namespace hcustom::codec;

TEST_CASE("frame count law f = floor(f'/4) + 1 and its inverse") {
  LatentCodec codec(testing::tiny_codec());
  for (int fp = 1; fp <= 40; ++fp) {
    const LatentVideo z = codec.encode(PixelVideo::filled(fp, 8, 8, 0.3f));
    CHECK(z.frames == fp / 4 + 1);
    CHECK(latent_frame_count(fp) == fp / 4 + 1);
  }
  for (int f = 1; f <= 10; ++f) CHECK(latent_frame_count(pixel_frame_count(f)) == f);
  CHECK_THROWS_AS(latent_frame_count(0), DimensionError);
}

TEST_CASE("encoding is causal: a frame only influences its own and later latent frames") {
  LatentCodec codec(testing::tiny_codec());
  const PixelVideo base = testing::random_video(16, 16, 16, 5);
  const LatentVideo z0 = codec.encode(base);
  for (int j = 0; j < base.frames; ++j) {
    PixelVideo p = base;
    for (int y = 0; y < 16; ++y) p.at(j, y, 3, 1) += 0.25f;
    const LatentVideo z = codec.encode(p);
    const int own = j == 0 ? 0 : (j - 1) / 4 + 1;
    const auto cells = z.cells_per_frame();
    for (int k = 0; k < z.frames; ++k) {
      const bool same = z.data.middleRows(k * cells, cells) == z0.data.middleRows(k * cells, cells);
      if (k < own) CHECK(same);
      if (k == own) CHECK_FALSE(same);
    }
  }
}

TEST_CASE("decode restores the pixel frame count and grid") {
  LatentCodec codec(testing::tiny_codec());
  const PixelVideo v = testing::random_video(9, 16, 24, 2);
  const PixelVideo d = codec.decode(codec.encode(v));
  CHECK(d.frames == 9);
  CHECK(d.height == 16);
  CHECK(d.width == 24);
  for (float x : d.data) CHECK((x >= 0.0f && x <= 1.0f));
}

TEST_CASE("training reduces reconstruction error and normalises latents") {
  LatentCodec codec(testing::tiny_codec());
  std::vector<PixelVideo> vids;
  for (int i = 0; i < 3; ++i) {
    PixelVideo v = PixelVideo::filled(5, 16, 16, 0.0f);
    for (int f = 0; f < 5; ++f)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
          for (int c = 0; c < 3; ++c) v.at(f, y, x, c) = 0.5f + 0.3f * std::sin(0.3f * (x + i * y) + c + 0.1f * f);
    vids.push_back(v);
  }
  CodecTrainConfig tc;
  tc.steps = 300;
  tc.batch = 32;
  const auto report = codec.train(vids, tc);
  CHECK(report.final_loss < report.initial_loss);
  Matrix all(0, 4);
  for (const auto& v : vids) {
    const Matrix z = codec.encode(v).data;
    Matrix grown(all.rows() + z.rows(), 4);
    grown << all, z;
    all = grown;
  }
  const RowVector mean = all.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("tokenize and untokenize are inverse; positions follow (t, y, x)") {
  LatentCodec codec(testing::tiny_codec());
  const LatentVideo z = codec.encode(testing::random_video(5, 16, 24, 8));
  const auto [tokens, positions] = tokenize(z);
  REQUIRE(tokens.length() == 2 * 2 * 3);
  CHECK(positions[0] == rope::PositionTriple{0, 0, 0});
  CHECK(positions[1] == rope::PositionTriple{0, 1, 0});
  CHECK(positions[3] == rope::PositionTriple{0, 0, 1});
  CHECK(positions[6] == rope::PositionTriple{1, 0, 0});
  for (const auto& l : tokens.labels) CHECK(l.kind == SegmentKind::video);
  const LatentVideo back = untokenize(tokens, z.frames, z.height, z.width, z.spatial_factor);
  CHECK(back.data == z.data);
}

TEST_CASE("codec and video containers round-trip exactly") {
  LatentCodec codec(testing::tiny_codec());
  Container c;
  codec.save(c);
  const LatentCodec back = LatentCodec::load(Container::parse(c.serialize()));
  CHECK(back.config() == codec.config());
  const PixelVideo v = testing::random_video(5, 8, 8, 4);
  CHECK(back.encode(v).data == codec.encode(v).data);

  const auto path = std::filesystem::temp_directory_path() / "hcustom_video_roundtrip.hcar";
  PixelVideo w = v;
  w.fps = 12.5;
  save_video(path, w);
  const PixelVideo r = load_video(path);
  CHECK(r.data == w.data);
  CHECK(r.fps == 12.5);
  std::filesystem::remove(path);
}

TEST_CASE("codec rejects bad inputs") {
  LatentCodec codec(testing::tiny_codec());
  CHECK_THROWS_AS(codec.encode(PixelVideo::filled(3, 12, 16, 0.f)), DimensionError);
  LatentVideo z = codec.encode(PixelVideo::filled(1, 8, 8, 0.f));
  z.channels = 7;
  CHECK_THROWS_AS(codec.decode(z), ConfigError);
  CodecConfig bad = testing::tiny_codec();
  bad.spatial_factor = 0;
  CHECK_THROWS_AS(LatentCodec{bad}, ConfigError);
  CHECK_THROWS_AS(Container::parse("nope"), IoError);
}
