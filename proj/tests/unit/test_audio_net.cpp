#include <doctest.h>

#include "helpers.hpp"
#include "hcustom/audio_net.hpp"
#include "hcustom/container.hpp"
#include "hcustom/errors.hpp"

using namespace hcustom;
using namespace hcustom::audio;

namespace {

AudioTrack ramp_track(int frames, int features) {
  AudioTrack a;
  a.frames = frames;
  a.features = features;
  a.data.resize(static_cast<Eigen::Index>(frames) * kTokensPerFrame, features);
  for (int f = 0; f < frames; ++f)
    for (int t = 0; t < kTokensPerFrame; ++t)
      for (int c = 0; c < features; ++c) a.at(f, t, c) = 1000.0 * (f + 1) + 10.0 * t + c;
  return a;
}

}  // namespace

TEST_CASE("align_audio front-pads and regroups (index-loop oracle)") {
  for (int fa = 1; fa <= 24; ++fa) {
    const AudioTrack a = ramp_track(fa, 3);
    const int f = fa / 4 + 1;
    const AlignedAudio g = align_audio(a, f);
    REQUIRE(g.frames == f + 1);
    const int pad = 4 * (f + 1) - fa;
    for (int grp = 0; grp < f + 1; ++grp) {
      for (int slot = 0; slot < kGroupedTokens; ++slot) {
        const int padded_frame = grp * 4 + slot / 4;
        const int token = slot % 4;
        for (int c = 0; c < 3; ++c) {
          const double want = padded_frame < pad ? 0.0 : a.at(padded_frame - pad, token, c);
          CHECK(g.at(grp, slot, c) == want);
        }
      }
    }
  }
}

TEST_CASE("strict alignment rejects mismatched frame counts") {
  CHECK_THROWS_AS(align_audio(ramp_track(9, 2), 4), DimensionError);
  CHECK_NOTHROW(align_audio(ramp_track(9, 2), 4, false));
  CHECK_THROWS_AS(align_audio(ramp_track(30, 2), 4, false), DimensionError);
  AudioTrack bad = ramp_track(4, 2);
  bad.data(0, 0) = std::nan("");
  CHECK_THROWS_AS(align_audio(bad, 2), NumericalError);
}

TEST_CASE("lambda = 0 makes injection the exact identity") {
  ParamStore store;
  AudioInjectConfig cfg{0.0, 2, 3};
  AudioNet net(store, "a", 8, cfg, 1);
  Rng rng(2);
  const Matrix latent = rng.normal_matrix(3 * 4, 8);
  const AlignedAudio al = align_audio(ramp_track(8, 3), 3);
  AlignedAudio trimmed = al;
  trimmed.frames = 3;
  trimmed.data = al.data.bottomRows(3 * kGroupedTokens);
  CHECK(net.inject(latent, trimmed, 4) == latent);
}

TEST_CASE("each latent frame only hears its own audio group") {
  ParamStore store;
  AudioNet net(store, "a", 8, AudioInjectConfig{1.0, 2, 3}, 4);
  Rng rng(5);
  const int frames = 3, cells = 4;
  const Matrix latent = rng.normal_matrix(frames * cells, 8);
  AlignedAudio audio{frames, 3, rng.normal_matrix(frames * kGroupedTokens, 3)};
  const Matrix base = net.inject(latent, audio, cells);
  CHECK(base != latent);
  for (int g = 0; g < frames; ++g) {
    AlignedAudio p = audio;
    p.data.middleRows(g * kGroupedTokens, kGroupedTokens).array() += 1.0;
    const Matrix out = net.inject(latent, p, cells);
    for (int f = 0; f < frames; ++f) {
      const bool same = out.middleRows(f * cells, cells) == base.middleRows(f * cells, cells);
      CHECK(same == (f != g));
    }
  }
}

TEST_CASE("audio net gradients match finite differences") {
  ParamStore store;
  AudioNet net(store, "a", 4, AudioInjectConfig{0.7, 2, 3}, 6);
  Rng rng(7);
  const Matrix latent = rng.normal_matrix(2 * 3, 4);
  const Matrix audio = rng.normal_matrix(2 * kGroupedTokens, 3);
  const auto f = [&](ad::Tape& t) {
    return ad::sum_squares(net.inject(t, t.constant(latent), t.constant(audio), 2, 3));
  };
  CHECK(testing::gradient_error(store.all(), f) < 1e-5);
}

TEST_CASE("audio tracks round-trip through a container") {
  const AudioTrack a = ramp_track(5, 4);
  Container c;
  put_audio(c, "audio", a);
  const AudioTrack b = get_audio(Container::parse(c.serialize()), "audio");
  CHECK(b.frames == 5);
  CHECK(b.data == a.data);
}
