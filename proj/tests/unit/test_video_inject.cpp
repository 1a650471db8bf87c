#include <doctest.h>

#include "helpers.hpp"
#include "hcustom/errors.hpp"
#include "hcustom/video_inject.hpp"

using namespace hcustom;
using namespace hcustom::video;

TEST_CASE("add mode with zero condition features is the identity") {
  ParamStore store;
  AlignmentNet align(store, 4, 8, 1);
  // make the net non-trivial so the check exercises more than a zero last layer
  Rng rng(2);
  store.get("video.align.w4").value = rng.normal_matrix(8, 4);
  ad::Tape t(false);
  const Matrix latent = rng.normal_matrix(5 + 12, 4);
  const ad::Var out = inject_video(t, t.constant(latent), t.constant(Matrix::Zero(12, 4)), 5, InjectMode::add, &align,
                                   nullptr);
  CHECK(out.value() == latent);
}

TEST_CASE("identity rows pass through both modes untouched; token count never grows") {
  ParamStore store;
  AlignmentNet align(store, 4, 8, 3);
  ConcatCompressor compress(store, 4);
  Rng rng(4);
  store.get("video.align.w4").value = rng.normal_matrix(8, 4);
  store.get("video.concat.w").value = rng.normal_matrix(8, 4);
  const Matrix latent = rng.normal_matrix(6 + 10, 4);
  const Matrix cond = rng.normal_matrix(10, 4);
  for (InjectMode m : {InjectMode::add, InjectMode::concat}) {
    ad::Tape t(false);
    const Matrix out = inject_video(t, t.constant(latent), t.constant(cond), 6, m, &align, &compress).value();
    CHECK(out.rows() == latent.rows());
    CHECK(out.topRows(6) == latent.topRows(6));
    CHECK(out.bottomRows(10) != latent.bottomRows(10));
  }
}

TEST_CASE("concat compressor starts as the latent passthrough") {
  ParamStore store;
  ConcatCompressor compress(store, 3);
  Rng rng(5);
  const Matrix latent = rng.normal_matrix(4, 3), cond = rng.normal_matrix(4, 3);
  ad::Tape t(false);
  CHECK(compress.apply(t, t.constant(latent), t.constant(cond)).value() == latent);
}

TEST_CASE("alignment net gradients match finite differences") {
  ParamStore store;
  AlignmentNet align(store, 3, 5, 6);
  Rng rng(7);
  store.get("video.align.w4").value = rng.normal_matrix(5, 3);
  const Matrix cond = rng.normal_matrix(6, 3), latent = rng.normal_matrix(8, 3);
  const auto f = [&](ad::Tape& t) {
    return ad::sum_squares(inject_video(t, t.constant(latent), t.constant(cond), 2, InjectMode::add, &align, nullptr));
  };
  CHECK(testing::gradient_error(store.all(), f) < 1e-6);
}

TEST_CASE("condition encoding blanks masked pixels to gray") {
  codec::LatentCodec codec(testing::tiny_codec());
  const codec::PixelVideo v = testing::random_video(5, 16, 16, 8);
  std::vector<std::uint8_t> keep(5 * 16 * 16, 1);
  const Matrix full = encode_condition({v, keep}, codec).embeddings;
  CHECK(full == encode_condition({v, std::nullopt}, codec).embeddings);
  std::fill(keep.begin(), keep.end(), 0);
  const Matrix blank = encode_condition({v, keep}, codec).embeddings;
  CHECK(blank == codec.encode(codec::PixelVideo::filled(5, 16, 16, kBlankValue)).data);
  keep.pop_back();
  CHECK_THROWS_AS(encode_condition({v, keep}, codec), DimensionError);
}

TEST_CASE("mismatched condition frames are rejected") {
  ParamStore store;
  AlignmentNet align(store, 4, 8, 1);
  ad::Tape t(false);
  CHECK_THROWS_AS(inject_video(t, t.constant(Matrix::Zero(10, 4)), t.constant(Matrix::Zero(9, 4)), 0, InjectMode::add,
                               &align, nullptr),
                  DimensionError);
  CHECK_THROWS_AS(inject_mode_from_string("blend"), ConfigError);
}
