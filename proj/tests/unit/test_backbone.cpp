#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hcustom/backbone.hpp"
#include "hcustom/errors.hpp"

using namespace hcustom;
using namespace hcustom::backbone;

TEST_CASE("concat_identity puts identity blocks first with shifted negative-time positions") {
  codec::LatentVideo v{3, 2, 3, 4, 8, Matrix::Random(18, 4)};
  std::vector<codec::LatentVideo> ids = {{1, 2, 3, 4, 8, Matrix::Random(6, 4)}, {1, 2, 3, 4, 8, Matrix::Random(6, 4)}};
  const auto [seq, pos] = concat_identity(v, ids);
  REQUIRE(seq.length() == 30);
  CHECK(seq.embeddings.topRows(6) == ids[0].data);
  CHECK(seq.embeddings.middleRows(6, 6) == ids[1].data);
  CHECK(seq.embeddings.bottomRows(18) == v.data);
  CHECK(seq.labels[0] == SegmentLabel{SegmentKind::identity, 1});
  CHECK(seq.labels[6] == SegmentLabel{SegmentKind::identity, 2});
  CHECK(seq.labels[12] == SegmentLabel{SegmentKind::video, 0});
  CHECK(pos[0] == rope::PositionTriple{-1, 3, 2});
  CHECK(pos[6] == rope::PositionTriple{-2, 3, 2});
  CHECK(pos[12] == rope::PositionTriple{0, 0, 0});
  ids[1].frames = 2;
  CHECK_THROWS_AS(concat_identity(v, ids), DimensionError);
}

TEST_CASE("timestep features are cos/sin pairs") {
  const Matrix f0 = timestep_features(0.0, 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(f0(0, i) == 1.0);
    CHECK(f0(0, 4 + i) == 0.0);
  }
  const Matrix f = timestep_features(0.37, 8);
  for (int i = 0; i < 4; ++i) CHECK(f(0, i) * f(0, i) + f(0, 4 + i) * f(0, 4 + i) == doctest::Approx(1.0));
}

TEST_CASE("fresh backbone outputs exactly zero velocity") {
  ParamStore store;
  BackboneConfig c = testing::tiny_model().backbone;
  Backbone net(store, c, 3);
  Rng rng(1);
  const auto grid = rope::video_positions(2, 2, 2);
  ad::Tape tape(false);
  ForwardInputs in{tape.constant(rng.normal_matrix(8, 4)), &grid, tape.constant(rng.normal_matrix(5, 8)), 0.4, {}};
  const Matrix v = net.forward(tape, in).value();
  CHECK(v.rows() == 8);
  CHECK(v.cols() == 4);
  CHECK(v.isZero(0.0));
}

TEST_CASE("backbone gradients match finite differences, with and without text") {
  ParamStore store;
  Backbone net(store, testing::tiny_model().backbone, 4);
  testing::perturb_zero_params(store, 5);
  Rng rng(6);
  const auto grid = rope::video_positions(2, 2, 1);
  const Matrix x = rng.normal_matrix(4, 4), text = rng.normal_matrix(3, 8);
  for (bool with_text : {true, false}) {
    const auto f = [&](ad::Tape& t) {
      ForwardInputs in{t.constant(x), &grid, with_text ? t.constant(text) : ad::Var{}, 0.3, {}};
      return ad::sum_squares(net.forward(t, in));
    };
    CHECK(testing::gradient_error(store.all(), f) < 1e-5);
  }
}

TEST_CASE("backbone config validation and JSON round-trip") {
  BackboneConfig c = testing::tiny_model().backbone;
  const BackboneConfig back = nlohmann::json(c).get<BackboneConfig>();
  CHECK(back == c);
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = testing::tiny_model().backbone;
  c.freq_dim = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
