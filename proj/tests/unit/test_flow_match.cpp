#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "hcustom/container.hpp"
#include "hcustom/errors.hpp"

using namespace hcustom;
using namespace hcustom::flow;

TEST_CASE("interpolant hits both endpoints and has constant velocity") {
  Rng rng(1);
  const Matrix z0 = rng.normal_matrix(3, 2), z1 = rng.normal_matrix(3, 2);
  CHECK(interpolate(z0, z1, 0.0).z_t == z0);
  CHECK(interpolate(z0, z1, 1.0).z_t == z1);
  const auto mid = interpolate(z0, z1, 0.25);
  CHECK((mid.z_t - (0.75 * z0 + 0.25 * z1)).norm() < 1e-15);
  CHECK(mid.u_t == z1 - z0);
}

TEST_CASE("logit-normal draws stay inside (0, 1) with median sigmoid(m)") {
  for (double m : {-1.0, 0.0, 0.8}) {
    NoiseSchedule s{m, 1.2};
    Rng rng(7);
    std::vector<double> t(20001);
    for (auto& x : t) {
      x = s.sample(rng);
      REQUIRE(x > 0.0);
      REQUIRE(x < 1.0);
    }
    std::nth_element(t.begin(), t.begin() + 10000, t.end());
    CHECK(std::abs(t[10000] - 1.0 / (1.0 + std::exp(-m))) < 0.02);
  }
  CHECK_THROWS_AS((NoiseSchedule{0.0, 0.0}.validate()), ConfigError);
}

TEST_CASE("euler integrates a constant field exactly and never moves fixed rows") {
  Rng rng(2);
  const Matrix start = rng.normal_matrix(5, 3), v = rng.normal_matrix(5, 3);
  for (int steps : {1, 7, 50}) {
    const Matrix end = euler([&](const Matrix&, double) { return v; }, start, 2, steps);
    CHECK(end.topRows(2) == start.topRows(2));
    CHECK((end.bottomRows(3) - (start.bottomRows(3) + v.bottomRows(3))).norm() < 1e-12);
  }
  // dz/dt = t integrates to sum_i i/N^2 = (N-1)/(2N)
  const Matrix z = euler([](const Matrix& s, double t) { return Matrix::Constant(s.rows(), s.cols(), t); },
                         Matrix::Zero(1, 1), 0, 10);
  CHECK(z(0, 0) == doctest::Approx(0.45));
  CHECK_THROWS_AS(euler([](const Matrix& s, double) { return s; }, Matrix::Zero(1, 1), 0, 0), ConfigError);
}

TEST_CASE("loss ignores identity rows and equals |u|^2 for a fresh model") {
  const auto m = testing::tiny_model();
  model::Denoiser d(m);
  const auto ex = testing::tiny_example(m, 3);
  Rng rng(4);
  const Matrix z0 = rng.normal_matrix(ex.z1.rows(), 4);
  const double expected = (ex.z1 - z0).squaredNorm() / static_cast<double>(ex.z1.rows());
  CHECK(loss_value(d, ex, z0, 0.4) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sampling keeps identity tokens bit-identical") {
  const auto m = testing::tiny_model();
  model::Denoiser d(m);
  testing::perturb_zero_params(d.params(), 8);
  const auto ex = testing::tiny_example(m, 8);
  const SampleResult r = sample(d, ex.cond, ex.shape, {6, 9});
  REQUIRE(r.identity_rows == 4);
  CHECK(r.final_state.topRows(4) == ex.cond.identity_latents[0].data);
  CHECK(r.video_tokens().rows() == 12);
  CHECK(r.final_state.bottomRows(12) != r.initial_state.bottomRows(12));
  const SampleResult again = sample(d, ex.cond, ex.shape, {6, 9});
  CHECK(again.final_state == r.final_state);
}

TEST_CASE("training is deterministic and reduces the loss on a tiny set") {
  const auto m = testing::tiny_model();
  std::vector<Example> data = {testing::tiny_example(m, 10), testing::tiny_example(m, 11)};
  TrainOptions o;
  o.steps = 300;
  o.eval_draws = 8;
  o.seed = 5;
  o.adam.lr = 3e-3;
  model::Denoiser a(m), b(m);
  const TrainResult ra = train(a, data, o);
  const TrainResult rb = train(b, data, o);
  CHECK(ra.losses == rb.losses);
  CHECK(ra.final_eval < ra.initial_eval);
  for (const auto* p : a.params().all()) CHECK(p->value == b.params().get(p->name).value);
}

TEST_CASE("divergence raises a numerical error") {
  const auto m = testing::tiny_model();
  std::vector<Example> data = {testing::tiny_example(m, 12)};
  TrainOptions o;
  o.steps = 2;
  o.divergence_threshold = 1e-3;
  model::Denoiser d(m);
  CHECK_THROWS_AS(train(d, data, o), NumericalError);
}

TEST_CASE("checkpoints round-trip and partial weight loading matches names") {
  const auto m = testing::tiny_model(true);
  model::Denoiser d(m);
  testing::perturb_zero_params(d.params(), 13);
  codec::LatentCodec codec(testing::tiny_codec());
  const auto dir = std::filesystem::temp_directory_path() / "hcustom_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.hcar", d, codec, 42, {{"note", "x"}});
  const LoadedCheckpoint ck = load_checkpoint(dir / "a.hcar");
  CHECK(ck.step == 42);
  CHECK(ck.model->config() == m);
  CHECK(ck.codec->config() == codec.config());
  for (const auto* p : d.params().all()) CHECK(p->value == ck.model->params().get(p->name).value);
  save_checkpoint(dir / "b.hcar", *ck.model, *ck.codec, 42, {{"note", "x"}});
  CHECK(read_file(dir / "a.hcar") == read_file(dir / "b.hcar"));

  model::Denoiser plain(testing::tiny_model(false));
  load_weights(dir / "a.hcar", plain);
  for (const auto* p : plain.params().all()) CHECK(p->value == d.params().get(p->name).value);
  std::filesystem::remove_all(dir);
}

TEST_CASE("train options JSON round-trip") {
  TrainOptions o;
  o.steps = 7;
  o.batch = 3;
  o.adam.lr = 5e-4;
  o.schedule = {0.3, 0.9};
  o.seed = 99;
  o.checkpoint_every = 2;
  const TrainOptions b = nlohmann::json(o).get<TrainOptions>();
  CHECK(b.steps == 7);
  CHECK(b.batch == 3);
  CHECK(b.adam.lr == 5e-4);
  CHECK(b.schedule == o.schedule);
  CHECK(b.seed == 99);
  CHECK(b.checkpoint_every == 2);
}
