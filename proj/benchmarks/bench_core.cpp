// Microbenchmarks for the hot paths of training and sampling.

#include <benchmark/benchmark.h>

#include "hcustom/audio_net.hpp"
#include "hcustom/autodiff.hpp"
#include "hcustom/denoiser.hpp"
#include "hcustom/flow_match.hpp"
#include "hcustom/latent_codec.hpp"
#include "hcustom/rope3d.hpp"

using namespace hcustom;

namespace {

codec::PixelVideo noise_video(int frames, int size, std::uint64_t seed) {
  Rng rng(seed);
  auto v = codec::PixelVideo::filled(frames, size, size, 0.0f);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform());
  return v;
}

model::ModelConfig model_config(int width) {
  model::ModelConfig m;
  m.backbone.width = width;
  m.backbone.heads = 4;
  m.backbone.blocks = 2;
  m.backbone.text_width = 64;
  m.backbone.freq_dim = 32;
  m.backbone.latent_channels = 16;
  m.backbone.input_channels = 16;
  m.normalize();
  return m;
}

// A 64x64x33 clip: 9 x 8 x 8 latent plus one 8x8 identity block.
flow::Example clip_example(std::uint64_t seed) {
  Rng rng(seed);
  flow::Example ex;
  ex.id = "bench";
  ex.shape = {9, 8, 8, 16};
  ex.z1 = rng.normal_matrix(ex.shape.video_rows(), 16);
  ex.cond.prompt = "A circle drifts across the scene";
  ex.cond.subjects.push_back({"circle", noise_video(1, 64, seed + 1)});
  codec::LatentVideo id;
  id.frames = 1;
  id.height = id.width = 8;
  id.channels = 16;
  id.spatial_factor = 8;
  id.data = rng.normal_matrix(64, 16);
  ex.cond.identity_latents.push_back(id);
  return ex;
}

void BM_Attention(benchmark::State& state) {
  const auto rows = static_cast<Eigen::Index>(state.range(0));
  Rng rng(1);
  const Matrix q = rng.normal_matrix(rows, 64), k = rng.normal_matrix(rows, 64), v = rng.normal_matrix(rows, 64);
  for (auto _ : state) {
    ad::Tape tape;
    ad::Var out = ad::attention(tape.constant(q), tape.constant(k), tape.constant(v), 4);
    benchmark::DoNotOptimize(out.value().data());
  }
  state.SetItemsProcessed(state.iterations() * rows * rows);
}
BENCHMARK(BM_Attention)->Arg(128)->Arg(640)->Unit(benchmark::kMillisecond);

void BM_AttentionBackward(benchmark::State& state) {
  const auto rows = static_cast<Eigen::Index>(state.range(0));
  Rng rng(2);
  ParamStore store;
  Parameter& q = store.add("q", rng.normal_matrix(rows, 64));
  const Matrix k = rng.normal_matrix(rows, 64), v = rng.normal_matrix(rows, 64);
  for (auto _ : state) {
    ad::Tape tape;
    tape.backward(ad::sum_squares(ad::attention(tape.parameter(q), tape.constant(k), tape.constant(v), 4)));
  }
}
BENCHMARK(BM_AttentionBackward)->Arg(640)->Unit(benchmark::kMillisecond);

void BM_CodecEncode(benchmark::State& state) {
  codec::CodecConfig cc;
  cc.latent_channels = 16;
  const codec::LatentCodec codec(cc);
  const auto video = noise_video(33, 64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(codec.encode(video).data.data());
}
BENCHMARK(BM_CodecEncode)->Unit(benchmark::kMillisecond);

void BM_RopeRotate(benchmark::State& state) {
  const auto cfg = rope::RopeConfig::for_head_dim(32);
  Rng rng(4);
  std::vector<double> v(32);
  for (auto& x : v) x = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(rope::rotate(v, {3, 5, 7}, cfg).data());
}
BENCHMARK(BM_RopeRotate);

void BM_AlignAudio(benchmark::State& state) {
  audio::AudioTrack a;
  a.frames = 129;
  a.features = 32;
  a.data = Rng(5).normal_matrix(129 * audio::kTokensPerFrame, 32);
  for (auto _ : state) benchmark::DoNotOptimize(audio::align_audio(a, 33).data.data());
}
BENCHMARK(BM_AlignAudio);

void BM_DenoiserVelocity(benchmark::State& state) {
  model::Denoiser d(model_config(static_cast<int>(state.range(0))));
  const flow::Example ex = clip_example(6);
  const Matrix s = d.make_state(ex.cond, ex.shape, ex.z1);
  for (auto _ : state) benchmark::DoNotOptimize(d.velocity(ex.cond, ex.shape, s, 0.5).data());
}
BENCHMARK(BM_DenoiserVelocity)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  model::Denoiser d(model_config(static_cast<int>(state.range(0))));
  const flow::Example ex = clip_example(7);
  Rng rng(8);
  const Matrix z0 = rng.normal_matrix(ex.z1.rows(), 16);
  for (auto _ : state) {
    d.params().zero_grad();
    ad::Tape tape;
    tape.backward(flow::loss(tape, d, ex, z0, 0.4));
  }
}
BENCHMARK(BM_TrainStep)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
