#pragma once

#include "helpers.hpp"
#include "hcustom/audio_net.hpp"
#include "hcustom/flow_match.hpp"

namespace testing {

/// A 3-frame 2x2 latent example with one subject, optional audio/condition.
inline hcustom::flow::Example tiny_example(const hcustom::model::ModelConfig& m, std::uint64_t seed) {
  using namespace hcustom;
  Rng rng(seed);
  flow::Example ex;
  ex.id = "ex" + std::to_string(seed);
  ex.shape = {3, 2, 2, 4};
  ex.z1 = rng.normal_matrix(ex.shape.video_rows(), 4);
  ex.cond.prompt = "A circle drifts across the scene";
  ex.cond.subjects.push_back({"circle", random_video(1, 24, 24, seed + 1)});
  if (m.identity != model::IdentityMode::none) {
    codec::LatentVideo id;
    id.frames = 1;
    id.height = 2;
    id.width = 2;
    id.channels = 4;
    id.spatial_factor = 8;
    id.data = rng.normal_matrix(4, 4);
    ex.cond.identity_latents.push_back(id);
  }
  if (m.use_audio) {
    ex.cond.audio = audio::AlignedAudio{4, m.audio.features, rng.normal_matrix(4 * audio::kGroupedTokens, m.audio.features)};
  }
  if (m.use_video) ex.cond.condition = rng.normal_matrix(ex.shape.video_rows(), 4);
  return ex;
}

/// Randomises zero-initialised output layers so gradients reach every parameter.
inline void perturb_zero_params(hcustom::ParamStore& store, std::uint64_t seed) {
  hcustom::Rng rng(seed);
  for (auto* p : store.all()) {
    if (p->value.isZero(0.0)) p->value = rng.normal_matrix(p->value.rows(), p->value.cols(), 0.1);
  }
}

}  // namespace testing
