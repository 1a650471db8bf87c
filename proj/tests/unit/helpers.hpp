#pragma once

#include <functional>

#include "hcustom/autodiff.hpp"
#include "hcustom/denoiser.hpp"
#include "hcustom/latent_codec.hpp"
#include "hcustom/params.hpp"

namespace testing {

using hcustom::Matrix;

/// Small model: d=16, 2 heads, one block, c=4 on a 2x2 latent grid.
inline hcustom::model::ModelConfig tiny_model(bool audio = false, bool video = false) {
  hcustom::model::ModelConfig m;
  m.backbone.width = 16;
  m.backbone.heads = 2;
  m.backbone.blocks = 1;
  m.backbone.latent_channels = 4;
  m.backbone.input_channels = 4;
  m.backbone.text_width = 8;
  m.backbone.freq_dim = 8;
  m.backbone.mlp_ratio = 2;
  m.audio.features = 6;
  m.audio.heads = 2;
  m.use_audio = audio;
  m.use_video = video;
  m.seed = 17;
  m.normalize();
  return m;
}

inline hcustom::codec::CodecConfig tiny_codec() {
  hcustom::codec::CodecConfig c;
  c.spatial_factor = 8;
  c.latent_channels = 4;
  c.hidden = 16;
  c.seed = 3;
  return c;
}

inline hcustom::codec::PixelVideo random_video(int frames, int height, int width, std::uint64_t seed) {
  hcustom::Rng rng(seed);
  auto v = hcustom::codec::PixelVideo::filled(frames, height, width, 0.0f);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform());
  return v;
}

/// Largest relative error between backprop and central differences over the
/// listed parameters. `loss` builds a scalar on a fresh tape. Gradients below
/// 1e-4 in magnitude are compared absolutely, since their differences are noise.
inline double gradient_error(std::vector<hcustom::Parameter*> params,
                             const std::function<hcustom::ad::Var(hcustom::ad::Tape&)>& loss, double h = 1e-5) {
  for (auto* p : params) p->grad = Matrix::Zero(p->value.rows(), p->value.cols());
  {
    hcustom::ad::Tape tape;
    tape.backward(loss(tape));
  }
  const auto value = [&] {
    hcustom::ad::Tape tape(false);
    return loss(tape).value()(0, 0);
  };
  double worst = 0.0;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double keep = x;
      x = keep + h;
      const double up = value();
      x = keep - h;
      const double down = value();
      x = keep;
      const double fd = (up - down) / (2 * h);
      const double an = p->grad.data()[i];
      const double err = std::abs(fd - an) / std::max(1e-4, std::abs(fd) + std::abs(an));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace testing
