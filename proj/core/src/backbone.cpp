#include "hcustom/backbone.hpp"

#include <cmath>
#include <string>

#include "hcustom/errors.hpp"

namespace hcustom::backbone {

void BackboneConfig::validate() const {
  if (width < 1) throw ConfigError("backbone.width", "must be >= 1");
  if (heads < 1 || width % heads != 0) throw ConfigError("backbone.heads", "must divide backbone.width");
  if (head_dim() % 2 != 0) throw ConfigError("backbone.heads", "head dim must be even for rotary embeddings");
  if (blocks < 1) throw ConfigError("backbone.blocks", "must be >= 1");
  if (latent_channels < 1) throw ConfigError("backbone.latent_channels", "must be >= 1");
  if (input_channels < 1) throw ConfigError("backbone.input_channels", "must be >= 1");
  if (text_width < 1) throw ConfigError("backbone.text_width", "must be >= 1");
  if (freq_dim < 2 || freq_dim % 2 != 0) throw ConfigError("backbone.freq_dim", "must be even and >= 2");
  if (mlp_ratio < 1) throw ConfigError("backbone.mlp_ratio", "must be >= 1");
  rope().validate();
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = {{"width", c.width},           {"heads", c.heads},
       {"blocks", c.blocks},         {"latent_channels", c.latent_channels},
       {"input_channels", c.input_channels}, {"text_width", c.text_width},
       {"freq_dim", c.freq_dim},     {"mlp_ratio", c.mlp_ratio},
       {"rope_base", c.rope_base}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  c.width = j.value("width", c.width);
  c.heads = j.value("heads", c.heads);
  c.blocks = j.value("blocks", c.blocks);
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.input_channels = j.value("input_channels", c.input_channels);
  c.text_width = j.value("text_width", c.text_width);
  c.freq_dim = j.value("freq_dim", c.freq_dim);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.rope_base = j.value("rope_base", c.rope_base);
}

std::pair<TokenSequence, rope::PositionGrid> concat_identity(const codec::LatentVideo& video,
                                                             std::span<const codec::LatentVideo> identities) {
  const Eigen::Index cells = video.cells_per_frame();
  for (const auto& id : identities) {
    if (id.frames != 1) throw DimensionError("concat_identity: identity latents must have exactly one frame");
    if (id.width != video.width || id.height != video.height || id.channels != video.channels) {
      throw DimensionError("concat_identity: identity latent shape differs from the video latent");
    }
  }
  const auto m = static_cast<Eigen::Index>(identities.size());
  TokenSequence seq;
  seq.embeddings.resize(m * cells + video.data.rows(), video.channels);
  rope::PositionGrid grid;
  grid.reserve(static_cast<std::size_t>(seq.embeddings.rows()));
  for (Eigen::Index k = 0; k < m; ++k) {
    seq.embeddings.middleRows(k * cells, cells) = identities[static_cast<std::size_t>(k)].data;
    seq.labels.insert(seq.labels.end(), static_cast<std::size_t>(cells),
                      SegmentLabel{SegmentKind::identity, static_cast<int>(k) + 1});
    const auto pos = rope::identity_positions(static_cast<int>(k) + 1, video.width, video.height);
    grid.insert(grid.end(), pos.begin(), pos.end());
  }
  seq.embeddings.bottomRows(video.data.rows()) = video.data;
  seq.labels.insert(seq.labels.end(), static_cast<std::size_t>(video.data.rows()), SegmentLabel{SegmentKind::video, 0});
  const auto vpos = rope::video_positions(video.frames, video.width, video.height);
  grid.insert(grid.end(), vpos.begin(), vpos.end());
  return {std::move(seq), std::move(grid)};
}

Matrix timestep_features(double t, int freq_dim) {
  const int half = freq_dim / 2;
  Matrix out(1, freq_dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / static_cast<double>(half));
    out(0, i) = std::cos(1000.0 * t * freq);
    out(0, half + i) = std::sin(1000.0 * t * freq);
  }
  return out;
}

Backbone::Backbone(ParamStore& store, BackboneConfig config, std::uint64_t seed) : store_(&store), config_(config) {
  config_.validate();
  Rng rng(seed);
  const int d = config_.width;
  const auto lin = [&](const std::string& name, int in, int out) {
    store.add(name + ".w", init_weight(rng, in, out));
    store.add(name + ".b", Matrix::Zero(1, out));
  };
  lin("backbone.in", config_.input_channels, d);
  lin("backbone.time1", config_.freq_dim, d);
  lin("backbone.time2", d, d);
  for (int b = 0; b < config_.blocks; ++b) {
    const std::string pre = "backbone.block" + std::to_string(b);
    store.add(pre + ".mod.w", rng.normal_matrix(d, 9 * d, 0.02));
    Matrix mb = Matrix::Zero(1, 9 * d);
    // gates start open: [shift, scale, gate] x {self, cross, mlp}
    for (int s = 0; s < 3; ++s) mb.middleCols((3 * s + 2) * d, d).setOnes();
    store.add(pre + ".mod.b", std::move(mb));
    lin(pre + ".attn.q", d, d);
    lin(pre + ".attn.k", d, d);
    lin(pre + ".attn.v", d, d);
    lin(pre + ".attn.o", d, d);
    lin(pre + ".xattn.q", d, d);
    lin(pre + ".xattn.k", config_.text_width, d);
    lin(pre + ".xattn.v", config_.text_width, d);
    lin(pre + ".xattn.o", d, d);
    lin(pre + ".mlp.fc1", d, config_.mlp_ratio * d);
    lin(pre + ".mlp.fc2", config_.mlp_ratio * d, d);
  }
  store.add("backbone.final.mod.w", rng.normal_matrix(d, 2 * d, 0.02));
  store.add("backbone.final.mod.b", Matrix::Zero(1, 2 * d));
  store.add("backbone.out.w", Matrix::Zero(d, config_.latent_channels));
  store.add("backbone.out.b", Matrix::Zero(1, config_.latent_channels));
}

ad::Var Backbone::p(ad::Tape& tape, const std::string& name) const { return tape.parameter(store_->get(name)); }

ad::Var Backbone::timestep_embedding(ad::Tape& tape, double t) const {
  ad::Var f = tape.constant(timestep_features(t, config_.freq_dim));
  ad::Var h = ad::silu(ad::linear(f, p(tape, "backbone.time1.w"), p(tape, "backbone.time1.b")));
  return ad::linear(h, p(tape, "backbone.time2.w"), p(tape, "backbone.time2.b"));
}

namespace {

ad::Var modulate(const ad::Var& x, const ad::Var& shift, const ad::Var& scale) {
  return ad::add_row(ad::mul_row(ad::layer_norm(x), ad::add_scalar(scale, 1.0)), shift);
}

}  // namespace

ad::Var Backbone::forward(ad::Tape& tape, const ForwardInputs& in, std::span<const audio::AudioNet> audio_nets) const {
  const int d = config_.width;
  const Eigen::Index L = in.tokens.rows();
  if (in.tokens.cols() != config_.input_channels) {
    throw DimensionError("backbone: tokens have " + std::to_string(in.tokens.cols()) + " channels, expected " +
                         std::to_string(config_.input_channels));
  }
  if (!in.positions || static_cast<Eigen::Index>(in.positions->size()) != L) {
    throw DimensionError("backbone: position grid length does not match the token count");
  }
  const bool has_text = in.text.valid() && in.text.rows() > 0;
  if (has_text && in.text.cols() != config_.text_width) throw DimensionError("backbone: text width mismatch");
  if (in.audio && static_cast<int>(audio_nets.size()) != config_.blocks) {
    throw ConfigError("audio", "one AudioNet per backbone block is required");
  }

  const auto table = rope::angle_table(*in.positions, config_.rope());
  ad::Var h = ad::linear(in.tokens, p(tape, "backbone.in.w"), p(tape, "backbone.in.b"));
  ad::Var cond = ad::silu(timestep_embedding(tape, in.t));

  for (int b = 0; b < config_.blocks; ++b) {
    const std::string pre = "backbone.block" + std::to_string(b);
    ad::Var mod = ad::linear(cond, p(tape, pre + ".mod.w"), p(tape, pre + ".mod.b"));
    const auto chunk = [&](int i) { return ad::slice_cols(mod, static_cast<Eigen::Index>(i) * d, d); };

    ad::Var a = modulate(h, chunk(0), chunk(1));
    ad::Var q = ad::rotary(ad::linear(a, p(tape, pre + ".attn.q.w"), p(tape, pre + ".attn.q.b")), table.cos, table.sin,
                           config_.heads);
    ad::Var k = ad::rotary(ad::linear(a, p(tape, pre + ".attn.k.w"), p(tape, pre + ".attn.k.b")), table.cos, table.sin,
                           config_.heads);
    ad::Var v = ad::linear(a, p(tape, pre + ".attn.v.w"), p(tape, pre + ".attn.v.b"));
    ad::Var att = ad::linear(ad::attention(q, k, v, config_.heads), p(tape, pre + ".attn.o.w"), p(tape, pre + ".attn.o.b"));
    h = ad::add(h, ad::mul_row(att, chunk(2)));

    if (in.audio) {
      const auto& ac = *in.audio;
      const Eigen::Index span_rows = static_cast<Eigen::Index>(ac.frames) * ac.cells_per_frame;
      if (ac.row_begin < 0 || ac.row_begin + span_rows > L) throw DimensionError("backbone: audio rows out of range");
      ad::Var seg = audio_nets[static_cast<std::size_t>(b)].inject(tape, ad::slice_rows(h, ac.row_begin, span_rows),
                                                                  ac.aligned, ac.frames, ac.cells_per_frame);
      std::vector<ad::Var> parts;
      if (ac.row_begin > 0) parts.push_back(ad::slice_rows(h, 0, ac.row_begin));
      parts.push_back(seg);
      if (ac.row_begin + span_rows < L) parts.push_back(ad::slice_rows(h, ac.row_begin + span_rows, L - ac.row_begin - span_rows));
      h = parts.size() == 1 ? parts[0] : ad::concat_rows(parts);
    }

    if (has_text) {
      ad::Var a2 = modulate(h, chunk(3), chunk(4));
      ad::Var xq = ad::linear(a2, p(tape, pre + ".xattn.q.w"), p(tape, pre + ".xattn.q.b"));
      ad::Var xk = ad::linear(in.text, p(tape, pre + ".xattn.k.w"), p(tape, pre + ".xattn.k.b"));
      ad::Var xv = ad::linear(in.text, p(tape, pre + ".xattn.v.w"), p(tape, pre + ".xattn.v.b"));
      ad::Var xo = ad::linear(ad::attention(xq, xk, xv, config_.heads), p(tape, pre + ".xattn.o.w"),
                              p(tape, pre + ".xattn.o.b"));
      h = ad::add(h, ad::mul_row(xo, chunk(5)));
    }

    ad::Var a3 = modulate(h, chunk(6), chunk(7));
    ad::Var m = ad::gelu(ad::linear(a3, p(tape, pre + ".mlp.fc1.w"), p(tape, pre + ".mlp.fc1.b")));
    m = ad::linear(m, p(tape, pre + ".mlp.fc2.w"), p(tape, pre + ".mlp.fc2.b"));
    h = ad::add(h, ad::mul_row(m, chunk(8)));
  }

  ad::Var fm = ad::linear(cond, p(tape, "backbone.final.mod.w"), p(tape, "backbone.final.mod.b"));
  ad::Var a = modulate(h, ad::slice_cols(fm, 0, d), ad::slice_cols(fm, d, d));
  ad::Var out = ad::linear(a, p(tape, "backbone.out.w"), p(tape, "backbone.out.b"));
  if (!out.value().allFinite()) throw NumericalError("backbone: non-finite activations");
  return out;
}

}  // namespace hcustom::backbone
