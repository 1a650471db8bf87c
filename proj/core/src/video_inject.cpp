#include "hcustom/video_inject.hpp"

#include "hcustom/errors.hpp"

namespace hcustom::video {

TokenSequence encode_condition(const ConditionVideo& video, const codec::LatentCodec& codec) {
  video.pixels.validate();
  codec::PixelVideo px = video.pixels;
  if (video.mask) {
    const auto& m = *video.mask;
    const std::size_t cells = static_cast<std::size_t>(px.frames) * px.height * px.width;
    if (m.size() != cells) throw DimensionError("encode_condition: mask shape does not match the video");
    for (std::size_t i = 0; i < cells; ++i) {
      if (m[i] > 1) throw ValidationError("encode_condition: mask values must be 0 or 1");
      if (m[i] == 0) {
        for (int c = 0; c < 3; ++c) px.data[i * 3 + c] = kBlankValue;
      }
    }
  }
  return codec::tokenize(codec.encode(px)).first;
}

std::string to_string(InjectMode m) { return m == InjectMode::add ? "add" : "concat"; }

InjectMode inject_mode_from_string(std::string_view s) {
  if (s == "add") return InjectMode::add;
  if (s == "concat") return InjectMode::concat;
  throw ConfigError("video_inject_mode", "expected add|concat, got '" + std::string(s) + "'");
}

AlignmentNet::AlignmentNet(ParamStore& store, int channels, int hidden, std::uint64_t seed) : store_(&store) {
  Rng rng(seed);
  store.add("video.align.w1", init_weight(rng, channels, hidden));
  store.add("video.align.w2", init_weight(rng, hidden, hidden));
  store.add("video.align.w3", init_weight(rng, hidden, hidden));
  store.add("video.align.w4", Matrix::Zero(hidden, channels));
}

ad::Var AlignmentNet::apply(ad::Tape& tape, const ad::Var& tokens) const {
  const auto p = [&](const std::string& n) { return tape.parameter(store_->get("video.align." + n)); };
  // Bias-free layers and gelu(0) = 0 keep align(0) = 0 for any weights.
  ad::Var h = ad::gelu(ad::matmul(tokens, p("w1")));
  h = ad::gelu(ad::matmul(h, p("w2")));
  h = ad::gelu(ad::matmul(h, p("w3")));
  return ad::matmul(h, p("w4"));
}

Matrix AlignmentNet::apply(const Matrix& tokens) const {
  ad::Tape tape(false);
  return apply(tape, tape.constant(tokens)).value();
}

ConcatCompressor::ConcatCompressor(ParamStore& store, int channels) : store_(&store) {
  Matrix w = Matrix::Zero(2 * channels, channels);
  w.topRows(channels).setIdentity();
  store.add("video.concat.w", std::move(w));
  store.add("video.concat.b", Matrix::Zero(1, channels));
}

ad::Var ConcatCompressor::apply(ad::Tape& tape, const ad::Var& latent, const ad::Var& condition) const {
  const ad::Var parts[] = {latent, condition};
  return ad::linear(ad::concat_cols(parts), tape.parameter(store_->get("video.concat.w")),
                    tape.parameter(store_->get("video.concat.b")));
}

ad::Var inject_video(ad::Tape& tape, const ad::Var& latent, const ad::Var& condition, Eigen::Index identity_rows,
                     InjectMode mode, const AlignmentNet* align, const ConcatCompressor* compress) {
  if (identity_rows < 0 || identity_rows > latent.rows()) throw DimensionError("inject_video: identity_rows");
  const Eigen::Index video_rows = latent.rows() - identity_rows;
  if (condition.rows() != video_rows || condition.cols() != latent.cols()) {
    throw DimensionError("inject_video: condition frames (" + std::to_string(condition.rows()) +
                         " tokens) do not match the video latent (" + std::to_string(video_rows) + " tokens)");
  }
  ad::Var video = ad::slice_rows(latent, identity_rows, video_rows);
  ad::Var fused;
  switch (mode) {
    case InjectMode::add:
      if (!align) throw ConfigError("video_inject_mode", "add mode needs an alignment network");
      fused = ad::add(video, align->apply(tape, condition));
      break;
    case InjectMode::concat:
      if (!compress) throw ConfigError("video_inject_mode", "concat mode needs a compressor");
      fused = compress->apply(tape, video, condition);
      break;
  }
  if (identity_rows == 0) return fused;
  const ad::Var parts[] = {ad::slice_rows(latent, 0, identity_rows), fused};
  return ad::concat_rows(parts);
}

}  // namespace hcustom::video
