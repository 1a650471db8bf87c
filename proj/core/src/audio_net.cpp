#include "hcustom/audio_net.hpp"

#include <cmath>

#include "hcustom/errors.hpp"

namespace hcustom::audio {

void AudioTrack::validate() const {
  if (frames < 1) throw DimensionError("AudioTrack: needs at least one frame");
  if (features < 1) throw DimensionError("AudioTrack: needs at least one feature");
  if (data.rows() != static_cast<Eigen::Index>(frames) * kTokensPerFrame || data.cols() != features) {
    throw DimensionError("AudioTrack: data must be (frames*4) x features");
  }
  if (!data.allFinite()) throw NumericalError("AudioTrack: non-finite features");
}

AlignedAudio align_audio(const AudioTrack& audio, int latent_frames, bool strict) {
  audio.validate();
  if (latent_frames < 1) throw DimensionError("align_audio: latent_frames must be >= 1");
  if (strict && latent_frames != audio.frames / kTokensPerFrame + 1) {
    throw DimensionError("align_audio: " + std::to_string(audio.frames) + " audio frames imply " +
                         std::to_string(audio.frames / kTokensPerFrame + 1) + " latent frames, got " +
                         std::to_string(latent_frames));
  }
  const int target = (latent_frames + 1) * kTokensPerFrame;
  if (audio.frames > target) throw DimensionError("align_audio: more audio frames than the aligned grid holds");
  AlignedAudio out;
  out.frames = latent_frames + 1;
  out.features = audio.features;
  // Padded frame p holds zeros for p < target - frames, else audio. Because
  // the padded tensor is [target, 4, c] row-major and the output is
  // [target/4, 16, c] row-major, the regrouping is a pure reshape.
  out.data = Matrix::Zero(static_cast<Eigen::Index>(target) * kTokensPerFrame, audio.features);
  out.data.bottomRows(audio.data.rows()) = audio.data;
  return out;
}

void AudioInjectConfig::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("audio.lambda", "must be finite and >= 0");
  if (heads < 1) throw ConfigError("audio.heads", "must be >= 1");
  if (features < 1) throw ConfigError("audio.features", "must be >= 1");
}

void to_json(nlohmann::json& j, const AudioInjectConfig& c) {
  j = {{"lambda", c.lambda}, {"heads", c.heads}, {"features", c.features}};
}

void from_json(const nlohmann::json& j, AudioInjectConfig& c) {
  c.lambda = j.value("lambda", c.lambda);
  c.heads = j.value("heads", c.heads);
  c.features = j.value("features", c.features);
}

AudioNet::AudioNet(ParamStore& store, std::string prefix, int width, AudioInjectConfig config, std::uint64_t seed)
    : store_(&store), prefix_(std::move(prefix)), width_(width), config_(config) {
  config_.validate();
  if (width % config_.heads != 0) throw ConfigError("audio.heads", "must divide the model width");
  Rng rng(seed);
  store.add(prefix_ + ".wq", init_weight(rng, width, width));
  store.add(prefix_ + ".bq", Matrix::Zero(1, width));
  store.add(prefix_ + ".wk", init_weight(rng, config_.features, width));
  store.add(prefix_ + ".bk", Matrix::Zero(1, width));
  store.add(prefix_ + ".wv", init_weight(rng, config_.features, width));
  store.add(prefix_ + ".bv", Matrix::Zero(1, width));
  store.add(prefix_ + ".wo", init_weight(rng, width, width));
  store.add(prefix_ + ".bo", Matrix::Zero(1, width));
}

ad::Var AudioNet::inject(ad::Tape& tape, const ad::Var& latent, const ad::Var& audio, int frames,
                         int cells_per_frame) const {
  if (latent.rows() != static_cast<Eigen::Index>(frames) * cells_per_frame || latent.cols() != width_) {
    throw DimensionError("inject_audio: latent must be (frames*cells) x width");
  }
  if (audio.rows() != static_cast<Eigen::Index>(frames) * kGroupedTokens || audio.cols() != config_.features) {
    throw DimensionError("inject_audio: audio must be (frames*16) x features");
  }
  if (config_.lambda == 0.0) return latent;
  const auto p = [&](const char* n) { return tape.parameter(store_->get(prefix_ + n)); };
  ad::Var q = ad::linear(latent, p(".wq"), p(".bq"));
  ad::Var k = ad::linear(audio, p(".wk"), p(".bk"));
  ad::Var v = ad::linear(audio, p(".wv"), p(".bv"));
  std::vector<ad::AttentionGroup> groups;
  groups.reserve(static_cast<std::size_t>(frames));
  for (int g = 0; g < frames; ++g) {
    groups.push_back({static_cast<Eigen::Index>(g) * cells_per_frame, cells_per_frame,
                      static_cast<Eigen::Index>(g) * kGroupedTokens, kGroupedTokens});
  }
  ad::Var attended = ad::attention(q, k, v, config_.heads, groups);
  ad::Var delta = ad::linear(attended, p(".wo"), p(".bo"));
  return ad::add(latent, ad::scale(delta, config_.lambda));
}

Matrix AudioNet::inject(const Matrix& latent, const AlignedAudio& audio, int cells_per_frame) const {
  ad::Tape tape(false);
  return inject(tape, tape.constant(latent), tape.constant(audio.data), audio.frames, cells_per_frame).value();
}

void put_audio(Container& c, const std::string& name, const AudioTrack& a) {
  a.validate();
  c.put_f64(name, {a.frames, kTokensPerFrame, a.features},
            std::span<const double>(a.data.data(), static_cast<std::size_t>(a.data.size())));
}

AudioTrack get_audio(const Container& c, const std::string& name) {
  const auto& s = c.shape(name);
  if (s.size() != 3 || s[1] != kTokensPerFrame) throw DimensionError("get_audio: '" + name + "' is not [f,4,c]");
  AudioTrack a;
  a.frames = static_cast<int>(s[0]);
  a.features = static_cast<int>(s[2]);
  a.data = Matrix(static_cast<Eigen::Index>(a.frames) * kTokensPerFrame, a.features);
  const auto d = c.get_f64(name);
  std::copy(d.begin(), d.end(), a.data.data());
  return a;
}

}  // namespace hcustom::audio
