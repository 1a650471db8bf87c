#include "hcustom/latent_codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hcustom/autodiff.hpp"
#include "hcustom/errors.hpp"
#include "hcustom/log.hpp"

namespace hcustom::codec {

namespace {

Matrix gelu_values(const Matrix& x) {
  return x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(0.7978845608028654 * (v + 0.044715 * v * v * v)));
  });
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

PixelVideo PixelVideo::filled(int frames, int height, int width, float value) {
  PixelVideo v;
  v.frames = frames;
  v.height = height;
  v.width = width;
  v.data.assign(static_cast<std::size_t>(frames) * height * width * 3, value);
  return v;
}

PixelVideo PixelVideo::frame(int f) const {
  if (f < 0 || f >= frames) throw DimensionError("PixelVideo::frame: index out of range");
  PixelVideo out;
  out.frames = 1;
  out.height = height;
  out.width = width;
  out.fps = fps;
  const auto begin = data.begin() + static_cast<std::ptrdiff_t>(frame_size() * f);
  out.data.assign(begin, begin + static_cast<std::ptrdiff_t>(frame_size()));
  return out;
}

void PixelVideo::validate() const {
  if (frames < 1) throw DimensionError("PixelVideo: needs at least one frame");
  if (height < 1 || width < 1) throw DimensionError("PixelVideo: empty frame");
  if (data.size() != static_cast<std::size_t>(frames) * frame_size()) {
    throw DimensionError("PixelVideo: data size does not match frames x H x W x 3");
  }
}

void CodecConfig::validate() const {
  if (!is_power_of_two(spatial_factor)) throw ConfigError("codec.spatial_factor", "must be a power of two");
  if (latent_channels < 1) throw ConfigError("codec.latent_channels", "must be >= 1");
  if (hidden < 1) throw ConfigError("codec.hidden", "must be >= 1");
  if (temporal_stride != kTemporalStride) throw ConfigError("codec.temporal_stride", "is fixed at 4");
}

void to_json(nlohmann::json& j, const CodecConfig& c) {
  j = {{"spatial_factor", c.spatial_factor},
       {"latent_channels", c.latent_channels},
       {"hidden", c.hidden},
       {"temporal_stride", c.temporal_stride},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, CodecConfig& c) {
  c.spatial_factor = j.value("spatial_factor", c.spatial_factor);
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.hidden = j.value("hidden", c.hidden);
  c.temporal_stride = j.value("temporal_stride", c.temporal_stride);
  c.seed = j.value("seed", c.seed);
}

int latent_frame_count(int pixel_frames) {
  if (pixel_frames < 1) throw DimensionError("latent_frame_count: need >= 1 pixel frame");
  return pixel_frames / kTemporalStride + 1;
}

int pixel_frame_count(int latent_frames) {
  if (latent_frames < 1) throw DimensionError("pixel_frame_count: need >= 1 latent frame");
  return kTemporalStride * (latent_frames - 1) + 1;
}

LatentCodec::LatentCodec(CodecConfig config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, 0xC0DEC));
  const int s = config_.spatial_factor;
  const int in0 = s * s * 3;
  const int in = in0 * kTemporalStride;
  const int h = config_.hidden;
  const int c = config_.latent_channels;
  const auto mlp = [&](const std::string& prefix, int a, int b) {
    params_.add(prefix + ".w1", init_weight(rng, a, h));
    params_.add(prefix + ".b1", Matrix::Zero(1, h));
    params_.add(prefix + ".w2", init_weight(rng, h, b));
    params_.add(prefix + ".b2", Matrix::Zero(1, b));
  };
  mlp("codec.enc0", in0, c);
  mlp("codec.enc", in, c);
  mlp("codec.dec0", c, in0);
  mlp("codec.dec", c, in);
  // decoders start at mid-gray
  params_.get("codec.dec0.b2").value.setConstant(0.5);
  params_.get("codec.dec.b2").value.setConstant(0.5);
  params_.add("codec.norm.shift", Matrix::Zero(1, c));
  params_.add("codec.norm.scale", Matrix::Ones(1, c));
}

Matrix LatentCodec::patches(const PixelVideo& video, int latent_frame) const {
  const int s = config_.spatial_factor;
  const int h = video.height / s;
  const int w = video.width / s;
  const bool first = latent_frame == 0;
  const int group = first ? 1 : kTemporalStride;
  Matrix out(static_cast<Eigen::Index>(h) * w, static_cast<Eigen::Index>(group) * s * s * 3);
  for (int g = 0; g < group; ++g) {
    // frame 4k-3+g, replicating the last available frame when the clip is short
    const int f = first ? 0 : std::min(kTemporalStride * latent_frame - kTemporalStride + 1 + g, video.frames - 1);
    for (int cy = 0; cy < h; ++cy) {
      for (int cx = 0; cx < w; ++cx) {
        const Eigen::Index row = static_cast<Eigen::Index>(cy) * w + cx;
        Eigen::Index col = static_cast<Eigen::Index>(g) * s * s * 3;
        for (int py = 0; py < s; ++py) {
          for (int px = 0; px < s; ++px) {
            for (int ch = 0; ch < 3; ++ch) out(row, col++) = video.at(f, cy * s + py, cx * s + px, ch);
          }
        }
      }
    }
  }
  return out;
}

Matrix LatentCodec::run_encoder(const Matrix& x, bool first) const {
  const std::string p = first ? "codec.enc0" : "codec.enc";
  Matrix hdn = (x * params_.get(p + ".w1").value).rowwise() + params_.get(p + ".b1").value.row(0);
  hdn = gelu_values(hdn);
  return (hdn * params_.get(p + ".w2").value).rowwise() + params_.get(p + ".b2").value.row(0);
}

Matrix LatentCodec::run_decoder(const Matrix& z, bool first) const {
  const std::string p = first ? "codec.dec0" : "codec.dec";
  Matrix hdn = (z * params_.get(p + ".w1").value).rowwise() + params_.get(p + ".b1").value.row(0);
  hdn = gelu_values(hdn);
  return (hdn * params_.get(p + ".w2").value).rowwise() + params_.get(p + ".b2").value.row(0);
}

LatentVideo LatentCodec::encode(const PixelVideo& video) const {
  video.validate();
  const int s = config_.spatial_factor;
  if (video.height % s != 0 || video.width % s != 0) {
    throw DimensionError("encode: frame " + std::to_string(video.height) + "x" + std::to_string(video.width) +
                         " not divisible by spatial factor " + std::to_string(s));
  }
  LatentVideo out;
  out.frames = latent_frame_count(video.frames);
  out.height = video.height / s;
  out.width = video.width / s;
  out.channels = config_.latent_channels;
  out.spatial_factor = s;
  out.data.resize(out.frames * out.cells_per_frame(), out.channels);
  const RowVector& shift = params_.get("codec.norm.shift").value.row(0);
  const RowVector& scale = params_.get("codec.norm.scale").value.row(0);
  for (int k = 0; k < out.frames; ++k) {
    Matrix z = run_encoder(patches(video, k), k == 0);
    z = (z.rowwise() - shift).array().rowwise() / scale.array();
    out.data.middleRows(k * out.cells_per_frame(), out.cells_per_frame()) = z;
  }
  return out;
}

PixelVideo LatentCodec::decode(const LatentVideo& latent) const {
  if (latent.channels != config_.latent_channels || latent.spatial_factor != config_.spatial_factor) {
    throw ConfigError("codec", "latent was produced under a different codec config (channels " +
                                   std::to_string(latent.channels) + ", s=" + std::to_string(latent.spatial_factor) + ")");
  }
  if (latent.frames < 1 || latent.data.rows() != latent.frames * latent.cells_per_frame() ||
      latent.data.cols() != latent.channels) {
    throw DimensionError("decode: latent data shape inconsistent");
  }
  const int s = config_.spatial_factor;
  PixelVideo out = PixelVideo::filled(pixel_frame_count(latent.frames), latent.height * s, latent.width * s, 0.0f);
  const RowVector& shift = params_.get("codec.norm.shift").value.row(0);
  const RowVector& scale = params_.get("codec.norm.scale").value.row(0);
  for (int k = 0; k < latent.frames; ++k) {
    Matrix z = latent.data.middleRows(k * latent.cells_per_frame(), latent.cells_per_frame());
    z = (z.array().rowwise() * scale.array()).matrix().rowwise() + shift;
    const Matrix px = run_decoder(z, k == 0);
    const int group = k == 0 ? 1 : kTemporalStride;
    for (int g = 0; g < group; ++g) {
      const int f = k == 0 ? 0 : kTemporalStride * k - kTemporalStride + 1 + g;
      for (int cy = 0; cy < latent.height; ++cy) {
        for (int cx = 0; cx < latent.width; ++cx) {
          const Eigen::Index row = static_cast<Eigen::Index>(cy) * latent.width + cx;
          Eigen::Index col = static_cast<Eigen::Index>(g) * s * s * 3;
          for (int py = 0; py < s; ++py) {
            for (int pxl = 0; pxl < s; ++pxl) {
              for (int ch = 0; ch < 3; ++ch) {
                out.at(f, cy * s + py, cx * s + pxl, ch) =
                    static_cast<float>(std::clamp(px(row, col++), 0.0, 1.0));
              }
            }
          }
        }
      }
    }
  }
  return out;
}

CodecTrainReport LatentCodec::train(std::span<const PixelVideo> videos, const CodecTrainConfig& tc) {
  if (videos.empty()) throw ValidationError("codec train: no videos");
  // Gather every patch once; the set is small at desk scale.
  std::vector<Matrix> first_sets;
  std::vector<Matrix> group_sets;
  for (const auto& v : videos) {
    v.validate();
    first_sets.push_back(patches(v, 0));
    for (int k = 1; k < latent_frame_count(v.frames); ++k) group_sets.push_back(patches(v, k));
  }
  const auto stack = [](const std::vector<Matrix>& parts) {
    Eigen::Index rows = 0;
    for (const auto& p : parts) rows += p.rows();
    Matrix out(rows, parts.empty() ? 0 : parts[0].cols());
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      out.middleRows(at, p.rows()) = p;
      at += p.rows();
    }
    return out;
  };
  const Matrix first_all = stack(first_sets);
  const Matrix group_all = stack(group_sets);

  Rng rng(derive_seed(tc.seed, 0x7A11));
  Adam adam(AdamConfig{tc.lr, 0.9, 0.999, 1e-8, 1.0});
  CodecTrainReport report;
  const auto branch_loss = [&](ad::Tape& tape, const Matrix& batch, const std::string& enc, const std::string& dec) {
    using namespace ad;
    Var x = tape.constant(batch);
    Var h = gelu(linear(x, tape.parameter(params_.get(enc + ".w1")), tape.parameter(params_.get(enc + ".b1"))));
    Var z = linear(h, tape.parameter(params_.get(enc + ".w2")), tape.parameter(params_.get(enc + ".b2")));
    Var g = gelu(linear(z, tape.parameter(params_.get(dec + ".w1")), tape.parameter(params_.get(dec + ".b1"))));
    Var y = linear(g, tape.parameter(params_.get(dec + ".w2")), tape.parameter(params_.get(dec + ".b2")));
    return scale(mean_row_sq_error(y, batch), 1.0 / static_cast<double>(batch.cols()));
  };
  const auto sample_rows = [&](const Matrix& all, int n) {
    Matrix out(n, all.cols());
    for (int i = 0; i < n; ++i) out.row(i) = all.row(rng.uniform_int(0, static_cast<int>(all.rows()) - 1));
    return out;
  };
  for (int step = 0; step < tc.steps; ++step) {
    params_.zero_grad();
    ad::Tape tape;
    const int n_first = std::max(8, tc.batch / 8);
    ad::Var loss = branch_loss(tape, sample_rows(first_all, n_first), "codec.enc0", "codec.dec0");
    if (group_all.rows() > 0) {
      loss = ad::add(loss, branch_loss(tape, sample_rows(group_all, tc.batch), "codec.enc", "codec.dec"));
    }
    const double l = loss.value()(0, 0);
    if (!std::isfinite(l)) throw NumericalError("codec train: non-finite loss");
    if (step == 0) report.initial_loss = l;
    report.final_loss = l;
    tape.backward(loss);
    adam.step(params_);
    if (step % 250 == 0 || step + 1 == tc.steps) log::record("codec_step", {{"step", step}, {"loss", l}});
  }
  for (auto* p : params_.all()) p->grad.resize(0, 0);
  fit_normalization(videos);

  double abs_err = 0.0;
  std::size_t count = 0;
  for (const auto& v : videos) {
    const PixelVideo r = decode(encode(v));
    const int frames = std::min(r.frames, v.frames);
    for (std::size_t i = 0; i < static_cast<std::size_t>(frames) * v.frame_size(); ++i) {
      abs_err += std::abs(static_cast<double>(r.data[i]) - v.data[i]);
    }
    count += static_cast<std::size_t>(frames) * v.frame_size();
  }
  report.mean_abs_error = abs_err / static_cast<double>(count);
  log::record("codec_trained", {{"initial_loss", report.initial_loss},
                                {"final_loss", report.final_loss},
                                {"mean_abs_error", report.mean_abs_error}});
  return report;
}

void LatentCodec::fit_normalization(std::span<const PixelVideo> videos) {
  const int c = config_.latent_channels;
  params_.get("codec.norm.shift").value.setZero();
  params_.get("codec.norm.scale").value.setOnes();
  RowVector sum = RowVector::Zero(c);
  RowVector sq = RowVector::Zero(c);
  double n = 0;
  for (const auto& v : videos) {
    const LatentVideo z = encode(v);
    sum += z.data.colwise().sum();
    sq += z.data.array().square().matrix().colwise().sum();
    n += static_cast<double>(z.data.rows());
  }
  if (n == 0) return;
  const RowVector mean = sum / n;
  RowVector var = sq / n - mean.cwiseProduct(mean);
  RowVector sd = var.array().max(1e-8).sqrt();
  params_.get("codec.norm.shift").value.row(0) = mean;
  params_.get("codec.norm.scale").value.row(0) = sd;
}

void LatentCodec::save(Container& out) const {
  out.meta["codec"] = config_;
  for (const Parameter* p : params_.all()) out.put_matrix(p->name, p->value);
}

LatentCodec LatentCodec::load(const Container& in) {
  if (!in.meta.contains("codec")) throw IoError("container has no codec config");
  LatentCodec codec(in.meta.at("codec").get<CodecConfig>());
  for (Parameter* p : codec.params_.all()) {
    Matrix m = in.get_matrix(p->name);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw ConfigError(p->name, "stored shape differs from codec config");
    }
    p->value = std::move(m);
  }
  return codec;
}

std::pair<TokenSequence, rope::PositionGrid> tokenize(const LatentVideo& latent) {
  TokenSequence seq;
  seq.embeddings = latent.data;
  seq.labels.assign(static_cast<std::size_t>(latent.data.rows()), SegmentLabel{SegmentKind::video, 0});
  return {std::move(seq), rope::video_positions(latent.frames, latent.width, latent.height)};
}

LatentVideo untokenize(const TokenSequence& tokens, int frames, int height, int width, int spatial_factor) {
  if (tokens.length() != static_cast<Eigen::Index>(frames) * height * width) {
    throw DimensionError("untokenize: token count does not match f*h*w");
  }
  LatentVideo out;
  out.frames = frames;
  out.height = height;
  out.width = width;
  out.channels = static_cast<int>(tokens.width());
  out.spatial_factor = spatial_factor;
  out.data = tokens.embeddings;
  return out;
}

void put_video(Container& c, const std::string& name, const PixelVideo& v) {
  v.validate();
  c.put_f32(name, {v.frames, v.height, v.width, 3}, v.data);
  c.meta["videos"][name] = {{"fps", v.fps}};
}

PixelVideo get_video(const Container& c, const std::string& name) {
  const auto& s = c.shape(name);
  if (s.size() != 4 || s[3] != 3) throw DimensionError("get_video: '" + name + "' is not [f,H,W,3]");
  PixelVideo v;
  v.frames = static_cast<int>(s[0]);
  v.height = static_cast<int>(s[1]);
  v.width = static_cast<int>(s[2]);
  v.data = c.get_f32(name);
  if (c.meta.contains("videos") && c.meta["videos"].contains(name)) v.fps = c.meta["videos"][name].value("fps", 24.0);
  return v;
}

void save_video(const std::filesystem::path& path, const PixelVideo& v) {
  Container c;
  c.meta["kind"] = "pixel_video";
  put_video(c, "video", v);
  c.save(path);
}

PixelVideo load_video(const std::filesystem::path& path) { return get_video(Container::load(path), "video"); }

}  // namespace hcustom::codec
