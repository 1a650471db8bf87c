#include "hcustom/params.hpp"

#include <cmath>

#include "hcustom/errors.hpp"

namespace hcustom {

Matrix Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(0.0, stddev);
  return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Parameter& ParamStore::add(const std::string& name, Matrix init) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw ConfigError(name, "duplicate parameter name");
  it->second.name = name;
  it->second.value = std::move(init);
  return it->second;
}

Parameter& ParamStore::get(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError(std::string(name), "unknown parameter");
  return it->second;
}

const Parameter& ParamStore::get(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError(std::string(name), "unknown parameter");
  return it->second;
}

bool ParamStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& [_, p] : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& [_, p] : params_) out.push_back(&p);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::assign_from(const ParamStore& other) {
  for (auto& [name, p] : params_) {
    auto it = other.params_.find(name);
    if (it == other.params_.end()) continue;
    if (it->second.value.rows() != p.value.rows() || it->second.value.cols() != p.value.cols()) {
      throw DimensionError("assign_from: shape mismatch for " + name);
    }
    p.value = it->second.value;
  }
}

Matrix init_weight(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return rng.normal_matrix(fan_in, fan_out, std);
}

double Adam::step(ParamStore& params) {
  double sq = 0.0;
  for (const Parameter* p : params.all()) {
    if (p->grad.size() != 0) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericalError("adam: non-finite gradient norm");
  const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (Parameter* p : params.all()) {
    if (p->grad.size() == 0) continue;
    auto [it, fresh] = moments_.try_emplace(p->name);
    auto& [m, v] = it->second;
    if (fresh) {
      m = Matrix::Zero(p->value.rows(), p->value.cols());
      v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    const Matrix g = p->grad * clip;
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    p->value.array() -=
        config_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config_.eps);
  }
  return norm;
}

}  // namespace hcustom
