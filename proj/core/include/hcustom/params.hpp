#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hcustom/tensor.hpp"

namespace hcustom {

/// Seeded random source used everywhere randomness is needed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  std::uint64_t next() { return engine_(); }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Deterministic 64-bit seed derivation (splitmix64 of seed ^ stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

namespace ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

}  // namespace ad

using ad::Parameter;

/// Named parameter tensors, iterated in name order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Matrix init);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();
  std::size_t scalar_count() const;
  std::size_t size() const { return params_.size(); }

  /// Copies values for every name present in both stores.
  void assign_from(const ParamStore& other);

 private:
  std::map<std::string, Parameter, std::less<>> params_;
};

/// Glorot-style normal initialisation for a fan_in x fan_out weight.
Matrix init_weight(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  /// Applies one update from the gradients currently stored in `params`.
  /// Returns the gradient norm before clipping.
  double step(ParamStore& params);
  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, std::pair<Matrix, Matrix>, std::less<>> moments_;
};

}  // namespace hcustom
