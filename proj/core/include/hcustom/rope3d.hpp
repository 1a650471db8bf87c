#pragma once

// 3D rotary position embeddings over (time, x, y).
//
// Video tokens sit at (t, x, y) with 0 <= t < f. The k-th identity image is
// placed at time -k and shifted by (+w, +h) spatially so that it never shares
// a position with a video token or another subject.

#include <memory>
#include <span>
#include <vector>

#include "hcustom/tensor.hpp"

namespace hcustom::rope {

struct PositionTriple {
  int t = 0;
  int x = 0;
  int y = 0;

  friend bool operator==(const PositionTriple&, const PositionTriple&) = default;
  friend auto operator<=>(const PositionTriple&, const PositionTriple&) = default;
};

/// One position per token, in sequence order.
using PositionGrid = std::vector<PositionTriple>;

struct RopeConfig {
  int head_dim = 32;
  int time_dim = 16;
  int x_dim = 8;
  int y_dim = 8;
  double base = 10000.0;

  /// Default split (d/2, d/4, d/4).
  static RopeConfig for_head_dim(int head_dim, double base = 10000.0);
  void validate() const;
};

/// Rotates a single head vector. Throws DimensionError on a length mismatch.
std::vector<double> rotate(std::span<const double> vec, const PositionTriple& pos, const RopeConfig& config);

/// Positions of subject k (k >= 1) on a w x h latent grid: (-k, x + w, y + h), row-major.
PositionGrid identity_positions(int k, int width, int height);

/// (t, x, y) for every cell of an f x h x w latent, time outermost then y then x.
PositionGrid video_positions(int frames, int width, int height);

/// Per-token cos/sin tables (tokens x head_dim/2) consumed by ad::rotary.
struct AngleTable {
  std::shared_ptr<const Matrix> cos;
  std::shared_ptr<const Matrix> sin;
};
AngleTable angle_table(std::span<const PositionTriple> positions, const RopeConfig& config);

}  // namespace hcustom::rope
