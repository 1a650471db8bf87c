#include "hcustom/rope3d.hpp"

#include <cmath>
#include <string>

#include "hcustom/errors.hpp"

namespace hcustom::rope {

RopeConfig RopeConfig::for_head_dim(int head_dim, double base) {
  RopeConfig c;
  c.head_dim = head_dim;
  c.x_dim = head_dim / 4;
  c.y_dim = head_dim / 4;
  c.time_dim = head_dim - c.x_dim - c.y_dim;
  c.base = base;
  // keep every axis even: fold odd remainders into time
  if (c.x_dim % 2 != 0) {
    --c.x_dim;
    --c.y_dim;
    c.time_dim += 2;
  }
  return c;
}

void RopeConfig::validate() const {
  if (head_dim <= 0) throw ConfigError("rope.head_dim", "must be positive");
  if (time_dim % 2 || x_dim % 2 || y_dim % 2) throw ConfigError("rope.axis_dims", "each axis dim must be even");
  if (time_dim < 0 || x_dim < 0 || y_dim < 0) throw ConfigError("rope.axis_dims", "must be non-negative");
  if (time_dim + x_dim + y_dim != head_dim) {
    throw ConfigError("rope.axis_dims", "time+x+y must equal head_dim (" + std::to_string(head_dim) + ")");
  }
  if (!(base > 1.0) || !std::isfinite(base)) throw ConfigError("rope.base", "must be > 1");
}

namespace {

// Fills angles for one position into out[0 .. head_dim/2).
template <class Out>
void fill_angles(const PositionTriple& pos, const RopeConfig& c, Out&& out) {
  int at = 0;
  const auto axis = [&](int coord, int dim) {
    for (int m = 0; m < dim / 2; ++m) {
      out(at++, static_cast<double>(coord) * std::pow(c.base, -2.0 * m / static_cast<double>(dim)));
    }
  };
  axis(pos.t, c.time_dim);
  axis(pos.x, c.x_dim);
  axis(pos.y, c.y_dim);
}

}  // namespace

std::vector<double> rotate(std::span<const double> vec, const PositionTriple& pos, const RopeConfig& config) {
  config.validate();
  if (static_cast<int>(vec.size()) != config.head_dim) {
    throw DimensionError("rope::rotate: vector length " + std::to_string(vec.size()) + " != head_dim " +
                         std::to_string(config.head_dim));
  }
  std::vector<double> out(vec.size());
  fill_angles(pos, config, [&](int p, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double x0 = vec[2 * p];
    const double x1 = vec[2 * p + 1];
    out[2 * p] = x0 * c - x1 * s;
    out[2 * p + 1] = x0 * s + x1 * c;
  });
  return out;
}

PositionGrid identity_positions(int k, int width, int height) {
  if (k < 1) throw ValidationError("identity_positions: subject index must be >= 1, got " + std::to_string(k));
  if (width < 1 || height < 1) throw DimensionError("identity_positions: empty grid");
  PositionGrid grid;
  grid.reserve(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) grid.push_back({-k, x + width, y + height});
  }
  return grid;
}

PositionGrid video_positions(int frames, int width, int height) {
  PositionGrid grid;
  if (frames < 1 || width < 1 || height < 1) return grid;
  grid.reserve(static_cast<std::size_t>(frames) * width * height);
  for (int t = 0; t < frames; ++t) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) grid.push_back({t, x, y});
    }
  }
  return grid;
}

AngleTable angle_table(std::span<const PositionTriple> positions, const RopeConfig& config) {
  config.validate();
  const auto rows = static_cast<Eigen::Index>(positions.size());
  auto cos = std::make_shared<Matrix>(rows, config.head_dim / 2);
  auto sin = std::make_shared<Matrix>(rows, config.head_dim / 2);
  for (Eigen::Index r = 0; r < rows; ++r) {
    fill_angles(positions[r], config, [&](int p, double angle) {
      (*cos)(r, p) = std::cos(angle);
      (*sin)(r, p) = std::sin(angle);
    });
  }
  return {cos, sin};
}

}  // namespace hcustom::rope
