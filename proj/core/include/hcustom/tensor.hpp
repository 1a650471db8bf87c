#pragma once

#include <Eigen/Core>

namespace hcustom {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

/// True when every entry is finite.
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace hcustom
