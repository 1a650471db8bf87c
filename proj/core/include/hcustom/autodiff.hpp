#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records operations during a forward pass; backward()
// walks it in reverse and accumulates gradients into Parameter::grad.

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hcustom/tensor.hpp"

namespace hcustom::ad {

struct Parameter;
class Tape;

/// Handle to a node on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  /// With record=false no backward closures are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a parameter; its value is referenced, not copied.
  Var parameter(Parameter& param);

  /// Used by op implementations. `back` is only stored when some input
  /// requires a gradient.
  Var push(Matrix value, std::initializer_list<Var> inputs, Backward back);
  Var push(Matrix value, std::span<const Var> inputs, Backward back);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
  void backward(const Var& out);

  const Matrix& value(int id) const;
  bool requires_grad(const Var& v) const;
  void accumulate(const Var& v, const Matrix& grad);
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix own;
    const Matrix* ext = nullptr;
    Matrix grad;
    Backward back;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
  bool record_;
};

// ---- elementwise / linear algebra -------------------------------------

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a + r where r is 1 x cols, broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a .* r where r is 1 x cols, broadcast over rows.
Var mul_row(const Var& a, const Var& row);
/// x W + b
Var linear(const Var& x, const Var& weight, const Var& bias);

Var gelu(const Var& a);  // tanh approximation
Var silu(const Var& a);
Var tanh(const Var& a);

/// Row-wise normalization without affine parameters.
Var layer_norm(const Var& a, double eps = 1e-6);

// ---- structural --------------------------------------------------------

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(const Var& table, std::span<const int> indices);
/// Repeats a row block `times` times vertically.
Var tile_rows(const Var& a, int times);

// ---- attention ---------------------------------------------------------

/// Pairwise rotation of (2p, 2p+1) columns inside each head. cos/sin are
/// rows x (head_dim/2) and shared by all heads.
Var rotary(const Var& x, std::shared_ptr<const Matrix> cos, std::shared_ptr<const Matrix> sin,
           int heads);

/// Query rows [q_begin, q_begin+q_count) attend only to key rows
/// [k_begin, k_begin+k_count).
struct AttentionGroup {
  Eigen::Index q_begin, q_count, k_begin, k_count;
};

/// Multi-head scaled dot-product attention. Empty `groups` means every
/// query attends to every key.
Var attention(const Var& q, const Var& k, const Var& v, int heads,
              std::span<const AttentionGroup> groups = {});

// ---- reductions --------------------------------------------------------

Var sum(const Var& a);
/// Mean over rows of the squared row-norm of (pred - target).
Var mean_row_sq_error(const Var& pred, const Matrix& target);
Var sum_squares(const Var& a);

}  // namespace hcustom::ad
