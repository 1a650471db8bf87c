#include "hcustom/autodiff.hpp"

#include <cmath>

#include "hcustom/errors.hpp"
#include "hcustom/params.hpp"

namespace hcustom::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  Node n;
  n.own = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& param) {
  Node n;
  n.ext = &param.value;
  n.param = &param;
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward back) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(back));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, Backward back) {
  Node n;
  n.own = std::move(value);
  if (record_) {
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw Error("autodiff: input belongs to another tape");
      if (nodes_[in.id_].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.ext ? *n.ext : n.own;
}

bool Tape::requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }

void Tape::accumulate(const Var& v, const Matrix& grad) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = grad;
  } else {
    n.grad += grad;
  }
}

void Tape::backward(const Var& out) {
  if (!record_) throw Error("autodiff: backward on a non-recording tape");
  if (out.rows() != 1 || out.cols() != 1) throw DimensionError("autodiff: backward needs a scalar");
  accumulate(out, Matrix::Ones(1, 1));
  for (int i = out.id_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.param) {
      Matrix& g = n.param->grad;
      if (g.size() == 0) g = Matrix::Zero(n.param->value.rows(), n.param->value.cols());
      g += n.grad;
    } else if (n.back) {
      n.back(*this, n.grad);
    }
    n.grad.resize(0, 0);
  }
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

void require_row(const Var& a, const Var& row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError(std::string(op) + ": expected a 1x" + std::to_string(a.cols()) + " row");
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_nt: inner dimensions differ");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value().transpose();
  return t.push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value());
    if (t.requires_grad(b)) t.accumulate(b, g.transpose() * a.value());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tape& t = *a.tape();
  return t.push(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  return t.push(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  return t.push(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape();
  Matrix out = a.value().array() + s;
  return t.push(std::move(out), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(const Var& a, const Var& row) {
  require_row(a, row, "add_row");
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  require_row(a, row, "mul_row");
  Tape& t = *a.tape();
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return t.push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) {
      Matrix ga = g.array().rowwise() * row.value().row(0).array();
      t.accumulate(a, ga);
    }
    if (t.requires_grad(row)) t.accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul(x, weight), bias);
}

Var gelu(const Var& a) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v)));
  });
  return t.push(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr([](double v) {
      const double u = kGeluC * (v + 0.044715 * v * v * v);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
    });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var silu(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
  return t.push(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr([](double v) {
      const double s = 1.0 / (1.0 + std::exp(-v));
      return s * (1.0 + v * (1.0 - s));
    });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var tanh(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().tanh();
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), {a}, [a, id](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(id);
    Matrix d = 1.0 - y.array().square();
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var layer_norm(const Var& a, double eps) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  const Eigen::Index n = x.cols();
  Matrix y(x.rows(), n);
  auto inv_std = std::make_shared<Vector>(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r) = is;
    y.row(r) = (x.row(r).array() - mean) * is;
  }
  const int id = static_cast<int>(t.size());
  return t.push(std::move(y), {a}, [a, id, inv_std](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(id);
    Matrix dx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double mg = g.row(r).mean();
      const double mgy = g.row(r).dot(y.row(r)) / static_cast<double>(g.cols());
      dx.row(r) = (*inv_std)(r) * (g.row(r).array() - mg - y.row(r).array() * mgy);
    }
    t.accumulate(a, dx);
  });
}

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) throw DimensionError("slice_rows: range");
  Tape& t = *a.tape();
  Matrix out = a.value().middleRows(begin, count);
  return t.push(std::move(out), {a}, [a, begin, count](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    ga.middleRows(begin, count) = g;
    t.accumulate(a, ga);
  });
}

Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) throw DimensionError("slice_cols: range");
  Tape& t = *a.tape();
  Matrix out = a.value().middleCols(begin, count);
  return t.push(std::move(out), {a}, [a, begin, count](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    ga.middleCols(begin, count) = g;
    t.accumulate(a, ga);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Tape& t = *parts[0].tape();
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : inputs) {
      if (t.requires_grad(p)) t.accumulate(p, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = *parts[0].tape();
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : inputs) {
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Var gather_rows(const Var& table, std::span<const int> indices) {
  Tape& t = *table.tape();
  Matrix out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= table.rows()) throw DimensionError("gather_rows: index");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return t.push(std::move(out), {table}, [table, idx](Tape& t, const Matrix& g) {
    Matrix gt = Matrix::Zero(table.rows(), table.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(table, gt);
  });
}

Var tile_rows(const Var& a, int times) {
  if (times < 1) throw DimensionError("tile_rows: times must be >= 1");
  Tape& t = *a.tape();
  Matrix out = a.value().replicate(times, 1);
  return t.push(std::move(out), {a}, [a, times](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (int k = 0; k < times; ++k) ga += g.middleRows(k * a.rows(), a.rows());
    t.accumulate(a, ga);
  });
}

namespace {

void rotate_pairs(const Matrix& x, Matrix& y, const Matrix& cos, const Matrix& sin, int heads,
                  double sign) {
  const Eigen::Index head_dim = x.cols() / heads;
  const Eigen::Index pairs = head_dim / 2;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index base = h * head_dim;
      for (Eigen::Index p = 0; p < pairs; ++p) {
        const double c = cos(r, p);
        const double s = sign * sin(r, p);
        const double x0 = x(r, base + 2 * p);
        const double x1 = x(r, base + 2 * p + 1);
        y(r, base + 2 * p) = x0 * c - x1 * s;
        y(r, base + 2 * p + 1) = x0 * s + x1 * c;
      }
    }
  }
}

}  // namespace

Var rotary(const Var& x, std::shared_ptr<const Matrix> cos, std::shared_ptr<const Matrix> sin,
           int heads) {
  if (heads < 1 || x.cols() % heads != 0) throw DimensionError("rotary: width not divisible by heads");
  const Eigen::Index head_dim = x.cols() / heads;
  if (head_dim % 2 != 0 || cos->rows() != x.rows() || cos->cols() != head_dim / 2 ||
      sin->rows() != cos->rows() || sin->cols() != cos->cols()) {
    throw DimensionError("rotary: angle table shape mismatch");
  }
  Tape& t = *x.tape();
  Matrix y(x.rows(), x.cols());
  rotate_pairs(x.value(), y, *cos, *sin, heads, 1.0);
  return t.push(std::move(y), {x}, [x, cos, sin, heads](Tape& t, const Matrix& g) {
    Matrix gx(g.rows(), g.cols());
    rotate_pairs(g, gx, *cos, *sin, heads, -1.0);
    t.accumulate(x, gx);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads,
              std::span<const AttentionGroup> groups) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || v.cols() != q.cols()) {
    throw DimensionError("attention: q/k/v shape mismatch");
  }
  if (heads < 1 || q.cols() % heads != 0) throw DimensionError("attention: width not divisible by heads");
  std::vector<AttentionGroup> gs(groups.begin(), groups.end());
  if (gs.empty()) gs.push_back({0, q.rows(), 0, k.rows()});
  for (const auto& g : gs) {
    if (g.q_begin < 0 || g.q_begin + g.q_count > q.rows() || g.k_begin < 0 ||
        g.k_begin + g.k_count > k.rows() || g.k_count < 1) {
      throw DimensionError("attention: group range out of bounds");
    }
  }
  const Eigen::Index dh = q.cols() / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  Matrix out = Matrix::Zero(q.rows(), q.cols());
  auto probs = std::make_shared<std::vector<Matrix>>();
  probs->reserve(gs.size() * static_cast<std::size_t>(heads));
  for (const auto& g : gs) {
    for (int h = 0; h < heads; ++h) {
      Matrix s = (Q.block(g.q_begin, h * dh, g.q_count, dh) *
                  K.block(g.k_begin, h * dh, g.k_count, dh).transpose()) *
                 sc;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
      }
      out.block(g.q_begin, h * dh, g.q_count, dh).noalias() =
          s * V.block(g.k_begin, h * dh, g.k_count, dh);
      probs->push_back(std::move(s));
    }
  }
  Tape& t = *q.tape();
  return t.push(std::move(out), {q, k, v}, [q, k, v, heads, gs, probs, dh, sc](Tape& t, const Matrix& g) {
    const Matrix& Q = q.value();
    const Matrix& K = k.value();
    const Matrix& V = v.value();
    Matrix dq = Matrix::Zero(Q.rows(), Q.cols());
    Matrix dk = Matrix::Zero(K.rows(), K.cols());
    Matrix dv = Matrix::Zero(V.rows(), V.cols());
    std::size_t pi = 0;
    for (const auto& grp : gs) {
      for (int h = 0; h < heads; ++h, ++pi) {
        const Matrix& p = (*probs)[pi];
        const auto go = g.block(grp.q_begin, h * dh, grp.q_count, dh);
        dv.block(grp.k_begin, h * dh, grp.k_count, dh).noalias() += p.transpose() * go;
        Matrix dp = go * V.block(grp.k_begin, h * dh, grp.k_count, dh).transpose();
        Vector rs = dp.cwiseProduct(p).rowwise().sum();
        Matrix ds = p.cwiseProduct(dp.colwise() - rs) * sc;
        dq.block(grp.q_begin, h * dh, grp.q_count, dh).noalias() +=
            ds * K.block(grp.k_begin, h * dh, grp.k_count, dh);
        dk.block(grp.k_begin, h * dh, grp.k_count, dh).noalias() +=
            ds.transpose() * Q.block(grp.q_begin, h * dh, grp.q_count, dh);
      }
    }
    t.accumulate(q, dq);
    t.accumulate(k, dk);
    t.accumulate(v, dv);
  });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var sum_squares(const Var& a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return t.push(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, a.value() * (2.0 * g(0, 0)));
  });
}

Var mean_row_sq_error(const Var& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("mean_row_sq_error: shape mismatch");
  }
  if (pred.rows() == 0) throw DimensionError("mean_row_sq_error: empty input");
  Tape& t = *pred.tape();
  auto diff = std::make_shared<Matrix>(pred.value() - target);
  const double n = static_cast<double>(pred.rows());
  Matrix out(1, 1);
  out(0, 0) = diff->squaredNorm() / n;
  return t.push(std::move(out), {pred}, [pred, diff, n](Tape& t, const Matrix& g) {
    t.accumulate(pred, *diff * (2.0 * g(0, 0) / n));
  });
}

}  // namespace hcustom::ad
