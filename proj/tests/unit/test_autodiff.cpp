#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "hcustom/errors.hpp"
#include "hcustom/rope3d.hpp"

using namespace hcustom;
using testing::gradient_error;

namespace {

Parameter make(const char* name, Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  return Parameter{name, rng.normal_matrix(r, c, scale), {}};
}

// Fixed random projection turns any matrix output into a scalar with a
// non-trivial gradient.
ad::Var project(ad::Tape& tape, const ad::Var& v) {
  Rng rng(99 + v.rows() * 31 + v.cols());
  const Matrix w = rng.normal_matrix(v.rows(), v.cols());
  return ad::sum(ad::mul(v, tape.constant(w)));
}

}  // namespace

TEST_CASE("matmul, linear and elementwise ops match finite differences") {
  Parameter a = make("a", 3, 4, 1), b = make("b", 4, 5, 2), bias = make("bias", 1, 5, 3);
  const auto f = [&](ad::Tape& t) {
    ad::Var x = ad::linear(t.parameter(a), t.parameter(b), t.parameter(bias));
    x = ad::gelu(x);
    x = ad::add(ad::silu(x), ad::tanh(ad::scale(x, 0.7)));
    return project(t, ad::add_scalar(x, 0.3));
  };
  CHECK(gradient_error({&a, &b, &bias}, f) < 1e-6);
}

TEST_CASE("matmul_nt and sub and mul match finite differences") {
  Parameter a = make("a", 3, 4, 4), b = make("b", 5, 4, 5);
  const auto f = [&](ad::Tape& t) {
    ad::Var p = ad::matmul_nt(t.parameter(a), t.parameter(b));
    ad::Var q = ad::matmul(p, ad::scale(ad::matmul_nt(t.parameter(b), t.parameter(b)), 0.1));
    return ad::add(project(t, ad::mul(p, p)), project(t, ad::sub(q, p)));
  };
  CHECK(gradient_error({&a, &b}, f) < 1e-6);
}

TEST_CASE("row broadcasts and layer norm match finite differences") {
  Parameter x = make("x", 4, 6, 6), r = make("r", 1, 6, 7), s = make("s", 1, 6, 8);
  const auto f = [&](ad::Tape& t) {
    ad::Var y = ad::layer_norm(t.parameter(x));
    y = ad::add_row(ad::mul_row(y, t.parameter(r)), t.parameter(s));
    return project(t, y);
  };
  CHECK(gradient_error({&x, &r, &s}, f) < 1e-5);
}

TEST_CASE("structural ops route gradients to the right rows") {
  Parameter a = make("a", 4, 3, 9), b = make("b", 2, 3, 10), table = make("table", 5, 3, 11);
  const auto f = [&](ad::Tape& t) {
    const ad::Var rows[] = {t.parameter(a), t.parameter(b)};
    ad::Var cat = ad::concat_rows(rows);
    const ad::Var cols[] = {ad::slice_rows(cat, 0, 5), ad::slice_rows(cat, 1, 5)};
    ad::Var wide = ad::concat_cols(cols);
    const int ids[] = {4, 0, 4, 2};
    ad::Var g = ad::gather_rows(t.parameter(table), ids);
    return ad::add(project(t, wide), ad::add(project(t, g), project(t, ad::tile_rows(ad::slice_rows(cat, 2, 2), 3))));
  };
  CHECK(gradient_error({&a, &b, &table}, f) < 1e-6);
}

TEST_CASE("grouped multi-head attention with rotary matches finite differences") {
  Parameter q = make("q", 6, 8, 12), k = make("k", 5, 8, 13), v = make("v", 5, 8, 14);
  rope::RopeConfig rc = rope::RopeConfig::for_head_dim(4);
  rope::PositionGrid qp, kp;
  for (int i = 0; i < 6; ++i) qp.push_back({i - 2, i % 3, i / 3});
  for (int i = 0; i < 5; ++i) kp.push_back({i, 1, i % 2});
  const auto qa = rope::angle_table(qp, rc);
  const auto ka = rope::angle_table(kp, rc);
  const std::vector<ad::AttentionGroup> groups = {{0, 4, 0, 3}, {4, 2, 2, 3}};
  const auto f = [&](ad::Tape& t) {
    ad::Var rq = ad::rotary(t.parameter(q), qa.cos, qa.sin, 2);
    ad::Var rk = ad::rotary(t.parameter(k), ka.cos, ka.sin, 2);
    return ad::add(project(t, ad::attention(rq, rk, t.parameter(v), 2, groups)),
                   project(t, ad::attention(rq, rk, t.parameter(v), 2)));
  };
  CHECK(gradient_error({&q, &k, &v}, f) < 1e-6);
}

TEST_CASE("mean_row_sq_error value and gradient") {
  Parameter p = make("p", 3, 2, 15);
  const Matrix target = Matrix::Constant(3, 2, 0.5);
  ad::Tape t(false);
  const double v = ad::mean_row_sq_error(t.parameter(p), target).value()(0, 0);
  CHECK(v == doctest::Approx((p.value - target).squaredNorm() / 3.0).epsilon(1e-12));
  const auto f = [&](ad::Tape& tape) { return ad::mean_row_sq_error(tape.parameter(p), target); };
  CHECK(gradient_error({&p}, f) < 1e-6);
  const auto g = [&](ad::Tape& tape) { return ad::sum_squares(tape.parameter(p)); };
  CHECK(gradient_error({&p}, g) < 1e-6);
}

TEST_CASE("attention with a single key returns that value") {
  ad::Tape t(false);
  Rng rng(1);
  const Matrix q = rng.normal_matrix(3, 4), k = rng.normal_matrix(1, 4), v = rng.normal_matrix(1, 4);
  const Matrix out = ad::attention(t.constant(q), t.constant(k), t.constant(v), 2).value();
  for (int r = 0; r < 3; ++r) CHECK((out.row(r) - v.row(0)).norm() < 1e-14);
}

TEST_CASE("shape mismatches and misuse raise") {
  ad::Tape t;
  ad::Var a = t.constant(Matrix::Zero(2, 3));
  ad::Var b = t.constant(Matrix::Zero(4, 3));
  CHECK_THROWS_AS(ad::add(a, b), DimensionError);
  CHECK_THROWS_AS(ad::matmul(a, b), DimensionError);
  CHECK_THROWS_AS(t.backward(a), DimensionError);
  ad::Tape off(false);
  CHECK_THROWS_AS(off.backward(off.constant(Matrix::Zero(1, 1))), Error);
}

TEST_CASE("adam clips the gradient norm and reports it") {
  ParamStore store;
  store.add("w", Matrix::Zero(1, 2));
  store.get("w").grad = (Matrix(1, 2) << 3.0, 4.0).finished();
  Adam adam(AdamConfig{});
  CHECK(adam.step(store) == doctest::Approx(5.0));
  // first Adam step moves each coordinate by ~lr against the gradient sign
  CHECK(store.get("w").value(0, 0) == doctest::Approx(-1e-3).epsilon(1e-3));
  CHECK(store.get("w").value(0, 1) == doctest::Approx(-1e-3).epsilon(1e-3));
}

TEST_CASE("derive_seed separates streams deterministically") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}
