#include <cmath>
#include <limits>
#include <vector>

#include "util.hpp"

#include "cmgan/nets.hpp"

using namespace cmgan;
using testutil::random_vec;
using testutil::random_vecs;
using testutil::vec;

namespace {

Mlp2 hand_net(Matrix w1, Vec b1, Matrix w2, Vec b2, Activation hidden, Activation out) {
  Mlp2 n;
  n.w1 = std::move(w1);
  n.b1 = std::move(b1);
  n.w2 = std::move(w2);
  n.b2 = std::move(b2);
  n.hidden_activation = hidden;
  n.output_activation = out;
  return n;
}

Mlp2 random_net(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out, Activation h, Activation o,
                bool residual = false) {
  Mlp2 n = make_mlp2(Mlp2Spec{in, hidden, out, h, o, residual, 1.0}, rng);
  for (auto& b : n.b1) b = 0.1 * rng.normal();
  for (auto& b : n.b2) b = 0.1 * rng.normal();
  return n;
}

// sum_i <w_i, out_i> over a batch: gradient w.r.t. output is w_i
OutputLoss linear_probe(std::vector<Vec> w) {
  return [w](const std::vector<Vec>& outs, std::vector<Vec>* grads) {
    double s = 0.0;
    for (std::size_t i = 0; i < outs.size(); ++i) s += w[i].dot(outs[i]);
    if (grads) *grads = w;
    return s;
  };
}

OutputLoss squared_error(std::vector<Vec> targets) {
  return [targets](const std::vector<Vec>& outs, std::vector<Vec>* grads) {
    double s = 0.0;
    if (grads) grads->clear();
    for (std::size_t i = 0; i < outs.size(); ++i) {
      const Vec r = outs[i] - targets[i];
      s += 0.5 * r.squaredNorm();
      if (grads) grads->push_back(r);
    }
    return s;
  };
}

}  // namespace

TEST_CASE("forward examples") {
  const Mlp2 zero = hand_net(Matrix::Zero(3, 2), Vec::Zero(3), Matrix::Zero(2, 3), Vec::Zero(2), Activation::Tanh,
                             Activation::Linear);
  CHECK(forward(zero, vec({1.5, -2})) == Vec::Zero(2));

  const Mlp2 ident = hand_net(Matrix::Identity(3, 3), Vec::Zero(3), Matrix::Identity(3, 3), Vec::Zero(3),
                              Activation::Linear, Activation::Linear);
  CHECK(forward(ident, vec({0.3, -1, 2})) == vec({0.3, -1, 2}));

  Matrix w1(2, 2);
  w1 << 0.5, -0.25, 0.1, 0.2;
  Matrix w2(1, 2);
  w2 << 0.3, -0.7;
  const Mlp2 small = hand_net(w1, vec({0.05, -0.1}), w2, vec({0.2}), Activation::Tanh, Activation::Linear);
  const Vec x = vec({1.0, 2.0});
  const double h0 = std::tanh(0.5 * 1.0 - 0.25 * 2.0 + 0.05);
  const double h1 = std::tanh(0.1 * 1.0 + 0.2 * 2.0 - 0.1);
  CHECK(std::abs(forward(small, x)[0] - (0.3 * h0 - 0.7 * h1 + 0.2)) <= 1e-12);

  const Mlp2 disc = hand_net(w1, vec({0.05, -0.1}), w2, vec({0.2}), Activation::LeakyRelu, Activation::Sigmoid);
  const double l0 = 0.05;  // both pre-activations are positive
  const double l1 = 0.4;
  CHECK(std::abs(forward(disc, x)[0] - 1.0 / (1.0 + std::exp(-(0.3 * l0 - 0.7 * l1 + 0.2)))) <= 1e-12);

  CHECK_ERROR(forward(small, vec({1, 2, 3})), ErrorKind::DimMismatch);
}

TEST_CASE("residual forward with input scale") {
  Rng rng(2);
  Mlp2 n = random_net(rng, 4, 8, 4, Activation::Tanh, Activation::Linear, true);
  n.input_scale = 0.5;
  const Vec x = random_vec(rng, 4);
  Mlp2 plain = n;
  plain.residual = false;
  plain.input_scale = 1.0;
  CHECK((forward(n, x) - (0.5 * x + forward(plain, 0.5 * x))).norm() <= 1e-14);

  Rng rng2(3);
  const Mlp2 id = make_mlp2(Mlp2Spec{5, 10, 5, Activation::Tanh, Activation::Linear, true, 0.0}, rng2);
  const Vec y = random_vec(rng2, 5);
  CHECK(forward(id, y) == y);
}

TEST_CASE("backward closed forms") {
  Rng rng(5);
  const Mlp2 n = random_net(rng, 4, 3, 2, Activation::Tanh, Activation::Linear);
  const Vec x = random_vec(rng, 4);
  const auto zero = backward(n, x, Vec::Zero(2));
  CHECK(zero.grad.w1.isZero(0.0));
  CHECK(zero.grad.b1.isZero(0.0));
  CHECK(zero.grad.w2.isZero(0.0));
  CHECK(zero.grad.b2.isZero(0.0));
  CHECK(zero.input_grad.isZero(0.0));

  const Mlp2 lin = random_net(rng, 4, 3, 2, Activation::Linear, Activation::Linear);
  const Vec u = vec({0.7, -1.3});
  const auto g = backward(lin, x, u);
  const Vec h = lin.w1 * x + lin.b1;
  CHECK((g.grad.w2 - u * h.transpose()).norm() == 0.0);
  CHECK((g.grad.b2 - u).norm() == 0.0);
  CHECK((g.input_grad - lin.w1.transpose() * (lin.w2.transpose() * u)).norm() <= 1e-14);
}

TEST_CASE("finite differences agree with backward") {
  Rng rng(7);
  for (auto [h, o] : {std::pair{Activation::Tanh, Activation::Linear}, std::pair{Activation::LeakyRelu, Activation::Sigmoid},
                      std::pair{Activation::Tanh, Activation::Sigmoid}}) {
    for (int t = 0; t < 5; ++t) {
      const Mlp2 n = random_net(rng, 4, 3, 2, h, o);
      const auto xs = random_vecs(rng, 3, 4);
      CHECK(grad_check(n, linear_probe(random_vecs(rng, 3, 2)), xs) < 1e-4);
      CHECK(grad_check(n, squared_error(random_vecs(rng, 3, 2)), xs) < 1e-4);
    }
  }
  Mlp2 res = random_net(rng, 4, 6, 4, Activation::Tanh, Activation::Linear, true);
  res.input_scale = 1.7;
  const auto xs = random_vecs(rng, 3, 4);
  CHECK(grad_check(res, squared_error(random_vecs(rng, 3, 4)), xs) < 1e-4);

  // input gradient
  const Mlp2 n = random_net(rng, 4, 3, 2, Activation::Tanh, Activation::Linear);
  const Vec x = random_vec(rng, 4), u = random_vec(rng, 2);
  const Vec gx = backward(n, x, u).input_grad;
  for (Eigen::Index i = 0; i < 4; ++i) {
    Vec xp = x, xm = x;
    xp[i] += 1e-5;
    xm[i] -= 1e-5;
    const double num = (u.dot(forward(n, xp)) - u.dot(forward(n, xm))) / 2e-5;
    CHECK(relative_error(gx[i], num) < 1e-6);
  }
}

TEST_CASE("grad_check is exact for a quadratic on a linear net") {
  Rng rng(9);
  const Mlp2 lin = random_net(rng, 3, 4, 2, Activation::Linear, Activation::Linear);
  CHECK(grad_check(lin, squared_error(random_vecs(rng, 5, 2)), random_vecs(rng, 5, 3)) < 1e-7);
}

TEST_CASE("adam update") {
  Mlp2 n = hand_net(Matrix::Constant(1, 1, 0.3), vec({0.0}), Matrix::Constant(1, 1, -0.2), vec({0.1}),
                    Activation::Linear, Activation::Linear);
  const AdamConfig cfg{0.01, 0.5, 0.999, 1e-8};
  OptimState st = make_optim_state(n, cfg);
  Mlp2Grad g = Mlp2Grad::zeros_like(n);
  const Mlp2 before = n;
  optim_step(n, g, st);
  CHECK(n == before);

  g.w1(0, 0) = 1.0;
  OptimState st2 = make_optim_state(n, cfg);
  optim_step(n, g, st2);
  CHECK(std::abs((before.w1(0, 0) - n.w1(0, 0)) - 0.01) <= 1e-9);
  CHECK(st2.step == 1);

  Mlp2 frozen = before;
  OptimState st0 = make_optim_state(frozen, AdamConfig{0.0});
  optim_step(frozen, g, st0);
  CHECK(frozen == before);

  Mlp2 a = before, b = before;
  OptimState sa = make_optim_state(a, cfg), sb = make_optim_state(b, cfg);
  for (int i = 0; i < 3; ++i) {
    optim_step(a, g, sa);
    optim_step(b, g, sb);
  }
  CHECK(a == b);

  Mlp2Grad bad = g;
  bad.b2[0] = std::numeric_limits<double>::quiet_NaN();
  const Mlp2 keep = a;
  const auto steps = sa.step;
  CHECK_ERROR(optim_step(a, bad, sa), ErrorKind::NonFiniteGradient);
  CHECK(a == keep);
  CHECK(sa.step == steps);
}

TEST_CASE("shape validation and initialization bounds") {
  Rng rng(1);
  const Mlp2 n = make_mlp2(Mlp2Spec{6, 10, 3, Activation::Tanh, Activation::Linear, false, 1.0}, rng);
  const double b1 = std::sqrt(6.0 / 16.0), b2 = std::sqrt(6.0 / 13.0);
  CHECK(n.w1.cwiseAbs().maxCoeff() <= b1);
  CHECK(n.w2.cwiseAbs().maxCoeff() <= b2);
  CHECK(n.b1.isZero(0.0));
  CHECK(n.parameter_count() == 6 * 10 + 10 + 10 * 3 + 3);
  Rng again(1);
  CHECK(make_mlp2(Mlp2Spec{6, 10, 3, Activation::Tanh, Activation::Linear, false, 1.0}, again) == n);

  Mlp2 broken = n;
  broken.b1 = Vec::Zero(4);
  CHECK_ERROR(broken.validate(), ErrorKind::DimMismatch);
  Mlp2 res = n;
  res.residual = true;
  CHECK_ERROR(res.validate(), ErrorKind::DimMismatch);
  CHECK(parse_activation(activation_name(Activation::LeakyRelu)) == Activation::LeakyRelu);
  CHECK_ERROR(parse_activation("relu6"), ErrorKind::InvalidArgument);
}
