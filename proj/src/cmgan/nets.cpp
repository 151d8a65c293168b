#include "cmgan/nets.hpp"

#include <algorithm>
#include <cmath>

#include "cmgan/error.hpp"

namespace cmgan {

std::string_view activation_name(Activation a) noexcept {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Tanh: return "tanh";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "linear";
}

Activation parse_activation(std::string_view name) {
  if (name == "linear") return Activation::Linear;
  if (name == "tanh") return Activation::Tanh;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  if (name == "sigmoid") return Activation::Sigmoid;
  fail(ErrorKind::InvalidArgument, "unknown activation '" + std::string(name) + "'");
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Vec activate(Activation a, const Vec& z) {
  switch (a) {
    case Activation::Linear: return z;
    case Activation::Tanh: return z.array().tanh().matrix();
    case Activation::LeakyRelu: return z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    case Activation::Sigmoid: return z.unaryExpr([](double v) { return sigmoid(v); });
  }
  return z;
}

// derivative expressed through the pre-activation z and the activation y
Vec activation_slope(Activation a, const Vec& z, const Vec& y) {
  switch (a) {
    case Activation::Linear: return Vec::Ones(z.size());
    case Activation::Tanh: return (1.0 - y.array().square()).matrix();
    case Activation::LeakyRelu: return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
    case Activation::Sigmoid: return (y.array() * (1.0 - y.array())).matrix();
  }
  return Vec::Ones(z.size());
}

}  // namespace

void Mlp2::validate() const {
  if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows()) {
    fail(ErrorKind::DimMismatch, "inconsistent Mlp2 parameter shapes");
  }
  if (residual && w1.cols() != w2.rows()) fail(ErrorKind::DimMismatch, "residual Mlp2 needs input dim == output dim");
}

bool Mlp2::operator==(const Mlp2& o) const {
  return hidden_activation == o.hidden_activation && output_activation == o.output_activation &&
         residual == o.residual && input_scale == o.input_scale && w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() &&
         w2.rows() == o.w2.rows() && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
}

Mlp2Grad Mlp2Grad::zeros_like(const Mlp2& net) {
  return Mlp2Grad{Matrix::Zero(net.w1.rows(), net.w1.cols()), Vec::Zero(net.b1.size()),
                  Matrix::Zero(net.w2.rows(), net.w2.cols()), Vec::Zero(net.b2.size())};
}

Mlp2Grad& Mlp2Grad::operator+=(const Mlp2Grad& o) {
  w1 += o.w1;
  b1 += o.b1;
  w2 += o.w2;
  b2 += o.b2;
  return *this;
}

Mlp2Grad& Mlp2Grad::operator*=(double s) {
  w1 *= s;
  b1 *= s;
  w2 *= s;
  b2 *= s;
  return *this;
}

bool Mlp2Grad::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

Mlp2 make_mlp2(const Mlp2Spec& spec, Rng& rng) {
  if (spec.input_dim == 0 || spec.hidden_dim == 0 || spec.output_dim == 0) {
    fail(ErrorKind::InvalidArgument, "Mlp2 dimensions must be positive");
  }
  const auto in = static_cast<Eigen::Index>(spec.input_dim);
  const auto hid = static_cast<Eigen::Index>(spec.hidden_dim);
  const auto out = static_cast<Eigen::Index>(spec.output_dim);
  auto glorot = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
    const double bound = scale * std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    // row-major fill so the draw order does not depend on storage order
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
    return m;
  };
  Mlp2 net;
  net.w1 = glorot(hid, in, 1.0);
  net.b1 = Vec::Zero(hid);
  net.w2 = glorot(out, hid, spec.output_init_scale);
  net.b2 = Vec::Zero(out);
  net.hidden_activation = spec.hidden_activation;
  net.output_activation = spec.output_activation;
  net.residual = spec.residual;
  net.validate();
  return net;
}

ForwardTrace forward_trace(const Mlp2& net, const Vec& x) {
  if (static_cast<std::size_t>(x.size()) != net.input_dim()) {
    fail(ErrorKind::DimMismatch, "Mlp2 input has length " + std::to_string(x.size()) + ", expected " +
                                     std::to_string(net.input_dim()));
  }
  ForwardTrace t;
  t.input = net.input_scale * x;
  t.hidden_pre = net.w1 * t.input + net.b1;
  t.hidden = activate(net.hidden_activation, t.hidden_pre);
  t.output_pre = net.w2 * t.hidden + net.b2;
  t.output = activate(net.output_activation, t.output_pre);
  if (net.residual) t.output += t.input;
  return t;
}

Vec forward(const Mlp2& net, const Vec& x) { return forward_trace(net, x).output; }

Vec backward_into(const Mlp2& net, const ForwardTrace& trace, const Vec& upstream, Mlp2Grad& acc) {
  if (static_cast<std::size_t>(upstream.size()) != net.output_dim()) {
    fail(ErrorKind::DimMismatch, "upstream gradient has the wrong length");
  }
  Vec act_out = trace.output;
  if (net.residual) act_out -= trace.input;
  const Vec d_out_pre =
      upstream.cwiseProduct(activation_slope(net.output_activation, trace.output_pre, act_out));
  Vec dx = backward_from_pre(net, trace, d_out_pre, acc);
  if (net.residual) dx += net.input_scale * upstream;
  return dx;
}

Vec backward_from_pre(const Mlp2& net, const ForwardTrace& trace, const Vec& d_out_pre, Mlp2Grad& acc) {
  if (static_cast<std::size_t>(d_out_pre.size()) != net.output_dim()) {
    fail(ErrorKind::DimMismatch, "upstream gradient has the wrong length");
  }
  acc.w2.noalias() += d_out_pre * trace.hidden.transpose();
  acc.b2 += d_out_pre;
  const Vec d_hidden = net.w2.transpose() * d_out_pre;
  const Vec d_hidden_pre =
      d_hidden.cwiseProduct(activation_slope(net.hidden_activation, trace.hidden_pre, trace.hidden));
  acc.w1.noalias() += d_hidden_pre * trace.input.transpose();
  acc.b1 += d_hidden_pre;
  return net.input_scale * (net.w1.transpose() * d_hidden_pre);
}

BackwardResult backward(const Mlp2& net, const Vec& x, const Vec& upstream) {
  BackwardResult r{Mlp2Grad::zeros_like(net), Vec()};
  r.input_grad = backward_into(net, forward_trace(net, x), upstream, r.grad);
  return r;
}

OptimState make_optim_state(const Mlp2& net, const AdamConfig& config) {
  return OptimState{config, Mlp2Grad::zeros_like(net), Mlp2Grad::zeros_like(net), 0};
}

namespace {

template <typename Param, typename Buf>
void adam_update(Param& p, const Buf& g, Buf& m, Buf& v, const AdamConfig& c, double bias1, double bias2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
  const auto m_hat = m.array() / bias1;
  const auto v_hat = v.array() / bias2;
  p.array() -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
}

}  // namespace

void optim_step(Mlp2& net, const Mlp2Grad& grad, OptimState& state) {
  if (!grad.all_finite()) fail(ErrorKind::NonFiniteGradient, "gradient contains NaN or infinity");
  state.step += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  adam_update(net.w1, grad.w1, state.m.w1, state.v.w1, c, bias1, bias2);
  adam_update(net.b1, grad.b1, state.m.b1, state.v.b1, c, bias1, bias2);
  adam_update(net.w2, grad.w2, state.m.w2, state.v.w2, c, bias1, bias2);
  adam_update(net.b2, grad.b2, state.m.b2, state.v.b2, c, bias1, bias2);
}

std::vector<double*> parameter_refs(Mlp2& net) {
  std::vector<double*> refs;
  refs.reserve(net.parameter_count());
  auto push = [&](auto& buf) {
    for (Eigen::Index i = 0; i < buf.size(); ++i) refs.push_back(buf.data() + i);
  };
  push(net.w1);
  push(net.b1);
  push(net.w2);
  push(net.b2);
  return refs;
}

std::vector<double> flatten(const Mlp2Grad& grad) {
  std::vector<double> out;
  auto push = [&](const auto& buf) {
    for (Eigen::Index i = 0; i < buf.size(); ++i) out.push_back(buf.data()[i]);
  };
  push(grad.w1);
  push(grad.b1);
  push(grad.w2);
  push(grad.b2);
  return out;
}

double relative_error(double analytic, double numeric) noexcept {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double grad_check(const std::vector<Mlp2*>& nets, const std::vector<Mlp2Grad>& analytic,
                  const std::function<double()>& loss, double step) {
  if (nets.size() != analytic.size()) fail(ErrorKind::InvalidArgument, "grad_check: one gradient per net");
  double worst = 0.0;
  for (std::size_t n = 0; n < nets.size(); ++n) {
    auto refs = parameter_refs(*nets[n]);
    const auto grads = flatten(analytic[n]);
    if (grads.size() != refs.size()) fail(ErrorKind::DimMismatch, "grad_check: gradient shape");
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const double saved = *refs[i];
      *refs[i] = saved + step;
      const double up = loss();
      *refs[i] = saved - step;
      const double down = loss();
      *refs[i] = saved;
      worst = std::max(worst, relative_error(grads[i], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

double grad_check(const Mlp2& net, const OutputLoss& loss, const std::vector<Vec>& samples, double step) {
  Mlp2 probe = net;
  auto outputs_of = [&](const Mlp2& m) {
    std::vector<Vec> outs;
    outs.reserve(samples.size());
    for (const auto& s : samples) outs.push_back(forward(m, s));
    return outs;
  };
  std::vector<Vec> upstream;
  loss(outputs_of(probe), &upstream);
  Mlp2Grad g = Mlp2Grad::zeros_like(probe);
  for (std::size_t i = 0; i < samples.size(); ++i) backward_into(probe, forward_trace(probe, samples[i]), upstream[i], g);
  return grad_check({&probe}, {g}, [&] { return loss(outputs_of(probe), nullptr); }, step);
}

}  // namespace cmgan
