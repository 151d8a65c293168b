#include "cmgan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cmgan/error.hpp"

namespace cmgan {

std::string_view cycle_norm_name(CycleNorm n) noexcept { return n == CycleNorm::L2 ? "l2" : "l2_squared"; }

CycleNorm parse_cycle_norm(std::string_view name) {
  if (name == "l2") return CycleNorm::L2;
  if (name == "l2_squared") return CycleNorm::L2Squared;
  fail(ErrorKind::InvalidArgument, "unknown cycle norm '" + std::string(name) + "'");
}

Vec cosine_grad(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "cosine gradient");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::ZeroVector, "cosine gradient at a zero-norm vector");
  const double c = a.dot(b) / (na * nb);
  return b / (na * nb) - (c / (na * na)) * a;
}

TripletTerms triplet_loss(const Vec& tv, const Vec& t, const Vec& t_neg, const Vec& v, const Vec& vt,
                          const Vec& v_neg, Margin margin) {
  TripletTerms r;
  r.grad_tv = Vec::Zero(tv.size());
  r.grad_vt = Vec::Zero(vt.size());

  const double a = margin.gamma - cosine(tv, t) + cosine(tv, t_neg);
  if (a > 0.0) {
    r.image_hinge = a;
    r.grad_tv = cosine_grad(tv, t_neg) - cosine_grad(tv, t);
  }
  const double b = margin.gamma - cosine(v, vt) + cosine(v_neg, vt);
  if (b > 0.0) {
    r.label_hinge = b;
    r.grad_vt = cosine_grad(vt, v_neg) - cosine_grad(vt, v);
  }
  r.value = r.image_hinge + r.label_hinge;
  return r;
}

namespace {

double log_floored(double p) { return std::log(std::max(p, kLogFloor)); }

void require_scalar_disc(const Mlp2& disc) {
  if (disc.output_dim() != 1 || disc.output_activation != Activation::Sigmoid) {
    fail(ErrorKind::InvalidArgument, "discriminator must have a single sigmoid output");
  }
}

}  // namespace

GanTerms gan_loss(const Mlp2& disc, const std::vector<Vec>& real, const std::vector<Vec>& fake) {
  require_scalar_disc(disc);
  if (real.empty() || fake.empty()) fail(ErrorKind::EmptySplit, "gan_loss needs real and fake samples");
  GanTerms r;
  r.disc_grad = Mlp2Grad::zeros_like(disc);
  r.fake_grads.reserve(fake.size());
  const double nr = static_cast<double>(real.size());
  const double nf = static_cast<double>(fake.size());

  double real_term = 0.0;
  for (const auto& x : real) {
    const auto tr = forward_trace(disc, x);
    const double p = tr.output[0];
    real_term += log_floored(p);
    // d(-log sigmoid(z))/dz = -(1 - sigmoid(z))
    backward_from_pre(disc, tr, Vec::Constant(1, -(1.0 - p) / nr), r.disc_grad);
  }
  double fake_term = 0.0;
  double gen = 0.0;
  for (const auto& y : fake) {
    const auto tr = forward_trace(disc, y);
    const double p = tr.output[0];
    fake_term += log_floored(1.0 - p);
    gen -= log_floored(p);
    // d(-log(1 - sigmoid(z)))/dz = sigmoid(z)
    backward_from_pre(disc, tr, Vec::Constant(1, p / nf), r.disc_grad);
    Mlp2Grad scratch = Mlp2Grad::zeros_like(disc);
    r.fake_grads.push_back(backward_from_pre(disc, tr, Vec::Constant(1, -(1.0 - p) / nf), scratch));
  }
  r.value = real_term / nr + fake_term / nf;
  r.generator_loss = gen / nf;
  return r;
}

double gan_value(const Mlp2& disc, const std::vector<Vec>& real, const std::vector<Vec>& fake) {
  require_scalar_disc(disc);
  if (real.empty() || fake.empty()) fail(ErrorKind::EmptySplit, "gan_value needs real and fake samples");
  double real_term = 0.0;
  for (const auto& x : real) real_term += log_floored(forward(disc, x)[0]);
  double fake_term = 0.0;
  for (const auto& y : fake) fake_term += log_floored(1.0 - forward(disc, y)[0]);
  return real_term / static_cast<double>(real.size()) + fake_term / static_cast<double>(fake.size());
}

namespace {

double residual_side(const std::vector<Vec>& target, const std::vector<Vec>& recon, CycleNorm norm,
                     std::vector<Vec>& grads) {
  if (target.size() != recon.size()) fail(ErrorKind::DimMismatch, "cycle_loss: unaligned reconstructions");
  grads.clear();
  if (target.empty()) return 0.0;
  const double n = static_cast<double>(target.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    require_same_dim(target[i], recon[i], "cycle_loss");
    const Vec diff = recon[i] - target[i];
    if (norm == CycleNorm::L2) {
      const double len = diff.norm();
      sum += len;
      // zero subgradient at an exact reconstruction
      grads.push_back(len > 0.0 ? Vec(diff / (len * n)) : Vec(Vec::Zero(diff.size())));
    } else {
      sum += diff.squaredNorm();
      grads.push_back(2.0 * diff / n);
    }
  }
  return sum / n;
}

}  // namespace

CycleTerms cycle_loss(const std::vector<Vec>& t, const std::vector<Vec>& t_recon, const std::vector<Vec>& v,
                      const std::vector<Vec>& v_recon, CycleNorm norm) {
  CycleTerms r;
  r.value = residual_side(t, t_recon, norm, r.grad_t_recon) + residual_side(v, v_recon, norm, r.grad_v_recon);
  return r;
}

}  // namespace cmgan
