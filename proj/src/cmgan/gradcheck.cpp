#include "cmgan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cmgan/error.hpp"

namespace cmgan {

double LossGradReport::max() const {
  return std::max({triplet, gan_v, gan_t, disc_v, disc_t, cycle, combined});
}

namespace {

std::vector<Vec> draw(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vec v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = rng.normal();
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Vec> map_all(const Mlp2& net, const std::vector<Vec>& xs) {
  std::vector<Vec> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(forward(net, x));
  return out;
}

struct Point {
  Mlp2 T, V, DT, DV;
  std::vector<Vec> v, t, t_neg, v_neg;
};

Point make_point(Rng& rng, const LossGradConfig& cfg) {
  const std::size_t d = cfg.dim;
  Point p;
  Mlp2Spec mapper{d, 2 * d, d, Activation::Tanh, Activation::Linear, false, 1.0};
  Mlp2Spec disc{d, 2 * d, 1, Activation::LeakyRelu, Activation::Sigmoid, false, 1.0};
  p.T = make_mlp2(mapper, rng);
  p.V = make_mlp2(mapper, rng);
  p.DT = make_mlp2(disc, rng);
  p.DV = make_mlp2(disc, rng);
  // nonzero biases so their gradients are exercised too
  for (Mlp2* n : {&p.T, &p.V, &p.DT, &p.DV}) {
    for (auto& b : n->b1) b = 0.1 * rng.normal();
    for (auto& b : n->b2) b = 0.1 * rng.normal();
  }
  p.v = draw(rng, cfg.batch, d);
  p.t = draw(rng, cfg.batch, d);
  p.t_neg = draw(rng, cfg.batch, d);
  p.v_neg = draw(rng, cfg.batch, d);
  return p;
}

bool near_kink(const Point& p, const LossGradConfig& cfg, Margin margin) {
  for (std::size_t b = 0; b < p.v.size(); ++b) {
    const Vec tv = forward(p.T, p.v[b]);
    const Vec vt = forward(p.V, p.t[b]);
    const double a = margin.gamma - cosine(tv, p.t[b]) + cosine(tv, p.t_neg[b]);
    const double c = margin.gamma - cosine(p.v[b], vt) + cosine(p.v_neg[b], vt);
    if (std::abs(a) < cfg.kink_margin || std::abs(c) < cfg.kink_margin) return true;
  }
  return false;
}

double triplet_value(const Point& p, Margin margin) {
  double sum = 0.0;
  for (std::size_t b = 0; b < p.v.size(); ++b)
    sum += triplet_loss(forward(p.T, p.v[b]), p.t[b], p.t_neg[b], p.v[b], forward(p.V, p.t[b]), p.v_neg[b], margin)
               .value;
  return sum;
}

double check_triplet(Point& p, Margin margin, double step) {
  Mlp2Grad gT = Mlp2Grad::zeros_like(p.T), gV = Mlp2Grad::zeros_like(p.V);
  for (std::size_t b = 0; b < p.v.size(); ++b) {
    const auto trT = forward_trace(p.T, p.v[b]);
    const auto trV = forward_trace(p.V, p.t[b]);
    const auto terms = triplet_loss(trT.output, p.t[b], p.t_neg[b], p.v[b], trV.output, p.v_neg[b], margin);
    if (terms.image_hinge > 0.0) backward_into(p.T, trT, terms.grad_tv, gT);
    if (terms.label_hinge > 0.0) backward_into(p.V, trV, terms.grad_vt, gV);
  }
  return grad_check({&p.T, &p.V}, {gT, gV}, [&] { return triplet_value(p, margin); }, step);
}

// generator side of one adversarial term: gen maps `source`, disc judges it
double check_generator(Mlp2& gen, const Mlp2& disc, const std::vector<Vec>& real, const std::vector<Vec>& source,
                       double step) {
  const GanTerms terms = gan_loss(disc, real, map_all(gen, source));
  Mlp2Grad g = Mlp2Grad::zeros_like(gen);
  for (std::size_t b = 0; b < source.size(); ++b)
    backward_into(gen, forward_trace(gen, source[b]), terms.fake_grads[b], g);
  return grad_check({&gen}, {g}, [&] { return gan_loss(disc, real, map_all(gen, source)).generator_loss; }, step);
}

double check_discriminator(Mlp2& disc, const std::vector<Vec>& real, const std::vector<Vec>& fake, double step) {
  const GanTerms terms = gan_loss(disc, real, fake);
  return grad_check({&disc}, {terms.disc_grad}, [&] { return -gan_value(disc, real, fake); }, step);
}

struct CycleEval {
  double value = 0.0;
  Mlp2Grad gT, gV;
};

// gan_weight 0 gives the pure cycle loss
CycleEval generator_objective(const Point& p, double gan_weight, double lambda_c, CycleNorm norm, bool want_grad) {
  const std::size_t n = p.v.size();
  std::vector<ForwardTrace> trT, trV, trTV, trVT;
  std::vector<Vec> fake_text, fake_image, rec_text, rec_image;
  for (std::size_t b = 0; b < n; ++b) {
    trT.push_back(forward_trace(p.T, p.v[b]));
    fake_text.push_back(trT.back().output);
    trV.push_back(forward_trace(p.V, p.t[b]));
    fake_image.push_back(trV.back().output);
  }
  for (std::size_t b = 0; b < n; ++b) {
    trTV.push_back(forward_trace(p.T, fake_image[b]));
    rec_text.push_back(trTV.back().output);
    trVT.push_back(forward_trace(p.V, fake_text[b]));
    rec_image.push_back(trVT.back().output);
  }
  CycleEval out;
  const CycleTerms cyc = cycle_loss(p.t, rec_text, p.v, rec_image, norm);
  out.value = lambda_c * cyc.value;
  std::vector<Vec> upT(n, Vec::Zero(fake_text.front().size())), upV(n, Vec::Zero(fake_image.front().size()));
  if (gan_weight != 0.0) {
    const GanTerms gv = gan_loss(p.DT, p.t, fake_text);
    const GanTerms gt = gan_loss(p.DV, p.v, fake_image);
    out.value += gan_weight * (gv.generator_loss + gt.generator_loss);
    for (std::size_t b = 0; b < n; ++b) {
      upT[b] += gan_weight * gv.fake_grads[b];
      upV[b] += gan_weight * gt.fake_grads[b];
    }
  }
  if (!want_grad) return out;
  out.gT = Mlp2Grad::zeros_like(p.T);
  out.gV = Mlp2Grad::zeros_like(p.V);
  for (std::size_t b = 0; b < n; ++b) {
    upV[b] += backward_into(p.T, trTV[b], lambda_c * cyc.grad_t_recon[b], out.gT);
    upT[b] += backward_into(p.V, trVT[b], lambda_c * cyc.grad_v_recon[b], out.gV);
  }
  for (std::size_t b = 0; b < n; ++b) {
    backward_into(p.T, trT[b], upT[b], out.gT);
    backward_into(p.V, trV[b], upV[b], out.gV);
  }
  return out;
}

double check_objective(Point& p, double gan_weight, double lambda_c, CycleNorm norm, double step) {
  const CycleEval e = generator_objective(p, gan_weight, lambda_c, norm, true);
  return grad_check({&p.T, &p.V}, {e.gT, e.gV},
                    [&] { return generator_objective(p, gan_weight, lambda_c, norm, false).value; }, step);
}

}  // namespace

LossGradReport loss_grad_check(std::uint64_t seed, const LossGradConfig& cfg) {
  if (cfg.dim == 0 || cfg.batch == 0) fail(ErrorKind::InvalidArgument, "loss_grad_check: empty nets or batch");
  const Margin margin{};
  const Rng root(seed);
  LossGradReport r;
  for (std::size_t k = 0; k < cfg.points; ++k) {
    Rng rng = root.split(k + 1);
    Point p = make_point(rng, cfg);
    for (int tries = 0; near_kink(p, cfg, margin); ++tries) {
      if (tries == 100) fail(ErrorKind::DegenerateDistribution, "loss_grad_check: no point away from hinge kinks");
      p = make_point(rng, cfg);
    }
    r.triplet = std::max(r.triplet, check_triplet(p, margin, cfg.step));
    r.gan_v = std::max(r.gan_v, check_generator(p.T, p.DT, p.t, p.v, cfg.step));
    r.gan_t = std::max(r.gan_t, check_generator(p.V, p.DV, p.v, p.t, cfg.step));
    r.disc_v = std::max(r.disc_v, check_discriminator(p.DT, p.t, map_all(p.T, p.v), cfg.step));
    r.disc_t = std::max(r.disc_t, check_discriminator(p.DV, p.v, map_all(p.V, p.t), cfg.step));
    r.cycle = std::max(r.cycle, check_objective(p, 0.0, 1.0, cfg.cycle_norm, cfg.step));
    r.combined = std::max(r.combined, check_objective(p, 1.0, cfg.lambda_c, cfg.cycle_norm, cfg.step));
    ++r.points;
  }
  return r;
}

}  // namespace cmgan
