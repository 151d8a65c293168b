#pragma once

// Training objectives: the supervised max-margin triplet loss, the two
// adversarial losses, the cycle-consistency loss and their weighted sum.

#include <string_view>
#include <vector>

#include "cmgan/nets.hpp"
#include "cmgan/numerics.hpp"

namespace cmgan {

struct Margin {
  double gamma = 0.5;
};

struct CycleWeight {
  double lambda_c = 1.0;
};

enum class CycleNorm { L2, L2Squared };

std::string_view cycle_norm_name(CycleNorm n) noexcept;
CycleNorm parse_cycle_norm(std::string_view name);

/// Gradient of cos(a, b) with respect to a.
Vec cosine_grad(const Vec& a, const Vec& b);

struct TripletTerms {
  double value = 0.0;
  double image_hinge = 0.0;  // text-space row: T(v) against t and t-
  double label_hinge = 0.0;  // visual-space row: V(t) against v and v-
  Vec grad_tv;               // d value / d T(v)
  Vec grad_vt;               // d value / d V(t)
};

/// [g - cos(Tv, t) + cos(Tv, t_neg)]+ + [g - cos(v, Vt) + cos(v_neg, Vt)]+
TripletTerms triplet_loss(const Vec& tv, const Vec& t, const Vec& t_neg, const Vec& v, const Vec& vt,
                          const Vec& v_neg, Margin margin);

inline constexpr double kLogFloor = 1e-7;

struct GanTerms {
  /// E_real[log D(x)] + E_fake[log(1 - D(y))], logs floored at kLogFloor.
  double value = 0.0;
  /// Non-saturating generator objective -E_fake[log D(y)].
  double generator_loss = 0.0;
  /// Gradient of -value w.r.t. the discriminator (a descent direction).
  Mlp2Grad disc_grad;
  /// d generator_loss / d y for every fake sample.
  std::vector<Vec> fake_grads;
};

/// `disc` must produce one sigmoid output. Gradients use the exact
/// log-sigmoid derivatives, so they stay informative when a log is floored.
GanTerms gan_loss(const Mlp2& disc, const std::vector<Vec>& real, const std::vector<Vec>& fake);

/// Just the floored minimax value, for evaluation.
double gan_value(const Mlp2& disc, const std::vector<Vec>& real, const std::vector<Vec>& fake);

struct CycleTerms {
  double value = 0.0;
  std::vector<Vec> grad_t_recon;  // d value / d T(V(t))
  std::vector<Vec> grad_v_recon;  // d value / d V(T(v))
};

/// E_t ||T(V(t)) - t|| + E_v ||V(T(v)) - v||; either side may be empty.
/// The norm is Euclidean by default (squared with CycleNorm::L2Squared).
CycleTerms cycle_loss(const std::vector<Vec>& t, const std::vector<Vec>& t_recon, const std::vector<Vec>& v,
                      const std::vector<Vec>& v_recon, CycleNorm norm = CycleNorm::L2);

inline double cgan_loss(double gan_v, double gan_t, double cycle, CycleWeight w) {
  return gan_v + gan_t + w.lambda_c * cycle;
}

}  // namespace cmgan
