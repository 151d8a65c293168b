#pragma once

// Finite-difference check of every training objective on small random nets.

#include <cstddef>
#include <cstdint>

#include "cmgan/losses.hpp"

namespace cmgan {

struct LossGradReport {
  double triplet = 0.0;   // T and V through the triplet loss
  double gan_v = 0.0;     // T through the generator loss against D_T
  double gan_t = 0.0;     // V through the generator loss against D_V
  double disc_v = 0.0;    // D_T through the discriminator objective
  double disc_t = 0.0;    // D_V through the discriminator objective
  double cycle = 0.0;     // T and V through both cycle terms
  double combined = 0.0;  // T and V through gan_v + gan_t + lambda_c * cycle
  std::size_t points = 0;

  double max() const;
};

struct LossGradConfig {
  std::size_t dim = 8;
  std::size_t points = 20;
  std::size_t batch = 4;
  double lambda_c = 5.0;
  CycleNorm cycle_norm = CycleNorm::L2;
  /// Triplet points with a hinge argument closer than this to 0 are redrawn.
  double kink_margin = 1e-3;
  double step = kGradCheckStep;
};

/// Max relative error of each objective over `points` seeded parameter
/// points, with central differences of step `cfg.step`.
LossGradReport loss_grad_check(std::uint64_t seed, const LossGradConfig& cfg = {});

}  // namespace cmgan
