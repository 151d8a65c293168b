#pragma once

// Two-layer perceptrons with hand-written backpropagation, an Adam-style
// optimizer, and a central-difference gradient checker.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "cmgan/numerics.hpp"

namespace cmgan {

enum class Activation { Linear, Tanh, LeakyRelu, Sigmoid };

inline constexpr double kLeakySlope = 0.2;

std::string_view activation_name(Activation a) noexcept;
Activation parse_activation(std::string_view name);

/// out = act_out(W2 * act_hidden(W1 * u + b1) + b2), plus u when `residual`,
/// where u = input_scale * x.
struct Mlp2 {
  Matrix w1;  // hidden x in
  Vec b1;
  Matrix w2;  // out x hidden
  Vec b2;
  Activation hidden_activation = Activation::Tanh;
  Activation output_activation = Activation::Linear;
  bool residual = false;
  double input_scale = 1.0;

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(w2.rows()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
  }

  /// Throws DimMismatch on inconsistent shapes (residual needs in == out).
  void validate() const;
  bool operator==(const Mlp2& other) const;
};

/// Gradient buffers shaped like an Mlp2.
struct Mlp2Grad {
  Matrix w1;
  Vec b1;
  Matrix w2;
  Vec b2;

  static Mlp2Grad zeros_like(const Mlp2& net);
  Mlp2Grad& operator+=(const Mlp2Grad& other);
  Mlp2Grad& operator*=(double s);
  bool all_finite() const;
};

struct Mlp2Spec {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  Activation hidden_activation = Activation::Tanh;
  Activation output_activation = Activation::Linear;
  bool residual = false;
  /// Multiplies the Glorot bound of the output layer; 0 starts a residual
  /// net exactly at the identity.
  double output_init_scale = 1.0;
};

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
Mlp2 make_mlp2(const Mlp2Spec& spec, Rng& rng);

/// Intermediate values kept for the backward pass.
struct ForwardTrace {
  Vec input;  // scaled input u
  Vec hidden_pre;
  Vec hidden;
  Vec output_pre;
  Vec output;
};

Vec forward(const Mlp2& net, const Vec& x);
ForwardTrace forward_trace(const Mlp2& net, const Vec& x);

/// Adds d<upstream, out>/d(params) into `acc` and returns d<upstream, out>/dx.
Vec backward_into(const Mlp2& net, const ForwardTrace& trace, const Vec& upstream, Mlp2Grad& acc);

/// Same as backward_into, but `upstream_pre` is taken w.r.t. the output
/// pre-activation (W2 * h + b2), skipping the output nonlinearity.
Vec backward_from_pre(const Mlp2& net, const ForwardTrace& trace, const Vec& upstream_pre, Mlp2Grad& acc);

struct BackwardResult {
  Mlp2Grad grad;
  Vec input_grad;
};

BackwardResult backward(const Mlp2& net, const Vec& x, const Vec& upstream);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  AdamConfig config;
  Mlp2Grad m;
  Mlp2Grad v;
  std::uint64_t step = 0;
};

OptimState make_optim_state(const Mlp2& net, const AdamConfig& config);

/// Bias-corrected adaptive-moment update. Throws NonFiniteGradient before
/// touching any state if `grad` has a NaN or infinity.
void optim_step(Mlp2& net, const Mlp2Grad& grad, OptimState& state);

/// Raw parameter addresses in a fixed order (w1, b1, w2, b2).
std::vector<double*> parameter_refs(Mlp2& net);
std::vector<double> flatten(const Mlp2Grad& grad);

inline constexpr double kGradCheckStep = 1e-5;

double relative_error(double analytic, double numeric) noexcept;

/// Max relative error between `analytic` (one gradient per net, same order)
/// and central differences of `loss` over every parameter of every net.
double grad_check(const std::vector<Mlp2*>& nets, const std::vector<Mlp2Grad>& analytic,
                  const std::function<double()>& loss, double step = kGradCheckStep);

/// Loss over the outputs of one net for a batch: returns the value and
/// writes dLoss/dOutput for every sample.
using OutputLoss = std::function<double(const std::vector<Vec>& outputs, std::vector<Vec>* grads)>;

/// Single-net gradient check of `loss` applied to forward(net, samples).
double grad_check(const Mlp2& net, const OutputLoss& loss, const std::vector<Vec>& samples,
                  double step = kGradCheckStep);

}  // namespace cmgan
