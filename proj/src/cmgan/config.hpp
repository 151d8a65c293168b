#pragma once

// Run configuration. Every field has a default; a JSON document only needs
// to name what it changes. The whole structure is embedded in checkpoints.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cmgan/embeddings.hpp"
#include "cmgan/losses.hpp"
#include "cmgan/nets.hpp"

namespace cmgan {

using json = nlohmann::json;

enum class Transform { Orthogonal, Affine, Mlp };

struct SynthConfig {
  std::string kind = "zsl";  // "zsl" or "sentences"
  std::size_t n_seen = 30;
  std::size_t n_unseen = 30;
  std::size_t d_text = 16;
  std::size_t d_vis = 16;
  std::size_t images_per_class = 50;
  Transform transform = Transform::Mlp;
  double noise_sigma = 0.1;
  /// Softmax temperature on squared visual distances when building probes.
  double probe_temperature = 1.0;
  /// Strength of the nonlinear part of the mlp transform.
  double mlp_gain = 1.0;
  // sentences kind only
  std::size_t n_extra_words = 30;
  std::size_t n_sentences = 600;
  std::size_t min_words = 3;
  std::size_t max_words = 8;
};

struct NetsConfig {
  std::size_t mapper_hidden = 0;  // 0 means twice the input dimension
  std::size_t disc_hidden = 0;
  Activation mapper_activation = Activation::Tanh;
  Activation disc_activation = Activation::LeakyRelu;
  bool mapper_residual = true;
  double mapper_output_init_scale = 0.0;
  AdamConfig mapper_optim{3e-4};
  AdamConfig disc_optim{1e-3};
};

struct LossConfig {
  double margin = 0.5;
  CycleNorm cycle_norm = CycleNorm::L2;
};

/// Which trained map of a step is kept.
enum class RetainSide { Image, Label };

struct TrainerConfig {
  std::size_t max_steps = 6;
  std::size_t sup_epochs = 20;
  std::size_t trans_epochs = 50;
  std::size_t batch_size = 128;
  std::vector<double> lambda_c_grid{1.0, 5.0, 10.0};
  double val_fraction = 0.1;
  double improve_eps = 1e-4;
  bool supervised = true;
  bool transductive = true;
  bool use_gan = true;
  bool use_cycle = true;
  RetainSide sup_retain = RetainSide::Image;
  RetainSide trans_retain = RetainSide::Label;
  /// Rescale both frozen pools of a transductive step to unit RMS norm.
  bool trans_standardize = true;
};

struct EvalConfig {
  bool mfr_exact50 = false;
};

struct RunConfig {
  std::uint64_t seed = 1;
  SynthConfig synth;
  ConseConfig conse;
  NetsConfig nets;
  LossConfig losses;
  TrainerConfig trainer;
  EvalConfig eval;
};

json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const json& doc);

/// Applies a dotted-path override such as "trainer.max_steps=4". The value is
/// parsed as JSON when possible and taken as a string otherwise.
void apply_override(json& doc, std::string_view assignment);

std::string_view transform_name(Transform t) noexcept;
Transform parse_transform(std::string_view name);

}  // namespace cmgan
