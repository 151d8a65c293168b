#pragma once

// Alternating training: supervised triplet steps on seen classes and
// CycleGAN steps on the unseen pools. Each step trains a fresh pair of
// mappers on frozen copies of the current representations and keeps one of
// them, extending either the image stack or the label stack.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmgan/config.hpp"
#include "cmgan/losses.hpp"
#include "cmgan/nets.hpp"
#include "cmgan/numerics.hpp"

namespace cmgan {

/// Ordered composition of trained maps over a base representation
/// ("V0" for CONSE image vectors, "T0" for label word vectors).
struct MappingStack {
  std::string base;
  std::vector<Mlp2> maps;

  std::size_t size() const noexcept { return maps.size(); }
  Vec apply(const Vec& x) const;
  std::vector<Vec> apply(const std::vector<Vec>& xs) const;
  MappingStack prefix(std::size_t n) const;
  /// Throws DimMismatch unless consecutive maps chain up.
  void validate() const;
  bool operator==(const MappingStack& other) const = default;
};

enum class StepKind { Supervised, Transductive };

std::string_view step_kind_name(StepKind k) noexcept;  // "sup" / "trans"

/// Mean training losses over one epoch.
struct EpochLoss {
  double total = 0.0;
  double triplet = 0.0;
  double gan_v = 0.0;
  double gan_t = 0.0;
  double cycle = 0.0;

  bool operator==(const EpochLoss& other) const = default;
};

struct StepRecord {
  std::size_t step = 0;  // 1-based
  StepKind kind = StepKind::Supervised;
  std::optional<double> lambda_c;
  std::vector<double> grid_validation;  // one per grid entry (transductive)
  double validation = 0.0;
  std::size_t image_stack_len = 0;  // after the step
  std::size_t label_stack_len = 0;
  RetainSide retained = RetainSide::Image;
  /// The map trained alongside the retained one (V_k of a supervised step,
  /// T_k of a transductive step).
  Mlp2 companion;
  std::vector<EpochLoss> epochs;  // for the retained branch
  bool accepted = true;

  bool operator==(const StepRecord& other) const = default;
};

struct TrainState {
  MappingStack image_stack{"V0", {}};
  MappingStack label_stack{"T0", {}};
  std::vector<StepRecord> history;
  double initial_validation = 0.0;
  std::uint64_t seed = 0;

  std::size_t step_index() const noexcept { return history.size(); }
  bool operator==(const TrainState& other) const = default;
};

/// Seen images with their class, and the seen labels. Both are base
/// representations (CONSE images, word-vector labels).
struct SeenData {
  std::vector<Vec> images;
  std::vector<std::size_t> image_class;  // index into labels
  std::vector<Vec> labels;
};

/// Unseen images and unseen labels. There is intentionally no field
/// relating the two.
struct UnseenPool {
  std::vector<Vec> images;
  std::vector<Vec> labels;
};

/// Seeded holdout of seen images with fixed negatives, used for the
/// supervised validation criterion.
struct ValidationSplit {
  std::vector<std::size_t> train;      // seen image indices used for training
  std::vector<std::size_t> holdout;    // seen image indices used for validation
  std::vector<std::size_t> neg_label;  // per holdout entry, label index
  std::vector<std::size_t> neg_image;  // per holdout entry, seen image index
};

ValidationSplit make_validation_split(const SeenData& seen, double fraction, Rng rng);

/// Mean triplet loss of the composed representations on the holdout, with
/// both cross-modal maps taken as the identity.
double seen_validation(const TrainState& state, const SeenData& seen, const ValidationSplit& split, Margin margin);

/// Held-out slice for the fully unsupervised criterion.
struct UnsupSlice {
  std::vector<std::size_t> images;
  std::vector<std::size_t> texts;
};

inline constexpr std::size_t kCslsNeighbors = 10;

/// Mean over slice images of the CSLS similarity to the predicted slice
/// text, after the stacks: max_t 2 cos(v, t) - r(t) - r(v), where r(x) is the
/// mean cosine of x to its kCslsNeighbors most similar items on the other
/// side. Higher is better.
double unsup_validation(const TrainState& state, const UnseenPool& pool, const UnsupSlice& slice);

/// Step validation criterion. Lower is better unless `higher_is_better`.
struct Criterion {
  std::function<double(const TrainState&)> value;
  bool higher_is_better = false;
};

struct StepPlan {
  StepKind kind = StepKind::Supervised;
  std::size_t epochs = 1;
  std::vector<double> lambda_c_grid{1.0};
  std::size_t batch_size = 128;
  bool use_gan = true;
  bool use_cycle = true;
};

/// Observers of the frozen tensors a step trains on; called before and after
/// the inner optimization loop.
struct StepHooks {
  std::function<void(const std::vector<Vec>& images, const std::vector<Vec>& labels)> frozen_begin;
  std::function<void(const std::vector<Vec>& images, const std::vector<Vec>& labels)> frozen_end;
  /// Called with the state after each completed step.
  std::function<void(const TrainState&)> step_done;
};

struct TrainContext {
  NetsConfig nets;
  LossConfig losses;
  TrainerConfig trainer;
  Criterion criterion;
  StepHooks hooks;
  std::function<void(std::string_view)> log;
};

TrainContext make_context(const RunConfig& cfg, Criterion criterion);

StepPlan supervised_plan(const TrainerConfig& cfg);
StepPlan transductive_plan(const TrainerConfig& cfg);

std::string format_log_line(const StepRecord& rec);

/// Trains fresh T_k, V_k on the triplet loss over the seen images listed in
/// `train_indices` and appends the retained side.
void supervised_step(TrainState& state, const SeenData& seen, const std::vector<std::size_t>& train_indices,
                     const StepPlan& plan, const TrainContext& ctx);

/// Trains T_k, V_k, D_V, D_T on the CycleGAN objective for every lambda_c of
/// the plan and appends the retained map of the best candidate.
void transductive_step(TrainState& state, const UnseenPool& pool, const StepPlan& plan, const TrainContext& ctx);

/// Alternating supervised/transductive schedule starting with a supervised
/// step. Validation is compared after each (supervised, transductive) pair;
/// a pair that does not improve by more than improve_eps is rolled back and
/// training stops.
TrainState train_full(const SeenData& seen, const UnseenPool& unseen, const RunConfig& cfg,
                      const StepHooks& hooks = {}, std::function<void(std::string_view)> log = {});

/// A single transductive step from the initial stacks, with lambda_c chosen
/// by the seen validation criterion (the cycle/gan/cgan ablations).
TrainState train_transductive_once(const SeenData& seen, const UnseenPool& unseen, const RunConfig& cfg,
                                   const StepHooks& hooks = {}, std::function<void(std::string_view)> log = {});

/// One transductive step between images and sentences with no alignment,
/// selected by the unsupervised criterion on a held-out slice.
TrainState train_unsupervised(const UnseenPool& pool, const RunConfig& cfg, const StepHooks& hooks = {},
                              std::function<void(std::string_view)> log = {});

UnsupSlice make_unsup_slice(const UnseenPool& pool, double fraction, Rng rng);

/// Stack giving V_sup(X): the label stack as of the last accepted
/// supervised step followed by that step's label-side map.
MappingStack supervised_label_stack(const TrainState& state);

}  // namespace cmgan
