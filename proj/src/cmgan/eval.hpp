#pragma once

// Retrieval metrics (first-relevant rank, flat hit, MFR), the ZSL and
// generalized ZSL protocols, the ablation ladder and the per-step PCA
// trajectory export.

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cmgan/config.hpp"
#include "cmgan/data.hpp"
#include "cmgan/trainer.hpp"

namespace cmgan {

enum class EvalMode { Zsl, Gzsl };

std::string_view eval_mode_name(EvalMode m) noexcept;  // "zsl" / "gzsl"
EvalMode parse_eval_mode(std::string_view name);

inline constexpr std::array<int, 5> kFlatHitKs{1, 2, 5, 10, 20};

struct RankingResult {
  std::string query_id;
  std::size_t first_relevant_rank = 1;  // FR, 1-based
  std::size_t candidate_count = 0;      // K
};

/// Ranks candidates by cosine similarity to each query. FR counts every
/// other candidate whose similarity is >= the true one's as ranked ahead,
/// so ties are resolved against the query.
std::vector<RankingResult> rank_queries(const std::vector<Vec>& queries, const std::vector<std::string>& query_ids,
                                        const std::vector<Vec>& candidates, const std::vector<std::size_t>& truth);

/// Several relevant candidates per query; FR is the rank of the best one.
std::vector<RankingResult> rank_queries(const std::vector<Vec>& queries, const std::vector<std::string>& query_ids,
                                        const std::vector<Vec>& candidates,
                                        const std::vector<std::vector<std::size_t>>& truth);

double flat_hit(const std::vector<RankingResult>& results, std::size_t k);

/// 100/(K N) * sum FR, or with `exact50` 100 * mean(FR - 1)/(K - 1), which
/// puts a uniform random ranker at exactly 50.
double mfr(const std::vector<RankingResult>& results, bool exact50 = false);

struct EvalReport {
  EvalMode mode = EvalMode::Zsl;
  std::string split = "all";
  std::string direction = "image_to_label";
  std::map<int, double> fh;
  double mfr = 0.0;
  bool mfr_exact50 = false;
  std::size_t query_count = 0;
  std::size_t candidate_count = 0;

  bool operator==(const EvalReport& other) const = default;
};

EvalReport make_report(const std::vector<RankingResult>& results, EvalMode mode, std::string split,
                       std::string direction, bool exact50);

json report_to_json(const EvalReport& r);

/// Scores the stacks on the unseen images of `split` ("all" or a class tag).
/// ZSL ranks the split's unseen labels; GZSL adds every seen label. Sentence
/// datasets give a sentence-to-image and an image-to-sentence report.
std::vector<EvalReport> evaluate(const TrainState& state, const Dataset& ds, const BaseVectors& base, EvalMode mode,
                                 const std::string& split, const EvalConfig& cfg);

inline constexpr std::array<std::string_view, 6> kAblationScenarios{"init", "cycle", "gan", "cgan", "sup", "full"};

struct AblationRow {
  std::string scenario;
  TrainState state;
  EvalReport report;
};

/// Runs every scenario from the same seed and evaluates it. `only`, when not
/// empty, restricts the ladder to those scenarios (order is kept).
std::vector<AblationRow> ablate(const RunConfig& cfg, const Dataset& ds, const BaseVectors& base, EvalMode mode,
                                const std::string& split, const std::vector<std::string>& only = {},
                                std::function<void(std::string_view)> log = {});

json ablation_to_json(const std::vector<AblationRow>& rows);

struct TrajectoryPoint {
  std::size_t step = 0;      // 0 = initialization
  std::string kind;          // "init", "sup" or "trans"
  std::int64_t class_id = 0;
  bool is_label = true;      // label point, otherwise visual centroid
  double x = 0.0;
  double y = 0.0;

  bool operator==(const TrajectoryPoint& other) const = default;
};

/// 2-D coordinates of label points and visual centroids of up to
/// `n_classes` unseen classes after every accepted step, in one PCA basis
/// fitted on all of them.
std::vector<TrajectoryPoint> export_trajectory(const TrainState& state, const Dataset& ds, const BaseVectors& base,
                                               std::size_t n_classes, Rng rng);

std::string format_trajectory(const std::vector<TrajectoryPoint>& points);

}  // namespace cmgan
