#pragma once

// Grounded word vectors built from trained mapping stacks, and their
// evaluation on word-relatedness benchmarks.
//
// Benchmark files are TSV "token_a<TAB>token_b<TAB>score"; lines starting
// with '#' and blank lines are ignored.

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cmgan/embeddings.hpp"
#include "cmgan/trainer.hpp"

namespace cmgan {

enum class GroundingVariant { X, Vsup, XVsup, Vtrans, XVtrans, VsupVtrans };

inline constexpr std::array<GroundingVariant, 6> kGroundingVariants{
    GroundingVariant::X,      GroundingVariant::Vsup,    GroundingVariant::XVsup,
    GroundingVariant::Vtrans, GroundingVariant::XVtrans, GroundingVariant::VsupVtrans};

/// "x", "vsup", "x+vsup", "vtrans", "x+vtrans", "vsup+vtrans".
std::string_view grounding_variant_name(GroundingVariant v) noexcept;
GroundingVariant parse_grounding_variant(std::string_view name);
bool is_concatenation(GroundingVariant v) noexcept;

struct GroundingRecipe {
  GroundingVariant variant = GroundingVariant::X;
  /// Dimension of PCA-reduced concatenations; 0 means the dimension of X.
  std::size_t output_dim = 0;
};

struct RelatednessPair {
  std::string a;
  std::string b;
  double score = 0.0;
};

struct RelatednessBenchmark {
  std::string name;
  std::vector<RelatednessPair> pairs;
};

RelatednessBenchmark parse_benchmark(const std::string& text, const std::string& name);
/// The benchmark is named after the file stem.
RelatednessBenchmark load_benchmark(const std::filesystem::path& path);

/// Distinct tokens of the benchmarks in order of first appearance.
std::vector<std::string> benchmark_vocabulary(const std::vector<RelatednessBenchmark>& benches);

struct GroundingResult {
  EmbeddingTable vectors;
  /// Tokens of the fitting vocabulary missing from the table.
  std::vector<std::string> skipped;
};

/// Builds the recipe's vector for every token of `table`. Concatenations are
/// reduced by a PCA fitted on the tokens of `fit_vocabulary` present in the
/// table (all tokens when that is empty) and projected without recentering,
/// so an orthonormal full-rank projection keeps every cosine.
GroundingResult ground_vectors(const EmbeddingTable& table, const MappingStack& sup_map,
                               const MappingStack& trans_map, const GroundingRecipe& recipe,
                               const std::vector<std::string>& fit_vocabulary = {});

struct RelatednessResult {
  std::string benchmark;
  double spearman = 0.0;  // percent
  std::size_t covered = 0;
  std::size_t total = 0;

  double coverage() const { return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total); }
};

/// 100 * Spearman correlation between human scores and cosines over the
/// pairs whose tokens are both known. Throws OovBenchmark with fewer than two
/// such pairs.
RelatednessResult relatedness_eval(const EmbeddingTable& vectors, const RelatednessBenchmark& bench);

}  // namespace cmgan
