#pragma once

// Initial representations: word/label/sentence vectors in the textual space
// and CONSE image vectors, plus the rho_vis cross-space agreement score.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmgan/numerics.hpp"

namespace cmgan {

/// Token -> vector map with a fixed dimension. Iteration follows insertion
/// order so that files written from a table are reproducible.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }

  /// Throws DimMismatch, DuplicateToken, or ZeroVector.
  void add(const std::string& token, Vec vec);
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const Vec* find(const std::string& token) const;
  const Vec& at(const std::string& token) const;

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const Vec& vector(std::size_t i) const { return vectors_.at(i); }

 private:
  std::size_t dim_;
  std::vector<std::string> tokens_;
  std::vector<Vec> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Split { Seen, Unseen };

struct ClassLabel {
  std::int64_t id = 0;
  std::vector<std::string> tokens;
  Split split = Split::Seen;
  std::vector<std::string> tags;
};

/// CNN output for one image: a distribution over the seen classes, aligned
/// index-for-index with the seen label list.
struct ClassProbe {
  std::string image_id;
  Vec probs;
};

struct ConseConfig {
  // Not reported for the ImageNet experiments; 10 is a guess.
  std::size_t top_k = 10;
};

/// Mean of the in-vocabulary token vectors. Throws OovLabel if none is known.
Vec embed_label(const EmbeddingTable& table, const ClassLabel& label);

/// Sum of the in-vocabulary token vectors. Throws OovSentence if none is known.
Vec embed_sentence(const EmbeddingTable& table, const std::vector<std::string>& words);

/// Indices of the `k` most probable classes, ties broken by ascending class id.
std::vector<std::size_t> top_k_indices(const Vec& probs, const std::vector<std::int64_t>& class_ids, std::size_t k);

/// Convex combination of the label vectors of the top-K classes, weighted by
/// the probe renormalized onto those classes.
///
/// `label_vecs` are the seen label embeddings in probe order; `class_ids`
/// their ids (used only for tie-breaking).
Vec conse_embed(const std::vector<Vec>& label_vecs, const std::vector<std::int64_t>& class_ids,
                const ClassProbe& probe, const ConseConfig& cfg);

Vec conse_embed(const EmbeddingTable& table, const std::vector<ClassLabel>& seen_labels, const ClassProbe& probe,
                const ConseConfig& cfg);

/// Pair count used when the caller does not choose one: every pair for up to
/// 512 items, otherwise 100000 sampled pairs.
std::size_t rho_vis_default_pairs(std::size_t n_items);

/// 100 * Pearson correlation between cos(t_i, t_j) and cos(v_i, v_j) over
/// item pairs. Enumerates all pairs when n_pairs covers them, otherwise
/// samples n_pairs ordered pairs with i != j from `rng`.
double rho_vis(const std::vector<Vec>& text_vecs, const std::vector<Vec>& vis_vecs, std::size_t n_pairs, Rng& rng);

}  // namespace cmgan
