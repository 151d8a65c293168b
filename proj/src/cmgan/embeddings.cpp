#include "cmgan/embeddings.hpp"

#include <algorithm>
#include <numeric>

#include "cmgan/error.hpp"

namespace cmgan {

void EmbeddingTable::add(const std::string& token, Vec vec) {
  if (static_cast<std::size_t>(vec.size()) != dim_) {
    fail(ErrorKind::DimMismatch, "token '" + token + "' has " + std::to_string(vec.size()) +
                                     " values, table dim is " + std::to_string(dim_));
  }
  if (index_.count(token)) fail(ErrorKind::DuplicateToken, "token '" + token + "'");
  if (vec.norm() == 0.0) fail(ErrorKind::ZeroVector, "token '" + token + "' has a zero vector");
  index_.emplace(token, tokens_.size());
  tokens_.push_back(token);
  vectors_.push_back(std::move(vec));
}

const Vec* EmbeddingTable::find(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? nullptr : &vectors_[it->second];
}

const Vec& EmbeddingTable::at(const std::string& token) const {
  const Vec* v = find(token);
  if (!v) fail(ErrorKind::InvalidArgument, "unknown token '" + token + "'");
  return *v;
}

Vec embed_label(const EmbeddingTable& table, const ClassLabel& label) {
  Vec sum = Vec::Zero(static_cast<Eigen::Index>(table.dim()));
  std::size_t found = 0;
  for (const auto& tok : label.tokens) {
    if (const Vec* v = table.find(tok)) {
      sum += *v;
      ++found;
    }
  }
  if (found == 0) fail(ErrorKind::OovLabel, "label " + std::to_string(label.id) + " has no in-vocabulary token");
  return sum / static_cast<double>(found);
}

Vec embed_sentence(const EmbeddingTable& table, const std::vector<std::string>& words) {
  Vec sum = Vec::Zero(static_cast<Eigen::Index>(table.dim()));
  std::size_t found = 0;
  for (const auto& w : words) {
    if (const Vec* v = table.find(w)) {
      sum += *v;
      ++found;
    }
  }
  if (found == 0) fail(ErrorKind::OovSentence, "sentence has no in-vocabulary token");
  return sum;
}

std::vector<std::size_t> top_k_indices(const Vec& probs, const std::vector<std::int64_t>& class_ids, std::size_t k) {
  const auto n = static_cast<std::size_t>(probs.size());
  if (class_ids.size() != n) fail(ErrorKind::DimMismatch, "probe length differs from the seen label count");
  if (k == 0 || k > n) fail(ErrorKind::InvalidArgument, "top_k must lie in [1, " + std::to_string(n) + "]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double pa = probs[static_cast<Eigen::Index>(a)];
                      const double pb = probs[static_cast<Eigen::Index>(b)];
                      if (pa != pb) return pa > pb;
                      return class_ids[a] < class_ids[b];
                    });
  order.resize(k);
  return order;
}

Vec conse_embed(const std::vector<Vec>& label_vecs, const std::vector<std::int64_t>& class_ids,
                const ClassProbe& probe, const ConseConfig& cfg) {
  if (label_vecs.size() != static_cast<std::size_t>(probe.probs.size())) {
    fail(ErrorKind::DimMismatch, "probe '" + probe.image_id + "' is not aligned with the seen labels");
  }
  const auto top = top_k_indices(probe.probs, class_ids, cfg.top_k);
  const Vec weights = renormalize_probs(std::span<const double>(probe.probs.data(), label_vecs.size()), top);
  Vec out = Vec::Zero(label_vecs.front().size());
  for (std::size_t k = 0; k < top.size(); ++k) out += weights[static_cast<Eigen::Index>(k)] * label_vecs[top[k]];
  return out;
}

Vec conse_embed(const EmbeddingTable& table, const std::vector<ClassLabel>& seen_labels, const ClassProbe& probe,
                const ConseConfig& cfg) {
  std::vector<Vec> vecs;
  std::vector<std::int64_t> ids;
  vecs.reserve(seen_labels.size());
  for (const auto& l : seen_labels) {
    vecs.push_back(embed_label(table, l));
    ids.push_back(l.id);
  }
  return conse_embed(vecs, ids, probe, cfg);
}

std::size_t rho_vis_default_pairs(std::size_t n_items) {
  if (n_items <= 512) return n_items * (n_items - 1) / 2;
  return 100000;
}

double rho_vis(const std::vector<Vec>& text_vecs, const std::vector<Vec>& vis_vecs, std::size_t n_pairs, Rng& rng) {
  const std::size_t n = text_vecs.size();
  if (vis_vecs.size() != n) fail(ErrorKind::DimMismatch, "rho_vis: text and visual sequences are not aligned");
  if (n < 3) fail(ErrorKind::InvalidArgument, "rho_vis needs at least three aligned items");
  const std::size_t all_pairs = n * (n - 1) / 2;
  std::vector<double> ct, cv;
  if (n_pairs >= all_pairs) {
    ct.reserve(all_pairs);
    cv.reserve(all_pairs);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        ct.push_back(cosine(text_vecs[i], text_vecs[j]));
        cv.push_back(cosine(vis_vecs[i], vis_vecs[j]));
      }
    }
  } else {
    ct.reserve(n_pairs);
    cv.reserve(n_pairs);
    for (std::size_t p = 0; p < n_pairs; ++p) {
      const std::size_t i = rng.below(n);
      std::size_t j = rng.below(n - 1);
      if (j >= i) ++j;
      ct.push_back(cosine(text_vecs[i], text_vecs[j]));
      cv.push_back(cosine(vis_vecs[i], vis_vecs[j]));
    }
  }
  return 100.0 * pearson(ct, cv);
}

}  // namespace cmgan
