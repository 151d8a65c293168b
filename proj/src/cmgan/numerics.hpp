#pragma once

// Dense kernels, correlation statistics, PCA and seeded randomness.
//
// Every real is a double. Vectors are Eigen column vectors; sets of vectors
// are plain std::vector<Vec>.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace cmgan {

using Vec = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Throws DimMismatch unless both vectors have the same length.
void require_same_dim(const Vec& a, const Vec& b, std::string_view what);

bool all_finite(const Vec& v) noexcept;

double cosine(const Vec& a, const Vec& b);

/// Restricts `probs` to `indices` and rescales the restriction to sum to one.
/// The output is aligned with `indices`.
Vec renormalize_probs(std::span<const double> probs, std::span<const std::size_t> indices);

double pearson(std::span<const double> x, std::span<const double> y);

/// Ranks starting at 1; tied values share the average of their ranks.
std::vector<double> average_ranks(std::span<const double> x);

double spearman(std::span<const double> x, std::span<const double> y);

/// Principal-component projection fitted on a set of rows.
struct Pca {
  Vec mean;                    // d
  Matrix axes;                 // target_dim x d, orthonormal rows
  Vec explained_variance;      // target_dim, non-increasing
  double total_variance = 0.0;

  std::size_t input_dim() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(axes.rows()); }

  Vec project(const Vec& row) const;
  std::vector<Vec> project(const std::vector<Vec>& rows) const;
  Vec reconstruct(const Vec& coords) const;
  Vec explained_variance_ratio() const;
};

/// Fits the top `target_dim` principal axes of `rows` (centered internally).
/// Axis signs are fixed so that the largest-magnitude component is positive.
Pca pca_fit(const std::vector<Vec>& rows, std::size_t target_dim);

/// Seeded random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Distributions are implemented here rather than through
/// <random> so draws are identical across standard libraries.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64/splitmix64-v1";

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Independent child stream. Depends only on this stream's seed and
  /// `stream`, never on how many draws were consumed.
  Rng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace cmgan
