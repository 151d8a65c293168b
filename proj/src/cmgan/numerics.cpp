#include "cmgan/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cmgan/error.hpp"

namespace cmgan {

void require_same_dim(const Vec& a, const Vec& b, std::string_view what) {
  if (a.size() != b.size()) {
    fail(ErrorKind::DimMismatch, std::string(what) + ": lengths " + std::to_string(a.size()) +
                                     " and " + std::to_string(b.size()));
  }
}

bool all_finite(const Vec& v) noexcept {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return false;
  }
  return true;
}

double cosine(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "cosine");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::ZeroVector, "cosine of a zero-norm vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

Vec renormalize_probs(std::span<const double> probs, std::span<const std::size_t> indices) {
  double mass = 0.0;
  for (std::size_t i : indices) {
    if (i >= probs.size()) fail(ErrorKind::InvalidArgument, "probability index out of range");
    if (probs[i] < 0.0) fail(ErrorKind::InvalidArgument, "negative probability");
    mass += probs[i];
  }
  if (!(mass > 0.0)) fail(ErrorKind::DegenerateDistribution, "zero probability mass on the restricted index set");
  Vec out(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) out[static_cast<Eigen::Index>(k)] = probs[indices[k]] / mass;
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::DimMismatch, "pearson: series of different length");
  if (x.size() < 2) fail(ErrorKind::InvalidArgument, "pearson: need at least two observations");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::ConstantSeries, "pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    // positions i..j-1 hold ranks i+1..j
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::DimMismatch, "spearman: series of different length");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

Vec Pca::project(const Vec& row) const {
  require_same_dim(row, mean, "pca project");
  return axes * (row - mean);
}

std::vector<Vec> Pca::project(const std::vector<Vec>& rows) const {
  std::vector<Vec> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(project(r));
  return out;
}

Vec Pca::reconstruct(const Vec& coords) const {
  if (coords.size() != axes.rows()) fail(ErrorKind::DimMismatch, "pca reconstruct");
  return mean + axes.transpose() * coords;
}

Vec Pca::explained_variance_ratio() const {
  if (total_variance <= 0.0) return Vec::Zero(explained_variance.size());
  return explained_variance / total_variance;
}

Pca pca_fit(const std::vector<Vec>& rows, std::size_t target_dim) {
  if (rows.empty()) fail(ErrorKind::EmptySplit, "pca on an empty row set");
  const auto d = static_cast<std::size_t>(rows.front().size());
  if (target_dim == 0 || target_dim > d || target_dim > rows.size()) {
    fail(ErrorKind::DimMismatch, "pca target_dim " + std::to_string(target_dim) + " exceeds min(d=" +
                                     std::to_string(d) + ", rows=" + std::to_string(rows.size()) + ")");
  }
  Matrix data(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require_same_dim(rows[i], rows.front(), "pca rows");
    data.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  Pca pca;
  pca.mean = data.colwise().mean().transpose();
  data.rowwise() -= pca.mean.transpose();
  const Matrix cov = (data.transpose() * data) / static_cast<double>(rows.size());

  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  const Vec& values = solver.eigenvalues();      // ascending
  const Matrix& vectors = solver.eigenvectors();  // columns

  const auto k = static_cast<Eigen::Index>(target_dim);
  const auto dd = static_cast<Eigen::Index>(d);
  pca.axes.resize(k, dd);
  pca.explained_variance.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Vec axis = vectors.col(dd - 1 - i);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0.0) axis = -axis;
    pca.axes.row(i) = axis.transpose();
    pca.explained_variance[i] = std::max(0.0, values[dd - 1 - i]);
  }
  pca.total_variance = cov.trace();
  return pca;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) fail(ErrorKind::InvalidArgument, "Rng::below(0)");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // rejection keeps the draw unbiased
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x = 0;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

Rng Rng::split(std::uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL))); }

}  // namespace cmgan
