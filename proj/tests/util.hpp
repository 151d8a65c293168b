#pragma once

#include <optional>
#include <vector>

#include "doctest.h"

#include "cmgan/error.hpp"
#include "cmgan/numerics.hpp"

namespace testutil {

using cmgan::Matrix;
using cmgan::Vec;

template <typename F>
std::optional<cmgan::ErrorKind> error_of(F&& f) {
  try {
    f();
  } catch (const cmgan::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

#define CHECK_ERROR(expr, kind) CHECK(testutil::error_of([&] { (void)(expr); }) == std::optional{kind})

inline Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline Vec random_vec(cmgan::Rng& rng, std::size_t d, double scale = 1.0) {
  Vec v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

inline std::vector<Vec> random_vecs(cmgan::Rng& rng, std::size_t n, std::size_t d, double scale = 1.0) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_vec(rng, d, scale));
  return out;
}

}  // namespace testutil
