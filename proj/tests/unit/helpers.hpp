#pragma once

#include "gcate/io.hpp"
#include "gcate/linalg.hpp"
#include "gcate/stats.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

namespace gcate::test {

inline MatrixXd gaussian_matrix(Index rows, Index cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  MatrixXd M(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) M(i, j) = nd(rng);
  return M;
}

/// A +-0.5 group covariate plus an intercept.
inline MatrixXd two_column_design(Index n, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  MatrixXd X(n, 2);
  for (Index i = 0; i < n; ++i) {
    X(i, 0) = coin(rng) ? 0.5 : -0.5;
    X(i, 1) = 1.0;
  }
  X(0, 0) = 0.5;
  X(1, 0) = -0.5;
  return X;
}

/// A fresh directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gcate_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace gcate::test
