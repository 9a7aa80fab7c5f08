#pragma once

// Small synthetic problems with a scalar nonlinear parameter, used for
// validating the samplers and selectors against brute-force oracles.

#include "parinv/posterior.hpp"

#include <cstdint>

namespace parinv {

struct SyntheticProblem {
  ProblemDefinition problem;
  PriorSpec prior;
  Vector m_true;
  Vector g_true;
  Vector u_free;
  double sigma = 0.0;
  double realized_relative_error = 0.0;
};

/// Blurring of a source profile on [0, 1] observed at n points:
/// A_d(i, k) = h * d / ((x_i - y_k)^2 + d^2), h = 1 / p, with the width d = m as
/// the nonlinear parameter. Identity regularizer.
struct ToyScalarConfig {
  Index n = 20;
  Index p = 50;
  double m_true = 0.2;
  double m_lower = 0.05;
  double m_upper = 0.5;
  double noise_fraction = 0.05;
  std::uint64_t seed = 1;
};

Matrix toy_kernel(Index n, Index p, double width);
SyntheticProblem make_toy_scalar(const ToyScalarConfig& config);

/// A_m = A_0 + m A_1 with Gaussian entries scaled by 1/sqrt(p), m in [-1, 1].
/// Identity regularizer.
struct DenseRandomConfig {
  Index n = 8;
  Index p = 12;
  double m_true = 0.3;
  double noise_fraction = 0.05;
  std::uint64_t seed = 1;
};

SyntheticProblem make_dense_random(const DenseRandomConfig& config);

}  // namespace parinv
