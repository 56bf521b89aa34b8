#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "wsindex/sparse.hpp"

namespace wsindex::linear {

enum class Loss { Logistic, Hinge };
enum class Penalty { L1, L2 };

std::string_view to_string(Loss l);
std::string_view to_string(Penalty p);

/// Objective penalty(w) + C * sum_a loss(y_a * (w . x_a + b)) with y in
/// {-1, +1}; penalty is 0.5 * ||w||^2 (L2) or ||w||_1 (L1); b is unpenalized.
struct Objective {
  /// Full objective, penalty included.
  double value = 0.0;
  /// The differentiable part: data term, plus the penalty under L2.
  double smooth_value = 0.0;
  /// (Sub)gradient of `smooth_value`. Under L1 the penalty is left to the
  /// proximal step.
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

Objective loss_gradient(std::span<const double> w, double b, const CsrMatrix& x,
                        std::span<const double> y, double C, Loss loss, Penalty penalty);

double objective_value(std::span<const double> w, double b, const CsrMatrix& x,
                       std::span<const double> y, double C, Loss loss, Penalty penalty);

struct FitOptions {
  double C = 1.0;
  std::size_t max_iters = 1000;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

struct FitResult {
  std::vector<double> w;
  double b = 0.0;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Logistic + L2: L-BFGS with Armijo backtracking.
/// Logistic + L1: FISTA with backtracking and soft-thresholding.
/// Hinge + L2: dual coordinate descent; the intercept is learned as the
///   weight of a constant unit feature and is therefore lightly penalized.
/// Hinge + L1: FISTA on the hinge smoothed over a width of 0.05.
/// The returned iterate never has a larger objective than w = 0, b = 0.
FitResult fit(const CsrMatrix& x, std::span<const double> y, Loss loss, Penalty penalty,
              const FitOptions& opts);

}  // namespace wsindex::linear
