#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace xtrial {

// Dense row-major design matrix. The intercept column is always present and
// always first; builders enforce this.
struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major
  std::vector<std::string> col_names;

  static DesignMatrix intercept_only(std::size_t n);

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  // New matrix restricted to the given rows (kept in the given order).
  DesignMatrix select_rows(std::span<const std::size_t> rows_idx) const;
};

enum class GlmFamily { logistic, linear };

struct GlmFit {
  GlmFamily family = GlmFamily::logistic;
  std::vector<double> coefficients;  // dropped collinear columns recorded as 0
  std::vector<bool> dropped;         // per-column: excluded as collinear
  bool converged = false;
  bool separation = false;
  int iterations = 0;
  double deviance = std::numeric_limits<double>::quiet_NaN();
};

struct FluctuationFit {
  double epsilon = 0.0;
  bool converged = false;
  int iterations = 0;
  double score = std::numeric_limits<double>::quiet_NaN();  // residual score at epsilon
};

double expit(double x);
double logit(double p);

// Weighted quasi-binomial regression by IRLS. Outcomes may be fractional in
// [0,1]. Never throws for statistical degeneracy: separation or an iteration
// cap yields converged=false with the last stable iterate.
GlmFit fit_logistic(const DesignMatrix& x, std::span<const double> y,
                    std::span<const double> w, std::span<const double> offset);
GlmFit fit_logistic(const DesignMatrix& x, std::span<const double> y);

// Weighted least squares. Collinear columns are resolved by dropping the
// later column (coefficient 0), so duplicated columns keep the fit identical.
GlmFit fit_linear(const DesignMatrix& x, std::span<const double> y,
                  std::span<const double> w);
GlmFit fit_linear(const DesignMatrix& x, std::span<const double> y);

// One-parameter logistic fluctuation: solves
//   sum_i w_i h_i (y_i - expit(offset_i + eps * h_i)) = 0
// for eps by safeguarded Newton. |score| <= 1e-10 at the returned eps.
FluctuationFit fit_fluctuation(std::span<const double> offset_logit,
                               std::span<const double> h,
                               std::span<const double> y,
                               std::span<const double> subset_weights);
FluctuationFit fit_fluctuation(std::span<const double> offset_logit,
                               std::span<const double> h,
                               std::span<const double> y);

// Fitted values: expit(offset + x b) for logistic, offset + x b for linear.
std::vector<double> predict(const GlmFit& fit, const DesignMatrix& x,
                            std::span<const double> offset);
std::vector<double> predict(const GlmFit& fit, const DesignMatrix& x);

}  // namespace xtrial
