#pragma once

#include "xtrial/tmle.hpp"

namespace xtrial {

struct WaldResult {
  double z = 0.0;
  double p = 1.0;
  bool degenerate = false;  // se was zero
};

// Two-sided Wald test. se = 0 with estimate at the null reports p = 1,
// otherwise p = 0, both flagged degenerate.
WaldResult wald_test(double estimate, double se, double null_value = 0.0);

// Standard normal CDF.
double normal_cdf(double z);

enum class ContrastKind { difference, log_ratio };

struct ContrastResult {
  ContrastKind kind = ContrastKind::difference;
  double estimate = 0.0;         // difference, or ratio after exponentiation
  double linear_estimate = 0.0;  // psi_b - psi_a on the linear scale
  double se = 0.0;               // linear scale
  double ci_lo = 0.0, ci_hi = 0.0;  // reporting scale
  double z = 0.0;
  double p_value = 1.0;
  bool degenerate = false;
  EstimateResult a, b;
};

// psi_b - psi_a with joint influence-function inference: both estimates must
// come from the same stacked dataset and referent set, so their per-unit
// influence values subtract unit by unit.
ContrastResult contrast_difference(const EstimateResult& ra, const EstimateResult& rb);

// Ratio of geometric means: both inputs must be log10-scale estimates; the
// reported ratio is 10^(psi_b - psi_a) with the interval exponentiated from
// the log scale.
ContrastResult contrast_geomean_ratio(const EstimateResult& ra_log,
                                      const EstimateResult& rb_log);

}  // namespace xtrial
