#pragma once

#include <span>
#include <string>
#include <vector>

#include "xtrial/dataset.hpp"

namespace xtrial {

// Maps the immune response onto the open unit interval for the logistic
// working model, and back. For log10 estimands the affine map acts on
// log10(s) and results are reported on the log scale.
struct OutcomeTransform {
  enum class Kind { identity, affine_to_unit, log10_then_affine };
  Kind kind = Kind::identity;
  double a_min = 0.0;
  double a_max = 1.0;  // map: u = (v - a_min) / (a_max - a_min)

  double slope() const { return a_max - a_min; }
  double to_unit(double s) const;
  double from_unit(double u) const;         // exact inverse (original s scale)
  double report_from_unit(double u) const;  // log10 kind: log-scale value
};

// Builds the transform from the observed immune responses (delta=1 units
// pooled across the evaluation trials) and returns their unit-scale images.
// identity/log10: observed range widened by `margin` of its width on each
// side. binary: fixed guard map with a_min=-0.05, a_max=1.05. A margin of 0
// with values already inside (0,1) yields the identity transform.
std::pair<std::vector<double>, OutcomeTransform> scale_outcome(
    std::span<const double> s_observed, OutcomeScale scale, double margin = 0.1);

}  // namespace xtrial
