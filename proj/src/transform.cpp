#include "xtrial/transform.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xtrial/errors.hpp"

namespace xtrial {

double OutcomeTransform::to_unit(double s) const {
  switch (kind) {
    case Kind::identity: return s;
    case Kind::affine_to_unit: return (s - a_min) / (a_max - a_min);
    case Kind::log10_then_affine: return (std::log10(s) - a_min) / (a_max - a_min);
  }
  return s;
}

double OutcomeTransform::from_unit(double u) const {
  switch (kind) {
    case Kind::identity: return u;
    case Kind::affine_to_unit: return a_min + u * (a_max - a_min);
    case Kind::log10_then_affine: return std::pow(10.0, a_min + u * (a_max - a_min));
  }
  return u;
}

double OutcomeTransform::report_from_unit(double u) const {
  if (kind == Kind::log10_then_affine) return a_min + u * (a_max - a_min);
  return from_unit(u);
}

std::pair<std::vector<double>, OutcomeTransform> scale_outcome(
    std::span<const double> s_observed, OutcomeScale scale, double margin) {
  if (s_observed.empty())
    throw DomainError("scale_outcome: no observed immune responses");

  OutcomeTransform t;
  std::vector<double> values(s_observed.begin(), s_observed.end());

  if (scale == OutcomeScale::log10) {
    std::ostringstream bad;
    std::size_t n_bad = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] > 0.0)) {
        if (n_bad < 10) bad << (n_bad ? ", " : "") << i;
        ++n_bad;
      }
    }
    if (n_bad > 0)
      throw DomainError("scale_outcome: log10 requested but " + std::to_string(n_bad) +
                        " observed value(s) are <= 0 (positions " + bad.str() + ")");
    for (double& v : values) v = std::log10(v);
  }

  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double mn = *mn_it, mx = *mx_it;

  if (scale == OutcomeScale::binary) {
    t.kind = OutcomeTransform::Kind::affine_to_unit;
    t.a_min = -0.05;
    t.a_max = 1.05;
  } else {
    if (mx == mn)
      throw DomainError("scale_outcome: observed immune responses are constant (" +
                        std::to_string(mn) + "); the unit-interval map is degenerate");
    if (margin == 0.0 && mn > 0.0 && mx < 1.0 && scale == OutcomeScale::identity) {
      t.kind = OutcomeTransform::Kind::identity;
      return {std::move(values), t};
    }
    const double width = mx - mn;
    t.kind = scale == OutcomeScale::log10 ? OutcomeTransform::Kind::log10_then_affine
                                          : OutcomeTransform::Kind::affine_to_unit;
    t.a_min = mn - margin * width;
    t.a_max = mx + margin * width;
  }

  std::vector<double> unit(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    unit[i] = (values[i] - t.a_min) / (t.a_max - t.a_min);
  return {std::move(unit), t};
}

}  // namespace xtrial
