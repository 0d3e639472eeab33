#include "xtrial/contrasts.hpp"

#include <cmath>
#include <stdexcept>

namespace xtrial {

namespace {

// se of the per-unit difference of two unit-aligned influence vectors.
double joint_se(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += b[i] - a[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (b[i] - a[i]) - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(n - 1)) /
         std::sqrt(static_cast<double>(n));
}

void check_aligned(const EstimateResult& ra, const EstimateResult& rb,
                   const char* who) {
  if (ra.n != rb.n || ra.eif.size() != rb.eif.size())
    throw std::invalid_argument(std::string(who) +
                                ": estimates come from datasets of different size");
  if (ra.t_ref != rb.t_ref)
    throw std::invalid_argument(std::string(who) +
                                ": estimates use different referent trials");
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

WaldResult wald_test(double estimate, double se, double null_value) {
  if (se < 0.0) throw std::invalid_argument("wald_test: negative standard error");
  WaldResult r;
  if (se == 0.0) {
    r.degenerate = true;
    r.z = 0.0;
    r.p = estimate == null_value ? 1.0 : 0.0;
    return r;
  }
  r.z = (estimate - null_value) / se;
  r.p = std::erfc(std::abs(r.z) / std::sqrt(2.0));  // = 2 * (1 - Phi(|z|))
  return r;
}

ContrastResult contrast_difference(const EstimateResult& ra, const EstimateResult& rb) {
  check_aligned(ra, rb, "contrast_difference");
  if (ra.scale == OutcomeScale::log10 || rb.scale == OutcomeScale::log10)
    throw std::invalid_argument(
        "contrast_difference: log10-scale estimates take contrast_geomean_ratio");

  ContrastResult r;
  r.kind = ContrastKind::difference;
  r.linear_estimate = rb.psi - ra.psi;
  r.estimate = r.linear_estimate;
  r.se = joint_se(ra.eif, rb.eif);
  const WaldResult w = wald_test(r.estimate, r.se);
  r.z = w.z;
  r.p_value = w.p;
  r.degenerate = w.degenerate;
  r.ci_lo = r.estimate - kCiZ * r.se;
  r.ci_hi = r.estimate + kCiZ * r.se;
  r.a = ra;
  r.b = rb;
  return r;
}

ContrastResult contrast_geomean_ratio(const EstimateResult& ra_log,
                                      const EstimateResult& rb_log) {
  check_aligned(ra_log, rb_log, "contrast_geomean_ratio");
  if (ra_log.scale != OutcomeScale::log10 || rb_log.scale != OutcomeScale::log10)
    throw std::invalid_argument(
        "contrast_geomean_ratio: both estimates must be on the log10 scale");

  ContrastResult r;
  r.kind = ContrastKind::log_ratio;
  r.linear_estimate = rb_log.psi - ra_log.psi;
  r.se = joint_se(ra_log.eif, rb_log.eif);
  r.estimate = std::pow(10.0, r.linear_estimate);
  const WaldResult w = wald_test(r.linear_estimate, r.se);
  r.z = w.z;
  r.p_value = w.p;
  r.degenerate = w.degenerate;
  r.ci_lo = std::pow(10.0, r.linear_estimate - kCiZ * r.se);
  r.ci_hi = std::pow(10.0, r.linear_estimate + kCiZ * r.se);
  r.a = ra_log;
  r.b = rb_log;
  return r;
}

}  // namespace xtrial
