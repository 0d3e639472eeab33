// The g-type nuisance parameters of the influence function: referent-trial
// membership, pooled treatment assignment, and two-phase sampling.

#include "xtrial/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xtrial/design.hpp"
#include "xtrial/errors.hpp"

namespace xtrial {

GDeltaMode parse_gdelta_mode(const std::string& s) {
  if (s == "known") return GDeltaMode::known;
  if (s == "estimate") return GDeltaMode::estimate;
  throw DomainError("unknown g_delta mode '" + s + "' (expected known or estimate)");
}

double truncate_probability(double p, double lo, double hi) {
  return std::clamp(p, lo, hi);
}

std::pair<GlmFit, double> fit_trial_membership(const StackedDataset& ds,
                                               const EstimandSpec& spec) {
  const std::size_t n = ds.size();
  if (n == 0) throw std::invalid_argument("fit_trial_membership: empty dataset");

  std::size_t n_ref = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (spec.ref_contains(ds.trial(i))) ++n_ref;
  const double marginal = static_cast<double>(n_ref) / static_cast<double>(n);

  // T_ref spanning every registered trial forces the degenerate constant-1
  // model; a single-class regression is undefined.
  bool all = true;
  for (const auto& [label, info] : ds.registry())
    if (!spec.ref_contains(label)) all = false;
  if (all) {
    GlmFit constant;
    constant.family = GlmFamily::logistic;
    constant.converged = true;
    return {constant, marginal};
  }
  if (n_ref == 0)
    throw EstimationError("fit_trial_membership: no units in the referent trials");

  std::vector<double> indicator(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    indicator[i] = spec.ref_contains(ds.trial(i)) ? 1.0 : 0.0;
  const DesignMatrix x = make_design(ds, DesignSpec{spec.w_s, false, false});
  return {fit_logistic(x, indicator), marginal};
}

GlmFit fit_treatment(const StackedDataset& ds, const EstimandSpec& spec) {
  const std::size_t n = ds.size();
  std::vector<double> indicator(n, 0.0);
  std::size_t n_a = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.arm(i) == spec.vaccine_a) {
      indicator[i] = 1.0;
      ++n_a;
    }
  }
  if (n_a == 0)
    throw EstimationError("fit_treatment: no units received vaccine " +
                          std::to_string(spec.vaccine_a));
  const DesignMatrix x = make_design(ds, DesignSpec{spec.w_s, false, false});
  return fit_logistic(x, indicator);
}

std::vector<double> resolve_sampling(const StackedDataset& ds, const EstimandSpec& spec,
                                     GDeltaMode mode) {
  const std::size_t n = ds.size();
  std::vector<double> g(n, 1.0);

  for (const auto& [label, info] : ds.registry()) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i)
      if (ds.trial(i) == label) rows.push_back(i);
    if (rows.empty()) continue;

    if (info.design == TrialDesign::all_sampled) {
      for (std::size_t i : rows)
        g[i] = ds.has_weight_known(i) ? ds.weight_known(i) : 1.0;
      continue;
    }

    bool all_known = true;
    for (std::size_t i : rows)
      if (!ds.has_weight_known(i)) all_known = false;

    if (mode == GDeltaMode::known && all_known) {
      for (std::size_t i : rows) g[i] = ds.weight_known(i);
      continue;
    }

    // Per-trial regression of delta on (arm, y, W_{Delta,S}).
    std::size_t n1 = 0;
    for (std::size_t i : rows) n1 += ds.delta(i);
    if (n1 == 0 || n1 == rows.size())
      throw EstimationError("resolve_sampling: trial " + std::to_string(label) +
                            " is two-phase without known weights and has a single "
                            "delta class; sampling probabilities cannot be estimated");
    DesignSpec dspec;
    dspec.covariates = spec.w_delta_s();
    dspec.include_y = true;
    dspec.include_arm = true;
    const DesignMatrix x = make_design(ds, dspec, rows);
    std::vector<double> dvec(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) dvec[k] = ds.delta(rows[k]);
    const GlmFit fit = fit_logistic(x, dvec);
    const std::vector<double> pred = predict(fit, x);
    for (std::size_t k = 0; k < rows.size(); ++k) g[rows[k]] = pred[k];
  }

  // Lower truncation guards the influence-function denominators; the upper
  // bound is not applied so all-sampled units keep exactly 1.
  for (double& v : g) v = std::max(v, spec.trunc_lo);
  return g;
}

FittedNuisances fit_nuisances(const StackedDataset& ds, const EstimandSpec& spec,
                              GDeltaMode mode,
                              const std::optional<NuisanceOverride>& override_g) {
  const std::size_t n = ds.size();
  FittedNuisances fn;
  fn.trunc_lo = spec.trunc_lo;
  fn.trunc_hi = spec.trunc_hi;

  bool all = true;
  for (const auto& [label, info] : ds.registry())
    if (!spec.ref_contains(label)) all = false;
  fn.t_ref_is_all = all;

  if (override_g) {
    if (override_g->g_t_w.size() != n || override_g->g_a_w.size() != n)
      throw std::invalid_argument("fit_nuisances: override vectors must have length n");
    fn.g_overridden = true;
    fn.g_t_marginal = override_g->g_t_marginal;
    fn.g_t_w.resize(n);
    fn.g_a_w.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      fn.g_t_w[i] = all ? 1.0
                        : truncate_probability(override_g->g_t_w[i], spec.trunc_lo,
                                               spec.trunc_hi);
      fn.g_a_w[i] = truncate_probability(override_g->g_a_w[i], spec.trunc_lo, spec.trunc_hi);
    }
  } else {
    auto [gt_fit, marginal] = fit_trial_membership(ds, spec);
    fn.g_t_model = std::move(gt_fit);
    fn.g_t_marginal = marginal;
    fn.g_a_model = fit_treatment(ds, spec);

    if (all) {
      fn.g_t_w.assign(n, 1.0);
    } else {
      const DesignMatrix x = make_design(ds, DesignSpec{spec.w_s, false, false});
      fn.g_t_w = predict(fn.g_t_model, x);
      for (double& v : fn.g_t_w) v = truncate_probability(v, spec.trunc_lo, spec.trunc_hi);
    }
    {
      const DesignMatrix x = make_design(ds, DesignSpec{spec.w_s, false, false});
      fn.g_a_w = predict(fn.g_a_model, x);
      for (double& v : fn.g_a_w) v = truncate_probability(v, spec.trunc_lo, spec.trunc_hi);
    }
  }

  fn.g_delta = resolve_sampling(ds, spec, mode);
  return fn;
}

NuisanceTable evaluate(const FittedNuisances& fn, const StackedDataset& ds,
                       const EstimandSpec& spec) {
  (void)spec;
  if (fn.g_t_w.size() != ds.size() || fn.g_a_w.size() != ds.size() ||
      fn.g_delta.size() != ds.size())
    throw std::invalid_argument("evaluate: nuisances not fitted for this dataset");
  return NuisanceTable{fn.g_t_w, fn.g_a_w, fn.g_delta};
}

}  // namespace xtrial
