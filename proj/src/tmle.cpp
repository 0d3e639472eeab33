// Targeted minimum loss estimation of covariate-standardized vaccine
// immunogenicity, with influence-function inference. The estimator follows
// the sequential-regression recipe: fit the g-models, fit the conditional
// mean of S given (Y, W_{Delta,S}) on the sampled vaccine-a units, fluctuate
// it along the clever covariate H2, project the targeted predictions onto
// W_S, fluctuate again along H1, and average the result over the referent
// trials. Both targeting steps are one-shot; the pair is not iterated.

#include "xtrial/tmle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "xtrial/design.hpp"
#include "xtrial/errors.hpp"

namespace xtrial {

namespace {

constexpr double kLogitClip = 1e-6;  // predictions clipped before logit
const double kNaN = std::numeric_limits<double>::quiet_NaN();

double clip_unit(double p) { return std::clamp(p, kLogitClip, 1.0 - kLogitClip); }

double sample_sd(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// 95% interval on the reporting scale. Binary (response-rate) estimands get
// a Wald interval on the logit scale, back-transformed; other scales are
// symmetric.
void fill_ci(EstimateResult& r) {
  if (r.se == 0.0) {
    r.ci_lo = r.ci_hi = r.psi;
    r.degenerate_se = true;
    return;
  }
  if (r.scale == OutcomeScale::binary && r.psi > 0.0 && r.psi < 1.0) {
    const double l = logit(r.psi);
    const double se_l = r.se / (r.psi * (1.0 - r.psi));
    r.ci_lo = expit(l - kCiZ * se_l);
    r.ci_hi = expit(l + kCiZ * se_l);
  } else {
    r.ci_lo = r.psi - kCiZ * r.se;
    r.ci_hi = r.psi + kCiZ * r.se;
  }
}

struct RowSets {
  std::vector<std::size_t> d2;        // delta=1, arm=a, trial in T_a
  std::vector<std::size_t> d1;        // arm=a, trial in T_a
  std::vector<std::size_t> ref;       // trial in T_ref
  std::vector<std::size_t> pool;      // delta=1, trial in T_a (outcome scaling)
  std::vector<std::size_t> q1_eval;   // d1 union ref
};

RowSets classify_rows(const StackedDataset& ds, const EstimandSpec& spec) {
  RowSets r;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool in_ta = spec.ta_contains(ds.trial(i));
    const bool is_a = ds.arm(i) == spec.vaccine_a;
    if (is_a && !in_ta)
      throw std::invalid_argument(
          "run_tmle: unit " + std::to_string(i) + " received vaccine " +
          std::to_string(spec.vaccine_a) + " outside the declared evaluation trials");
    if (in_ta && ds.delta(i) == 1) r.pool.push_back(i);
    if (is_a && in_ta) {
      r.d1.push_back(i);
      if (ds.delta(i) == 1) r.d2.push_back(i);
    }
    if (spec.ref_contains(ds.trial(i))) r.ref.push_back(i);
  }
  r.q1_eval = r.d1;
  r.q1_eval.insert(r.q1_eval.end(), r.ref.begin(), r.ref.end());
  std::sort(r.q1_eval.begin(), r.q1_eval.end());
  r.q1_eval.erase(std::unique(r.q1_eval.begin(), r.q1_eval.end()), r.q1_eval.end());
  return r;
}

struct TmleCore {
  FittedNuisances fn;
  SequentialRegressions sr;
  RowSets rows;
  OutcomeTransform transform;
  std::vector<double> s_unit;  // full length, NaN where S absent
  double psi_unit = 0.0;
};

// Steps 1-8 shared by the observed-data and full-data estimators. When
// `full_data` is set the sampling indicator is ignored: every unit must have
// S measured and g_delta is identically 1.
TmleCore run_core(const StackedDataset& ds, const EstimandSpec& spec,
                  const TmleOptions& options, bool full_data) {
  if (spec.t_ref.empty()) throw std::invalid_argument("run_tmle: empty referent set");
  const std::size_t n = ds.size();

  RowSets rows = classify_rows(ds, spec);
  if (full_data) {
    for (std::size_t i = 0; i < n; ++i)
      if (ds.delta(i) != 1)
        throw std::invalid_argument(
            "run_tmle_full_data: unit " + std::to_string(i) + " has delta=0");
  }
  if (rows.d2.empty())
    throw EstimationError("run_tmle: no sampled units received vaccine " +
                          std::to_string(spec.vaccine_a) + " in the evaluation trials");
  if (rows.ref.empty())
    throw EstimationError("run_tmle: no units in the referent trials");

  TmleCore core;
  core.rows = std::move(rows);
  const RowSets& rs = core.rows;

  core.fn = fit_nuisances(ds, spec, options.gdelta_mode, options.known_g);
  if (full_data) core.fn.g_delta.assign(n, 1.0);

  // Outcome scaling from the sampled units pooled across the evaluation
  // trials, widened so images are strictly interior.
  std::vector<double> s_pool(rs.pool.size());
  for (std::size_t k = 0; k < rs.pool.size(); ++k) s_pool[k] = ds.s(rs.pool[k]);
  auto [pool_unit, transform] = scale_outcome(s_pool, spec.scale, options.scale_margin);
  core.transform = transform;
  core.s_unit.assign(n, kNaN);
  for (std::size_t k = 0; k < rs.pool.size(); ++k) core.s_unit[rs.pool[k]] = pool_unit[k];

  SequentialRegressions& sr = core.sr;
  sr.q2_init.assign(n, kNaN);
  sr.q2_star.assign(n, kNaN);
  sr.q1_init.assign(n, kNaN);
  sr.q1_star.assign(n, kNaN);
  sr.h2.assign(n, kNaN);
  sr.h1.assign(n, kNaN);

  // Clever covariates wherever the targeted regressions get evaluated.
  const double marg = core.fn.g_t_marginal;
  if (!(marg > 0.0))
    throw EstimationError("run_tmle: marginal referent probability is zero");
  for (std::size_t i : rs.d1) {
    const double denom1 = core.fn.g_a_w[i] * marg;
    sr.h1[i] = core.fn.g_t_w[i] / denom1;
    sr.h2[i] = core.fn.g_t_w[i] / (core.fn.g_delta[i] * denom1);
  }
  for (std::size_t i : rs.q1_eval) {
    if (!std::isnan(sr.h1[i])) continue;
    sr.h1[i] = core.fn.g_t_w[i] / (core.fn.g_a_w[i] * marg);
  }

  // Step 4: conditional mean immune response given (Y, W_{Delta,S}).
  DesignSpec q2_design;
  if (!options.q2_intercept_only) {
    q2_design.covariates = spec.w_delta_s();
    q2_design.include_y = true;
  }
  {
    const DesignMatrix x_fit = make_design(ds, q2_design, rs.d2);
    std::vector<double> y_fit(rs.d2.size());
    for (std::size_t k = 0; k < rs.d2.size(); ++k) y_fit[k] = core.s_unit[rs.d2[k]];
    sr.q2 = fit_logistic(x_fit, y_fit);
    const DesignMatrix x_eval = make_design(ds, q2_design, rs.d1);
    const std::vector<double> pred = predict(sr.q2, x_eval);
    for (std::size_t k = 0; k < rs.d1.size(); ++k) sr.q2_init[rs.d1[k]] = pred[k];
  }

  // Step 5: fluctuate along H2 on the sampled vaccine-a units.
  {
    std::vector<double> off(rs.d2.size()), h(rs.d2.size()), y(rs.d2.size());
    for (std::size_t k = 0; k < rs.d2.size(); ++k) {
      const std::size_t i = rs.d2[k];
      off[k] = logit(clip_unit(sr.q2_init[i]));
      h[k] = sr.h2[i];
      y[k] = core.s_unit[i];
    }
    sr.beta2 = fit_fluctuation(off, h, y);
    if (!sr.beta2.converged) {
      std::ostringstream os;
      os << "step-5 fluctuation did not converge (score " << sr.beta2.score << " after "
         << sr.beta2.iterations << " iterations)";
      throw EstimationError("run_tmle: " + os.str(), os.str());
    }
    for (std::size_t i : rs.d1)
      sr.q2_star[i] = expit(logit(clip_unit(sr.q2_init[i])) + sr.beta2.epsilon * sr.h2[i]);
  }

  // Step 6: project the targeted predictions onto W_S over vaccine-a units.
  {
    const DesignMatrix x_fit = make_design(ds, DesignSpec{spec.w_s, false, false}, rs.d1);
    std::vector<double> y_fit(rs.d1.size());
    for (std::size_t k = 0; k < rs.d1.size(); ++k) y_fit[k] = sr.q2_star[rs.d1[k]];
    sr.q1 = fit_logistic(x_fit, y_fit);
    const DesignMatrix x_eval =
        make_design(ds, DesignSpec{spec.w_s, false, false}, rs.q1_eval);
    const std::vector<double> pred = predict(sr.q1, x_eval);
    for (std::size_t k = 0; k < rs.q1_eval.size(); ++k)
      sr.q1_init[rs.q1_eval[k]] = pred[k];
  }

  // Step 7: fluctuate along H1 on all vaccine-a units.
  {
    std::vector<double> off(rs.d1.size()), h(rs.d1.size()), y(rs.d1.size());
    for (std::size_t k = 0; k < rs.d1.size(); ++k) {
      const std::size_t i = rs.d1[k];
      off[k] = logit(clip_unit(sr.q1_init[i]));
      h[k] = sr.h1[i];
      y[k] = sr.q2_star[i];
    }
    sr.beta1 = fit_fluctuation(off, h, y);
    if (!sr.beta1.converged) {
      std::ostringstream os;
      os << "step-7 fluctuation did not converge (score " << sr.beta1.score << " after "
         << sr.beta1.iterations << " iterations)";
      throw EstimationError("run_tmle: " + os.str(), os.str());
    }
    for (std::size_t i : rs.q1_eval)
      sr.q1_star[i] = expit(logit(clip_unit(sr.q1_init[i])) + sr.beta1.epsilon * sr.h1[i]);
  }

  // Step 8: plug in over the referent trials.
  double acc = 0.0;
  for (std::size_t i : rs.ref) acc += sr.q1_star[i];
  core.psi_unit = acc / static_cast<double>(rs.ref.size());
  return core;
}

EstimateResult finalize(const StackedDataset& ds, const EstimandSpec& spec,
                        TmleCore& core, std::vector<double> eif_unit,
                        const char* method) {
  const std::size_t n = ds.size();
  EstimateResult r;
  r.method = method;
  r.vaccine = spec.vaccine_a;
  r.t_ref = spec.t_ref;
  r.scale = spec.scale;
  r.n = n;
  r.transform = core.transform;
  r.psi_unit_scale = core.psi_unit;
  r.psi = core.transform.report_from_unit(core.psi_unit);
  r.beta2 = core.sr.beta2.epsilon;
  r.beta1 = core.sr.beta1.epsilon;

  const double slope =
      core.transform.kind == OutcomeTransform::Kind::identity ? 1.0 : core.transform.slope();
  r.eif.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.eif[i] = slope * eif_unit[i];
  r.se = sample_sd(r.eif) / std::sqrt(static_cast<double>(n));
  r.mean_eif = mean_of(r.eif);
  fill_ci(r);

  r.diagnostics.g_t_converged = core.fn.t_ref_is_all || core.fn.g_overridden ||
                                core.fn.g_t_model.converged;
  r.diagnostics.g_a_converged = core.fn.g_overridden || core.fn.g_a_model.converged;
  r.diagnostics.q2_converged = core.sr.q2.converged;
  r.diagnostics.q1_converged = core.sr.q1.converged;
  r.diagnostics.q2_separation = core.sr.q2.separation;
  r.diagnostics.q1_separation = core.sr.q1.separation;
  r.diagnostics.beta2_iterations = core.sr.beta2.iterations;
  r.diagnostics.beta1_iterations = core.sr.beta1.iterations;
  r.diagnostics.g_t_marginal = core.fn.g_t_marginal;
  return r;
}

}  // namespace

std::vector<double> compute_eif(const StackedDataset& ds, const EstimandSpec& spec,
                                const FittedNuisances& fn, const SequentialRegressions& sr,
                                double psi_unit) {
  const std::size_t n = ds.size();
  std::vector<double> eif(n, 0.0);
  const double marg = fn.g_t_marginal;
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0.0;
    const bool is_a = ds.arm(i) == spec.vaccine_a && spec.ta_contains(ds.trial(i));
    if (is_a) {
      const double factor = fn.g_t_w[i] / (fn.g_a_w[i] * marg);
      if (ds.delta(i) == 1) {
        // S_i is on the unit scale here; sr holds unit-scale predictions.
        v += factor / fn.g_delta[i] * (sr.s_unit[i] - sr.q2_star[i]);
      }
      v += factor * (sr.q2_star[i] - sr.q1_star[i]);
    }
    if (spec.ref_contains(ds.trial(i))) v += (sr.q1_star[i] - psi_unit) / marg;
    eif[i] = v;
  }
  return eif;
}

std::vector<double> compute_eif_full_data(const StackedDataset& ds,
                                          const EstimandSpec& spec,
                                          const FittedNuisances& fn,
                                          const SequentialRegressions& sr,
                                          double psi_unit) {
  const std::size_t n = ds.size();
  std::vector<double> eif(n, 0.0);
  const double marg = fn.g_t_marginal;
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0.0;
    const bool is_a = ds.arm(i) == spec.vaccine_a && spec.ta_contains(ds.trial(i));
    if (is_a) {
      const double factor = fn.g_t_w[i] / (fn.g_a_w[i] * marg);
      v += factor * (sr.s_unit[i] - sr.q1_star[i]);
    }
    if (spec.ref_contains(ds.trial(i))) v += (sr.q1_star[i] - psi_unit) / marg;
    eif[i] = v;
  }
  return eif;
}

EstimateResult run_tmle(const StackedDataset& ds, const EstimandSpec& spec,
                        const TmleOptions& options) {
  TmleCore core = run_core(ds, spec, options, false);
  core.sr.s_unit = core.s_unit;
  std::vector<double> eif = compute_eif(ds, spec, core.fn, core.sr, core.psi_unit);
  return finalize(ds, spec, core, std::move(eif), "tmle");
}

EstimateResult run_tmle_full_data(const StackedDataset& ds, const EstimandSpec& spec,
                                  const TmleOptions& options) {
  TmleCore core = run_core(ds, spec, options, true);
  core.sr.s_unit = core.s_unit;
  std::vector<double> eif =
      compute_eif_full_data(ds, spec, core.fn, core.sr, core.psi_unit);
  return finalize(ds, spec, core, std::move(eif), "tmle_full_data");
}

EstimateResult estimate_unadjusted(const StackedDataset& ds, int arm,
                                   const std::vector<int>& trials, OutcomeScale scale,
                                   GDeltaMode mode,
                                   const std::vector<std::string>& w_delta) {
  const std::size_t n = ds.size();
  std::vector<int> sorted_trials = trials;
  std::sort(sorted_trials.begin(), sorted_trials.end());

  EstimandSpec sampling_spec;
  sampling_spec.vaccine_a = arm;
  sampling_spec.t_ref = sorted_trials;
  sampling_spec.t_a = sorted_trials;
  sampling_spec.w_delta = w_delta;
  const std::vector<double> g_delta = resolve_sampling(ds, sampling_spec, mode);

  std::vector<std::size_t> subpop, sampled;
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.arm(i) != arm) continue;
    if (!std::binary_search(sorted_trials.begin(), sorted_trials.end(), ds.trial(i)))
      continue;
    subpop.push_back(i);
    if (ds.delta(i) == 1) sampled.push_back(i);
  }
  if (sampled.empty())
    throw EstimationError("estimate_unadjusted: no sampled units in arm " +
                          std::to_string(arm));

  auto outcome = [&](std::size_t i) {
    const double s = ds.s(i);
    if (scale == OutcomeScale::log10) {
      if (!(s > 0.0))
        throw DomainError("estimate_unadjusted: log10 scale with s <= 0 at unit " +
                          std::to_string(i));
      return std::log10(s);
    }
    return s;
  };

  const std::size_t m = subpop.size();
  double num = 0.0, den = 0.0;
  for (std::size_t i : sampled) {
    const double w = 1.0 / g_delta[i];
    num += w * outcome(i);
    den += w;
  }
  const double mu = num / den;
  const double wbar = den / static_cast<double>(m);

  // Hajek influence function over the (arm, trials) sample; zero-padded to
  // the stacked length for unit-aligned contrasts.
  std::vector<double> infl_sub(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = subpop[k];
    if (ds.delta(i) == 1)
      infl_sub[k] = (outcome(i) - mu) / (g_delta[i] * wbar);
  }

  EstimateResult r;
  r.method = "unadjusted";
  r.vaccine = arm;
  r.t_ref = sorted_trials;
  r.scale = scale;
  r.n = n;
  r.psi = mu;
  r.psi_unit_scale = mu;
  r.se = sample_sd(infl_sub) / std::sqrt(static_cast<double>(m));
  r.eif.assign(n, 0.0);
  const double inflate = static_cast<double>(n) / static_cast<double>(m);
  for (std::size_t k = 0; k < m; ++k) r.eif[subpop[k]] = inflate * infl_sub[k];
  r.mean_eif = mean_of(r.eif);
  if (scale == OutcomeScale::binary && (mu <= 0.0 || mu >= 1.0)) {
    r.ci_lo = std::max(0.0, mu - kCiZ * r.se);
    r.ci_hi = std::min(1.0, mu + kCiZ * r.se);
    r.degenerate_se = true;
  } else {
    fill_ci(r);
  }
  return r;
}

}  // namespace xtrial
