#pragma once

#include <optional>
#include <string>
#include <vector>

#include "xtrial/dataset.hpp"
#include "xtrial/glm.hpp"
#include "xtrial/nuisance.hpp"
#include "xtrial/transform.hpp"

namespace xtrial {

struct TmleOptions {
  GDeltaMode gdelta_mode = GDeltaMode::known;
  double scale_margin = 0.1;
  // Diagnostic switches.
  bool q2_intercept_only = false;                 // deliberately misspecify Q2
  std::optional<NuisanceOverride> known_g;        // bypass g-model fitting
};

// The two sequential outcome regressions and their targeted versions, on the
// unit scale. Vectors have full dataset length; positions that are never
// evaluated hold NaN. q2 is fitted on delta=1, A=a, T in T_a units only; q1
// on A=a units in T_a only.
struct SequentialRegressions {
  GlmFit q2;
  FluctuationFit beta2;
  GlmFit q1;
  FluctuationFit beta1;
  std::vector<double> s_unit;  // unit-scale S, NaN where not measured
  std::vector<double> q2_init, q2_star;
  std::vector<double> q1_init, q1_star;
  std::vector<double> h2, h1;  // clever covariates
};

struct EstimateResult {
  std::string method;  // "tmle", "tmle_full_data" or "unadjusted"
  int vaccine = 0;
  std::vector<int> t_ref;
  OutcomeScale scale = OutcomeScale::identity;
  std::size_t n = 0;  // stacked dataset size

  double psi = 0.0;             // reporting scale (log10 estimands: log scale)
  double psi_unit_scale = 0.0;  // plug-in mean on the unit interval
  double se = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  std::vector<double> eif;      // reporting scale, length n
  double beta2 = 0.0, beta1 = 0.0;
  double mean_eif = 0.0;
  bool degenerate_se = false;
  OutcomeTransform transform;

  struct Diagnostics {
    bool g_t_converged = true, g_a_converged = true;
    bool q2_converged = true, q1_converged = true;
    bool q2_separation = false, q1_separation = false;
    int beta2_iterations = 0, beta1_iterations = 0;
    double g_t_marginal = 0.0;
  } diagnostics;
};

inline constexpr double kCiZ = 1.96;  // 95% Wald multiplier

// The full 8-step targeted estimator of the standardized mean immune
// response of vaccine `spec.vaccine_a` in the referent population.
EstimateResult run_tmle(const StackedDataset& ds, const EstimandSpec& spec,
                        const TmleOptions& options = {});

// The full-data variant: ignores the sampling indicator entirely (every unit
// must have S measured) and scores with the two-term full-data influence
// function. On an all-sampled dataset it coincides with run_tmle term by
// term.
EstimateResult run_tmle_full_data(const StackedDataset& ds, const EstimandSpec& spec,
                                  const TmleOptions& options = {});

// Three-term observed-data influence function, on the unit scale.
std::vector<double> compute_eif(const StackedDataset& ds, const EstimandSpec& spec,
                                const FittedNuisances& fn, const SequentialRegressions& sr,
                                double psi_unit);

// Two-term full-data influence function with Qbar = the targeted composite
// regression (sr.q1_star), on the unit scale.
std::vector<double> compute_eif_full_data(const StackedDataset& ds,
                                          const EstimandSpec& spec,
                                          const FittedNuisances& fn,
                                          const SequentialRegressions& sr,
                                          double psi_unit);

// The benchmark: inverse-probability-of-sampling weighted (Hajek) mean of S
// over delta=1 units of the given arm and trials. Reduces to the plain arm
// mean when everything is sampled.
EstimateResult estimate_unadjusted(const StackedDataset& ds, int arm,
                                   const std::vector<int>& trials,
                                   OutcomeScale scale = OutcomeScale::identity,
                                   GDeltaMode mode = GDeltaMode::known,
                                   const std::vector<std::string>& w_delta = {});

}  // namespace xtrial
