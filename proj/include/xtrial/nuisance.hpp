#pragma once

#include <optional>
#include <vector>

#include "xtrial/dataset.hpp"
#include "xtrial/glm.hpp"

namespace xtrial {

enum class GDeltaMode {
  known,    // design weights where available, per-trial fit otherwise
  estimate  // always fit per trial
};

GDeltaMode parse_gdelta_mode(const std::string& s);

// Design-truth override used when the g-models are known rather than fitted
// (simulation diagnostics, known-randomization analyses).
struct NuisanceOverride {
  std::vector<double> g_t_w;      // per-unit P(T in T_ref | W)
  double g_t_marginal = 0.0;
  std::vector<double> g_a_w;      // per-unit P(A = a | W)
};

// The three g-type nuisance parameters, fitted and evaluated per unit.
// Evaluations of g_T(.|W) and g_A are truncated to [lo, hi]; g_delta is
// truncated from below only, so that all-sampled units keep g_delta = 1
// exactly.
struct FittedNuisances {
  GlmFit g_t_model;
  bool t_ref_is_all = false;  // T_ref covers every trial: constant-1 model
  double g_t_marginal = 0.0;
  GlmFit g_a_model;
  bool g_overridden = false;

  std::vector<double> g_t_w;     // per-unit, truncated
  std::vector<double> g_a_w;     // per-unit, truncated
  std::vector<double> g_delta;   // per-unit, 1 exactly for all-sampled units

  double trunc_lo = 0.005;
  double trunc_hi = 0.995;
};

// Step 1: referent-trial membership on W_S over all units, plus the marginal
// fraction. T_ref equal to every registered trial yields the constant-1
// model (flagged via the returned marginal == 1 and an intercept-free fit).
std::pair<GlmFit, double> fit_trial_membership(const StackedDataset& ds,
                                               const EstimandSpec& spec);

// Step 2: pooled P(A = a | W_S) over all units, all trials.
GlmFit fit_treatment(const StackedDataset& ds, const EstimandSpec& spec);

// Step 3: per-unit sampling probabilities. All-sampled trials give exactly 1
// (a known weight overrides); two-phase trials use known weights when every
// unit carries one (mode known), otherwise a per-trial regression of delta
// on (arm, y, W_{Delta,S}).
std::vector<double> resolve_sampling(const StackedDataset& ds, const EstimandSpec& spec,
                                     GDeltaMode mode);

FittedNuisances fit_nuisances(const StackedDataset& ds, const EstimandSpec& spec,
                              GDeltaMode mode,
                              const std::optional<NuisanceOverride>& override_g = {});

struct NuisanceTable {
  std::vector<double> g_t_w;
  std::vector<double> g_a_w;
  std::vector<double> g_delta;
};

// Per-unit (g_T(T_ref|W_i), g_A(a|W_i), g_delta_i), truncated.
NuisanceTable evaluate(const FittedNuisances& fn, const StackedDataset& ds,
                       const EstimandSpec& spec);

double truncate_probability(double p, double lo, double hi);

}  // namespace xtrial
