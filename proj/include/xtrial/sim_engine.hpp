#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xtrial/dataset.hpp"
#include "xtrial/discrete_dgp.hpp"
#include "xtrial/tmle.hpp"

namespace xtrial {

// Generating scheme for one simulated trial. Sampling probabilities are
// indexed by the clinical outcome and by whether the unit is on the active
// arm; a trial with all probabilities equal to 1 registers as all-sampled.
struct TrialSimSpec {
  int label = 0;
  int n = 0;
  double p_w1 = 0.5;
  double p_w2 = 0.5;
  int active_vaccine = 1;
  // p_sample[y][active? 1 : 0]
  double p_sample[2][2] = {{1.0, 1.0}, {1.0, 1.0}};

  bool all_sampled() const;
};

struct ScenarioSpec {
  std::string name;
  std::vector<TrialSimSpec> trials;
  int control_label = 3;

  // Shared outcome model: S | A,W ~ Normal(w1 - w2 + s_active_shift * act,
  // s_sd), Y | S,A,W ~ Bernoulli(expit(y_intercept + y_active * act +
  // y_w1 * w1 + y_s * s)).
  double s_active_shift = 2.0;
  double s_sd = 1.0;
  double y_intercept = -2.0;
  double y_active = 1.0;
  double y_w1 = 0.5;
  double y_s = -0.5;

  std::uint64_t base_seed = 1;
  int replicates = 1000;

  std::vector<int> active_vaccines() const;
};

// Built-in presets scenario1, scenario2, scenario3.
ScenarioSpec scenario_preset(const std::string& name);
ScenarioSpec scenario_from_json_text(const std::string& text);
ScenarioSpec scenario_from_json_file(const std::string& path);
std::string scenario_to_json_text(const ScenarioSpec& spec);

// One replicate, fully determined by (spec.base_seed, replicate). Rows with
// delta=0 have S removed; the design sampling probability is recorded as the
// known weight on two-phase trials; Y is retained for every unit.
StackedDataset generate(const ScenarioSpec& spec, std::uint64_t replicate);

// Closed-form standardized mean: sum over referent trials of
// (n_t / n_ref_total) * (p_w1 - p_w2 + s_active_shift).
double analytic_truth(const ScenarioSpec& spec, const std::vector<int>& t_ref,
                      int vaccine);

// Discretization with S replaced by its conditional mean; feeds the exact
// identification oracle.
DiscreteDgp to_discrete_dgp(const ScenarioSpec& spec);

struct EstimandRequest {
  std::vector<int> t_ref;
  int vaccine = 0;
};

// The four standard rows: referent {all trials} and {first trial}, for each
// active vaccine.
std::vector<EstimandRequest> standard_estimands(const ScenarioSpec& spec);

struct MetricsRow {
  std::string scenario;
  std::vector<int> t_ref;
  int vaccine = 0;
  double truth = 0.0;
  double bias = 0.0;
  double variance = 0.0;  // sample variance of the point estimates
  double mse = 0.0;       // mean squared error against the truth
  double ci_coverage = 0.0;
  double ci_width = 0.0;
  int replicates_used = 0;
  int replicates_failed = 0;
  bool degenerate_variance = false;  // fewer than 2 usable replicates
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
};

struct MonteCarloOptions {
  TmleOptions tmle;
  int threads = 0;  // 0: hardware concurrency, capped by XTRIAL_THREADS
};

// generate -> run_tmle per estimand, replicated; metrics are reduced in
// replicate order so parallel and serial runs agree bit for bit. More than
// 5% failed replicates for an estimand is a run-level error.
MetricsTable run_monte_carlo(const ScenarioSpec& spec,
                             const std::vector<EstimandRequest>& estimands,
                             int replicates, const MonteCarloOptions& options = {});

int resolve_thread_count(int requested, int replicates);

}  // namespace xtrial
