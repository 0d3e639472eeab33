// Scenario generation, closed-form truths, and the Monte Carlo harness.

#include "xtrial/sim_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "xtrial/errors.hpp"
#include "xtrial/rng.hpp"

namespace xtrial {

bool TrialSimSpec::all_sampled() const {
  for (int y = 0; y < 2; ++y)
    for (int a = 0; a < 2; ++a)
      if (p_sample[y][a] != 1.0) return false;
  return true;
}

std::vector<int> ScenarioSpec::active_vaccines() const {
  std::vector<int> out;
  for (const auto& t : trials)
    if (std::find(out.begin(), out.end(), t.active_vaccine) == out.end())
      out.push_back(t.active_vaccine);
  return out;
}

ScenarioSpec scenario_preset(const std::string& name) {
  ScenarioSpec s;
  s.name = name;
  TrialSimSpec t1, t2;
  t1.label = 1;
  t1.active_vaccine = 1;
  t1.p_w1 = 0.65;
  t1.p_w2 = 0.80;
  t2.label = 2;
  t2.active_vaccine = 2;
  t2.p_w1 = 0.5;
  t2.p_w2 = 0.30;
  if (name == "scenario1") {
    t1.n = 200;
    t2.n = 150;
  } else if (name == "scenario2") {
    t1.n = 5000;
    t2.n = 150;
    t1.p_sample[1][0] = 0.05;
    t1.p_sample[1][1] = 0.1;
    t1.p_sample[0][0] = 0.05;
    t1.p_sample[0][1] = 0.1;
  } else if (name == "scenario3") {
    t1.n = 2000;
    t2.n = 1500;
    for (TrialSimSpec* t : {&t1, &t2}) {
      t->p_sample[1][0] = 0.05;
      t->p_sample[1][1] = 0.1;
      t->p_sample[0][0] = 0.05;
      t->p_sample[0][1] = 0.1;
    }
  } else {
    throw DomainError("unknown scenario preset '" + name +
                      "' (expected scenario1, scenario2 or scenario3)");
  }
  s.trials = {t1, t2};
  return s;
}

ScenarioSpec scenario_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario config: ") + e.what());
  }
  ScenarioSpec s;
  try {
    s.name = j.value("name", "custom");
    s.control_label = j.value("control_label", 3);
    s.s_active_shift = j.value("s_active_shift", 2.0);
    s.s_sd = j.value("s_sd", 1.0);
    s.y_intercept = j.value("y_intercept", -2.0);
    s.y_active = j.value("y_active", 1.0);
    s.y_w1 = j.value("y_w1", 0.5);
    s.y_s = j.value("y_s", -0.5);
    s.base_seed = j.value("base_seed", 1);
    s.replicates = j.value("replicates", 1000);
    for (const auto& tj : j.at("trials")) {
      TrialSimSpec t;
      t.label = tj.at("label").get<int>();
      t.n = tj.at("n").get<int>();
      t.p_w1 = tj.at("p_w1").get<double>();
      t.p_w2 = tj.at("p_w2").get<double>();
      t.active_vaccine = tj.at("active_vaccine").get<int>();
      if (tj.contains("p_sample")) {
        const auto& p = tj.at("p_sample");
        t.p_sample[1][0] = p.at("y1_control").get<double>();
        t.p_sample[1][1] = p.at("y1_active").get<double>();
        t.p_sample[0][0] = p.at("y0_control").get<double>();
        t.p_sample[0][1] = p.at("y0_active").get<double>();
      }
      s.trials.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("scenario config: ") + e.what());
  }
  if (s.trials.empty()) throw SchemaError("scenario config: no trials");
  for (const auto& t : s.trials) {
    if (t.n < 1) throw DomainError("scenario config: trial n must be >= 1");
    for (double p : {t.p_w1, t.p_w2, t.p_sample[0][0], t.p_sample[0][1],
                     t.p_sample[1][0], t.p_sample[1][1]})
      if (!(p >= 0.0 && p <= 1.0))
        throw DomainError("scenario config: probabilities must lie in [0,1]");
  }
  return s;
}

ScenarioSpec scenario_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return scenario_from_json_text(buf.str());
}

std::string scenario_to_json_text(const ScenarioSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["control_label"] = s.control_label;
  j["s_active_shift"] = s.s_active_shift;
  j["s_sd"] = s.s_sd;
  j["y_intercept"] = s.y_intercept;
  j["y_active"] = s.y_active;
  j["y_w1"] = s.y_w1;
  j["y_s"] = s.y_s;
  j["base_seed"] = s.base_seed;
  j["replicates"] = s.replicates;
  j["trials"] = nlohmann::json::array();
  for (const auto& t : s.trials) {
    nlohmann::json tj;
    tj["label"] = t.label;
    tj["n"] = t.n;
    tj["p_w1"] = t.p_w1;
    tj["p_w2"] = t.p_w2;
    tj["active_vaccine"] = t.active_vaccine;
    tj["p_sample"] = {{"y1_control", t.p_sample[1][0]},
                      {"y1_active", t.p_sample[1][1]},
                      {"y0_control", t.p_sample[0][0]},
                      {"y0_active", t.p_sample[0][1]}};
    j["trials"].push_back(tj);
  }
  return j.dump(2) + "\n";
}

StackedDataset generate(const ScenarioSpec& spec, std::uint64_t replicate) {
  CounterRng rng = CounterRng::stream(spec.base_seed, replicate);

  StackedDataset::Builder b;
  CovariateColumn w1, w2;
  w1.name = "w1";
  w2.name = "w2";

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& trial : spec.trials) {
    const bool two_phase = !trial.all_sampled();
    for (int k = 0; k < trial.n; ++k) {
      const int v1 = rng.bernoulli(trial.p_w1) ? 1 : 0;
      const int v2 = rng.bernoulli(trial.p_w2) ? 1 : 0;
      const bool active = rng.bernoulli(0.5);
      const int arm = active ? trial.active_vaccine : spec.control_label;
      const double act = active ? 1.0 : 0.0;
      const double s =
          rng.normal(v1 - v2 + spec.s_active_shift * act, spec.s_sd);
      const double py = expit(spec.y_intercept + spec.y_active * act +
                              spec.y_w1 * v1 + spec.y_s * s);
      const int y = rng.bernoulli(py) ? 1 : 0;
      const double p_delta = trial.p_sample[y][active ? 1 : 0];
      const int delta = two_phase ? (rng.bernoulli(p_delta) ? 1 : 0) : 1;

      b.trial.push_back(trial.label);
      b.arm.push_back(arm);
      b.delta.push_back(delta);
      b.s.push_back(delta == 1 ? s : nan);
      b.y.push_back(y);
      b.weight.push_back(two_phase ? p_delta : nan);
      w1.numeric.push_back(v1);
      w2.numeric.push_back(v2);
    }
  }
  b.covariates = {w1, w2};
  return b.build();
}

double analytic_truth(const ScenarioSpec& spec, const std::vector<int>& t_ref,
                      int vaccine) {
  if (vaccine == spec.control_label)
    throw std::invalid_argument("analytic_truth: control arm has no truth row");
  bool known = false;
  for (const auto& t : spec.trials)
    if (t.active_vaccine == vaccine) known = true;
  if (!known)
    throw std::invalid_argument("analytic_truth: vaccine " + std::to_string(vaccine) +
                                " is not active in any trial");

  double total = 0.0, acc = 0.0;
  for (const auto& t : spec.trials) {
    if (std::find(t_ref.begin(), t_ref.end(), t.label) == t_ref.end()) continue;
    total += t.n;
    acc += t.n * (t.p_w1 - t.p_w2 + spec.s_active_shift);
  }
  if (total == 0.0)
    throw std::invalid_argument("analytic_truth: referent trials not in the scenario");
  return acc / total;
}

DiscreteDgp to_discrete_dgp(const ScenarioSpec& spec) {
  DiscreteDgp dgp;
  dgp.w_dim = 2;

  double total = 0.0;
  for (const auto& t : spec.trials) total += t.n;

  std::set<double> level_set;
  const auto mean_s = [&spec](int a_active, int w1, int w2) {
    return w1 - w2 + spec.s_active_shift * a_active;
  };
  for (int act = 0; act <= 1; ++act)
    for (int w1 = 0; w1 <= 1; ++w1)
      for (int w2 = 0; w2 <= 1; ++w2) level_set.insert(mean_s(act, w1, w2));
  dgp.s_levels.assign(level_set.begin(), level_set.end());

  for (const auto& t : spec.trials) {
    DiscreteDgp::Trial dt;
    dt.label = t.label;
    dt.prob = t.n / total;
    dt.arms = {t.active_vaccine, spec.control_label};
    dt.arm_probs = {0.5, 0.5};
    for (int w1 = 0; w1 <= 1; ++w1)
      for (int w2 = 0; w2 <= 1; ++w2) {
        const double p = (w1 ? t.p_w1 : 1.0 - t.p_w1) * (w2 ? t.p_w2 : 1.0 - t.p_w2);
        dt.w_support.push_back({{w1, w2}, p});
      }
    dgp.trials.push_back(dt);
  }

  const int control = spec.control_label;
  dgp.s_pmf = [spec, control, mean_s](int a, const std::vector<int>& w) {
    const int act = a == control ? 0 : 1;
    const double mu = mean_s(act, w[0], w[1]);
    // S replaced by its conditional mean: a point mass.
    std::set<double> level_set;
    for (int aa = 0; aa <= 1; ++aa)
      for (int w1 = 0; w1 <= 1; ++w1)
        for (int w2 = 0; w2 <= 1; ++w2)
          level_set.insert(w1 - w2 + spec.s_active_shift * aa);
    std::vector<double> pmf(level_set.size(), 0.0);
    std::size_t k = 0;
    for (double lev : level_set) {
      if (lev == mu) pmf[k] = 1.0;
      ++k;
    }
    return pmf;
  };
  dgp.y1_prob = [spec, control](double s, int a, const std::vector<int>& w) {
    const double act = a == control ? 0.0 : 1.0;
    return expit(spec.y_intercept + spec.y_active * act + spec.y_w1 * w[0] +
                 spec.y_s * s);
  };
  std::vector<TrialSimSpec> trials = spec.trials;
  dgp.delta1_prob = [trials, control](int t, int a, int y, const std::vector<int>&,
                                      double) {
    for (const auto& trial : trials)
      if (trial.label == t) return trial.p_sample[y][a == control ? 0 : 1];
    return 1.0;
  };
  return dgp;
}

std::vector<EstimandRequest> standard_estimands(const ScenarioSpec& spec) {
  std::vector<int> all;
  for (const auto& t : spec.trials) all.push_back(t.label);
  std::sort(all.begin(), all.end());
  std::vector<EstimandRequest> out;
  for (int v : spec.active_vaccines()) out.push_back({all, v});
  for (int v : spec.active_vaccines()) out.push_back({{all.front()}, v});
  return out;
}

int resolve_thread_count(int requested, int replicates) {
  int n = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("XTRIAL_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(1, std::min(n, replicates));
}

MetricsTable run_monte_carlo(const ScenarioSpec& spec,
                             const std::vector<EstimandRequest>& estimands,
                             int replicates, const MonteCarloOptions& options) {
  if (replicates < 1)
    throw std::invalid_argument("run_monte_carlo: replicates must be >= 1");

  struct Draw {
    double psi = 0.0, lo = 0.0, hi = 0.0;
    bool ok = false;
  };
  // results[r * n_est + e]
  const std::size_t n_est = estimands.size();
  std::vector<Draw> results(static_cast<std::size_t>(replicates) * n_est);

  std::vector<EstimandSpec> specs;
  for (const auto& req : estimands) {
    EstimandSpec es;
    es.vaccine_a = req.vaccine;
    es.t_ref = req.t_ref;
    std::sort(es.t_ref.begin(), es.t_ref.end());
    for (const auto& t : spec.trials)
      if (t.active_vaccine == req.vaccine) es.t_a.push_back(t.label);
    std::sort(es.t_a.begin(), es.t_a.end());
    if (es.t_a.empty())
      throw std::invalid_argument("run_monte_carlo: vaccine " +
                                  std::to_string(req.vaccine) +
                                  " is not active in any trial");
    es.w_s = {"w1", "w2"};
    specs.push_back(es);
  }

  const int n_threads = resolve_thread_count(options.threads, replicates);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= replicates) return;
      const StackedDataset ds = generate(spec, static_cast<std::uint64_t>(r));
      for (std::size_t e = 0; e < n_est; ++e) {
        Draw& d = results[static_cast<std::size_t>(r) * n_est + e];
        try {
          const EstimateResult res = run_tmle(ds, specs[e], options.tmle);
          d.psi = res.psi;
          d.lo = res.ci_lo;
          d.hi = res.ci_hi;
          d.ok = true;
        } catch (const EstimationError&) {
          d.ok = false;
        }
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MetricsTable table;
  for (std::size_t e = 0; e < n_est; ++e) {
    MetricsRow row;
    row.scenario = spec.name;
    row.t_ref = specs[e].t_ref;
    row.vaccine = specs[e].vaccine_a;
    row.truth = analytic_truth(spec, specs[e].t_ref, specs[e].vaccine_a);

    std::vector<double> psis, widths;
    int covered = 0, failed = 0;
    for (int r = 0; r < replicates; ++r) {
      const Draw& d = results[static_cast<std::size_t>(r) * n_est + e];
      if (!d.ok) {
        ++failed;
        continue;
      }
      psis.push_back(d.psi);
      widths.push_back(d.hi - d.lo);
      if (d.lo <= row.truth && row.truth <= d.hi) ++covered;
    }
    if (failed > 0.05 * replicates)
      throw EstimationError("run_monte_carlo: " + std::to_string(failed) + " of " +
                            std::to_string(replicates) +
                            " replicates failed (broken configuration?)");

    const std::size_t used = psis.size();
    row.replicates_used = static_cast<int>(used);
    row.replicates_failed = failed;
    double mean = 0.0;
    for (double p : psis) mean += p;
    mean /= static_cast<double>(used);
    row.bias = mean - row.truth;
    if (used >= 2) {
      double ss = 0.0;
      for (double p : psis) ss += (p - mean) * (p - mean);
      row.variance = ss / static_cast<double>(used - 1);
    } else {
      row.variance = 0.0;
      row.degenerate_variance = true;
    }
    double mse = 0.0;
    for (double p : psis) mse += (p - row.truth) * (p - row.truth);
    row.mse = mse / static_cast<double>(used);
    row.ci_coverage = static_cast<double>(covered) / static_cast<double>(used);
    double wsum = 0.0;
    for (double w : widths) wsum += w;
    row.ci_width = wsum / static_cast<double>(used);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace xtrial
