#include "xtrial/discrete_dgp.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "xtrial/errors.hpp"

namespace xtrial {

namespace {

std::vector<int> project(const std::vector<int>& w, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t j : idx) out.push_back(w[j]);
  return out;
}

bool contains(const std::vector<int>& set, int v) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

}  // namespace

IdentifyResult identify_exact(const DiscreteDgp& dgp, const std::vector<int>& t_ref,
                              const std::vector<int>& t_a, int vaccine_a,
                              const std::vector<std::size_t>& w_s_idx,
                              const std::vector<std::size_t>& w_delta_idx) {
  if (t_ref.empty()) throw std::invalid_argument("identify_exact: empty referent set");
  for (std::size_t j : w_s_idx)
    if (j >= dgp.w_dim) throw std::invalid_argument("identify_exact: bad W_S index");
  for (std::size_t j : w_delta_idx)
    if (j >= dgp.w_dim) throw std::invalid_argument("identify_exact: bad W_Delta index");

  std::size_t atoms = 0;
  for (const auto& t : dgp.trials)
    atoms += t.w_support.size() * t.arms.size() * dgp.s_levels.size() * 2 * 2;
  if (atoms > 1000000)
    throw ResourceError("identify_exact: support has " + std::to_string(atoms) +
                        " atoms (limit 1e6)");

  // Union of W_S and W_Delta indices, W_S order first.
  std::vector<std::size_t> w_ds_idx = w_s_idx;
  for (std::size_t j : w_delta_idx)
    if (std::find(w_ds_idx.begin(), w_ds_idx.end(), j) == w_ds_idx.end())
      w_ds_idx.push_back(j);

  // Inner layer: E(S | Delta=1, A=a, T in T_a, Y=y, W_{Delta,S}).
  // Accumulate mass and s-weighted mass over the joint distribution.
  struct Accum { double mass = 0.0; double s_mass = 0.0; };
  std::map<std::pair<int, std::vector<int>>, Accum> inner;  // key (y, w_ds)

  for (const auto& trial : dgp.trials) {
    if (!contains(t_a, trial.label)) continue;
    for (const auto& [w, pw] : trial.w_support) {
      for (std::size_t ai = 0; ai < trial.arms.size(); ++ai) {
        if (trial.arms[ai] != vaccine_a) continue;
        const double base = trial.prob * pw * trial.arm_probs[ai];
        const std::vector<double> spmf = dgp.s_pmf(vaccine_a, w);
        for (std::size_t si = 0; si < dgp.s_levels.size(); ++si) {
          const double s = dgp.s_levels[si];
          const double ps = spmf[si];
          if (ps == 0.0) continue;
          const double py1 = dgp.y1_prob(s, vaccine_a, w);
          for (int y = 0; y <= 1; ++y) {
            const double py = y == 1 ? py1 : 1.0 - py1;
            if (py == 0.0) continue;
            const double pd1 = dgp.delta1_prob(trial.label, vaccine_a, y, w, s);
            const double mass = base * ps * py * pd1;
            Accum& acc = inner[{y, project(w, w_ds_idx)}];
            acc.mass += mass;
            acc.s_mass += mass * s;
          }
        }
      }
    }
  }
  auto q2_bar = [&](int y, const std::vector<int>& w_ds) {
    const auto it = inner.find({y, w_ds});
    if (it == inner.end() || it->second.mass <= 0.0)
      throw DomainError("identify_exact: sampling positivity fails at an observable "
                        "(y, W_{Delta,S}) profile");
    return it->second.s_mass / it->second.mass;
  };

  // Middle layer: E[Q2(Y, W_{Delta,S}) | A=a, T in T_a, W_S] averages over
  // the conditional law of (Y, W extras) among vaccine-a units, regardless
  // of sampling.
  std::map<std::vector<int>, Accum> middle;  // key w_s; s_mass reused for q2 mass
  for (const auto& trial : dgp.trials) {
    if (!contains(t_a, trial.label)) continue;
    for (const auto& [w, pw] : trial.w_support) {
      for (std::size_t ai = 0; ai < trial.arms.size(); ++ai) {
        if (trial.arms[ai] != vaccine_a) continue;
        const double base = trial.prob * pw * trial.arm_probs[ai];
        const std::vector<double> spmf = dgp.s_pmf(vaccine_a, w);
        for (std::size_t si = 0; si < dgp.s_levels.size(); ++si) {
          const double s = dgp.s_levels[si];
          const double ps = spmf[si];
          if (ps == 0.0) continue;
          const double py1 = dgp.y1_prob(s, vaccine_a, w);
          for (int y = 0; y <= 1; ++y) {
            const double py = y == 1 ? py1 : 1.0 - py1;
            if (py == 0.0) continue;
            const double mass = base * ps * py;
            Accum& acc = middle[project(w, w_s_idx)];
            acc.mass += mass;
            acc.s_mass += mass * q2_bar(y, project(w, w_ds_idx));
          }
        }
      }
    }
  }
  auto q1_bar = [&](const std::vector<int>& w_s) {
    const auto it = middle.find(w_s);
    if (it == middle.end() || it->second.mass <= 0.0)
      throw DomainError("identify_exact: treatment positivity fails at a referent "
                        "W_S profile");
    return it->second.s_mass / it->second.mass;
  };

  // Outer layer: average over the W_S distribution in the referent trials,
  // and the structural counterfactual mean over the same distribution.
  double ref_mass = 0.0, outer = 0.0, cf = 0.0;
  for (const auto& trial : dgp.trials) {
    if (!contains(t_ref, trial.label)) continue;
    for (const auto& [w, pw] : trial.w_support) {
      const double mass = trial.prob * pw;
      ref_mass += mass;
      outer += mass * q1_bar(project(w, w_s_idx));
      const std::vector<double> spmf = dgp.s_pmf(vaccine_a, w);
      double mean_s = 0.0;
      for (std::size_t si = 0; si < dgp.s_levels.size(); ++si)
        mean_s += dgp.s_levels[si] * spmf[si];
      cf += mass * mean_s;
    }
  }
  if (ref_mass <= 0.0)
    throw DomainError("identify_exact: referent trials have zero probability");

  IdentifyResult out;
  out.observed_functional = outer / ref_mass;
  out.counterfactual_mean = cf / ref_mass;
  return out;
}

}  // namespace xtrial
