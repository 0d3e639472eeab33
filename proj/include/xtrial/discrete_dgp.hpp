#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace xtrial {

// A finite-support structural model over (T, W, A, S, Y, Delta). S takes
// values in a global level set with conditional pmf depending only on (A, W),
// which builds in the assumption that trial membership carries no direct
// effect on the immune response. The sampling mechanism may be given access
// to S to construct missing-at-random violations on purpose.
struct DiscreteDgp {
  struct Trial {
    int label = 0;
    double prob = 0.0;  // P(T = label)
    std::vector<int> arms;
    std::vector<double> arm_probs;  // same length as arms, sums to 1
    // Support of the covariate vector given this trial: (w, probability).
    std::vector<std::pair<std::vector<int>, double>> w_support;
  };

  std::vector<Trial> trials;
  std::size_t w_dim = 0;
  std::vector<double> s_levels;
  // pmf over s_levels given (a, w); must not depend on the trial.
  std::function<std::vector<double>(int a, const std::vector<int>& w)> s_pmf;
  std::function<double(double s, int a, const std::vector<int>& w)> y1_prob;
  // P(Delta=1 | t, a, y, w, s). Depending on s violates missing-at-random.
  std::function<double(int t, int a, int y, const std::vector<int>& w, double s)>
      delta1_prob;
};

struct IdentifyResult {
  double observed_functional = 0.0;   // triple-nested observed-data estimand
  double counterfactual_mean = 0.0;   // E[S(a) | T in T_ref] from the structure
  double gap() const { return observed_functional - counterfactual_mean; }
};

// Exact summation of both sides of the observed-data identification result:
// the nested expectation E{ E[ E(S | Delta=1, A=a, T in T_a, Y, W_{Delta,S})
// | A=a, T in T_a, W_S ] | T in T_ref } and the structural counterfactual
// mean. Under ignorable sampling and positivity the two agree.
IdentifyResult identify_exact(const DiscreteDgp& dgp, const std::vector<int>& t_ref,
                              const std::vector<int>& t_a, int vaccine_a,
                              const std::vector<std::size_t>& w_s_idx,
                              const std::vector<std::size_t>& w_delta_idx);

}  // namespace xtrial
