// Self-contained regression solvers: weighted least squares with a
// rank-revealing QR, quasi-binomial IRLS, and the one-parameter logistic
// fluctuation used by the targeting steps. All routines are deterministic:
// identical inputs produce bit-identical outputs.

#include "xtrial/glm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xtrial {

namespace {

constexpr int kMaxIrlsIterations = 100;
constexpr double kScoreTol = 1e-10;        // relative to sum of weights
constexpr double kDevianceTol = 1e-10;     // relative deviance change
constexpr double kProbFloor = 1e-10;       // separation guard band
constexpr double kCollinearTol = 1e-9;     // residual column norm, relative

void check_dims(const DesignMatrix& x, std::size_t ny, std::size_t nw,
                std::size_t noff, const char* who) {
  if (x.rows == 0 || x.cols == 0)
    throw std::invalid_argument(std::string(who) + ": empty design matrix");
  if (x.data.size() != x.rows * x.cols)
    throw std::invalid_argument(std::string(who) + ": design storage size mismatch");
  if (ny != x.rows)
    throw std::invalid_argument(std::string(who) + ": outcome length != design rows");
  if (nw != x.rows)
    throw std::invalid_argument(std::string(who) + ": weight length != design rows");
  if (noff != x.rows)
    throw std::invalid_argument(std::string(who) + ": offset length != design rows");
}

// Weighted least squares via modified Gram-Schmidt QR in the given column
// order. A column whose residual norm falls below kCollinearTol times its
// original norm is dropped (coefficient 0), which keeps the earlier of two
// collinear columns.
struct WlsResult {
  std::vector<double> beta;
  std::vector<bool> dropped;
};

WlsResult wls_solve(const DesignMatrix& x, const double* y, const double* w) {
  const std::size_t n = x.rows, p = x.cols;
  std::vector<double> sw(n);
  for (std::size_t i = 0; i < n; ++i) sw[i] = std::sqrt(w[i]);

  // Scaled copies: u_j = sqrt(w) .* x_j, v = sqrt(w) .* y (column-major).
  std::vector<std::vector<double>> u(p, std::vector<double>(n));
  std::vector<double> v(n);
  std::vector<double> norm0(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double val = sw[i] * x.at(i, j);
      u[j][i] = val;
      s += val * val;
    }
    norm0[j] = std::sqrt(s);
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = sw[i] * y[i];

  std::vector<std::size_t> kept;
  kept.reserve(p);
  std::vector<bool> dropped(p, false);
  // r[k][j]: projection of column j onto the k-th kept orthonormal vector.
  std::vector<std::vector<double>> r;

  auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  };

  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double>& col = u[j];
    std::vector<double> rj(kept.size(), 0.0);
    // Two orthogonalization passes for stability.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < kept.size(); ++k) {
        const double c = dot(u[kept[k]], col);
        rj[k] += c;
        for (std::size_t i = 0; i < n; ++i) col[i] -= c * u[kept[k]][i];
      }
    }
    const double nrm = std::sqrt(dot(col, col));
    if (norm0[j] <= 0.0 || nrm <= kCollinearTol * norm0[j]) {
      dropped[j] = true;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) col[i] /= nrm;
    for (std::size_t k = 0; k < kept.size(); ++k) r[k].push_back(rj[k]);
    r.emplace_back();
    r.back().resize(kept.size() + 1, 0.0);
    r.back().back() = nrm;
    kept.push_back(j);
  }

  // q^T v, then back substitution on the triangular system.
  const std::size_t rk = kept.size();
  std::vector<double> qtv(rk);
  for (std::size_t k = 0; k < rk; ++k) qtv[k] = dot(u[kept[k]], v);
  std::vector<double> beta_kept(rk, 0.0);
  for (std::size_t k = rk; k-- > 0;) {
    double s = qtv[k];
    for (std::size_t m = k + 1; m < rk; ++m) s -= r[k][m] * beta_kept[m];
    beta_kept[k] = s / r[k][k];
  }

  WlsResult out;
  out.beta.assign(p, 0.0);
  out.dropped = std::move(dropped);
  for (std::size_t k = 0; k < rk; ++k) out.beta[kept[k]] = beta_kept[k];
  return out;
}

double quasi_binomial_deviance(std::span<const double> y, const std::vector<double>& p,
                               std::span<const double> w) {
  double ll = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double pi = std::clamp(p[i], kProbFloor, 1.0 - kProbFloor);
    ll += w[i] * (y[i] * std::log(pi) + (1.0 - y[i]) * std::log(1.0 - pi));
  }
  return -2.0 * ll;
}

}  // namespace

DesignMatrix DesignMatrix::intercept_only(std::size_t n) {
  DesignMatrix x;
  x.rows = n;
  x.cols = 1;
  x.data.assign(n, 1.0);
  x.col_names = {"(Intercept)"};
  return x;
}

DesignMatrix DesignMatrix::select_rows(std::span<const std::size_t> rows_idx) const {
  DesignMatrix out;
  out.rows = rows_idx.size();
  out.cols = cols;
  out.col_names = col_names;
  out.data.resize(out.rows * cols);
  for (std::size_t k = 0; k < rows_idx.size(); ++k)
    for (std::size_t j = 0; j < cols; ++j) out.data[k * cols + j] = at(rows_idx[k], j);
  return out;
}

double expit(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

GlmFit fit_logistic(const DesignMatrix& x, std::span<const double> y,
                    std::span<const double> w, std::span<const double> offset) {
  check_dims(x, y.size(), w.size(), offset.size(), "fit_logistic");
  double wsum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0)
      throw std::invalid_argument("fit_logistic: weights must be finite and >= 0");
    wsum += w[i];
  }
  if (wsum <= 0.0) throw std::invalid_argument("fit_logistic: all weights are zero");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!(y[i] >= 0.0 && y[i] <= 1.0))
      throw std::invalid_argument("fit_logistic: outcomes must lie in [0,1]");

  const std::size_t n = x.rows, p = x.cols;
  GlmFit fit;
  fit.family = GlmFamily::logistic;
  fit.coefficients.assign(p, 0.0);
  fit.dropped.assign(p, false);

  std::vector<double> eta(n), prob(n), z(n), wirls(n);
  std::vector<double> beta_prev(p, 0.0);
  double dev_prev = std::numeric_limits<double>::infinity();
  double beta_norm_prev = 0.0;

  const double score_bound = kScoreTol * std::max(1.0, wsum);
  for (int iter = 1; iter <= kMaxIrlsIterations; ++iter) {
    fit.iterations = iter;
    bool extreme = false;
    for (std::size_t i = 0; i < n; ++i) {
      double lp = offset[i];
      for (std::size_t j = 0; j < p; ++j) lp += x.at(i, j) * fit.coefficients[j];
      eta[i] = lp;
      prob[i] = expit(lp);
      if (prob[i] < kProbFloor || prob[i] > 1.0 - kProbFloor) extreme = true;
    }

    double score_inf = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += w[i] * x.at(i, j) * (y[i] - prob[i]);
      score_inf = std::max(score_inf, std::abs(s));
    }
    const double dev = quasi_binomial_deviance(y, prob, w);
    fit.deviance = dev;

    if (score_inf <= score_bound) {
      fit.converged = true;
      return fit;
    }
    const double rel_dev_change =
        std::abs(dev_prev - dev) / std::max(1.0, std::abs(dev));
    if (iter > 1 && rel_dev_change < kDevianceTol && score_inf <= 1e-8 * wsum) {
      fit.converged = true;
      return fit;
    }

    double beta_norm = 0.0;
    for (double b : fit.coefficients) beta_norm += b * b;
    if (extreme && iter > 1 && beta_norm >= beta_norm_prev) {
      // Diverging coefficients with fitted probabilities at the boundary:
      // (quasi-)separation. Report the last stable iterate.
      fit.coefficients = beta_prev;
      fit.separation = true;
      fit.converged = false;
      return fit;
    }

    beta_prev = fit.coefficients;
    beta_norm_prev = beta_norm;
    dev_prev = dev;

    for (std::size_t i = 0; i < n; ++i) {
      const double pi = std::clamp(prob[i], kProbFloor, 1.0 - kProbFloor);
      const double var = pi * (1.0 - pi);
      z[i] = (eta[i] - offset[i]) + (y[i] - prob[i]) / var;
      wirls[i] = w[i] * var;
    }
    WlsResult wls = wls_solve(x, z.data(), wirls.data());
    fit.coefficients = std::move(wls.beta);
    fit.dropped = std::move(wls.dropped);
  }
  fit.converged = false;
  return fit;
}

GlmFit fit_logistic(const DesignMatrix& x, std::span<const double> y) {
  std::vector<double> w(x.rows, 1.0), off(x.rows, 0.0);
  return fit_logistic(x, y, w, off);
}

GlmFit fit_linear(const DesignMatrix& x, std::span<const double> y,
                  std::span<const double> w) {
  std::vector<double> off(x.rows, 0.0);
  check_dims(x, y.size(), w.size(), off.size(), "fit_linear");
  double wsum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0)
      throw std::invalid_argument("fit_linear: weights must be finite and >= 0");
    wsum += w[i];
  }
  if (wsum <= 0.0) throw std::invalid_argument("fit_linear: all weights are zero");

  GlmFit fit;
  fit.family = GlmFamily::linear;
  WlsResult wls = wls_solve(x, y.data(), w.data());
  fit.coefficients = std::move(wls.beta);
  fit.dropped = std::move(wls.dropped);
  fit.converged = true;
  fit.iterations = 1;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double fitval = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) fitval += x.at(i, j) * fit.coefficients[j];
    const double r = y[i] - fitval;
    rss += w[i] * r * r;
  }
  fit.deviance = rss;
  return fit;
}

GlmFit fit_linear(const DesignMatrix& x, std::span<const double> y) {
  std::vector<double> w(x.rows, 1.0);
  return fit_linear(x, y, w);
}

FluctuationFit fit_fluctuation(std::span<const double> offset_logit,
                               std::span<const double> h,
                               std::span<const double> y,
                               std::span<const double> subset_weights) {
  const std::size_t n = offset_logit.size();
  if (h.size() != n || y.size() != n || subset_weights.size() != n)
    throw std::invalid_argument("fit_fluctuation: input lengths differ");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(offset_logit[i]))
      throw std::invalid_argument(
          "fit_fluctuation: non-finite offset (truncate probabilities before logit)");
    if (!std::isfinite(h[i]))
      throw std::invalid_argument("fit_fluctuation: non-finite clever covariate");
    if (!(y[i] >= 0.0 && y[i] <= 1.0))
      throw std::invalid_argument("fit_fluctuation: outcomes must lie in [0,1]");
    if (!std::isfinite(subset_weights[i]) || subset_weights[i] < 0.0)
      throw std::invalid_argument("fit_fluctuation: weights must be finite and >= 0");
  }

  auto score = [&](double eps) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += subset_weights[i] * h[i] * (y[i] - expit(offset_logit[i] + eps * h[i]));
    return s;
  };
  auto dscore = [&](double eps) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = expit(offset_logit[i] + eps * h[i]);
      s -= subset_weights[i] * h[i] * h[i] * p * (1.0 - p);
    }
    return s;
  };

  constexpr double tol = 1e-10;
  constexpr int max_iter = 200;
  FluctuationFit out;
  double eps = 0.0;
  double f = score(eps);
  out.score = f;
  if (std::abs(f) <= tol) {
    out.epsilon = eps;
    out.converged = true;
    return out;
  }

  // Bracket the root; the score is strictly decreasing in eps.
  double lo = -1.0, hi = 1.0;
  double flo = score(lo), fhi = score(hi);
  int expand = 0;
  while (flo < 0.0 && expand < 60) { lo *= 2.0; flo = score(lo); ++expand; }
  while (fhi > 0.0 && expand < 120) { hi *= 2.0; fhi = score(hi); ++expand; }
  const bool bracketed = flo >= 0.0 && fhi <= 0.0;

  for (int iter = 1; iter <= max_iter; ++iter) {
    out.iterations = iter;
    const double d = dscore(eps);
    double step = (d != 0.0) ? -f / d : 0.0;
    double eps_new = eps + step;
    if (bracketed && (eps_new < lo || eps_new > hi || step == 0.0))
      eps_new = 0.5 * (lo + hi);
    double f_new = score(eps_new);
    int halvings = 0;
    while (std::abs(f_new) > std::abs(f) && halvings < 60) {
      eps_new = 0.5 * (eps + eps_new);
      f_new = score(eps_new);
      ++halvings;
    }
    eps = eps_new;
    f = f_new;
    if (bracketed) {
      if (f > 0.0) lo = eps; else hi = eps;
    }
    out.epsilon = eps;
    out.score = f;
    if (std::abs(f) <= tol) {
      out.converged = true;
      return out;
    }
  }
  out.converged = false;
  return out;
}

FluctuationFit fit_fluctuation(std::span<const double> offset_logit,
                               std::span<const double> h,
                               std::span<const double> y) {
  std::vector<double> w(offset_logit.size(), 1.0);
  return fit_fluctuation(offset_logit, h, y, w);
}

std::vector<double> predict(const GlmFit& fit, const DesignMatrix& x,
                            std::span<const double> offset) {
  if (fit.coefficients.size() != x.cols)
    throw std::invalid_argument("predict: coefficient/design column mismatch");
  if (offset.size() != x.rows)
    throw std::invalid_argument("predict: offset length != design rows");
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double lp = offset[i];
    for (std::size_t j = 0; j < x.cols; ++j) lp += x.at(i, j) * fit.coefficients[j];
    out[i] = fit.family == GlmFamily::logistic ? expit(lp) : lp;
  }
  return out;
}

std::vector<double> predict(const GlmFit& fit, const DesignMatrix& x) {
  std::vector<double> off(x.rows, 0.0);
  return predict(fit, x, off);
}

}  // namespace xtrial
