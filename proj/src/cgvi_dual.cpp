#include "dbnmix/cgvi_dual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dbnmix {

void DualConfig::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0)
    throw std::invalid_argument("DualConfig: epsilon must be finite and >= 0");
  if (!std::isfinite(beta) || beta >= 0.0)
    throw std::invalid_argument("DualConfig: beta must be finite and < 0");
  if (!std::isfinite(lambda_min) || lambda_min <= 0.0)
    throw std::invalid_argument("DualConfig: lambda_min must be finite and > 0");
  if (!std::isfinite(reference_loss))
    throw std::invalid_argument("DualConfig: reference_loss must be finite");
}

double dual_objective(double mu, double lambda, const DualConfig& cfg) {
  if (!(lambda > 0.0)) throw std::domain_error("dual_objective: lambda must be > 0");
  const double base = 1.0 + (cfg.reference_loss - mu) / (lambda * cfg.beta);
  if (!(base > 0.0)) return std::numeric_limits<double>::infinity();
  return mu + cfg.epsilon * lambda + lambda * (std::pow(base, cfg.beta) - 1.0);
}

DualSolution solve_dual(const DualConfig& cfg, double init_mu, double init_lambda) {
  cfg.validate();
  (void)init_mu;  // the inner minimization over mu is analytic

  // At mu = E the power term vanishes, so the outer problem is the 1-D
  // function g(log lambda) = E + epsilon*lambda. The search below does not
  // rely on that closed form; it treats g as a black box.
  const double mu_star = cfg.reference_loss;
  auto g = [&](double loglam) { return dual_objective(mu_star, std::exp(loglam), cfg); };

  const double lo = std::log(cfg.lambda_min);
  const double hi =
      std::log(std::max({cfg.lambda_min * 1e6, std::abs(init_lambda), 1.0}));

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c1 = b - invphi * (b - a);
  double c2 = a + invphi * (b - a);
  double f1 = g(c1), f2 = g(c2);
  for (int it = 0; it < 200 && (b - a) > 1e-13; ++it) {
    if (f1 <= f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - invphi * (b - a);
      f1 = g(c1);
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + invphi * (b - a);
      f2 = g(c2);
    }
  }
  double best_log = (f1 <= f2) ? c1 : c2;
  double best = std::min(f1, f2);
  // Golden section never lands exactly on the bracket ends; the minimum of an
  // increasing g sits at lambda_min, so check both ends explicitly.
  if (g(lo) <= best) {
    best = g(lo);
    best_log = lo;
  }
  if (g(hi) < best) {
    best = g(hi);
    best_log = hi;
  }

  double improvement = std::numeric_limits<double>::infinity();
  double step = 0.05 * (hi - lo) + 1e-3;
  for (int round = 0; round < 60; ++round) {
    const double prev = best;
    for (double s : {-step, step}) {
      const double cand = std::clamp(best_log + s, lo, hi);
      const double fc = g(cand);
      if (fc < best) {
        best = fc;
        best_log = cand;
      }
    }
    step *= 0.5;
    improvement = prev - best;
  }

  DualSolution out;
  out.mu = mu_star;
  out.lambda = std::max(cfg.lambda_min, std::exp(best_log));
  out.objective = dual_objective(out.mu, out.lambda, cfg);
  out.converged = improvement < 1e-12 * std::max(1.0, std::abs(out.objective));
  out.epsilon = cfg.epsilon;
  out.beta = cfg.beta;
  return out;
}

DualSolution solve_dual(const DualConfig& cfg) {
  return solve_dual(cfg, cfg.reference_loss, 1.0);
}

}  // namespace dbnmix
