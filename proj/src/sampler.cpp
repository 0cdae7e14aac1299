#include "dbnmix/sampler.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace dbnmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_inputs(const SupportMap& map, const DualSolution& dual, const SamplerConfig& cfg,
                  const Eigen::VectorXd& theta) {
  if (theta.size() != static_cast<Eigen::Index>(map.size()))
    throw std::invalid_argument("posterior: theta length does not match support size");
  if (!(dual.lambda > 0.0) || !(dual.beta < 0.0))
    throw std::invalid_argument("posterior: dual solution must have lambda > 0 and beta < 0");
  if (cfg.parzen_bandwidth > 0.0 &&
      cfg.parzen_center.size() != static_cast<Eigen::Index>(map.size()))
    throw std::invalid_argument("posterior: parzen_center length does not match support size");
}

struct DensityTerms {
  double loss = 0.0;
  double base = 0.0;
  double logp = kNegInf;
  bool feasible = false;
};

// Shares the Gibbs-form bookkeeping between value and gradient evaluation.
class Density {
 public:
  Density(const LaggedDesign& design, const SupportMap& map, const DualSolution& dual,
          const SamplerConfig& cfg)
      : design_(design), map_(map), dual_(dual), cfg_(cfg), sign_(cfg.loss_sign) {}

  DensityTerms eval(const Eigen::VectorXd& theta) const {
    DensityTerms t;
    t.loss = loss(design_, embed_params(theta, map_));
    t.base = 1.0 + sign_ * (t.loss - dual_.mu) / (dual_.beta * dual_.lambda);
    if (!(t.base > 0.0)) return t;
    t.feasible = true;
    t.logp = (dual_.beta - 1.0) * std::log(t.base);
    if (cfg_.parzen_bandwidth > 0.0) {
      const double h2 = cfg_.parzen_bandwidth * cfg_.parzen_bandwidth;
      t.logp -= 0.5 * (theta - cfg_.parzen_center).squaredNorm() / h2;
    }
    return t;
  }

  Eigen::VectorXd grad(const Eigen::VectorXd& theta, double base) const {
    Eigen::VectorXd g = loss_gradient(design_, map_, theta);
    g *= (dual_.beta - 1.0) * sign_ / (dual_.beta * dual_.lambda) / base;
    if (cfg_.parzen_bandwidth > 0.0) {
      const double h2 = cfg_.parzen_bandwidth * cfg_.parzen_bandwidth;
      g -= (theta - cfg_.parzen_center) / h2;
    }
    return g;
  }

 private:
  const LaggedDesign& design_;
  const SupportMap& map_;
  const DualSolution& dual_;
  const SamplerConfig& cfg_;
  double sign_;
};

double langevin_log_q(const Eigen::VectorXd& to, const Eigen::VectorXd& from,
                      const Eigen::VectorXd& grad_from, double h) {
  const double h2 = h * h;
  return -(to - from - 0.5 * h2 * grad_from).squaredNorm() / (2.0 * h2);
}

}  // namespace

void SamplerConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size))
    throw std::invalid_argument("SamplerConfig: step_size must be finite and > 0");
  if (n_samples < 1) throw std::invalid_argument("SamplerConfig: n_samples must be >= 1");
  if (burn_in < 0) throw std::invalid_argument("SamplerConfig: burn_in must be >= 0");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("SamplerConfig: target_accept must lie in (0,1)");
  if (loss_sign != 1 && loss_sign != -1)
    throw std::invalid_argument("SamplerConfig: loss_sign must be +1 or -1");
  if (!(parzen_bandwidth >= 0.0) || !std::isfinite(parzen_bandwidth))
    throw std::invalid_argument("SamplerConfig: parzen_bandwidth must be finite and >= 0");
}

double log_posterior(const Eigen::VectorXd& theta, const TrajectoryDataset& data,
                     const SupportMap& map, const DualSolution& dual,
                     const SamplerConfig& cfg) {
  check_inputs(map, dual, cfg, theta);
  LaggedDesign design(data);
  return Density(design, map, dual, cfg).eval(theta).logp;
}

Eigen::VectorXd log_posterior_grad(const Eigen::VectorXd& theta, const TrajectoryDataset& data,
                                   const SupportMap& map, const DualSolution& dual,
                                   const SamplerConfig& cfg) {
  check_inputs(map, dual, cfg, theta);
  LaggedDesign design(data);
  Density density(design, map, dual, cfg);
  DensityTerms t = density.eval(theta);
  if (!t.feasible)
    throw std::domain_error("log_posterior_grad: theta is outside the density domain");
  return density.grad(theta, t.base);
}

double mala_log_accept(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double h,
                       const TrajectoryDataset& data, const SupportMap& map,
                       const DualSolution& dual, const SamplerConfig& cfg) {
  check_inputs(map, dual, cfg, x);
  check_inputs(map, dual, cfg, y);
  if (!(h > 0.0)) throw std::invalid_argument("mala_log_accept: step size must be > 0");
  LaggedDesign design(data);
  Density density(design, map, dual, cfg);
  DensityTerms tx = density.eval(x);
  if (!tx.feasible)
    throw std::domain_error("mala_log_accept: current point is outside the domain");
  DensityTerms ty = density.eval(y);
  if (!ty.feasible) return kNegInf;
  Eigen::VectorXd gx = density.grad(x, tx.base);
  Eigen::VectorXd gy = density.grad(y, ty.base);
  return ty.logp - tx.logp + langevin_log_q(x, y, gy, h) - langevin_log_q(y, x, gx, h);
}

PosteriorChain run_mala(const TrajectoryDataset& data, const SupportMap& map,
                        const DualSolution& dual, const Eigen::VectorXd& init_theta,
                        const SamplerConfig& cfg) {
  cfg.validate();
  check_inputs(map, dual, cfg, init_theta);
  LaggedDesign design(data);
  Density density(design, map, dual, cfg);

  const Eigen::Index s = init_theta.size();
  Eigen::VectorXd x = init_theta;
  DensityTerms tx = density.eval(x);
  if (!tx.feasible)
    throw std::runtime_error("run_mala: initial point is outside the density domain");
  Eigen::VectorXd gx = density.grad(x, tx.base);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int total = cfg.burn_in + cfg.n_samples;
  PosteriorChain chain;
  chain.samples.resize(cfg.n_samples, s);
  chain.log_density_trace.resize(cfg.n_samples);

  double log_h = std::log(cfg.step_size);
  double loss_sum = 0.0;
  long accepted = 0;
  Eigen::VectorXd xi(s), y(s), gy(s);

  for (int it = 0; it < total; ++it) {
    const double h = std::exp(log_h);
    const double h2 = h * h;
    for (Eigen::Index k = 0; k < s; ++k) xi[k] = normal(rng);
    y = x + 0.5 * h2 * gx + h * xi;

    DensityTerms ty = density.eval(y);
    double log_alpha = kNegInf;
    if (ty.feasible) {
      gy = density.grad(y, ty.base);
      log_alpha =
          ty.logp - tx.logp + langevin_log_q(x, y, gy, h) - langevin_log_q(y, x, gx, h);
    }
    const double u = unif(rng);  // drawn every step to keep the stream aligned
    const bool accept = std::log(u) < log_alpha;
    if (accept) {
      x.swap(y);
      tx = ty;
      gx.swap(gy);
    }

    if (it < cfg.burn_in) {
      const double alpha = ty.feasible ? std::min(1.0, std::exp(log_alpha)) : 0.0;
      const double gamma = std::pow(1.0 + it, -0.6);
      log_h += gamma * (alpha - cfg.target_accept);
    } else {
      const int q = it - cfg.burn_in;
      chain.samples.row(q) = x.transpose();
      chain.log_density_trace[q] = tx.logp;
      loss_sum += tx.loss;
      if (accept) ++accepted;
    }
  }

  chain.acceptance_rate = static_cast<double>(accepted) / cfg.n_samples;
  chain.mean_loss = loss_sum / cfg.n_samples;
  return chain;
}

}  // namespace dbnmix
