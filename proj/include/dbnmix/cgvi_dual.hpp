#pragma once

#include <cstdint>

namespace dbnmix {

// Configuration of the two-variable dual problem
//   min_{mu, lambda >= lambda_min}  mu + epsilon*lambda
//                                   + lambda*[(1 + (E - mu)/(lambda*beta))^beta - 1]
// where E = reference_loss is the training loss of a point estimate. beta must
// be negative; epsilon is the divergence budget. lambda_min keeps the
// downstream density well-defined (the unconstrained problem drives lambda to
// zero when the reference measure is a point mass).
struct DualConfig {
  double epsilon = 0.1;
  double beta = -1.0;
  double lambda_min = 1e-3;
  double reference_loss = 0.0;

  void validate() const;
};

struct DualSolution {
  double mu = 0.0;
  double lambda = 0.0;
  double objective = 0.0;
  bool converged = false;
  // carried along so downstream density evaluation needs no extra plumbing
  double epsilon = 0.0;
  double beta = 0.0;
};

// Evaluates the dual objective at (mu, lambda). Points with
// 1 + (E - mu)/(lambda*beta) <= 0 are infeasible and return +infinity so a
// minimizer can probe the boundary. lambda <= 0 is a hard domain error.
double dual_objective(double mu, double lambda, const DualConfig& cfg);

// Minimizes the dual objective over {mu feasible, lambda >= lambda_min}.
// The inner minimization over mu is analytic (stationary at mu = E); the outer
// lambda search runs golden-section on log(lambda) followed by local
// refinement. The initial point sizes the search bracket.
DualSolution solve_dual(const DualConfig& cfg, double init_mu, double init_lambda);
DualSolution solve_dual(const DualConfig& cfg);

}  // namespace dbnmix
