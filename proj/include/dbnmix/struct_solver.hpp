#pragma once

#include "dbnmix/data_io.hpp"
#include "dbnmix/lsem.hpp"

#include <vector>

namespace dbnmix {

struct IpConfig {
  double lambda_w = 0.0;  // L0 penalty per intra-slice edge
  double lambda_a = 0.0;  // L0 penalty per inter-slice edge
  std::vector<StructureMask> exclusions;  // structures forbidden as solutions
  double time_limit = 0.0;  // seconds; 0 = no limit

  void validate() const;
};

struct IpSolution {
  StructureMask mask;
  ParamSet params;
  double objective = 0.0;  // loss + lambda_w*|E_W| + lambda_a*|E_A|
  bool proven_optimal = false;
};

/// Least squares restricted to the mask's support, solved per target column
/// by normal equations with a fixed 1e-10 ridge jitter on the diagonal.
/// Returns the fitted parameters and their loss.
std::pair<ParamSet, double> fit_weights_given_support(const TrajectoryDataset& data,
                                                      const StructureMask& mask);

/// Global minimizer of loss + lambda_w*|E_W| + lambda_a*|E_A| over acyclic
/// intra-slice supports and arbitrary inter-slice supports, excluding
/// cfg.exclusions. Branch-and-bound over edge indicators; the lower bound at
/// a node is the unpenalized fit over all not-yet-excluded edges plus the
/// penalty of the edges already included. proven_optimal is false only when
/// the time limit interrupts the search (the best incumbent is returned).
IpSolution solve_ip(const TrajectoryDataset& data, const IpConfig& cfg);

/// Brute-force reference: enumerates every acyclic e_w and every e_a support
/// in lexicographic mask order and fits each. Guarded to d <= 4, p <= 2.
/// Ties broken by lexicographically smallest mask.
IpSolution enumerate_oracle(const TrajectoryDataset& data, const IpConfig& cfg);

/// Algorithm: for m = 1..M, subsample with seed spec.seed + m and solve the
/// structure problem with all previously found masks excluded (no-good cuts),
/// yielding M structurally distinct solutions.
std::vector<IpSolution> initial_solutions(const TrajectoryDataset& data, int n_models,
                                          const SubsampleSpec& spec, const IpConfig& cfg);

/// Default L0 penalty: sigma2_hat * ln(N_eff), with sigma2_hat the residual
/// variance of the saturated fit and N_eff the number of scalar residuals.
double default_penalty(const TrajectoryDataset& data);

}  // namespace dbnmix
