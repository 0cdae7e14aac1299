#pragma once

#include <cstdint>
#include <vector>

#include "dbnmix/cgvi_dual.hpp"
#include "dbnmix/lsem.hpp"
#include "dbnmix/sampler.hpp"

namespace dbnmix {

// Everything the aggregation stage needs to know about one fitted model.
struct ModelRecord {
  StructureMask mask;
  ParamSet point_params;
  SupportMap map;
  DualSolution dual;
  PosteriorChain chain;
};

struct MixtureEnsemble {
  std::vector<ModelRecord> models;
  std::vector<double> weights;

  void validate() const;
};

// Softmax weights m_i = exp(-loss_i / temperature) / sum_j exp(-loss_j / temperature),
// computed via log-sum-exp so extreme losses cannot overflow.
std::vector<double> mixture_weights(const std::vector<double>& mean_losses,
                                    double temperature = 1.0);

// Ratio w_i / w_j of two mixture weights; indices are zero-based.
double bayes_factor(const std::vector<double>& weights, int i, int j);

// Draws n_draws evaluation losses: pick a model by inverse-CDF on the weights
// (smallest index whose cumulative weight reaches the uniform draw), pick one
// of its chain samples uniformly, and score the embedded parameters on valset.
std::vector<double> sample_evaluation(const MixtureEnsemble& ensemble,
                                      const TrajectoryDataset& valset, int n_draws,
                                      std::uint64_t seed);

// Validation loss of each model's point estimate.
std::vector<double> point_estimate_losses(const MixtureEnsemble& ensemble,
                                          const TrajectoryDataset& valset);

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  std::int64_t count = 0;
};

// Equal-width bins over [min, max] with the rightmost bin closed; a degenerate
// range widens to one unit so every value lands in the first bin.
std::vector<HistogramBin> histogram(const std::vector<double>& values, int n_bins);

}  // namespace dbnmix
