#include "dbnmix/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace dbnmix {

void MixtureEnsemble::validate() const {
  if (models.empty()) throw std::invalid_argument("MixtureEnsemble: need at least one model");
  if (weights.size() != models.size())
    throw std::invalid_argument("MixtureEnsemble: weights/models size mismatch");
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0)
      throw std::invalid_argument("MixtureEnsemble: weights must be finite and >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("MixtureEnsemble: weights must sum to 1");
}

std::vector<double> mixture_weights(const std::vector<double>& mean_losses,
                                    double temperature) {
  if (mean_losses.empty()) throw std::invalid_argument("mixture_weights: empty input");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw std::invalid_argument("mixture_weights: temperature must be finite and > 0");
  for (double l : mean_losses)
    if (!std::isfinite(l)) throw std::invalid_argument("mixture_weights: non-finite loss");

  const std::size_t m = mean_losses.size();
  std::vector<double> score(m);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    score[i] = -mean_losses[i] / temperature;
    top = std::max(top, score[i]);
  }
  double denom = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    score[i] = std::exp(score[i] - top);
    denom += score[i];
  }
  for (double& s : score) s /= denom;
  return score;
}

double bayes_factor(const std::vector<double>& weights, int i, int j) {
  if (i < 0 || j < 0 || i >= static_cast<int>(weights.size()) ||
      j >= static_cast<int>(weights.size()))
    throw std::invalid_argument("bayes_factor: index out of range");
  if (weights[j] == 0.0)
    throw std::domain_error("bayes_factor: denominator weight is zero");
  return weights[i] / weights[j];
}

std::vector<double> sample_evaluation(const MixtureEnsemble& ensemble,
                                      const TrajectoryDataset& valset, int n_draws,
                                      std::uint64_t seed) {
  ensemble.validate();
  valset.validate();
  if (n_draws < 1) throw std::invalid_argument("sample_evaluation: need n_draws >= 1");
  for (const auto& model : ensemble.models)
    if (model.chain.samples.rows() == 0)
      throw std::invalid_argument("sample_evaluation: model has an empty chain");

  const std::size_t m_count = ensemble.models.size();
  std::vector<double> cumulative(m_count);
  double acc = 0.0;
  for (std::size_t i = 0; i < m_count; ++i) {
    acc += ensemble.weights[i];
    cumulative[i] = acc;
  }
  cumulative.back() = std::max(cumulative.back(), 1.0);  // guard rounding at the top

  LaggedDesign design(valset);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<double> draws(n_draws);
  for (int r = 0; r < n_draws; ++r) {
    const double rho = unif(rng);
    std::size_t m = 0;
    while (m + 1 < m_count && cumulative[m] < rho) ++m;
    const auto& model = ensemble.models[m];
    std::uniform_int_distribution<Eigen::Index> pick(0, model.chain.samples.rows() - 1);
    const Eigen::Index q = pick(rng);
    Eigen::VectorXd theta = model.chain.samples.row(q).transpose();
    draws[r] = loss(design, embed_params(theta, model.map));
  }
  return draws;
}

std::vector<double> point_estimate_losses(const MixtureEnsemble& ensemble,
                                          const TrajectoryDataset& valset) {
  ensemble.validate();
  valset.validate();
  LaggedDesign design(valset);
  std::vector<double> out;
  out.reserve(ensemble.models.size());
  for (const auto& model : ensemble.models) out.push_back(loss(design, model.point_params));
  return out;
}

std::vector<HistogramBin> histogram(const std::vector<double>& values, int n_bins) {
  if (values.empty()) throw std::invalid_argument("histogram: empty input");
  if (n_bins < 1) throw std::invalid_argument("histogram: need n_bins >= 1");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("histogram: non-finite value");

  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = (*hi_it > lo) ? *hi_it : lo + 1.0;
  const double width = (hi - lo) / n_bins;

  std::vector<HistogramBin> bins(n_bins);
  for (int b = 0; b < n_bins; ++b) {
    bins[b].left = lo + b * width;
    bins[b].right = (b == n_bins - 1) ? hi : lo + (b + 1) * width;
  }
  for (double v : values) {
    int idx = static_cast<int>(std::floor((v - lo) / width));
    idx = std::clamp(idx, 0, n_bins - 1);
    ++bins[idx].count;
  }
  return bins;
}

}  // namespace dbnmix
