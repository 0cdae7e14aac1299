#pragma once

// Shared helpers for the test binaries. The point of this file is
// *independence*: every oracle here recomputes a quantity from first
// principles (plain loops, Gaussian elimination, Simpson's rule) without
// touching the library's own code paths, so a test comparing the two catches
// bugs in either direction.

#include <dbnmix/lsem.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace testutil {

// Reference loss written directly from the defining sum, indexing the raw
// dataset (no LaggedDesign, no Eigen products).
inline double naive_loss(const dbnmix::TrajectoryDataset& data,
                         const dbnmix::ParamSet& params) {
  const int p = data.lag_order;
  double total = 0.0;
  for (int n = 0; n < data.n_traj; ++n) {
    for (int t = p; t < data.horizon; ++t) {
      for (int i = 0; i < data.dim; ++i) {
        double r = data.x(n, t, i);
        for (int j = 0; j < data.dim; ++j) r -= params.w(j, i) * data.x(n, t, j);
        for (int l = 0; l < p; ++l)
          for (int j = 0; j < data.dim; ++j)
            r -= params.a[l](j, i) * data.x(n, t - l - 1, j);
        total += r * r;
      }
    }
  }
  return total;
}

inline dbnmix::TrajectoryDataset random_dataset(int n_traj, int horizon, int dim,
                                                int lag_order, std::uint64_t seed,
                                                double scale = 1.0) {
  dbnmix::TrajectoryDataset data;
  data.n_traj = n_traj;
  data.horizon = horizon;
  data.dim = dim;
  data.lag_order = lag_order;
  data.values.resize(static_cast<std::size_t>(n_traj) * horizon * dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : data.values) v = normal(rng);
  return data;
}

// Random structure with an acyclic intra-slice part: edges only go forward in
// a shuffled variable order, so acyclicity holds by construction.
inline dbnmix::StructureMask random_dag_mask(int d, int p, int n_intra, int n_inter,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::pair<int, int>> intra_slots;
  for (int u = 0; u < d; ++u)
    for (int v = u + 1; v < d; ++v) intra_slots.emplace_back(order[u], order[v]);
  std::shuffle(intra_slots.begin(), intra_slots.end(), rng);

  std::vector<std::array<int, 3>> inter_slots;
  for (int l = 0; l < p; ++l)
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) inter_slots.push_back({l, j, i});
  std::shuffle(inter_slots.begin(), inter_slots.end(), rng);

  dbnmix::StructureMask mask(d, p);
  n_intra = std::min<int>(n_intra, static_cast<int>(intra_slots.size()));
  n_inter = std::min<int>(n_inter, static_cast<int>(inter_slots.size()));
  for (int k = 0; k < n_intra; ++k)
    mask.ew(intra_slots[k].first, intra_slots[k].second) = 1;
  for (int k = 0; k < n_inter; ++k)
    mask.ea(inter_slots[k][0], inter_slots[k][1], inter_slots[k][2]) = 1;
  mask.validate();
  return mask;
}

// Coefficients with magnitude in [low, high] and random sign on every
// supported entry of the mask.
inline dbnmix::ParamSet random_params_on(const dbnmix::StructureMask& mask,
                                         std::uint64_t seed, double low = 0.3,
                                         double high = 0.8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(low, high);
  std::bernoulli_distribution flip(0.5);
  dbnmix::ParamSet params = dbnmix::ParamSet::zero(mask.dim, mask.lag_order);
  for (int j = 0; j < mask.dim; ++j)
    for (int i = 0; i < mask.dim; ++i)
      if (mask.ew(j, i)) params.w(j, i) = (flip(rng) ? -1.0 : 1.0) * mag(rng);
  for (int l = 0; l < mask.lag_order; ++l)
    for (int j = 0; j < mask.dim; ++j)
      for (int i = 0; i < mask.dim; ++i)
        if (mask.ea(l, j, i)) params.a[l](j, i) = (flip(rng) ? -1.0 : 1.0) * mag(rng);
  return params;
}

inline Eigen::VectorXd central_fd(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& theta, double h) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd hi = theta;
    Eigen::VectorXd lo = theta;
    hi[k] += h;
    lo[k] -= h;
    g[k] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

// Partial-pivot Gaussian elimination; deliberately not Eigen so the normal
// equations oracle shares nothing with the library's solver.
inline std::vector<double> gauss_solve(std::vector<std::vector<double>> a,
                                       std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    if (a[col][col] == 0.0) throw std::runtime_error("gauss_solve: singular system");
    for (int r = col + 1; r < n; ++r) {
      double f = a[r][col] / a[col][col];
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
    x[r] = s / a[r][r];
  }
  return x;
}

// Support-restricted least squares redone from scratch: explicit normal
// equations per target column over the masked regressors (same 1e-10 ridge
// as the library), solved by gauss_solve.
inline dbnmix::ParamSet naive_fit(const dbnmix::TrajectoryDataset& data,
                                  const dbnmix::StructureMask& mask,
                                  double ridge = 1e-10) {
  const int d = data.dim;
  const int p = data.lag_order;
  dbnmix::ParamSet params = dbnmix::ParamSet::zero(d, p);
  // regressor value at (trajectory n, time t): current slice for lag -1,
  // otherwise the slice t-l-1
  auto reg_value = [&](int n, int t, int lag, int j) {
    return lag < 0 ? data.x(n, t, j) : data.x(n, t - lag - 1, j);
  };
  for (int i = 0; i < d; ++i) {
    // gather this column's regressors: (lag, from) pairs, lag -1 = intra
    std::vector<std::pair<int, int>> regs;
    for (int j = 0; j < d; ++j)
      if (mask.ew(j, i)) regs.emplace_back(-1, j);
    for (int l = 0; l < p; ++l)
      for (int j = 0; j < d; ++j)
        if (mask.ea(l, j, i)) regs.emplace_back(l, j);
    if (regs.empty()) continue;
    const int k = static_cast<int>(regs.size());
    std::vector<std::vector<double>> ata(k, std::vector<double>(k, 0.0));
    std::vector<double> aty(k, 0.0);
    for (int n = 0; n < data.n_traj; ++n) {
      for (int t = p; t < data.horizon; ++t) {
        for (int r = 0; r < k; ++r) {
          double zr = reg_value(n, t, regs[r].first, regs[r].second);
          aty[r] += zr * data.x(n, t, i);
          for (int c = 0; c < k; ++c)
            ata[r][c] += zr * reg_value(n, t, regs[c].first, regs[c].second);
        }
      }
    }
    for (int r = 0; r < k; ++r) ata[r][r] += ridge;
    std::vector<double> coef = gauss_solve(ata, aty);
    for (int r = 0; r < k; ++r) {
      if (regs[r].first < 0)
        params.w(regs[r].second, i) = coef[r];
      else
        params.a[regs[r].first](regs[r].second, i) = coef[r];
    }
  }
  return params;
}

inline double simpson(const std::function<double(double)>& f, double a, double b,
                      int n_intervals) {
  if (n_intervals % 2 != 0) ++n_intervals;
  const double h = (b - a) / n_intervals;
  double s = f(a) + f(b);
  for (int k = 1; k < n_intervals; ++k) s += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Nearest-rank percentile on a copy: sort, take element ceil(q*n), 1-based.
inline double percentile_oracle(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::ptrdiff_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::max<std::ptrdiff_t>(1, std::min<std::ptrdiff_t>(rank, values.size()));
  return values[rank - 1];
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace testutil
