#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace dbnmix {

using RowMajorMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// N trajectories of T time steps, each observation in R^d. `lag_order` is
/// the number of lag matrices a model fitted on this data will use; time
/// indices are 0-based internally.
struct TrajectoryDataset {
  int n_traj = 0;
  int horizon = 0;
  int dim = 0;
  int lag_order = 0;
  std::vector<double> values;  // [n][t][i], row-major

  double x(int n, int t, int i) const {
    return values[(static_cast<std::size_t>(n) * horizon + t) * dim + i];
  }
  double& x(int n, int t, int i) {
    return values[(static_cast<std::size_t>(n) * horizon + t) * dim + i];
  }

  /// T x d view of one trajectory, row t = observation at time t.
  Eigen::Map<const RowMajorMatrixXd> trajectory(int n) const;

  /// Checks finiteness and the size constraints N >= 1, T >= p + 1,
  /// d >= 1, p >= 0. Throws std::invalid_argument on violation.
  void validate() const;
};

/// True iff the directed graph with edge j -> i whenever adjacency[j*cols+i]
/// is nonzero has no directed cycle. Self-loops count as cycles.
/// Throws std::invalid_argument for non-square input.
bool is_dag(const std::vector<std::uint8_t>& adjacency, int rows, int cols);

/// Binary edge-indicator pair: intra-slice d x d matrix (which must be
/// acyclic) and inter-slice p x d x d tensor. Entry (j, i) means edge j -> i.
struct StructureMask {
  int dim = 0;
  int lag_order = 0;
  std::vector<std::uint8_t> e_w;  // d*d, (j,i) row-major
  std::vector<std::uint8_t> e_a;  // p*d*d, ordered (l,j,i)

  StructureMask() = default;
  StructureMask(int d, int p)
      : dim(d),
        lag_order(p),
        e_w(static_cast<std::size_t>(d) * d, 0),
        e_a(static_cast<std::size_t>(p) * d * d, 0) {}

  std::uint8_t ew(int j, int i) const { return e_w[static_cast<std::size_t>(j) * dim + i]; }
  std::uint8_t& ew(int j, int i) { return e_w[static_cast<std::size_t>(j) * dim + i]; }
  std::uint8_t ea(int l, int j, int i) const {
    return e_a[(static_cast<std::size_t>(l) * dim + j) * dim + i];
  }
  std::uint8_t& ea(int l, int j, int i) {
    return e_a[(static_cast<std::size_t>(l) * dim + j) * dim + i];
  }

  std::size_t count_intra() const;
  std::size_t count_inter() const;
  std::size_t count_total() const { return count_intra() + count_inter(); }

  /// Entries binary, intra-slice graph acyclic. Throws on violation.
  void validate() const;

  bool operator==(const StructureMask& other) const = default;
};

/// Lexicographic order on the concatenated (e_w, e_a) bit string; used as the
/// deterministic tie-break between structures of equal objective.
bool mask_lex_less(const StructureMask& a, const StructureMask& b);

/// Weight matrices paired with a StructureMask: w is d x d, a holds p
/// matrices of the same shape. w(j, i) is the coefficient of X_j in the
/// equation for X_i; a[l](j, i) the coefficient of X_{t-l-1, j}.
struct ParamSet {
  Eigen::MatrixXd w;
  std::vector<Eigen::MatrixXd> a;

  static ParamSet zero(int dim, int lag_order);
  int dim() const { return static_cast<int>(w.rows()); }
  int lag_order() const { return static_cast<int>(a.size()); }
};

/// True iff every nonzero entry of params lies inside the mask's support.
bool params_supported(const ParamSet& params, const StructureMask& mask);

enum class EdgeSlot { Intra, Inter };

struct SupportCoord {
  EdgeSlot slot = EdgeSlot::Intra;
  int lag = 0;  // 0-based lag index, meaningful for Inter only
  int from = 0;
  int to = 0;

  bool operator==(const SupportCoord&) const = default;
};

/// The bijection between R^{s_m} and the nonzero coordinates of a mask:
/// all intra entries first in row-major (from, to) order, then inter entries
/// ordered by (lag, from, to).
struct SupportMap {
  int dim = 0;
  int lag_order = 0;
  std::vector<SupportCoord> entries;

  std::size_t size() const { return entries.size(); }
};

SupportMap build_support_map(const StructureMask& mask);

/// Places theta[k] at map.entries[k], zeros elsewhere.
ParamSet embed_params(const Eigen::VectorXd& theta, const SupportMap& map);

/// Inverse of embed_params. Throws if params has a nonzero entry outside the
/// map's support.
Eigen::VectorXd extract_params(const ParamSet& params, const SupportMap& map);

/// Stacked regression view of a dataset: one row per (trajectory, t) pair
/// with t >= p, so every row has its full lag context. cur holds X_t,
/// lags[l] holds X_{t-l-1}.
struct LaggedDesign {
  int dim = 0;
  int lag_order = 0;
  int rows = 0;
  Eigen::MatrixXd cur;
  std::vector<Eigen::MatrixXd> lags;

  explicit LaggedDesign(const TrajectoryDataset& data);
};

/// Squared-residual loss: sum over rows and coordinates of
/// (X_{t,i} - sum_j w(j,i) X_{t,j} - sum_l sum_j a[l](j,i) X_{t-l-1,j})^2.
double loss(const LaggedDesign& design, const ParamSet& params);
double loss(const TrajectoryDataset& data, const ParamSet& params);

/// Gradient of loss(data, embed_params(theta, map)) with respect to theta.
Eigen::VectorXd loss_gradient(const LaggedDesign& design, const SupportMap& map,
                              const Eigen::VectorXd& theta);
Eigen::VectorXd loss_gradient(const TrajectoryDataset& data, const SupportMap& map,
                              const Eigen::VectorXd& theta);

/// Simulates the row-vector recursion
///   X_t = (X_{t-1} A_1 + ... + X_{t-p} A_p + Z_t)(I - W)^{-1}
/// with Z_t ~ N(0, sigma^2 I). The first p slices are standard-normal noise
/// and the first `warmup` generated steps are discarded. Deterministic given
/// seed.
TrajectoryDataset simulate(const StructureMask& mask, const ParamSet& params,
                           double sigma, int n_traj, int horizon, int warmup,
                           std::uint64_t seed);

}  // namespace dbnmix
