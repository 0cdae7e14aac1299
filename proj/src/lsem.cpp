#include "dbnmix/lsem.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dbnmix {

Eigen::Map<const RowMajorMatrixXd> TrajectoryDataset::trajectory(int n) const {
  return Eigen::Map<const RowMajorMatrixXd>(
      values.data() + static_cast<std::size_t>(n) * horizon * dim, horizon, dim);
}

void TrajectoryDataset::validate() const {
  if (n_traj < 1 || dim < 1 || lag_order < 0)
    throw std::invalid_argument("dataset: need n_traj >= 1, dim >= 1, lag_order >= 0");
  if (horizon < lag_order + 1)
    throw std::invalid_argument("dataset: horizon must be at least lag_order + 1");
  if (values.size() != static_cast<std::size_t>(n_traj) * horizon * dim)
    throw std::invalid_argument("dataset: value buffer size does not match dimensions");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite entry");
}

bool is_dag(const std::vector<std::uint8_t>& adjacency, int rows, int cols) {
  if (rows != cols)
    throw std::invalid_argument("is_dag: adjacency matrix must be square");
  if (adjacency.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("is_dag: adjacency buffer size mismatch");
  const int d = rows;
  // Kahn's algorithm; leftover nodes mean a cycle (self-loops included).
  std::vector<int> indegree(d, 0);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i)
      if (adjacency[static_cast<std::size_t>(j) * d + i]) ++indegree[i];
  std::vector<int> stack;
  for (int i = 0; i < d; ++i)
    if (indegree[i] == 0) stack.push_back(i);
  int removed = 0;
  while (!stack.empty()) {
    int j = stack.back();
    stack.pop_back();
    ++removed;
    for (int i = 0; i < d; ++i)
      if (adjacency[static_cast<std::size_t>(j) * d + i] && --indegree[i] == 0)
        stack.push_back(i);
  }
  return removed == d;
}

std::size_t StructureMask::count_intra() const {
  std::size_t c = 0;
  for (auto v : e_w) c += (v != 0);
  return c;
}

std::size_t StructureMask::count_inter() const {
  std::size_t c = 0;
  for (auto v : e_a) c += (v != 0);
  return c;
}

void StructureMask::validate() const {
  if (dim < 1 || lag_order < 0)
    throw std::invalid_argument("mask: need dim >= 1, lag_order >= 0");
  if (e_w.size() != static_cast<std::size_t>(dim) * dim ||
      e_a.size() != static_cast<std::size_t>(lag_order) * dim * dim)
    throw std::invalid_argument("mask: buffer size mismatch");
  for (auto v : e_w)
    if (v > 1) throw std::invalid_argument("mask: e_w entries must be 0 or 1");
  for (auto v : e_a)
    if (v > 1) throw std::invalid_argument("mask: e_a entries must be 0 or 1");
  if (!is_dag(e_w, dim, dim))
    throw std::invalid_argument("mask: intra-slice graph has a directed cycle");
}

bool mask_lex_less(const StructureMask& a, const StructureMask& b) {
  if (a.e_w != b.e_w)
    return std::lexicographical_compare(a.e_w.begin(), a.e_w.end(), b.e_w.begin(),
                                        b.e_w.end());
  return std::lexicographical_compare(a.e_a.begin(), a.e_a.end(), b.e_a.begin(),
                                      b.e_a.end());
}

ParamSet ParamSet::zero(int dim, int lag_order) {
  ParamSet p;
  p.w = Eigen::MatrixXd::Zero(dim, dim);
  p.a.assign(lag_order, Eigen::MatrixXd::Zero(dim, dim));
  return p;
}

bool params_supported(const ParamSet& params, const StructureMask& mask) {
  if (params.dim() != mask.dim || params.lag_order() != mask.lag_order) return false;
  const int d = mask.dim;
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i)
      if (params.w(j, i) != 0.0 && !mask.ew(j, i)) return false;
  for (int l = 0; l < mask.lag_order; ++l)
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i)
        if (params.a[l](j, i) != 0.0 && !mask.ea(l, j, i)) return false;
  return true;
}

SupportMap build_support_map(const StructureMask& mask) {
  mask.validate();
  SupportMap map;
  map.dim = mask.dim;
  map.lag_order = mask.lag_order;
  for (int j = 0; j < mask.dim; ++j)
    for (int i = 0; i < mask.dim; ++i)
      if (mask.ew(j, i)) map.entries.push_back({EdgeSlot::Intra, 0, j, i});
  for (int l = 0; l < mask.lag_order; ++l)
    for (int j = 0; j < mask.dim; ++j)
      for (int i = 0; i < mask.dim; ++i)
        if (mask.ea(l, j, i)) map.entries.push_back({EdgeSlot::Inter, l, j, i});
  return map;
}

ParamSet embed_params(const Eigen::VectorXd& theta, const SupportMap& map) {
  if (theta.size() != static_cast<Eigen::Index>(map.size()))
    throw std::invalid_argument("embed_params: theta length does not match map size");
  ParamSet p = ParamSet::zero(map.dim, map.lag_order);
  for (std::size_t k = 0; k < map.entries.size(); ++k) {
    const auto& e = map.entries[k];
    if (e.slot == EdgeSlot::Intra)
      p.w(e.from, e.to) = theta[static_cast<Eigen::Index>(k)];
    else
      p.a[e.lag](e.from, e.to) = theta[static_cast<Eigen::Index>(k)];
  }
  return p;
}

Eigen::VectorXd extract_params(const ParamSet& params, const SupportMap& map) {
  if (params.dim() != map.dim || params.lag_order() != map.lag_order)
    throw std::invalid_argument("extract_params: dimension mismatch");
  // Reject values the map cannot represent.
  ParamSet masked = ParamSet::zero(map.dim, map.lag_order);
  Eigen::VectorXd theta(static_cast<Eigen::Index>(map.size()));
  for (std::size_t k = 0; k < map.entries.size(); ++k) {
    const auto& e = map.entries[k];
    double v = e.slot == EdgeSlot::Intra ? params.w(e.from, e.to)
                                         : params.a[e.lag](e.from, e.to);
    theta[static_cast<Eigen::Index>(k)] = v;
    if (e.slot == EdgeSlot::Intra)
      masked.w(e.from, e.to) = v;
    else
      masked.a[e.lag](e.from, e.to) = v;
  }
  if ((params.w - masked.w).cwiseAbs().maxCoeff() != 0.0)
    throw std::invalid_argument("extract_params: nonzero entry outside support");
  for (int l = 0; l < map.lag_order; ++l)
    if ((params.a[l] - masked.a[l]).cwiseAbs().maxCoeff() != 0.0)
      throw std::invalid_argument("extract_params: nonzero entry outside support");
  return theta;
}

LaggedDesign::LaggedDesign(const TrajectoryDataset& data) {
  data.validate();
  dim = data.dim;
  lag_order = data.lag_order;
  rows = data.n_traj * (data.horizon - data.lag_order);
  cur.resize(rows, dim);
  lags.assign(lag_order, Eigen::MatrixXd(rows, dim));
  int r = 0;
  for (int n = 0; n < data.n_traj; ++n) {
    auto traj = data.trajectory(n);
    for (int t = data.lag_order; t < data.horizon; ++t, ++r) {
      cur.row(r) = traj.row(t);
      for (int l = 0; l < lag_order; ++l) lags[l].row(r) = traj.row(t - l - 1);
    }
  }
}

namespace {

void check_param_dims(const LaggedDesign& design, const ParamSet& params,
                      const char* who) {
  if (params.dim() != design.dim || params.w.cols() != params.w.rows() ||
      params.lag_order() != design.lag_order)
    throw std::invalid_argument(std::string(who) + ": parameter dimensions do not match data");
  for (const auto& m : params.a)
    if (m.rows() != design.dim || m.cols() != design.dim)
      throw std::invalid_argument(std::string(who) + ": lag matrix dimension mismatch");
}

Eigen::MatrixXd residual(const LaggedDesign& design, const ParamSet& params) {
  Eigen::MatrixXd resid = design.cur - design.cur * params.w;
  for (int l = 0; l < design.lag_order; ++l) resid.noalias() -= design.lags[l] * params.a[l];
  return resid;
}

}  // namespace

double loss(const LaggedDesign& design, const ParamSet& params) {
  check_param_dims(design, params, "loss");
  return residual(design, params).squaredNorm();
}

double loss(const TrajectoryDataset& data, const ParamSet& params) {
  return loss(LaggedDesign(data), params);
}

Eigen::VectorXd loss_gradient(const LaggedDesign& design, const SupportMap& map,
                              const Eigen::VectorXd& theta) {
  if (map.dim != design.dim || map.lag_order != design.lag_order)
    throw std::invalid_argument("loss_gradient: map dimensions do not match data");
  ParamSet params = embed_params(theta, map);
  Eigen::MatrixXd resid = residual(design, params);
  Eigen::MatrixXd gw = design.cur.transpose() * resid;
  std::vector<Eigen::MatrixXd> ga(design.lag_order);
  for (int l = 0; l < design.lag_order; ++l) ga[l] = design.lags[l].transpose() * resid;
  Eigen::VectorXd grad(static_cast<Eigen::Index>(map.size()));
  for (std::size_t k = 0; k < map.entries.size(); ++k) {
    const auto& e = map.entries[k];
    double g = e.slot == EdgeSlot::Intra ? gw(e.from, e.to) : ga[e.lag](e.from, e.to);
    grad[static_cast<Eigen::Index>(k)] = -2.0 * g;
  }
  return grad;
}

Eigen::VectorXd loss_gradient(const TrajectoryDataset& data, const SupportMap& map,
                              const Eigen::VectorXd& theta) {
  return loss_gradient(LaggedDesign(data), map, theta);
}

TrajectoryDataset simulate(const StructureMask& mask, const ParamSet& params,
                           double sigma, int n_traj, int horizon, int warmup,
                           std::uint64_t seed) {
  mask.validate();
  if (!params_supported(params, mask))
    throw std::invalid_argument("simulate: params not supported on mask");
  if (sigma < 0.0) throw std::invalid_argument("simulate: sigma must be >= 0");
  if (n_traj < 1 || warmup < 0 || horizon < mask.lag_order + 1)
    throw std::invalid_argument("simulate: invalid sizes");

  const int d = mask.dim;
  const int p = mask.lag_order;
  const int total = warmup + horizon;
  // DAG masks make I - W unipotent, so the solve below cannot be singular.
  Eigen::MatrixXd imw_t = (Eigen::MatrixXd::Identity(d, d) - params.w).transpose();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(imw_t);

  TrajectoryDataset data;
  data.n_traj = n_traj;
  data.horizon = horizon;
  data.dim = d;
  data.lag_order = p;
  data.values.resize(static_cast<std::size_t>(n_traj) * horizon * d);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd buf(total, d);
  Eigen::VectorXd rhs(d);
  for (int n = 0; n < n_traj; ++n) {
    for (int t = 0; t < total; ++t) {
      if (t < p) {
        for (int i = 0; i < d; ++i) buf(t, i) = gauss(rng);
        continue;
      }
      for (int i = 0; i < d; ++i) rhs[i] = sigma * gauss(rng);
      for (int l = 0; l < p; ++l) rhs.noalias() += params.a[l].transpose() * buf.row(t - l - 1).transpose();
      buf.row(t) = lu.solve(rhs).transpose();
    }
    for (int t = 0; t < horizon; ++t)
      for (int i = 0; i < d; ++i) data.x(n, t, i) = buf(warmup + t, i);
  }
  data.validate();
  return data;
}

}  // namespace dbnmix
