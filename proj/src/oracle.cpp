#include "specsense/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>

#include <unsupported/Eigen/KroneckerProduct>

namespace specsense {

namespace {

double scale_base(const JointSystem& j) { return j.eps > 0.0 ? j.eps : 1.0; }

SparseOperator sparse_identity(Eigen::Index n) {
  SparseOperator id(n, n);
  id.setIdentity();
  return id;
}

// Lowering operator of sensor m on the sensor register.
SparseOperator sensor_lowering(int M, int m) {
  const int n = 1 << M;
  const int bit = 1 << (M - 1 - m);
  std::vector<Eigen::Triplet<cplx>> trips;
  for (int k = 0; k < n; ++k)
    if (k & bit) trips.emplace_back(k - bit, k, 1.0);
  SparseOperator s(n, n);
  s.setFromTriplets(trips.begin(), trips.end());
  return s;
}

SparseOperator embed(const HilbertOperator& op, int M) {
  return Eigen::kroneckerProduct(SparseOperator(op.sparseView()), sparse_identity(1 << M));
}

CVector expand(const JointSystem& j, const std::vector<int>& support, const CVector& x) {
  CVector full = CVector::Zero(static_cast<Eigen::Index>(j.hilbert_dim) * j.hilbert_dim);
  for (std::size_t k = 0; k < support.size(); ++k) full(support[k]) = x(static_cast<Eigen::Index>(k));
  return full;
}

// Sum over joint states r with sensor `m` excited of base^(2 w(r) - power) * x_rr.
double weighted_diagonal(const JointSystem& j, const CVector& x, int m, int power) {
  const double base = scale_base(j);
  double total = 0.0;
  for (int r = 0; r < j.hilbert_dim; ++r) {
    if (m >= 0 && !j.sensor_excited(r, m)) continue;
    if (m < 0 && j.excitations[r] != j.M()) continue;
    total += std::pow(base, 2 * j.excitations[r] - power) * x(j.liouville_index(r, r)).real();
  }
  return total;
}

// Scaled state after a click on sensor `m`: elements with the sensor excited on both sides
// move to the sensor ground state. The eps^2 of the collapse is left out.
CVector collapse(const JointSystem& j, const CVector& x, int m) {
  const int bit = 1 << (j.M() - 1 - m);
  CVector out = CVector::Zero(x.size());
  for (int c = 0; c < j.hilbert_dim; ++c) {
    if (!(c & bit)) continue;
    for (int r = 0; r < j.hilbert_dim; ++r)
      if (r & bit) out(j.liouville_index(r - bit, c - bit)) = x(j.liouville_index(r, c));
  }
  return out;
}

std::vector<int> nonzero_coordinates(const CVector& x) {
  std::vector<int> idx;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x(i) != cplx(0.0)) idx.push_back(static_cast<int>(i));
  return idx;
}

CVector gather(const CVector& x, const std::vector<int>& support) {
  CVector out(static_cast<Eigen::Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) out(static_cast<Eigen::Index>(k)) = x(support[k]);
  return out;
}

}  // namespace

int JointSystem::weight(int liouville_idx) const {
  return excitations[liouville_idx % hilbert_dim] + excitations[liouville_idx / hilbert_dim];
}

bool JointSystem::sensor_excited(int state, int m) const {
  const int k = state % (1 << M());
  return (k >> (M() - 1 - m)) & 1;
}

JointSystem build_joint(const EmitterModel& model, const std::vector<SensorSpec>& sensors, double eps,
                        const JointOptions& opts) {
  if (!(eps >= 0.0)) throw error("invalid_eps", "sensor coupling must be non-negative");
  if (sensors.empty()) throw error("invalid_sensor", "at least one sensor is required");
  model.validate();
  const int M = static_cast<int>(sensors.size());
  if (M > 16 || static_cast<long long>(model.dim) << M > opts.max_hilbert_dim)
    throw error("dimension_overflow", "joint Hilbert dimension " + std::to_string(static_cast<long long>(model.dim) << M) +
                                          " exceeds the cap " + std::to_string(opts.max_hilbert_dim));

  JointSystem j;
  j.model = model;
  j.sensors = sensors;
  j.eps = eps;
  j.hilbert_dim = model.dim << M;
  for (int r = 0; r < j.hilbert_dim; ++r) j.excitations.push_back(std::popcount(static_cast<unsigned>(r % (1 << M))));

  SparseOperator h = embed(model.hamiltonian, M);
  std::vector<std::pair<SparseOperator, double>> channels;
  for (const auto& ch : model.channels) channels.emplace_back(embed(ch.jump, M), ch.rate);
  const SparseOperator id_e = sparse_identity(model.dim);
  for (int m = 0; m < M; ++m) {
    sensors[m].validate();
    const SparseOperator s = Eigen::kroneckerProduct(id_e, sensor_lowering(M, m));
    const SparseOperator sd = s.adjoint();
    const SparseOperator a = embed(model.emission_op(sensors[m].emission_op_name), M);
    const SparseOperator ad = a.adjoint();
    h += sensors[m].omega * SparseOperator(sd * s);
    h += eps * SparseOperator(SparseOperator(a * sd) + SparseOperator(ad * s));
    channels.emplace_back(s, sensors[m].gamma);
  }
  j.liouvillian = sparse_lindbladian(h, channels);

  const double base = scale_base(j);
  j.scaled = j.liouvillian;
  for (int col = 0; col < j.scaled.outerSize(); ++col)
    for (SparseOperator::InnerIterator it(j.scaled, col); it; ++it)
      it.valueRef() *= std::pow(base, j.weight(col) - j.weight(static_cast<int>(it.row())));

  double slowest = std::numeric_limits<double>::infinity();
  for (const auto& ch : model.channels)
    if (ch.rate > 0.0) slowest = std::min(slowest, ch.rate);
  for (const auto& s : sensors) {
    const double bound = std::sqrt(s.gamma * slowest / 2.0);
    if (std::isfinite(bound) && eps > 0.1 * bound)
      j.warnings.push_back("eps = " + std::to_string(eps) + " rad/ps is not small against the validity bound " +
                           std::to_string(bound) + " rad/ps");
  }
  return j;
}

JointSteadyState joint_steady_state(const JointSystem& joint) {
  const int D = joint.hilbert_dim;
  std::vector<int> seed;
  for (int r = 0; r < D; ++r) seed.push_back(joint.liouville_index(r, r));
  JointSteadyState ss;
  ss.support = reachable_support(joint.scaled, seed);
  const SparseOperator block = restrict_sparse(joint.scaled, ss.support);

  const double base = scale_base(joint);
  CVector norm = CVector::Zero(static_cast<Eigen::Index>(ss.support.size()));
  int pivot = -1;
  for (std::size_t k = 0; k < ss.support.size(); ++k) {
    const int i = ss.support[k];
    if (i % (D + 1) != 0) continue;
    const int r = i / (D + 1);
    norm(static_cast<Eigen::Index>(k)) = std::pow(base, 2 * joint.excitations[r]);
    if (pivot < 0) pivot = static_cast<int>(k);
  }
  const CVector x = sparse_stationary(block, norm, pivot);
  ss.residual = (block * x).norm();
  ss.scaled = expand(joint, ss.support, x);

  const double n_raw = [&] {
    double worst = 0.0;
    for (int m = 0; m < joint.M(); ++m)
      worst = std::max(worst, weighted_diagonal(joint, ss.scaled, m, 0));
    return worst;
  }();
  if (n_raw > 1e-2)
    ss.warnings.push_back("sensor population " + std::to_string(n_raw) +
                          " is not small; results leave the weak-coupling regime");
  return ss;
}

double scaled_population(const JointSystem& joint, const JointSteadyState& ss, int m) {
  return weighted_diagonal(joint, ss.scaled, m, 2);
}

double scaled_coincidence(const JointSystem& joint, const JointSteadyState& ss) {
  return weighted_diagonal(joint, ss.scaled, -1, 2 * joint.M());
}

double oracle_spectrum(const JointSystem& joint) {
  if (joint.M() != 1) throw error("invalid_sensor", "oracle spectrum needs exactly one sensor");
  if (!(joint.eps > 0.0)) throw error("invalid_eps", "oracle spectrum is undefined at eps = 0");
  const JointSteadyState ss = joint_steady_state(joint);
  return joint.sensors[0].gamma / (2.0 * std::numbers::pi) * scaled_population(joint, ss, 0);
}

double oracle_gM_zero(const JointSystem& joint) {
  if (joint.M() < 2) throw error("invalid_sensor", "oracle correlation needs at least two sensors");
  if (!(joint.eps > 0.0)) throw error("invalid_eps", "oracle correlation is undefined at eps = 0");
  const JointSteadyState ss = joint_steady_state(joint);
  double denom = 1.0;
  for (int m = 0; m < joint.M(); ++m) {
    const double n = scaled_population(joint, ss, m);
    if (!(n > 0.0)) throw error("vanishing_denominator", "sensor " + std::to_string(m + 1) + " receives no emission");
    denom *= n;
  }
  return scaled_coincidence(joint, ss) / denom;
}

CorrelationCurve oracle_g2_tau(const JointSystem& joint, const std::vector<double>& taus, const OracleTauOptions& opts) {
  if (joint.M() != 2) throw error("invalid_sensor", "oracle delayed correlation needs exactly two sensors");
  if (!(joint.eps > 0.0)) throw error("invalid_eps", "oracle correlation is undefined at eps = 0");
  const JointSteadyState ss = joint_steady_state(joint);
  const double n1 = scaled_population(joint, ss, 0), n2 = scaled_population(joint, ss, 1);
  if (!(n1 > 0.0 && n2 > 0.0)) throw error("vanishing_denominator", "a sensor receives no emission");

  CorrelationCurve curve;
  curve.abscissa_name = "tau_ps";
  curve.value_name = "g2_oracle";
  curve.abscissa = taus;
  curve.values.assign(taus.size(), 0.0);

  for (int branch = 0; branch < 2; ++branch) {
    const int clicked = branch == 0 ? 0 : 1, observed = 1 - clicked;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < taus.size(); ++i)
      if ((branch == 0) == (taus[i] >= 0.0)) order.push_back(i);
    if (order.empty()) continue;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(taus[a]) < std::abs(taus[b]); });

    const CVector start = collapse(joint, ss.scaled, clicked);
    const std::vector<int> support = reachable_support(joint.scaled, nonzero_coordinates(start));
    const SparseOperator block = restrict_sparse(joint.scaled, support);
    std::optional<Propagator> prop;
    if (opts.dense) prop.emplace(Eigen::MatrixXcd(block), opts.max_step);
    CVector x = gather(start, support);
    double t = 0.0;
    for (std::size_t i : order) {
      const double tau = std::abs(taus[i]);
      x = prop ? prop->advance(x, tau - t) : expm_multiply(block, x, tau - t);
      t = tau;
      curve.values[i] = weighted_diagonal(joint, expand(joint, support, x), observed, 2) / (n1 * n2);
    }
  }
  curve.metadata["eps_rad_ps"] = joint.eps;
  curve.metadata["n1_scaled"] = n1;
  curve.metadata["n2_scaled"] = n2;
  curve.metadata["propagation"] = opts.dense ? "dense" : "sparse";
  return curve;
}

NormalOrderReport normal_order_check(const JointSystem& joint, double tau) {
  if (joint.M() != 2) throw error("invalid_sensor", "normal-order check needs exactly two sensors");
  if (tau < 0.0) throw error("negative_time", "delay must be non-negative");
  const JointSteadyState ss = joint_steady_state(joint);

  const CVector collapsed = collapse(joint, ss.scaled, 0);
  CVector ordered = CVector::Zero(ss.scaled.size());
  const int D = joint.hilbert_dim;
  for (int c = 0; c < D; ++c) {
    if (!joint.sensor_excited(c, 0)) continue;
    for (int r = 0; r < D; ++r) ordered(joint.liouville_index(r, c)) = ss.scaled(joint.liouville_index(r, c));
  }

  auto evolve = [&](const CVector& x0, int power) {
    const std::vector<int> support = reachable_support(joint.scaled, nonzero_coordinates(x0));
    CVector x = gather(x0, support);
    x = expm_multiply(restrict_sparse(joint.scaled, support), x, tau);
    return weighted_diagonal(joint, expand(joint, support, x), 1, power);
  };

  NormalOrderReport rep;
  rep.trace_collapsed = evolve(collapsed, 2);
  rep.trace_numberop = evolve(ordered, 4);
  rep.delta = rep.trace_numberop - rep.trace_collapsed;
  return rep;
}

}  // namespace specsense
