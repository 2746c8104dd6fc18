#include "doctest.h"

#include <cmath>
#include <numbers>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "specsense/oracle.hpp"
#include "specsense/timecorr.hpp"

using namespace specsense;

namespace {

constexpr double R3 = 17455.0, R4 = 18515.0;

const HierarchySolver& dimer_solver() {
  static const HierarchySolver solver(build_vibronic_dimer());
  return solver;
}

EmitterModel three_level() {
  EmitterModel m;
  m.dim = 3;
  m.hamiltonian = HilbertOperator::Zero(3, 3);
  m.hamiltonian(1, 1) = 3.0;
  m.hamiltonian(2, 2) = 1.5;
  m.hamiltonian(1, 2) = m.hamiltonian(2, 1) = 0.6;
  auto op = [](int i, int j) {
    HilbertOperator x = HilbertOperator::Zero(3, 3);
    x(i, j) = 1.0;
    return x;
  };
  m.channels = {{op(0, 1), 0.3}, {op(0, 2), 0.2}, {op(1, 0), 0.4}, {op(1, 1), 0.5}};
  m.emission_ops = {{"a", op(0, 1) + op(0, 2)}};
  return m;
}

// Unscaled dense construction of the emitter plus two sensors, written out directly.
struct DenseJoint {
  int dim;
  Eigen::MatrixXcd L, n1, n2, s1;
};

DenseJoint dense_joint(const EmitterModel& m, const SensorSpec& a, const SensorSpec& b, double eps) {
  using Eigen::MatrixXcd;
  const MatrixXcd id2 = MatrixXcd::Identity(2, 2), ide = MatrixXcd::Identity(m.dim, m.dim);
  MatrixXcd lower = MatrixXcd::Zero(2, 2);
  lower(0, 1) = 1.0;
  const MatrixXcd s1 = Eigen::kroneckerProduct(ide, Eigen::kroneckerProduct(lower, id2)).eval();
  const MatrixXcd s2 = Eigen::kroneckerProduct(ide, Eigen::kroneckerProduct(id2, lower)).eval();
  const MatrixXcd id4 = MatrixXcd::Identity(4, 4);
  auto emb = [&](const MatrixXcd& x) { return MatrixXcd(Eigen::kroneckerProduct(x, id4)); };
  const MatrixXcd em = emb(m.emission_op("a"));
  MatrixXcd h = emb(m.hamiltonian) + a.omega * s1.adjoint() * s1 + b.omega * s2.adjoint() * s2 +
                eps * (em * s1.adjoint() + em.adjoint() * s1) + eps * (em * s2.adjoint() + em.adjoint() * s2);
  const int D = static_cast<int>(h.rows());
  const MatrixXcd I = MatrixXcd::Identity(D, D);
  MatrixXcd L = cplx(0.0, -1.0) * (MatrixXcd(Eigen::kroneckerProduct(I, h)) - MatrixXcd(Eigen::kroneckerProduct(h.transpose(), I)));
  auto add = [&](const MatrixXcd& c, double rate) {
    const MatrixXcd cdc = c.adjoint() * c;
    L += rate * (MatrixXcd(Eigen::kroneckerProduct(c.conjugate(), c)) - 0.5 * MatrixXcd(Eigen::kroneckerProduct(I, cdc)) -
                 0.5 * MatrixXcd(Eigen::kroneckerProduct(cdc.transpose(), I)));
  };
  for (const auto& ch : m.channels) add(emb(ch.jump), ch.rate);
  add(s1, a.gamma);
  add(s2, b.gamma);
  return {D, L, s1.adjoint() * s1, s2.adjoint() * s2, s1};
}

Eigen::MatrixXcd dense_stationary(const DenseJoint& j) {
  Eigen::MatrixXcd A = j.L;
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(A.rows());
  for (int r = 0; r < j.dim; ++r) A(0, r * (j.dim + 1)) = 1.0;
  for (int c = 0; c < A.cols(); ++c)
    if (c % (j.dim + 1) != 0) A(0, c) = 0.0;
  rhs(0) = 1.0;
  const Eigen::VectorXcd x = A.fullPivLu().solve(rhs);
  return Eigen::Map<const Eigen::MatrixXcd>(x.data(), j.dim, j.dim);
}

}  // namespace

TEST_CASE("joint dimensions and construction checks") {
  const EmitterModel m = build_vibronic_dimer();
  const double eps = 1e-3 * cm_to_rad_ps;
  const JointSystem one = build_joint(m, {sensor_at_cm1(R3)}, eps);
  CHECK(one.hilbert_dim == 36);
  CHECK(one.liouvillian.rows() == 1296);
  const JointSystem two = build_joint(m, {sensor_at_cm1(R4), sensor_at_cm1(R3)}, eps);
  CHECK(two.scaled.rows() == 5184);
  CHECK(trace_defect(one.liouvillian, one.hilbert_dim) <= 1e-12);
  CHECK(trace_defect(two.liouvillian, two.hilbert_dim) <= 1e-12);
  CHECK(one.warnings.empty());
  JointOptions small;
  small.max_hilbert_dim = 64;
  try {
    build_joint(m, {sensor_at_cm1(R4), sensor_at_cm1(R3)}, eps, small);
    FAIL("expected an overflow");
  } catch (const error& e) {
    CHECK(e.code() == "dimension_overflow");
  }
  CHECK_THROWS_AS(build_joint(m, {sensor_at_cm1(R3)}, -1.0), error);
  CHECK(!build_joint(m, {sensor_at_cm1(R3)}, 0.5).warnings.empty());
}

TEST_CASE("decoupled joint steady state is the emitter state with sensors in the ground state") {
  const auto& s = dimer_solver();
  const JointSystem j = build_joint(s.model(), {sensor_at_cm1(R3)}, 0.0);
  const JointSteadyState ss = joint_steady_state(j);
  const int D = j.hilbert_dim;
  const HilbertOperator rho = devectorize(ss.scaled);
  HilbertOperator expected = HilbertOperator::Zero(D, D);
  for (int r = 0; r < s.model().dim; ++r)
    for (int c = 0; c < s.model().dim; ++c) expected(2 * r, 2 * c) = s.steady_state()(r, c);
  CHECK((rho - expected).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK_THROWS_AS(oracle_spectrum(j), error);
}

TEST_CASE("rescaled oracle matches an unscaled dense joint solve") {
  const EmitterModel m = three_level();
  const SensorSpec a{3.1, 0.4}, b{1.4, 0.7};
  const double eps = 0.02;
  const DenseJoint dj = dense_joint(m, a, b, eps);
  const Eigen::MatrixXcd rho = dense_stationary(dj);
  const double n1 = (dj.n1 * rho).trace().real(), n2 = (dj.n2 * rho).trace().real();
  const double n12 = (dj.n1 * dj.n2 * rho).trace().real();

  const JointSystem j = build_joint(m, {a, b}, eps);
  const JointSteadyState ss = joint_steady_state(j);
  CHECK(ss.residual <= 1e-10);
  const double e2 = eps * eps;
  CHECK(std::abs(scaled_population(j, ss, 0) * e2 - n1) <= 1e-8 * n1);
  CHECK(std::abs(scaled_population(j, ss, 1) * e2 - n2) <= 1e-8 * n2);
  CHECK(std::abs(scaled_coincidence(j, ss) * e2 * e2 - n12) <= 1e-7 * n12);
  CHECK(std::abs(oracle_gM_zero(j) - n12 / (n1 * n2)) <= 1e-7 * n12 / (n1 * n2));

  // delayed correlation by direct propagation of the collapsed state
  const double tau = 1.3;
  const Eigen::MatrixXcd collapsed = dj.s1 * rho * dj.s1.adjoint();
  const Eigen::VectorXcd evolved =
      (dj.L * tau).exp() * Eigen::Map<const Eigen::VectorXcd>(collapsed.data(), collapsed.size());
  const double num = (dj.n2 * Eigen::Map<const Eigen::MatrixXcd>(evolved.data(), dj.dim, dj.dim)).trace().real();
  const CorrelationCurve c = oracle_g2_tau(j, {tau});
  CHECK(std::abs(c.values[0] - num / (n1 * n2)) <= 1e-7 * c.values[0]);
}

TEST_CASE("sparse and dense oracle propagation agree") {
  const JointSystem j = build_joint(three_level(), {SensorSpec{3.1, 0.4}, SensorSpec{1.4, 0.7}}, 0.01);
  const std::vector<double> taus{-4.0, -0.7, 0.0, 0.3, 2.9};
  OracleTauOptions dense;
  dense.dense = true;
  const CorrelationCurve a = oracle_g2_tau(j, taus), b = oracle_g2_tau(j, taus, dense);
  for (std::size_t i = 0; i < taus.size(); ++i) CHECK(std::abs(a.values[i] - b.values[i]) <= 1e-10 * b.values[i]);
}

TEST_CASE("zero-delay oracle correlation is consistent") {
  const EmitterModel m = three_level();
  const SensorSpec a{3.1, 0.4}, b{1.4, 0.7};
  const JointSystem j = build_joint(m, {a, b}, 0.01);
  const CorrelationCurve c = oracle_g2_tau(j, {0.0});
  CHECK(std::abs(c.values[0] - oracle_gM_zero(j)) <= 1e-10 * c.values[0]);
  CHECK(std::abs(oracle_gM_zero(build_joint(m, {b, a}, 0.01)) - oracle_gM_zero(j)) <= 1e-10 * oracle_gM_zero(j));
  CHECK_THROWS_AS(oracle_gM_zero(build_joint(m, {a}, 0.01)), error);
  CHECK_THROWS_AS(oracle_spectrum(j), error);
}

TEST_CASE("identical sensors give a symmetric oracle curve") {
  const SensorSpec a{2.2, 0.5};
  const JointSystem j = build_joint(three_level(), {a, a}, 0.01);
  const std::vector<double> taus{-3.0, -1.0, -0.25, 0.25, 1.0, 3.0};
  const CorrelationCurve c = oracle_g2_tau(j, taus);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(c.values[i] - c.values[5 - i]) <= 1e-10);
}

TEST_CASE("oracle spectrum approaches the hierarchy value from below") {
  const auto& s = dimer_solver();
  const SensorSpec sensor = sensor_at_cm1(R3);
  const double exact = power_spectrum(s, sensor, {sensor.omega}).values[0];
  double previous = 0.0;
  for (double eps_cm : {2e-3, 1e-3, 5e-4}) {
    const double o = oracle_spectrum(build_joint(s.model(), {sensor}, eps_cm * cm_to_rad_ps));
    CHECK(o < exact);
    CHECK(o > previous);
    previous = o;
  }
}

TEST_CASE("oracle zero-delay correlation approaches the hierarchy value from above") {
  const auto& s = dimer_solver();
  const SensorSpec s1 = sensor_at_cm1(R4), s2 = sensor_at_cm1(R3);
  const double exact = g2_zero(s, s1, s2);
  double previous = std::numeric_limits<double>::infinity();
  for (double eps_cm : {1e-2, 3e-3, 1e-3}) {
    const double o = oracle_gM_zero(build_joint(s.model(), {s1, s2}, eps_cm * cm_to_rad_ps));
    CHECK(o > exact);
    CHECK(o < previous);
    previous = o;
  }
  CHECK(std::abs(previous - exact) <= 1e-4 * exact);
}

TEST_CASE("normal-ordering identity at zero delay and its failure afterwards") {
  const SensorSpec a{3.1, 0.4}, b{1.4, 0.7};
  const EmitterModel m = three_level();
  const NormalOrderReport zero = normal_order_check(build_joint(m, {a, b}, 0.01), 0.0);
  CHECK(std::abs(zero.delta) <= 1e-12 * std::max(1.0, std::abs(zero.trace_collapsed)));
  double ratio_prev = 0.0;
  for (double eps : {0.02, 0.005}) {
    const NormalOrderReport r = normal_order_check(build_joint(m, {a, b}, eps), 2.0 / a.gamma);
    CHECK(std::abs(r.delta) > 1e-6 * std::abs(r.trace_collapsed));
    const double ratio = r.trace_numberop / r.trace_collapsed;
    CHECK(std::abs(ratio - 1.0) > 1e-3);
    if (ratio_prev != 0.0) CHECK(std::abs(ratio - ratio_prev) <= 0.01 * std::abs(ratio_prev));
    ratio_prev = ratio;
  }
  CHECK_THROWS_AS(normal_order_check(build_joint(m, {a, b}, 0.01), -1.0), error);

  const auto& s = dimer_solver();
  const NormalOrderReport d =
      normal_order_check(build_joint(s.model(), {sensor_at_cm1(R4), sensor_at_cm1(R3)}, 1e-3 * cm_to_rad_ps), 0.0);
  CHECK(std::abs(d.delta) <= 1e-12 * std::max(1.0, std::abs(d.trace_collapsed)));
}
