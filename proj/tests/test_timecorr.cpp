#include "doctest.h"

#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "specsense/timecorr.hpp"

using namespace specsense;

namespace {

constexpr double R3 = 17455.0, R4 = 18515.0;

const HierarchySolver& dimer_solver() {
  static const HierarchySolver solver(build_vibronic_dimer());
  return solver;
}

// Ground state plus two coherently coupled excited states, slow enough for brute-force quadrature.
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

// Composite trapezoid on n intervals of integral_0^tau f.
template <class F>
cplx trapezoid(F f, double tau, int n) {
  const double h = tau / n;
  cplx s = 0.5 * (f(0.0) + f(tau));
  for (int k = 1; k < n; ++k) s += f(k * h);
  return s * h;
}

// 2 Im of the first-order integral, by Richardson-extrapolated trapezoid.
double quadrature_i1(const EmitterModel& m, const ConditionalBlocks& b, const SensorSpec& s, double tau) {
  const Superoperator L = emitter_liouvillian(m);
  const HilbertOperator& a = m.emission_op("a");
  auto f = [&](double t1) {
    return std::exp(cplx(-s.gamma * (tau - t1 / 2), s.omega * t1)) * (a * propagate(L, b.at(0, 1), t1)).trace();
  };
  const cplx coarse = trapezoid(f, tau, 400), fine = trapezoid(f, tau, 800);
  return 2.0 * ((4.0 * fine - coarse) / 3.0).imag();
}

// 2 Re of the simplex integral with the Heisenberg-picture emission operator.
double quadrature_i2(const EmitterModel& m, const ConditionalBlocks& b, const SensorSpec& s, double tau, int n) {
  const Superoperator L = emitter_liouvillian(m);
  const HilbertOperator& a = m.emission_op("a");
  const double h = tau / n;
  std::vector<HilbertOperator> heis(n + 1), rho(n + 1);
  for (int k = 0; k <= n; ++k) {
    heis[k] = heisenberg_propagate(L, a, k * h);
    rho[k] = propagate(L, b.at(0, 0), k * h);
  }
  // trapezoid in t1 over [0, tau], inner trapezoid in t2 over [t1, tau]
  cplx outer = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t1 = i * h;
    cplx inner = 0.0;
    for (int j = i; j <= n; ++j) {
      const double t2 = j * h;
      const cplx v = std::exp(cplx(-s.gamma * (tau - 0.5 * (t1 + t2)), s.omega * (t2 - t1))) *
                     (heis[j - i] * rho[i] * a.adjoint()).trace();
      inner += (j == i || j == n) ? 0.5 * v : v;
    }
    inner *= h;
    outer += (i == 0 || i == n) ? 0.5 * inner : inner;
  }
  return 2.0 * (outer * h).real();
}

}  // namespace

TEST_CASE("conditional blocks reproduce zero-delay traces") {
  const auto& s = dimer_solver();
  const AuxMatrixSet aux = s.solve({sensor_at_cm1(R4), sensor_at_cm1(R3)});
  const ConditionalBlocks b1 = conditional_state(aux, 1), b2 = conditional_state(aux, 2);
  CHECK(std::abs(b1.at(0, 0).trace() - aux.at(1, 1).trace()) == 0.0);
  CHECK(std::abs(b1.at(1, 1).trace() - aux.at(3, 3).trace()) == 0.0);
  CHECK(std::abs(b2.at(0, 0).trace() - aux.at(2, 2).trace()) == 0.0);
  CHECK(is_hermitian(b1.at(0, 0), 1e-10));
  CHECK((b1.at(0, 1) - b2.at(0, 1)).norm() > 1e-3 * b1.at(0, 1).norm());
  AuxMatrixSet one = s.solve({sensor_at_cm1(R3)});
  CHECK_THROWS_AS(conditional_state(one, 1), error);
}

TEST_CASE("zeroth-order term is a pure exponential") {
  const auto& s = dimer_solver();
  const SensorSpec s2 = sensor_at_cm1(R3);
  const ConditionalBlocks b = conditional_state(s.solve({sensor_at_cm1(R4), s2}), 1);
  const double c11 = b.at(1, 1).trace().real();
  CHECK(i0(b, s2, 0.0) == c11);
  CHECK(i0(b, s2, std::log(2.0) / s2.gamma) == doctest::Approx(0.5 * c11).epsilon(1e-14));
  const double slope = (std::log(i0(b, s2, 30.0)) - std::log(i0(b, s2, 10.0))) / 20.0;
  CHECK(std::abs(slope + s2.gamma) <= 1e-6 * s2.gamma);
}

TEST_CASE("first- and second-order terms vanish at zero delay") {
  const auto& s = dimer_solver();
  const SensorSpec s2 = sensor_at_cm1(R3);
  const ConditionalBlocks b = conditional_state(s.solve({sensor_at_cm1(R4), s2}), 1);
  CHECK(i1(b, s.model(), s2, 0.0) == 0.0);
  CHECK(i2(b, s.model(), s2, 0.0) == 0.0);
}

TEST_CASE("exponential divided differences match the bidiagonal exponential") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double t = 0.1 + 5.0 * (u(rng) + 1.0);
    // spread ranges from coincident nodes to well separated ones
    const double spread = std::pow(10.0, -9 + trial % 10);
    const cplx base(-std::abs(u(rng)), 3.0 * u(rng));
    const cplx x0 = base, x1 = base + spread * cplx(u(rng), u(rng)), x2 = base + spread * cplx(u(rng), u(rng));
    Eigen::Matrix3cd T = Eigen::Matrix3cd::Zero();
    T(0, 0) = x0;
    T(1, 1) = x1;
    T(2, 2) = x2;
    T(1, 0) = T(2, 1) = 1.0;
    const Eigen::Matrix3cd E = (T * t).exp();
    // the subdiagonal entries of exp(tT) are t, t^2 times the divided differences
    const cplx d2 = exp_divided_difference(x0, x1, t), d3 = exp_divided_difference(x0, x1, x2, t);
    CHECK(std::abs(d2 - E(1, 0)) <= 1e-12 * std::max(std::abs(E(1, 0)), 1e-300) + 1e-15 * t);
    CHECK(std::abs(d3 - E(2, 0)) <= 1e-11 * std::abs(E(2, 0)) + 1e-15 * t * t);
  }
  CHECK(exp_divided_difference(cplx(-1.0), cplx(2.0, 1.0), 0.0) == cplx(0.0));
}

TEST_CASE("delayed-coincidence terms match brute-force quadrature") {
  const EmitterModel m = three_level();
  const HierarchySolver s(m);
  const SensorSpec s1{3.1, 0.4}, s2{1.4, 0.7};
  const AuxMatrixSet aux = s.solve({s1, s2});
  const ModalForm modes = modal_form(s.liouvillian());
  for (int which : {1, 2}) {
    const ConditionalBlocks b = conditional_state(aux, which);
    const SensorSpec& second = which == 1 ? s2 : s1;
    DelayedCoincidence modal(s.liouvillian(), b, m.emission_op("a"), second, 10.0, &modes);
    CHECK(modal.modal());
    const std::vector<double> taus{0.5, 2.0};
    const auto r = modal.evaluate(taus);
    for (std::size_t k = 0; k < taus.size(); ++k) {
      const double tau = taus[k];
      const double e1 = i1(b, m, second, tau), q1 = quadrature_i1(m, b, second, tau);
      CHECK(std::abs(e1 - q1) <= 1e-7 * std::abs(q1));
      CHECK(std::abs(r[k][1] - q1) <= 1e-7 * std::abs(q1));
      const double e2 = i2(b, m, second, tau);
      const double c = quadrature_i2(m, b, second, tau, 100), f = quadrature_i2(m, b, second, tau, 200);
      const double q2 = (4.0 * f - c) / 3.0;
      CHECK(std::abs(e2 - q2) <= 1e-5 * std::abs(q2));
      CHECK(std::abs(r[k][2] - q2) <= 1e-5 * std::abs(q2));
    }
  }
}

TEST_CASE("short-delay first-order term follows its linear approximation") {
  const auto& s = dimer_solver();
  const SensorSpec s2 = sensor_at_cm1(R3);
  const ConditionalBlocks b = conditional_state(s.solve({sensor_at_cm1(R4), s2}), 1);
  const HilbertOperator& a = s.model().emission_op("a");
  const double delta = 1e-3 / s2.gamma;
  const double linear = 2.0 * delta * (a * b.at(0, 1)).trace().imag();
  const double exact = i1(b, s.model(), s2, delta);
  MESSAGE("I1(delta) / linear approximation = " << exact / linear);
  CHECK(std::abs(exact - linear) <= 0.01 * std::abs(linear));
  // the approximation error shrinks linearly with the delay
  const double finer = i1(b, s.model(), s2, delta / 10.0);
  CHECK(std::abs(finer - linear / 10.0) <= 0.0015 * std::abs(linear / 10.0));
}

TEST_CASE("short-delay second-order term is quadratic") {
  const auto& s = dimer_solver();
  const SensorSpec s2 = sensor_at_cm1(R3);
  const ConditionalBlocks b = conditional_state(s.solve({sensor_at_cm1(R4), s2}), 1);
  const ModalForm modes = modal_form(s.liouvillian());
  DelayedCoincidence dc(s.liouvillian(), b, s.model().emission_op("a"), s2, 10.0, &modes);
  const double delta = 1e-3 / s2.gamma;
  const auto r = dc.evaluate({delta, 2 * delta, delta / 100, delta / 50});
  const double ratio = r[1][2] / r[0][2], fine = r[3][2] / r[2][2];
  MESSAGE("I2(2 delta) / I2(delta) = " << ratio << ", at delta / 100: " << fine);
  CHECK(std::abs(fine - 4.0) <= 0.01 * 4.0);
  CHECK(std::abs(ratio - 4.0) <= 0.05 * 4.0);
}

TEST_CASE("g2(tau) at zero delay equals the zero-delay hierarchy value") {
  const auto& s = dimer_solver();
  const SensorSpec s1 = sensor_at_cm1(R4), s2 = sensor_at_cm1(R3);
  const CorrelationCurve c = g2_tau(s, s1, s2, {0.0});
  CHECK(std::abs(c.values[0] - g2_zero(s, s1, s2)) <= 1e-8);
}

TEST_CASE("dimer delayed correlation: positivity, asymmetry, long-delay limit and component breakdown") {
  const auto& s = dimer_solver();
  const SensorSpec s1 = sensor_at_cm1(R4), s2 = sensor_at_cm1(R3);
  std::vector<double> taus;
  for (int k = -40; k <= 40; ++k) taus.push_back(0.25 * k);
  G2TauOptions opts;
  opts.components = true;
  const CorrelationCurve c = g2_tau(s, s1, s2, taus, opts);
  c.validate();
  double asym = 0.0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    CHECK(c.values[i] >= 0.0);
    const auto& p = (*c.components)[i];
    CHECK(std::abs(p[0] + p[1] + p[2] - c.values[i]) <= 1e-12);
    asym = std::max(asym, std::abs(c.values[i] - c.values[taus.size() - 1 - i]));
  }
  CHECK(asym > 0.01);

  const CorrelationCurve far = g2_tau(s, s1, s2, {-5000.0, 5000.0}, opts);
  CHECK(std::abs(far.values[0] - 1.0) <= 0.05);
  CHECK(std::abs(far.values[1] - 1.0) <= 0.05);
  // the sign convention makes the second-order term carry the uncorrelated limit
  CHECK(std::abs((*far.components)[1][2] - 1.0) <= 0.05);
}

TEST_CASE("identical sensors give a symmetric curve") {
  const auto& s = dimer_solver();
  const SensorSpec s3 = sensor_at_cm1(R3);
  const std::vector<double> taus{-10.0, -5.0, -1.0, -0.2, 0.2, 1.0, 5.0, 10.0};
  const CorrelationCurve c = g2_tau(s, s3, s3, taus);
  for (std::size_t i = 0; i < taus.size() / 2; ++i)
    CHECK(std::abs(c.values[i] - c.values[taus.size() - 1 - i]) <= 1e-6);
}

TEST_CASE("modal and exponential evaluation agree") {
  const auto& s = dimer_solver();
  const SensorSpec s1 = sensor_at_cm1(R4), s2 = sensor_at_cm1(R3);
  const std::vector<double> taus{-3.0, -1.5, 0.0, 1.5, 3.0, 4.5};
  G2TauOptions modal, expo;
  modal.method = TauMethod::modal;
  expo.method = TauMethod::exponential;
  const CorrelationCurve a = g2_tau(s, s1, s2, taus, modal), b = g2_tau(s, s1, s2, taus, expo);
  CHECK(a.metadata["method"] == "modal");
  CHECK(b.metadata["method"] == "exponential");
  MESSAGE("eigenvector condition number " << a.metadata["eigenvector_condition"].get<double>());
  for (std::size_t i = 0; i < taus.size(); ++i) CHECK(std::abs(a.values[i] - b.values[i]) <= 1e-8);
}

TEST_CASE("halving the propagation chunk leaves g2 unchanged") {
  const auto& s = dimer_solver();
  const SensorSpec s1 = sensor_at_cm1(R4), s2 = sensor_at_cm1(R3);
  const std::vector<double> taus{-2.0, -1.0, 0.0, 1.0, 2.0};
  G2TauOptions coarse, fine;
  coarse.method = fine.method = TauMethod::exponential;
  coarse.max_step = 1.0;
  fine.max_step = 0.5;
  const CorrelationCurve a = g2_tau(s, s1, s2, taus, coarse), b = g2_tau(s, s1, s2, taus, fine);
  for (std::size_t i = 0; i < taus.size(); ++i) CHECK(std::abs(a.values[i] - b.values[i]) <= 1e-8);
}

TEST_CASE("first-order approximants") {
  const auto& s = dimer_solver();
  const SensorSpec s2 = sensor_at_cm1(R3);
  const ConditionalBlocks b = conditional_state(s.solve({sensor_at_cm1(R4), s2}), 1);
  const double f1 = i1_asymptotic(b, s.model(), s2, 1.0, EmitterRegime::fast);
  const double f2 = i1_asymptotic(b, s.model(), s2, 3.0, EmitterRegime::fast);
  CHECK(f2 / f1 == doctest::Approx(std::exp(-2.0 * s2.gamma)).epsilon(1e-12));

  const SlowEmitterEstimate est{0.05, s2.omega + 0.3};
  CHECK(i1_asymptotic(b, s.model(), s2, 0.0, EmitterRegime::slow, est) == 0.0);
  CHECK_THROWS_AS(i1_asymptotic(b, s.model(), s2, 1.0, EmitterRegime::slow), error);

  // fastest emitter rate tied to the emission operator is the pure dephasing scale
  const double tau = 5.0 / 1.0;
  const double exact = i1(b, s.model(), s2, tau);
  MESSAGE("fast-emitter approximant vs exact I1 at tau = " << tau << " ps: relative deviation "
                                                           << std::abs(f2 * std::exp(-s2.gamma * (tau - 3.0)) - exact) /
                                                                  std::abs(exact));
}

TEST_CASE("second-order approximant") {
  const auto& s = dimer_solver();
  const SensorSpec s1 = sensor_at_cm1(R4), s2 = sensor_at_cm1(R3);
  const AuxMatrixSet aux = s.solve({s1, s2});
  const ConditionalBlocks b = conditional_state(aux, 1);
  const double nu = 1.0 / (aux.population(1) * aux.population(2));
  CHECK(std::abs(nu * i2_asymptotic(b, s.model(), s2, 5000.0) - 1.0) <= 0.01);
  CHECK(std::isfinite(i2_asymptotic(b, s.model(), s2, 0.0)));
  const double approx = i2_asymptotic(b, s.model(), s2, 50.0), exact = i2(b, s.model(), s2, 50.0);
  MESSAGE("second-order approximant vs exact at 50 ps: relative deviation " << std::abs(approx - exact) / exact);
  CHECK(std::abs(approx - exact) <= 0.1 * exact);
}
