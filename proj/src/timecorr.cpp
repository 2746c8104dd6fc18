#include "specsense/timecorr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace specsense {

const HilbertOperator& ConditionalBlocks::at(int j, int jp) const {
  auto it = blocks.find({j, jp});
  if (it == blocks.end()) throw error("missing_index", "conditional block not available");
  return it->second;
}

ConditionalBlocks conditional_state(const AuxMatrixSet& aux, int which) {
  if (aux.M != 2) throw error("invalid_sensor", "conditional state needs exactly two sensors");
  if (which != 1 && which != 2) throw error("invalid_argument", "detector must be 1 or 2");
  ConditionalBlocks out;
  out.detector = which;
  const unsigned clicked = which == 1 ? 1u : 2u;
  const int other_shift = which == 1 ? 1 : 0;
  for (int j = 0; j < 2; ++j)
    for (int jp = 0; jp < 2; ++jp)
      out.blocks[{j, jp}] = aux.at(clicked | (static_cast<unsigned>(j) << other_shift),
                                   clicked | (static_cast<unsigned>(jp) << other_shift));
  return out;
}

namespace {

Eigen::RowVectorXcd trace_row(const HilbertOperator& a) { return vectorize(a.transpose()).transpose(); }

}  // namespace

ModalForm modal_form(const Superoperator& L0) {
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(L0.matrix);
  if (es.info() != Eigen::Success) throw error("eigensolver_failed", "eigen decomposition of the Liouvillian failed");
  ModalForm m;
  m.eigenvalues = es.eigenvalues();
  m.vectors = es.eigenvectors();
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m.vectors);
  m.inverse = lu.inverse();
  auto norm1 = [](const Eigen::MatrixXcd& x) { return x.cwiseAbs().colwise().sum().maxCoeff(); };
  m.condition = norm1(m.vectors) * norm1(m.inverse);
  if (!std::isfinite(m.condition)) m.condition = std::numeric_limits<double>::infinity();
  return m;
}

namespace {

// (e^z - 1) / z
cplx phi1(cplx z) {
  if (std::abs(z) >= 0.5) return (std::exp(z) - 1.0) / z;
  cplx term = 1.0, sum = 1.0;
  for (int m = 1; m <= 20; ++m) {
    term *= z / double(m + 1);
    sum += term;
  }
  return sum;
}

cplx dd2(cplx x0, cplx x1, cplx e0, cplx e1, double t) {
  const cplx z = (x0 - x1) * t;
  if (std::abs(z) < 0.5) return t * e1 * phi1(z);
  return (e0 - e1) / (x0 - x1);
}

cplx dd3(const std::array<cplx, 3>& x, const std::array<cplx, 3>& e, double t) {
  int i = 0, j = 1;
  double widest = std::abs(x[0] - x[1]);
  if (std::abs(x[0] - x[2]) > widest) j = 2, widest = std::abs(x[0] - x[2]);
  if (std::abs(x[1] - x[2]) > widest) i = 1, j = 2, widest = std::abs(x[1] - x[2]);
  const int m = 3 - i - j;
  if (widest * t >= 0.5)
    return (dd2(x[m], x[j], e[m], e[j], t) - dd2(x[i], x[m], e[i], e[m], t)) / (x[j] - x[i]);
  // all nodes close: series in complete homogeneous polynomials around x[i]
  const cplx z1 = (x[m] - x[i]) * t, z2 = (x[j] - x[i]) * t;
  cplx h = 1.0, z2pow = 1.0, sum = 0.5;
  double fact = 2.0;
  for (int k = 1; k <= 25; ++k) {
    z2pow *= z2;
    h = z2pow + z1 * h;
    fact *= k + 2;
    sum += h / fact;
  }
  return t * t * e[i] * sum;
}

}  // namespace

cplx exp_divided_difference(cplx x0, cplx x1, double t) { return dd2(x0, x1, std::exp(x0 * t), std::exp(x1 * t), t); }

cplx exp_divided_difference(cplx x0, cplx x1, cplx x2, double t) {
  return dd3({x0, x1, x2}, {std::exp(x0 * t), std::exp(x1 * t), std::exp(x2 * t)}, t);
}

DelayedCoincidence::DelayedCoincidence(const Superoperator& L0, const ConditionalBlocks& blocks,
                                       const HilbertOperator& emission, const SensorSpec& second, double max_step,
                                       const ModalForm* modes)
    : n_(static_cast<int>(L0.matrix.rows())),
      gamma_(second.gamma),
      coherence_shift_(-0.5 * second.gamma, second.omega),
      numerator_zero_(blocks.at(1, 1).trace().real()),
      first_(Eigen::MatrixXcd(), max_step),
      second_(Eigen::MatrixXcd(), max_step) {
  second.validate();
  const int n = n_;
  const Eigen::RowVectorXcd tr = trace_row(emission);
  const Eigen::MatrixXcd right = right_multiply(emission.adjoint()).matrix;

  if (modes) {
    if (modes->vectors.rows() != n) throw error("dimension_mismatch", "modal form does not match the Liouvillian");
    modal_ = true;
    lambda_ = modes->eigenvalues;
    const Eigen::RowVectorXcd p = tr * modes->vectors;
    first_weights_ = p.transpose().cwiseProduct(modes->inverse * vectorize(blocks.at(0, 1)));
    const CVector w = modes->inverse * vectorize(blocks.at(0, 0));
    second_weights_ = p.transpose().asDiagonal() * (modes->inverse * right * modes->vectors) * w.asDiagonal();
    return;
  }

  Eigen::MatrixXcd coherence = L0.matrix;
  coherence.diagonal().array() += coherence_shift_;

  // [z; y1]: z evolves as a sensor coherence, y1 accumulates the damped trace.
  Eigen::MatrixXcd g1 = Eigen::MatrixXcd::Zero(n + 1, n + 1);
  g1.topLeftCorner(n, n) = coherence;
  g1.block(n, 0, 1, n) = tr;
  g1(n, n) = -second.gamma;
  first_state_ = CVector::Zero(n + 1);
  first_state_.head(n) = vectorize(blocks.at(0, 1));

  // [u; W; y2]: u is the conditional population block, W the coherence created from it.
  Eigen::MatrixXcd g2 = Eigen::MatrixXcd::Zero(2 * n + 1, 2 * n + 1);
  g2.topLeftCorner(n, n) = L0.matrix;
  g2.block(n, 0, n, n) = right;
  g2.block(n, n, n, n) = coherence;
  g2.block(2 * n, n, 1, n) = tr;
  g2(2 * n, 2 * n) = -second.gamma;
  second_state_ = CVector::Zero(2 * n + 1);
  second_state_.head(n) = vectorize(blocks.at(0, 0));

  first_ = Propagator(std::move(g1), max_step);
  second_ = Propagator(std::move(g2), max_step);
}

std::array<double, 3> DelayedCoincidence::modal_terms(double tau) const {
  const cplx damp(-gamma_, 0.0);
  const cplx e_damp = std::exp(damp * tau);
  const Eigen::Index n = lambda_.size();
  CVector shifted(n), e_shifted(n), e_lambda(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    shifted(k) = lambda_(k) + coherence_shift_;
    e_shifted(k) = std::exp(shifted(k) * tau);
    e_lambda(k) = std::exp(lambda_(k) * tau);
  }
  cplx y1 = 0.0, y2 = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    y1 += first_weights_(k) * dd2(damp, shifted(k), e_damp, e_shifted(k), tau);
    for (Eigen::Index l = 0; l < n; ++l) {
      const cplx weight = second_weights_(k, l);
      if (weight == cplx(0.0)) continue;
      y2 += weight * dd3({damp, shifted(k), lambda_(l)}, {e_damp, e_shifted(k), e_lambda(l)}, tau);
    }
  }
  return {std::exp(-gamma_ * tau) * numerator_zero_, 2.0 * y1.imag(), 2.0 * y2.real()};
}

std::vector<std::array<double, 3>> DelayedCoincidence::evaluate(const std::vector<double>& taus) {
  std::vector<std::size_t> order(taus.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return taus[a] < taus[b]; });

  std::vector<std::array<double, 3>> out(taus.size());
  CVector x1 = first_state_, x2 = second_state_;
  double t = 0.0;
  for (std::size_t k : order) {
    const double tau = taus[k];
    if (!(tau >= 0.0)) throw error("negative_time", "delays must be non-negative within one branch");
    if (modal_) {
      out[k] = modal_terms(tau);
      continue;
    }
    x1 = first_.advance(x1, tau - t);
    x2 = second_.advance(x2, tau - t);
    t = tau;
    out[k] = {std::exp(-gamma_ * tau) * numerator_zero_, 2.0 * x1(n_).imag(), 2.0 * x2(2 * n_).real()};
  }
  return out;
}

double i0(const ConditionalBlocks& blocks, const SensorSpec& second, double tau) {
  if (tau < 0.0) throw error("negative_time", "delay must be non-negative");
  return std::exp(-second.gamma * tau) * blocks.at(1, 1).trace().real();
}

double i1(const ConditionalBlocks& blocks, const EmitterModel& model, const SensorSpec& second, double tau) {
  DelayedCoincidence dc(emitter_liouvillian(model), blocks, model.emission_op(second.emission_op_name), second);
  return dc.evaluate({tau})[0][1];
}

double i2(const ConditionalBlocks& blocks, const EmitterModel& model, const SensorSpec& second, double tau) {
  DelayedCoincidence dc(emitter_liouvillian(model), blocks, model.emission_op(second.emission_op_name), second);
  return dc.evaluate({tau})[0][2];
}

CorrelationCurve g2_tau(const HierarchySolver& solver, const SensorSpec& s1, const SensorSpec& s2,
                        const std::vector<double>& taus, const G2TauOptions& opts) {
  const std::vector<SensorSpec> sensors{s1, s2};
  const AuxMatrixSet aux = solver.solve(sensors);
  const double n1 = aux.population(1), n2 = aux.population(2);
  const double zero_delay = gM_from_aux(solver, aux, sensors);
  const double norm = n1 * n2;

  std::vector<double> pos, neg;
  std::vector<std::size_t> pos_at, neg_at;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (taus[i] >= 0.0) {
      pos.push_back(taus[i]);
      pos_at.push_back(i);
    } else {
      neg.push_back(-taus[i]);
      neg_at.push_back(i);
    }
  }

  std::vector<std::array<double, 3>> parts(taus.size());
  const Superoperator& L0 = solver.liouvillian();
  const EmitterModel& model = solver.model();
  std::optional<ModalForm> modes;
  if (opts.method != TauMethod::exponential && !taus.empty()) {
    modes = modal_form(L0);
    if (!(modes->condition <= opts.max_condition)) {
      if (opts.method == TauMethod::modal)
        throw error("ill_conditioned", "Liouvillian eigenvectors too ill-conditioned for modal evaluation");
      modes.reset();
    }
  }
  const ModalForm* mp = modes ? &*modes : nullptr;
  if (!pos.empty()) {
    DelayedCoincidence dc(L0, conditional_state(aux, 1), model.emission_op(s2.emission_op_name), s2, opts.max_step, mp);
    const auto r = dc.evaluate(pos);
    for (std::size_t k = 0; k < r.size(); ++k) parts[pos_at[k]] = r[k];
  }
  if (!neg.empty()) {
    DelayedCoincidence dc(L0, conditional_state(aux, 2), model.emission_op(s1.emission_op_name), s1, opts.max_step, mp);
    const auto r = dc.evaluate(neg);
    for (std::size_t k = 0; k < r.size(); ++k) parts[neg_at[k]] = r[k];
  }

  CorrelationCurve curve;
  curve.abscissa_name = "tau_ps";
  curve.value_name = "g2";
  curve.abscissa = taus;
  if (opts.components) curve.components.emplace();
  for (const auto& p : parts) {
    curve.values.push_back((p[0] + p[1] + p[2]) / norm);
    if (opts.components) curve.components->push_back({p[0] / norm, p[1] / norm, p[2] / norm});
  }
  curve.metadata["n1"] = n1;
  curve.metadata["n2"] = n2;
  curve.metadata["g2_zero_delay"] = zero_delay;
  curve.metadata["method"] = mp ? "modal" : "exponential";
  if (mp) curve.metadata["eigenvector_condition"] = mp->condition;
  else curve.metadata["max_step_ps"] = opts.max_step;
  return curve;
}

CorrelationCurve g2_tau(const EmitterModel& model, const SensorSpec& s1, const SensorSpec& s2,
                        const std::vector<double>& taus, const G2TauOptions& opts) {
  return g2_tau(HierarchySolver(model), s1, s2, taus, opts);
}

double i1_asymptotic(const ConditionalBlocks& blocks, const EmitterModel& model, const SensorSpec& second, double tau,
                     EmitterRegime regime, std::optional<SlowEmitterEstimate> slow) {
  const HilbertOperator& a = model.emission_op(second.emission_op_name);
  const HilbertOperator& start = blocks.at(0, 1);
  const double g = second.gamma, w = second.omega;
  if (regime == EmitterRegime::fast) {
    const cplx s(0.5 * g, w);
    const CVector x = shifted_solve(emitter_liouvillian(model), -s, vectorize(start));
    const cplx laplace = -(a * devectorize(x)).trace();
    return 2.0 * std::exp(-g * tau) * laplace.imag();
  }
  if (!slow) throw error("invalid_argument", "slow-emitter regime needs gamma_sys and omega_sys estimates");
  const cplx f0 = (a * start).trace();
  const double gs = slow->gamma_sys, ws = slow->omega_sys;
  const cplx num = std::exp(cplx(-0.5 * (g + gs) * tau, (w - ws) * tau)) - std::exp(-g * tau);
  const cplx den(0.5 * (g - gs), w - ws);
  return 2.0 * (f0 * num / den).imag();
}

namespace {

// e^{base t} * integral_0^t e^{mu s} ds
cplx damped_integral(cplx mu, cplx base, double t) {
  const cplx x = mu * t;
  if (std::abs(x) < 1e-5) return std::exp(base * t) * t * (1.0 + x / 2.0 + x * x / 6.0);
  return (std::exp((base + mu) * t) - std::exp(base * t)) / mu;
}

}  // namespace

double i2_asymptotic(const ConditionalBlocks& blocks, const EmitterModel& model, const SensorSpec& second, double tau) {
  if (tau < 0.0) throw error("negative_time", "delay must be non-negative");
  const HilbertOperator& a = model.emission_op(second.emission_op_name);
  const Superoperator L0 = emitter_liouvillian(model);
  const ModalForm modes = modal_form(L0);
  const CVector& lambda = modes.eigenvalues;
  const Eigen::RowVectorXcd u = trace_row(a) * modes.vectors;
  const Eigen::MatrixXcd B = modes.inverse * right_multiply(a.adjoint()).matrix * modes.vectors;
  const CVector w = modes.inverse * vectorize(blocks.at(0, 0));

  const double g = second.gamma;
  const cplx c(-0.5 * g, second.omega);
  const Eigen::Index n = lambda.size();
  cplx total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (u(k) == cplx(0.0)) continue;
    for (Eigen::Index l = 0; l < n; ++l) {
      const cplx weight = u(k) * B(k, l) * w(l);
      if (weight == cplx(0.0)) continue;
      const cplx mu = c + lambda(k) - 0.5 * lambda(l);
      total += weight * (damped_integral(mu, lambda(l), tau) - damped_integral(mu + g, lambda(l) - g, tau));
    }
  }
  return 2.0 / g * total.real();
}

}  // namespace specsense
