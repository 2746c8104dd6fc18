#include "specsense/hierarchy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "specsense/parallel.hpp"

namespace specsense {

void SensorSpec::validate() const {
  if (!(gamma > 0.0)) throw error("invalid_sensor", "sensor linewidth must be positive");
  if (!std::isfinite(omega)) throw error("invalid_sensor", "sensor frequency must be finite");
}

SensorSpec sensor_at_cm1(double omega_cm1, double gamma, std::string emission_op_name) {
  return SensorSpec{omega_cm1 * cm_to_rad_ps, gamma, std::move(emission_op_name)};
}

int MultiIndex::weight() const { return std::popcount(ket) + std::popcount(bra); }

const HilbertOperator& AuxMatrixSet::at(unsigned ket, unsigned bra) const {
  auto it = entries.find({ket, bra});
  if (it == entries.end())
    throw error("missing_index", "auxiliary matrix (" + std::to_string(ket) + "," + std::to_string(bra) + ") not solved");
  return it->second;
}

double AuxMatrixSet::population(unsigned mask) const {
  const cplx tr = at(mask, mask).trace();
  if (std::abs(tr.imag()) > 1e-10 * std::abs(tr.real()))
    throw error("imaginary_residue", "trace of a diagonal auxiliary matrix has imaginary part " +
                                         std::to_string(tr.imag()) + " against real part " + std::to_string(tr.real()));
  return tr.real();
}

HierarchySolver::HierarchySolver(const EmitterModel& model)
    : model_(model), L0_(emitter_liouvillian(model)), rho_ss_(specsense::steady_state(L0_)), resolvent_(L0_) {}

cplx HierarchySolver::shift(const MultiIndex& idx, const std::vector<SensorSpec>& sensors) const {
  cplx s = 0.0;
  for (size_t m = 0; m < sensors.size(); ++m) {
    const int j = (idx.ket >> m) & 1u, jp = (idx.bra >> m) & 1u;
    s += 0.5 * (j + jp) * sensors[m].gamma + cplx(0.0, (j - jp) * sensors[m].omega);
  }
  return s;
}

HilbertOperator HierarchySolver::source(const AuxMatrixSet& aux, const MultiIndex& idx,
                                        const std::vector<SensorSpec>& sensors) const {
  HilbertOperator rhs = HilbertOperator::Zero(model_.dim, model_.dim);
  for (size_t m = 0; m < sensors.size(); ++m) {
    const unsigned bit = 1u << m;
    const HilbertOperator& a = model_.emission_op(sensors[m].emission_op_name);
    if (idx.ket & bit) rhs += cplx(0.0, 1.0) * a * aux.at(idx.ket ^ bit, idx.bra);
    if (idx.bra & bit) rhs -= cplx(0.0, 1.0) * aux.at(idx.ket, idx.bra ^ bit) * a.adjoint();
  }
  return rhs;
}

AuxMatrixSet HierarchySolver::solve(const std::vector<SensorSpec>& sensors, const HierarchyOptions& opts) const {
  const int M = static_cast<int>(sensors.size());
  if (M < 1) throw error("invalid_sensor", "at least one sensor is required");
  if (M > 8) throw error("invalid_sensor", "too many sensors");
  for (const auto& s : sensors) {
    s.validate();
    model_.emission_op(s.emission_op_name);
  }

  std::vector<MultiIndex> order;
  const unsigned n = 1u << M;
  for (unsigned k = 0; k < n; ++k)
    for (unsigned b = 0; b < n; ++b) order.push_back({k, b});
  std::stable_sort(order.begin(), order.end(), [](const MultiIndex& x, const MultiIndex& y) { return x.weight() < y.weight(); });

  AuxMatrixSet aux;
  aux.M = M;
  for (const auto& idx : order) {
    if (idx.weight() == 0) {
      aux.entries[idx] = rho_ss_;
      continue;
    }
    if (!opts.solve_conjugates && idx.bra < idx.ket) {
      auto partner = aux.entries.find(idx.swapped());
      if (partner != aux.entries.end()) {
        aux.entries[idx] = partner->second.adjoint();
        continue;
      }
    }
    const HilbertOperator rhs = source(aux, idx, sensors);
    aux.entries[idx] = devectorize(resolvent_.solve(shift(idx, sensors), vectorize(rhs)));
  }
  return aux;
}

double HierarchySolver::residual(const AuxMatrixSet& aux, const std::vector<SensorSpec>& sensors) const {
  double worst = 0.0;
  for (const auto& [idx, rho] : aux.entries) {
    const CVector x = vectorize(rho);
    if (idx.weight() == 0) {
      worst = std::max(worst, (L0_.matrix * x).norm() / L0_.matrix.norm());
      continue;
    }
    const CVector b = vectorize(source(aux, idx, sensors));
    const CVector r = L0_.matrix * x - shift(idx, sensors) * x - b;
    worst = std::max(worst, r.norm() / std::max(b.norm(), 1e-300));
  }
  return worst;
}

AuxMatrixSet solve_hierarchy(const EmitterModel& model, const std::vector<SensorSpec>& sensors) {
  return HierarchySolver(model).solve(sensors);
}

namespace {

// Populations below this fraction of the natural emission scale count as no emission.
void check_denominator(const HierarchySolver& solver, const SensorSpec& s, double population) {
  const HilbertOperator& a = solver.model().emission_op(s.emission_op_name);
  const double scale = (a.adjoint() * a * solver.steady_state()).trace().real() / s.gamma;
  if (!(population > 1e-14 * scale))
    throw error("vanishing_denominator", "no emission into the sensor at omega = " +
                                             std::to_string(s.omega / cm_to_rad_ps) + " cm^-1");
}

}  // namespace

CorrelationCurve power_spectrum(const HierarchySolver& solver, const SensorSpec& sensor, const std::vector<double>& grid,
                                int threads) {
  if (grid.empty()) throw error("invalid_grid", "frequency grid is empty");
  sensor.validate();
  CorrelationCurve curve;
  curve.abscissa_name = "omega_rad_ps";
  curve.value_name = "S";
  curve.abscissa = grid;
  curve.values.assign(grid.size(), 0.0);
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    SensorSpec s = sensor;
    s.omega = grid[i];
    const AuxMatrixSet aux = solver.solve({s});
    curve.values[i] = s.gamma / (2.0 * std::numbers::pi) * aux.population(1);
  });
  curve.metadata["sensor_gamma"] = sensor.gamma;
  curve.metadata["emission_op"] = sensor.emission_op_name;
  return curve;
}

CorrelationCurve power_spectrum(const EmitterModel& model, const SensorSpec& sensor, const std::vector<double>& grid,
                                int threads) {
  return power_spectrum(HierarchySolver(model), sensor, grid, threads);
}

double gM_from_aux(const HierarchySolver& solver, const AuxMatrixSet& aux, const std::vector<SensorSpec>& sensors) {
  const int M = aux.M;
  const unsigned all = (1u << M) - 1;
  double denom = 1.0;
  for (int m = 0; m < M; ++m) {
    const double n = aux.population(1u << m);
    check_denominator(solver, sensors[m], n);
    denom *= n;
  }
  return aux.population(all) / denom;
}

double gM_zero(const HierarchySolver& solver, const std::vector<SensorSpec>& sensors) {
  return gM_from_aux(solver, solver.solve(sensors), sensors);
}

double gM_zero(const EmitterModel& model, const std::vector<SensorSpec>& sensors) {
  return gM_zero(HierarchySolver(model), sensors);
}

double g2_zero(const HierarchySolver& solver, const SensorSpec& s1, const SensorSpec& s2) {
  return gM_zero(solver, {s1, s2});
}

double g2_zero(const EmitterModel& model, const SensorSpec& s1, const SensorSpec& s2) {
  return gM_zero(model, {s1, s2});
}

}  // namespace specsense
