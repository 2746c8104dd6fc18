#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "specsense/curve.hpp"
#include "specsense/emitter.hpp"
#include "specsense/liouville.hpp"

namespace specsense {

// Lorentzian filter: center omega (rad/ps), linewidth gamma (ps^-1).
struct SensorSpec {
  double omega = 0.0;
  double gamma = 1.0 / 4.8;
  std::string emission_op_name = "a";

  void validate() const;
};

SensorSpec sensor_at_cm1(double omega_cm1, double gamma = 1.0 / 4.8, std::string emission_op_name = "a");

// Sensor occupation indices. Bit m of `ket` is j_m, bit m of `bra` is j'_m.
struct MultiIndex {
  unsigned ket = 0;
  unsigned bra = 0;

  int weight() const;
  MultiIndex swapped() const { return {bra, ket}; }
  bool operator<(const MultiIndex& o) const { return std::pair(ket, bra) < std::pair(o.ket, o.bra); }
  bool operator==(const MultiIndex& o) const { return ket == o.ket && bra == o.bra; }
};

struct AuxMatrixSet {
  int M = 0;
  std::map<MultiIndex, HilbertOperator> entries;

  const HilbertOperator& at(unsigned ket, unsigned bra) const;
  const HilbertOperator& steady() const { return at(0, 0); }
  // Real trace of a diagonal-index entry, after the imaginary-residue check.
  double population(unsigned mask) const;
};

struct HierarchyOptions {
  // Solve every index instead of filling Hermitian conjugates by adjoint.
  bool solve_conjugates = false;
};

// Emitter data shared across many hierarchy solves: Liouvillian, its steady state and
// a Hessenberg reduction for cheap shifted solves.
class HierarchySolver {
public:
  explicit HierarchySolver(const EmitterModel& model);

  AuxMatrixSet solve(const std::vector<SensorSpec>& sensors, const HierarchyOptions& opts = {}) const;
  // Largest relative residual of the defining linear equations over all entries.
  double residual(const AuxMatrixSet& aux, const std::vector<SensorSpec>& sensors) const;

  const EmitterModel& model() const { return model_; }
  const Superoperator& liouvillian() const { return L0_; }
  const HilbertOperator& steady_state() const { return rho_ss_; }
  const ShiftedResolvent& resolvent() const { return resolvent_; }

  cplx shift(const MultiIndex& idx, const std::vector<SensorSpec>& sensors) const;
  HilbertOperator source(const AuxMatrixSet& aux, const MultiIndex& idx, const std::vector<SensorSpec>& sensors) const;

private:
  EmitterModel model_;
  Superoperator L0_;
  HilbertOperator rho_ss_;
  ShiftedResolvent resolvent_;
};

AuxMatrixSet solve_hierarchy(const EmitterModel& model, const std::vector<SensorSpec>& sensors);

// Grid in rad/ps.
CorrelationCurve power_spectrum(const HierarchySolver& solver, const SensorSpec& sensor, const std::vector<double>& grid,
                                int threads = 1);
CorrelationCurve power_spectrum(const EmitterModel& model, const SensorSpec& sensor, const std::vector<double>& grid,
                                int threads = 1);

double g2_zero(const HierarchySolver& solver, const SensorSpec& s1, const SensorSpec& s2);
double g2_zero(const EmitterModel& model, const SensorSpec& s1, const SensorSpec& s2);
double gM_zero(const HierarchySolver& solver, const std::vector<SensorSpec>& sensors);
double gM_zero(const EmitterModel& model, const std::vector<SensorSpec>& sensors);

// Normalized correlation from an already solved set (all-ones numerator over single-sensor populations).
double gM_from_aux(const HierarchySolver& solver, const AuxMatrixSet& aux, const std::vector<SensorSpec>& sensors);

}  // namespace specsense
