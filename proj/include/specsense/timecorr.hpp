#pragma once

#include <array>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "specsense/curve.hpp"
#include "specsense/hierarchy.hpp"

namespace specsense {

// Emitter blocks of the state right after a detection. For detector 1 the key (j, j') selects
// the entry with sensor 1 indices (1, 1) and sensor 2 indices (j, j'); detector 2 swaps roles.
struct ConditionalBlocks {
  int detector = 1;
  std::map<std::pair<int, int>, HilbertOperator> blocks;

  const HilbertOperator& at(int j, int jp) const;
};

ConditionalBlocks conditional_state(const AuxMatrixSet& aux, int which);

// Zeroth-, first- and second-order delayed-coincidence terms for the sensor that clicks second.
double i0(const ConditionalBlocks& blocks, const SensorSpec& second, double tau);
double i1(const ConditionalBlocks& blocks, const EmitterModel& model, const SensorSpec& second, double tau);
double i2(const ConditionalBlocks& blocks, const EmitterModel& model, const SensorSpec& second, double tau);

// Eigendecomposition L0 = V diag(lambda) V^-1 with the 1-norm condition number of V.
struct ModalForm {
  CVector eigenvalues;
  Eigen::MatrixXcd vectors;
  Eigen::MatrixXcd inverse;
  double condition = 0.0;
};

ModalForm modal_form(const Superoperator& L0);

// Divided differences of t -> exp(x t) at two and three nodes, stable for close nodes.
cplx exp_divided_difference(cplx x0, cplx x1, double t);
cplx exp_divided_difference(cplx x0, cplx x1, cplx x2, double t);

// Evaluates (I0, I1, I2) for one branch. With a modal form the finite-time integrals are summed in
// closed form over eigenmode pairs; without one they are carried as extra coordinates of a linear
// system and advanced with matrix exponentials.
class DelayedCoincidence {
public:
  DelayedCoincidence(const Superoperator& L0, const ConditionalBlocks& blocks, const HilbertOperator& emission,
                     const SensorSpec& second, double max_step = 10.0, const ModalForm* modes = nullptr);

  // Delays must be non-negative; they are evaluated in ascending order internally.
  std::vector<std::array<double, 3>> evaluate(const std::vector<double>& taus);

  bool modal() const { return modal_; }

private:
  std::array<double, 3> modal_terms(double tau) const;

  int n_;
  double gamma_;
  cplx coherence_shift_;
  double numerator_zero_;
  bool modal_ = false;
  CVector first_state_;
  CVector second_state_;
  Propagator first_;
  Propagator second_;
  CVector lambda_;
  CVector first_weights_;
  Eigen::MatrixXcd second_weights_;
};

enum class TauMethod { automatic, modal, exponential };

struct G2TauOptions {
  bool components = false;
  double max_step = 10.0;
  TauMethod method = TauMethod::automatic;
  // automatic falls back to exponentials above this eigenvector condition number
  double max_condition = 1e8;
};

CorrelationCurve g2_tau(const HierarchySolver& solver, const SensorSpec& s1, const SensorSpec& s2,
                        const std::vector<double>& taus, const G2TauOptions& opts = {});
CorrelationCurve g2_tau(const EmitterModel& model, const SensorSpec& s1, const SensorSpec& s2,
                        const std::vector<double>& taus, const G2TauOptions& opts = {});

enum class EmitterRegime { fast, slow };

struct SlowEmitterEstimate {
  double gamma_sys = 0.0;
  double omega_sys = 0.0;
};

// Closed-form approximants for the first-order term; diagnostics only.
double i1_asymptotic(const ConditionalBlocks& blocks, const EmitterModel& model, const SensorSpec& second, double tau,
                     EmitterRegime regime, std::optional<SlowEmitterEstimate> slow = std::nullopt);

// Approximant of the second-order term with the inner delay integrated out; diagnostics only.
double i2_asymptotic(const ConditionalBlocks& blocks, const EmitterModel& model, const SensorSpec& second, double tau);

}  // namespace specsense
