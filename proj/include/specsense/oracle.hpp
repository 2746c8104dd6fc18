#pragma once

#include <string>
#include <vector>

#include "specsense/curve.hpp"
#include "specsense/emitter.hpp"
#include "specsense/hierarchy.hpp"
#include "specsense/liouville.hpp"

namespace specsense {

// Emitter coupled with strength eps (rad/ps) to M two-level sensors. Joint basis index is
// emitter * 2^M + k, where sensor 1 is the most significant bit of k.
//
// The Liouvillian is stored after the diagonal similarity x_i -> x_i / eps^(W_i), where W_i
// counts sensor excitations on both sides of the joint matrix element. In these coordinates
// every sensor block is of order one, so the steady state can be solved without the
// cancellation problems of the raw eps-dependent system.
struct JointSystem {
  EmitterModel model;
  std::vector<SensorSpec> sensors;
  double eps = 0.0;
  int hilbert_dim = 0;
  SparseOperator liouvillian;  // unscaled
  SparseOperator scaled;
  std::vector<int> excitations;  // sensor excitations per joint basis state
  std::vector<std::string> warnings;

  int M() const { return static_cast<int>(sensors.size()); }
  int liouville_index(int row, int col) const { return row + hilbert_dim * col; }
  int weight(int liouville_idx) const;
  bool sensor_excited(int state, int m) const;
};

struct JointOptions {
  int max_hilbert_dim = 512;
};

JointSystem build_joint(const EmitterModel& model, const std::vector<SensorSpec>& sensors, double eps,
                        const JointOptions& opts = {});

// Stationary state of the joint system in scaled coordinates.
struct JointSteadyState {
  CVector scaled;
  std::vector<int> support;  // coordinates retained by the reachable-subspace restriction
  double residual = 0.0;
  std::vector<std::string> warnings;
};

JointSteadyState joint_steady_state(const JointSystem& joint);

// <n_m> / eps^2 and <n_1 ... n_M> / eps^(2M) from a steady state.
double scaled_population(const JointSystem& joint, const JointSteadyState& ss, int m);
double scaled_coincidence(const JointSystem& joint, const JointSteadyState& ss);

double oracle_spectrum(const JointSystem& joint);
double oracle_gM_zero(const JointSystem& joint);

struct OracleTauOptions {
  // dense restricted exponentials instead of sparse Taylor propagation
  bool dense = false;
  double max_step = 0.5;
};

CorrelationCurve oracle_g2_tau(const JointSystem& joint, const std::vector<double>& taus,
                               const OracleTauOptions& opts = {});

struct NormalOrderReport {
  // Both traces divided by eps^4.
  double trace_collapsed = 0.0;
  double trace_numberop = 0.0;
  double delta = 0.0;
};

NormalOrderReport normal_order_check(const JointSystem& joint, double tau);

}  // namespace specsense
