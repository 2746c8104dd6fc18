#pragma once

#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace specsense {

using cplx = std::complex<double>;
using HilbertOperator = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using SparseOperator = Eigen::SparseMatrix<cplx>;

// Errors carry a short machine-readable code next to the message.
class error : public std::runtime_error {
public:
  error(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

private:
  std::string code_;
};

// 1 cm^-1 expressed in rad/ps.
constexpr double cm_to_rad_ps = 2.0 * 3.14159265358979323846 * 0.0299792458;

struct Superoperator {
  int dim = 0;
  Eigen::MatrixXcd matrix;

  Superoperator() = default;
  Superoperator(int d, Eigen::MatrixXcd m);

  HilbertOperator apply(const HilbertOperator& rho) const;
  Superoperator operator+(const Superoperator& other) const;
  Superoperator operator*(cplx s) const;
  Superoperator& operator+=(const Superoperator& other);
};

struct LindbladChannel {
  HilbertOperator jump;
  double rate = 0.0;
};

bool is_hermitian(const HilbertOperator& op, double tol = 1e-12);

CVector vectorize(const HilbertOperator& op);
HilbertOperator devectorize(const CVector& v);

// X -> A X and X -> X B
Superoperator left_multiply(const HilbertOperator& a);
Superoperator right_multiply(const HilbertOperator& b);

// rho -> 2 c rho c^+ - c^+ c rho - rho c^+ c, unscaled
Superoperator dissipator(const HilbertOperator& c);
// rho -> -i [H, rho]
Superoperator commutator_superop(const HilbertOperator& h);
// -i[H, .] + sum rate/2 * dissipator(jump)
Superoperator lindbladian(const HilbertOperator& h, const std::vector<LindbladChannel>& channels);

// Largest entry of vec(I)^T L, i.e. how far L is from preserving the trace.
double trace_defect(const Superoperator& L);
bool is_trace_preserving(const Superoperator& L, double tol = 1e-12);

// Sparse counterparts used for large joint spaces.
SparseOperator sparse_lindbladian(const SparseOperator& h, const std::vector<std::pair<SparseOperator, double>>& channels);
double trace_defect(const SparseOperator& L, int dim);

struct SteadyStateInfo {
  int kernel_dimension = 0;
  double residual = 0.0;
};

HilbertOperator steady_state(const Superoperator& L, SteadyStateInfo* info = nullptr);

// Solves L x = 0 with the normalization row w . x = 1 replacing the row `pivot_row`.
CVector sparse_stationary(const SparseOperator& L, const CVector& normalization, int pivot_row = 0);

// Solves (L - z) x = b.
CVector shifted_solve(const Superoperator& L, cplx z, const CVector& b);

// Reusable Hessenberg reduction of L for many shifted solves at O(n^2) each.
class ShiftedResolvent {
public:
  explicit ShiftedResolvent(const Superoperator& L);
  CVector solve(cplx z, const CVector& b) const;
  const Superoperator& liouvillian() const { return L_; }

private:
  CVector hessenberg_solve(cplx z, const CVector& b) const;

  Superoperator L_;
  Eigen::MatrixXcd q_;
  Eigen::MatrixXcd h_;
};

// Action of exp(L t).
HilbertOperator propagate(const Superoperator& L, const HilbertOperator& rho0, double t);
// Heisenberg picture: returns A(t) with Tr[A(t) X] = Tr[A exp(L t)(X)].
HilbertOperator heisenberg_propagate(const Superoperator& L, const HilbertOperator& a, double t);

// Advances x' = G x through successive intervals. exp(G h) is cached per distinct
// interval length and long intervals are split into chunks of at most max_step.
// Not safe for concurrent use of one instance.
class Propagator {
public:
  Propagator(Eigen::MatrixXcd generator, double max_step);
  CVector advance(const CVector& x, double dt);
  double max_step() const { return max_step_; }

private:
  const Eigen::MatrixXcd& step_map(double h);

  Eigen::MatrixXcd generator_;
  double max_step_;
  std::map<long long, Eigen::MatrixXcd> cache_;
};

Eigen::MatrixXcd matrix_exponential(const Eigen::MatrixXcd& a);

// exp(t A) v by a scaled, truncated Taylor series with sparse products only.
CVector expm_multiply(const SparseOperator& a, const CVector& v, double t);

// Smallest set of coordinates containing `seed` that is closed under the sparsity of L
// (if x is supported on the set, so is L x).
std::vector<int> reachable_support(const SparseOperator& L, const std::vector<int>& seed);
Eigen::MatrixXcd restrict_dense(const SparseOperator& L, const std::vector<int>& support);
SparseOperator restrict_sparse(const SparseOperator& L, const std::vector<int>& support);

}  // namespace specsense
