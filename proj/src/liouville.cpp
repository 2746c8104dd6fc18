#include "specsense/liouville.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <deque>
#include <unordered_map>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace specsense {

namespace {

void require_square(const HilbertOperator& op, const char* what) {
  if (op.rows() != op.cols() || op.rows() == 0)
    throw error("dimension_mismatch", std::string(what) + ": operator must be square and non-empty");
}

Eigen::MatrixXcd identity(Eigen::Index d) { return Eigen::MatrixXcd::Identity(d, d); }

}  // namespace

Superoperator::Superoperator(int d, Eigen::MatrixXcd m) : dim(d), matrix(std::move(m)) {
  if (matrix.rows() != static_cast<Eigen::Index>(d) * d || matrix.cols() != matrix.rows())
    throw error("dimension_mismatch", "superoperator matrix must be d^2 x d^2");
}

HilbertOperator Superoperator::apply(const HilbertOperator& rho) const {
  if (rho.rows() != dim || rho.cols() != dim)
    throw error("dimension_mismatch", "operator does not match superoperator dimension");
  return devectorize(matrix * vectorize(rho));
}

Superoperator Superoperator::operator+(const Superoperator& other) const {
  Superoperator out = *this;
  out += other;
  return out;
}

Superoperator& Superoperator::operator+=(const Superoperator& other) {
  if (other.dim != dim) throw error("dimension_mismatch", "superoperators of different dimension");
  matrix += other.matrix;
  return *this;
}

Superoperator Superoperator::operator*(cplx s) const { return Superoperator(dim, matrix * s); }

bool is_hermitian(const HilbertOperator& op, double tol) {
  if (op.rows() != op.cols()) return false;
  return (op - op.adjoint()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, op.cwiseAbs().maxCoeff());
}

CVector vectorize(const HilbertOperator& op) {
  return Eigen::Map<const CVector>(op.data(), op.size());
}

HilbertOperator devectorize(const CVector& v) {
  const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
  if (d * d != v.size()) throw error("dimension_mismatch", "vector length is not a perfect square");
  return Eigen::Map<const HilbertOperator>(v.data(), d, d);
}

Superoperator left_multiply(const HilbertOperator& a) {
  require_square(a, "left_multiply");
  const int d = static_cast<int>(a.rows());
  return Superoperator(d, Eigen::kroneckerProduct(identity(d), a).eval());
}

Superoperator right_multiply(const HilbertOperator& b) {
  require_square(b, "right_multiply");
  const int d = static_cast<int>(b.rows());
  return Superoperator(d, Eigen::kroneckerProduct(b.transpose(), identity(d)).eval());
}

Superoperator dissipator(const HilbertOperator& c) {
  require_square(c, "dissipator");
  const int d = static_cast<int>(c.rows());
  const Eigen::MatrixXcd cdc = c.adjoint() * c;
  Eigen::MatrixXcd m = 2.0 * Eigen::kroneckerProduct(c.conjugate(), c).eval();
  m -= Eigen::kroneckerProduct(identity(d), cdc);
  m -= Eigen::kroneckerProduct(cdc.transpose(), identity(d));
  return Superoperator(d, std::move(m));
}

Superoperator commutator_superop(const HilbertOperator& h) {
  require_square(h, "commutator_superop");
  const int d = static_cast<int>(h.rows());
  Eigen::MatrixXcd m = Eigen::kroneckerProduct(identity(d), h).eval();
  m -= Eigen::kroneckerProduct(h.transpose(), identity(d));
  return Superoperator(d, m * cplx(0.0, -1.0));
}

Superoperator lindbladian(const HilbertOperator& h, const std::vector<LindbladChannel>& channels) {
  Superoperator L = commutator_superop(h);
  for (const auto& ch : channels) {
    if (ch.rate < 0.0) throw error("invalid_rate", "channel rate must be non-negative");
    if (ch.jump.rows() != h.rows() || ch.jump.cols() != h.cols())
      throw error("dimension_mismatch", "jump operator does not match the Hamiltonian dimension");
    if (ch.rate == 0.0) continue;
    L.matrix += (0.5 * ch.rate) * dissipator(ch.jump).matrix;
  }
  return L;
}

double trace_defect(const Superoperator& L) {
  const Eigen::RowVectorXcd row = vectorize(identity(L.dim)).transpose() * L.matrix;
  return row.size() ? row.cwiseAbs().maxCoeff() : 0.0;
}

bool is_trace_preserving(const Superoperator& L, double tol) {
  return trace_defect(L) <= tol * std::max(1.0, L.matrix.cwiseAbs().maxCoeff());
}

SparseOperator sparse_lindbladian(const SparseOperator& h,
                                  const std::vector<std::pair<SparseOperator, double>>& channels) {
  const Eigen::Index d = h.rows();
  SparseOperator id(d, d);
  id.setIdentity();
  SparseOperator L = cplx(0.0, -1.0) * (SparseOperator(Eigen::kroneckerProduct(id, h)) -
                                        SparseOperator(Eigen::kroneckerProduct(SparseOperator(h.transpose()), id)));
  for (const auto& [c, rate] : channels) {
    if (rate < 0.0) throw error("invalid_rate", "channel rate must be non-negative");
    if (c.rows() != d || c.cols() != d)
      throw error("dimension_mismatch", "jump operator does not match the Hamiltonian dimension");
    if (rate == 0.0) continue;
    const SparseOperator cdc = SparseOperator(c.adjoint()) * c;
    SparseOperator term = 2.0 * SparseOperator(Eigen::kroneckerProduct(SparseOperator(c.conjugate()), c));
    term -= SparseOperator(Eigen::kroneckerProduct(id, cdc));
    term -= SparseOperator(Eigen::kroneckerProduct(SparseOperator(cdc.transpose()), id));
    L += (0.5 * rate) * term;
  }
  L.prune(cplx(0.0, 0.0), 0.0);
  L.makeCompressed();
  return L;
}

double trace_defect(const SparseOperator& L, int dim) {
  double worst = 0.0;
  for (int j = 0; j < L.outerSize(); ++j) {
    cplx acc = 0.0;
    for (SparseOperator::InnerIterator it(L, j); it; ++it)
      if (it.row() % (dim + 1) == 0) acc += it.value();
    worst = std::max(worst, std::abs(acc));
  }
  return worst;
}

HilbertOperator steady_state(const Superoperator& L, SteadyStateInfo* info) {
  const Eigen::Index n = L.matrix.rows();
  const double scale = L.matrix.cwiseAbs().colwise().sum().maxCoeff();

  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(L.matrix, false);
  if (es.info() != Eigen::Success) throw error("eigensolver_failed", "eigenvalue computation did not converge");
  const int kernel = static_cast<int>((es.eigenvalues().array().abs() <= 1e-8 * scale).count());
  if (kernel != 1)
    throw error("degenerate_steady_state", "Liouvillian kernel has dimension " + std::to_string(kernel));

  // Row 0 corresponds to the (0,0) diagonal element and lies in the span of the others.
  Eigen::MatrixXcd a = L.matrix;
  a.row(0) = vectorize(identity(L.dim)).transpose();
  CVector rhs = CVector::Zero(n);
  rhs(0) = 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
  CVector x = lu.solve(rhs);
  x += lu.solve(rhs - a * x);

  HilbertOperator rho = devectorize(x);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  rho /= rho.trace();
  const double residual = (L.matrix * vectorize(rho)).norm();
  if (info) {
    info->kernel_dimension = kernel;
    info->residual = residual;
  }
  if (residual > 1e-10 * scale)
    throw error("steady_state_residual", "steady-state residual " + std::to_string(residual) + " too large");
  return rho;
}

CVector sparse_stationary(const SparseOperator& L, const CVector& normalization, int pivot_row) {
  const Eigen::Index n = L.rows();
  std::vector<Eigen::Triplet<cplx>> trips;
  trips.reserve(static_cast<size_t>(L.nonZeros() + n));
  for (int j = 0; j < L.outerSize(); ++j)
    for (SparseOperator::InnerIterator it(L, j); it; ++it)
      if (it.row() != pivot_row) trips.emplace_back(static_cast<int>(it.row()), j, it.value());
  for (Eigen::Index j = 0; j < n; ++j)
    if (normalization(j) != cplx(0.0)) trips.emplace_back(pivot_row, static_cast<int>(j), normalization(j));
  SparseOperator a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();

  Eigen::SparseLU<SparseOperator, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw error("sparse_factorization_failed", "sparse LU failed: " + lu.lastErrorMessage());
  CVector rhs = CVector::Zero(n);
  rhs(pivot_row) = 1.0;
  CVector x = lu.solve(rhs);
  x += lu.solve(rhs - a * x);
  return x;
}

CVector shifted_solve(const Superoperator& L, cplx z, const CVector& b) {
  const Eigen::Index n = L.matrix.rows();
  if (b.size() != n) throw error("dimension_mismatch", "right-hand side length does not match superoperator");
  Eigen::MatrixXcd a = L.matrix;
  a.diagonal().array() -= z;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
  const double rcond = lu.rcond();
  auto shift_text = [&] { return "(" + std::to_string(z.real()) + "," + std::to_string(z.imag()) + ")"; };
  const double pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(rcond > 1e-14) || !(pivot > 0.0))
    throw error("singular_shift", "shifted matrix is singular for z = " + shift_text());
  CVector x = lu.solve(b);
  x += lu.solve(b - a * x);
  const double bn = b.norm();
  if (!x.allFinite() || !((a * x - b).norm() <= 1e-10 * bn))
    throw error("singular_shift", "shifted solve did not reach tolerance for z = " + shift_text());
  return x;
}

ShiftedResolvent::ShiftedResolvent(const Superoperator& L) : L_(L) {
  Eigen::HessenbergDecomposition<Eigen::MatrixXcd> hd(L.matrix);
  q_ = hd.matrixQ();
  h_ = hd.matrixH();
}

CVector ShiftedResolvent::hessenberg_solve(cplx z, const CVector& b) const {
  const Eigen::Index n = h_.rows();
  Eigen::MatrixXcd a = h_;
  a.diagonal().array() -= z;
  CVector y = q_.adjoint() * b;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    if (std::abs(a(k + 1, k)) > std::abs(a(k, k))) {
      for (Eigen::Index c = k; c < n; ++c) std::swap(a(k, c), a(k + 1, c));
      std::swap(y(k), y(k + 1));
    }
    if (a(k + 1, k) == cplx(0.0)) continue;
    const cplx m = a(k + 1, k) / a(k, k);
    for (Eigen::Index c = k; c < n; ++c) a(k + 1, c) -= m * a(k, c);
    y(k + 1) -= m * y(k);
  }
  y = a.triangularView<Eigen::Upper>().solve(y);
  return q_ * y;
}

CVector ShiftedResolvent::solve(cplx z, const CVector& b) const {
  const double bn = b.norm();
  if (bn == 0.0) return CVector::Zero(b.size());
  CVector x = hessenberg_solve(z, b);
  auto residual = [&](const CVector& v) -> CVector { return b - (L_.matrix * v - z * v); };
  CVector r = residual(x);
  x += hessenberg_solve(z, r);
  r = residual(x);
  if (x.allFinite() && r.norm() <= 1e-10 * bn) return x;
  return shifted_solve(L_, z, b);
}

Eigen::MatrixXcd matrix_exponential(const Eigen::MatrixXcd& a) { return a.exp(); }

HilbertOperator propagate(const Superoperator& L, const HilbertOperator& rho0, double t) {
  if (t < 0.0) throw error("negative_time", "propagation time must be non-negative");
  if (t == 0.0) return rho0;
  return devectorize(matrix_exponential(L.matrix * t) * vectorize(rho0));
}

HilbertOperator heisenberg_propagate(const Superoperator& L, const HilbertOperator& a, double t) {
  if (t < 0.0) throw error("negative_time", "propagation time must be non-negative");
  if (t == 0.0) return a;
  const CVector v = matrix_exponential(L.matrix.transpose() * t) * vectorize(a.transpose());
  return devectorize(v).transpose();
}

Propagator::Propagator(Eigen::MatrixXcd generator, double max_step)
    : generator_(std::move(generator)), max_step_(max_step) {
  if (!(max_step > 0.0)) throw error("invalid_step", "propagation step must be positive");
}

const Eigen::MatrixXcd& Propagator::step_map(double h) {
  const auto key = std::llround(h * 1e12);
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, matrix_exponential(generator_ * h)).first;
  return it->second;
}

CVector Propagator::advance(const CVector& x, double dt) {
  if (dt < 0.0) throw error("negative_time", "propagation time must be non-negative");
  CVector y = x;
  if (dt == 0.0) return y;
  const auto chunks = static_cast<long long>(std::ceil(dt / max_step_ * (1.0 - 1e-12)));
  const double h = dt / static_cast<double>(chunks);
  const Eigen::MatrixXcd& map = step_map(h);
  for (long long k = 0; k < chunks; ++k) y = map * y;
  return y;
}

std::vector<int> reachable_support(const SparseOperator& L, const std::vector<int>& seed) {
  std::vector<char> seen(static_cast<size_t>(L.cols()), 0);
  std::deque<int> queue;
  for (int s : seed)
    if (!seen[s]) {
      seen[s] = 1;
      queue.push_back(s);
    }
  while (!queue.empty()) {
    const int j = queue.front();
    queue.pop_front();
    for (SparseOperator::InnerIterator it(L, j); it; ++it) {
      const auto i = static_cast<int>(it.row());
      if (!seen[i]) {
        seen[i] = 1;
        queue.push_back(i);
      }
    }
  }
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(seen.size()); ++i)
    if (seen[i]) out.push_back(i);
  return out;
}

Eigen::MatrixXcd restrict_dense(const SparseOperator& L, const std::vector<int>& support) {
  std::unordered_map<int, int> pos;
  for (int k = 0; k < static_cast<int>(support.size()); ++k) pos[support[k]] = k;
  const auto m = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(m, m);
  for (int k = 0; k < m; ++k)
    for (SparseOperator::InnerIterator it(L, support[k]); it; ++it) {
      auto found = pos.find(static_cast<int>(it.row()));
      if (found != pos.end()) out(found->second, k) = it.value();
    }
  return out;
}

}  // namespace specsense

namespace specsense {

CVector expm_multiply(const SparseOperator& a, const CVector& v, double t) {
  if (a.rows() != a.cols() || a.cols() != v.size()) throw error("dimension_mismatch", "generator and vector sizes differ");
  if (t == 0.0 || v.size() == 0) return v;
  const Eigen::Index n = a.rows();
  const cplx mu = a.diagonal().sum() / double(n);
  SparseOperator shifted = a;
  for (Eigen::Index k = 0; k < n; ++k) shifted.coeffRef(k, k) -= mu;
  shifted.makeCompressed();
  double norm1 = 0.0;
  for (Eigen::Index c = 0; c < shifted.outerSize(); ++c) {
    double col = 0.0;
    for (SparseOperator::InnerIterator it(shifted, c); it; ++it) col += std::abs(it.value());
    norm1 = std::max(norm1, col);
  }
  const int steps = std::max(1, static_cast<int>(std::ceil(norm1 * std::abs(t) / 4.0)));
  const double h = t / steps;
  const double tol = std::ldexp(1.0, -53);
  const cplx phase = std::exp(mu * h);

  CVector x = v, term(n);
  for (int s = 0; s < steps; ++s) {
    term = x;
    double previous = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 60; ++k) {
      term = (shifted * term) * (h / k);
      x += term;
      const double size = term.cwiseAbs().sum();
      if (size + previous <= tol * x.cwiseAbs().sum()) break;
      previous = size;
    }
    x *= phase;
  }
  if (!x.allFinite()) throw error("propagation_failed", "non-finite state during propagation");
  return x;
}

SparseOperator restrict_sparse(const SparseOperator& L, const std::vector<int>& support) {
  std::unordered_map<int, int> pos;
  for (int k = 0; k < static_cast<int>(support.size()); ++k) pos[support[k]] = k;
  std::vector<Eigen::Triplet<cplx>> trips;
  for (int k = 0; k < static_cast<int>(support.size()); ++k)
    for (SparseOperator::InnerIterator it(L, support[k]); it; ++it) {
      auto found = pos.find(static_cast<int>(it.row()));
      if (found != pos.end()) trips.emplace_back(found->second, k, it.value());
    }
  const auto m = static_cast<Eigen::Index>(support.size());
  SparseOperator out(m, m);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

}  // namespace specsense
