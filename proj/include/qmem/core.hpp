#pragma once

// Quantum states and state-level metrics.

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qmem/errors.hpp"
#include "qmem/linalg.hpp"
#include "qmem/random.hpp"

namespace qmem {

/// Unit-norm state vector.
class PureState {
 public:
  explicit PureState(Vector amplitudes) : amps_(std::move(amplitudes)) {
    if (amps_.size() < 1) throw DimensionError("PureState: empty amplitude vector");
    if (std::abs(amps_.norm() - 1.0) > 1e-12) throw InvalidStateError("PureState: amplitudes are not unit norm");
  }

  int dim() const noexcept { return static_cast<int>(amps_.size()); }
  const Vector& amplitudes() const noexcept { return amps_; }
  Matrix projector() const { return amps_ * amps_.adjoint(); }

 private:
  Vector amps_;
};

/// Hermitian, unit-trace, positive semidefinite matrix.
///
/// Construction validates all three invariants at `tol` (default 1e-10).
class DensityMatrix {
 public:
  explicit DensityMatrix(Matrix data, double tol = kZeroTol) : data_(std::move(data)) {
    if (data_.rows() != data_.cols() || data_.rows() == 0) throw DimensionError("DensityMatrix: matrix is not square");
    if (max_abs(data_ - data_.adjoint()) > tol) throw InvalidStateError("DensityMatrix: matrix is not Hermitian");
    if (std::abs(data_.trace() - cplx(1.0)) > tol) throw InvalidStateError("DensityMatrix: trace is not one");
    const double lmin = eigvalsh(data_).minCoeff();
    if (lmin < -tol) throw InvalidStateError("DensityMatrix: negative eigenvalue " + std::to_string(lmin));
  }

  explicit DensityMatrix(const PureState& psi) : data_(psi.projector()) {}

  static DensityMatrix maximally_mixed(int dim) {
    return DensityMatrix(Matrix::Identity(dim, dim) / static_cast<double>(dim));
  }

  /// |k><k| in the computational basis.
  static DensityMatrix basis(int dim, int k) {
    Matrix m = Matrix::Zero(dim, dim);
    m(k, k) = 1.0;
    return DensityMatrix(std::move(m));
  }

  /// Closest state in the sense of eigenvalue clipping: Hermitian part, negative
  /// eigenvalues set to zero, renormalized.
  static DensityMatrix project(const Matrix& m) {
    HermitianEig e = eigh(m);
    for (Eigen::Index i = 0; i < e.values.size(); ++i) e.values(i) = std::max(e.values(i), 0.0);
    const double tr = e.values.sum();
    if (tr <= 0.0) throw InvalidStateError("DensityMatrix::project: no positive spectrum");
    Matrix out = spectral_apply(e, [tr](double x) { return x / tr; });
    return DensityMatrix(hermitian_part(out));
  }

  int dim() const noexcept { return static_cast<int>(data_.rows()); }
  const Matrix& matrix() const noexcept { return data_; }

 private:
  Matrix data_;
};

inline DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  return DensityMatrix(kron(a.matrix(), b.matrix()));
}

/// Half the trace norm of the difference of two Hermitian matrices.
inline double trace_distance(const Matrix& rho, const Matrix& sigma) {
  if (rho.rows() != sigma.rows() || rho.cols() != sigma.cols())
    throw DimensionError("trace_distance: dimension mismatch");
  return 0.5 * trace_norm_hermitian(rho - sigma);
}

inline double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  return trace_distance(rho.matrix(), sigma.matrix());
}

/// tr[rho (log2 rho - log2 sigma)].
///
/// Eigenvalues of sigma at or below `support_tol` count as outside its support;
/// weight of rho there beyond the same tolerance raises SupportError.
inline double relative_entropy(const DensityMatrix& rho, const DensityMatrix& sigma, double support_tol = kZeroTol) {
  if (rho.dim() != sigma.dim()) throw DimensionError("relative_entropy: dimension mismatch");
  const HermitianEig er = eigh(rho.matrix());
  const HermitianEig es = eigh(sigma.matrix());

  double s = 0.0;
  for (Eigen::Index i = 0; i < er.values.size(); ++i) {
    const double l = er.values(i);
    if (l > 0.0) s += l * std::log2(l);
  }
  // overlap(i, j) = |<r_i|s_j>|^2
  const Eigen::MatrixXd overlap = (er.vectors.adjoint() * es.vectors).cwiseAbs2();
  for (Eigen::Index j = 0; j < es.values.size(); ++j) {
    double weight = 0.0;
    for (Eigen::Index i = 0; i < er.values.size(); ++i) weight += std::max(er.values(i), 0.0) * overlap(i, j);
    const double mu = es.values(j);
    if (mu <= support_tol) {
      if (weight > kZeroTol)
        throw SupportError("relative_entropy: support of rho not contained in support of sigma", mu, weight);
      continue;
    }
    s -= weight * std::log2(mu);
  }
  return std::max(s, 0.0);
}

/// Haar-random pure state: normalized complex Gaussian vector.
inline PureState haar_random_pure(int dim, Rng& rng) {
  if (dim < 2) throw DimensionError("haar_random_pure: dim must be at least 2");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) {
    const double re = normal(rng);
    const double im = normal(rng);
    v(i) = cplx(re, im);
  }
  v.normalize();
  return PureState(std::move(v));
}

/// Haar-random unitary via QR of a Ginibre matrix with the phase fix.
inline Matrix haar_random_unitary(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(dim, dim);
  for (int j = 0; j < dim; ++j)
    for (int i = 0; i < dim; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(i, j) = cplx(re, im);
    }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int k = 0; k < dim; ++k) {
    const cplx d = r(k, k);
    q.col(k) *= std::abs(d) > 0 ? d / std::abs(d) : cplx(1.0);
  }
  return q;
}

/// Random mixed state G G† / tr(G G†) for a dim x rank Ginibre G.
inline DensityMatrix random_density(int dim, Rng& rng, int rank = -1) {
  if (rank <= 0) rank = dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(dim, rank);
  for (int j = 0; j < rank; ++j)
    for (int i = 0; i < dim; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(i, j) = cplx(re, im);
    }
  Matrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  return DensityMatrix(hermitian_part(rho));
}

/// Reduced state on the subsystems in `keep`. Tracing over nothing returns the input.
inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const int> dims, std::span<const int> keep) {
  Matrix reduced = partial_trace(rho.matrix(), dims, keep);
  return DensityMatrix(hermitian_part(reduced));
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::initializer_list<int> dims,
                                   std::initializer_list<int> keep) {
  return partial_trace(rho, std::span<const int>(dims.begin(), dims.size()),
                       std::span<const int>(keep.begin(), keep.size()));
}

}  // namespace qmem
