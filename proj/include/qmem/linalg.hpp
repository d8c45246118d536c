#pragma once

// Dense complex linear algebra shared by every module.
//
// Conventions:
//  * Subsystem 0 is the leftmost tensor factor (most significant digit of a
//    basis index).
//  * vec() stacks columns: vec(A)[i + d*j] = A(i, j). With this choice
//    vec(A X B) = (B^T kron A) vec(X).

#include <algorithm>
#include <complex>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qmem/errors.hpp"

namespace qmem {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// Eigenvalues with magnitude below this are treated as zero.
inline constexpr double kZeroTol = 1e-10;

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

inline Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

struct HermitianEig {
  RealVector values;  // ascending
  Matrix vectors;     // columns are eigenvectors
};

/// Spectral decomposition of the Hermitian part of `m`.
inline HermitianEig eigh(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(m));
  return {solver.eigenvalues(), solver.eigenvectors()};
}

inline RealVector eigvalsh(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(m), Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

/// V f(Λ) V† for a real scalar function f.
template <class F>
Matrix spectral_apply(const HermitianEig& e, F&& f) {
  Vector fl(e.values.size());
  for (Eigen::Index i = 0; i < e.values.size(); ++i) fl(i) = cplx(f(e.values(i)));
  return e.vectors * fl.asDiagonal() * e.vectors.adjoint();
}

/// exp(-i t H) for Hermitian H.
inline Matrix expm_i(const Matrix& h, double t) {
  const HermitianEig e = eigh(h);
  Vector ph(e.values.size());
  for (Eigen::Index i = 0; i < e.values.size(); ++i) ph(i) = std::exp(cplx(0.0, -t * e.values(i)));
  return e.vectors * ph.asDiagonal() * e.vectors.adjoint();
}

/// Sum of absolute eigenvalues of the Hermitian part.
inline double trace_norm_hermitian(const Matrix& m) { return eigvalsh(m).cwiseAbs().sum(); }

inline Vector vec(const Matrix& m) {
  Vector v(m.size());
  for (Eigen::Index j = 0; j < m.cols(); ++j) v.segment(j * m.rows(), m.rows()) = m.col(j);
  return v;
}

inline Matrix unvec(const Vector& v, Eigen::Index d) {
  if (v.size() != d * d) throw DimensionError("unvec: vector length is not d^2");
  Matrix m(d, d);
  for (Eigen::Index j = 0; j < d; ++j) m.col(j) = v.segment(j * d, d);
  return m;
}

inline int product(std::span<const int> dims) {
  return std::accumulate(dims.begin(), dims.end(), 1, std::multiplies<>());
}

namespace detail {

// Digits of a basis index in the mixed radix given by dims (digit 0 most significant).
inline std::vector<int> digits(int index, std::span<const int> dims) {
  std::vector<int> out(dims.size());
  for (int k = static_cast<int>(dims.size()) - 1; k >= 0; --k) {
    out[k] = index % dims[k];
    index /= dims[k];
  }
  return out;
}

}  // namespace detail

/// Partial trace keeping the listed subsystems (in their original order).
inline Matrix partial_trace(const Matrix& m, std::span<const int> dims, std::span<const int> keep) {
  const int total = product(dims);
  if (m.rows() != total || m.cols() != total)
    throw DimensionError("partial_trace: product of subsystem dimensions does not match matrix");
  std::vector<bool> kept(dims.size(), false);
  for (int k : keep) {
    if (k < 0 || k >= static_cast<int>(dims.size()) || kept[k])
      throw DimensionError("partial_trace: invalid keep index");
    kept[k] = true;
  }
  int kept_dim = 1;
  for (std::size_t k = 0; k < dims.size(); ++k)
    if (kept[k]) kept_dim *= dims[k];

  std::vector<int> kept_index(total), traced_index(total);
  for (int i = 0; i < total; ++i) {
    const auto dg = detail::digits(i, dims);
    int a = 0, b = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      if (kept[k])
        a = a * dims[k] + dg[k];
      else
        b = b * dims[k] + dg[k];
    }
    kept_index[i] = a;
    traced_index[i] = b;
  }
  Matrix out = Matrix::Zero(kept_dim, kept_dim);
  for (int j = 0; j < total; ++j)
    for (int i = 0; i < total; ++i)
      if (traced_index[i] == traced_index[j]) out(kept_index[i], kept_index[j]) += m(i, j);
  return out;
}

/// Reorders tensor factors: factor k of the result is factor perm[k] of the input.
inline Matrix permute_subsystems(const Matrix& m, std::span<const int> dims, std::span<const int> perm) {
  const int total = product(dims);
  if (m.rows() != total || perm.size() != dims.size())
    throw DimensionError("permute_subsystems: inconsistent dimensions");
  std::vector<int> new_dims(dims.size());
  for (std::size_t k = 0; k < perm.size(); ++k) new_dims[k] = dims[perm[k]];
  std::vector<int> map(total);
  for (int i = 0; i < total; ++i) {
    const auto dg = detail::digits(i, dims);
    int idx = 0;
    for (std::size_t k = 0; k < perm.size(); ++k) idx = idx * new_dims[k] + dg[perm[k]];
    map[i] = idx;
  }
  Matrix out(total, total);
  for (int j = 0; j < total; ++j)
    for (int i = 0; i < total; ++i) out(map[i], map[j]) = m(i, j);
  return out;
}

inline int qubit_dim(int n_qubits) { return 1 << n_qubits; }

}  // namespace qmem
