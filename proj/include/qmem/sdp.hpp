#pragma once

// Completely bounded trace norm of a Hermiticity-preserving map, from its Choi
// matrix J (input factor first, trace-d normalization):
//
//   ||Phi||_dmd = max <J, W>   s.t.  -(rho kron I) <= W <= rho kron I,  rho a density matrix.
//
// With X0 = rho kron I - W and X1 = rho kron I + W this becomes the standard form
//
//   min <C, X>  s.t.  P(X0 + X1) = 0,  tr(X0 + X1) = 2d,  X0, X1 >= 0,
//
// where C = (J/2, -J/2) and P projects out the subspace {sigma kron I}. The
// solver runs the alternating-direction augmented Lagrangian method on the
// dual (y, S). Every `check_every` iterations the iterate is rounded to an
// exactly feasible primal point (a density matrix rho, whose value is the
// trace norm of (sqrt(rho) kron I) J (sqrt(rho) kron I)) and an exactly
// feasible dual point (y with the largest admissible t). The difference of the
// two is a certified duality gap.

#include <cmath>
#include <limits>

#include "qmem/linalg.hpp"

namespace qmem {

struct SdpOptions {
  /// Certified gap target on the half-normalized value.
  double gap_tolerance = 1e-6;
  int max_iterations = 200000;
  int check_every = 20;
  double initial_penalty = 1.0;
};

struct DiamondCertificate {
  double value = 0.0;  // half-normalized; the certified primal (lower) value
  double lower = 0.0;
  double upper = 0.0;
  double gap = 0.0;  // upper - lower, half-normalized
  int iterations = 0;
  Matrix input_state;   // rho on the ancilla factor
  Vector input_vector;  // optimizing pure input on ancilla kron system
};

namespace detail {

// tr over the second (output) factor of an (d*d) x (d*d) matrix.
inline Matrix trace_second(const Matrix& m, int d) {
  Matrix out = Matrix::Zero(d, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i)
      for (int a = 0; a < d; ++a) out(i, j) += m(i * d + a, j * d + a);
  return out;
}

inline Matrix lift_first(const Matrix& sigma, int d) { return kron(sigma, Matrix::Identity(d, d)); }

// Orthogonal complement of {sigma kron I}.
inline Matrix project_complement(const Matrix& m, int d) {
  return m - lift_first(trace_second(m, d), d) / static_cast<double>(d);
}

struct PrimalRounding {
  double value;
  Matrix rho;
  Vector input;
};

inline PrimalRounding round_primal(const Matrix& j, const Matrix& sum_x, int d) {
  HermitianEig e = eigh(trace_second(sum_x, d));
  for (Eigen::Index i = 0; i < e.values.size(); ++i) e.values(i) = std::max(e.values(i), 0.0);
  const double tr = e.values.sum();
  if (tr <= 0.0) e.values.setConstant(1.0 / d);
  else e.values /= tr;
  const Matrix rho = spectral_apply(e, [](double x) { return x; });
  const Matrix sqrt_rho = spectral_apply(e, [](double x) { return std::sqrt(x); });
  const Matrix lift = lift_first(sqrt_rho, d);
  const Matrix k = lift * j * lift;
  Vector omega = Vector::Zero(d * d);
  for (int i = 0; i < d; ++i) omega(i * d + i) = 1.0;
  return {trace_norm_hermitian(k), rho, lift * omega};
}

inline double round_dual(const Matrix& j, const Matrix& y, int d) {
  const Matrix yp = project_complement(hermitian_part(y), d);
  const double t = std::min(eigvalsh(0.5 * j - yp).minCoeff(), eigvalsh(-0.5 * j - yp).minCoeff());
  return -2.0 * d * t;
}

}  // namespace detail

/// Half the completely bounded trace norm of the map with Choi matrix `choi`.
///
/// Throws SolverError if the certified gap does not reach the tolerance.
inline DiamondCertificate diamond_norm_sdp(const Matrix& choi, int d, const SdpOptions& opt = {}) {
  const int n = d * d;
  if (choi.rows() != n || choi.cols() != n) throw DimensionError("diamond_norm_sdp: Choi matrix must be d^2 x d^2");
  const Matrix j = hermitian_part(choi);
  const Matrix c0 = 0.5 * j;
  const Matrix c1 = -0.5 * j;
  const Matrix id = Matrix::Identity(n, n);

  DiamondCertificate cert;
  if (max_abs(j) == 0.0) {
    cert.input_state = Matrix::Identity(d, d) / static_cast<double>(d);
    cert.input_vector = Vector::Zero(n);
    for (int i = 0; i < d; ++i) cert.input_vector(i * d + i) = 1.0 / std::sqrt(static_cast<double>(d));
    return cert;
  }

  double mu = opt.initial_penalty;
  Matrix x0 = id / static_cast<double>(d);
  Matrix x1 = x0;
  Matrix s0 = Matrix::Zero(n, n), s1 = Matrix::Zero(n, n);
  Matrix y = Matrix::Zero(n, n);
  double t = 0.0;

  double best_lower = -std::numeric_limits<double>::infinity();
  double best_upper = std::numeric_limits<double>::infinity();
  detail::PrimalRounding best_primal{0.0, Matrix(), Vector()};
  double pinf_acc = 0.0, dinf_acc = 0.0;

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    const Matrix sum_x = x0 + x1;
    const Matrix sum_s = s0 + s1;  // C0 + C1 = 0
    const Matrix r = mu * detail::project_complement(sum_x, d) + detail::project_complement(sum_s, d);
    const double rt = mu * (sum_x.trace().real() - 2.0 * d) + sum_s.trace().real();
    y = -0.5 * r;
    t = -rt / (2.0 * n);

    const Matrix base = -y - t * id;
    const Matrix v0 = hermitian_part(c0 + base - mu * x0);
    const Matrix v1 = hermitian_part(c1 + base - mu * x1);
    const HermitianEig e0 = eigh(v0), e1 = eigh(v1);
    const Matrix nx0 = spectral_apply(e0, [mu](double l) { return l < 0.0 ? -l / mu : 0.0; });
    const Matrix nx1 = spectral_apply(e1, [mu](double l) { return l < 0.0 ? -l / mu : 0.0; });
    s0 = spectral_apply(e0, [](double l) { return l > 0.0 ? l : 0.0; });
    s1 = spectral_apply(e1, [](double l) { return l > 0.0 ? l : 0.0; });

    const Matrix nsum = nx0 + nx1;
    const double pinf = std::sqrt(detail::project_complement(nsum, d).squaredNorm() +
                                  std::pow(nsum.trace().real() - 2.0 * d, 2));
    const double dinf = mu * std::sqrt((nx0 - x0).squaredNorm() + (nx1 - x1).squaredNorm());
    x0 = nx0;
    x1 = nx1;
    pinf_acc += pinf;
    dinf_acc += dinf;

    if ((it + 1) % opt.check_every == 0) {
      auto primal = detail::round_primal(j, x0 + x1, d);
      const double upper = detail::round_dual(j, y, d);
      if (primal.value > best_lower) {
        best_lower = primal.value;
        best_primal = std::move(primal);
      }
      best_upper = std::min(best_upper, upper);
      if (0.5 * (best_upper - best_lower) <= opt.gap_tolerance) {
        ++it;
        break;
      }
      // Balance primal and dual residuals.
      if (pinf_acc > 5.0 * dinf_acc) mu *= 1.5;
      else if (dinf_acc > 5.0 * pinf_acc) mu /= 1.5;
      pinf_acc = dinf_acc = 0.0;
    }
  }

  cert.lower = 0.5 * best_lower;
  cert.upper = 0.5 * best_upper;
  cert.gap = cert.upper - cert.lower;
  cert.value = cert.lower;
  cert.iterations = it;
  cert.input_state = best_primal.rho;
  cert.input_vector = best_primal.input;
  if (!(cert.gap <= opt.gap_tolerance))
    throw SolverError("diamond_norm_sdp: certified gap " + std::to_string(cert.gap) + " above tolerance", cert.gap, it);
  return cert;
}

}  // namespace qmem
