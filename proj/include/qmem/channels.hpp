#pragma once

// Quantum channels as superoperators on column-stacked density matrices.
//
// A unitary conjugation rho -> U rho U† has superoperator conj(U) kron U.
// Choi matrices order the input factor first:
//   J = sum_ij |i><j| kron Phi(|i><j|),
// stored with trace d ("trace-d" normalization) unless stated otherwise.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qmem/core.hpp"

namespace qmem {

enum class GateName { H, S, T, X, Y, Z, CX };

inline constexpr GateName kAllGateNames[] = {GateName::H, GateName::S, GateName::T, GateName::X,
                                             GateName::Y, GateName::Z, GateName::CX};

inline std::string_view gate_name_string(GateName g) {
  switch (g) {
    case GateName::H: return "H";
    case GateName::S: return "S";
    case GateName::T: return "T";
    case GateName::X: return "X";
    case GateName::Y: return "Y";
    case GateName::Z: return "Z";
    case GateName::CX: return "CX";
  }
  return "?";
}

/// A gate of the analysis set with the qubits it acts on. CX lists control then target.
class GateLabel {
 public:
  GateLabel(GateName name, std::vector<int> qubits) : name_(name), qubits_(std::move(qubits)) {
    const std::size_t want = name_ == GateName::CX ? 2 : 1;
    if (qubits_.size() != want) throw LabelError("GateLabel: wrong number of qubit indices");
    for (int q : qubits_)
      if (q < 0) throw LabelError("GateLabel: negative qubit index");
    if (name_ == GateName::CX && qubits_[0] == qubits_[1]) throw LabelError("GateLabel: CX needs distinct qubits");
  }

  explicit GateLabel(GateName name) : GateLabel(name, name == GateName::CX ? std::vector<int>{0, 1} : std::vector<int>{0}) {}

  /// Parses "X", "X@1", "CX", "CX@1.0" (control.target).
  static GateLabel parse(std::string_view text) {
    const auto at = text.find('@');
    const std::string_view head = text.substr(0, at);
    std::optional<GateName> name;
    for (GateName g : kAllGateNames)
      if (gate_name_string(g) == head) name = g;
    if (!name) throw LabelError("unknown gate '" + std::string(text) + "'");
    if (at == std::string_view::npos) return GateLabel(*name);
    std::vector<int> qubits;
    std::string_view rest = text.substr(at + 1);
    while (!rest.empty()) {
      const auto dot = rest.find('.');
      const std::string part(rest.substr(0, dot));
      if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
        throw LabelError("bad qubit index in gate '" + std::string(text) + "'");
      qubits.push_back(std::stoi(part));
      if (dot == std::string_view::npos) break;
      rest = rest.substr(dot + 1);
    }
    return GateLabel(*name, std::move(qubits));
  }

  GateName name() const noexcept { return name_; }
  const std::vector<int>& qubits() const noexcept { return qubits_; }
  int min_qubits() const { return *std::max_element(qubits_.begin(), qubits_.end()) + 1; }

  /// Canonical text form; default placements print as the bare name.
  std::string str() const {
    std::string out(gate_name_string(name_));
    const bool is_default = name_ == GateName::CX ? (qubits_[0] == 0 && qubits_[1] == 1) : qubits_[0] == 0;
    if (!is_default) {
      out += '@';
      for (std::size_t k = 0; k < qubits_.size(); ++k) {
        if (k) out += '.';
        out += std::to_string(qubits_[k]);
      }
    }
    return out;
  }

  friend bool operator==(const GateLabel&, const GateLabel&) = default;
  friend auto operator<=>(const GateLabel& a, const GateLabel& b) { return a.str() <=> b.str(); }

 private:
  GateName name_;
  std::vector<int> qubits_;
};

using GateSequence = std::vector<GateLabel>;

/// Gates in application order, comma separated; a token "G^n" repeats G n times.
inline GateSequence parse_sequence(std::string_view text) {
  GateSequence seq;
  while (!text.empty()) {
    const auto comma = text.find(',');
    std::string_view tok = text.substr(0, comma);
    int repeat = 1;
    if (const auto caret = tok.find('^'); caret != std::string_view::npos) {
      const std::string n(tok.substr(caret + 1));
      if (n.empty() || n.find_first_not_of("0123456789") != std::string::npos)
        throw LabelError("bad repeat count in '" + std::string(tok) + "'");
      repeat = std::stoi(n);
      tok = tok.substr(0, caret);
    }
    const GateLabel g = GateLabel::parse(tok);
    for (int k = 0; k < repeat; ++k) seq.push_back(g);
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return seq;
}

inline std::string sequence_string(const GateSequence& seq) {
  std::string out;
  for (std::size_t k = 0; k < seq.size(); ++k) {
    if (k) out += ',';
    out += seq[k].str();
  }
  return out;
}

inline int min_qubits(const GateSequence& seq) {
  int n = 1;
  for (const auto& g : seq) n = std::max(n, g.min_qubits());
  return n;
}

namespace gates {

inline Matrix single(GateName g) {
  using std::numbers::pi;
  const double r = 1.0 / std::sqrt(2.0);
  Matrix u(2, 2);
  switch (g) {
    case GateName::H: u << r, r, r, -r; break;
    case GateName::S: u << 1, 0, 0, cplx(0, 1); break;
    case GateName::T: u << 1, 0, 0, std::exp(cplx(0, pi / 4)); break;
    case GateName::X: u << 0, 1, 1, 0; break;
    case GateName::Y: u << 0, cplx(0, -1), cplx(0, 1), 0; break;
    case GateName::Z: u << 1, 0, 0, -1; break;
    case GateName::CX: throw LabelError("CX is not a single-qubit gate");
  }
  return u;
}

/// Single-qubit operator `op` on qubit q of an n-qubit register.
inline Matrix embed(const Matrix& op, int q, int n_qubits) {
  Matrix out = Matrix::Identity(1, 1);
  for (int k = 0; k < n_qubits; ++k) out = kron(out, k == q ? op : Matrix::Identity(2, 2));
  return out;
}

inline Matrix controlled_x(int control, int target, int n_qubits) {
  const int d = qubit_dim(n_qubits);
  Matrix u = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    const int cbit = (i >> (n_qubits - 1 - control)) & 1;
    const int j = cbit ? i ^ (1 << (n_qubits - 1 - target)) : i;
    u(j, i) = 1.0;
  }
  return u;
}

}  // namespace gates

/// Matrix of `gate` on an n-qubit register.
inline Matrix gate_unitary(const GateLabel& gate, int n_qubits) {
  if (gate.min_qubits() > n_qubits) throw LabelError("gate " + gate.str() + " does not fit the register");
  if (gate.name() == GateName::CX) return gates::controlled_x(gate.qubits()[0], gate.qubits()[1], n_qubits);
  return gates::embed(gates::single(gate.name()), gate.qubits()[0], n_qubits);
}

inline Matrix sequence_unitary(const GateSequence& seq, int n_qubits) {
  const int d = qubit_dim(n_qubits);
  Matrix u = Matrix::Identity(d, d);
  for (const auto& g : seq) u = gate_unitary(g, n_qubits) * u;
  return u;
}

enum class ChoiNormalization { trace_d, trace_1 };

class QuantumChannel {
 public:
  QuantumChannel(Matrix superop, std::string provenance = {}) : superop_(std::move(superop)), provenance_(std::move(provenance)) {
    const auto n = superop_.rows();
    const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(n))));
    if (superop_.cols() != n || d * d != n || d == 0) throw DimensionError("QuantumChannel: superoperator must be d^2 x d^2");
    dim_ = static_cast<int>(d);
  }

  int dim() const noexcept { return dim_; }
  const Matrix& superop() const noexcept { return superop_; }
  const std::string& provenance() const noexcept { return provenance_; }
  QuantumChannel with_provenance(std::string p) const { return QuantumChannel(superop_, std::move(p)); }

 private:
  int dim_ = 0;
  Matrix superop_;
  std::string provenance_;
};

struct ChoiMatrix {
  int dim = 0;
  Matrix data;
  ChoiNormalization normalization = ChoiNormalization::trace_d;
};

inline QuantumChannel identity_channel(int dim) {
  return QuantumChannel(Matrix::Identity(dim * dim, dim * dim), "");
}

inline QuantumChannel unitary_channel(const Matrix& u, std::string provenance = {}) {
  return QuantumChannel(kron(u.conjugate(), u), std::move(provenance));
}

inline QuantumChannel kraus_channel(std::span<const Matrix> kraus, std::string provenance = {}) {
  if (kraus.empty()) throw DimensionError("kraus_channel: no operators");
  const auto d = kraus.front().rows();
  Matrix s = Matrix::Zero(d * d, d * d);
  for (const auto& k : kraus) {
    if (k.rows() != d || k.cols() != d) throw DimensionError("kraus_channel: inconsistent operator sizes");
    s += kron(k.conjugate(), k);
  }
  return QuantumChannel(std::move(s), std::move(provenance));
}

/// rho -> U rho U† for the standard matrix of `gate`.
inline QuantumChannel ideal_channel(const GateLabel& gate, int n_qubits = 0) {
  if (n_qubits <= 0) n_qubits = gate.min_qubits();
  return unitary_channel(gate_unitary(gate, n_qubits), gate.str());
}

inline QuantumChannel ideal_channel(const GateSequence& seq, int n_qubits = 0) {
  if (n_qubits <= 0) n_qubits = min_qubits(seq);
  return unitary_channel(sequence_unitary(seq, n_qubits), sequence_string(seq));
}

inline std::string join_provenance(const std::string& first, const std::string& second) {
  if (first.empty()) return second;
  if (second.empty()) return first;
  return first + "," + second;
}

/// second ∘ first: apply `first`, then `second`.
inline QuantumChannel compose(const QuantumChannel& second, const QuantumChannel& first) {
  if (second.dim() != first.dim()) throw DimensionError("compose: dimension mismatch");
  return QuantumChannel(second.superop() * first.superop(), join_provenance(first.provenance(), second.provenance()));
}

struct Inversion {
  QuantumChannel inverse;
  double sigma_min;
  double sigma_max;
  double condition_number() const { return sigma_min > 0 ? sigma_max / sigma_min : std::numeric_limits<double>::infinity(); }
};

inline constexpr double kDefaultCondThreshold = 1e-8;

/// Superoperator inverse with its singular-value diagnostics.
///
/// Throws SingularChannelError when sigma_min/sigma_max < cond_threshold unless
/// `pseudo_inverse` is set, in which case singular values below the threshold
/// are dropped.
inline Inversion invert_with_diagnostics(const QuantumChannel& chan, double cond_threshold = kDefaultCondThreshold,
                                         bool pseudo_inverse = false) {
  Eigen::JacobiSVD<Matrix> svd(chan.superop(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const RealVector& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  const std::string prov = chan.provenance().empty() ? std::string{} : "inv(" + chan.provenance() + ")";
  if (smax <= 0.0 || smin / smax < cond_threshold) {
    if (!pseudo_inverse)
      throw SingularChannelError("invert: channel superoperator is singular to threshold", smin, smax);
    RealVector inv = RealVector::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (smax > 0.0 && sv(i) / smax >= cond_threshold) inv(i) = 1.0 / sv(i);
    Matrix pinv = svd.matrixV() * inv.cast<cplx>().asDiagonal() * svd.matrixU().adjoint();
    return {QuantumChannel(std::move(pinv), prov), smin, smax};
  }
  return {QuantumChannel(chan.superop().inverse(), prov), smin, smax};
}

inline QuantumChannel invert(const QuantumChannel& chan, double cond_threshold = kDefaultCondThreshold,
                             bool pseudo_inverse = false) {
  return invert_with_diagnostics(chan, cond_threshold, pseudo_inverse).inverse;
}

/// Choi matrix in trace-d normalization.
inline ChoiMatrix choi_from_superop(const QuantumChannel& chan) {
  const int d = chan.dim();
  const Matrix& s = chan.superop();
  Matrix j(d * d, d * d);
  // S[(a + d b), (i + d j)] = <a|Phi(|i><j|)|b> = J[(i d + a), (j d + b)]
  for (int b = 0; b < d; ++b)
    for (int a = 0; a < d; ++a)
      for (int jj = 0; jj < d; ++jj)
        for (int i = 0; i < d; ++i) j(i * d + a, jj * d + b) = s(a + d * b, i + d * jj);
  return {d, std::move(j), ChoiNormalization::trace_d};
}

inline QuantumChannel superop_from_choi(const ChoiMatrix& choi, std::string provenance = {}) {
  const int d = choi.dim;
  if (choi.data.rows() != d * d || choi.data.cols() != d * d) throw DimensionError("superop_from_choi: Choi must be d^2 x d^2");
  const double scale = choi.normalization == ChoiNormalization::trace_1 ? static_cast<double>(d) : 1.0;
  Matrix s(d * d, d * d);
  for (int b = 0; b < d; ++b)
    for (int a = 0; a < d; ++a)
      for (int jj = 0; jj < d; ++jj)
        for (int i = 0; i < d; ++i) s(a + d * b, i + d * jj) = scale * choi.data(i * d + a, jj * d + b);
  return QuantumChannel(std::move(s), std::move(provenance));
}

inline ChoiMatrix normalized(const ChoiMatrix& c, ChoiNormalization to) {
  if (c.normalization == to) return c;
  const double d = c.dim;
  ChoiMatrix out = c;
  out.data = to == ChoiNormalization::trace_1 ? Matrix(c.data / d) : Matrix(c.data * d);
  out.normalization = to;
  return out;
}

/// Output of a channel together with a positivity flag. Maps that are not CP may
/// produce non-PSD outputs; those are returned as-is.
struct ChannelOutput {
  Matrix data;
  bool psd;
};

inline Matrix apply_raw(const QuantumChannel& chan, const Matrix& rho) {
  if (rho.rows() != chan.dim() || rho.cols() != chan.dim()) throw DimensionError("apply: dimension mismatch");
  return unvec(chan.superop() * vec(rho), chan.dim());
}

inline ChannelOutput apply(const QuantumChannel& chan, const DensityMatrix& rho) {
  Matrix out = apply_raw(chan, rho.matrix());
  const bool psd = eigvalsh(out).minCoeff() >= -kZeroTol;
  return {std::move(out), psd};
}

/// Structure diagnostics of a channel's Choi matrix.
struct ChannelStructure {
  double min_choi_eigenvalue;  // trace-d normalization
  double tp_deviation;         // max |tr_out J - I|
  double hermiticity_deviation;
  bool is_cp(double tol = 1e-8) const { return min_choi_eigenvalue >= -tol; }
  bool is_tp(double tol = 1e-8) const { return tp_deviation <= tol; }
};

inline ChannelStructure channel_structure(const QuantumChannel& chan) {
  const ChoiMatrix c = choi_from_superop(chan);
  const int d = c.dim;
  const int dims[] = {d, d};
  const int keep_in[] = {0};
  const Matrix marginal = partial_trace(c.data, dims, keep_in);
  return {eigvalsh(c.data).minCoeff(), max_abs(marginal - Matrix::Identity(d, d)), max_abs(c.data - c.data.adjoint())};
}

/// Random CPTP channel from `kraus_rank` Ginibre operators, normalized by
/// K_i -> K_i S^{-1/2} with S = sum K_i† K_i.
inline QuantumChannel random_channel(int dim, Rng& rng, int kraus_rank = -1) {
  if (kraus_rank <= 0) kraus_rank = dim * dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Matrix> ks(kraus_rank, Matrix(dim, dim));
  for (auto& k : ks)
    for (int j = 0; j < dim; ++j)
      for (int i = 0; i < dim; ++i) {
        const double re = normal(rng);
        const double im = normal(rng);
        k(i, j) = cplx(re, im);
      }
  Matrix s = Matrix::Zero(dim, dim);
  for (const auto& k : ks) s += k.adjoint() * k;
  const Matrix s_inv_sqrt = spectral_apply(eigh(s), [](double x) { return 1.0 / std::sqrt(x); });
  for (auto& k : ks) k = k * s_inv_sqrt;
  return kraus_channel(ks, "random");
}

/// Random unitary channel with Haar-distributed unitary.
inline QuantumChannel random_unitary_channel(int dim, Rng& rng) {
  return unitary_channel(haar_random_unitary(dim, rng), "random-unitary");
}

/// rho -> tr(rho) I/d.
inline QuantumChannel completely_depolarizing(int dim) {
  Matrix s = Matrix::Zero(dim * dim, dim * dim);
  const Vector id = vec(Matrix::Identity(dim, dim));
  s = id * id.adjoint() / static_cast<double>(dim);
  return QuantumChannel(std::move(s), "depolarize");
}

/// rho -> rho^T (positive but not completely positive).
inline QuantumChannel transpose_map(int dim) {
  Matrix s = Matrix::Zero(dim * dim, dim * dim);
  for (int j = 0; j < dim; ++j)
    for (int i = 0; i < dim; ++i) s(j + dim * i, i + dim * j) = 1.0;
  return QuantumChannel(std::move(s), "transpose");
}

}  // namespace qmem
