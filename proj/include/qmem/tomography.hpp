#pragma once

// Process tomography: preparation frames and their duals, Pauli-basis
// measurement settings, maximum-likelihood state reconstruction, and linear
// reconstruction of the process from the reconstructed output states.
//
// Label grammar (version 1):
//   preparation  := prep-symbol ("*" prep-symbol)*   prep-symbol ∈ {Z+, Z-, X+, Y+}
//   setting      := meas-symbol ("*" meas-symbol)*   meas-symbol ∈ {X, Y, Z}
// Symbol k refers to qubit k. Outcome bitstrings list qubit 0 first; bit 0
// marks the +1 eigenvalue of the measured Pauli.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "qmem/channels.hpp"

namespace qmem {

inline constexpr int kLabelGrammarVersion = 1;

inline const std::vector<std::string>& prep_symbols() {
  static const std::vector<std::string> s{"Z+", "Z-", "X+", "Y+"};
  return s;
}

inline const std::vector<std::string>& meas_symbols() {
  static const std::vector<std::string> s{"X", "Y", "Z"};
  return s;
}

inline std::vector<std::string> split_label(const std::string& label, int n_qubits) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto star = label.find('*', start);
    parts.push_back(label.substr(start, star - start));
    if (star == std::string::npos) break;
    start = star + 1;
  }
  if (static_cast<int>(parts.size()) != n_qubits)
    throw LabelError("label '" + label + "' does not have " + std::to_string(n_qubits) + " qubit symbols");
  return parts;
}

namespace detail {

inline Vector prep_ket(const std::string& sym) {
  const double r = 1.0 / std::sqrt(2.0);
  Vector v(2);
  if (sym == "Z+") v << 1, 0;
  else if (sym == "Z-") v << 0, 1;
  else if (sym == "X+") v << r, r;
  else if (sym == "Y+") v << r, cplx(0, r);
  else throw LabelError("unknown preparation symbol '" + sym + "'");
  return v;
}

// Gates that take |0> to the preparation symbol's state.
inline std::vector<GateName> prep_gate_names(const std::string& sym) {
  if (sym == "Z+") return {};
  if (sym == "Z-") return {GateName::X};
  if (sym == "X+") return {GateName::H};
  if (sym == "Y+") return {GateName::H, GateName::S};
  throw LabelError("unknown preparation symbol '" + sym + "'");
}

// Gates rotating the measured Pauli's eigenbasis onto the computational basis.
// The Y rotation is H S† with S† realized as Z followed by S.
inline std::vector<GateName> meas_gate_names(const std::string& sym) {
  if (sym == "X") return {GateName::H};
  if (sym == "Y") return {GateName::Z, GateName::S, GateName::H};
  if (sym == "Z") return {};
  throw LabelError("unknown measurement setting '" + sym + "'");
}

inline Matrix single_rotation(const std::string& sym) {
  Matrix u = Matrix::Identity(2, 2);
  for (GateName g : meas_gate_names(sym)) u = gates::single(g) * u;
  return u;
}

}  // namespace detail

/// Basis change applied before a computational-basis measurement for `meas_label`.
inline Matrix measurement_rotation(const std::string& meas_label, int n_qubits) {
  Matrix u = Matrix::Identity(1, 1);
  for (const auto& sym : split_label(meas_label, n_qubits)) u = kron(u, detail::single_rotation(sym));
  return u;
}

inline std::string bitstring(int index, int n_qubits) {
  std::string s(n_qubits, '0');
  for (int q = 0; q < n_qubits; ++q)
    if ((index >> (n_qubits - 1 - q)) & 1) s[q] = '1';
  return s;
}

inline int bitstring_index(const std::string& bits) {
  int idx = 0;
  for (char c : bits) {
    if (c != '0' && c != '1') throw LabelError("bad outcome bitstring '" + bits + "'");
    idx = 2 * idx + (c == '1');
  }
  return idx;
}

class TomographyFrame {
 public:
  int n_qubits() const noexcept { return n_qubits_; }
  int dim() const noexcept { return qubit_dim(n_qubits_); }
  const std::vector<std::string>& prep_labels() const noexcept { return prep_labels_; }
  const std::vector<DensityMatrix>& preparations() const noexcept { return preparations_; }
  const std::vector<Matrix>& duals() const noexcept { return duals_; }
  const std::vector<std::string>& meas_settings() const noexcept { return meas_settings_; }
  double gram_condition() const noexcept { return gram_condition_; }

  std::size_t prep_index(const std::string& label) const {
    for (std::size_t i = 0; i < prep_labels_.size(); ++i)
      if (prep_labels_[i] == label) return i;
    throw LabelError("preparation '" + label + "' is not in the frame");
  }

  friend TomographyFrame build_frame(int n_qubits);

 private:
  int n_qubits_ = 0;
  std::vector<std::string> prep_labels_;
  std::vector<DensityMatrix> preparations_;
  std::vector<Matrix> duals_;
  std::vector<std::string> meas_settings_;
  double gram_condition_ = 0.0;
};

namespace detail {

inline std::vector<std::vector<std::string>> symbol_products(const std::vector<std::string>& symbols, int n) {
  std::vector<std::vector<std::string>> out{{}};
  for (int q = 0; q < n; ++q) {
    std::vector<std::vector<std::string>> next;
    for (const auto& prefix : out)
      for (const auto& s : symbols) {
        auto p = prefix;
        p.push_back(s);
        next.push_back(std::move(p));
      }
    out = std::move(next);
  }
  return out;
}

inline std::string join_symbols(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (k) out += '*';
    out += parts[k];
  }
  return out;
}

}  // namespace detail

/// Product preparation frame {|0>,|1>,|+>,|+i>}^N, its duals, and the 3^N Pauli settings.
inline TomographyFrame build_frame(int n_qubits) {
  if (n_qubits != 1 && n_qubits != 2) throw DimensionError("build_frame: only 1 or 2 qubits are supported");
  TomographyFrame f;
  f.n_qubits_ = n_qubits;
  const int d = qubit_dim(n_qubits);

  for (const auto& parts : detail::symbol_products(prep_symbols(), n_qubits)) {
    Vector ket = Vector::Ones(1);
    for (const auto& s : parts) ket = kron(ket, detail::prep_ket(s));
    f.prep_labels_.push_back(detail::join_symbols(parts));
    f.preparations_.emplace_back(PureState(ket));
  }
  for (const auto& parts : detail::symbol_products(meas_symbols(), n_qubits))
    f.meas_settings_.push_back(detail::join_symbols(parts));

  // Columns of `frame` are vec(rho_i); the duals satisfy D† frame = I.
  Matrix frame(d * d, d * d);
  for (int i = 0; i < d * d; ++i) frame.col(i) = vec(f.preparations_[i].matrix());
  const Matrix gram = frame.adjoint() * frame;
  Eigen::JacobiSVD<Matrix> svd(gram);
  const auto& sv = svd.singularValues();
  f.gram_condition_ = sv(0) / sv(sv.size() - 1);
  const Matrix dual_cols = frame.inverse().adjoint();
  for (int i = 0; i < d * d; ++i) f.duals_.push_back(unvec(dual_cols.col(i), d));
  return f;
}

/// Outcome probabilities of `state` for a Pauli setting, indexed by bitstring value.
inline std::vector<double> expected_distribution(const Matrix& state, const std::string& meas_label) {
  const int d = static_cast<int>(state.rows());
  int n = 0;
  while ((1 << n) < d) ++n;
  if ((1 << n) != d || state.cols() != d) throw DimensionError("expected_distribution: state is not an n-qubit matrix");
  const Matrix r = measurement_rotation(meas_label, n);
  const Matrix rotated = r * state * r.adjoint();
  std::vector<double> p(d);
  for (int k = 0; k < d; ++k) {
    double v = rotated(k, k).real();
    if (v < 0.0 && v > -1e-12) v = 0.0;
    p[k] = v;
  }
  return p;
}

inline std::vector<double> expected_distribution(const DensityMatrix& state, const std::string& meas_label) {
  return expected_distribution(state.matrix(), meas_label);
}

/// One measured configuration. In exact mode (`shots` empty) counts hold probabilities.
struct CountRecord {
  std::string prep;
  std::string meas;
  std::map<std::string, double> counts;
  std::optional<std::uint64_t> shots;
  std::optional<std::uint64_t> seed;

  bool exact() const noexcept { return !shots.has_value(); }
  double total() const {
    double t = 0.0;
    for (const auto& [k, v] : counts) t += v;
    return t;
  }
};

inline void validate_record(const CountRecord& r, int n_qubits) {
  split_label(r.prep, n_qubits);
  split_label(r.meas, n_qubits);
  for (const auto& [bits, v] : r.counts) {
    if (static_cast<int>(bits.size()) != n_qubits) throw LabelError("outcome '" + bits + "' has wrong length");
    bitstring_index(bits);
    if (!(v >= 0.0)) throw InvalidStateError("negative count for outcome '" + bits + "'");
  }
  if (r.shots) {
    if (*r.shots == 0) throw InvalidStateError("record " + r.prep + "/" + r.meas + " has zero shots");
    if (std::abs(r.total() - static_cast<double>(*r.shots)) > 0.5)
      throw InvalidStateError("record " + r.prep + "/" + r.meas + ": counts do not sum to shots");
  } else if (std::abs(r.total() - 1.0) > 1e-9) {
    throw InvalidStateError("record " + r.prep + "/" + r.meas + ": probabilities do not sum to one");
  }
}

struct CircuitDescriptor {
  std::string prep_label;
  std::string meas_label;
  GateSequence prep_ops;  // applied to |0...0>
  GateSequence sequence;  // the process under test
  GateSequence meas_ops;  // basis rotation before Z measurement
};

/// The 4^N x 3^N preparation/measurement circuits around `sequence`.
inline std::vector<CircuitDescriptor> enumerate_circuits(const GateSequence& sequence, const TomographyFrame& frame) {
  const int n = frame.n_qubits();
  if (min_qubits(sequence) > n) throw LabelError("enumerate_circuits: sequence does not fit the frame");
  std::vector<CircuitDescriptor> out;
  out.reserve(frame.prep_labels().size() * frame.meas_settings().size());
  for (const auto& prep : frame.prep_labels()) {
    GateSequence prep_ops;
    const auto psyms = split_label(prep, n);
    for (int q = 0; q < n; ++q)
      for (GateName g : detail::prep_gate_names(psyms[q])) prep_ops.emplace_back(g, std::vector<int>{q});
    for (const auto& meas : frame.meas_settings()) {
      GateSequence meas_ops;
      const auto msyms = split_label(meas, n);
      for (int q = 0; q < n; ++q)
        for (GateName g : detail::meas_gate_names(msyms[q])) meas_ops.emplace_back(g, std::vector<int>{q});
      out.push_back({prep, meas, prep_ops, sequence, meas_ops});
    }
  }
  return out;
}

/// Exact-mode records for a known channel, one per frame configuration.
inline std::vector<CountRecord> exact_records(const QuantumChannel& chan, const TomographyFrame& frame) {
  if (chan.dim() != frame.dim()) throw DimensionError("exact_records: channel does not match frame");
  std::vector<CountRecord> out;
  for (std::size_t i = 0; i < frame.prep_labels().size(); ++i) {
    const Matrix output = apply_raw(chan, frame.preparations()[i].matrix());
    for (const auto& meas : frame.meas_settings()) {
      CountRecord r{frame.prep_labels()[i], meas, {}, std::nullopt, std::nullopt};
      const auto p = expected_distribution(output, meas);
      for (std::size_t k = 0; k < p.size(); ++k) r.counts[bitstring(static_cast<int>(k), frame.n_qubits())] = p[k];
      out.push_back(std::move(r));
    }
  }
  return out;
}

struct MleOptions {
  int max_iterations = 10000;
  /// Stop when max |(R - I) rho| falls below this (first-order optimality residual)
  double tolerance = 1e-11;
  /// or when the per-count log-likelihood changes by less than this in one step.
  double loglik_tolerance = 1e-11;
};

struct MleResult {
  DensityMatrix state;
  double loglik;
  int iterations;
  double residual;
};

namespace detail {

struct MleTerm {
  Vector r;  // projector is r r†
  double weight;
  double freq;  // weight / total of its setting
};

inline double mle_loglik(const std::vector<MleTerm>& terms, const Matrix& rho, std::vector<double>* probs = nullptr) {
  double l = 0.0;
  if (probs) probs->resize(terms.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const double p = std::max((terms[k].r.adjoint() * rho * terms[k].r)(0, 0).real(), 1e-300);
    if (probs) (*probs)[k] = p;
    if (terms[k].weight > 0.0) l += terms[k].weight * std::log(p);
  }
  return l;
}

// Least-squares linear inversion of the per-setting frequencies. Returned only
// when the estimate is positive semidefinite and reproduces every frequency to
// 1e-12, in which case it maximizes the likelihood exactly.
inline std::optional<Matrix> consistent_linear_inversion(const std::vector<MleTerm>& terms, int d) {
  const auto m = static_cast<Eigen::Index>(terms.size());
  Matrix a(m, d * d);
  Vector f(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    a.row(k) = vec(terms[k].r * terms[k].r.adjoint()).adjoint();
    f(k) = terms[k].freq;
  }
  const Vector x = a.colPivHouseholderQr().solve(f);
  HermitianEig e = eigh(unvec(x, d));
  if (e.values.minCoeff() < -1e-12) return std::nullopt;
  for (Eigen::Index i = 0; i < e.values.size(); ++i) e.values(i) = std::max(e.values(i), 0.0);
  const double tr = e.values.sum();
  if (tr <= 0.0) return std::nullopt;
  e.values /= tr;
  Matrix rho = hermitian_part(spectral_apply(e, [](double v) { return v; }));
  for (Eigen::Index k = 0; k < m; ++k) {
    const double p = (terms[k].r.adjoint() * rho * terms[k].r)(0, 0).real();
    if (std::abs(p - terms[k].freq) > 1e-12) return std::nullopt;
  }
  return rho;
}

}  // namespace detail

/// Maximum-likelihood state from the records of one preparation.
///
/// If the linear-inversion estimate is a state reproducing every observed
/// frequency it is returned directly. Otherwise runs the diluted R rho R
/// iteration started at the maximally mixed state. Each step
/// tries the undiluted update and halves the dilution parameter until the
/// log-likelihood does not decrease.
inline MleResult mle_state(std::span<const CountRecord> records, const TomographyFrame& frame, const MleOptions& opt = {}) {
  const int n = frame.n_qubits();
  const int d = frame.dim();
  std::map<std::string, std::map<std::string, double>> by_setting;
  for (const auto& r : records) {
    validate_record(r, n);
    auto& slot = by_setting[r.meas];
    for (const auto& [bits, v] : r.counts) slot[bits] += v;
  }
  std::vector<std::string> missing;
  for (const auto& m : frame.meas_settings())
    if (!by_setting.count(m)) missing.push_back((records.empty() ? std::string("?") : records.front().prep) + "/" + m);
  if (!missing.empty()) throw IncompleteDataError("mle_state: missing measurement settings", missing);

  std::vector<detail::MleTerm> terms;
  double total = 0.0;
  for (const auto& [meas, counts] : by_setting) {
    const Matrix rot = measurement_rotation(meas, n);
    double setting_total = 0.0;
    for (const auto& [bits, v] : counts) setting_total += v;
    for (int k = 0; k < d; ++k) {
      const auto it = counts.find(bitstring(k, n));
      const double w = it == counts.end() ? 0.0 : it->second;
      terms.push_back({rot.row(k).adjoint(), w, setting_total > 0.0 ? w / setting_total : 0.0});
      total += w;
    }
  }
  if (!(total > 0.0)) throw InvalidStateError("mle_state: no counts");

  const Matrix id = Matrix::Identity(d, d);
  auto r_operator = [&](const std::vector<double>& p) {
    Matrix rop = Matrix::Zero(d, d);
    for (std::size_t k = 0; k < terms.size(); ++k)
      if (terms[k].weight > 0.0) rop += (terms[k].weight / (p[k] * total)) * (terms[k].r * terms[k].r.adjoint());
    return rop;
  };
  std::vector<double> probs;
  if (auto exact = detail::consistent_linear_inversion(terms, d)) {
    // A physical state reproducing every frequency is a global likelihood maximum.
    const double l = detail::mle_loglik(terms, *exact, &probs);
    const double res = max_abs((r_operator(probs) - id) * *exact);
    return {DensityMatrix(*exact), l, 0, res};
  }
  Matrix rho = id / static_cast<double>(d);
  double loglik = detail::mle_loglik(terms, rho, &probs);
  double residual = std::numeric_limits<double>::infinity();
  bool stalled = false;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    const Matrix rop = r_operator(probs);
    residual = max_abs((rop - id) * rho);
    if (residual <= opt.tolerance) break;

    double eps = std::numeric_limits<double>::infinity();
    Matrix next;
    double next_loglik = 0.0;
    std::vector<double> next_probs;
    for (int attempt = 0; attempt < 60; ++attempt) {
      const Matrix step = std::isinf(eps) ? rop : Matrix(id + eps * rop);
      next = step * rho * step.adjoint();
      next = hermitian_part(next / next.trace().real());
      next_loglik = detail::mle_loglik(terms, next, &next_probs);
      if (next_loglik >= loglik - 1e-14 * std::abs(loglik)) break;
      eps = std::isinf(eps) ? 1.0 : eps / 2.0;
    }
    rho = std::move(next);
    const double change = (next_loglik - loglik) / total;
    loglik = next_loglik;
    probs = std::move(next_probs);
    if (std::abs(change) < opt.loglik_tolerance) {
      ++it;
      residual = max_abs((r_operator(probs) - id) * rho);
      stalled = true;
      break;
    }
  }
  if (!stalled && residual > opt.tolerance)
    throw ConvergenceError("mle_state: no convergence after " + std::to_string(it) + " iterations", rho, it);
  return {DensityMatrix(rho), loglik, it, residual};
}

/// Superoperator sum_i vec(rho'_i) vec(D_i)† from one output state per preparation.
inline QuantumChannel process_tomography(const std::map<std::string, DensityMatrix>& outputs, const TomographyFrame& frame,
                                         std::string provenance = {}) {
  std::vector<std::string> missing;
  for (const auto& p : frame.prep_labels())
    if (!outputs.count(p)) missing.push_back(p);
  if (!missing.empty()) throw IncompleteDataError("process_tomography: missing preparations", missing);
  const int d = frame.dim();
  Matrix s = Matrix::Zero(d * d, d * d);
  for (std::size_t i = 0; i < frame.prep_labels().size(); ++i) {
    const DensityMatrix& out = outputs.at(frame.prep_labels()[i]);
    if (out.dim() != d) throw DimensionError("process_tomography: output state dimension mismatch");
    s += vec(out.matrix()) * vec(frame.duals()[i]).adjoint();
  }
  return QuantumChannel(std::move(s), std::move(provenance));
}

struct TomographyResult {
  std::map<std::string, DensityMatrix> states;
  QuantumChannel channel;
  std::map<std::string, double> loglik;
  std::map<std::string, int> iterations;
};

/// Full chain: group records by preparation, MLE each output state, then reconstruct the map.
inline TomographyResult reconstruct_channel(std::span<const CountRecord> records, const TomographyFrame& frame,
                                            const MleOptions& opt = {}, std::string provenance = {}) {
  std::map<std::string, std::vector<CountRecord>> by_prep;
  for (const auto& r : records) by_prep[r.prep].push_back(r);
  std::vector<std::string> missing;
  for (const auto& p : frame.prep_labels()) {
    const auto it = by_prep.find(p);
    std::set<std::string> have;
    if (it != by_prep.end())
      for (const auto& r : it->second) have.insert(r.meas);
    for (const auto& m : frame.meas_settings())
      if (!have.count(m)) missing.push_back(p + "/" + m);
  }
  if (!missing.empty()) throw IncompleteDataError("reconstruct_channel: missing configurations", missing);

  std::map<std::string, DensityMatrix> states;
  std::map<std::string, double> loglik;
  std::map<std::string, int> iterations;
  for (const auto& p : frame.prep_labels()) {
    MleResult m = mle_state(by_prep.at(p), frame, opt);
    loglik[p] = m.loglik;
    iterations[p] = m.iterations;
    states.emplace(p, std::move(m.state));
  }
  QuantumChannel chan = process_tomography(states, frame, std::move(provenance));
  return {std::move(states), std::move(chan), std::move(loglik), std::move(iterations)};
}

}  // namespace qmem
