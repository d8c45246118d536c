#pragma once

// System-environment simulator used as ground truth.
//
// Each gate g acting on qubits Q is the joint unitary
//
//   U~_g = (U_g kron I_E) exp(-i tau_g (g_c sum_{q in Q} Z_q kron Z_E + w I kron X_E))
//
// with coupling g_c, environment frequency w and per-gate duration tau_g. The
// environment either persists across gates or is reset to its initial state
// before every gate (the Markovian twin). Preparation and measurement errors are
// fixed small unitary kicks exp(-i eps H_label), H_label a random Hermitian
// drawn from the SPAM seed and the label.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qmem/channels.hpp"
#include "qmem/tomography.hpp"

namespace qmem {

enum class ResetPolicy { persistent, reset_each_gate };

inline std::string reset_policy_name(ResetPolicy p) {
  return p == ResetPolicy::persistent ? "persistent" : "reset_each_gate";
}

inline ResetPolicy parse_reset_policy(const std::string& s) {
  if (s == "persistent") return ResetPolicy::persistent;
  if (s == "reset_each_gate" || s == "reset") return ResetPolicy::reset_each_gate;
  throw LabelError("unknown reset policy '" + s + "'");
}

struct SpamSpec {
  double prep_strength = 0.0;
  double meas_strength = 0.0;
  std::uint64_t seed = 0;
};

inline std::map<GateName, double> default_durations() {
  return {{GateName::H, 1.0}, {GateName::S, 0.5}, {GateName::T, 0.25}, {GateName::X, 1.0},
          {GateName::Y, 1.0}, {GateName::Z, 0.75}, {GateName::CX, 2.0}};
}

/// Parameters of a system-environment model.
struct ModelSpec {
  int sys_qubits = 1;
  int env_dim = 2;
  double coupling = 0.0;
  double env_frequency = 0.0;
  std::map<GateName, double> durations = default_durations();
  ResetPolicy reset = ResetPolicy::persistent;
  SpamSpec spam{};
  std::uint64_t seed = 0;
};

namespace detail {

// Spin-like environment operators; Z and X for a qubit.
inline Matrix env_z(int d) {
  Matrix z = Matrix::Zero(d, d);
  for (int k = 0; k < d; ++k) z(k, k) = 1.0 - 2.0 * k / (d - 1);
  return z;
}

inline Matrix env_x(int d) {
  Matrix x = Matrix::Zero(d, d);
  for (int k = 0; k + 1 < d; ++k) x(k, k + 1) = x(k + 1, k) = 1.0;
  return x;
}

inline Matrix random_hermitian(int d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(d, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(i, j) = cplx(re, im);
    }
  Matrix h = hermitian_part(g);
  return h / h.norm();
}

}  // namespace detail

class SEModel {
 public:
  explicit SEModel(ModelSpec spec) : spec_(std::move(spec)) {
    if (spec_.sys_qubits < 1 || spec_.sys_qubits > 4) throw DimensionError("SEModel: sys_qubits must be in [1, 4]");
    if (spec_.env_dim < 2 || spec_.env_dim > 8) throw DimensionError("SEModel: env_dim must be in [2, 8]");
    if (!std::isfinite(spec_.coupling) || !std::isfinite(spec_.env_frequency))
      throw InvalidStateError("SEModel: non-finite coupling");
    if (spec_.spam.prep_strength < 0.0 || spec_.spam.meas_strength < 0.0)
      throw InvalidStateError("SEModel: SPAM strengths must be non-negative");
    for (GateName g : kAllGateNames)
      if (!spec_.durations.count(g) || spec_.durations.at(g) < 0.0)
        throw InvalidStateError("SEModel: missing or negative duration for " + std::string(gate_name_string(g)));
    const int e = spec_.env_dim;
    Vector plus = Vector::Constant(e, cplx(1.0 / std::sqrt(static_cast<double>(e))));
    env_initial_ = plus * plus.adjoint();
  }

  const ModelSpec& spec() const noexcept { return spec_; }
  int env_dim() const noexcept { return spec_.env_dim; }
  const Matrix& env_initial() const noexcept { return env_initial_; }
  ResetPolicy reset_policy() const noexcept { return spec_.reset; }

  /// Joint unitary of `gate` on an n-qubit system kron environment.
  Matrix joint_unitary(const GateLabel& gate, int n_qubits) const {
    const int e = spec_.env_dim;
    const Matrix u = kron(gate_unitary(gate, n_qubits), Matrix::Identity(e, e));
    const double tau = spec_.durations.at(gate.name());
    if ((spec_.coupling == 0.0 && spec_.env_frequency == 0.0) || tau == 0.0) return u;
    const int d = qubit_dim(n_qubits);
    Matrix zsum = Matrix::Zero(d, d);
    for (int q : gate.qubits()) zsum += gates::embed(gates::single(GateName::Z), q, n_qubits);
    const Matrix h = spec_.coupling * kron(zsum, detail::env_z(e)) +
                     spec_.env_frequency * kron(Matrix::Identity(d, d), detail::env_x(e));
    return u * expm_i(h, tau);
  }

  /// Preparation (`kind` = "prep") or measurement ("meas") kick for a label; identity when eps = 0.
  std::optional<Matrix> spam_kick(const std::string& kind, const std::string& label, int n_qubits) const {
    const double eps = kind == "prep" ? spec_.spam.prep_strength : spec_.spam.meas_strength;
    if (eps == 0.0) return std::nullopt;
    const Matrix h = detail::random_hermitian(qubit_dim(n_qubits), derive_seed(spec_.spam.seed, fnv1a(kind + ":" + label)));
    return expm_i(h, eps);
  }

 private:
  ModelSpec spec_;
  Matrix env_initial_;
};

namespace detail {

inline int register_qubits(const SEModel& model, const GateSequence& gates, int n_qubits) {
  return std::max({n_qubits, model.spec().sys_qubits, min_qubits(gates)});
}

// Linear in rho, so it also propagates non-Hermitian operator-basis elements.
inline Matrix evolve_raw(const SEModel& model, const GateSequence& gates, const Matrix& rho, int n_qubits) {
  const Matrix& env0 = model.env_initial();
  const int dims[] = {static_cast<int>(rho.rows()), model.env_dim()};
  const int keep_sys[] = {0};
  Matrix joint = kron(rho, env0);
  for (std::size_t k = 0; k < gates.size(); ++k) {
    if (k > 0 && model.reset_policy() == ResetPolicy::reset_each_gate)
      joint = kron(partial_trace(joint, dims, keep_sys), env0);
    const Matrix u = model.joint_unitary(gates[k], n_qubits);
    joint = u * joint * u.adjoint();
  }
  return partial_trace(joint, dims, keep_sys);
}

}  // namespace detail

/// System state after `gates`, environment starting fresh.
inline DensityMatrix run_sequence(const SEModel& model, const GateSequence& gates, const DensityMatrix& input) {
  int n = 0;
  while (qubit_dim(n) < input.dim()) ++n;
  if (qubit_dim(n) != input.dim()) throw DimensionError("run_sequence: input is not a qubit register");
  if (min_qubits(gates) > n) throw LabelError("run_sequence: gate outside the register");
  return DensityMatrix(hermitian_part(detail::evolve_raw(model, gates, input.matrix(), n)));
}

/// Exact superoperator of the system map induced by `gates`.
inline QuantumChannel extract_channel(const SEModel& model, const GateSequence& gates, int n_qubits = 0) {
  const int n = detail::register_qubits(model, gates, n_qubits);
  const int d = qubit_dim(n);
  Matrix s(d * d, d * d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) {
      Matrix e = Matrix::Zero(d, d);
      e(i, j) = 1.0;
      s.col(i + d * j) = vec(detail::evolve_raw(model, gates, e, n));
    }
  return QuantumChannel(std::move(s), sequence_string(gates));
}

/// Outcome distribution of one tomography circuit, SPAM kicks included.
inline std::vector<double> circuit_distribution(const SEModel& model, const CircuitDescriptor& circuit,
                                                const TomographyFrame& frame) {
  const int n = frame.n_qubits();
  Matrix rho = frame.preparations()[frame.prep_index(circuit.prep_label)].matrix();
  if (auto k = model.spam_kick("prep", circuit.prep_label, n)) rho = *k * rho * k->adjoint();
  rho = detail::evolve_raw(model, circuit.sequence, rho, n);
  if (auto k = model.spam_kick("meas", circuit.meas_label, n)) rho = *k * rho * k->adjoint();
  return expected_distribution(hermitian_part(rho), circuit.meas_label);
}

/// One record for `circuit`: probabilities when `shots` is empty, otherwise a
/// multinomial draw seeded by `seed` (stored in the record).
inline CountRecord sample_counts(const SEModel& model, const CircuitDescriptor& circuit, const TomographyFrame& frame,
                                 std::optional<std::uint64_t> shots, std::uint64_t seed) {
  const int n = frame.n_qubits();
  std::vector<double> p = circuit_distribution(model, circuit, frame);
  for (double& x : p) x = std::max(x, 0.0);
  CountRecord r;
  r.prep = circuit.prep_label;
  r.meas = circuit.meas_label;
  if (!shots) {
    double tot = 0.0;
    for (double x : p) tot += x;
    for (std::size_t k = 0; k < p.size(); ++k) r.counts[bitstring(static_cast<int>(k), n)] = p[k] / tot;
    return r;
  }
  if (*shots == 0) throw DimensionError("sample_counts: shots must be positive");
  r.shots = shots;
  r.seed = seed;
  Rng rng(seed);
  // Multinomial as a chain of conditional binomials.
  std::uint64_t left = *shots;
  double mass = 1.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::uint64_t c = left;
    if (k + 1 < p.size() && left > 0) {
      const double q = mass > 0.0 ? std::clamp(p[k] / mass, 0.0, 1.0) : 0.0;
      std::binomial_distribution<std::uint64_t> bin(left, q);
      c = bin(rng);
    }
    r.counts[bitstring(static_cast<int>(k), n)] = static_cast<double>(c);
    left -= c;
    mass -= p[k];
  }
  return r;
}

/// Records for every circuit of `gates`, one derived seed per circuit.
inline std::vector<CountRecord> simulate_records(const SEModel& model, const GateSequence& gates,
                                                 const TomographyFrame& frame, std::optional<std::uint64_t> shots,
                                                 std::uint64_t seed) {
  std::vector<CountRecord> out;
  const auto circuits = enumerate_circuits(gates, frame);
  out.reserve(circuits.size());
  for (std::size_t k = 0; k < circuits.size(); ++k)
    out.push_back(sample_counts(model, circuits[k], frame, shots, derive_seed(seed, k)));
  return out;
}

/// Two Bell pairs on (0,1) and (2,3); U on wire 1, swap 1<->2 by three CX gates,
/// V on wire 1. Only U and V couple to the environment. Returns the state
/// ordered (0, 2, 3, 1) = (in_U, out_U, in_V, out_V).
inline DensityMatrix cji_circuit(const SEModel& model, const GateLabel& u, const GateLabel& v) {
  if (u.name() == GateName::CX || v.name() == GateName::CX)
    throw LabelError("cji_circuit: U and V must be single-qubit gates");
  constexpr int n = 4;
  const int e = model.env_dim();
  const Matrix ie = Matrix::Identity(e, e);
  auto ideal = [&](const GateLabel& g) { return Matrix(kron(gate_unitary(g, n), ie)); };
  auto on_wire = [](GateName g) { return GateLabel(g, {1}); };

  Vector psi = Vector::Zero(qubit_dim(n));
  psi(0) = 1.0;
  Matrix joint = kron(Matrix(psi * psi.adjoint()), model.env_initial());
  auto apply = [&joint](const Matrix& w) { joint = w * joint * w.adjoint(); };
  apply(ideal(GateLabel(GateName::H, {0})));
  apply(ideal(GateLabel(GateName::CX, {0, 1})));
  apply(ideal(GateLabel(GateName::H, {2})));
  apply(ideal(GateLabel(GateName::CX, {2, 3})));

  const int dims[] = {qubit_dim(n), e};
  const int keep_sys[] = {0};
  apply(model.joint_unitary(on_wire(u.name()), n));
  if (model.reset_policy() == ResetPolicy::reset_each_gate) joint = kron(partial_trace(joint, dims, keep_sys), model.env_initial());
  apply(ideal(GateLabel(GateName::CX, {1, 2})));
  apply(ideal(GateLabel(GateName::CX, {2, 1})));
  apply(ideal(GateLabel(GateName::CX, {1, 2})));
  apply(model.joint_unitary(on_wire(v.name()), n));

  const Matrix sys = partial_trace(joint, dims, keep_sys);
  const int qdims[] = {2, 2, 2, 2};
  const int perm[] = {0, 2, 3, 1};
  return DensityMatrix(hermitian_part(permute_subsystems(sys, qdims, perm)));
}

/// Persistent model whose environment precesses through one full cycle every
/// `lag` CX gates, so that memory revives near that lag.
inline ModelSpec lag_model(int lag, double coupling, int sys_qubits = 2) {
  if (lag < 1) throw DimensionError("lag_model: lag must be positive");
  ModelSpec s;
  s.sys_qubits = sys_qubits;
  s.coupling = coupling;
  s.env_frequency = std::numbers::pi / (lag * s.durations.at(GateName::CX));
  s.reset = ResetPolicy::persistent;
  return s;
}

/// Same model with the environment reset before every gate.
inline ModelSpec markovian_twin(ModelSpec s) {
  s.reset = ResetPolicy::reset_each_gate;
  return s;
}

}  // namespace qmem
