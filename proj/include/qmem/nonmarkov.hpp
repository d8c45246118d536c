#pragma once

// Memory witnesses built on reconstructed channels: conditional maps and their
// positivity, distances between channels (Haar-averaged trace distance and the
// diamond distance), distance matrices over gate pairs, the memory-length scan
// and the relative-entropy estimate for the two-step process tensor.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qmem/channels.hpp"
#include "qmem/sdp.hpp"

namespace qmem {

/// Phi_{V|U} = Phi_{VU} ∘ Phi_U^{-1}.
struct ConditionalMap {
  QuantumChannel channel;
  GateLabel conditioned_on;
  GateLabel target;
  double cond_number;
};

inline ConditionalMap conditional_map(const QuantumChannel& phi_vu, const QuantumChannel& phi_u, const GateLabel& u,
                                      const GateLabel& v, double cond_threshold = kDefaultCondThreshold) {
  if (phi_vu.dim() != phi_u.dim()) throw DimensionError("conditional_map: dimension mismatch");
  const Inversion inv = invert_with_diagnostics(phi_u, cond_threshold);
  QuantumChannel c = compose(phi_vu, inv.inverse).with_provenance(v.str() + "|" + u.str());
  return {std::move(c), u, v, inv.condition_number()};
}

/// tr|J| - 1 for the trace-1 Choi matrix J; zero for CP maps.
///
/// Computed on the Hermitian part, normalized by its actual trace, counting only
/// eigenvalues below -1e-10 so that CP maps give exactly zero.
inline double cp_violation(const QuantumChannel& chan) {
  const Matrix j = hermitian_part(choi_from_superop(chan).data);
  const double tr = j.trace().real();
  if (!(std::abs(tr) > 0.0)) return 0.0;
  const RealVector ev = eigvalsh(j / tr);
  double neg = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) < -kZeroTol) neg += -ev(i);
  return 2.0 * neg;
}

inline double cp_violation(const ConditionalMap& cm) { return cp_violation(cm.channel); }

inline constexpr int kDefaultSamples = 100000;

struct AverageDistance {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> samples;
};

namespace detail {

inline double half_trace_norm(const Matrix& m) {
  if (m.rows() == 2) {
    const double a = m(0, 0).real(), d = m(1, 1).real();
    const double mid = 0.5 * (a + d);
    const double rad = std::sqrt(0.25 * (a - d) * (a - d) + std::norm(m(0, 1)));
    return 0.5 * (std::abs(mid + rad) + std::abs(mid - rad));
  }
  return 0.5 * trace_norm_hermitian(hermitian_part(m));
}

}  // namespace detail

/// (1/M) sum_l D(a[rho_l], b[rho_l]) over Haar-random pure inputs of the system.
inline AverageDistance avg_trace_distance(const QuantumChannel& a, const QuantumChannel& b, int m_samples, Rng& rng) {
  if (a.dim() != b.dim()) throw DimensionError("avg_trace_distance: dimension mismatch");
  if (m_samples < 1) throw DimensionError("avg_trace_distance: need at least one sample");
  const int d = a.dim();
  const Matrix diff = a.superop() - b.superop();
  AverageDistance out;
  out.samples.resize(static_cast<std::size_t>(m_samples));
  const bool same = max_abs(diff) == 0.0;
  double sum = 0.0, sum2 = 0.0;
  for (int l = 0; l < m_samples; ++l) {
    const PureState psi = haar_random_pure(d, rng);
    double dist = 0.0;
    if (!same) {
      // vec(psi psi†) = conj(psi) kron psi
      const Vector v = kron(Vector(psi.amplitudes().conjugate()), psi.amplitudes());
      dist = detail::half_trace_norm(unvec(diff * v, d));
    }
    out.samples[static_cast<std::size_t>(l)] = dist;
    sum += dist;
    sum2 += dist * dist;
  }
  out.mean = sum / m_samples;
  if (m_samples > 1) {
    const double var = std::max(0.0, (sum2 - m_samples * out.mean * out.mean) / (m_samples - 1));
    out.std_error = std::sqrt(var / m_samples);
  }
  return out;
}

inline AverageDistance avg_trace_distance(const QuantumChannel& a, const QuantumChannel& b, Rng& rng) {
  return avg_trace_distance(a, b, kDefaultSamples, rng);
}

/// Half the diamond norm of a - b, with ancilla of the system dimension.
inline DiamondCertificate diamond_distance(const QuantumChannel& a, const QuantumChannel& b, const SdpOptions& opt = {}) {
  if (a.dim() != b.dim()) throw DimensionError("diamond_distance: dimension mismatch");
  const QuantumChannel diff(a.superop() - b.superop());
  return diamond_norm_sdp(choi_from_superop(diff).data, a.dim(), opt);
}

enum class Metric { diamond, avg_trace };

inline std::string metric_name(Metric m) { return m == Metric::diamond ? "diamond" : "avg_trace"; }

/// Display conventions: diamond values divided by the channel dimension d (4 when
/// a CX is involved, 2 otherwise), and all values doubled when the target gate is CX.
struct ScalingFlags {
  bool inverse_dim = false;
  bool double_cx = false;
  bool any() const { return inverse_dim || double_cx; }
};

struct DistanceOptions {
  int samples = kDefaultSamples;
  std::uint64_t seed = 0;
  SdpOptions sdp{};
  ScalingFlags scaling{};
};

struct DistanceMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Eigen::MatrixXd values;
  Metric metric = Metric::avg_trace;
  ScalingFlags scaling{};
  std::map<std::pair<std::string, std::string>, DiamondCertificate> certificates;  // diamond entries, unscaled
};

namespace detail {

inline double scale_factor(Metric metric, const ScalingFlags& f, int dim, const GateLabel& v) {
  double s = 1.0;
  if (f.inverse_dim && metric == Metric::diamond) s /= dim;
  if (f.double_cx && v.name() == GateName::CX) s *= 2.0;
  return s;
}

inline double channel_distance(const QuantumChannel& a, const QuantumChannel& b, Metric metric,
                               const DistanceOptions& opt, std::uint64_t stream,
                               DiamondCertificate* cert = nullptr) {
  if (metric == Metric::diamond) {
    DiamondCertificate c = diamond_distance(a, b, opt.sdp);
    if (cert) *cert = c;
    return c.value;
  }
  Rng rng(derive_seed(opt.seed, stream));
  return avg_trace_distance(a, b, opt.samples, rng).mean;
}

}  // namespace detail

/// Pairwise distances E(Phi_{V|U1}, Phi_{V|U2}) for one target V.
inline DistanceMatrix gate_dependence_matrix(const std::map<GateLabel, ConditionalMap>& conditionals, Metric metric,
                                             const DistanceOptions& opt = {}) {
  if (conditionals.size() < 2) throw DimensionError("gate_dependence_matrix: need at least two conditioning gates");
  std::vector<const ConditionalMap*> maps;
  DistanceMatrix out;
  out.metric = metric;
  out.scaling = opt.scaling;
  for (const auto& [u, cm] : conditionals) {
    maps.push_back(&cm);
    out.row_labels.push_back(u.str());
  }
  const int dim = maps.front()->channel.dim();
  for (const auto* m : maps)
    if (m->channel.dim() != dim) throw DimensionError("gate_dependence_matrix: conditional maps differ in dimension");
  out.col_labels = out.row_labels;
  const auto n = static_cast<Eigen::Index>(maps.size());
  out.values = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      DiamondCertificate cert;
      const double v = detail::channel_distance(maps[i]->channel, maps[j]->channel, metric, opt,
                                                static_cast<std::uint64_t>(i * n + j), &cert) *
                       detail::scale_factor(metric, opt.scaling, dim, maps[i]->target);
      out.values(i, j) = out.values(j, i) = v;
      if (metric == Metric::diamond) out.certificates.emplace(std::make_pair(out.row_labels[i], out.col_labels[j]), cert);
    }
  return out;
}

/// Reconstructed channels indexed by gate sequence and dimension.
class ChannelTable {
 public:
  void add(const std::string& sequence, QuantumChannel chan) {
    const int d = chan.dim();
    table_.insert_or_assign({sequence, d}, std::move(chan));
  }
  void add(const GateSequence& seq, QuantumChannel chan) { add(sequence_string(seq), std::move(chan)); }

  const QuantumChannel* find(const std::string& sequence, int dim) const {
    const auto it = table_.find({sequence, dim});
    return it == table_.end() ? nullptr : &it->second;
  }

  const QuantumChannel& get(const GateSequence& seq, int dim) const {
    const std::string key = sequence_string(seq);
    if (const auto* c = find(key, dim)) return *c;
    throw IncompleteDataError("missing channel for sequence '" + key + "'",
                              {key + " (dim " + std::to_string(dim) + ")"});
  }

  std::size_t size() const { return table_.size(); }
  const std::map<std::pair<std::string, int>, QuantumChannel>& entries() const { return table_; }

 private:
  std::map<std::pair<std::string, int>, QuantumChannel> table_;
};

/// Register dimension used for the pair (U, V): large enough for both gates.
inline int pair_dim(const GateLabel& u, const GateLabel& v) {
  return qubit_dim(std::max(u.min_qubits(), v.min_qubits()));
}

/// Phi_{V|U} for every ordered pair from the table.
inline std::map<std::pair<GateLabel, GateLabel>, ConditionalMap> conditional_maps(
    const ChannelTable& table, std::span<const GateLabel> gate_set, double cond_threshold = kDefaultCondThreshold) {
  std::map<std::pair<GateLabel, GateLabel>, ConditionalMap> out;
  std::vector<std::string> missing;
  for (const auto& u : gate_set)
    for (const auto& v : gate_set) {
      const int d = pair_dim(u, v);
      const GateSequence su{u}, svu{u, v};
      for (const auto* s : {&su, &svu})
        if (!table.find(sequence_string(*s), d))
          missing.push_back(sequence_string(*s) + " (dim " + std::to_string(d) + ")");
    }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    throw IncompleteDataError("conditional_maps: missing channels", missing);
  }
  for (const auto& u : gate_set)
    for (const auto& v : gate_set) {
      const int d = pair_dim(u, v);
      out.emplace(std::make_pair(u, v),
                  conditional_map(table.get({u, v}, d), table.get({u}, d), u, v, cond_threshold));
    }
  return out;
}

/// cp_violation(Phi_{V|U}), rows U, columns V.
inline DistanceMatrix cp_violation_matrix(const std::map<std::pair<GateLabel, GateLabel>, ConditionalMap>& cms,
                                          std::span<const GateLabel> gate_set) {
  DistanceMatrix out;
  for (const auto& g : gate_set) out.row_labels.push_back(g.str());
  out.col_labels = out.row_labels;
  const auto n = static_cast<Eigen::Index>(gate_set.size());
  out.values = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out.values(i, j) = cp_violation(cms.at({gate_set[i], gate_set[j]}));
  return out;
}

/// E(Phi_{V|U}, Phi_V), rows U, columns V.
inline DistanceMatrix conditional_vs_marginal_matrix(const ChannelTable& table, std::span<const GateLabel> gate_set,
                                                     Metric metric, const DistanceOptions& opt = {},
                                                     double cond_threshold = kDefaultCondThreshold) {
  const auto cms = conditional_maps(table, gate_set, cond_threshold);
  DistanceMatrix out;
  out.metric = metric;
  out.scaling = opt.scaling;
  for (const auto& g : gate_set) out.row_labels.push_back(g.str());
  out.col_labels = out.row_labels;
  const auto n = static_cast<Eigen::Index>(gate_set.size());
  out.values = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const GateLabel& u = gate_set[i];
      const GateLabel& v = gate_set[j];
      const QuantumChannel& phi_v = table.get({v}, pair_dim(u, v));
      DiamondCertificate cert;
      const double dist = detail::channel_distance(cms.at({u, v}).channel, phi_v, metric, opt,
                                                   static_cast<std::uint64_t>(i * n + j), &cert);
      if (metric == Metric::diamond) out.certificates.emplace(std::make_pair(u.str(), v.str()), cert);
      out.values(i, j) = dist * detail::scale_factor(metric, opt.scaling, phi_v.dim(), v);
    }
  return out;
}

/// One gate-dependence matrix per target V. All conditionals for a given V use
/// the largest register any pair (U, V) needs.
inline std::map<GateLabel, DistanceMatrix> gate_dependence_matrices(const ChannelTable& table,
                                                                    std::span<const GateLabel> gate_set, Metric metric,
                                                                    const DistanceOptions& opt = {},
                                                                    double cond_threshold = kDefaultCondThreshold) {
  std::map<GateLabel, DistanceMatrix> out;
  for (const auto& v : gate_set) {
    int d = 2;
    for (const auto& u : gate_set) d = std::max(d, pair_dim(u, v));
    std::map<GateLabel, ConditionalMap> cms;
    std::vector<std::string> missing;
    for (const auto& u : gate_set)
      for (const GateSequence& s : {GateSequence{u}, GateSequence{u, v}})
        if (!table.find(sequence_string(s), d)) missing.push_back(sequence_string(s) + " (dim " + std::to_string(d) + ")");
    if (!missing.empty()) throw IncompleteDataError("gate_dependence_matrices: missing channels", missing);
    for (const auto& u : gate_set)
      cms.emplace(u, conditional_map(table.get({u, v}, d), table.get({u}, d), u, v, cond_threshold));
    out.emplace(v, gate_dependence_matrix(cms, metric, opt));
  }
  return out;
}

struct ScanEntry {
  std::optional<double> diamond;
  std::optional<double> avg;
};

struct MemoryScan {
  int n_max = 0;
  std::map<std::pair<int, int>, ScanEntry> entries;  // key (n, m), 1 <= m < n <= n_max
};

inline constexpr int kDefaultScanLength = 15;

/// E(Phi^(n), Phi^(m) ∘ Phi^(n-m)) for 1 <= m < n <= n_max; channels[k] holds Phi^(k+1).
inline MemoryScan memory_scan(std::span<const QuantumChannel> channels, bool want_diamond, bool want_avg,
                              const DistanceOptions& opt = {}) {
  const int n_max = static_cast<int>(channels.size());
  if (n_max < 2) throw DimensionError("memory_scan: need at least two channels");
  for (const auto& c : channels)
    if (c.dim() != channels.front().dim()) throw DimensionError("memory_scan: channels differ in dimension");
  MemoryScan scan;
  scan.n_max = n_max;
  for (int n = 2; n <= n_max; ++n)
    for (int m = 1; m < n; ++m) {
      const QuantumChannel split = compose(channels[m - 1], channels[n - m - 1]);
      const QuantumChannel& whole = channels[n - 1];
      ScanEntry e;
      const auto stream = static_cast<std::uint64_t>(n * (n_max + 1) + m);
      if (want_diamond) e.diamond = detail::channel_distance(whole, split, Metric::diamond, opt, stream);
      if (want_avg) e.avg = detail::channel_distance(whole, split, Metric::avg_trace, opt, stream);
      scan.entries.emplace(std::make_pair(n, m), e);
    }
  return scan;
}

struct FloorEstimate {
  double mean = 0.0;
  double std = 0.0;
  double floor = 0.0;  // mean + 3 std
};

/// mean + 3 sigma of a metric sampled under the null (no memory) hypothesis.
inline FloorEstimate statistical_floor(std::span<const double> null_values) {
  if (null_values.empty()) throw DimensionError("statistical_floor: no values");
  FloorEstimate f;
  for (double v : null_values) f.mean += v;
  f.mean /= static_cast<double>(null_values.size());
  if (null_values.size() > 1) {
    double s = 0.0;
    for (double v : null_values) s += (v - f.mean) * (v - f.mean);
    f.std = std::sqrt(s / static_cast<double>(null_values.size() - 1));
  }
  f.floor = f.mean + 3.0 * f.std;
  return f;
}

/// Product of the trace-1 Choi states of two maps, ordered (in_u, out_u, in_v, out_v).
inline DensityMatrix markovian_reference(const QuantumChannel& phi_u, const QuantumChannel& phi_v) {
  const Matrix ju = normalized(choi_from_superop(phi_u), ChoiNormalization::trace_1).data;
  const Matrix jv = normalized(choi_from_superop(phi_v), ChoiNormalization::trace_1).data;
  return DensityMatrix(hermitian_part(kron(ju, jv)), 1e-8);
}

inline constexpr double kReferenceRegularization = 1e-12;

/// S(measured || reference) with the reference blended toward the maximally
/// mixed state by `regularization` so that it has full support.
inline double process_tensor_proxy(const DensityMatrix& measured, const DensityMatrix& reference,
                                   double regularization = kReferenceRegularization) {
  if (measured.dim() != reference.dim()) throw DimensionError("process_tensor_proxy: dimension mismatch");
  const int d = reference.dim();
  HermitianEig e = eigh(reference.matrix());
  for (Eigen::Index i = 0; i < e.values.size(); ++i)
    e.values(i) = (1.0 - regularization) * std::max(e.values(i), 0.0) + regularization / d;
  e.values /= e.values.sum();
  const DensityMatrix ref(hermitian_part(spectral_apply(e, [](double x) { return x; })));
  try {
    return relative_entropy(measured, ref, 0.0);
  } catch (const SupportError& err) {
    throw SupportError(std::string(err.what()) + " (regularization " + std::to_string(regularization) + ")",
                       err.eigenvalue(), err.weight());
  }
}

}  // namespace qmem
