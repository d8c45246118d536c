#pragma once

// Command implementations behind the qmem executable. Each command reads its
// inputs, writes its outputs atomically under RunConfig::out and returns the
// written paths. Errors propagate as qmem::Error; exit_code() maps their kind.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qmem/errprop.hpp"
#include "qmem/io.hpp"
#include "qmem/nonmarkov.hpp"
#include "qmem/simulator.hpp"
#include "qmem/tomography.hpp"

namespace qmem::cli {

namespace fs = std::filesystem;
using io::json;

struct RunConfig {
  std::string command;
  std::vector<std::string> inputs;
  std::string out = ".";
  std::string model;
  std::string gates;
  int qubits = 0;
  std::optional<std::uint64_t> shots;
  bool exact = false;
  int samples = kDefaultSamples;
  int nmax = kDefaultScanLength;
  std::string metric = "both";
  bool scale_figure = false;
  std::uint64_t seed = 0;
  int trials = 200;
  std::string spam_grid = "0,1e-4,3e-4,1e-3,3e-3,1e-2";
  std::vector<std::string> histograms;
  bool timestamp = false;
};

enum ExitCode { kOk = 0, kValidation = 2, kNumerical = 3, kIo = 4 };

inline int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::validation: return kValidation;
    case ErrorKind::numerical: return kNumerical;
    case ErrorKind::io: return kIo;
  }
  return kValidation;
}

/// Canonical JSON of the options that determine a command's output.
inline json config_json(const RunConfig& c) {
  return {{"command", c.command}, {"inputs", c.inputs},   {"model", c.model},
          {"gates", c.gates},     {"qubits", c.qubits},   {"shots", c.shots ? json(*c.shots) : json(nullptr)},
          {"exact", c.exact},     {"samples", c.samples}, {"nmax", c.nmax},
          {"metric", c.metric},   {"scale_figure", c.scale_figure},
          {"seed", c.seed},       {"trials", c.trials},   {"spam_grid", c.spam_grid},
          {"histograms", c.histograms}};
}

inline io::OutputMeta output_meta(const RunConfig& c) {
  io::OutputMeta m{io::config_hash(config_json(c)), c.seed, std::nullopt};
  if (c.timestamp) {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    m.timestamp = buf;
  }
  return m;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<GateLabel> parse_gate_set(const std::string& s) {
  std::vector<GateLabel> out;
  for (const auto& tok : split(s, ',')) out.push_back(GateLabel::parse(tok));
  if (out.empty()) throw LabelError("empty gate list");
  return out;
}

/// Expands inputs: directories contribute their *.json files in name order.
inline std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw IoError("input '" + in + "' does not exist");
    }
  }
  if (out.empty()) throw IoError("no input files");
  return out;
}

inline ModelSpec load_model(const RunConfig& c) {
  if (c.model.empty()) throw InvalidStateError("--model is required");
  return io::model_from_json(io::read_json(c.model));
}

inline std::string records_name(const std::string& seq, int n) {
  return "records_" + io::sanitize(seq) + "_n" + std::to_string(n) + ".json";
}

inline std::string channel_name(const std::string& seq, int n) {
  return "channel_" + io::sanitize(seq) + "_n" + std::to_string(n) + ".json";
}

// ---- simulate ----

inline std::vector<fs::path> cmd_simulate(const RunConfig& c) {
  if (c.exact == c.shots.has_value()) throw InvalidStateError("simulate: give exactly one of --shots or --exact");
  if (c.shots && *c.shots == 0) throw InvalidStateError("simulate: --shots must be positive");
  const ModelSpec spec = load_model(c);
  const SEModel model(spec);
  const auto sequences = split(c.gates, ';');
  if (sequences.empty()) throw LabelError("simulate: --gates is required");
  const io::OutputMeta meta = output_meta(c);
  std::vector<fs::path> written;
  for (const auto& text : sequences) {
    const GateSequence seq = parse_sequence(text);
    const int n = std::max({c.qubits, spec.sys_qubits, min_qubits(seq)});
    if (n > 2) throw DimensionError("simulate: tomography supports at most two qubits");
    const TomographyFrame frame = build_frame(n);
    const std::string key = sequence_string(seq);
    const std::uint64_t seed = derive_seed(c.seed, fnv1a(key + "/" + std::to_string(n)));
    io::RecordSet set{n, key, simulate_records(model, seq, frame, c.shots, seed)};
    json j = io::records_to_json(set, meta);
    j["provenance"] = {{"model", io::model_to_json(spec)}, {"sequence_seed", seed}};
    const fs::path path = fs::path(c.out) / records_name(key, n);
    io::write_json(path, j);
    written.push_back(path);
  }
  return written;
}

// ---- tomo ----

inline std::vector<fs::path> cmd_tomo(const RunConfig& c) {
  const io::OutputMeta meta = output_meta(c);
  std::vector<fs::path> written;
  for (const auto& path : expand_inputs(c.inputs)) {
    const json j = io::read_json(path);
    if (!j.contains("records")) continue;
    const io::RecordSet set = io::records_from_json(j);
    std::string seq;
    if (set.sequence) seq = sequence_string(parse_sequence(*set.sequence));
    else if (!c.gates.empty()) seq = sequence_string(parse_sequence(c.gates));
    else throw InvalidStateError("tomo: '" + path.string() + "' has no sequence; pass --gates");
    const TomographyFrame frame = build_frame(set.n_qubits);
    const TomographyResult res = reconstruct_channel(set.records, frame, {}, seq);
    std::optional<std::uint64_t> shots;
    for (const auto& r : set.records)
      if (r.shots) shots = shots ? std::min(*shots, *r.shots) : *r.shots;
    int max_it = 0;
    for (const auto& [p, it] : res.iterations) max_it = std::max(max_it, it);
    json prov = {{"sequence", seq},
                 {"n_qubits", set.n_qubits},
                 {"shots", shots ? json(*shots) : json(nullptr)},
                 {"records_seed", j.value("seed", std::uint64_t{0})},
                 {"source", path.filename().string()},
                 {"mle_max_iterations", max_it}};
    if (meta.timestamp) prov["timestamp"] = *meta.timestamp;
    const fs::path out = fs::path(c.out) / channel_name(seq, set.n_qubits);
    io::write_json(out, io::channel_to_json(res.channel, prov, meta));
    written.push_back(out);
  }
  if (written.empty()) throw InvalidStateError("tomo: no records files among the inputs");
  return written;
}

inline ChannelTable load_channels(const std::vector<std::string>& inputs) {
  ChannelTable table;
  for (const auto& path : expand_inputs(inputs)) {
    const json j = io::read_json(path);
    if (!j.contains("superop")) continue;
    QuantumChannel chan = io::channel_from_json(j);
    if (chan.provenance().empty()) throw InvalidStateError("channel file '" + path.string() + "' has no sequence");
    const std::string seq = sequence_string(parse_sequence(chan.provenance()));
    table.add(seq, std::move(chan));
  }
  return table;
}

inline std::vector<Metric> parse_metrics(const std::string& m) {
  if (m == "both") return {Metric::avg_trace, Metric::diamond};
  if (m == "avg") return {Metric::avg_trace};
  if (m == "diamond") return {Metric::diamond};
  throw InvalidStateError("--metric must be diamond, avg or both");
}

inline std::string metric_tag(Metric m) { return m == Metric::diamond ? "diamond" : "avg"; }

// ---- analyze ----

inline std::vector<fs::path> cmd_analyze(const RunConfig& c) {
  const ChannelTable table = load_channels(c.inputs);
  const auto gate_set = parse_gate_set(c.gates.empty() ? "H,S,T,X,Y,Z" : c.gates);
  const auto metrics = parse_metrics(c.metric);
  const io::OutputMeta meta = output_meta(c);
  const fs::path out(c.out);
  std::vector<fs::path> written;
  auto emit_matrix = [&](const DistanceMatrix& m, const std::string& name, const std::string& corner) {
    io::write_atomic(out / (name + ".csv"), io::distance_matrix_csv(m, corner, meta));
    io::write_json(out / (name + ".json"), io::distance_matrix_json(m, name, meta));
    written.push_back(out / (name + ".csv"));
    written.push_back(out / (name + ".json"));
  };

  const auto cms = conditional_maps(table, gate_set);
  emit_matrix(cp_violation_matrix(cms, gate_set), "cp_violation", "U\\V");

  DistanceOptions opt;
  opt.samples = c.samples;
  opt.seed = c.seed;
  for (Metric m : metrics) {
    emit_matrix(conditional_vs_marginal_matrix(table, gate_set, m, opt), "conditional_" + metric_tag(m), "U\\V");
    if (c.scale_figure) {
      DistanceOptions scaled = opt;
      scaled.scaling.inverse_dim = true;
      emit_matrix(conditional_vs_marginal_matrix(table, gate_set, m, scaled), "conditional_" + metric_tag(m) + "_scaled",
                  "U\\V");
    }
    DistanceOptions dep = opt;
    if (c.scale_figure) dep.scaling = {true, true};
    for (const auto& [v, mat] : gate_dependence_matrices(table, gate_set, m, dep))
      emit_matrix(mat, "gate_dependence_" + metric_tag(m) + "_" + io::sanitize(v.str()), "U1\\U2");
  }

  std::vector<std::string> pairs = c.histograms;
  if (pairs.empty()) {
    const bool has_x = std::count(gate_set.begin(), gate_set.end(), GateLabel(GateName::X));
    const bool has_z = std::count(gate_set.begin(), gate_set.end(), GateLabel(GateName::Z));
    if (has_x && has_z) pairs.push_back("X,Z");
  }
  std::optional<SEModel> baseline;
  if (!c.model.empty()) baseline.emplace(markovian_twin(load_model(c)));
  for (const auto& text : pairs) {
    const GateSequence uv = parse_sequence(text);
    if (uv.size() != 2) throw LabelError("histogram pair must be 'U,V'");
    const int d = pair_dim(uv[0], uv[1]);
    const ConditionalMap cm = conditional_map(table.get(uv, d), table.get({uv[0]}, d), uv[0], uv[1]);
    Rng rng(derive_seed(c.seed, fnv1a("hist:" + text)));
    const AverageDistance measured = avg_trace_distance(cm.channel, table.get({uv[1]}, d), c.samples, rng);
    std::vector<double> base;
    if (baseline) {
      int n = 0;
      while (qubit_dim(n) < d) ++n;
      auto channel_of = [&](const GateSequence& s, std::uint64_t k) {
        if (!c.shots) return extract_channel(*baseline, s, n);
        const TomographyFrame frame = build_frame(n);
        const auto recs = simulate_records(*baseline, s, frame, c.shots, derive_seed(c.seed, k));
        return reconstruct_channel(recs, frame).channel;
      };
      const ConditionalMap bcm =
          conditional_map(channel_of(uv, 1), channel_of({uv[0]}, 2), uv[0], uv[1]);
      Rng brng(derive_seed(c.seed, fnv1a("hist-baseline:" + text)));
      base = avg_trace_distance(bcm.channel, channel_of({uv[1]}, 3), c.samples, brng).samples;
    }
    const std::string name = "histogram_" + io::sanitize(uv[1].str()) + "_given_" + io::sanitize(uv[0].str());
    io::write_atomic(out / (name + ".csv"), io::samples_csv(measured.samples, base, "measured", "markovian", meta));
    written.push_back(out / (name + ".csv"));
  }
  return written;
}

// ---- scan ----

inline std::vector<fs::path> cmd_scan(const RunConfig& c) {
  if (c.nmax < 2) throw InvalidStateError("scan: --nmax must be at least 2");
  const ChannelTable table = load_channels(c.inputs);
  const GateLabel gate = GateLabel::parse(c.gates.empty() ? "CX" : c.gates);
  int dim = 0;
  for (const auto& [key, chan] : table.entries())
    if (key.first == gate.str()) dim = std::max(dim, chan.dim());
  if (dim == 0) throw IncompleteDataError("scan: no channel for " + gate.str(), {gate.str()});
  std::vector<QuantumChannel> chans;
  for (int n = 1; n <= c.nmax; ++n) chans.push_back(table.get(GateSequence(static_cast<std::size_t>(n), gate), dim));
  const auto metrics = parse_metrics(c.metric);
  const bool want_d = std::count(metrics.begin(), metrics.end(), Metric::diamond) > 0;
  const bool want_a = std::count(metrics.begin(), metrics.end(), Metric::avg_trace) > 0;
  DistanceOptions opt;
  opt.samples = c.samples;
  opt.seed = c.seed;
  const MemoryScan scan = memory_scan(chans, want_d, want_a, opt);
  const io::OutputMeta meta = output_meta(c);
  const fs::path out(c.out);
  std::vector<fs::path> written;
  if (want_a) {
    io::write_atomic(out / "scan_avg.csv", io::scan_csv(scan, false, meta));
    written.push_back(out / "scan_avg.csv");
  }
  if (want_d) {
    io::write_atomic(out / "scan_diamond.csv", io::scan_csv(scan, true, meta));
    written.push_back(out / "scan_diamond.csv");
  }
  json j = io::scan_json(scan, meta);
  j["gate"] = gate.str();
  io::write_json(out / "scan.json", j);
  written.push_back(out / "scan.json");
  return written;
}

// ---- ptensor ----

inline std::vector<fs::path> cmd_ptensor(const RunConfig& c) {
  const ModelSpec spec = load_model(c);
  const GateSequence uv = parse_sequence(c.gates.empty() ? "X,Z" : c.gates);
  if (uv.size() != 2) throw LabelError("ptensor: --gates must be 'U,V'");
  auto proxy = [&](const SEModel& model) {
    const DensityMatrix state = cji_circuit(model, uv[0], uv[1]);
    const DensityMatrix ref = markovian_reference(extract_channel(model, {uv[0]}, 1), extract_channel(model, {uv[1]}, 1));
    return std::make_pair(process_tensor_proxy(state, ref), state);
  };
  const auto [value, state] = proxy(SEModel(spec));
  const auto twin = proxy(SEModel(markovian_twin(spec))).first;
  json j;
  io::stamp(j, output_meta(c));
  j["u"] = uv[0].str();
  j["v"] = uv[1].str();
  j["relative_entropy"] = value;
  j["markovian_twin_relative_entropy"] = twin;
  j["regularization"] = kReferenceRegularization;
  j["model"] = io::model_to_json(spec);
  j["state"] = io::matrix_to_json(state.matrix());
  const fs::path path = fs::path(c.out) / "ptensor.json";
  io::write_json(path, j);
  return {path};
}

// ---- errors ----

inline std::string report_table(const UncertaintyReport& r) {
  char buf[256];
  std::string s;
  std::snprintf(buf, sizeof buf, "%-28s %14s %14s %14s %8s %8s %10s\n", "metric", "estimate", "mean", "std", "trials",
                "failed", "shots");
  s += buf;
  std::snprintf(buf, sizeof buf, "%-28s %14.6e %14.6e %14.6e %8d %8d %10llu\n", r.metric.c_str(), r.estimate, r.mean, r.std,
                r.trials, r.failed, static_cast<unsigned long long>(r.shots));
  return s + buf;
}

inline std::string spam_table(const SpamDecomposition& d) {
  char buf[128];
  std::string s;
  std::snprintf(buf, sizeof buf, "%14s %16s\n", "eps", "|e(U)|_F");
  s += buf;
  for (std::size_t i = 0; i < d.eps.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%14.6e %16.8e\n", d.eps[i], d.norms[i]);
    s += buf;
  }
  std::snprintf(buf, sizeof buf, "slope %.6f  R^2 %.6f  linear residual %.3e\n", d.slope, d.r_squared, d.linear_residual);
  return s + buf;
}

inline std::vector<fs::path> cmd_errors(const RunConfig& c, std::ostream& log = std::cout) {
  const io::OutputMeta meta = output_meta(c);
  const fs::path out(c.out);
  if (!c.model.empty() && c.inputs.empty()) {
    const ModelSpec spec = load_model(c);
    const GateLabel gate = GateLabel::parse(c.gates.empty() ? "X" : c.gates);
    std::vector<double> grid;
    for (const auto& tok : split(c.spam_grid, ',')) grid.push_back(std::stod(tok));
    const SpamDecomposition d = spam_scaling(spec, gate, grid);
    json j;
    io::stamp(j, meta);
    j["gate"] = d.gate;
    j["eps"] = d.eps;
    j["norms"] = d.norms;
    j["slope"] = d.slope;
    j["intercept"] = d.intercept;
    j["r_squared"] = d.r_squared;
    j["linear_residual"] = d.linear_residual;
    io::write_json(out / "spam.json", j);
    log << spam_table(d);
    return {out / "spam.json"};
  }

  std::vector<io::RecordSet> sets;
  for (const auto& p : expand_inputs(c.inputs)) {
    const json j = io::read_json(p);
    if (j.contains("records")) sets.push_back(io::records_from_json(j));
  }
  if (sets.size() != 1 && sets.size() != 3)
    throw InvalidStateError("errors: give one records file, or three (U, V, then U,V)");
  for (const auto& s : sets)
    if (!s.sequence) throw InvalidStateError("errors: records files must carry their sequence");

  std::vector<CountRecord> all;
  std::vector<std::size_t> offsets{0};
  for (const auto& s : sets) {
    all.insert(all.end(), s.records.begin(), s.records.end());
    offsets.push_back(all.size());
  }
  auto part = [&](std::span<const CountRecord> r, std::size_t k) {
    return r.subspan(offsets[k], offsets[k + 1] - offsets[k]);
  };
  Pipeline pipeline;
  std::string metric;
  if (sets.size() == 1) {
    const TomographyFrame frame = build_frame(sets[0].n_qubits);
    const GateSequence seq = parse_sequence(*sets[0].sequence);
    const Matrix ideal =
        normalized(choi_from_superop(ideal_channel(seq, sets[0].n_qubits)), ChoiNormalization::trace_1).data;
    metric = "choi_trace_distance_to_ideal";
    pipeline = [frame, ideal](std::span<const CountRecord> r) {
      const QuantumChannel chan = reconstruct_channel(r, frame).channel;
      return trace_distance(normalized(choi_from_superop(chan), ChoiNormalization::trace_1).data, ideal);
    };
  } else {
    const int n = sets[0].n_qubits;
    for (const auto& s : sets)
      if (s.n_qubits != n) throw DimensionError("errors: records files differ in qubit count");
    const GateSequence u = parse_sequence(*sets[0].sequence);
    const GateSequence v = parse_sequence(*sets[1].sequence);
    if (u.size() != 1 || v.size() != 1) throw LabelError("errors: first two files must hold single gates");
    const TomographyFrame frame = build_frame(n);
    metric = "avg_trace_distance_conditional";
    const int samples = c.samples;
    const std::uint64_t seed = c.seed;
    pipeline = [=](std::span<const CountRecord> r) {
      const QuantumChannel phi_u = reconstruct_channel(part(r, 0), frame).channel;
      const QuantumChannel phi_v = reconstruct_channel(part(r, 1), frame).channel;
      const QuantumChannel phi_vu = reconstruct_channel(part(r, 2), frame).channel;
      const ConditionalMap cm = conditional_map(phi_vu, phi_u, u[0], v[0]);
      Rng rng(derive_seed(seed, 0));
      return avg_trace_distance(cm.channel, phi_v, samples, rng).mean;
    };
  }
  const UncertaintyReport rep = propagate_statistics(all, pipeline, c.trials, c.seed, metric);
  json j;
  io::stamp(j, meta);
  j["metric"] = rep.metric;
  j["estimate"] = rep.estimate;
  j["mean"] = rep.mean;
  j["std"] = rep.std;
  j["trials"] = rep.trials;
  j["failed"] = rep.failed;
  j["shots"] = rep.shots;
  j["values"] = rep.values;
  io::write_json(out / "uncertainty.json", j);
  log << report_table(rep);
  return {out / "uncertainty.json"};
}

inline std::vector<fs::path> run(const RunConfig& c, std::ostream& log = std::cout) {
  if (c.command == "simulate") return cmd_simulate(c);
  if (c.command == "tomo") return cmd_tomo(c);
  if (c.command == "analyze") return cmd_analyze(c);
  if (c.command == "scan") return cmd_scan(c);
  if (c.command == "ptensor") return cmd_ptensor(c);
  if (c.command == "errors") return cmd_errors(c, log);
  throw InvalidStateError("unknown command '" + c.command + "'");
}

}  // namespace qmem::cli
