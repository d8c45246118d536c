#pragma once

// File formats.
//
// Complex matrices are JSON arrays of rows, each entry an [re, im] pair.
// Every output carries schema_version, config_hash and seed. CSV matrices start
// with one "# key=value ..." metadata line, then a labeled header row.
//
// Channel file:
//   {"schema_version": 1, "config_hash": "...", "seed": s, "dim": d,
//    "normalization": "trace_d", "superop": [[[re, im], ...], ...],
//    "provenance": {"sequence": "X,Z", "shots": 1024 | null, ...}}
//
// Records file:
//   {"schema_version": 1, "label_grammar_version": 1, "n_qubits": N,
//    "sequence": "X,Z", "records": [{"prep": "Z+", "meas": "X",
//    "counts": {"0": 517, "1": 507}, "shots": 1024, "seed": 7}, ...]}
// Only n_qubits and records are required on input.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qmem/channels.hpp"
#include "qmem/errors.hpp"
#include "qmem/nonmarkov.hpp"
#include "qmem/simulator.hpp"
#include "qmem/tomography.hpp"

namespace qmem::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct OutputMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::optional<std::string> timestamp;
};

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// FNV-1a of the canonical (key-sorted) JSON dump of a configuration.
inline std::string config_hash(const json& config) { return hex64(fnv1a(config.dump())); }

inline void stamp(json& j, const OutputMeta& meta) {
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = meta.config_hash;
  j["seed"] = meta.seed;
  if (meta.timestamp) j["timestamp"] = *meta.timestamp;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- files ----

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file in the same directory, then renames.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidStateError("malformed JSON in '" + source + "': " + e.what());
  }
}

inline json read_json(const std::filesystem::path& path) { return parse_json(read_text(path), path.string()); }

inline void write_json(const std::filesystem::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

// ---- matrices ----

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw InvalidStateError("matrix: expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw DimensionError("matrix: ragged rows");
    for (Eigen::Index k = 0; k < cols; ++k) {
      const json& e = row[static_cast<std::size_t>(k)];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        throw InvalidStateError("matrix: entries must be [re, im] pairs");
      m(i, k) = cplx(e[0].get<double>(), e[1].get<double>());
    }
  }
  return m;
}

inline json real_matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---- channels ----

inline json channel_to_json(const QuantumChannel& chan, const json& provenance, const OutputMeta& meta) {
  json j;
  stamp(j, meta);
  j["dim"] = chan.dim();
  j["normalization"] = "trace_d";
  j["superop"] = matrix_to_json(chan.superop());
  j["provenance"] = provenance;
  return j;
}

inline QuantumChannel channel_from_json(const json& j) {
  try {
    const int d = j.at("dim").get<int>();
    Matrix s = matrix_from_json(j.at("superop"));
    if (s.rows() != d * d) throw DimensionError("channel file: superop does not match dim");
    std::string seq;
    if (j.contains("provenance") && j["provenance"].is_object() && j["provenance"].contains("sequence"))
      seq = j["provenance"]["sequence"].get<std::string>();
    return QuantumChannel(std::move(s), seq);
  } catch (const json::exception& e) {
    throw InvalidStateError(std::string("channel file: ") + e.what());
  }
}

// ---- records ----

struct RecordSet {
  int n_qubits = 1;
  std::optional<std::string> sequence;
  std::vector<CountRecord> records;
};

inline json records_to_json(const RecordSet& set, const OutputMeta& meta) {
  json j;
  stamp(j, meta);
  j["label_grammar_version"] = kLabelGrammarVersion;
  j["n_qubits"] = set.n_qubits;
  if (set.sequence) j["sequence"] = *set.sequence;
  json recs = json::array();
  for (const auto& r : set.records) {
    json e;
    e["prep"] = r.prep;
    e["meas"] = r.meas;
    json counts = json::object();
    for (const auto& [bits, c] : r.counts) {
      if (r.shots) counts[bits] = static_cast<std::uint64_t>(std::llround(c));
      else counts[bits] = c;
    }
    e["counts"] = counts;
    e["shots"] = r.shots ? json(*r.shots) : json(nullptr);
    if (r.seed) e["seed"] = *r.seed;
    recs.push_back(std::move(e));
  }
  j["records"] = std::move(recs);
  return j;
}

inline RecordSet records_from_json(const json& j) {
  try {
    RecordSet set;
    set.n_qubits = j.at("n_qubits").get<int>();
    if (set.n_qubits < 1 || set.n_qubits > 2) throw DimensionError("records: n_qubits must be 1 or 2");
    if (j.contains("sequence") && j["sequence"].is_string()) set.sequence = j["sequence"].get<std::string>();
    for (const json& e : j.at("records")) {
      CountRecord r;
      r.prep = e.at("prep").get<std::string>();
      r.meas = e.at("meas").get<std::string>();
      for (const auto& [bits, c] : e.at("counts").items()) r.counts[bits] = c.get<double>();
      if (e.contains("shots") && !e["shots"].is_null()) r.shots = e["shots"].get<std::uint64_t>();
      if (e.contains("seed") && !e["seed"].is_null()) r.seed = e["seed"].get<std::uint64_t>();
      validate_record(r, set.n_qubits);
      set.records.push_back(std::move(r));
    }
    return set;
  } catch (const json::exception& e) {
    throw InvalidStateError(std::string("records file: ") + e.what());
  }
}

// ---- model specs ----
//
// {"sys_qubits": 1, "env_dim": 2, "coupling": 0.4, "env_frequency": 0.0,
//  "durations": {"H": 1.0, ...}, "reset": "persistent" | "reset_each_gate",
//  "spam": {"prep": 0.0, "meas": 0.0, "seed": 0}, "seed": 0}
// Every key is optional; missing durations keep their defaults.

inline ModelSpec model_from_json(const json& j) {
  try {
    ModelSpec s;
    s.sys_qubits = j.value("sys_qubits", s.sys_qubits);
    s.env_dim = j.value("env_dim", s.env_dim);
    s.coupling = j.value("coupling", s.coupling);
    s.env_frequency = j.value("env_frequency", s.env_frequency);
    if (j.contains("durations")) {
      for (const auto& [name, v] : j["durations"].items()) {
        bool found = false;
        for (GateName g : kAllGateNames)
          if (gate_name_string(g) == name) {
            s.durations[g] = v.get<double>();
            found = true;
          }
        if (!found) throw LabelError("model: unknown gate '" + name + "' in durations");
      }
    }
    if (j.contains("reset")) s.reset = parse_reset_policy(j["reset"].get<std::string>());
    if (j.contains("spam")) {
      const json& sp = j["spam"];
      s.spam.prep_strength = sp.value("prep", 0.0);
      s.spam.meas_strength = sp.value("meas", 0.0);
      s.spam.seed = sp.value("seed", std::uint64_t{0});
    }
    s.seed = j.value("seed", std::uint64_t{0});
    SEModel check(s);
    return s;
  } catch (const json::exception& e) {
    throw InvalidStateError(std::string("model file: ") + e.what());
  }
}

inline json model_to_json(const ModelSpec& s) {
  json d = json::object();
  for (const auto& [g, t] : s.durations) d[std::string(gate_name_string(g))] = t;
  return {{"sys_qubits", s.sys_qubits},
          {"env_dim", s.env_dim},
          {"coupling", s.coupling},
          {"env_frequency", s.env_frequency},
          {"durations", d},
          {"reset", reset_policy_name(s.reset)},
          {"spam", {{"prep", s.spam.prep_strength}, {"meas", s.spam.meas_strength}, {"seed", s.spam.seed}}},
          {"seed", s.seed}};
}

// ---- CSV ----

inline std::string csv_meta_line(const OutputMeta& meta) {
  std::string s = "# schema_version=" + std::to_string(kSchemaVersion) + " config_hash=" + meta.config_hash +
                  " seed=" + std::to_string(meta.seed);
  if (meta.timestamp) s += " timestamp=" + *meta.timestamp;
  return s + "\n";
}

inline std::string distance_matrix_csv(const DistanceMatrix& m, const std::string& corner, const OutputMeta& meta) {
  std::string out = csv_meta_line(meta);
  out += corner;
  for (const auto& c : m.col_labels) out += "," + c;
  out += "\n";
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    out += m.row_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) out += "," + format_double(m.values(i, j));
    out += "\n";
  }
  return out;
}

inline json certificate_json(const DiamondCertificate& c) {
  json v = json::array();
  for (Eigen::Index i = 0; i < c.input_vector.size(); ++i) v.push_back({c.input_vector(i).real(), c.input_vector(i).imag()});
  return {{"value", c.value}, {"lower", c.lower},        {"upper", c.upper},
          {"gap", c.gap},     {"iterations", c.iterations}, {"input_vector", v}};
}

inline json distance_matrix_json(const DistanceMatrix& m, const std::string& name, const OutputMeta& meta) {
  json j;
  stamp(j, meta);
  j["name"] = name;
  j["metric"] = metric_name(m.metric);
  j["scaling"] = {{"inverse_dim", m.scaling.inverse_dim}, {"double_cx", m.scaling.double_cx}};
  j["rows"] = m.row_labels;
  j["cols"] = m.col_labels;
  j["values"] = real_matrix_to_json(m.values);
  if (!m.certificates.empty()) {
    json certs = json::array();
    for (const auto& [key, c] : m.certificates) {
      json x = certificate_json(c);
      x["row"] = key.first;
      x["col"] = key.second;
      certs.push_back(std::move(x));
    }
    j["certificates"] = std::move(certs);
  }
  return j;
}

/// Lower-triangular scan table: rows n, columns m, empty cells where m >= n.
inline std::string scan_csv(const MemoryScan& scan, bool diamond, const OutputMeta& meta) {
  std::string out = csv_meta_line(meta);
  out += "n\\m";
  for (int m = 1; m < scan.n_max; ++m) out += "," + std::to_string(m);
  out += "\n";
  for (int n = 2; n <= scan.n_max; ++n) {
    out += std::to_string(n);
    for (int m = 1; m < scan.n_max; ++m) {
      out += ",";
      if (m >= n) continue;
      const ScanEntry& e = scan.entries.at({n, m});
      const auto& v = diamond ? e.diamond : e.avg;
      if (v) out += format_double(*v);
    }
    out += "\n";
  }
  return out;
}

inline json scan_json(const MemoryScan& scan, const OutputMeta& meta) {
  json j;
  stamp(j, meta);
  j["n_max"] = scan.n_max;
  json entries = json::array();
  for (const auto& [key, e] : scan.entries) {
    json x = {{"n", key.first}, {"m", key.second}};
    if (e.diamond) x["diamond"] = *e.diamond;
    if (e.avg) x["avg"] = *e.avg;
    entries.push_back(std::move(x));
  }
  j["entries"] = std::move(entries);
  return j;
}

inline std::string samples_csv(std::span<const double> a, std::span<const double> b, const std::string& name_a,
                               const std::string& name_b, const OutputMeta& meta) {
  std::string out = csv_meta_line(meta);
  out += "sample," + name_a + (b.empty() ? "" : "," + name_b) + "\n";
  for (std::size_t i = 0; i < a.size(); ++i) {
    out += std::to_string(i) + "," + format_double(a[i]);
    if (!b.empty()) out += "," + (i < b.size() ? format_double(b[i]) : std::string{});
    out += "\n";
  }
  return out;
}

/// File-name friendly form of a sequence string.
inline std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += c;
    else if (c == ',') out += '_';
    else if (c == '@') out += '-';
    else if (c == '.') out += 'x';
    else out += '~';
  }
  return out.empty() ? "empty" : out;
}

}  // namespace qmem::io
