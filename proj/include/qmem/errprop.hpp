#pragma once

// Monte-Carlo propagation of shot noise through the reconstruction pipeline and
// first-order checks of preparation/measurement errors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qmem/simulator.hpp"
#include "qmem/tomography.hpp"

namespace qmem {

struct UncertaintyReport {
  std::string metric;
  double estimate = 0.0;  // pipeline on the unperturbed records
  double mean = 0.0;
  double std = 0.0;
  int trials = 0;
  int failed = 0;
  std::uint64_t shots = 0;  // 0 for exact-probability records
  std::vector<double> values;
};

using Pipeline = std::function<double(std::span<const CountRecord>)>;

/// Probabilities of each record perturbed by N(0, 1/N), clamped to [0, 1] and
/// renormalized; records without a shot count are left unchanged.
inline std::vector<CountRecord> perturb_records(std::span<const CountRecord> records, Rng& rng) {
  std::vector<CountRecord> out(records.begin(), records.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& r : out) {
    if (r.exact()) continue;
    const double n = static_cast<double>(*r.shots);
    const double sigma = 1.0 / std::sqrt(n);
    double tot = 0.0;
    for (auto& [bits, c] : r.counts) {
      c = std::clamp(c / n + sigma * normal(rng), 0.0, 1.0);
      tot += c;
    }
    if (tot <= 0.0) {
      for (auto& [bits, c] : r.counts) c = 1.0;
      tot = static_cast<double>(r.counts.size());
    }
    for (auto& [bits, c] : r.counts) c = c / tot * n;
  }
  return out;
}

/// Runs `pipeline` on K Gaussian perturbations of `records`. Trials whose
/// pipeline throws are excluded and counted in `failed`.
inline UncertaintyReport propagate_statistics(std::span<const CountRecord> records, const Pipeline& pipeline, int trials,
                                              std::uint64_t seed, std::string metric = "metric") {
  if (trials < 2) throw DimensionError("propagate_statistics: need at least two trials");
  UncertaintyReport rep;
  rep.metric = std::move(metric);
  rep.trials = trials;
  bool any_exact = false;
  for (const auto& r : records) {
    if (r.exact()) any_exact = true;
    else rep.shots = rep.shots == 0 ? *r.shots : std::min(rep.shots, *r.shots);
  }
  if (any_exact) rep.shots = 0;
  rep.estimate = pipeline(records);
  for (int k = 0; k < trials; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    const auto perturbed = perturb_records(records, rng);
    try {
      rep.values.push_back(pipeline(perturbed));
    } catch (const Error&) {
      ++rep.failed;
    }
  }
  const auto m = static_cast<double>(rep.values.size());
  if (m > 0) {
    for (double v : rep.values) rep.mean += v;
    rep.mean /= m;
  }
  if (m > 1) {
    // shifted by the first value so identical trials give exactly zero
    const double v0 = rep.values.front();
    double s = 0.0, t = 0.0;
    for (double v : rep.values) {
      s += (v - v0) * (v - v0);
      t += v - v0;
    }
    rep.std = std::sqrt(std::max(0.0, (s - t * t / m) / (m - 1)));
  }
  return rep;
}

struct SpamDecomposition {
  std::string gate;
  std::vector<double> eps;
  std::vector<double> norms;  // Frobenius norm of truth - reconstruction
  double slope = 0.0;         // log-log fit over eps > 0
  double intercept = 0.0;
  double r_squared = 0.0;
  double linear_residual = 0.0;  // max relative deviation from the best fit norm = c * eps
};

/// Least-squares line through (x, y); returns slope, intercept and R^2.
inline std::array<double, 3> linear_fit(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("linear_fit: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  const double cxx = sxx - sx * sx / n, cxy = sxy - sx * sy / n, cyy = syy - sy * sy / n;
  const double slope = cxy / cxx;
  const double r2 = cyy > 0 ? cxy * cxy / (cxx * cyy) : 1.0;
  return {slope, (sy - slope * sx) / n, r2};
}

/// Exact-statistics tomography of `gate` with SPAM strength eps (preparation and
/// measurement alike) for every eps in the grid.
inline SpamDecomposition spam_scaling(const ModelSpec& base, const GateLabel& gate, std::span<const double> eps_grid) {
  if (eps_grid.empty()) throw DimensionError("spam_scaling: empty grid");
  SpamDecomposition out;
  out.gate = gate.str();
  const int n = std::max(base.sys_qubits, gate.min_qubits());
  const TomographyFrame frame = build_frame(n);
  for (double eps : eps_grid) {
    if (eps < 0.0) throw InvalidStateError("spam_scaling: negative eps");
    ModelSpec s = base;
    s.sys_qubits = n;
    s.spam.prep_strength = eps;
    s.spam.meas_strength = eps;
    const SEModel model(s);
    const QuantumChannel truth = extract_channel(model, {gate}, n);
    const auto records = simulate_records(model, {gate}, frame, std::nullopt, s.seed);
    const QuantumChannel rec = reconstruct_channel(records, frame).channel;
    out.eps.push_back(eps);
    out.norms.push_back((truth.superop() - rec.superop()).norm());
  }
  std::vector<double> lx, ly;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < out.eps.size(); ++i)
    if (out.eps[i] > 0.0 && out.norms[i] > 0.0) {
      lx.push_back(std::log(out.eps[i]));
      ly.push_back(std::log(out.norms[i]));
      num += out.eps[i] * out.norms[i];
      den += out.eps[i] * out.eps[i];
    }
  if (lx.size() >= 2) {
    const auto [slope, icpt, r2] = linear_fit(lx, ly);
    out.slope = slope;
    out.intercept = icpt;
    out.r_squared = r2;
    const double c = num / den;
    for (std::size_t i = 0; i < out.eps.size(); ++i)
      if (out.eps[i] > 0.0 && out.norms[i] > 0.0)
        out.linear_residual = std::max(out.linear_residual, std::abs(out.norms[i] - c * out.eps[i]) / out.norms[i]);
  }
  return out;
}

}  // namespace qmem
