#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"
#include "qmem/nonmarkov.hpp"
#include "qmem/simulator.hpp"

using namespace qmem;

namespace {

std::vector<GateLabel> single_qubit_set() {
  std::vector<GateLabel> g;
  for (GateName n : {GateName::H, GateName::S, GateName::T, GateName::X, GateName::Y, GateName::Z}) g.emplace_back(n);
  return g;
}

ChannelTable exact_table(const SEModel& model, std::span<const GateLabel> gates) {
  ChannelTable t;
  for (const auto& u : gates)
    for (const auto& v : gates) {
      const int n = std::max(u.min_qubits(), v.min_qubits());
      t.add(GateSequence{u}, extract_channel(model, {u}, n));
      t.add(GateSequence{u, v}, extract_channel(model, {u, v}, n));
    }
  return t;
}

QuantumChannel mix(const QuantumChannel& a, const QuantumChannel& b, double p) {
  return QuantumChannel(p * a.superop() + (1 - p) * b.superop());
}

}  // namespace

TEST(ConditionalMap, MarkovianCompositionGivesTarget) {
  Rng rng(1);
  for (int t = 0; t < 10; ++t) {
    const auto u = random_channel(2, rng), v = random_channel(2, rng);
    const auto cm = conditional_map(compose(v, u), u, GateLabel(GateName::X), GateLabel(GateName::Z));
    EXPECT_LE(max_abs(cm.channel.superop() - v.superop()), 1e-10 * std::max(1.0, cm.cond_number));
    EXPECT_LE((compose(cm.channel, u).superop() - compose(v, u).superop()).norm(), 1e-8 * cm.cond_number);
  }
}

TEST(ConditionalMap, UnitaryAlgebra) {
  const GateLabel x(GateName::X), z(GateName::Z);
  const auto cm = conditional_map(ideal_channel(GateSequence{x, z}), ideal_channel(x), x, z);
  EXPECT_LE(max_abs(cm.channel.superop() - ideal_channel(z).superop()), 1e-12);
  EXPECT_NEAR(cm.cond_number, 1.0, 1e-12);
  EXPECT_THROW(conditional_map(ideal_channel(x), completely_depolarizing(2), x, z), SingularChannelError);
}

TEST(CpViolation, Examples) {
  EXPECT_EQ(cp_violation(identity_channel(2)), 0.0);
  // Choi of the transpose is SWAP / 2 in trace-1 form: eigenvalues 1/2, 1/2, 1/2, -1/2.
  const auto ev = oracle::spectrum(normalized(choi_from_superop(transpose_map(2)), ChoiNormalization::trace_1).data);
  EXPECT_NEAR(ev[0], -0.5, 1e-12);
  EXPECT_NEAR(cp_violation(transpose_map(2)), 1.0, 1e-12);
  Rng rng(2);
  for (int t = 0; t < 50; ++t) EXPECT_LE(cp_violation(random_channel(t % 2 ? 2 : 4, rng)), 1e-9);
}

TEST(CpViolation, ZeroExactlyWhenChoiPsd) {
  Rng rng(3);
  const auto dep = completely_depolarizing(2);
  for (double p : {0.0, 0.2, 1.0 / 3.0 - 1e-6, 1.0 / 3.0 + 1e-3, 0.5, 0.9}) {
    const auto m = mix(transpose_map(2), dep, p);
    const double lmin = eigvalsh(choi_from_superop(m).data).minCoeff();
    const double v = cp_violation(m);
    EXPECT_EQ(v > 0.0, lmin < -1e-10) << p;
    EXPECT_GE(v, 0.0);
  }
  for (int t = 0; t < 10; ++t) {
    const auto c = mix(random_unitary_channel(2, rng), transpose_map(2), 0.3);
    const double lmin = eigvalsh(choi_from_superop(c).data).minCoeff();
    EXPECT_EQ(cp_violation(c) > 0.0, lmin < -1e-10);
  }
}

TEST(AverageDistance, IdenticalIsZero) {
  Rng rng(4);
  const auto c = random_channel(2, rng);
  const auto r = avg_trace_distance(c, c, 1000, rng);
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_EQ(r.samples.size(), 1000u);
  EXPECT_EQ(kDefaultSamples, 100000);
  EXPECT_THROW(avg_trace_distance(c, identity_channel(4), 10, rng), DimensionError);
}

TEST(AverageDistance, IdentityVersusXAgainstMonteCarloOracle) {
  // D(rho, X rho X) = sqrt(y^2 + z^2) on the Bloch sphere; its Haar mean is pi/4.
  Rng rng(5);
  const auto a = identity_channel(2), b = ideal_channel(GateLabel(GateName::X));
  const auto r = avg_trace_distance(a, b, kDefaultSamples, rng);
  const auto o = oracle::avg_distance_mc(a, b, 1000000, 77);
  const double se = std::hypot(r.std_error, o.std_error);
  EXPECT_NEAR(r.mean, o.mean, 3 * se);
  EXPECT_NEAR(o.mean, std::numbers::pi / 4, 3 * o.std_error);
  EXPECT_NEAR(r.mean, std::numbers::pi / 4, 3 * r.std_error);
}

TEST(AverageDistance, BelowDiamond) {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const auto a = random_channel(2, rng), b = random_channel(2, rng, 2);
    const auto avg = avg_trace_distance(a, b, 20000, rng);
    EXPECT_GE(diamond_distance(a, b).value, avg.mean - (1e-6 + 3 * avg.std_error));
  }
}

TEST(GateDependence, ClockModelVanishes) {
  // Phi_VU = Phi_V o Phi_2 o Phi_U with one fixed Phi_2.
  Rng rng(7);
  const auto phi2 = random_channel(2, rng);
  const auto gates = single_qubit_set();
  const GateLabel v(GateName::Z);
  std::map<GateLabel, ConditionalMap> cms;
  for (const auto& u : gates) {
    const auto pu = compose(random_unitary_channel(2, rng), random_channel(2, rng, 1));
    const auto pv = ideal_channel(v);
    cms.emplace(u, conditional_map(compose(pv, compose(phi2, pu)), pu, u, v));
  }
  DistanceOptions opt;
  opt.samples = 5000;
  for (Metric m : {Metric::avg_trace, Metric::diamond}) {
    const auto dm = gate_dependence_matrix(cms, m, opt);
    EXPECT_LE(dm.values.cwiseAbs().maxCoeff(), 1e-8) << metric_name(m);
  }
}

TEST(GateDependence, SymmetricWithZeroDiagonal) {
  ModelSpec s;
  s.coupling = 0.4;
  const SEModel model(s);
  const auto gates = single_qubit_set();
  DistanceOptions opt;
  opt.samples = 5000;
  const auto all = gate_dependence_matrices(exact_table(model, gates), gates, Metric::avg_trace, opt);
  ASSERT_EQ(all.size(), gates.size());
  for (const auto& [v, dm] : all) {
    EXPECT_LE((dm.values - dm.values.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(dm.values.diagonal().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(dm.values.minCoeff(), -1e-9);
  }
  // memory makes the conditionals gate dependent
  EXPECT_GT(all.at(GateLabel(GateName::Z)).values.maxCoeff(), 1e-2);
  std::map<GateLabel, ConditionalMap> one;
  one.emplace(gates[0], conditional_map(identity_channel(2), identity_channel(2), gates[0], gates[1]));
  EXPECT_THROW(gate_dependence_matrix(one, Metric::avg_trace), DimensionError);
}

TEST(ConditionalVsMarginal, MarkovianZeroAndMissingData) {
  ModelSpec s;
  s.coupling = 0.4;
  const SEModel twin(markovian_twin(s));
  const auto gates = single_qubit_set();
  const auto table = exact_table(twin, gates);
  DistanceOptions opt;
  opt.samples = 2000;
  const auto dm = conditional_vs_marginal_matrix(table, gates, Metric::avg_trace, opt);
  EXPECT_LE(dm.values.cwiseAbs().maxCoeff(), 1e-8);
  const auto dd = conditional_vs_marginal_matrix(table, gates, Metric::diamond, opt);
  EXPECT_LE(dd.values.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(dd.certificates.size(), 36u);

  ChannelTable partial;
  partial.add(GateSequence{gates[0]}, identity_channel(2));
  try {
    conditional_vs_marginal_matrix(partial, gates, Metric::avg_trace, opt);
    FAIL() << "expected IncompleteDataError";
  } catch (const IncompleteDataError& e) {
    EXPECT_FALSE(e.missing().empty());
  }
}

TEST(ConditionalVsMarginal, PersistentColumnsDependOnU) {
  ModelSpec s;
  s.coupling = 0.4;
  const SEModel model(s);
  const auto gates = single_qubit_set();
  DistanceOptions opt;
  opt.samples = 20000;
  const auto dm = conditional_vs_marginal_matrix(exact_table(model, gates), gates, Metric::avg_trace, opt);
  for (Eigen::Index j = 0; j < dm.values.cols(); ++j)
    EXPECT_GT(dm.values.col(j).maxCoeff() - dm.values.col(j).minCoeff(), 1e-3) << dm.col_labels[j];
}

TEST(ConditionalVsMarginal, PersistentAboveShotFloor) {
  // Floor: distance between two independent 1e5-shot reconstructions of one channel.
  ModelSpec s;
  s.coupling = 0.4;
  const SEModel model(s);
  const auto frame = build_frame(1);
  const GateLabel x(GateName::X), z(GateName::Z);
  std::vector<double> null;
  for (int r = 0; r < 5; ++r) {
    const auto a = reconstruct_channel(simulate_records(model, {x}, frame, 100000, 2 * r + 1), frame).channel;
    const auto b = reconstruct_channel(simulate_records(model, {x}, frame, 100000, 2 * r + 2), frame).channel;
    Rng rng(r);
    null.push_back(avg_trace_distance(a, b, 20000, rng).mean);
  }
  const auto floor = statistical_floor(null);
  const auto cm = conditional_map(extract_channel(model, {x, z}), extract_channel(model, {x}), x, z);
  Rng rng(9);
  EXPECT_GT(avg_trace_distance(cm.channel, extract_channel(model, {z}), 20000, rng).mean, 10 * floor.floor);
}

TEST(Scaling, FlagsApplyExactFactors) {
  ModelSpec s;
  s.coupling = 0.3;
  const SEModel model(s);
  const std::vector<GateLabel> gates{GateLabel(GateName::X), GateLabel(GateName::CX)};
  const auto table = exact_table(model, gates);
  DistanceOptions plain;
  plain.samples = 2000;
  DistanceOptions scaled = plain;
  scaled.scaling = {true, true};
  for (Metric m : {Metric::avg_trace, Metric::diamond}) {
    const auto a = conditional_vs_marginal_matrix(table, gates, m, plain);
    const auto b = conditional_vs_marginal_matrix(table, gates, m, scaled);
    for (Eigen::Index i = 0; i < 2; ++i)
      for (Eigen::Index j = 0; j < 2; ++j) {
        const int d = i == 1 || j == 1 ? 4 : 2;
        double f = m == Metric::diamond ? 1.0 / d : 1.0;
        if (j == 1) f *= 2.0;
        EXPECT_DOUBLE_EQ(b.values(i, j), a.values(i, j) * f) << metric_name(m) << i << j;
      }
  }
}

TEST(MemoryScan, DivisibleFamilyIsZero) {
  Rng rng(10);
  const auto phi = random_channel(2, rng, 2);
  std::vector<QuantumChannel> family{phi};
  for (int n = 2; n <= kDefaultScanLength; ++n) family.push_back(compose(phi, family.back()));
  DistanceOptions opt;
  opt.samples = 500;
  const auto scan = memory_scan(family, true, true, opt);
  EXPECT_EQ(scan.n_max, 15);
  EXPECT_EQ(scan.entries.size(), 105u);
  for (const auto& [key, e] : scan.entries) {
    EXPECT_LT(key.second, key.first);
    ASSERT_TRUE(e.diamond && e.avg);
    EXPECT_LE(*e.diamond, 1e-8);
    EXPECT_LE(*e.avg, 1e-8);
  }
  EXPECT_THROW(memory_scan(std::span(family).first(1), true, true), DimensionError);
}

TEST(MemoryScan, PersistentLagModelIsNotDivisible) {
  const int lag = 4;
  const SEModel model(lag_model(lag, 0.2, 1));
  std::vector<QuantumChannel> ch;
  GateSequence seq;
  for (int n = 1; n <= 8; ++n) {
    seq.push_back(GateLabel(GateName::X));
    ch.push_back(extract_channel(model, seq));
  }
  DistanceOptions opt;
  opt.samples = 2000;
  const auto scan = memory_scan(ch, false, true, opt);
  double total = 0.0;
  for (const auto& [key, e] : scan.entries) total += *e.avg;
  EXPECT_GT(total, 1e-2);
}

TEST(Floor, MeanPlusThreeSigma) {
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto f = statistical_floor(v);
  EXPECT_DOUBLE_EQ(f.mean, 2.0);
  EXPECT_DOUBLE_EQ(f.std, 1.0);
  EXPECT_DOUBLE_EQ(f.floor, 5.0);
  EXPECT_THROW(statistical_floor(std::vector<double>{}), DimensionError);
}

TEST(ProcessTensor, ProxyExamples) {
  Rng rng(11);
  const auto u = random_channel(2, rng), v = random_channel(2, rng);
  const auto ref = markovian_reference(u, v);
  EXPECT_EQ(ref.dim(), 16);
  EXPECT_NEAR(process_tensor_proxy(ref, ref), 0.0, 1e-9);

  // rank-one reference with no regularization cannot contain an orthogonal state
  const auto x = ideal_channel(GateLabel(GateName::X));
  const auto pure_ref = markovian_reference(identity_channel(2), identity_channel(2));
  const auto other = markovian_reference(x, identity_channel(2));
  try {
    process_tensor_proxy(other, pure_ref, 0.0);
    FAIL() << "expected SupportError";
  } catch (const SupportError& e) {
    EXPECT_NE(std::string(e.what()).find("regularization"), std::string::npos);
  }
  EXPECT_GT(process_tensor_proxy(other, pure_ref), 10.0);
}
