#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qmem/nonmarkov.hpp"
#include "qmem/simulator.hpp"

using namespace qmem;

namespace {

const GateLabel kX(GateName::X), kZ(GateName::Z), kH(GateName::H), kT(GateName::T);

ModelSpec coupled(double g, ResetPolicy p = ResetPolicy::persistent) {
  ModelSpec s;
  s.coupling = g;
  s.env_frequency = 0.3;
  s.reset = p;
  return s;
}

Matrix bell_projector() {
  Vector v = Vector::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return v * v.adjoint();
}

}  // namespace

TEST(SEModelType, Validation) {
  ModelSpec s;
  s.sys_qubits = 0;
  EXPECT_THROW(SEModel{s}, DimensionError);
  s = ModelSpec{};
  s.env_dim = 1;
  EXPECT_THROW(SEModel{s}, DimensionError);
  s = ModelSpec{};
  s.spam.prep_strength = -1e-3;
  EXPECT_THROW(SEModel{s}, InvalidStateError);
  s = ModelSpec{};
  s.durations.erase(GateName::T);
  EXPECT_THROW(SEModel{s}, InvalidStateError);
  EXPECT_EQ(parse_reset_policy("reset_each_gate"), ResetPolicy::reset_each_gate);
  EXPECT_THROW(parse_reset_policy("sometimes"), LabelError);
}

TEST(SEModelType, JointStepsUnitary) {
  for (int e : {2, 3}) {
    ModelSpec s = coupled(0.7);
    s.env_dim = e;
    s.sys_qubits = 2;
    const SEModel m(s);
    const Vector plus = Vector::Constant(e, 1.0 / std::sqrt(static_cast<double>(e)));
    EXPECT_LE(max_abs(m.env_initial() - plus * plus.adjoint()), 1e-15);
    for (GateName g : kAllGateNames) {
      const Matrix u = m.joint_unitary(GateLabel(g), 2);
      EXPECT_LE(max_abs(u * u.adjoint() - Matrix::Identity(u.rows(), u.rows())), 1e-12);
    }
  }
}

TEST(RunSequence, DecoupledMatchesIdealComposition) {
  Rng rng(1);
  for (ResetPolicy p : {ResetPolicy::persistent, ResetPolicy::reset_each_gate}) {
    ModelSpec s;
    s.reset = p;
    const SEModel m(s);
    const GateSequence seq{kH, kT, kX, kZ};
    const auto rho = random_density(2, rng);
    const Matrix want = apply_raw(ideal_channel(seq), rho.matrix());
    EXPECT_LE(max_abs(run_sequence(m, seq, rho).matrix() - want), 1e-12);
  }
}

TEST(RunSequence, ResetFactorizesAndPersistentDoesNot) {
  Rng rng(2);
  const SEModel reset(coupled(0.5, ResetPolicy::reset_each_gate));
  const SEModel persist(coupled(0.5));
  double worst_reset = 0.0, best_persist = 1.0;
  for (int t = 0; t < 10; ++t) {
    const auto rho = random_density(2, rng);
    const auto r1 = compose(extract_channel(reset, {kZ}), extract_channel(reset, {kX}));
    worst_reset = std::max(worst_reset, max_abs(run_sequence(reset, {kX, kZ}, rho).matrix() - apply_raw(r1, rho.matrix())));
    const auto p1 = compose(extract_channel(persist, {kZ}), extract_channel(persist, {kX}));
    const DensityMatrix split(hermitian_part(apply_raw(p1, rho.matrix())));
    best_persist = std::min(best_persist, trace_distance(run_sequence(persist, {kX, kZ}, rho), split));
  }
  EXPECT_LE(worst_reset, 1e-10);
  EXPECT_GT(best_persist, 0.0);
  Vector plus(2);
  plus << 1, 1;
  const DensityMatrix p0(PureState(plus / std::sqrt(2.0)));
  const auto split = compose(extract_channel(persist, {kZ}), extract_channel(persist, {kX}));
  EXPECT_GT(trace_distance(run_sequence(persist, {kX, kZ}, p0), DensityMatrix(hermitian_part(apply_raw(split, p0.matrix())))),
            1e-3);
}

TEST(ExtractChannel, Examples) {
  const SEModel m(coupled(0.4));
  EXPECT_LE(max_abs(extract_channel(m, {}).superop() - Matrix::Identity(4, 4)), 1e-12);
  const SEModel free_model(ModelSpec{});
  for (GateName g : kAllGateNames)
    EXPECT_LE(max_abs(extract_channel(free_model, {GateLabel(g)}).superop() - ideal_channel(GateLabel(g)).superop()),
              1e-12);
}

TEST(ExtractChannel, ConsistentWithRunSequenceAndCptp) {
  Rng rng(3);
  ModelSpec s = coupled(0.6);
  s.sys_qubits = 2;
  const SEModel m(s);
  const GateSequence seq{GateLabel(GateName::CX), kH, GateLabel(GateName::T, {1})};
  const auto c = extract_channel(m, seq);
  for (int t = 0; t < 20; ++t) {
    const auto rho = random_density(4, rng);
    EXPECT_LE(max_abs(apply_raw(c, rho.matrix()) - run_sequence(m, seq, rho).matrix()), 1e-10);
  }
  const auto st = channel_structure(c);
  EXPECT_GE(st.min_choi_eigenvalue, -1e-12);
  EXPECT_LE(st.tp_deviation, 1e-12);
  EXPECT_EQ(c.provenance(), "CX,H,T@1");
}

TEST(SampleCounts, ExactModeMatchesExpectedDistribution) {
  const SEModel m(coupled(0.4));
  const auto frame = build_frame(1);
  const auto chan = extract_channel(m, {kH});
  for (const auto& c : enumerate_circuits({kH}, frame)) {
    const auto r = sample_counts(m, c, frame, std::nullopt, 0);
    EXPECT_TRUE(r.exact());
    const auto p = expected_distribution(apply_raw(chan, frame.preparations()[frame.prep_index(c.prep_label)].matrix()),
                                         c.meas_label);
    EXPECT_NEAR(r.counts.at("0"), p[0], 1e-12);
    EXPECT_NEAR(r.counts.at("1"), p[1], 1e-12);
  }
}

TEST(SampleCounts, BinomialConcentrationAndSeeds) {
  ModelSpec s = coupled(0.4);
  s.sys_qubits = 2;
  const SEModel m(s);
  const auto frame = build_frame(2);
  const auto circuits = enumerate_circuits({GateLabel(GateName::CX)}, frame);
  const std::uint64_t n = 100000;
  for (std::size_t k = 0; k < circuits.size(); k += 7) {
    const auto exact = sample_counts(m, circuits[k], frame, std::nullopt, 0);
    const auto r = sample_counts(m, circuits[k], frame, n, 1234 + k);
    EXPECT_EQ(*r.seed, 1234 + k);
    EXPECT_DOUBLE_EQ(r.total(), static_cast<double>(n));
    for (const auto& [bits, p] : exact.counts) EXPECT_LE(std::abs(r.counts.at(bits) / n - p), 5.0 / std::sqrt(n));
    const auto again = sample_counts(m, circuits[k], frame, n, 1234 + k);
    EXPECT_EQ(again.counts, r.counts);
  }
  const auto a = simulate_records(m, {GateLabel(GateName::CX)}, frame, 1000, 5);
  const auto b = simulate_records(m, {GateLabel(GateName::CX)}, frame, 1000, 5);
  ASSERT_EQ(a.size(), 144u);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].counts, b[k].counts);
}

TEST(Spam, ZeroStrengthIsBitIdentical) {
  ModelSpec plain = coupled(0.4);
  ModelSpec zero = plain;
  zero.spam.seed = 99;
  const SEModel a(plain), b(zero);
  EXPECT_FALSE(b.spam_kick("prep", "Z+", 1).has_value());
  const auto frame = build_frame(1);
  const auto ra = simulate_records(a, {kX}, frame, std::nullopt, 3);
  const auto rb = simulate_records(b, {kX}, frame, std::nullopt, 3);
  for (std::size_t k = 0; k < ra.size(); ++k) EXPECT_EQ(ra[k].counts, rb[k].counts);
}

TEST(Spam, KicksAreFixedPerLabelAndSmall) {
  ModelSpec s;
  s.spam = {1e-3, 2e-3, 7};
  const SEModel m(s);
  const auto k1 = m.spam_kick("prep", "X+", 1), k2 = m.spam_kick("prep", "X+", 1), k3 = m.spam_kick("meas", "X", 1);
  ASSERT_TRUE(k1 && k2 && k3);
  EXPECT_EQ(*k1, *k2);
  EXPECT_NEAR((*k1 - Matrix::Identity(2, 2)).norm(), 1e-3, 1e-6);
  EXPECT_NEAR((*k3 - Matrix::Identity(2, 2)).norm(), 2e-3, 1e-6);
}

TEST(Cji, IdealGivesTwoBellPairs) {
  const SEModel m(ModelSpec{});
  const Matrix zz = kron(Matrix::Identity(2, 2), gate_unitary(kZ, 1));
  const Matrix pair = zz * bell_projector() * zz.adjoint();
  EXPECT_LE(max_abs(cji_circuit(m, kZ, kZ).matrix() - kron(pair, pair)), 1e-12);
  const Matrix hx = kron(Matrix::Identity(2, 2), gate_unitary(kH, 1));
  const Matrix xx = kron(Matrix::Identity(2, 2), gate_unitary(kX, 1));
  EXPECT_LE(max_abs(cji_circuit(m, kH, kX).matrix() -
                    kron(Matrix(hx * bell_projector() * hx.adjoint()), Matrix(xx * bell_projector() * xx.adjoint()))),
            1e-12);
  EXPECT_THROW(cji_circuit(m, GateLabel(GateName::CX), kZ), LabelError);
}

TEST(Cji, MarkovianIsProductOfChoiStates) {
  const SEModel m(markovian_twin(coupled(0.5)));
  for (auto [u, v] : std::vector<std::pair<GateLabel, GateLabel>>{{kX, kZ}, {kH, kT}, {kT, kT}}) {
    const auto st = cji_circuit(m, u, v);
    const auto ref = markovian_reference(extract_channel(m, {u}), extract_channel(m, {v}));
    EXPECT_LE(max_abs(st.matrix() - ref.matrix()), 1e-8);
    EXPECT_LE(process_tensor_proxy(st, ref), 1e-6);
  }
}

TEST(Cji, PersistentDeviatesFromProduct) {
  const SEModel m(coupled(0.5));
  const auto st = cji_circuit(m, kX, kZ);
  const auto ref = markovian_reference(extract_channel(m, {kX}), extract_channel(m, {kZ}));
  EXPECT_GT(process_tensor_proxy(st, ref), 1e-3);
}

TEST(Twin, MarkovianNullInExactMode) {
  const SEModel m(markovian_twin(coupled(0.6)));
  const std::vector<GateLabel> gates{kH, kT, kX, kZ};
  for (const auto& u : gates)
    for (const auto& v : gates) {
      const auto cm = conditional_map(extract_channel(m, {u, v}), extract_channel(m, {u}), u, v);
      EXPECT_LE(cp_violation(cm), 1e-8);
      Rng rng(1);
      EXPECT_LE(avg_trace_distance(cm.channel, extract_channel(m, {v}), 1000, rng).mean, 1e-8);
    }
}

TEST(Twin, DetectionGrowsWithCoupling) {
  const std::vector<GateLabel> gates{kH, GateLabel(GateName::S), kT, kX, GateLabel(GateName::Y), kZ};
  double prev = -1.0;
  for (double g : {0.0, 0.1, 0.2, 0.3, 0.4}) {
    ModelSpec s;
    s.coupling = g;
    const SEModel m(s);
    double mean = 0.0;
    for (const auto& u : gates)
      for (const auto& v : gates)
        mean += cp_violation(conditional_map(extract_channel(m, {u, v}), extract_channel(m, {u}), u, v));
    mean /= 36.0;
    EXPECT_GE(mean, prev) << g;
    prev = mean;
  }
  EXPECT_GT(prev, 0.1);
}

TEST(LagModel, Parameters) {
  const auto s = lag_model(8, 0.2);
  EXPECT_EQ(s.sys_qubits, 2);
  EXPECT_EQ(s.reset, ResetPolicy::persistent);
  EXPECT_NEAR(s.env_frequency * 8 * s.durations.at(GateName::CX), std::numbers::pi, 1e-12);
  EXPECT_EQ(markovian_twin(s).reset, ResetPolicy::reset_each_gate);
  EXPECT_THROW(lag_model(0, 0.2), DimensionError);
}
