#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "qmem/errprop.hpp"
#include "qmem/simulator.hpp"
#include "qmem/tomography.hpp"

using namespace qmem;

namespace {

std::vector<CountRecord> records_for_prep(const std::vector<CountRecord>& all, const std::string& prep) {
  std::vector<CountRecord> out;
  for (const auto& r : all)
    if (r.prep == prep) out.push_back(r);
  return out;
}

// Counts (or probabilities) for a single state measured in every setting.
std::vector<CountRecord> state_records(const DensityMatrix& rho, const TomographyFrame& frame,
                                       std::optional<std::uint64_t> shots, std::uint64_t seed) {
  std::vector<CountRecord> exact;
  for (const auto& m : frame.meas_settings()) {
    CountRecord r{frame.prep_labels()[0], m, {}, std::nullopt, std::nullopt};
    const auto p = expected_distribution(rho, m);
    for (std::size_t k = 0; k < p.size(); ++k) r.counts[bitstring(static_cast<int>(k), frame.n_qubits())] = p[k];
    exact.push_back(r);
  }
  if (!shots) return exact;
  return oracle::resample(exact, *shots, seed);
}

}  // namespace

TEST(Frame, ConfigurationCounts) {
  const auto f1 = build_frame(1), f2 = build_frame(2);
  EXPECT_EQ(f1.prep_labels().size() * f1.meas_settings().size(), 12u);
  EXPECT_EQ(f2.prep_labels().size(), 16u);
  EXPECT_EQ(f2.meas_settings().size(), 9u);
  EXPECT_EQ(f2.prep_labels().size() * f2.meas_settings().size(), 144u);
  EXPECT_THROW(build_frame(3), DimensionError);
  EXPECT_THROW(build_frame(0), DimensionError);
}

TEST(Frame, DualityOnFullGram) {
  for (int n : {1, 2}) {
    const auto f = build_frame(n);
    const auto& p = f.preparations();
    const auto& d = f.duals();
    for (std::size_t i = 0; i < d.size(); ++i)
      for (std::size_t j = 0; j < p.size(); ++j) {
        const cplx v = (d[i].adjoint() * p[j].matrix()).trace();
        EXPECT_NEAR(std::abs(v - cplx(i == j ? 1.0 : 0.0)), 0.0, 1e-12) << n << " " << i << " " << j;
      }
    EXPECT_LT(f.gram_condition(), 1e6);
  }
}

TEST(ExpectedDistribution, Examples) {
  Vector plus(2);
  plus << 1, 1;
  const DensityMatrix p(PureState(plus / std::sqrt(2.0)));
  const auto a = expected_distribution(p, "X");
  EXPECT_NEAR(a[0], 1.0, 1e-12);
  EXPECT_NEAR(a[1], 0.0, 1e-12);
  const auto b = expected_distribution(DensityMatrix::basis(2, 0), "X");
  EXPECT_NEAR(b[0], 0.5, 1e-12);
  EXPECT_NEAR(b[1], 0.5, 1e-12);
  EXPECT_THROW(expected_distribution(p, "Q"), LabelError);
}

TEST(ExpectedDistribution, ReproducesPauliExpectations) {
  Rng rng(12);
  const auto frame = build_frame(2);
  for (int t = 0; t < 10; ++t) {
    const auto rho = random_density(4, rng);
    for (const auto& m : frame.meas_settings()) {
      const auto p = expected_distribution(rho, m);
      double sum = 0.0, parity = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        EXPECT_GE(p[k], -1e-15);
        sum += p[k];
        const std::string bits = bitstring(static_cast<int>(k), 2);
        const int ones = static_cast<int>(std::count(bits.begin(), bits.end(), '1'));
        parity += (ones % 2 ? -1.0 : 1.0) * p[k];
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      EXPECT_NEAR(parity, oracle::pauli_expectation(rho.matrix(), m), 1e-12) << m;
    }
  }
}

TEST(Mle, ExactPureFixedPoint) {
  const auto frame = build_frame(1);
  const auto rec = state_records(DensityMatrix::basis(2, 0), frame, std::nullopt, 0);
  const auto res = mle_state(rec, frame);
  EXPECT_LE(max_abs(res.state.matrix() - DensityMatrix::basis(2, 0).matrix()), 1e-8);
}

TEST(Mle, FiniteShotAccuracy) {
  Rng rng(21);
  const auto frame = build_frame(1);
  for (int t = 0; t < 10; ++t) {
    const auto truth = random_density(2, rng);
    const auto rec = state_records(truth, frame, 100000, 100 + t);
    const auto res = mle_state(rec, frame);
    EXPECT_LE(trace_distance(res.state, truth), 1e-2);
    EXPECT_GE(res.loglik, oracle::loglik(rec, truth.matrix()) - 1e-9);
  }
}

TEST(Mle, NonPhysicalLinearEstimateGivesClosestState) {
  // <X> = <Y> = <Z> = 0.9: the linear-inversion Bloch vector has length 1.56.
  const auto frame = build_frame(1);
  std::vector<CountRecord> rec;
  for (const auto& m : frame.meas_settings())
    rec.push_back({frame.prep_labels()[0], m, {{"0", 0.95}, {"1", 0.05}}, std::nullopt, std::nullopt});
  const Matrix linear = (Matrix::Identity(2, 2) + 0.9 * (Matrix{{0, 1}, {1, 0}} + Matrix{{0, cplx(0, -1)}, {cplx(0, 1), 0}} +
                                                         Matrix{{1, 0}, {0, -1}})) / 2.0;
  ASSERT_LT(eigvalsh(linear).minCoeff(), -0.1);
  const auto res = mle_state(rec, frame);
  EXPECT_GE(eigvalsh(res.state.matrix()).minCoeff(), -1e-10);
  EXPECT_GT(max_abs(res.state.matrix() - linear), 0.1);
  // symmetric optimum lies on the (1,1,1) axis
  const double x = oracle::pauli_expectation(res.state.matrix(), "X");
  const double y = oracle::pauli_expectation(res.state.matrix(), "Y");
  const double z = oracle::pauli_expectation(res.state.matrix(), "Z");
  EXPECT_NEAR(x, y, 1e-4);
  EXPECT_NEAR(y, z, 1e-4);
  EXPECT_GT(std::sqrt(x * x + y * y + z * z), 0.99);
}

TEST(Mle, RecordOrderInvariance) {
  Rng rng(31);
  const auto frame = build_frame(2);
  const auto truth = random_density(4, rng);
  auto rec = state_records(truth, frame, 2000, 9);
  const auto a = mle_state(rec, frame);
  std::mt19937 shuf(4);
  std::shuffle(rec.begin(), rec.end(), shuf);
  const auto b = mle_state(rec, frame);
  EXPECT_LE(max_abs(a.state.matrix() - b.state.matrix()), 1e-8);
}

TEST(Mle, MissingSetting) {
  const auto frame = build_frame(1);
  auto rec = state_records(DensityMatrix::basis(2, 0), frame, std::nullopt, 0);
  rec.pop_back();
  EXPECT_THROW(mle_state(rec, frame), IncompleteDataError);
}

TEST(Mle, ErrorShrinksAsInverseRootShots) {
  Rng rng(41);
  const auto frame = build_frame(1);
  std::vector<DensityMatrix> states;
  for (int t = 0; t < 30; ++t) states.push_back(random_density(2, rng));
  std::vector<double> lx, ly;
  for (std::uint64_t n : {100ull, 1000ull, 10000ull, 100000ull}) {
    double err = 0.0;
    for (std::size_t t = 0; t < states.size(); ++t)
      err += trace_distance(mle_state(state_records(states[t], frame, n, 1000 * t + n), frame).state, states[t]);
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(err / states.size()));
  }
  const auto fit = linear_fit(lx, ly);
  EXPECT_NEAR(fit[0], -0.5, 0.1);
}

TEST(ProcessTomography, IdentityAndX) {
  const auto frame = build_frame(1);
  std::map<std::string, DensityMatrix> same;
  for (std::size_t i = 0; i < frame.prep_labels().size(); ++i) same.emplace(frame.prep_labels()[i], frame.preparations()[i]);
  EXPECT_LE(max_abs(process_tomography(same, frame).superop() - Matrix::Identity(4, 4)), 1e-12);

  const auto x = ideal_channel(GateLabel(GateName::X));
  const auto rec = reconstruct_channel(exact_records(x, frame), frame);
  EXPECT_LE(max_abs(rec.channel.superop() - x.superop()), 1e-12);

  same.erase(frame.prep_labels()[2]);
  EXPECT_THROW(process_tomography(same, frame), IncompleteDataError);
}

TEST(ProcessTomography, RandomChannelRoundTrip) {
  std::mt19937 gen(5);
  for (int n : {1, 2}) {
    const auto frame = build_frame(n);
    for (int t = 0; t < (n == 1 ? 20 : 3); ++t) {
      const auto c = oracle::stinespring_channel(qubit_dim(n), 2 + t % 3, gen);
      const auto rec = reconstruct_channel(exact_records(c, frame), frame);
      EXPECT_LE((rec.channel.superop() - c.superop()).norm(), n == 1 ? 1e-10 : 1e-8);
    }
  }
}

TEST(ProcessTomography, ReportsMissingConfiguration) {
  const auto frame = build_frame(1);
  auto rec = exact_records(identity_channel(2), frame);
  rec.erase(rec.begin() + 4);
  try {
    reconstruct_channel(rec, frame);
    FAIL() << "expected IncompleteDataError";
  } catch (const IncompleteDataError& e) {
    ASSERT_EQ(e.missing().size(), 1u);
    EXPECT_EQ(e.missing()[0], frame.prep_labels()[1] + "/" + frame.meas_settings()[1]);
  }
}

TEST(ProcessTomography, FiniteShotsKeepNonCpStructure) {
  // No CP projection: a unitary channel reconstructed from counts has a
  // slightly negative Choi eigenvalue but stays close to trace preserving.
  const auto frame = build_frame(1);
  const auto x = ideal_channel(GateLabel(GateName::H));
  const auto rec = reconstruct_channel(oracle::resample(exact_records(x, frame), 1000, 3), frame).channel;
  const auto st = channel_structure(rec);
  EXPECT_LT(st.min_choi_eigenvalue, -1e-6);
  EXPECT_LE(st.tp_deviation, 3 * 3.0 / std::sqrt(1000.0));
}

TEST(Circuits, EnumerationShape) {
  const auto f1 = build_frame(1);
  const auto c1 = enumerate_circuits({GateLabel(GateName::T)}, f1);
  ASSERT_EQ(c1.size(), 12u);
  EXPECT_EQ(enumerate_circuits({GateLabel(GateName::CX)}, build_frame(2)).size(), 144u);
  EXPECT_THROW(enumerate_circuits({GateLabel(GateName::CX)}, f1), LabelError);
  for (const auto& c : c1) {
    if (c.prep_label == "Z-") {
      ASSERT_EQ(c.prep_ops.size(), 1u);
      EXPECT_EQ(c.prep_ops[0].name(), GateName::X);
    }
    if (c.meas_label == "X") {
      ASSERT_EQ(c.meas_ops.size(), 1u);
      EXPECT_EQ(c.meas_ops[0].name(), GateName::H);
    }
    // descriptors reproduce the frame preparations
    const Vector zero = Vector::Unit(2, 0);
    const Matrix u = sequence_unitary(c.prep_ops, 1);
    const Matrix prepared = u * zero * zero.adjoint() * u.adjoint();
    EXPECT_LE(max_abs(prepared - f1.preparations()[f1.prep_index(c.prep_label)].matrix()), 1e-12);
  }
}

TEST(Records, Validation) {
  CountRecord r{"Z+", "X", {{"0", 10}, {"1", 5}}, 16, 1};
  EXPECT_THROW(validate_record(r, 1), InvalidStateError);
  r.shots = 15;
  EXPECT_NO_THROW(validate_record(r, 1));
  r.counts["01"] = 0;
  EXPECT_THROW(validate_record(r, 1), LabelError);
}
