#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "qmeas/measurement.hpp"
#include "support.hpp"

namespace qmeas {
namespace {

using testing::Rng;

cvec basis(int index) { return cvec::Unit(2, index); }

double phase_free_distance(const cvec& a, const cvec& b) {
  return std::sqrt(std::max(0.0, 1.0 - std::norm(a.dot(b))));
}

MeasurementModel model_of(const KrausInstrument& t, const cvec& psi) {
  return MeasurementModel(testing::qsr_of(t), psi);
}

// Two channels via the Fourier-density construction on a 2-outcome realization.
MeasurementModel two_channel_model(Rng& rng) {
  const auto g = testing::rank_one_mixed(rng, 2, 2);
  const auto f = factorize(product_density_realization(g));
  return MeasurementModel(std::get<QuantumStochasticRep>(f), testing::random_unit_vector(rng, 2));
}

TEST(OutputLaw, FixtureValues) {
  const auto z = output_law(model_of(testing::fix_z(), testing::psi_plus())).total;
  EXPECT_NEAR(z(0), 0.5, 1e-15);
  EXPECT_NEAR(z(1), 0.5, 1e-15);
  const auto ad = output_law(model_of(testing::fix_ad(), basis(1))).total;
  EXPECT_NEAR(ad(0), 0.5, 1e-14);
  EXPECT_NEAR(ad(1), 0.5, 1e-14);
  EXPECT_NEAR(output_law(model_of(testing::fix_iso(), testing::psi_plus())).total(0), 1.0, 1e-14);
}

TEST(OutputLaw, MatchesInstrumentOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const auto t = testing::random_factorizable_instrument(rng);
    const cvec psi = testing::random_unit_vector(rng, t.dim());
    const MeasurementModel model = model_of(t, psi);
    const auto oracle = outcome_distribution(qsr_instrument(model.qsr()), DensityOperator::pure(psi));
    EXPECT_LT(max_abs_diff(output_law(model).total, oracle.weights()), 1e-10);
    EXPECT_LT(max_abs_diff(output_law(model).total,
                           outcome_distribution(t, DensityOperator::pure(psi)).weights()),
              1e-9);
  }
}

TEST(ChannelWeights, SingleAndTwoChannels) {
  const auto single = model_of(testing::fix_ad(), basis(1));
  EXPECT_NEAR(channel_weights(single, 0)(0), 1.0, 1e-15);
  try {
    channel_weights(model_of(testing::fix_ad(), basis(0)), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroProbabilityEvent);
  }

  Rng rng(2);
  const auto model = two_channel_model(rng);
  ASSERT_EQ(model.qsr().channels(), 2u);
  for (std::size_t a = 0; a < 2; ++a) {
    const rvec w = channel_weights(model, a);
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    EXPECT_GE(w.minCoeff(), 0.0);
  }
}

TEST(ChannelWeights, EqualMassesGiveEqualWeights) {
  // beta = (1/2, 1/2), Pi = I on both channels and atoms, q orthogonal Fourier modes
  const double h = std::sqrt(0.5);
  ChannelTable<cplx> q({1, 1}, {1, 1}, cplx(h));
  q(1, 0, 1, 0) = -h;
  const FiniteMeasure base(testing::labels(2), rvec::Ones(2));
  const auto p = channel_densities(q, base);
  const std::vector<cmat> id(2, cmat::Identity(2, 2));
  const QuantumStochasticRep qsr({{0.5, 1}, {0.5, 1}}, {id, id}, p, 2);
  const MeasurementModel model(qsr, testing::psi_plus());
  const rvec w = channel_weights(model, 0);
  EXPECT_NEAR(w(0), 0.5, 1e-15);
  EXPECT_NEAR(w(1), 0.5, 1e-15);
}

TEST(ChannelWeights, ZeroChannelMassGivesZeroWeight) {
  // channel 0 lives on atom 0 only
  ChannelTable<cplx> q({1, 1}, {1, 1}, cplx(0.0));
  q(0, 0, 0, 0) = 1.0;
  q(1, 0, 1, 0) = 1.0;
  const FiniteMeasure base(testing::labels(2), rvec::Ones(2));
  const std::vector<cmat> id(2, cmat::Identity(2, 2));
  const QuantumStochasticRep qsr({{0.5, 1}, {0.5, 1}}, {id, id}, channel_densities(q, base), 2);
  const MeasurementModel model(qsr, testing::psi_plus());
  const rvec w = channel_weights(model, 1);
  EXPECT_EQ(w(0), 0.0);
  EXPECT_NEAR(w(1), 1.0, 1e-15);
}

TEST(PosteriorPure, FixtureValues) {
  const auto z = model_of(testing::fix_z(), testing::psi_plus());
  EXPECT_LT(phase_free_distance(posterior_pure(z, 0, 0), basis(0)), 1e-12);
  const auto iso = model_of(testing::fix_iso(), testing::psi_plus());
  EXPECT_LT(phase_free_distance(posterior_pure(iso, 0, 0), testing::hadamard() * testing::psi_plus()),
            1e-12);
  const auto ad = model_of(testing::fix_ad(), basis(1));
  EXPECT_LT(phase_free_distance(posterior_pure(ad, 0, 1), basis(0)), 1e-12);
  EXPECT_THROW(posterior_pure(model_of(testing::fix_z(), basis(0)), 0, 1), Error);
}

TEST(PosteriorMixture, FixtureAndOracle) {
  const auto z = model_of(testing::fix_z(), testing::psi_plus());
  cmat minus = cmat::Zero(2, 2);
  minus(1, 1) = 1.0;
  EXPECT_LT(max_abs_diff(posterior_mixture(z, 1).matrix(), minus), 1e-12);

  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto t = testing::random_factorizable_instrument(rng);
    const auto qsr = testing::qsr_of(t);
    const DensityOperator rho(testing::random_density(rng, t.dim()));
    const auto family = posterior_family(t, rho);
    for (std::size_t a = 0; a < t.space().size(); ++a) {
      if (!family.posterior(a)) continue;
      EXPECT_LT(max_abs_diff(posterior_mixture(qsr, a, rho).matrix(), family.posterior(a)->matrix()),
                1e-9);
    }
  }
}

TEST(PosteriorMixture, ConvexCombinationOfChannelPosteriors) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto model = two_channel_model(rng);
    for (std::size_t a = 0; a < 2; ++a) {
      const rvec w = channel_weights(model, a);
      cmat mix = cmat::Zero(2, 2);
      for (std::size_t i = 0; i < 2; ++i) {
        if (w(i) <= 1e-12) continue;
        const cvec post = posterior_pure(model, i, a);
        mix += w(i) * post * post.adjoint();
      }
      EXPECT_LT(max_abs_diff(posterior_mixture(model, a).matrix(), mix), 1e-10);
    }
  }
}

TEST(MeasurementModel, MixedStateAccessors) {
  const auto qsr = testing::qsr_of(testing::fix_ad());
  const MeasurementModel mixed(qsr, DensityOperator(cmat::Identity(2, 2) * 0.5));
  EXPECT_FALSE(mixed.is_pure());
  try {
    mixed.psi();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotPureState);
  }
  EXPECT_TRUE(verify_model(mixed).passed);
  EXPECT_THROW(MeasurementModel(qsr, cvec::Ones(2)), Error);
}

TEST(SampleShot, HadamardIsDeterministic) {
  const auto model = model_of(testing::fix_iso(), basis(0));
  std::mt19937_64 rng(11);
  const cvec expected = testing::hadamard() * basis(0);
  for (int s = 0; s < 100; ++s) {
    const auto shot = sample_shot(model, rng);
    EXPECT_EQ(shot.atom, 0u);
    EXPECT_EQ(shot.channel, 0u);
    EXPECT_LT(phase_free_distance(shot.state, expected), 1e-12);
    EXPECT_NEAR(shot.probability, 1.0, 1e-12);
  }
}

TEST(SampleShot, NeverSelectsZeroMassOutcomes) {
  const auto model = model_of(testing::fix_ad(), basis(0));
  std::mt19937_64 rng(12);
  for (int s = 0; s < 1000; ++s) EXPECT_EQ(sample_shot(model, rng).atom, 0u);
}

TEST(SampleShot, UniformDrawRange) {
  std::mt19937_64 rng(13);
  for (int s = 0; s < 10000; ++s) {
    const double u = uniform_draw(rng);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(SampleShot, JointFrequenciesWithinThreeSigma) {
  Rng setup(5);
  const auto model = two_channel_model(setup);
  const Eigen::MatrixXd joint = joint_law(model);
  const int shots = 100000;
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(joint.rows(), joint.cols());
  std::mt19937_64 rng(14);
  for (int s = 0; s < shots; ++s) {
    const auto shot = sample_shot(model, rng);
    counts(static_cast<Eigen::Index>(shot.atom), static_cast<Eigen::Index>(shot.channel)) += 1.0;
  }
  for (Eigen::Index a = 0; a < joint.rows(); ++a) {
    for (Eigen::Index i = 0; i < joint.cols(); ++i) {
      const double p = joint(a, i);
      const double sigma = std::sqrt(p * (1.0 - p) / shots);
      EXPECT_LE(std::abs(counts(a, i) / shots - p), 3.0 * sigma + 1e-12);
    }
  }
}

TEST(JointLaw, SamplingOrderEquivalence) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = trial % 2 == 0 ? two_channel_model(rng)
                                      : model_of(testing::random_instrument(rng, 2, 3, 1),
                                                 testing::random_unit_vector(rng, 2));
    const Eigen::MatrixXd joint = joint_law(model);
    const OutputLaw law = output_law(model);
    // outcome first, then channel given outcome
    Eigen::MatrixXd outcome_first(joint.rows(), joint.cols());
    for (Eigen::Index a = 0; a < joint.rows(); ++a) {
      const double m = law.total(a);
      const rvec w = m > 1e-12 ? channel_weights(model, static_cast<std::size_t>(a))
                               : rvec::Zero(joint.cols());
      outcome_first.row(a) = m * w.transpose();
    }
    // channel first (weight alpha k), then outcome from the channel law
    Eigen::MatrixXd channel_first(joint.rows(), joint.cols());
    for (Eigen::Index i = 0; i < joint.cols(); ++i) {
      channel_first.col(i) =
          model.qsr().channel_weight(static_cast<std::size_t>(i)) * law.channel[i];
    }
    EXPECT_LT((outcome_first - channel_first).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(joint.sum(), 1.0, 1e-12);
  }
}

TEST(RunTrajectory, ProjectiveRepeatability) {
  const auto model = model_of(testing::fix_z(), testing::psi_plus());
  std::mt19937_64 rng(15);
  for (int t = 0; t < 200; ++t) {
    const auto traj = run_trajectory(model, 2, rng, 15);
    ASSERT_EQ(traj.shots.size(), 2u);
    EXPECT_EQ(traj.shots[0].atom, traj.shots[1].atom);
  }
  EXPECT_THROW(run_trajectory(model, 0, 1), Error);
}

TEST(RunTrajectory, SameSeedSameRecords) {
  Rng setup(7);
  const auto model = model_of(testing::random_instrument(setup, 2, 3, 1),
                              testing::random_unit_vector(setup, 2));
  const auto a = run_trajectory(model, 50, 99);
  const auto b = run_trajectory(model, 50, 99);
  ASSERT_EQ(a.shots.size(), b.shots.size());
  for (std::size_t s = 0; s < a.shots.size(); ++s) {
    EXPECT_EQ(a.shots[s].atom, b.shots[s].atom);
    EXPECT_EQ(a.shots[s].channel, b.shots[s].channel);
    EXPECT_TRUE(a.shots[s].state == b.shots[s].state);
    EXPECT_EQ(a.shots[s].probability, b.shots[s].probability);
  }
}

TEST(VerifyModel, FixturesPass) {
  const auto iso = verify_model(model_of(testing::fix_iso(), testing::psi_plus()), 1e-12);
  EXPECT_TRUE(iso.passed);
  EXPECT_TRUE(verify_model(model_of(testing::fix_z(), testing::psi_plus())).passed);
  EXPECT_TRUE(verify_model(model_of(testing::fix_ad(), basis(1))).passed);
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) EXPECT_TRUE(verify_model(two_channel_model(rng)).passed);
}

TEST(VerifyModel, PerturbedPiIsFlagged) {
  const auto qsr = testing::qsr_of(testing::fix_ad());
  auto pi = qsr.pi_table();
  pi[0][0](0, 0) += 1e-3;
  const QuantumStochasticRep perturbed(qsr.profile(), pi, qsr.densities(), 2, 1.0);
  const auto report = verify_model(MeasurementModel(perturbed, testing::psi_plus()));
  EXPECT_FALSE(report.passed);
  EXPECT_GE(report.posterior_orthonormality, 1e-4);
}

}  // namespace
}  // namespace qmeas
