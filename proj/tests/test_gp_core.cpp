#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dtwin/gp_core.hpp"
#include "support.hpp"

using namespace dtwin;
namespace t = dtwin::testing;

namespace {

constexpr Variant kAllVariants[] = {Variant::NoDelta, Variant::IndepDelta, Variant::CommonDelta,
                                    Variant::SharedDelta};

double fd_slot(const IndividualDataset& d, IndividualParams p, Variant v, Physics ph, Slot s) {
  const double x = p.get(s);
  const double h = 1e-6 * std::max(1.0, std::abs(x));
  p.set(s, x + h);
  const double up = log_likelihood(d, p, v, ph);
  p.set(s, x - h);
  const double dn = log_likelihood(d, p, v, ph);
  return (up - dn) / (2 * h);
}

/// Joint prior over [P(tP) + delta(tP) + noise; Q(tQ) + noise; P(t*) + delta(t*); Q(t*)].
Eigen::MatrixXd pi_joint(const IndividualDataset& d, const IndividualParams& p, bool delta,
                         const std::vector<double>& su, const std::vector<double>& sf) {
  std::vector<double> up = d.x_u, fq = d.x_f;
  up.insert(up.end(), su.begin(), su.end());
  fq.insert(fq.end(), sf.begin(), sf.end());
  const Wk2Blocks b = wk2_blocks(up, fq, p.theta, p.wk2());
  const auto nu = static_cast<Eigen::Index>(up.size()), nf = static_cast<Eigen::Index>(fq.size());
  const auto nu0 = static_cast<Eigen::Index>(d.x_u.size());
  const auto nf0 = static_cast<Eigen::Index>(d.x_f.size());
  Eigen::MatrixXd Kpp = b.pp;
  if (delta) Kpp += se_matrix(up, up, p.omega);
  for (Eigen::Index i = 0; i < nu0; ++i) Kpp(i, i) += p.sigma_u * p.sigma_u;
  Eigen::MatrixXd Kqq = b.qq;
  for (Eigen::Index i = 0; i < nf0; ++i) Kqq(i, i) += p.sigma_f * p.sigma_f;
  // Reorder to [u_train, f_train, u_star, f_star].
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < nu0; ++i) order.push_back(i);
  for (Eigen::Index i = 0; i < nf0; ++i) order.push_back(nu + i);
  for (Eigen::Index i = nu0; i < nu; ++i) order.push_back(i);
  for (Eigen::Index i = nf0; i < nf; ++i) order.push_back(nu + i);
  Eigen::MatrixXd full(nu + nf, nu + nf);
  full << Kpp, b.pq, b.qp, Kqq;
  Eigen::MatrixXd out(nu + nf, nu + nf);
  for (Eigen::Index i = 0; i < nu + nf; ++i)
    for (Eigen::Index j = 0; j < nu + nf; ++j) out(i, j) = full(order[i], order[j]);
  return out;
}

}  // namespace

TEST(Assemble, ToyNoDeltaSinglePoint) {
  IndividualDataset d{1, {0.0}, {4.0}, {}, {}};
  IndividualParams p;
  p.phi = {1.3};
  p.sigma_u = 0.3;
  const GaussianModel m = assemble(d, p, Variant::NoDelta, Physics::Toy);
  ASSERT_EQ(m.mean.size(), 1);
  EXPECT_DOUBLE_EQ(m.mean(0), 5.0);
  EXPECT_NEAR(m.cov(0, 0), 0.09, 1e-15);
}

TEST(Assemble, ToyDiscrepancyAddsSeKernel) {
  CounterRng rng(21);
  const auto d = t::toy_dataset(rng, 6);
  const auto p = t::random_toy_params(rng);
  const GaussianModel m = assemble(d, p, Variant::IndepDelta, Physics::Toy);
  Eigen::MatrixXd expected = se_matrix(d.x_u, d.x_u, p.omega);
  expected.diagonal().array() += p.sigma_u * p.sigma_u;
  EXPECT_LT((m.cov - expected).cwiseAbs().maxCoeff(), 1e-13);
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(m.mean(i), 5.0 * std::exp(-p.phi[0] * d.x_u[i]));
}

TEST(Assemble, CardioMeanAndShape) {
  CounterRng rng(22);
  const auto d = t::cardio_dataset(rng, 8, 6);
  auto p = t::random_cardio_params(rng);
  p.beta = 100.0;
  p.phi[0] = 1.25;
  for (Variant v : kAllVariants) {
    const GaussianModel m = assemble(d, p, v, Physics::Wk2);
    ASSERT_EQ(m.cov.rows(), 14);
    ASSERT_EQ(m.cov.cols(), 14);
    for (int i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(m.mean(i), 100.0);
    for (int i = 8; i < 14; ++i) EXPECT_NEAR(m.mean(i), 80.0, 1e-12);
    EXPECT_LT((m.cov - m.cov.transpose()).cwiseAbs().maxCoeff(), 1e-12 * m.cov.cwiseAbs().maxCoeff());
  }
}

TEST(Assemble, CardioBlocksMatchOperatorConstruction) {
  CounterRng rng(23);
  const auto d = t::cardio_dataset(rng, 5, 4);
  const auto p = t::random_cardio_params(rng);
  const GaussianModel m = assemble(d, p, Variant::SharedDelta, Physics::Wk2);
  const Eigen::MatrixXd ref = pi_joint(d, p, true, {}, {});
  EXPECT_LT((m.cov - ref).cwiseAbs().maxCoeff(), 1e-10 * ref.cwiseAbs().maxCoeff());
}

TEST(Assemble, RejectsNonFiniteAndNonPositiveParameters) {
  CounterRng rng(24);
  const auto d = t::toy_dataset(rng, 4);
  auto p = t::random_toy_params(rng);
  p.phi[0] = NAN;
  EXPECT_THROW(assemble(d, p, Variant::NoDelta, Physics::Toy), numerical_error);
  p.phi[0] = 1.0;
  p.sigma_u = 0.0;
  EXPECT_THROW(assemble(d, p, Variant::NoDelta, Physics::Toy), numerical_error);
  p.sigma_u = 0.3;
  p.omega.rho = -1.0;
  EXPECT_THROW(assemble(d, p, Variant::IndepDelta, Physics::Toy), numerical_error);
  EXPECT_NO_THROW(assemble(d, p, Variant::NoDelta, Physics::Toy));
}

TEST(Assemble, RejectsMismatchedLengths) {
  IndividualDataset d{1, {0.0, 1.0}, {1.0}, {}, {}};
  IndividualParams p;
  p.phi = {1.0};
  EXPECT_THROW(assemble(d, p, Variant::NoDelta, Physics::Toy), std::invalid_argument);
}

TEST(GaussianLogpdf, IdentityCovarianceClosedForm) {
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
  EXPECT_NEAR(gaussian_logpdf(y, y, Eigen::MatrixXd::Identity(3, 3)), -1.5 * std::log(2 * M_PI), 1e-14);
}

TEST(GaussianLogpdf, ScalarClosedForm) {
  Eigen::VectorXd y(1), mu(1);
  y << 1.7;
  mu << 0.4;
  Eigen::MatrixXd s(1, 1);
  s << 2.5;
  const double expected = -0.5 * 1.3 * 1.3 / 2.5 - 0.5 * std::log(2 * M_PI * 2.5);
  EXPECT_NEAR(gaussian_logpdf(y, mu, s), expected, 1e-14);
}

TEST(GaussianLogpdf, MatchesDenseInverse) {
  CounterRng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 9;
    const Eigen::MatrixXd S = t::random_spd(rng, n);
    const Eigen::VectorXd y = t::random_vector(rng, n), mu = t::random_vector(rng, n);
    EXPECT_LT(t::rel_err(gaussian_logpdf(y, mu, S), t::dense_logpdf(y, mu, S)), 1e-10);
  }
}

TEST(GaussianLogpdf, DimensionMismatchThrows) {
  EXPECT_THROW(gaussian_logpdf(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3),
                               Eigen::MatrixXd::Identity(2, 2)),
               std::invalid_argument);
}

TEST(GaussianLogpdf, IndefiniteCovarianceRaisesCholeskyError) {
  Eigen::MatrixXd S(2, 2);
  S << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(gaussian_logpdf(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), S), cholesky_error);
}

TEST(CholeskyFactor, EscalatesJitterForSingularMatrix) {
  const Eigen::MatrixXd S = Eigen::MatrixXd::Ones(4, 4);
  const CholeskyFactor f(S);
  EXPECT_GT(f.jitter(), 0.0);
  EXPECT_LE(f.jitter(), 1e-6);
}

TEST(LogLikelihood, ToyMatchesDenseOracle) {
  CounterRng rng(26);
  for (Variant v : kAllVariants) {
    const auto d = t::toy_dataset(rng, 10);
    const auto p = t::random_toy_params(rng);
    const GaussianModel m = assemble(d, p, v, Physics::Toy);
    EXPECT_LT(t::rel_err(log_likelihood(d, p, v, Physics::Toy), t::dense_logpdf(d.observations(), m.mean, m.cov)),
              1e-10);
  }
}

TEST(LogLikelihood, InvariantUnderPermutationOfObservations) {
  CounterRng rng(27);
  const auto d = t::cardio_dataset(rng, 7, 5);
  const auto p = t::random_cardio_params(rng);
  IndividualDataset r = d;
  std::reverse(r.x_u.begin(), r.x_u.end());
  std::reverse(r.y_u.begin(), r.y_u.end());
  std::rotate(r.x_f.begin(), r.x_f.begin() + 2, r.x_f.end());
  std::rotate(r.y_f.begin(), r.y_f.begin() + 2, r.y_f.end());
  for (Variant v : kAllVariants) {
    EXPECT_LT(t::rel_err(log_likelihood(d, p, v, Physics::Wk2), log_likelihood(r, p, v, Physics::Wk2)), 1e-10);
  }
}

TEST(LogLikelihood, ToyGradientMatchesFiniteDifferences) {
  CounterRng rng(28);
  for (Variant v : kAllVariants) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto d = t::toy_dataset(rng, 12);
      const auto p = t::random_toy_params(rng);
      SlotArray g{};
      log_likelihood(d, p, v, Physics::Toy, &g);
      for (Slot s : active_slots(Physics::Toy, v)) {
        const double fd = fd_slot(d, p, v, Physics::Toy, s);
        EXPECT_LT(t::rel_err(g[idx(s)], fd, 1e-6), 1e-5)
            << variant_name(v) << " " << slot_name(Physics::Toy, s);
      }
    }
  }
}

TEST(LogLikelihood, CardioGradientMatchesFiniteDifferences) {
  CounterRng rng(29);
  for (Variant v : kAllVariants) {
    for (int trial = 0; trial < 4; ++trial) {
      const auto d = t::cardio_dataset(rng, 9, 7);
      const auto p = t::random_cardio_params(rng);
      SlotArray g{};
      log_likelihood(d, p, v, Physics::Wk2, &g);
      for (Slot s : active_slots(Physics::Wk2, v)) {
        const double fd = fd_slot(d, p, v, Physics::Wk2, s);
        EXPECT_LT(t::rel_err(g[idx(s)], fd, 1e-4), 1e-4)
            << variant_name(v) << " " << slot_name(Physics::Wk2, s);
      }
    }
  }
}

TEST(LogLikelihood, InactiveSlotsHaveZeroGradient) {
  CounterRng rng(30);
  const auto d = t::toy_dataset(rng, 5);
  const auto p = t::random_toy_params(rng);
  SlotArray g;
  g.fill(7.0);
  log_likelihood(d, p, Variant::NoDelta, Physics::Toy, &g);
  EXPECT_EQ(g[idx(Slot::OmegaAlpha)], 0.0);
  EXPECT_EQ(g[idx(Slot::OmegaRho)], 0.0);
  EXPECT_EQ(g[idx(Slot::Beta)], 0.0);
}

TEST(LogLikelihood, FlatDirectionHasZeroDerivative) {
  // With every input at x = 0 the toy mean does not depend on u.
  IndividualDataset d{1, {0.0, 0.0, 0.0}, {4.0, 5.5, 5.1}, {}, {}};
  IndividualParams p;
  p.phi = {1.2};
  p.sigma_u = 0.4;
  SlotArray g{};
  log_likelihood(d, p, Variant::NoDelta, Physics::Toy, &g);
  EXPECT_EQ(g[idx(Slot::Phi0)], 0.0);
  EXPECT_NEAR(fd_slot(d, p, Variant::NoDelta, Physics::Toy, Slot::Phi0), 0.0, 1e-8);
}

TEST(PredictGeneral, InterpolatesTrainingPointsWhenNoiseless) {
  CounterRng rng(31);
  auto d = t::toy_dataset(rng, 6);
  auto p = t::random_toy_params(rng);
  p.omega = {1.0, 0.5};
  p.sigma_u = 1e-12;
  const Prediction pr = predict_general(d, p, Variant::IndepDelta, d.x_u);
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(pr.mean(i), d.y_u[i], 1e-5);
    EXPECT_NEAR(pr.cov(i, i), 0.0, 1e-8);
  }
}

TEST(PredictGeneral, RevertsToPriorFarFromData) {
  CounterRng rng(32);
  const auto d = t::toy_dataset(rng, 8);
  auto p = t::random_toy_params(rng);
  p.omega = {1.5, 0.3};
  const std::vector<double> far{50.0};
  const Prediction pr = predict_general(d, p, Variant::CommonDelta, far);
  EXPECT_NEAR(pr.mean(0), 5.0 * std::exp(-p.phi[0] * 50.0), 1e-12);
  EXPECT_NEAR(pr.cov(0, 0), 2.25, 1e-12);
}

TEST(PredictGeneral, MatchesBruteForceConditioning) {
  CounterRng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const auto d = t::toy_dataset(rng, 7);
    const auto p = t::random_toy_params(rng);
    const auto xs = t::sorted_uniform(rng, 5, 0.0, 4.0);
    std::vector<double> all = d.x_u;
    all.insert(all.end(), xs.begin(), xs.end());
    Eigen::MatrixXd K = se_matrix(all, all, p.omega);
    for (int i = 0; i < 7; ++i) K(i, i) += p.sigma_u * p.sigma_u;
    Eigen::VectorXd mu(12);
    for (int i = 0; i < 12; ++i) mu(i) = 5.0 * std::exp(-p.phi[0] * all[i]);
    const auto ref = t::condition_joint(mu, K, 7, d.observations());
    const Prediction pr = predict_general(d, p, Variant::SharedDelta, xs);
    EXPECT_LT((pr.mean - ref.mean).cwiseAbs().maxCoeff(), 1e-8 * (1 + ref.mean.cwiseAbs().maxCoeff()));
    EXPECT_LT((pr.cov - ref.cov).cwiseAbs().maxCoeff(), 1e-8 * (1 + ref.cov.cwiseAbs().maxCoeff()));
  }
}

TEST(PredictGeneral, NoDeltaIsPhysicalModelOnly) {
  CounterRng rng(34);
  const auto d = t::toy_dataset(rng, 5);
  const auto p = t::random_toy_params(rng);
  const std::vector<double> xs{0.0, 1.0, 3.0};
  const Prediction pr = predict_general(d, p, Variant::NoDelta, xs);
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(pr.mean(i), 5.0 * std::exp(-p.phi[0] * xs[i]));
    EXPECT_EQ(pr.cov(i, i), 0.0);
  }
}

TEST(PredictGeneral, EmptyTrainingReturnsPrior) {
  IndividualDataset d;
  IndividualParams p;
  p.phi = {0.9};
  p.omega = {1.2, 0.4};
  const std::vector<double> xs{0.0, 0.5};
  const Prediction pr = predict_general(d, p, Variant::IndepDelta, xs);
  EXPECT_DOUBLE_EQ(pr.mean(0), 5.0);
  EXPECT_TRUE(pr.cov.isApprox(se_matrix(xs, xs, p.omega)));
}

TEST(PredictPi, MatchesBruteForceConditioning) {
  CounterRng rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    const bool delta = trial % 2 == 0;
    const Variant v = delta ? Variant::IndepDelta : Variant::NoDelta;
    const auto d = t::cardio_dataset(rng, 6, 5);
    const auto p = t::random_cardio_params(rng);
    const auto su = t::sorted_uniform(rng, 4, 0.0, 1.0);
    const auto sf = t::sorted_uniform(rng, 3, 0.0, 1.0);
    const Eigen::MatrixXd K = pi_joint(d, p, delta, su, sf);
    Eigen::VectorXd mu(18);
    mu << Eigen::VectorXd::Constant(6, p.beta), Eigen::VectorXd::Constant(5, p.beta / p.phi[0]),
        Eigen::VectorXd::Constant(4, p.beta), Eigen::VectorXd::Constant(3, p.beta / p.phi[0]);
    const auto ref = t::condition_joint(mu, K, 11, d.observations());
    const PiPrediction pr = predict_pi(d, p, v, su, sf);
    const double ms = 1 + ref.mean.cwiseAbs().maxCoeff(), cs = 1 + ref.cov.cwiseAbs().maxCoeff();
    EXPECT_LT((pr.u.mean - ref.mean.head(4)).cwiseAbs().maxCoeff(), 1e-8 * ms);
    EXPECT_LT((pr.f.mean - ref.mean.tail(3)).cwiseAbs().maxCoeff(), 1e-8 * ms);
    EXPECT_LT((pr.u.cov - ref.cov.topLeftCorner(4, 4)).cwiseAbs().maxCoeff(), 1e-8 * cs);
    EXPECT_LT((pr.f.cov - ref.cov.bottomRightCorner(3, 3)).cwiseAbs().maxCoeff(), 1e-8 * cs);
  }
}

TEST(PredictPi, UnitResistanceNearZeroComplianceGivesEqualBlocks) {
  CounterRng rng(36);
  const auto d = t::cardio_dataset(rng, 6, 6);
  auto p = t::random_cardio_params(rng);
  p.phi = {1.0, 1e-12};
  const std::vector<double> xs{0.05, 0.33, 0.61};
  const PiPrediction pr = predict_pi(d, p, Variant::NoDelta, xs, xs);
  EXPECT_LT((pr.u.mean - pr.f.mean).cwiseAbs().maxCoeff(), 1e-6 * pr.u.mean.cwiseAbs().maxCoeff());
  EXPECT_LT((pr.u.cov - pr.f.cov).cwiseAbs().maxCoeff(), 1e-6 * pr.u.cov.cwiseAbs().maxCoeff());
}

TEST(PredictPi, NoiselessPressureObservationsAreReproduced) {
  CounterRng rng(37);
  const auto d = t::cardio_dataset(rng, 5, 4);
  auto p = t::random_cardio_params(rng);
  p.sigma_u = 1e-9;
  const PiPrediction pr = predict_pi(d, p, Variant::NoDelta, d.x_u, d.x_f);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(pr.u.mean(i), d.y_u[i], 1e-4 * std::abs(d.y_u[i]));
}

TEST(PredictPi, EmptyTrainingReturnsPrior) {
  IndividualDataset d;
  IndividualParams p;
  p.phi = {1.25, 1.1};
  p.theta = {20.0, 0.1};
  p.beta = 100.0;
  p.sigma_u = p.sigma_f = 1;
  const std::vector<double> xs{0.1};
  const PiPrediction pr = predict_pi(d, p, Variant::NoDelta, xs, xs);
  EXPECT_DOUBLE_EQ(pr.u.mean(0), 100.0);
  EXPECT_NEAR(pr.f.mean(0), 80.0, 1e-12);
  EXPECT_NEAR(pr.u.cov(0, 0), 400.0, 1e-10);
}
