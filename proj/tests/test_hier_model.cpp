#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dtwin/hier_model.hpp"
#include "dtwin/sampler/diagnostics.hpp"
#include "support.hpp"

using namespace dtwin;
namespace t = dtwin::testing;

namespace {

constexpr Variant kAllVariants[] = {Variant::NoDelta, Variant::IndepDelta, Variant::CommonDelta,
                                    Variant::SharedDelta};

std::vector<IndividualDataset> toy_population(int M, std::uint64_t seed, int n = 8) {
  CounterRng rng(seed);
  std::vector<IndividualDataset> pop;
  for (int m = 1; m <= M; ++m) pop.push_back(t::toy_dataset(rng, n, m));
  return pop;
}

std::vector<IndividualDataset> cardio_population(int M, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<IndividualDataset> pop;
  for (int m = 1; m <= M; ++m) pop.push_back(t::cardio_dataset(rng, 6, 5, m));
  return pop;
}

int coord(const JointPosterior& post, const std::string& name) {
  const auto names = post.raw_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("no coordinate " + name);
  return static_cast<int>(it - names.begin());
}

Eigen::VectorXd random_raw(CounterRng& rng, std::size_t dim, double scale = 0.5) {
  return scale * t::random_vector(rng, static_cast<int>(dim));
}

void check_gradient(const JointPosterior& post, const Eigen::VectorXd& raw, double tol,
                    const std::string& label) {
  Eigen::VectorXd g;
  post(raw, g);
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    Eigen::VectorXd up = raw, dn = raw;
    const double h = 1e-6;
    up(i) += h;
    dn(i) -= h;
    const double fd = (post.log_density(up) - post.log_density(dn)) / (2 * h);
    EXPECT_LT(t::rel_err(g(i), fd, 1e-4), tol) << label << " " << post.raw_names()[i];
  }
}

/// Log-density rebuilt term by term from the constrained state.
double factorized(const JointPosterior& post, const Eigen::VectorXd& raw) {
  const ConstrainedState st = post.constrain(raw);
  const PriorSpec& ps = post.priors();
  double lp = 0.0;
  for (std::size_t i = 0; i < post.dim(); ++i) {
    const auto& c = post.coords()[i];
    const double z = raw(static_cast<Eigen::Index>(i));
    switch (c.kind) {
      case JointPosterior::CoordKind::Location: lp += eval_raw(ps.location[idx(c.slot)], z).logp; break;
      case JointPosterior::CoordKind::Scale: lp += eval_raw(ps.scale[idx(c.slot)], z).logp; break;
      case JointPosterior::CoordKind::Shared:
      case JointPosterior::CoordKind::Fixed: lp += eval_raw(ps.fixed_for(c.slot), z).logp; break;
      case JointPosterior::CoordKind::Pooled: lp += -0.5 * z * z - 0.5 * kLog2Pi; break;
    }
  }
  for (std::size_t m = 0; m < st.individuals.size(); ++m) {
    lp += log_likelihood(post.population()[m], st.individuals[m], post.variant(), post.physics());
  }
  return lp;
}

}  // namespace

TEST(JointPosterior, LayoutAndNames) {
  const JointPosterior shared(toy_population(3, 1), Physics::Toy, Variant::SharedDelta,
                              PriorSpec::toy_defaults());
  // 3 pools x 2 hyper coordinates, then 4 slots per individual.
  EXPECT_EQ(shared.dim(), 6u + 3u * 4u);
  EXPECT_EQ(shared.raw_names().front(), "z_mu_u");
  EXPECT_NO_THROW(coord(shared, "z_m_rho_delta"));
  EXPECT_NO_THROW(coord(shared, "nu_u[2]"));

  const JointPosterior common(toy_population(3, 1), Physics::Toy, Variant::CommonDelta,
                              PriorSpec::toy_defaults());
  EXPECT_EQ(common.dim(), 2u + 2u + 3u * 2u);
  EXPECT_TRUE(common.shared(Slot::OmegaAlpha));
  EXPECT_FALSE(common.pooled(Slot::OmegaAlpha));
  const auto names = common.constrained_names();
  EXPECT_EQ(std::count(names.begin(), names.end(), "alpha_delta"), 1);
  EXPECT_EQ(names.back(), "sigma_u");

  const JointPosterior indep(toy_population(3, 1), Physics::Toy, Variant::IndepDelta,
                             PriorSpec::toy_defaults());
  EXPECT_EQ(indep.dim(), 3u * 4u);
  EXPECT_EQ(indep.constrained_names().size(), 12u);
}

TEST(JointPosterior, SingleIndividualEqualsStandaloneModel) {
  CounterRng rng(41);
  for (Variant v : {Variant::NoDelta, Variant::IndepDelta}) {
    const auto pop = toy_population(1, 2);
    const PriorSpec ps = PriorSpec::toy_defaults();
    const JointPosterior post(pop, Physics::Toy, v, ps);
    const Eigen::VectorXd raw = random_raw(rng, post.dim());
    IndividualParams p;
    p.phi = {0.0};
    double lp = 0.0;
    const auto slots = active_slots(Physics::Toy, v);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const RawTerm term = eval_raw(ps.fixed_for(slots[i]), raw(static_cast<Eigen::Index>(i)));
      p.set(slots[i], term.value);
      lp += term.logp;
    }
    lp += log_likelihood(pop[0], p, v, Physics::Toy);
    EXPECT_LT(t::rel_err(post.log_density(raw), lp), 1e-12);
  }
}

TEST(JointPosterior, FactorizesAcrossIndividuals) {
  CounterRng rng(42);
  for (Variant v : kAllVariants) {
    const JointPosterior post(toy_population(3, 3), Physics::Toy, v, PriorSpec::toy_defaults());
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::VectorXd raw = random_raw(rng, post.dim());
      EXPECT_LT(t::rel_err(post.log_density(raw), factorized(post, raw)), 1e-12) << variant_name(v);
    }
  }
  const JointPosterior cardio(cardio_population(3, 4), Physics::Wk2, Variant::SharedDelta,
                              PriorSpec::wk2_defaults());
  const Eigen::VectorXd raw = random_raw(rng, cardio.dim());
  EXPECT_LT(t::rel_err(cardio.log_density(raw), factorized(cardio, raw)), 1e-12);
}

TEST(JointPosterior, InvariantUnderPermutationOfIndividuals) {
  CounterRng rng(43);
  for (Variant v : kAllVariants) {
    auto pop = toy_population(3, 5);
    const JointPosterior a(pop, Physics::Toy, v, PriorSpec::toy_defaults());
    std::swap(pop[0], pop[2]);
    const JointPosterior b(pop, Physics::Toy, v, PriorSpec::toy_defaults());
    const Eigen::VectorXd raw = random_raw(rng, a.dim());
    // Map each coordinate by name so the same parameter values are used.
    Eigen::VectorXd permuted(raw.size());
    const auto na = a.raw_names();
    for (std::size_t i = 0; i < na.size(); ++i) permuted(coord(b, na[i])) = raw(static_cast<Eigen::Index>(i));
    EXPECT_LT(t::rel_err(a.log_density(raw), b.log_density(permuted)), 1e-12);
  }
}

TEST(JointPosterior, ZeroOffsetsGivePopulationLocation) {
  CounterRng rng(44);
  const JointPosterior post(toy_population(3, 6), Physics::Toy, Variant::SharedDelta,
                            PriorSpec::toy_defaults());
  Eigen::VectorXd raw = random_raw(rng, post.dim());
  for (int m = 1; m <= 3; ++m) {
    raw(coord(post, "nu_u[" + std::to_string(m) + "]")) = 0.0;
    raw(coord(post, "nu_rho_delta[" + std::to_string(m) + "]")) = 0.0;
  }
  raw(coord(post, "z_m_rho_delta")) = std::log(0.7);
  const ConstrainedState st = post.constrain(raw);
  const double mu = st.globals.find(Slot::Phi0)->location;
  EXPECT_DOUBLE_EQ(mu, 1.2 + 0.5 * raw(coord(post, "z_mu_u")));
  EXPECT_NEAR(st.globals.find(Slot::OmegaRho)->location, 0.7, 1e-15);
  for (const auto& p : st.individuals) {
    EXPECT_DOUBLE_EQ(p.phi[0], mu);
    EXPECT_NEAR(p.omega.rho, 0.7, 1e-15);
  }
}

TEST(JointPosterior, LogNormalPoolHasRequestedMedianAndScale) {
  const JointPosterior post(toy_population(1, 7), Physics::Toy, Variant::SharedDelta,
                            PriorSpec::toy_defaults());
  Eigen::VectorXd raw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(post.dim()));
  const double m = 0.8, s = 0.4;
  raw(coord(post, "z_m_alpha_delta")) = std::log(m);
  raw(coord(post, "z_s_alpha_delta")) = std::log(s / 0.5);
  const int nu = coord(post, "nu_alpha_delta[1]");
  CounterRng rng(45);
  const int n = 100000;
  std::vector<double> logs(n);
  for (int i = 0; i < n; ++i) {
    raw(nu) = rng.normal();
    logs[i] = std::log(post.constrain(raw).individuals[0].omega.alpha);
  }
  EXPECT_NEAR(std::exp(dtwin::sampler::quantile(logs, 0.5)), m, 0.01 * m);
  EXPECT_NEAR(std::sqrt(dtwin::sampler::detail::variance(logs)), s, 0.01 * s);
}

TEST(JointPosterior, VanishingScalePoolsIndividuals) {
  CounterRng rng(46);
  const JointPosterior post(toy_population(4, 8), Physics::Toy, Variant::CommonDelta,
                            PriorSpec::toy_defaults());
  Eigen::VectorXd raw = random_raw(rng, post.dim(), 1.0);
  raw(coord(post, "z_sigma_u")) = -30.0;
  const ConstrainedState st = post.constrain(raw);
  const double mu = st.globals.find(Slot::Phi0)->location;
  for (const auto& p : st.individuals) EXPECT_NEAR(p.phi[0], mu, 1e-12);
}

TEST(JointPosterior, ToyGradientMatchesFiniteDifferences) {
  CounterRng rng(47);
  for (Variant v : kAllVariants) {
    const JointPosterior post(toy_population(3, 9), Physics::Toy, v, PriorSpec::toy_defaults());
    for (int trial = 0; trial < 3; ++trial) {
      check_gradient(post, random_raw(rng, post.dim()), 1e-5, std::string(variant_name(v)));
    }
  }
}

TEST(JointPosterior, CardioGradientMatchesFiniteDifferences) {
  CounterRng rng(48);
  for (Variant v : kAllVariants) {
    const JointPosterior post(cardio_population(2, 10), Physics::Wk2, v, PriorSpec::wk2_defaults());
    for (int trial = 0; trial < 2; ++trial) {
      check_gradient(post, random_raw(rng, post.dim(), 0.3), 1e-4, std::string(variant_name(v)));
    }
  }
}

TEST(JointPosterior, ConstrainedVectorMatchesNames) {
  CounterRng rng(49);
  const JointPosterior post(cardio_population(2, 11), Physics::Wk2, Variant::CommonDelta,
                            PriorSpec::wk2_defaults());
  const Eigen::VectorXd raw = random_raw(rng, post.dim());
  const Eigen::VectorXd c = post.constrained_vector(raw);
  const auto names = post.constrained_names();
  ASSERT_EQ(static_cast<std::size_t>(c.size()), names.size());
  const ConstrainedState st = post.constrain(raw);
  const auto at = [&](const std::string& n) {
    return c(std::find(names.begin(), names.end(), n) - names.begin());
  };
  EXPECT_EQ(at("R[2]"), st.individuals[1].phi[0]);
  EXPECT_EQ(at("alpha_delta"), st.individuals[0].omega.alpha);
  EXPECT_EQ(at("alpha_delta"), st.individuals[1].omega.alpha);
  EXPECT_EQ(at("mu_C"), st.globals.find(Slot::Phi1)->location);
}

TEST(JointPosterior, RejectsBadInput) {
  EXPECT_THROW(JointPosterior({}, Physics::Toy, Variant::NoDelta, PriorSpec::toy_defaults()),
               std::invalid_argument);
  const JointPosterior post(toy_population(2, 12), Physics::Toy, Variant::NoDelta,
                            PriorSpec::toy_defaults());
  EXPECT_THROW(post.log_density(Eigen::VectorXd::Zero(3)), std::invalid_argument);
  Eigen::VectorXd raw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(post.dim()));
  raw(0) = NAN;
  EXPECT_THROW(post.log_density(raw), numerical_error);
}
