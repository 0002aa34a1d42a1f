#ifndef DTWIN_GP_CORE_HPP
#define DTWIN_GP_CORE_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dtwin/errors.hpp"
#include "dtwin/kernels.hpp"

namespace dtwin {

/// Physical model family: exponential decay toy model, or the two-element
/// Windkessel model with a physics-informed (pressure, flow) GP prior.
enum class Physics { Toy, Wk2 };

/// How discrepancy and physical parameters are shared across individuals.
enum class Variant { NoDelta, IndepDelta, CommonDelta, SharedDelta };

constexpr bool has_discrepancy(Variant v) noexcept { return v != Variant::NoDelta; }
constexpr bool is_joint(Variant v) noexcept {
  return v == Variant::CommonDelta || v == Variant::SharedDelta;
}

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::NoDelta: return "no_delta";
    case Variant::IndepDelta: return "indep_delta";
    case Variant::CommonDelta: return "common_delta";
    case Variant::SharedDelta: return "shared_delta";
  }
  return "";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  for (Variant v : {Variant::NoDelta, Variant::IndepDelta, Variant::CommonDelta,
                    Variant::SharedDelta}) {
    if (variant_name(v) == s) return v;
  }
  return std::nullopt;
}

inline std::string_view physics_name(Physics p) { return p == Physics::Toy ? "toy" : "cardio"; }

/// One individual's observations. For the toy model only the u-block is
/// used; for the Windkessel model u = pressure and f = flow, on grids that
/// need not be aligned.
struct IndividualDataset {
  int id = 0;
  std::vector<double> x_u;
  std::vector<double> y_u;
  std::vector<double> x_f;
  std::vector<double> y_f;

  std::size_t size() const noexcept { return y_u.size() + y_f.size(); }

  void validate() const {
    if (x_u.size() != y_u.size() || x_f.size() != y_f.size()) {
      std::ostringstream os;
      os << "individual " << id << ": input/output length mismatch";
      throw std::invalid_argument(os.str());
    }
  }

  Eigen::VectorXd observations() const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < y_u.size(); ++i) y(static_cast<Eigen::Index>(i)) = y_u[i];
    for (std::size_t i = 0; i < y_f.size(); ++i)
      y(static_cast<Eigen::Index>(y_u.size() + i)) = y_f[i];
    return y;
  }
};

/// Parameter slots of one individual. Which slots are active depends on the
/// physics kind and the variant (see `active_slots`).
enum class Slot : std::size_t {
  Phi0,        // toy: u; cardio: R
  Phi1,        // cardio: C
  Beta,        // cardio: constant pressure mean mu_P
  SigmaU,      // noise sd of the u-block
  SigmaF,      // noise sd of the f-block
  ThetaAlpha,  // physics-informed kernel alpha
  ThetaRho,    // physics-informed kernel rho
  OmegaAlpha,  // discrepancy kernel alpha
  OmegaRho,    // discrepancy kernel rho
};
inline constexpr std::size_t kSlotCount = 9;
using SlotArray = std::array<double, kSlotCount>;

constexpr std::size_t idx(Slot s) noexcept { return static_cast<std::size_t>(s); }

constexpr bool is_physical(Slot s) noexcept { return s == Slot::Phi0 || s == Slot::Phi1; }
constexpr bool is_discrepancy(Slot s) noexcept {
  return s == Slot::OmegaAlpha || s == Slot::OmegaRho;
}

inline std::vector<Slot> active_slots(Physics physics, Variant variant) {
  std::vector<Slot> out;
  if (physics == Physics::Toy) {
    out = {Slot::Phi0, Slot::SigmaU};
  } else {
    out = {Slot::Phi0,   Slot::Phi1,       Slot::Beta,    Slot::SigmaU,
           Slot::SigmaF, Slot::ThetaAlpha, Slot::ThetaRho};
  }
  if (has_discrepancy(variant)) {
    out.push_back(Slot::OmegaAlpha);
    out.push_back(Slot::OmegaRho);
  }
  return out;
}

inline std::string_view slot_name(Physics physics, Slot s) {
  if (physics == Physics::Toy) {
    switch (s) {
      case Slot::Phi0: return "u";
      case Slot::SigmaU: return "sigma";
      case Slot::OmegaAlpha: return "alpha_delta";
      case Slot::OmegaRho: return "rho_delta";
      default: return "";
    }
  }
  switch (s) {
    case Slot::Phi0: return "R";
    case Slot::Phi1: return "C";
    case Slot::Beta: return "mu_P";
    case Slot::SigmaU: return "sigma_P";
    case Slot::SigmaF: return "sigma_Q";
    case Slot::ThetaAlpha: return "alpha_wk2";
    case Slot::ThetaRho: return "rho_wk2";
    case Slot::OmegaAlpha: return "alpha_delta";
    case Slot::OmegaRho: return "rho_delta";
  }
  return "";
}

inline std::optional<Slot> parse_slot(Physics physics, std::string_view name) {
  for (std::size_t i = 0; i < kSlotCount; ++i) {
    const auto s = static_cast<Slot>(i);
    if (!slot_name(physics, s).empty() && slot_name(physics, s) == name) return s;
  }
  return std::nullopt;
}

/// Per-individual parameters on the constrained scale.
struct IndividualParams {
  std::vector<double> phi;  // toy: {u}; cardio: {R, C}
  SEParams theta;           // physics-informed kernel (cardio)
  SEParams omega;           // discrepancy kernel
  double beta = 0.0;        // mu_P (cardio)
  double sigma_u = 1.0;
  double sigma_f = 1.0;

  double get(Slot s) const {
    switch (s) {
      case Slot::Phi0: return phi.at(0);
      case Slot::Phi1: return phi.at(1);
      case Slot::Beta: return beta;
      case Slot::SigmaU: return sigma_u;
      case Slot::SigmaF: return sigma_f;
      case Slot::ThetaAlpha: return theta.alpha;
      case Slot::ThetaRho: return theta.rho;
      case Slot::OmegaAlpha: return omega.alpha;
      case Slot::OmegaRho: return omega.rho;
    }
    return 0.0;
  }

  void set(Slot s, double v) {
    switch (s) {
      case Slot::Phi0: ensure_phi(1); phi[0] = v; break;
      case Slot::Phi1: ensure_phi(2); phi[1] = v; break;
      case Slot::Beta: beta = v; break;
      case Slot::SigmaU: sigma_u = v; break;
      case Slot::SigmaF: sigma_f = v; break;
      case Slot::ThetaAlpha: theta.alpha = v; break;
      case Slot::ThetaRho: theta.rho = v; break;
      case Slot::OmegaAlpha: omega.alpha = v; break;
      case Slot::OmegaRho: omega.rho = v; break;
    }
  }

  WK2Params wk2() const { return {phi.at(0), phi.at(1)}; }

  std::string describe(Physics physics, Variant variant) const {
    std::ostringstream os;
    bool first = true;
    for (Slot s : active_slots(physics, variant)) {
      os << (first ? "" : ", ") << slot_name(physics, s) << "=" << get(s);
      first = false;
    }
    return os.str();
  }

 private:
  void ensure_phi(std::size_t n) {
    if (phi.size() < n) phi.resize(n, 0.0);
  }
};

/// The misspecified physical model of the toy study: eta(x, u) = 5 exp(-u x).
struct ToyModel {
  static constexpr double amplitude = 5.0;
  static double eta(double x, double u) noexcept { return amplitude * std::exp(-u * x); }
  static double deta_du(double x, double u) noexcept { return -x * eta(x, u); }
};

struct GaussianModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// A Gaussian model plus its derivatives in each active parameter slot.
struct GaussianModelDerivs {
  GaussianModel model;
  std::vector<Slot> slots;
  std::vector<Eigen::VectorXd> dmean;
  std::vector<Eigen::MatrixXd> dcov;
};

namespace detail {

inline void check_params(const IndividualParams& p, Physics physics, Variant variant) {
  for (Slot s : active_slots(physics, variant)) {
    const double v = p.get(s);
    if (!std::isfinite(v)) {
      throw numerical_error("non-finite parameter " + std::string(slot_name(physics, s)));
    }
  }
  detail::require_positive(p.sigma_u, "noise sd");
  if (physics == Physics::Wk2) {
    validate(p.wk2());
    validate(p.theta);
    detail::require_positive(p.sigma_f, "flow noise sd");
  }
  if (has_discrepancy(variant)) validate(p.omega);
}

inline void check_shape(const IndividualDataset& d, Physics physics) {
  d.validate();
  if (physics == Physics::Toy && !d.x_f.empty()) {
    throw std::invalid_argument("toy datasets carry a single block");
  }
}

}  // namespace detail

/**
 * Mean vector and covariance of the observations of one individual.
 *
 * Toy: mean eta(x, u), covariance K_delta + sigma^2 I.
 * Cardio: mean (mu_P, mu_P / R), covariance the physics-informed block
 * matrix with K_delta on the pressure block and per-block noise.
 * NoDelta drops K_delta in both cases.
 */
inline GaussianModelDerivs assemble_with_derivatives(const IndividualDataset& data,
                                                     const IndividualParams& p, Variant variant,
                                                     Physics physics, bool derivatives = true) {
  detail::check_shape(data, physics);
  detail::check_params(p, physics, variant);
  const bool delta = has_discrepancy(variant);
  const auto nu = static_cast<Eigen::Index>(data.x_u.size());
  const auto nf = static_cast<Eigen::Index>(data.x_f.size());
  const Eigen::Index n = nu + nf;

  GaussianModelDerivs out;
  out.model.mean.resize(n);
  out.model.cov.setZero(n, n);
  if (derivatives) {
    out.slots = active_slots(physics, variant);
    out.dmean.assign(out.slots.size(), Eigen::VectorXd::Zero(n));
    out.dcov.assign(out.slots.size(), Eigen::MatrixXd::Zero(n, n));
  }
  auto slot_pos = [&](Slot s) -> long {
    for (std::size_t i = 0; i < out.slots.size(); ++i)
      if (out.slots[i] == s) return static_cast<long>(i);
    return -1;
  };
  auto& cov = out.model.cov;

  // Discrepancy on the u-block (shared by both physics kinds).
  if (delta) {
    const long ia = derivatives ? slot_pos(Slot::OmegaAlpha) : -1;
    const long ir = derivatives ? slot_pos(Slot::OmegaRho) : -1;
    const double a2 = p.omega.alpha * p.omega.alpha;
    const double r2 = p.omega.rho * p.omega.rho;
    const double r3 = r2 * p.omega.rho;
    for (Eigen::Index i = 0; i < nu; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double d = data.x_u[i] - data.x_u[j];
        const double k = a2 * std::exp(-0.5 * d * d / r2);
        cov(i, j) += k;
        if (i != j) cov(j, i) += k;
        if (derivatives) {
          const double ka = 2.0 * k / p.omega.alpha;
          const double kr = k * d * d / r3;
          out.dcov[ia](i, j) = out.dcov[ia](j, i) = ka;
          out.dcov[ir](i, j) = out.dcov[ir](j, i) = kr;
        }
      }
    }
  }

  if (physics == Physics::Toy) {
    const double u = p.phi.at(0);
    const long iu = derivatives ? slot_pos(Slot::Phi0) : -1;
    const long is = derivatives ? slot_pos(Slot::SigmaU) : -1;
    for (Eigen::Index i = 0; i < nu; ++i) {
      out.model.mean(i) = ToyModel::eta(data.x_u[i], u);
      cov(i, i) += p.sigma_u * p.sigma_u;
      if (derivatives) {
        out.dmean[iu](i) = ToyModel::deta_du(data.x_u[i], u);
        out.dcov[is](i, i) = 2.0 * p.sigma_u;
      }
    }
    return out;
  }

  // Physics-informed WK2 blocks.
  const FirstOrderOperator L = FirstOrderOperator::wk2(p.wk2());
  const double R = p.phi[0];
  const double dadR = -1.0 / (R * R);
  const double inv_alpha2 = 2.0 / p.theta.alpha;
  const long iR = derivatives ? slot_pos(Slot::Phi0) : -1;
  const long iC = derivatives ? slot_pos(Slot::Phi1) : -1;
  const long ib = derivatives ? slot_pos(Slot::Beta) : -1;
  const long isu = derivatives ? slot_pos(Slot::SigmaU) : -1;
  const long isf = derivatives ? slot_pos(Slot::SigmaF) : -1;
  const long ita = derivatives ? slot_pos(Slot::ThetaAlpha) : -1;
  const long itr = derivatives ? slot_pos(Slot::ThetaRho) : -1;

  auto put = [&](Eigen::Index i, Eigen::Index j, double v) {
    cov(i, j) += v;
    if (i != j) cov(j, i) += v;
  };
  auto put_d = [&](long s, Eigen::Index i, Eigen::Index j, double v) {
    out.dcov[s](i, j) = v;
    out.dcov[s](j, i) = v;
  };

  for (Eigen::Index i = 0; i < nu; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const SEEntry e = se_entry(data.x_u[i], data.x_u[j], p.theta);
      put(i, j, e.k);
      if (derivatives) {
        put_d(ita, i, j, inv_alpha2 * e.k);
        put_d(itr, i, j, e.k_rho);
      }
    }
  }
  for (Eigen::Index i = 0; i < nf; ++i) {
    const Eigen::Index gi = nu + i;
    // Cov(Q(tQ_i), P(tP_j)) fills the lower-left block; its transpose is K_PQ.
    for (Eigen::Index j = 0; j < nu; ++j) {
      const SEEntry e = se_entry(data.x_f[i], data.x_u[j], p.theta);
      put(gi, j, L.fu(e));
      if (derivatives) {
        put_d(iR, gi, j, L.fu_a(e) * dadR);
        put_d(iC, gi, j, L.fu_b(e));
        put_d(ita, gi, j, inv_alpha2 * L.fu(e));
        put_d(itr, gi, j, L.fu_rho(e));
      }
    }
    for (Eigen::Index j = 0; j <= i; ++j) {
      const Eigen::Index gj = nu + j;
      const SEEntry e = se_entry(data.x_f[i], data.x_f[j], p.theta);
      put(gi, gj, L.ff(e));
      if (derivatives) {
        put_d(iR, gi, gj, L.ff_a(e) * dadR);
        put_d(iC, gi, gj, L.ff_b(e));
        put_d(ita, gi, gj, inv_alpha2 * L.ff(e));
        put_d(itr, gi, gj, L.ff_rho(e));
      }
    }
  }
  for (Eigen::Index i = 0; i < nu; ++i) {
    out.model.mean(i) = p.beta;
    cov(i, i) += p.sigma_u * p.sigma_u;
    if (derivatives) {
      out.dmean[ib](i) = 1.0;
      out.dcov[isu](i, i) = 2.0 * p.sigma_u;
    }
  }
  for (Eigen::Index i = nu; i < n; ++i) {
    out.model.mean(i) = p.beta / R;
    cov(i, i) += p.sigma_f * p.sigma_f;
    if (derivatives) {
      out.dmean[ib](i) = 1.0 / R;
      out.dmean[iR](i) = -p.beta / (R * R);
      out.dcov[isf](i, i) = 2.0 * p.sigma_f;
    }
  }
  return out;
}

inline GaussianModel assemble(const IndividualDataset& data, const IndividualParams& p,
                              Variant variant, Physics physics) {
  return assemble_with_derivatives(data, p, variant, physics, false).model;
}

/// Jitter multipliers (relative to the mean diagonal) tried in order when
/// the plain Cholesky factorization fails.
inline constexpr std::array<double, 3> kJitterLadder{1e-8, 1e-7, 1e-6};

/// Cholesky factorization with jitter escalation.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(const Eigen::MatrixXd& cov) {
    if (!cov.allFinite()) throw numerical_error("covariance has non-finite entries");
    llt_.compute(cov);
    if (ok(cov.rows())) return;
    const double mean_diag = cov.rows() > 0 ? cov.diagonal().mean() : 0.0;
    for (double level : kJitterLadder) {
      jitter_ = level * std::abs(mean_diag);
      Eigen::MatrixXd jittered = cov;
      jittered.diagonal().array() += jitter_;
      llt_.compute(jittered);
      if (ok(cov.rows())) return;
    }
    std::ostringstream os;
    os << "Cholesky failed after jitter " << jitter_ << " (n=" << cov.rows()
       << ", mean diagonal=" << mean_diag << ")";
    throw cholesky_error(os.str());
  }

  const Eigen::LLT<Eigen::MatrixXd>& llt() const noexcept { return llt_; }
  double jitter() const noexcept { return jitter_; }

  double log_det() const {
    const auto& L = llt_.matrixLLT();
    double s = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) s += std::log(L(i, i));
    return 2.0 * s;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return llt_.solve(b); }

  Eigen::MatrixXd inverse() const {
    const auto n = llt_.matrixLLT().rows();
    return llt_.solve(Eigen::MatrixXd::Identity(n, n));
  }

 private:
  bool ok(Eigen::Index n) const {
    if (llt_.info() != Eigen::Success) return false;
    const auto& L = llt_.matrixLLT();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(L(i, i) > 0.0) || !std::isfinite(L(i, i))) return false;
    }
    return true;
  }

  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// log N(y | mean, cov) via Cholesky.
inline double gaussian_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov) {
  if (y.size() != mean.size() || cov.rows() != y.size() || cov.cols() != y.size()) {
    throw std::invalid_argument("gaussian_logpdf: dimension mismatch");
  }
  const CholeskyFactor chol(cov);
  const Eigen::VectorXd r = y - mean;
  const Eigen::VectorXd a = chol.solve(r);
  return -0.5 * r.dot(a) - 0.5 * chol.log_det() - 0.5 * static_cast<double>(y.size()) * kLog2Pi;
}

struct LogpdfGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/**
 * Log-density and its gradient in parameters with known mean/covariance
 * derivatives:
 *   dL/dz_i = 1/2 tr((a a^T - cov^-1) dcov_i) + a^T dmean_i,  a = cov^-1 (y - mean).
 */
inline LogpdfGrad gaussian_logpdf_grad(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                                       const Eigen::MatrixXd& cov,
                                       std::span<const Eigen::VectorXd> dmean,
                                       std::span<const Eigen::MatrixXd> dcov) {
  if (dmean.size() != dcov.size()) {
    throw std::invalid_argument("gaussian_logpdf_grad: derivative list mismatch");
  }
  if (y.size() != mean.size() || cov.rows() != y.size() || cov.cols() != y.size()) {
    throw std::invalid_argument("gaussian_logpdf_grad: dimension mismatch");
  }
  const CholeskyFactor chol(cov);
  const Eigen::VectorXd r = y - mean;
  const Eigen::VectorXd a = chol.solve(r);
  LogpdfGrad out;
  out.value =
      -0.5 * r.dot(a) - 0.5 * chol.log_det() - 0.5 * static_cast<double>(y.size()) * kLog2Pi;
  out.grad.setZero(static_cast<Eigen::Index>(dcov.size()));
  if (dcov.empty()) return out;
  Eigen::MatrixXd W = a * a.transpose() - chol.inverse();
  for (std::size_t i = 0; i < dcov.size(); ++i) {
    double g = 0.0;
    if (dcov[i].size() != 0) g += 0.5 * (W.array() * dcov[i].array()).sum();
    if (dmean[i].size() != 0) g += a.dot(dmean[i]);
    out.grad(static_cast<Eigen::Index>(i)) = g;
  }
  return out;
}

/**
 * Marginal log-likelihood of one individual's observations (latent field
 * integrated out). When `grad` is non-null it receives the derivative in
 * every active slot; inactive slots are set to zero.
 */
inline double log_likelihood(const IndividualDataset& data, const IndividualParams& p,
                             Variant variant, Physics physics, SlotArray* grad = nullptr) {
  const Eigen::VectorXd y = data.observations();
  if (grad == nullptr) {
    const GaussianModel m = assemble(data, p, variant, physics);
    return gaussian_logpdf(y, m.mean, m.cov);
  }
  const GaussianModelDerivs m = assemble_with_derivatives(data, p, variant, physics);
  const LogpdfGrad lg = gaussian_logpdf_grad(y, m.model.mean, m.model.cov, m.dmean, m.dcov);
  grad->fill(0.0);
  for (std::size_t i = 0; i < m.slots.size(); ++i) {
    (*grad)[idx(m.slots[i])] = lg.grad(static_cast<Eigen::Index>(i));
  }
  return lg.value;
}

/// Posterior (or prior) Gaussian over latent function values.
struct Prediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct PiPrediction {
  Prediction u;
  Prediction f;
};

namespace detail {

/// Clamp roundoff negatives on the predictive variance diagonal.
inline void clamp_variance(Prediction& pr, const Eigen::MatrixXd& prior_cov) {
  for (Eigen::Index i = 0; i < pr.cov.rows(); ++i) {
    const double scale = std::max(1.0, std::abs(prior_cov(i, i)));
    if (pr.cov(i, i) < 0.0) {
      if (pr.cov(i, i) >= -1e-10 * scale) {
        pr.cov(i, i) = 0.0;
      } else {
        std::ostringstream os;
        os << "negative predictive variance " << pr.cov(i, i) << " at index " << i;
        throw numerical_error(os.str());
      }
    }
  }
}

inline Prediction condition(const Eigen::VectorXd& prior_mean, const Eigen::MatrixXd& prior_cov,
                            const Eigen::MatrixXd& cross, const GaussianModel& train,
                            const Eigen::VectorXd& y) {
  Prediction pr;
  if (y.size() == 0) {
    pr.mean = prior_mean;
    pr.cov = prior_cov;
    return pr;
  }
  const CholeskyFactor chol(train.cov);
  const Eigen::VectorXd a = chol.solve(Eigen::VectorXd(y - train.mean));
  pr.mean = prior_mean + cross.transpose() * a;
  pr.cov = prior_cov - cross.transpose() * chol.solve(cross);
  pr.cov = 0.5 * (pr.cov + pr.cov.transpose()).eval();
  clamp_variance(pr, prior_cov);
  return pr;
}

enum class PiBlock { UU, UF, FU, FF };

inline Eigen::MatrixXd pi_block(PiBlock kind, std::span<const double> xs,
                                std::span<const double> ys, const SEParams& theta,
                                const FirstOrderOperator& L) {
  Eigen::MatrixXd out(xs.size(), ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < ys.size(); ++j) {
      const SEEntry e = se_entry(xs[i], ys[j], theta);
      switch (kind) {
        case PiBlock::UU: out(i, j) = e.k; break;
        case PiBlock::UF: out(i, j) = L.uf(e); break;
        case PiBlock::FU: out(i, j) = L.fu(e); break;
        case PiBlock::FF: out(i, j) = L.ff(e); break;
      }
    }
  }
  return out;
}

}  // namespace detail

/**
 * Predictive distribution of the bias-corrected latent function
 * eta(x*, phi) + delta(x*) for a single-block model. NoDelta reduces to
 * the physical model alone with zero covariance.
 */
inline Prediction predict_general(const IndividualDataset& train, const IndividualParams& p,
                                  Variant variant, std::span<const double> x_star) {
  detail::check_shape(train, Physics::Toy);
  detail::check_params(p, Physics::Toy, variant);
  const auto ns = static_cast<Eigen::Index>(x_star.size());
  const double u = p.phi.at(0);
  Eigen::VectorXd prior_mean(ns);
  for (Eigen::Index i = 0; i < ns; ++i) prior_mean(i) = ToyModel::eta(x_star[i], u);
  Eigen::MatrixXd prior_cov = Eigen::MatrixXd::Zero(ns, ns);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(train.x_u.size()), ns);
  if (has_discrepancy(variant)) {
    prior_cov = se_matrix(x_star, x_star, p.omega);
    cross = se_matrix(train.x_u, x_star, p.omega);
  }
  const GaussianModel m = assemble(train, p, variant, Physics::Toy);
  return detail::condition(prior_mean, prior_cov, cross, m, train.observations());
}

/**
 * Predictive distributions of the bias-corrected u-block (pressure plus
 * discrepancy) at `xu_star` and the f-block (flow) at `xf_star` for the
 * physics-informed model.
 */
inline PiPrediction predict_pi(const IndividualDataset& train, const IndividualParams& p,
                               Variant variant, std::span<const double> xu_star,
                               std::span<const double> xf_star) {
  detail::check_shape(train, Physics::Wk2);
  detail::check_params(p, Physics::Wk2, variant);
  using detail::PiBlock;
  const FirstOrderOperator L = FirstOrderOperator::wk2(p.wk2());
  const bool delta = has_discrepancy(variant);
  const auto nu = static_cast<Eigen::Index>(train.x_u.size());
  const auto nf = static_cast<Eigen::Index>(train.x_f.size());
  const auto nus = static_cast<Eigen::Index>(xu_star.size());
  const auto nfs = static_cast<Eigen::Index>(xf_star.size());

  Eigen::MatrixXd vu(nu + nf, nus);
  vu.topRows(nu) = detail::pi_block(PiBlock::UU, train.x_u, xu_star, p.theta, L);
  if (delta) vu.topRows(nu) += se_matrix(train.x_u, xu_star, p.omega);
  vu.bottomRows(nf) = detail::pi_block(PiBlock::FU, train.x_f, xu_star, p.theta, L);
  Eigen::MatrixXd u_prior = detail::pi_block(PiBlock::UU, xu_star, xu_star, p.theta, L);
  if (delta) u_prior += se_matrix(xu_star, xu_star, p.omega);

  Eigen::MatrixXd vf(nu + nf, nfs);
  vf.topRows(nu) = detail::pi_block(PiBlock::UF, train.x_u, xf_star, p.theta, L);
  vf.bottomRows(nf) = detail::pi_block(PiBlock::FF, train.x_f, xf_star, p.theta, L);
  const Eigen::MatrixXd f_prior = detail::pi_block(PiBlock::FF, xf_star, xf_star, p.theta, L);

  const GaussianModel m = assemble(train, p, variant, Physics::Wk2);
  const Eigen::VectorXd y = train.observations();
  PiPrediction out;
  out.u = detail::condition(Eigen::VectorXd::Constant(nus, p.beta), u_prior, vu, m, y);
  out.f = detail::condition(Eigen::VectorXd::Constant(nfs, p.beta / p.phi[0]), f_prior, vf, m, y);
  return out;
}

}  // namespace dtwin

#endif  // DTWIN_GP_CORE_HPP
