#ifndef DTWIN_KERNELS_HPP
#define DTWIN_KERNELS_HPP

#include <cmath>
#include <span>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "dtwin/errors.hpp"

namespace dtwin {

/// Squared-exponential kernel parameters: marginal sd and length-scale.
struct SEParams {
  double alpha = 1.0;
  double rho = 1.0;
};

/// Two-element Windkessel parameters: resistance and compliance.
struct WK2Params {
  double R = 1.0;
  double C = 1.0;
};

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw numerical_error(std::string("non-finite ") + what);
  }
}

inline void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    std::ostringstream os;
    os << what << " must be positive and finite, got " << v;
    throw numerical_error(os.str());
  }
}

}  // namespace detail

inline void validate(const SEParams& p) {
  detail::require_positive(p.alpha, "kernel alpha");
  detail::require_positive(p.rho, "kernel rho");
}

inline void validate(const WK2Params& p) {
  detail::require_positive(p.R, "resistance R");
  detail::require_positive(p.C, "compliance C");
}

/// k(x, x2) = alpha^2 exp(-(x - x2)^2 / (2 rho^2)).
inline double se_kernel(double x, double x2, const SEParams& p) {
  detail::require_finite(x, "kernel input");
  detail::require_finite(x2, "kernel input");
  validate(p);
  const double d = x - x2;
  return p.alpha * p.alpha * std::exp(-0.5 * d * d / (p.rho * p.rho));
}

/// dk/dx2 = k * d / rho^2 with d = x - x2.
inline double se_kernel_dx2(double x, double x2, const SEParams& p) {
  const double d = x - x2;
  return se_kernel(x, x2, p) * d / (p.rho * p.rho);
}

/// dk/dx = -k * d / rho^2.
inline double se_kernel_dx(double x, double x2, const SEParams& p) {
  return -se_kernel_dx2(x, x2, p);
}

/// d2k/(dx dx2) = k * (1/rho^2 - d^2/rho^4).
inline double se_kernel_dx_dx2(double x, double x2, const SEParams& p) {
  const double d = x - x2;
  const double r2 = p.rho * p.rho;
  return se_kernel(x, x2, p) * (1.0 / r2 - d * d / (r2 * r2));
}

/**
 * All SE kernel quantities needed by the physics-informed blocks at one
 * input pair, together with their derivatives in rho. Derivatives in alpha
 * are `2/alpha` times the value for every field, so they are not stored.
 */
struct SEEntry {
  double k = 0.0;       // k
  double k_x = 0.0;     // dk/dx
  double k_x2 = 0.0;    // dk/dx2
  double k_xx2 = 0.0;   // d2k/dx dx2
  double k_rho = 0.0;
  double k_x_rho = 0.0;
  double k_x2_rho = 0.0;
  double k_xx2_rho = 0.0;
};

/// Unchecked evaluation; callers validate parameters once per matrix.
inline SEEntry se_entry(double x, double x2, const SEParams& p) noexcept {
  const double d = x - x2;
  const double d2 = d * d;
  const double r = p.rho;
  const double r2 = r * r;
  const double r3 = r2 * r;
  const double r4 = r2 * r2;
  const double r5 = r4 * r;
  SEEntry e;
  e.k = p.alpha * p.alpha * std::exp(-0.5 * d2 / r2);
  e.k_x2 = e.k * d / r2;
  e.k_x = -e.k_x2;
  e.k_xx2 = e.k * (1.0 / r2 - d2 / r4);
  e.k_rho = e.k * d2 / r3;
  e.k_x2_rho = e.k * d * (d2 / r5 - 2.0 / r3);
  e.k_x_rho = -e.k_x2_rho;
  e.k_xx2_rho = e.k_rho * (1.0 / r2 - d2 / r4) + e.k * (-2.0 / r3 + 4.0 * d2 / r5);
  return e;
}

/// SE covariance matrix between two input sets.
inline Eigen::MatrixXd se_matrix(std::span<const double> xs, std::span<const double> ys,
                                 const SEParams& p) {
  validate(p);
  Eigen::MatrixXd out(xs.size(), ys.size());
  const double a2 = p.alpha * p.alpha;
  const double inv = 0.5 / (p.rho * p.rho);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < ys.size(); ++j) {
      const double d = xs[i] - ys[j];
      out(i, j) = a2 * std::exp(-d * d * inv);
    }
  }
  return out;
}

/**
 * First-order linear operator `L = a + b d/dt` acting on a GP with SE
 * kernel. For the two-element Windkessel, `a = 1/R` and `b = C`, so that
 * `L P = Q`.
 *
 * Cross- and auto-covariances follow from applying L to either argument:
 *   K_uf(t,t') = a k + b dk/dt'
 *   K_fu(t,t') = a k + b dk/dt
 *   K_ff(t,t') = a^2 k + a b (dk/dt + dk/dt') + b^2 d2k/dt dt'
 * The mixed term of K_ff vanishes for stationary kernels, but it is kept so
 * the blocks are the literal operator product.
 */
struct FirstOrderOperator {
  double a = 1.0;
  double b = 0.0;

  static FirstOrderOperator wk2(const WK2Params& phi) { return {1.0 / phi.R, phi.C}; }

  double uf(const SEEntry& e) const noexcept { return a * e.k + b * e.k_x2; }
  double fu(const SEEntry& e) const noexcept { return a * e.k + b * e.k_x; }
  double ff(const SEEntry& e) const noexcept {
    return a * a * e.k + a * b * (e.k_x + e.k_x2) + b * b * e.k_xx2;
  }

  double uf_rho(const SEEntry& e) const noexcept { return a * e.k_rho + b * e.k_x2_rho; }
  double fu_rho(const SEEntry& e) const noexcept { return a * e.k_rho + b * e.k_x_rho; }
  double ff_rho(const SEEntry& e) const noexcept {
    return a * a * e.k_rho + a * b * (e.k_x_rho + e.k_x2_rho) + b * b * e.k_xx2_rho;
  }

  // Partial derivatives in the operator coefficients.
  double uf_a(const SEEntry& e) const noexcept { return e.k; }
  double uf_b(const SEEntry& e) const noexcept { return e.k_x2; }
  double fu_a(const SEEntry& e) const noexcept { return e.k; }
  double fu_b(const SEEntry& e) const noexcept { return e.k_x; }
  double ff_a(const SEEntry& e) const noexcept {
    return 2.0 * a * e.k + b * (e.k_x + e.k_x2);
  }
  double ff_b(const SEEntry& e) const noexcept {
    return a * (e.k_x + e.k_x2) + 2.0 * b * e.k_xx2;
  }
};

/// Covariance blocks of the joint (pressure, flow) GP under the WK2 operator.
struct Wk2Blocks {
  Eigen::MatrixXd pp;  // Cov(P(tP), P(tP'))
  Eigen::MatrixXd pq;  // Cov(P(tP), Q(tQ'))
  Eigen::MatrixXd qp;  // Cov(Q(tQ), P(tP'))
  Eigen::MatrixXd qq;  // Cov(Q(tQ), Q(tQ'))
};

inline Wk2Blocks wk2_blocks(std::span<const double> tP, std::span<const double> tQ,
                            const SEParams& theta, const WK2Params& phi) {
  if (tP.empty() || tQ.empty()) {
    throw std::invalid_argument("wk2_blocks: empty time grid");
  }
  validate(theta);
  validate(phi);
  for (double t : tP) detail::require_finite(t, "pressure time");
  for (double t : tQ) detail::require_finite(t, "flow time");
  const FirstOrderOperator L = FirstOrderOperator::wk2(phi);
  const auto np = static_cast<Eigen::Index>(tP.size());
  const auto nq = static_cast<Eigen::Index>(tQ.size());
  Wk2Blocks b{Eigen::MatrixXd(np, np), Eigen::MatrixXd(np, nq), Eigen::MatrixXd(nq, np),
              Eigen::MatrixXd(nq, nq)};
  for (Eigen::Index i = 0; i < np; ++i) {
    for (Eigen::Index j = 0; j < np; ++j) b.pp(i, j) = se_entry(tP[i], tP[j], theta).k;
    for (Eigen::Index j = 0; j < nq; ++j) b.pq(i, j) = L.uf(se_entry(tP[i], tQ[j], theta));
  }
  for (Eigen::Index i = 0; i < nq; ++i) {
    for (Eigen::Index j = 0; j < np; ++j) b.qp(i, j) = L.fu(se_entry(tQ[i], tP[j], theta));
    for (Eigen::Index j = 0; j < nq; ++j) b.qq(i, j) = L.ff(se_entry(tQ[i], tQ[j], theta));
  }
  return b;
}

/// Full symmetric joint covariance [[K_PP, K_PQ], [K_QP, K_QQ]].
inline Eigen::MatrixXd wk2_joint(const Wk2Blocks& b) {
  const auto np = b.pp.rows();
  const auto nq = b.qq.rows();
  Eigen::MatrixXd out(np + nq, np + nq);
  out.topLeftCorner(np, np) = b.pp;
  out.topRightCorner(np, nq) = b.pq;
  out.bottomLeftCorner(nq, np) = b.qp;
  out.bottomRightCorner(nq, nq) = b.qq;
  return out;
}

}  // namespace dtwin

#endif  // DTWIN_KERNELS_HPP
