#ifndef DTWIN_TESTS_SUPPORT_HPP
#define DTWIN_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "dtwin/gp_core.hpp"
#include "dtwin/rng.hpp"

namespace dtwin::testing {

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference with a step relative to |x|.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
  const double step = h * std::max(1.0, std::abs(x));
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

inline std::vector<double> sorted_uniform(CounterRng& rng, int n, double lo, double hi) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  std::sort(v.begin(), v.end());
  return v;
}

inline Eigen::MatrixXd random_spd(CounterRng& rng, int n) {
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
  return A * A.transpose() + n * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::VectorXd random_vector(CounterRng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

/// Dense-inverse evaluation of the Gaussian log-density.
inline double dense_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                           const Eigen::MatrixXd& cov) {
  const Eigen::VectorXd r = y - mu;
  const double quad = r.dot(cov.inverse() * r);
  return -0.5 * quad - 0.5 * std::log(cov.determinant()) -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * M_PI);
}

/// Brute-force conditioning of a joint Gaussian [a; b] on a = y.
struct Conditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline Conditional condition_joint(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                   Eigen::Index n_obs, const Eigen::VectorXd& y) {
  const Eigen::Index n_new = mean.size() - n_obs;
  const Eigen::MatrixXd Saa = cov.topLeftCorner(n_obs, n_obs);
  const Eigen::MatrixXd Sab = cov.topRightCorner(n_obs, n_new);
  const Eigen::MatrixXd Sbb = cov.bottomRightCorner(n_new, n_new);
  const Eigen::MatrixXd inv = Saa.inverse();
  return {mean.tail(n_new) + Sab.transpose() * inv * (y - mean.head(n_obs)),
          Sbb - Sab.transpose() * inv * Sab};
}

inline IndividualDataset toy_dataset(CounterRng& rng, int n, int id = 1) {
  IndividualDataset d;
  d.id = id;
  d.x_u = sorted_uniform(rng, n, 0.0, 2.0);
  for (double x : d.x_u) d.y_u.push_back(3.5 * std::exp(-1.1 * x) + 1.5 + 0.3 * rng.normal());
  return d;
}

inline IndividualDataset cardio_dataset(CounterRng& rng, int np, int nq, int id = 1) {
  IndividualDataset d;
  d.id = id;
  d.x_u = sorted_uniform(rng, np, 0.0, 0.8);
  d.x_f = sorted_uniform(rng, nq, 0.0, 0.8);
  for (double t : d.x_u) d.y_u.push_back(90.0 + 20.0 * std::sin(7.0 * t) + 2.0 * rng.normal());
  for (double t : d.x_f) d.y_f.push_back(std::max(0.0, 300.0 * std::sin(10.0 * t)) + 5.0 * rng.normal());
  return d;
}

inline IndividualParams random_toy_params(CounterRng& rng) {
  IndividualParams p;
  p.phi = {rng.uniform(0.5, 2.0)};
  p.omega = {rng.uniform(0.5, 2.0), rng.uniform(0.3, 1.5)};
  p.sigma_u = rng.uniform(0.2, 0.6);
  return p;
}

inline IndividualParams random_cardio_params(CounterRng& rng) {
  IndividualParams p;
  p.phi = {rng.uniform(0.8, 1.6), rng.uniform(0.8, 1.4)};
  p.theta = {rng.uniform(10.0, 30.0), rng.uniform(0.08, 0.2)};
  p.omega = {rng.uniform(3.0, 10.0), rng.uniform(0.08, 0.2)};
  p.beta = rng.uniform(80.0, 110.0);
  p.sigma_u = rng.uniform(2.0, 6.0);
  p.sigma_f = rng.uniform(6.0, 15.0);
  return p;
}

}  // namespace dtwin::testing

#endif  // DTWIN_TESTS_SUPPORT_HPP
