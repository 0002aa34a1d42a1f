#ifndef DTWIN_SAMPLER_DIAGNOSTICS_HPP
#define DTWIN_SAMPLER_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace dtwin::sampler {

using Chains = std::vector<std::vector<double>>;

namespace detail {

inline void require_chains(const Chains& chains) {
  if (chains.size() < 2) throw std::invalid_argument("diagnostics need at least 2 chains");
  const std::size_t n = chains.front().size();
  if (n < 4) throw std::invalid_argument("diagnostics need at least 4 draws per chain");
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("chains must have equal length");
}

/// Split every chain into its first and second half (odd middle draw dropped).
inline Chains split(const Chains& chains) {
  Chains out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

inline double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

/// Classic potential scale reduction on already-split chains.
inline double rhat_classic(const Chains& chains) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean(c));
    vars.push_back(variance(c));
  }
  const double W = mean(vars);
  const double B = n * variance(means);
  if (!(W > 0.0) || !std::isfinite(W)) return std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

/// Replace draws by normal scores of their pooled fractional ranks.
inline Chains rank_normalize(const Chains& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  const std::size_t n = chains.front().size();
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < n; ++i) all.emplace_back(chains[c][i], c * n + i);
  std::sort(all.begin(), all.end());
  const double S = static_cast<double>(all.size());
  std::vector<double> z(all.size());
  const boost::math::normal_distribution<double> std_normal;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1].first == all[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;  // average rank, 1-based
    const double score = boost::math::quantile(std_normal, (rank - 0.375) / (S + 0.25));
    for (std::size_t k = i; k <= j; ++k) z[all[k].second] = score;
    i = j + 1;
  }
  Chains out(chains.size(), std::vector<double>(n));
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < n; ++i) out[c][i] = z[c * n + i];
  return out;
}

inline bool constant(const Chains& chains) {
  const double v = chains.front().front();
  for (const auto& c : chains)
    for (double x : c)
      if (x != v) return false;
  return true;
}

}  // namespace detail

/**
 * Rank-normalized split R-hat: the larger of the bulk statistic (normal
 * scores of pooled ranks) and the tail statistic (same on |x - median|).
 * Constant draws yield +inf.
 */
inline double split_rhat(const Chains& chains) {
  detail::require_chains(chains);
  const Chains s = detail::split(chains);
  if (detail::constant(s)) return std::numeric_limits<double>::infinity();
  for (const auto& c : s)
    for (double x : c)
      if (!std::isfinite(x)) return std::numeric_limits<double>::infinity();

  const double bulk = detail::rhat_classic(detail::rank_normalize(s));

  std::vector<double> pooled;
  for (const auto& c : s) pooled.insert(pooled.end(), c.begin(), c.end());
  auto mid = pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2);
  std::nth_element(pooled.begin(), mid, pooled.end());
  double median = *mid;
  if (pooled.size() % 2 == 0) {
    const double lower = *std::max_element(pooled.begin(), mid);
    median = 0.5 * (median + lower);
  }
  Chains folded = s;
  for (auto& c : folded)
    for (double& x : c) x = std::abs(x - median);
  const double tail = detail::constant(folded)
                          ? std::numeric_limits<double>::infinity()
                          : detail::rhat_classic(detail::rank_normalize(folded));
  return std::max(bulk, tail);
}

/**
 * Effective sample size from split chains: combined autocorrelation
 * estimate, Geyer initial positive sequence truncated at the first
 * negative pair sum, made monotone. Constant draws yield 0.
 */
inline double ess(const Chains& chains) {
  detail::require_chains(chains);
  const Chains s = detail::split(chains);
  if (detail::constant(s)) return 0.0;
  const std::size_t m = s.size();
  const std::size_t n = s.front().size();
  const double nd = static_cast<double>(n);

  std::vector<double> means(m);
  for (std::size_t c = 0; c < m; ++c) means[c] = detail::mean(s[c]);
  auto acov = [&](std::size_t c, std::size_t lag) {
    double sum = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) sum += (s[c][i] - means[c]) * (s[c][i + lag] - means[c]);
    return sum / nd;
  };
  auto mean_acov = [&](std::size_t lag) {
    double t = 0.0;
    for (std::size_t c = 0; c < m; ++c) t += acov(c, lag);
    return t / static_cast<double>(m);
  };
  std::vector<double> chain_var(m);
  for (std::size_t c = 0; c < m; ++c) chain_var[c] = acov(c, 0) * nd / (nd - 1.0);
  const double mean_var = detail::mean(chain_var);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += detail::variance(means);
  if (!(var_plus > 0.0)) return 0.0;

  std::vector<double> rho(n + 1, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = rho_odd;
  std::size_t t = 1;
  while (t + 5 < n && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho[max_t + 1] = rho_even;

  for (std::size_t k = 1; k + 2 <= max_t; k += 2) {
    if (rho[k + 1] + rho[k + 2] > rho[k - 1] + rho[k]) {
      rho[k + 1] = 0.5 * (rho[k - 1] + rho[k]);
      rho[k + 2] = rho[k + 1];
    }
  }
  const double total = static_cast<double>(m) * nd;
  double tau = -1.0 + rho[max_t + 1];
  for (std::size_t k = 0; k <= max_t; ++k) tau += 2.0 * rho[k];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

/**
 * Quantile with piecewise-linear interpolation at plotting positions
 * (i - 0.5) / N (Hyndman & Fan type 5). `sorted` must be ascending.
 */
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  const double N = static_cast<double>(sorted.size());
  const double h = N * p + 0.5;  // 1-based position
  if (h <= 1.0) return sorted.front();
  if (h >= N) return sorted.back();
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  return sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1]);
}

inline double quantile(std::vector<double> draws, double p) {
  std::sort(draws.begin(), draws.end());
  return quantile_sorted(draws, p);
}

/// Equal-tailed credible interval at the given level.
inline std::pair<double, double> credible_interval(std::vector<double> draws, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0, 1)");
  std::sort(draws.begin(), draws.end());
  const double tail = 0.5 * (1.0 - level);
  return {quantile_sorted(draws, tail), quantile_sorted(draws, 1.0 - tail)};
}

}  // namespace dtwin::sampler

#endif  // DTWIN_SAMPLER_DIAGNOSTICS_HPP
