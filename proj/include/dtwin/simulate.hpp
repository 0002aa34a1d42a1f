#ifndef DTWIN_SIMULATE_HPP
#define DTWIN_SIMULATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "dtwin/errors.hpp"
#include "dtwin/gp_core.hpp"
#include "dtwin/rng.hpp"

namespace dtwin::simulate {

// ---------------------------------------------------------------------------
// Toy exponential study
// ---------------------------------------------------------------------------

struct ToyDesign {
  int n_train = 20;
  double x_max = 2.0;          // training inputs equally spaced on [0, x_max]
  double true_amplitude = 3.5;  // reality is 3.5 exp(-u x) + b + noise
  double u_offset = 0.7;        // u_m = u_offset + u_step * m
  double u_step = 0.1;
  double b_lo = 0.5;
  double b_hi = 5.0;
  double noise_sd = 0.3;
  int n_pred = 41;
  double pred_max = 4.0;  // prediction grid on [0, pred_max]
  double split = 2.0;     // interpolation / extrapolation boundary
};

struct ToyTruth {
  std::vector<double> u;
  std::vector<double> b;
  double noise_sd = 0.0;
};

struct ToyStudy {
  std::vector<IndividualDataset> data;
  ToyTruth truth;
};

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  }
  return out;
}

inline double toy_reality(double x, double u, double b, double amplitude) {
  return amplitude * std::exp(-u * x) + b;
}

inline ToyStudy gen_toy(int M, std::uint64_t seed, const ToyDesign& design = {}) {
  if (M < 1) throw std::invalid_argument("gen_toy: M must be >= 1");
  CounterRng rng(derive_key(seed, 0x746F79ULL));
  ToyStudy st;
  st.truth.noise_sd = design.noise_sd;
  const std::vector<double> x = linspace(0.0, design.x_max, design.n_train);
  for (int m = 1; m <= M; ++m) {
    const double u = design.u_offset + design.u_step * m;
    const double b = rng.uniform(design.b_lo, design.b_hi);
    st.truth.u.push_back(u);
    st.truth.b.push_back(b);
    IndividualDataset d;
    d.id = m;
    d.x_u = x;
    for (double xi : x) {
      d.y_u.push_back(toy_reality(xi, u, b, design.true_amplitude) +
                      design.noise_sd * rng.normal());
    }
    st.data.push_back(std::move(d));
  }
  return st;
}

// ---------------------------------------------------------------------------
// Inflow waveform and Windkessel solvers
// ---------------------------------------------------------------------------

/// Periodic half-sine systolic inflow, zero in diastole.
struct Inflow {
  double period = 0.8;    // s
  double systole = 0.3;   // s
  double q_max = 425.0;   // mL/s

  double phase(double t) const noexcept {
    double tt = std::fmod(t, period);
    if (tt < 0) tt += period;
    return tt;
  }

  double operator()(double t) const noexcept {
    const double tt = phase(t);
    return tt < systole ? q_max * std::sin(std::numbers::pi * tt / systole) : 0.0;
  }

  double derivative(double t) const noexcept {
    const double tt = phase(t);
    return tt < systole ? q_max * std::numbers::pi / systole *
                              std::cos(std::numbers::pi * tt / systole)
                        : 0.0;
  }

  /// Interior times within a cycle where the waveform has a kink.
  std::vector<double> breakpoints() const { return {systole}; }

  /// Closed-form stroke volume: q_max * 2 * systole / pi.
  double stroke_volume() const noexcept { return q_max * 2.0 * systole / std::numbers::pi; }
  double mean_flow() const noexcept { return stroke_volume() / period; }
};

/// Constant flow with a nominal period (used to probe solver fixed points).
struct ConstantFlow {
  double q = 100.0;
  double period = 0.8;
  double operator()(double) const noexcept { return q; }
  double derivative(double) const noexcept { return 0.0; }
};

struct SolverSettings {
  double dt = 1e-4;
  int burnin_cycles = 10;
  int max_cycles = 30;
  double periodic_tol = 0.1;  // mmHg, |P(0) - P(T)| over the returned cycle
};

namespace detail {

template <class F>
double rk4_step(const F& f, double t, double y, double h) {
  const double k1 = f(t, y);
  const double k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
  const double k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
  const double k4 = f(t + h, y + h * k3);
  return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/**
 * Integrate dP/dt = f(t, P) with classical RK4 to periodic steady state, then
 * report P on `t_grid` (times within one cycle, measured from the cycle
 * start). `breaks` are the interior times where the inflow is not smooth;
 * steps land on them and stages are evaluated inside the current piece.
 */
template <class F>
std::vector<double> periodic_solve(const F& f, double period, std::vector<double> breaks,
                                   std::vector<double> t_grid, double P0, const SolverSettings& s) {
  if (!(s.dt > 0.0)) throw std::invalid_argument("solver step must be positive");
  for (double t : t_grid) {
    if (!(t >= 0.0 && t <= period)) throw std::invalid_argument("grid time outside one cycle");
  }
  breaks.push_back(0.0);
  breaks.push_back(period);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  const double nudge = 1e-12 * period;

  // Advance y from t0 to t1 within one smooth piece [lo, hi].
  auto piece = [&](double y, double t0, double t1, double lo, double hi) {
    if (!(t1 > t0)) return y;
    auto g = [&](double t, double v) { return f(std::clamp(t, lo + nudge, hi - nudge), v); };
    const long n = static_cast<long>(std::ceil((t1 - t0) / s.dt - 1e-9));
    const double h = (t1 - t0) / static_cast<double>(n);
    for (long i = 0; i < n; ++i) y = rk4_step(g, t0 + h * static_cast<double>(i), y, h);
    return y;
  };
  auto advance = [&](double y, double t0, double t1) {
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
      const double lo = breaks[k], hi = breaks[k + 1];
      y = piece(y, std::max(t0, lo), std::min(t1, hi), lo, hi);
    }
    return y;
  };

  double P = P0;
  for (int c = 0; c < s.burnin_cycles; ++c) P = advance(P, 0.0, period);
  int cycles = s.burnin_cycles;
  while (true) {
    const double end = advance(P, 0.0, period);
    ++cycles;
    if (!std::isfinite(end)) throw numerical_error("Windkessel solution is not finite");
    if (std::abs(end - P) < s.periodic_tol) break;
    if (cycles >= s.max_cycles) {
      std::ostringstream os;
      os << "no periodic steady state after " << cycles << " cycles (|P(0)-P(T)|="
         << std::abs(end - P) << ")";
      throw numerical_error(os.str());
    }
    P = end;
  }

  // P holds the state at the start of a periodic cycle; march to each time.
  std::vector<std::size_t> order(t_grid.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t_grid[a] < t_grid[b]; });
  std::vector<double> out(t_grid.size());
  double t = 0.0;
  double y = P;
  for (std::size_t k : order) {
    y = advance(y, t, t_grid[k]);
    t = std::max(t, t_grid[k]);
    out[k] = y;
  }
  return out;
}

template <class Flow>
std::vector<double> flow_breaks(const Flow& Q) {
  if constexpr (requires { Q.breakpoints(); }) {
    return Q.breakpoints();
  } else {
    return {};
  }
}

}  // namespace detail

/**
 * Three-element Windkessel pressure on one steady-state cycle:
 *   dP/dt + P/(R2 C) = Q/C (1 + R1/R2) + R1 dQ/dt.
 */
template <class Flow>
std::vector<double> wk3_solve(const Flow& Q, double R1, double R2, double C,
                              std::vector<double> t_grid, double P0,
                              const SolverSettings& s = {}) {
  if (!(R1 >= 0.0) || !(R2 > 0.0) || !(C > 0.0)) {
    throw std::invalid_argument("wk3_solve: parameters must be positive");
  }
  auto f = [&](double t, double P) {
    return -P / (R2 * C) + Q(t) / C * (1.0 + R1 / R2) + R1 * Q.derivative(t);
  };
  return detail::periodic_solve(f, Q.period, detail::flow_breaks(Q), std::move(t_grid), P0, s);
}

/// Two-element Windkessel pressure: Q = P/R + C dP/dt.
template <class Flow>
std::vector<double> wk2_solve(const Flow& Q, double R, double C, std::vector<double> t_grid,
                              double P0, const SolverSettings& s = {}) {
  if (!(R > 0.0) || !(C > 0.0)) throw std::invalid_argument("wk2_solve: parameters must be positive");
  auto f = [&](double t, double P) { return (Q(t) - P / R) / C; };
  return detail::periodic_solve(f, Q.period, detail::flow_breaks(Q), std::move(t_grid), P0, s);
}

// ---------------------------------------------------------------------------
// Cardiovascular study
// ---------------------------------------------------------------------------

struct CardioDesign {
  std::vector<double> r2_levels{1.0, 1.15, 1.3};
  std::vector<double> c_levels{0.95, 1.1, 1.25};
  double r1_lo = 0.02;
  double r1_hi = 0.1;
  int n_p = 20;  // pressure samples over one cycle, starting at t = 0
  int n_q = 15;  // flow samples, offset by half a step
  double sigma_p = 4.0;
  double sigma_q = 10.0;
  Inflow inflow{};
  SolverSettings solver{};
  int n_pred = 50;  // prediction grid over one cycle
};

struct WK3Truth {
  std::vector<double> R1;
  std::vector<double> R2;
  std::vector<double> C;
  double sigma_P = 0.0;
  double sigma_Q = 0.0;
  Inflow inflow{};

  /// Total resistance, the quantity a WK2 fit estimates.
  double R_total(std::size_t m) const { return R1.at(m) + R2.at(m); }
};

struct CardioStudy {
  std::vector<IndividualDataset> data;
  WK3Truth truth;
};

inline std::vector<double> pressure_grid(const CardioDesign& d) {
  std::vector<double> t;
  for (int i = 0; i < d.n_p; ++i) t.push_back(d.inflow.period * i / d.n_p);
  return t;
}

inline std::vector<double> flow_grid(const CardioDesign& d) {
  std::vector<double> t;
  for (int j = 0; j < d.n_q; ++j) t.push_back(d.inflow.period * (j + 0.5) / d.n_q);
  return t;
}

/// Noise-free steady-state WK3 pressure at `t` for given parameters.
inline std::vector<double> wk3_pressure(const CardioDesign& d, double R1, double R2, double C,
                                        const std::vector<double>& t) {
  const double P0 = d.inflow.mean_flow() * (R1 + R2);
  return wk3_solve(d.inflow, R1, R2, C, t, P0, d.solver);
}

inline CardioStudy gen_cardio(std::uint64_t seed, const CardioDesign& design = {}) {
  CounterRng rng(derive_key(seed, 0x636172ULL));
  CardioStudy st;
  st.truth.sigma_P = design.sigma_p;
  st.truth.sigma_Q = design.sigma_q;
  st.truth.inflow = design.inflow;
  const std::vector<double> tP = pressure_grid(design);
  const std::vector<double> tQ = flow_grid(design);
  int id = 1;
  for (double R2 : design.r2_levels) {
    for (double C : design.c_levels) {
      const double R1 = rng.uniform(design.r1_lo, design.r1_hi);
      const std::vector<double> P = wk3_pressure(design, R1, R2, C, tP);
      for (double p : P) {
        if (!(p > 20.0 && p < 250.0)) {
          std::ostringstream os;
          os << "simulated pressure " << p << " mmHg outside (20, 250) for individual " << id;
          throw numerical_error(os.str());
        }
      }
      IndividualDataset d;
      d.id = id++;
      d.x_u = tP;
      d.x_f = tQ;
      for (double p : P) d.y_u.push_back(p + design.sigma_p * rng.normal());
      for (double t : tQ) d.y_f.push_back(design.inflow(t) + design.sigma_q * rng.normal());
      st.truth.R1.push_back(R1);
      st.truth.R2.push_back(R2);
      st.truth.C.push_back(C);
      st.data.push_back(std::move(d));
    }
  }
  return st;
}

}  // namespace dtwin::simulate

#endif  // DTWIN_SIMULATE_HPP
