#ifndef DTWIN_SAMPLER_NUTS_HPP
#define DTWIN_SAMPLER_NUTS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "dtwin/errors.hpp"
#include "dtwin/rng.hpp"
#include "dtwin/sampler/dual_average.hpp"

namespace dtwin::sampler {

/// Log-density with gradient. Must be re-entrant: chains call it
/// concurrently. Throwing `numerical_error` marks the point as rejected.
using LogDensity = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Maps an unconstrained draw to the reported (constrained) vector.
using ConstrainFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct SamplerConfig {
  int n_chains = 4;
  int n_warmup = 1000;
  int n_samples = 1000;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  int n_threads = 1;
  /// When false, warmup runs at `init_step_size` with a unit metric.
  bool adapt = true;
  double init_step_size = 1.0;

  void validate() const {
    if (n_chains < 1) throw config_error("n_chains must be >= 1");
    if (n_warmup < 1) throw config_error("n_warmup must be > 0");
    if (n_samples < 1) throw config_error("n_samples must be > 0");
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
      throw config_error("target_accept must lie in (0, 1)");
    }
    if (max_tree_depth < 1 || max_tree_depth > 12) {
      throw config_error("max_tree_depth must lie in [1, 12]");
    }
    if (!(init_step_size > 0.0)) throw config_error("init_step_size must be positive");
  }
};

struct ChainOutput {
  Eigen::MatrixXd draws;              // n_samples x dim, unconstrained
  Eigen::MatrixXd constrained_draws;  // n_samples x constrained dim
  std::vector<double> accept_stats;
  std::vector<int> tree_depths;
  std::vector<int> n_leapfrog;
  std::vector<double> log_density;
  int divergences = 0;         // during sampling
  int warmup_divergences = 0;  // during warmup
  double step_size = 0.0;
  Eigen::VectorXd mass_diag;   // adapted inverse-metric diagonal (posterior variance estimate)
  double seconds = 0.0;
};

/// Divergence threshold on the energy error.
inline constexpr double kMaxDeltaH = 1000.0;

namespace detail {

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;  // gradient of log density at q
  double logp = -std::numeric_limits<double>::infinity();
};

class Welford {
 public:
  explicit Welford(Eigen::Index dim) : mean_(Eigen::VectorXd::Zero(dim)), m2_(mean_) {}
  void add(const Eigen::VectorXd& x) {
    ++n_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(x - mean_);
  }
  long count() const noexcept { return n_; }
  Eigen::VectorXd variance() const {
    return n_ > 1 ? Eigen::VectorXd(m2_ / static_cast<double>(n_ - 1))
                  : Eigen::VectorXd::Ones(mean_.size());
  }
  void restart() {
    n_ = 0;
    mean_.setZero();
    m2_.setZero();
  }

 private:
  long n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/**
 * One NUTS chain with a diagonal Euclidean metric, multinomial sampling
 * over the trajectory and the generalized no-U-turn criterion evaluated
 * across merged subtrees.
 */
class NutsChain {
 public:
  NutsChain(const LogDensity& logp, Eigen::Index dim, const SamplerConfig& cfg,
            std::uint64_t key)
      : logp_(logp),
        cfg_(cfg),
        rng_(key),
        inv_metric_(Eigen::VectorXd::Ones(dim)),
        z_{Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim)},
        step_(cfg.init_step_size) {}

  void initialize() {
    const Eigen::Index dim = z_.q.size();
    double radius = 2.0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (Eigen::Index i = 0; i < dim; ++i) z_.q(i) = rng_.uniform(-radius, radius);
      if (evaluate(z_) && z_.grad.allFinite()) return;
      radius *= 0.95;
    }
    throw sampler_error("initialization failed after 100 attempts");
  }

  const PhasePoint& state() const noexcept { return z_; }
  double step_size() const noexcept { return step_; }
  void set_step_size(double eps) noexcept { step_ = eps; }
  const Eigen::VectorXd& inv_metric() const noexcept { return inv_metric_; }
  void set_inv_metric(const Eigen::VectorXd& m) { inv_metric_ = m; }

  struct Transition {
    double accept_stat = 0.0;
    int depth = 0;
    int n_leapfrog = 0;
    bool divergent = false;
  };

  Transition transition() {
    sample_momentum(z_);
    const double H0 = hamiltonian(z_);

    PhasePoint z_fwd = z_;
    PhasePoint z_bck = z_;
    PhasePoint z_sample = z_;
    PhasePoint z_propose = z_;

    Eigen::VectorXd p_fwd_fwd = z_.p, p_fwd_bck = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    const Eigen::VectorXd v0 = velocity(z_);
    Eigen::VectorXd ps_fwd_fwd = v0, ps_fwd_bck = v0, ps_bck_fwd = v0, ps_bck_bck = v0;
    Eigen::VectorXd rho = z_.p;

    double log_sum_weight = 0.0;
    double sum_metro_prob = 0.0;
    int n_leapfrog = 0;
    int depth = 0;
    divergent_ = false;

    while (depth < cfg_.max_tree_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(rho.size());
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(rho.size());
      bool valid = false;
      double lsw_subtree = -std::numeric_limits<double>::infinity();

      if (rng_.uniform() > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        cur_ = z_fwd;
        valid = build_tree(depth, 1.0, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck,
                           p_fwd_fwd, H0, n_leapfrog, lsw_subtree, sum_metro_prob);
        z_fwd = cur_;
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        cur_ = z_bck;
        valid = build_tree(depth, -1.0, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd,
                           p_bck_bck, H0, n_leapfrog, lsw_subtree, sum_metro_prob);
        z_bck = cur_;
      }
      if (!valid) break;
      ++depth;

      if (lsw_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (rng_.uniform() < std::exp(lsw_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = criterion(ps_bck_bck, ps_fwd_fwd, rho);
      Eigen::VectorXd rho_ext = rho_bck + p_fwd_bck;
      persist = persist && criterion(ps_bck_bck, ps_fwd_bck, rho_ext);
      rho_ext = rho_fwd + p_bck_fwd;
      persist = persist && criterion(ps_bck_fwd, ps_fwd_fwd, rho_ext);
      if (!persist) break;
    }

    z_ = z_sample;
    Transition t;
    t.n_leapfrog = n_leapfrog;
    t.depth = depth;
    t.divergent = divergent_;
    t.accept_stat = n_leapfrog > 0 ? sum_metro_prob / static_cast<double>(n_leapfrog) : 0.0;
    return t;
  }

  /// Heuristic initial step size: double or halve until the acceptance of
  /// one leapfrog step crosses 0.8.
  void init_step_size() {
    if (step_ == 0.0 || step_ > 1e7 || std::isnan(step_)) return;
    const PhasePoint z_init = z_;
    auto trial = [&]() {
      z_ = z_init;
      sample_momentum(z_);
      const double H0 = hamiltonian(z_);
      leapfrog(z_, step_);
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      return H0 - h;
    };
    const double log8 = std::log(0.8);
    const int direction = trial() > log8 ? 1 : -1;
    while (true) {
      const double dH = trial();
      if (direction == 1 && !(dH > log8)) break;
      if (direction == -1 && !(dH < log8)) break;
      step_ = direction == 1 ? 2.0 * step_ : 0.5 * step_;
      if (step_ > 1e7) throw sampler_error("step size diverged; posterior may be improper");
      if (step_ == 0.0) throw sampler_error("step size collapsed to zero");
    }
    z_ = z_init;
  }

  /// Integrate `steps` leapfrog steps from `z` (test hook for reversibility
  /// and energy conservation checks).
  double hamiltonian_of(PhasePoint& z) { return hamiltonian(z); }
  void leapfrog_steps(PhasePoint& z, double eps, int steps) {
    for (int i = 0; i < steps; ++i) leapfrog(z, eps);
  }
  bool evaluate_point(PhasePoint& z) { return evaluate(z); }

 private:
  bool evaluate(PhasePoint& z) {
    try {
      z.logp = logp_(z.q, z.grad);
    } catch (const numerical_error&) {
      z.logp = -std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(z.logp) || !z.grad.allFinite()) {
      z.logp = -std::numeric_limits<double>::infinity();
      return false;
    }
    return true;
  }

  void sample_momentum(PhasePoint& z) {
    for (Eigen::Index i = 0; i < z.p.size(); ++i) {
      z.p(i) = rng_.normal() / std::sqrt(inv_metric_(i));
    }
  }

  double hamiltonian(const PhasePoint& z) const {
    if (!std::isfinite(z.logp)) return std::numeric_limits<double>::infinity();
    return -z.logp + 0.5 * z.p.cwiseProduct(inv_metric_).dot(z.p);
  }

  Eigen::VectorXd velocity(const PhasePoint& z) const { return inv_metric_.cwiseProduct(z.p); }

  void leapfrog(PhasePoint& z, double eps) {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * velocity(z);
    if (!evaluate(z)) return;
    z.p += 0.5 * eps * z.grad;
  }

  static bool criterion(const Eigen::VectorXd& ps_minus, const Eigen::VectorXd& ps_plus,
                        const Eigen::VectorXd& rho) {
    return ps_plus.dot(rho) > 0 && ps_minus.dot(rho) > 0;
  }

  bool build_tree(int depth, double direction, PhasePoint& z_propose, Eigen::VectorXd& ps_beg,
                  Eigen::VectorXd& ps_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double H0, int& n_leapfrog, double& log_sum_weight,
                  double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(cur_, direction * step_);
      ++n_leapfrog;
      double h = hamiltonian(cur_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if (h - H0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, H0 - h);
      sum_metro_prob += H0 - h > 0 ? 1.0 : std::exp(H0 - h);
      z_propose = cur_;
      ps_beg = velocity(cur_);
      ps_end = ps_beg;
      rho += cur_.p;
      p_beg = cur_.p;
      p_end = p_beg;
      return !divergent_;
    }

    // Initial subtree.
    double lsw_init = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_init_end(cur_.p.size());
    Eigen::VectorXd ps_init_end(cur_.p.size());
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(rho.size());
    if (!build_tree(depth - 1, direction, z_propose, ps_beg, ps_init_end, rho_init, p_beg,
                    p_init_end, H0, n_leapfrog, lsw_init, sum_metro_prob)) {
      return false;
    }

    // Final subtree.
    PhasePoint z_propose_final = cur_;
    double lsw_final = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_final_beg(cur_.p.size());
    Eigen::VectorXd ps_final_beg(cur_.p.size());
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(rho.size());
    if (!build_tree(depth - 1, direction, z_propose_final, ps_final_beg, ps_end, rho_final,
                    p_final_beg, p_end, H0, n_leapfrog, lsw_final, sum_metro_prob)) {
      return false;
    }

    // Multinomial sample from the right subtree.
    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree) {
      z_propose = z_propose_final;
    } else if (rng_.uniform() < std::exp(lsw_final - lsw_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(ps_beg, ps_end, rho_subtree);
    Eigen::VectorXd rho_ext = rho_init + p_final_beg;
    persist = persist && criterion(ps_beg, ps_final_beg, rho_ext);
    rho_ext = rho_final + p_init_end;
    persist = persist && criterion(ps_init_end, ps_end, rho_ext);
    return persist;
  }

  const LogDensity& logp_;
  SamplerConfig cfg_;
  CounterRng rng_;
  Eigen::VectorXd inv_metric_;
  PhasePoint z_;
  PhasePoint cur_;
  double step_;
  bool divergent_ = false;
};

inline ChainOutput run_chain(const LogDensity& logp, Eigen::Index dim, const SamplerConfig& cfg,
                             const ConstrainFn& constrain, int chain) {
  const auto t_start = std::chrono::steady_clock::now();
  NutsChain nuts(logp, dim, cfg, derive_key(cfg.seed, static_cast<std::uint64_t>(chain)));
  nuts.initialize();

  DualAverage da(cfg.target_accept);
  WindowSchedule windows(cfg.n_warmup);
  Welford var(dim);
  if (cfg.adapt) {
    nuts.init_step_size();
    da.set_mu(std::log(10.0 * nuts.step_size()));
  }

  ChainOutput out;
  for (int it = 0; it < cfg.n_warmup; ++it) {
    const auto t = nuts.transition();
    if (t.divergent) ++out.warmup_divergences;
    if (!cfg.adapt) continue;
    nuts.set_step_size(da.learn(t.accept_stat));
    if (windows.in_window()) var.add(nuts.state().q);
    if (windows.advance()) {
      const double n = static_cast<double>(var.count());
      Eigen::VectorXd m = (n / (n + 5.0)) * var.variance().array() + 1e-3 * (5.0 / (n + 5.0));
      nuts.set_inv_metric(m);
      var.restart();
      nuts.init_step_size();
      da.set_mu(std::log(10.0 * nuts.step_size()));
      da.restart();
    }
  }
  if (out.warmup_divergences == cfg.n_warmup) {
    std::ostringstream os;
    os << "chain " << chain << ": every warmup iteration diverged (step size "
       << nuts.step_size() << ")";
    throw sampler_error(os.str());
  }
  if (cfg.adapt) nuts.set_step_size(da.final_step_size());

  const Eigen::Index n = cfg.n_samples;
  out.draws.resize(n, dim);
  out.accept_stats.reserve(static_cast<std::size_t>(n));
  std::vector<Eigen::VectorXd> constrained;
  for (Eigen::Index it = 0; it < n; ++it) {
    const auto t = nuts.transition();
    if (t.divergent) ++out.divergences;
    out.draws.row(it) = nuts.state().q.transpose();
    out.accept_stats.push_back(t.accept_stat);
    out.tree_depths.push_back(t.depth);
    out.n_leapfrog.push_back(t.n_leapfrog);
    out.log_density.push_back(nuts.state().logp);
    if (constrain) constrained.push_back(constrain(nuts.state().q));
  }
  if (constrain && !constrained.empty()) {
    out.constrained_draws.resize(n, constrained.front().size());
    for (Eigen::Index it = 0; it < n; ++it) out.constrained_draws.row(it) = constrained[it];
  } else {
    out.constrained_draws = out.draws;
  }
  out.step_size = nuts.step_size();
  out.mass_diag = nuts.inv_metric();
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

}  // namespace detail

/**
 * Run `cfg.n_chains` independent NUTS chains. Chain c draws from the
 * counter-based stream keyed by `derive_key(cfg.seed, c)`, so results do
 * not depend on `cfg.n_threads`.
 */
inline std::vector<ChainOutput> nuts_sample(const LogDensity& logp, std::size_t dim,
                                            const SamplerConfig& cfg,
                                            const ConstrainFn& constrain = {}) {
  cfg.validate();
  if (dim == 0) throw std::invalid_argument("nuts_sample: zero dimension");
  std::vector<ChainOutput> out(static_cast<std::size_t>(cfg.n_chains));
  std::vector<std::exception_ptr> errors(out.size());
  auto work = [&](int c) {
    try {
      out[static_cast<std::size_t>(c)] =
          detail::run_chain(logp, static_cast<Eigen::Index>(dim), cfg, constrain, c);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  const int threads = std::max(1, std::min(cfg.n_threads, cfg.n_chains));
  if (threads == 1) {
    for (int c = 0; c < cfg.n_chains; ++c) work(c);
  } else {
    for (int base = 0; base < cfg.n_chains; base += threads) {
      std::vector<std::thread> pool;
      for (int c = base; c < std::min(cfg.n_chains, base + threads); ++c) pool.emplace_back(work, c);
      for (auto& t : pool) t.join();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace dtwin::sampler

#endif  // DTWIN_SAMPLER_NUTS_HPP
