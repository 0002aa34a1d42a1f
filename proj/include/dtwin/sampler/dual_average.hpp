#ifndef DTWIN_SAMPLER_DUAL_AVERAGE_HPP
#define DTWIN_SAMPLER_DUAL_AVERAGE_HPP

#include <algorithm>
#include <cmath>

namespace dtwin::sampler {

/**
 * Nesterov dual averaging of log step size toward a target acceptance
 * statistic (Hoffman & Gelman 2014, Algorithm 5).
 *
 * `t0` delays early adaptation, `gamma` sets the learning rate and `kappa`
 * the decay of the iterate averaging.
 */
class DualAverage {
 public:
  explicit DualAverage(double target, double gamma = 0.05, double t0 = 10.0,
                       double kappa = 0.75) noexcept
      : target_(target), gamma_(gamma), t0_(t0), kappa_(kappa) {}

  void set_mu(double mu) noexcept { mu_ = mu; }

  void restart() noexcept {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  /// Returns the next step size given the last acceptance statistic.
  double learn(double accept_stat) noexcept {
    ++counter_;
    accept_stat = std::isnan(accept_stat) ? 0.0 : std::min(1.0, accept_stat);
    const double n = static_cast<double>(counter_);
    const double eta = 1.0 / (n + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(n) / gamma_;
    const double x_eta = std::pow(n, -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  /// Averaged step size used after warmup.
  double final_step_size() const noexcept { return std::exp(x_bar_); }

 private:
  double target_;
  double gamma_;
  double t0_;
  double kappa_;
  double mu_ = std::log(10.0);
  long counter_ = 0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

/**
 * Warmup schedule for the diagonal metric: a fast initial buffer, a series
 * of doubling slow windows in which draws are accumulated, and a terminal
 * fast buffer. Follows the conventional 75 / 25 / 50 layout, shrinking to
 * 15% / 75% / 10% for short warmups.
 */
class WindowSchedule {
 public:
  explicit WindowSchedule(long num_warmup) : num_warmup_(num_warmup) {
    if (num_warmup_ < 20) {
      init_buffer_ = num_warmup_;
      term_buffer_ = 0;
      base_window_ = 0;
      enabled_ = false;
    } else if (init_buffer_ + base_window_ + term_buffer_ > num_warmup_) {
      init_buffer_ = static_cast<long>(0.15 * static_cast<double>(num_warmup_));
      term_buffer_ = static_cast<long>(0.1 * static_cast<double>(num_warmup_));
      base_window_ = num_warmup_ - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  bool in_window() const noexcept {
    return enabled_ && counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ &&
           counter_ != num_warmup_;
  }

  bool end_of_window() const noexcept {
    return enabled_ && counter_ == next_window_ && counter_ != num_warmup_;
  }

  /// Advance one iteration; true when a slow window just closed.
  bool advance() noexcept {
    const bool closed = end_of_window();
    if (closed) compute_next_window();
    ++counter_;
    return closed;
  }

 private:
  void compute_next_window() noexcept {
    if (next_window_ == num_warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != num_warmup_ - term_buffer_ - 1) {
      const long boundary = next_window_ + 2 * window_size_;
      if (boundary >= num_warmup_ - term_buffer_) next_window_ = num_warmup_ - term_buffer_ - 1;
    }
  }

  long num_warmup_;
  long init_buffer_ = 75;
  long term_buffer_ = 50;
  long base_window_ = 25;
  long window_size_ = 0;
  long next_window_ = 0;
  long counter_ = 0;
  bool enabled_ = true;
};

}  // namespace dtwin::sampler

#endif  // DTWIN_SAMPLER_DUAL_AVERAGE_HPP
