#ifndef DTWIN_PRIORS_HPP
#define DTWIN_PRIORS_HPP

#include <array>
#include <cctype>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>

#include "dtwin/errors.hpp"
#include "dtwin/gp_core.hpp"

namespace dtwin {

enum class Family {
  Normal,          // Normal(mean=a, sd=b), unconstrained
  PositiveNormal,  // Normal(mean=a, sd=b) truncated to (0, inf)
  HalfNormal,      // HalfNormal(sd=a)
  LogNormal,       // LogNormal(median=a, log-scale=b)
  Uniform,         // Uniform(lo=a, hi=b)
};

/// A fixed prior together with the transform that maps it to an
/// unconstrained coordinate:
///   Normal         v = a + b z
///   PositiveNormal v = a exp(z)
///   HalfNormal     v = a exp(z)
///   LogNormal      v = a exp(z)
///   Uniform        v = a + (b - a) logistic(z)
/// Every transform is scaled so z ~ O(1) near the bulk of the prior.
struct Prior {
  Family family = Family::Normal;
  double a = 0.0;
  double b = 1.0;

  static Prior normal(double mean, double sd) { return {Family::Normal, mean, sd}; }
  static Prior positive_normal(double mean, double sd) {
    return {Family::PositiveNormal, mean, sd};
  }
  static Prior half_normal(double sd) { return {Family::HalfNormal, sd, 0.0}; }
  static Prior log_normal(double median, double scale) {
    return {Family::LogNormal, median, scale};
  }
  static Prior uniform(double lo, double hi) { return {Family::Uniform, lo, hi}; }

  void validate() const {
    bool ok = std::isfinite(a) && std::isfinite(b);
    switch (family) {
      case Family::Normal: ok = ok && b > 0; break;
      case Family::PositiveNormal: ok = ok && b > 0 && a > 0; break;
      case Family::HalfNormal: ok = ok && a > 0; break;
      case Family::LogNormal: ok = ok && a > 0 && b > 0; break;
      case Family::Uniform: ok = ok && b > a; break;
    }
    if (!ok) throw config_error("improper prior: " + to_string());
  }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    switch (family) {
      case Family::Normal: os << "normal(" << a << "," << b << ")"; break;
      case Family::PositiveNormal: os << "positive_normal(" << a << "," << b << ")"; break;
      case Family::HalfNormal: os << "half_normal(" << a << ")"; break;
      case Family::LogNormal: os << "log_normal(" << a << "," << b << ")"; break;
      case Family::Uniform: os << "uniform(" << a << "," << b << ")"; break;
    }
    return os.str();
  }

  /// Parse "family(a[,b])".
  static Prior parse(std::string_view text) {
    std::string s;
    for (char c : text)
      if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
    const auto open = s.find('(');
    const auto close = s.rfind(')');
    if (open == std::string::npos || close != s.size() - 1) {
      throw config_error("cannot parse prior '" + std::string(text) + "'");
    }
    const std::string name = s.substr(0, open);
    const std::string args = s.substr(open + 1, close - open - 1);
    double x = 0, y = 0;
    const auto comma = args.find(',');
    auto number = [&](const std::string& field) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (field.empty() || used != field.size()) {
        throw config_error("cannot parse prior arguments '" + std::string(text) + "'");
      }
      return v;
    };
    x = number(args.substr(0, comma));
    if (comma != std::string::npos) y = number(args.substr(comma + 1));
    const bool two = comma != std::string::npos;
    Prior p;
    if (name == "normal" && two) p = normal(x, y);
    else if (name == "positive_normal" && two) p = positive_normal(x, y);
    else if (name == "half_normal" && !two) p = half_normal(x);
    else if (name == "log_normal" && two) p = log_normal(x, y);
    else if (name == "uniform" && two) p = uniform(x, y);
    else throw config_error("unknown prior '" + std::string(text) + "'");
    p.validate();
    return p;
  }
};

/// Result of mapping one unconstrained coordinate through its prior.
struct RawTerm {
  double value = 0.0;     // constrained value
  double dvalue = 0.0;    // d value / dz
  double log_jac = 0.0;   // log |d value / dz|
  double logp = 0.0;      // log prior(value) + log_jac
  double dlogp = 0.0;     // d logp / dz
};

inline double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLog2Pi;
}

/// Log standard normal CDF.
inline double log_std_normal_cdf(double x) {
  return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
}

inline RawTerm eval_raw(const Prior& prior, double z) {
  RawTerm t;
  switch (prior.family) {
    case Family::Normal: {
      t.value = prior.a + prior.b * z;
      t.dvalue = prior.b;
      t.log_jac = std::log(prior.b);
      t.logp = log_normal_pdf(z, 0.0, 1.0);
      t.dlogp = -z;
      break;
    }
    case Family::PositiveNormal: {
      t.value = prior.a * std::exp(z);
      t.dvalue = t.value;
      t.log_jac = std::log(t.value);
      t.logp = log_normal_pdf(t.value, prior.a, prior.b) - log_std_normal_cdf(prior.a / prior.b) +
               t.log_jac;
      t.dlogp = -(t.value - prior.a) / (prior.b * prior.b) * t.value + 1.0;
      break;
    }
    case Family::HalfNormal: {
      t.value = prior.a * std::exp(z);
      t.dvalue = t.value;
      t.log_jac = std::log(t.value);
      t.logp = std::numbers::ln2 + log_normal_pdf(t.value, 0.0, prior.a) + t.log_jac;
      t.dlogp = -t.value * t.value / (prior.a * prior.a) + 1.0;
      break;
    }
    case Family::LogNormal: {
      // log v = log(median) + z and log v ~ N(log median, scale^2).
      t.value = prior.a * std::exp(z);
      t.dvalue = t.value;
      t.log_jac = std::log(t.value);
      t.logp = log_normal_pdf(z, 0.0, prior.b);
      t.dlogp = -z / (prior.b * prior.b);
      break;
    }
    case Family::Uniform: {
      const double w = prior.b - prior.a;
      // Stable logistic and its logs.
      const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      const double log_s = z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
      const double log_1ms = z >= 0 ? -z - std::log1p(std::exp(-z)) : -std::log1p(std::exp(z));
      t.value = prior.a + w * s;
      t.dvalue = w * s * (1.0 - s);
      t.log_jac = std::log(w) + log_s + log_1ms;
      t.logp = log_s + log_1ms;
      t.dlogp = 1.0 - 2.0 * s;
      break;
    }
  }
  if (!std::isfinite(t.value) || !std::isfinite(t.logp)) {
    std::ostringstream os;
    os << "transform overflow at z=" << z << " for " << prior.to_string();
    throw numerical_error(os.str());
  }
  return t;
}

/// Whether a fixed prior family is pooled as Normal(mu, sigma) or as
/// Log-normal(median m, log-scale s) when a slot is placed under the
/// hierarchy.
enum class HierKind { Normal, LogNormal };

inline HierKind hier_kind(const Prior& fixed) {
  return fixed.family == Family::LogNormal ? HierKind::LogNormal : HierKind::Normal;
}

/**
 * Priors for every parameter slot of one physics kind.
 *
 * `fixed` is used whenever a slot is not under the hierarchy. For a pooled
 * slot, `location` is the hyper-prior on mu_phi (Normal kind) or on the
 * median m (Log-normal kind), and `scale` the hyper-prior on sigma_phi or s.
 */
struct PriorSpec {
  std::array<Prior, kSlotCount> fixed{};
  std::array<Prior, kSlotCount> location{};
  std::array<Prior, kSlotCount> scale{};

  const Prior& fixed_for(Slot s) const { return fixed[idx(s)]; }

  /// Fill hyper-priors from the fixed priors: location centred on the
  /// fixed prior with the same spread, scale Half-normal with half the
  /// fixed spread (Normal kind) or the full log-scale (Log-normal kind).
  void derive_hyper(Slot s) {
    const Prior& f = fixed[idx(s)];
    switch (f.family) {
      case Family::Normal:
      case Family::PositiveNormal:
        location[idx(s)] = Prior::normal(f.a, f.b);
        scale[idx(s)] = Prior::half_normal(0.5 * f.b);
        break;
      case Family::Uniform: {
        const double half = 0.5 * (f.b - f.a);
        location[idx(s)] = Prior::normal(f.a + half, half);
        scale[idx(s)] = Prior::half_normal(0.5 * half);
        break;
      }
      case Family::LogNormal:
        location[idx(s)] = Prior::log_normal(f.a, f.b);
        scale[idx(s)] = Prior::half_normal(f.b);
        break;
      case Family::HalfNormal:
        location[idx(s)] = Prior::log_normal(f.a, 1.0);
        scale[idx(s)] = Prior::half_normal(0.5);
        break;
    }
  }

  void validate() const {
    for (const auto& p : fixed) p.validate();
    for (const auto& p : location) p.validate();
    for (const auto& p : scale) {
      p.validate();
      if (p.family != Family::HalfNormal) {
        throw config_error("hierarchical scale priors must be half_normal");
      }
    }
  }

  static PriorSpec toy_defaults() {
    PriorSpec ps;
    for (auto& p : ps.fixed) p = Prior::normal(0.0, 1.0);
    ps.fixed[idx(Slot::Phi0)] = Prior::positive_normal(1.2, 0.5);
    ps.fixed[idx(Slot::SigmaU)] = Prior::half_normal(0.5);
    ps.fixed[idx(Slot::OmegaAlpha)] = Prior::log_normal(1.0, 0.5);
    ps.fixed[idx(Slot::OmegaRho)] = Prior::log_normal(1.0, 0.5);
    for (std::size_t i = 0; i < kSlotCount; ++i) ps.derive_hyper(static_cast<Slot>(i));
    return ps;
  }

  static PriorSpec wk2_defaults() {
    PriorSpec ps;
    ps.fixed[idx(Slot::Phi0)] = Prior::uniform(0.5, 3.0);
    ps.fixed[idx(Slot::Phi1)] = Prior::uniform(0.5, 2.0);
    ps.fixed[idx(Slot::Beta)] = Prior::normal(100.0, 20.0);
    ps.fixed[idx(Slot::SigmaU)] = Prior::half_normal(10.0);
    ps.fixed[idx(Slot::SigmaF)] = Prior::half_normal(20.0);
    ps.fixed[idx(Slot::ThetaAlpha)] = Prior::log_normal(20.0, 0.5);
    ps.fixed[idx(Slot::ThetaRho)] = Prior::log_normal(0.1, 0.5);
    ps.fixed[idx(Slot::OmegaAlpha)] = Prior::log_normal(10.0, 0.5);
    ps.fixed[idx(Slot::OmegaRho)] = Prior::log_normal(0.1, 0.5);
    for (std::size_t i = 0; i < kSlotCount; ++i) ps.derive_hyper(static_cast<Slot>(i));
    return ps;
  }

  static PriorSpec defaults(Physics physics) {
    return physics == Physics::Toy ? toy_defaults() : wk2_defaults();
  }
};

}  // namespace dtwin

#endif  // DTWIN_PRIORS_HPP
