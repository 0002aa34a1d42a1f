#ifndef DTWIN_HIER_MODEL_HPP
#define DTWIN_HIER_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dtwin/errors.hpp"
#include "dtwin/gp_core.hpp"
#include "dtwin/priors.hpp"

namespace dtwin {

/// Population-level parameters of every pooled slot.
struct GlobalParams {
  struct Pool {
    Slot slot;
    HierKind kind;
    double location;  // mu_phi (Normal kind) or median m (Log-normal kind)
    double scale;     // sigma_phi or log-scale s
  };
  std::vector<Pool> pools;

  const Pool* find(Slot s) const {
    for (const auto& p : pools)
      if (p.slot == s) return &p;
    return nullptr;
  }
};

/// Constrained view of a raw parameter vector.
struct ConstrainedState {
  std::vector<IndividualParams> individuals;
  GlobalParams globals;
  SlotArray shared{};  // values of slots common to all individuals
  double log_jacobian = 0.0;
};

/**
 * Joint log-posterior of a population of individuals under one model
 * variant, on an unconstrained, non-centred parameter vector.
 *
 * Pooling by variant:
 *   NoDelta, IndepDelta  every slot has its fixed prior (no globals)
 *   CommonDelta          physical slots pooled; one discrepancy kernel
 *                        shared by all individuals with fixed priors
 *   SharedDelta          physical and discrepancy slots pooled
 *
 * A pooled Normal-kind slot is phi_m = mu + sigma * nu_m and a pooled
 * Log-normal-kind slot is exp(log m + s * nu_m), with nu_m ~ N(0, 1).
 * Noise, mean and physics-informed kernel slots always keep fixed priors.
 *
 * Raw layout: [globals][shared slots][individual 1 slots]...[individual M].
 * The object is immutable after construction and safe to evaluate from
 * several threads at once.
 */
class JointPosterior {
 public:
  enum class CoordKind { Fixed, Shared, Pooled, Location, Scale };

  struct Coord {
    CoordKind kind;
    Slot slot;
    int member;  // index into the population, -1 for population-level coordinates
    std::string name;
  };

  JointPosterior(std::vector<IndividualDataset> population, Physics physics, Variant variant,
                 PriorSpec priors)
      : population_(std::move(population)),
        physics_(physics),
        variant_(variant),
        priors_(std::move(priors)) {
    if (population_.empty()) throw std::invalid_argument("empty population");
    for (const auto& d : population_) d.validate();
    priors_.validate();
    build_layout();
  }

  std::size_t dim() const noexcept { return coords_.size(); }
  Physics physics() const noexcept { return physics_; }
  Variant variant() const noexcept { return variant_; }
  const std::vector<IndividualDataset>& population() const noexcept { return population_; }
  const std::vector<Coord>& coords() const noexcept { return coords_; }
  const std::vector<Slot>& slots() const noexcept { return slots_; }
  const PriorSpec& priors() const noexcept { return priors_; }

  bool pooled(Slot s) const {
    if (variant_ == Variant::SharedDelta) return is_physical(s) || is_discrepancy(s);
    if (variant_ == Variant::CommonDelta) return is_physical(s);
    return false;
  }

  bool shared(Slot s) const { return variant_ == Variant::CommonDelta && is_discrepancy(s); }

  std::vector<std::string> raw_names() const {
    std::vector<std::string> out;
    out.reserve(coords_.size());
    for (const auto& c : coords_) out.push_back(c.name);
    return out;
  }

  /// Names of the constrained output vector: individual slots, shared
  /// slots, then global parameters.
  std::vector<std::string> constrained_names() const {
    std::vector<std::string> out;
    for (const auto& d : population_) {
      for (Slot s : slots_) {
        if (!shared(s)) out.push_back(member_name(s, d.id));
      }
    }
    for (Slot s : slots_)
      if (shared(s)) out.emplace_back(slot_name(physics_, s));
    for (Slot s : slots_) {
      if (!pooled(s)) continue;
      const bool normal = hier_kind(priors_.fixed_for(s)) == HierKind::Normal;
      out.push_back(std::string(normal ? "mu_" : "m_") + std::string(slot_name(physics_, s)));
      out.push_back(std::string(normal ? "sigma_" : "s_") + std::string(slot_name(physics_, s)));
    }
    return out;
  }

  std::string member_name(Slot s, int id) const {
    return std::string(slot_name(physics_, s)) + "[" + std::to_string(id) + "]";
  }

  ConstrainedState constrain(const Eigen::VectorXd& raw) const {
    ConstrainedState st;
    evaluate(raw, nullptr, &st);
    return st;
  }

  Eigen::VectorXd constrained_vector(const Eigen::VectorXd& raw) const {
    const ConstrainedState st = constrain(raw);
    std::vector<double> v;
    for (const auto& p : st.individuals)
      for (Slot s : slots_)
        if (!shared(s)) v.push_back(p.get(s));
    for (Slot s : slots_)
      if (shared(s)) v.push_back(st.shared[idx(s)]);
    for (const auto& pool : st.globals.pools) {
      v.push_back(pool.location);
      v.push_back(pool.scale);
    }
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  /// Log-density; fills `grad` (resized to dim()).
  double operator()(const Eigen::VectorXd& raw, Eigen::VectorXd& grad) const {
    grad.setZero(static_cast<Eigen::Index>(dim()));
    return evaluate(raw, &grad, nullptr);
  }

  double log_density(const Eigen::VectorXd& raw) const { return evaluate(raw, nullptr, nullptr); }

 private:
  void build_layout() {
    slots_ = active_slots(physics_, variant_);
    for (Slot s : slots_) {
      if (!pooled(s)) continue;
      const std::string n(slot_name(physics_, s));
      const bool normal = hier_kind(priors_.fixed_for(s)) == HierKind::Normal;
      pool_index_[idx(s)] = static_cast<int>(coords_.size());
      coords_.push_back({CoordKind::Location, s, -1, std::string(normal ? "z_mu_" : "z_m_") + n});
      coords_.push_back(
          {CoordKind::Scale, s, -1, std::string(normal ? "z_sigma_" : "z_s_") + n});
    }
    for (Slot s : slots_) {
      if (!shared(s)) continue;
      shared_index_[idx(s)] = static_cast<int>(coords_.size());
      coords_.push_back({CoordKind::Shared, s, -1, "z_" + std::string(slot_name(physics_, s))});
    }
    member_offset_ = coords_.size();
    for (std::size_t m = 0; m < population_.size(); ++m) {
      for (Slot s : slots_) {
        if (shared(s)) continue;
        const bool p = pooled(s);
        coords_.push_back({p ? CoordKind::Pooled : CoordKind::Fixed, s, static_cast<int>(m),
                           std::string(p ? "nu_" : "z_") + member_name(s, population_[m].id)});
      }
    }
    per_member_ = population_.empty() ? 0 : (coords_.size() - member_offset_) / population_.size();
  }

  double evaluate(const Eigen::VectorXd& raw, Eigen::VectorXd* grad,
                  ConstrainedState* state) const {
    if (static_cast<std::size_t>(raw.size()) != dim()) {
      throw std::invalid_argument("raw vector has wrong dimension");
    }
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
      if (!std::isfinite(raw(i))) {
        throw numerical_error("non-finite raw coordinate " + coords_[i].name);
      }
    }
    double lp = 0.0;
    double log_jac = 0.0;

    std::array<RawTerm, kSlotCount> loc{}, scl{}, shr{};
    for (Slot s : slots_) {
      const int pi = pool_index_[idx(s)];
      if (pi >= 0) {
        loc[idx(s)] = eval_coord(priors_.location[idx(s)], raw, pi);
        scl[idx(s)] = eval_coord(priors_.scale[idx(s)], raw, pi + 1);
        lp += loc[idx(s)].logp + scl[idx(s)].logp;
        log_jac += loc[idx(s)].log_jac + scl[idx(s)].log_jac;
        if (grad != nullptr) {
          (*grad)(pi) += loc[idx(s)].dlogp;
          (*grad)(pi + 1) += scl[idx(s)].dlogp;
        }
        if (state != nullptr) {
          state->globals.pools.push_back({s, hier_kind(priors_.fixed_for(s)),
                                          loc[idx(s)].value, scl[idx(s)].value});
        }
      }
      const int si = shared_index_[idx(s)];
      if (si >= 0) {
        shr[idx(s)] = eval_coord(priors_.fixed_for(s), raw, si);
        lp += shr[idx(s)].logp;
        log_jac += shr[idx(s)].log_jac;
        if (grad != nullptr) (*grad)(si) += shr[idx(s)].dlogp;
        if (state != nullptr) state->shared[idx(s)] = shr[idx(s)].value;
      }
    }

    std::array<RawTerm, kSlotCount> own{};
    std::array<double, kSlotCount> nu{};
    for (std::size_t m = 0; m < population_.size(); ++m) {
      IndividualParams params;
      params.phi.assign(physics_ == Physics::Toy ? 1 : 2, 0.0);
      std::size_t c = member_offset_ + m * per_member_;
      std::array<int, kSlotCount> pos{};
      pos.fill(-1);
      for (Slot s : slots_) {
        const std::size_t k = idx(s);
        if (shared(s)) {
          params.set(s, shr[k].value);
          continue;
        }
        pos[k] = static_cast<int>(c);
        if (pooled(s)) {
          const double v = raw(static_cast<Eigen::Index>(c));
          nu[k] = v;
          lp += log_normal_pdf(v, 0.0, 1.0);
          if (grad != nullptr) (*grad)(static_cast<Eigen::Index>(c)) += -v;
          double value;
          if (hier_kind(priors_.fixed_for(s)) == HierKind::Normal) {
            value = loc[k].value + scl[k].value * v;
            log_jac += std::log(scl[k].value);
          } else {
            value = loc[k].value * std::exp(scl[k].value * v);
            log_jac += std::log(value * scl[k].value);
          }
          if (!std::isfinite(value)) {
            throw numerical_error("transform overflow at coordinate " + coords_[c].name);
          }
          params.set(s, value);
        } else {
          own[k] = eval_coord(priors_.fixed_for(s), raw, static_cast<int>(c));
          lp += own[k].logp;
          log_jac += own[k].log_jac;
          if (grad != nullptr) (*grad)(static_cast<Eigen::Index>(c)) += own[k].dlogp;
          params.set(s, own[k].value);
        }
        ++c;
      }

      if (state != nullptr) {
        state->individuals.push_back(params);
        continue;
      }

      SlotArray g{};
      double ll;
      try {
        ll = log_likelihood(population_[m], params, variant_, physics_,
                            grad != nullptr ? &g : nullptr);
      } catch (const cholesky_error& e) {
        throw cholesky_error(context(m, params, e.what()));
      } catch (const numerical_error& e) {
        throw numerical_error(context(m, params, e.what()));
      }
      lp += ll;
      if (grad == nullptr) continue;

      for (Slot s : slots_) {
        const std::size_t k = idx(s);
        const double gs = g[k];
        if (shared(s)) {
          (*grad)(shared_index_[k]) += gs * shr[k].dvalue;
        } else if (pooled(s)) {
          const int pi = pool_index_[k];
          auto& G = *grad;
          if (hier_kind(priors_.fixed_for(s)) == HierKind::Normal) {
            G(pos[k]) += gs * scl[k].value;
            G(pi) += gs * loc[k].dvalue;
            G(pi + 1) += gs * nu[k] * scl[k].dvalue;
          } else {
            const double v = params.get(s);
            G(pos[k]) += gs * v * scl[k].value;
            G(pi) += gs * (v / loc[k].value) * loc[k].dvalue;
            G(pi + 1) += gs * v * nu[k] * scl[k].dvalue;
          }
        } else {
          (*grad)(pos[k]) += gs * own[k].dvalue;
        }
      }
    }
    if (state != nullptr) state->log_jacobian = log_jac;
    return lp;
  }

  RawTerm eval_coord(const Prior& prior, const Eigen::VectorXd& raw, int i) const {
    try {
      return eval_raw(prior, raw(i));
    } catch (const numerical_error& e) {
      throw numerical_error(coords_[i].name + ": " + e.what());
    }
  }

  std::string context(std::size_t m, const IndividualParams& p, const char* what) const {
    std::ostringstream os;
    os << "individual " << population_[m].id << ": " << what << " [" << p.describe(physics_, variant_)
       << "]";
    return os.str();
  }

  std::vector<IndividualDataset> population_;
  Physics physics_;
  Variant variant_;
  PriorSpec priors_;
  std::vector<Slot> slots_;
  std::vector<Coord> coords_;
  std::array<int, kSlotCount> pool_index_ = filled(-1);
  std::array<int, kSlotCount> shared_index_ = filled(-1);
  std::size_t member_offset_ = 0;
  std::size_t per_member_ = 0;

  static constexpr std::array<int, kSlotCount> filled(int v) {
    std::array<int, kSlotCount> a{};
    for (auto& x : a) x = v;
    return a;
  }
};

}  // namespace dtwin

#endif  // DTWIN_HIER_MODEL_HPP
