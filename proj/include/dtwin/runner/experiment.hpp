#ifndef DTWIN_RUNNER_EXPERIMENT_HPP
#define DTWIN_RUNNER_EXPERIMENT_HPP

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dtwin/errors.hpp"
#include "dtwin/gp_core.hpp"
#include "dtwin/hier_model.hpp"
#include "dtwin/rng.hpp"
#include "dtwin/runner/config.hpp"
#include "dtwin/runner/csv.hpp"
#include "dtwin/sampler/diagnostics.hpp"
#include "dtwin/sampler/nuts.hpp"
#include "dtwin/simulate.hpp"

namespace dtwin::runner {

struct TruthEntry {
  int individual;
  std::string parameter;
  double value;
};

struct Population {
  std::vector<IndividualDataset> data;
  std::vector<TruthEntry> truth;

  std::optional<double> truth_of(int id, std::string_view parameter) const {
    for (const auto& t : truth)
      if (t.individual == id && t.parameter == parameter) return t.value;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Data generation and ingestion
// ---------------------------------------------------------------------------

inline Population simulate_population(const ExperimentConfig& cfg) {
  Population pop;
  if (cfg.physics == Physics::Toy) {
    auto st = simulate::gen_toy(cfg.individuals, cfg.seed, cfg.toy);
    for (std::size_t m = 0; m < st.data.size(); ++m) {
      const int id = st.data[m].id;
      pop.truth.push_back({id, "u", st.truth.u[m]});
      pop.truth.push_back({id, "b", st.truth.b[m]});
      pop.truth.push_back({id, "sigma", st.truth.noise_sd});
    }
    pop.data = std::move(st.data);
  } else {
    auto st = simulate::gen_cardio(cfg.seed, cfg.cardio);
    for (std::size_t m = 0; m < st.data.size(); ++m) {
      const int id = st.data[m].id;
      pop.truth.push_back({id, "R1", st.truth.R1[m]});
      pop.truth.push_back({id, "R2", st.truth.R2[m]});
      pop.truth.push_back({id, "R", st.truth.R_total(m)});
      pop.truth.push_back({id, "C", st.truth.C[m]});
      pop.truth.push_back({id, "sigma_P", st.truth.sigma_P});
      pop.truth.push_back({id, "sigma_Q", st.truth.sigma_Q});
    }
    pop.data = std::move(st.data);
  }
  return pop;
}

inline CsvTable data_table(const Population& pop) {
  CsvTable t{{"individual", "block", "x", "y"}, {}};
  for (const auto& d : pop.data) {
    for (std::size_t i = 0; i < d.x_u.size(); ++i)
      t.rows.push_back({std::to_string(d.id), "u", format_double(d.x_u[i]), format_double(d.y_u[i])});
    for (std::size_t i = 0; i < d.x_f.size(); ++i)
      t.rows.push_back({std::to_string(d.id), "f", format_double(d.x_f[i]), format_double(d.y_f[i])});
  }
  return t;
}

inline CsvTable truth_table(const Population& pop) {
  CsvTable t{{"individual", "parameter", "value"}, {}};
  for (const auto& e : pop.truth)
    t.rows.push_back({std::to_string(e.individual), e.parameter, format_double(e.value)});
  return t;
}

/// Observations in the `data.csv` layout (individual, block u|f, x, y),
/// with optional truth in the `truth.csv` layout.
inline Population load_population(const std::string& data_path, const std::string& truth_path,
                                  Physics physics) {
  Population pop;
  try {
    const CsvTable t = read_csv(data_path);
    const auto ci = t.column("individual"), cb = t.column("block"), cx = t.column("x"),
               cy = t.column("y");
    std::map<int, std::size_t> index;
    for (const auto& r : t.rows) {
      const int id = std::stoi(r[ci]);
      auto [it, fresh] = index.try_emplace(id, pop.data.size());
      if (fresh) {
        pop.data.emplace_back();
        pop.data.back().id = id;
      }
      IndividualDataset& d = pop.data[it->second];
      const double x = parse_double(r[cx]), y = parse_double(r[cy]);
      if (r[cb] == "u") {
        d.x_u.push_back(x);
        d.y_u.push_back(y);
      } else if (r[cb] == "f") {
        if (physics == Physics::Toy) throw config_error("toy data has no f block");
        d.x_f.push_back(x);
        d.y_f.push_back(y);
      } else {
        throw config_error("unknown block '" + r[cb] + "' (expected u or f)");
      }
    }
    if (!truth_path.empty()) {
      const CsvTable tt = read_csv(truth_path);
      const auto ti = tt.column("individual"), tp = tt.column("parameter"), tv = tt.column("value");
      for (const auto& r : tt.rows) pop.truth.push_back({std::stoi(r[ti]), r[tp], parse_double(r[tv])});
    }
  } catch (const config_error&) {
    throw;
  } catch (const std::exception& e) {
    throw config_error("cannot ingest data: " + std::string(e.what()));
  }
  if (pop.data.empty()) throw config_error("data file has no observations");
  for (const auto& d : pop.data) {
    try {
      d.validate();
    } catch (const std::exception& e) {
      throw config_error("individual " + std::to_string(d.id) + ": " + e.what());
    }
    if (physics == Physics::Wk2 && d.x_f.empty()) {
      throw config_error("cardio individual " + std::to_string(d.id) + " has no flow observations");
    }
  }
  return pop;
}

inline Population make_population(const ExperimentConfig& cfg) {
  if (cfg.data_file.empty()) return simulate_population(cfg);
  return load_population(cfg.data_file, cfg.truth_file, cfg.physics);
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// One sampler run: a single individual (independent variants) or the whole
/// population (joint variants).
struct Fit {
  std::shared_ptr<const JointPosterior> posterior;
  std::vector<sampler::ChainOutput> chains;
  std::uint64_t seed = 0;
  double seconds = 0.0;
};

struct VariantResult {
  Variant variant{};
  std::vector<Fit> fits;
  CsvTable samples;
  CsvTable summary;
  CsvTable predictions;
  nlohmann::ordered_json diagnostics;
};

inline std::uint64_t fit_seed(std::uint64_t seed, Variant v, std::size_t fit) {
  return derive_key(derive_key(seed, 0x1000ULL + static_cast<std::uint64_t>(v)), fit);
}

/// Per-individual parameters reported in summaries: the physical parameter
/// for the toy, every per-individual parameter for the cardiovascular model.
inline std::vector<Slot> summary_slots(const JointPosterior& post) {
  std::vector<Slot> out;
  for (Slot s : post.slots()) {
    if (post.shared(s)) continue;
    if (post.physics() == Physics::Toy && !is_physical(s)) continue;
    out.push_back(s);
  }
  return out;
}

inline std::vector<Fit> fit_variant(const ExperimentConfig& cfg, const Population& pop, Variant v,
                                    std::ostream* log) {
  std::vector<std::vector<IndividualDataset>> groups;
  if (is_joint(v)) {
    groups.push_back(pop.data);
  } else {
    for (const auto& d : pop.data) groups.push_back({d});
  }
  std::vector<Fit> fits(groups.size());
  std::vector<std::exception_ptr> errors(groups.size());
  std::atomic<std::size_t> next{0};
  const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(groups.size())));

  auto work = [&] {
    for (std::size_t g = next++; g < groups.size(); g = next++) {
      try {
        const auto t0 = std::chrono::steady_clock::now();
        auto post = std::make_shared<const JointPosterior>(groups[g], cfg.physics, v, cfg.priors);
        sampler::SamplerConfig sc = cfg.sampler;
        sc.seed = fit_seed(cfg.seed, v, g);
        sc.n_threads = is_joint(v) ? cfg.workers : 1;
        const sampler::LogDensity f = [post](const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
          return (*post)(q, grad);
        };
        const sampler::ConstrainFn c = [post](const Eigen::VectorXd& q) {
          return post->constrained_vector(q);
        };
        fits[g].chains = sampler::nuts_sample(f, post->dim(), sc, c);
        fits[g].posterior = std::move(post);
        fits[g].seed = sc.seed;
        fits[g].seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (log) {
          *log << "  " << variant_name(v) << " fit " << g + 1 << "/" << groups.size() << " done in "
               << fits[g].seconds << " s\n";
        }
      } catch (...) {
        errors[g] = std::current_exception();
      }
    }
  };
  if (workers == 1 || is_joint(v)) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (std::size_t g = 0; g < errors.size(); ++g) {
    if (!errors[g]) continue;
    try {
      std::rethrow_exception(errors[g]);
    } catch (const sampler_error& e) {
      throw sampler_error(std::string(variant_name(v)) + " fit " + std::to_string(g + 1) + ": " +
                          e.what());
    } catch (const numerical_error& e) {
      throw sampler_error(std::string(variant_name(v)) + " fit " + std::to_string(g + 1) + ": " +
                          e.what());
    }
  }
  return fits;
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

namespace detail {

inline sampler::Chains column_chains(const Fit& fit, Eigen::Index col) {
  sampler::Chains out;
  for (const auto& c : fit.chains) {
    std::vector<double> v(static_cast<std::size_t>(c.constrained_draws.rows()));
    for (Eigen::Index i = 0; i < c.constrained_draws.rows(); ++i) v[static_cast<std::size_t>(i)] = c.constrained_draws(i, col);
    out.push_back(std::move(v));
  }
  return out;
}

inline double safe_rhat(const sampler::Chains& ch) {
  try {
    return sampler::split_rhat(ch);
  } catch (const std::invalid_argument&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

inline double safe_ess(const sampler::Chains& ch) {
  try {
    return sampler::ess(ch);
  } catch (const std::invalid_argument&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

inline Eigen::Index find_column(const std::vector<std::string>& names, const std::string& n) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == n) return static_cast<Eigen::Index>(i);
  throw std::logic_error("no constrained column " + n);
}

}  // namespace detail

/// One row per (chain, draw); columns are the constrained parameters of every fit.
inline CsvTable samples_table(const std::vector<Fit>& fits) {
  CsvTable t;
  t.header = {"chain", "draw"};
  for (const auto& f : fits)
    for (const auto& n : f.posterior->constrained_names()) t.header.push_back(n);
  const std::size_t n_chains = fits.front().chains.size();
  const Eigen::Index n_draws = fits.front().chains.front().constrained_draws.rows();
  for (std::size_t c = 0; c < n_chains; ++c) {
    for (Eigen::Index i = 0; i < n_draws; ++i) {
      std::vector<std::string> row{std::to_string(c + 1), std::to_string(i + 1)};
      for (const auto& f : fits) {
        const auto& d = f.chains[c].constrained_draws;
        for (Eigen::Index j = 0; j < d.cols(); ++j) row.push_back(format_double(d(i, j)));
      }
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

inline const std::vector<std::string>& summary_header() {
  static const std::vector<std::string> h{"individual", "parameter", "mean", "sd", "q2.5",
                                          "q97.5", "truth", "rhat", "ess", "covered"};
  return h;
}

inline CsvTable summary_table(const std::vector<Fit>& fits, const Population& pop) {
  CsvTable t{summary_header(), {}};
  for (const auto& f : fits) {
    const auto names = f.posterior->constrained_names();
    for (const auto& d : f.posterior->population()) {
      for (Slot s : summary_slots(*f.posterior)) {
        const std::string pname(slot_name(f.posterior->physics(), s));
        const Eigen::Index col = detail::find_column(names, f.posterior->member_name(s, d.id));
        const sampler::Chains ch = detail::column_chains(f, col);
        std::vector<double> all;
        for (const auto& c : ch) all.insert(all.end(), c.begin(), c.end());
        double mean = 0.0;
        for (double x : all) mean += x;
        mean /= static_cast<double>(all.size());
        double ss = 0.0;
        for (double x : all) ss += (x - mean) * (x - mean);
        const double sd = all.size() > 1 ? std::sqrt(ss / static_cast<double>(all.size() - 1)) : 0.0;
        std::sort(all.begin(), all.end());
        const double lo = sampler::quantile_sorted(all, 0.025);
        const double hi = sampler::quantile_sorted(all, 0.975);
        const auto truth = pop.truth_of(d.id, pname);
        std::string covered;
        if (truth) covered = (*truth >= lo && *truth <= hi) ? "true" : "false";
        t.rows.push_back({std::to_string(d.id), pname, format_double(mean), format_double(sd),
                          format_double(lo), format_double(hi),
                          truth ? format_double(*truth) : std::string(),
                          format_double(detail::safe_rhat(ch)), format_double(detail::safe_ess(ch)),
                          covered});
      }
    }
  }
  return t;
}

/**
 * Posterior predictive bands: for `pred_draws` draws spread evenly over all
 * chains, the predictive Gaussian of each individual is computed and one
 * noisy replicate drawn per grid point. The mean column averages the
 * predictive means.
 */
inline CsvTable predictions_table(const ExperimentConfig& cfg, const std::vector<Fit>& fits) {
  CsvTable t{{"individual", "block", "x", "mean", "q2.5", "q97.5", "region"}, {}};
  if (cfg.pred_draws == 0) return t;
  const bool toy = cfg.physics == Physics::Toy;
  std::vector<double> grid;
  if (toy) {
    grid = simulate::linspace(0.0, cfg.toy.pred_max, cfg.toy.n_pred);
  } else {
    for (int i = 0; i < cfg.cardio.n_pred; ++i) {
      grid.push_back(cfg.cardio.inflow.period * i / cfg.cardio.n_pred);
    }
  }
  const std::size_t G = grid.size();

  for (const auto& f : fits) {
    const JointPosterior& post = *f.posterior;
    const Variant v = post.variant();
    const std::size_t M = post.population().size();
    const std::size_t blocks = toy ? 1 : 2;
    // draws[m][block][point]
    std::vector<std::vector<std::vector<std::vector<double>>>> draws(
        M, std::vector<std::vector<std::vector<double>>>(blocks, std::vector<std::vector<double>>(G)));
    std::vector<std::vector<Eigen::VectorXd>> mean_sum(
        M, std::vector<Eigen::VectorXd>(blocks, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(G))));

    const std::size_t n_chains = f.chains.size();
    const auto n_per = static_cast<std::size_t>(f.chains.front().draws.rows());
    const std::size_t total = n_chains * n_per;
    const std::size_t K = std::min<std::size_t>(static_cast<std::size_t>(cfg.pred_draws), total);
    CounterRng rng(derive_key(f.seed, 0x707265ULL));
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t flat = (2 * k + 1) * total / (2 * K);
      const Eigen::VectorXd raw = f.chains[flat / n_per].draws.row(static_cast<Eigen::Index>(flat % n_per));
      const ConstrainedState st = post.constrain(raw);
      for (std::size_t m = 0; m < M; ++m) {
        const IndividualDataset& d = post.population()[m];
        const IndividualParams& p = st.individuals[m];
        auto add = [&](std::size_t b, const Prediction& pr, double noise) {
          mean_sum[m][b] += pr.mean;
          for (std::size_t i = 0; i < G; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double sd = std::sqrt(std::max(0.0, pr.cov(ii, ii)) + noise * noise);
            draws[m][b][i].push_back(pr.mean(ii) + sd * rng.normal());
          }
        };
        if (toy) {
          add(0, predict_general(d, p, v, grid), p.sigma_u);
        } else {
          const PiPrediction pr = predict_pi(d, p, v, grid, grid);
          add(0, pr.u, p.sigma_u);
          add(1, pr.f, p.sigma_f);
        }
      }
    }
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t i = 0; i < G; ++i) {
          auto& s = draws[m][b][i];
          std::sort(s.begin(), s.end());
          const std::string block = toy ? "y" : (b == 0 ? "P" : "Q");
          const std::string region =
              toy && grid[i] > cfg.toy.split ? "extrapolation" : "interpolation";
          t.rows.push_back({std::to_string(post.population()[m].id), block, format_double(grid[i]),
                            format_double(mean_sum[m][b](static_cast<Eigen::Index>(i)) / static_cast<double>(K)),
                            format_double(sampler::quantile_sorted(s, 0.025)),
                            format_double(sampler::quantile_sorted(s, 0.975)), region});
        }
      }
    }
  }
  return t;
}

inline nlohmann::ordered_json diagnostics_json(const ExperimentConfig& cfg, Variant v,
                                               const std::vector<Fit>& fits, double seconds) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["experiment"] = physics_name(cfg.physics);
  j["variant"] = variant_name(v);
  j["seed"] = cfg.seed;
  j["sampler"] = {{"chains", cfg.sampler.n_chains},
                  {"warmup", cfg.sampler.n_warmup},
                  {"samples", cfg.sampler.n_samples},
                  {"target_accept", cfg.sampler.target_accept},
                  {"max_tree_depth", cfg.sampler.max_tree_depth}};
  int total_div = 0;
  ordered_json jf = ordered_json::array();
  for (std::size_t g = 0; g < fits.size(); ++g) {
    const Fit& f = fits[g];
    ordered_json one;
    std::vector<int> ids;
    for (const auto& d : f.posterior->population()) ids.push_back(d.id);
    one["individuals"] = ids;
    one["dim"] = f.posterior->dim();
    one["seed"] = f.seed;
    ordered_json chains = ordered_json::array();
    for (const auto& c : f.chains) {
      double acc = 0.0;
      long leapfrog = 0;
      int saturated = 0;
      for (double a : c.accept_stats) acc += a;
      for (int n : c.n_leapfrog) leapfrog += n;
      for (int d : c.tree_depths) saturated += d >= cfg.sampler.max_tree_depth;
      total_div += c.divergences;
      chains.push_back({{"divergences", c.divergences},
                        {"warmup_divergences", c.warmup_divergences},
                        {"step_size", c.step_size},
                        {"mean_accept_stat", c.accept_stats.empty() ? 0.0 : acc / static_cast<double>(c.accept_stats.size())},
                        {"max_depth_hits", saturated},
                        {"leapfrog_steps", leapfrog},
                        {"seconds", c.seconds}});
    }
    one["chains"] = chains;
    double max_rhat = 0.0, min_ess = std::numeric_limits<double>::infinity();
    const auto width = f.chains.front().constrained_draws.cols();
    for (Eigen::Index col = 0; col < width; ++col) {
      const auto ch = detail::column_chains(f, col);
      const double r = detail::safe_rhat(ch), e = detail::safe_ess(ch);
      if (std::isfinite(r)) max_rhat = std::max(max_rhat, r);
      if (std::isfinite(e)) min_ess = std::min(min_ess, e);
    }
    one["max_rhat"] = max_rhat;
    one["min_ess"] = std::isfinite(min_ess) ? min_ess : 0.0;
    one["seconds"] = f.seconds;
    jf.push_back(one);
  }
  j["divergences"] = total_div;
  j["fits"] = jf;
  j["seconds"] = seconds;
  return j;
}

inline VariantResult run_variant(const ExperimentConfig& cfg, const Population& pop, Variant v,
                                 std::ostream* log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  VariantResult r;
  r.variant = v;
  r.fits = fit_variant(cfg, pop, v, log);
  r.samples = samples_table(r.fits);
  r.summary = summary_table(r.fits, pop);
  r.predictions = predictions_table(cfg, r.fits);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.diagnostics = diagnostics_json(cfg, v, r.fits, secs);
  return r;
}

// ---------------------------------------------------------------------------
// End-to-end run
// ---------------------------------------------------------------------------

/// Files written by one run, removed again if the run fails part-way.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::string path(const std::string& name) {
    const auto p = dir_ / name;
    written_.push_back(p);
    return p.string();
  }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& p : written_) std::filesystem::remove(p, ec);
    written_.clear();
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> written_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

/**
 * Simulate (or ingest) data, fit every requested variant and write
 * truth.csv, data.csv, config.txt and per-variant samples, summary,
 * predictions and diagnostics files into `cfg.out_dir`.
 */
inline std::vector<VariantResult> run(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec || !fs::is_directory(cfg.out_dir)) {
    throw std::runtime_error("cannot create output directory '" + cfg.out_dir + "'");
  }
  OutputSet out(cfg.out_dir);
  std::vector<VariantResult> results;
  try {
    const Population pop = make_population(cfg);
    if (log) *log << physics_name(cfg.physics) << ": " << pop.data.size() << " individuals\n";
    std::ostringstream conf;
    for (const auto& [k, v] : describe(cfg)) conf << k << " = " << v << "\n";
    write_text(out.path("config.txt"), conf.str());
    write_csv(out.path("data.csv"), data_table(pop));
    if (!pop.truth.empty()) write_csv(out.path("truth.csv"), truth_table(pop));
    for (Variant v : cfg.variants) {
      if (log) *log << "fitting " << variant_name(v) << "\n";
      VariantResult r = run_variant(cfg, pop, v, log);
      const std::string n(variant_name(v));
      write_csv(out.path("samples_" + n + ".csv"), r.samples);
      write_csv(out.path("summary_" + n + ".csv"), r.summary);
      write_csv(out.path("predictions_" + n + ".csv"), r.predictions);
      write_text(out.path("diagnostics_" + n + ".json"), r.diagnostics.dump(2) + "\n");
      results.push_back(std::move(r));
    }
  } catch (...) {
    out.rollback();
    throw;
  }
  return results;
}

}  // namespace dtwin::runner

#endif  // DTWIN_RUNNER_EXPERIMENT_HPP
