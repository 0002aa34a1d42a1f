#ifndef DTWIN_RUNNER_CONFIG_HPP
#define DTWIN_RUNNER_CONFIG_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <type_traits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dtwin/errors.hpp"
#include "dtwin/gp_core.hpp"
#include "dtwin/priors.hpp"
#include "dtwin/runner/csv.hpp"
#include "dtwin/sampler/nuts.hpp"
#include "dtwin/simulate.hpp"

namespace dtwin::runner {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

struct ExperimentConfig {
  Physics physics = Physics::Toy;
  std::vector<Variant> variants{Variant::NoDelta, Variant::IndepDelta, Variant::CommonDelta,
                                Variant::SharedDelta};
  sampler::SamplerConfig sampler{};
  PriorSpec priors = PriorSpec::toy_defaults();
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out_dir = "out";
  int individuals = 10;       // toy only
  std::string data_file;      // ingest observations instead of simulating
  std::string truth_file;     // optional truth for ingested data
  int pred_draws = 200;       // posterior draws used for prediction bands
  simulate::ToyDesign toy{};
  simulate::CardioDesign cardio{};
};

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::string normalize_key(std::string k) {
  k = trim(k);
  while (!k.empty() && k.front() == '-') k.erase(k.begin());
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

/// Read `key = value` lines; '#' starts a comment.
inline KeyValues read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config file '" + path + "'");
  KeyValues out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(normalize_key(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  if constexpr (std::is_floating_point_v<T>) {
    std::size_t pos = 0;
    try {
      const T out = static_cast<T>(std::stod(v, &pos));
      if (pos == v.size()) return out;
    } catch (const std::exception&) {
    }
  } else {
    T out{};
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec == std::errc{} && r.ptr == v.data() + v.size()) return out;
  }
  throw config_error("bad value for " + key + ": '" + v + "'");
}

inline std::vector<Variant> parse_variants(const std::string& v) {
  if (v == "all") {
    return {Variant::NoDelta, Variant::IndepDelta, Variant::CommonDelta, Variant::SharedDelta};
  }
  std::vector<Variant> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    const auto parsed = parse_variant(trim(item));
    if (!parsed) throw config_error("unknown variant '" + trim(item) + "'");
    if (std::find(out.begin(), out.end(), *parsed) == out.end()) out.push_back(*parsed);
  }
  if (out.empty()) throw config_error("no variants selected");
  return out;
}

inline Slot slot_or_throw(Physics physics, const std::string& name) {
  const auto s = parse_slot(physics, name);
  const auto all = active_slots(physics, Variant::SharedDelta);
  if (!s || std::find(all.begin(), all.end(), *s) == all.end()) {
    throw config_error("unknown parameter '" + name + "' for experiment " +
                       std::string(physics_name(physics)));
  }
  return *s;
}

}  // namespace detail

inline Physics parse_physics(const std::string& v) {
  if (v == "toy") return Physics::Toy;
  if (v == "cardio") return Physics::Wk2;
  throw config_error("unknown experiment '" + v + "' (expected toy or cardio)");
}

/**
 * Build a configuration from key/value pairs; later pairs override earlier
 * ones. Prior overrides use `prior.<name> = family(a,b)` and reset the
 * derived hyper-priors of that parameter; `hyper.<name>.location` and
 * `hyper.<name>.scale` set them explicitly.
 */
inline ExperimentConfig build_config(const KeyValues& kv) {
  std::map<std::string, std::string> last;
  std::vector<std::string> order;
  for (const auto& [k0, v] : kv) {
    const std::string k = normalize_key(k0);
    if (!last.count(k)) order.push_back(k);
    last[k] = trim(v);
  }

  ExperimentConfig cfg;
  if (auto it = last.find("experiment"); it != last.end()) cfg.physics = parse_physics(it->second);
  cfg.priors = PriorSpec::defaults(cfg.physics);

  using detail::parse_number;
  std::vector<std::pair<std::string, std::string>> hyper;
  for (const auto& k : order) {
    const std::string& v = last[k];
    if (k == "experiment") {
    } else if (k == "variants") {
      cfg.variants = detail::parse_variants(v);
    } else if (k == "chains") {
      cfg.sampler.n_chains = parse_number<int>(k, v);
    } else if (k == "warmup") {
      cfg.sampler.n_warmup = parse_number<int>(k, v);
    } else if (k == "samples") {
      cfg.sampler.n_samples = parse_number<int>(k, v);
    } else if (k == "target_accept") {
      cfg.sampler.target_accept = parse_number<double>(k, v);
    } else if (k == "max_tree_depth") {
      cfg.sampler.max_tree_depth = parse_number<int>(k, v);
    } else if (k == "seed") {
      cfg.seed = parse_number<std::uint64_t>(k, v);
    } else if (k == "workers") {
      cfg.workers = parse_number<int>(k, v);
    } else if (k == "out_dir") {
      cfg.out_dir = v;
    } else if (k == "individuals") {
      if (cfg.physics != Physics::Toy) throw config_error("individuals applies to the toy experiment only");
      cfg.individuals = parse_number<int>(k, v);
    } else if (k == "data_file") {
      cfg.data_file = v;
    } else if (k == "truth_file") {
      cfg.truth_file = v;
    } else if (k == "pred_draws") {
      cfg.pred_draws = parse_number<int>(k, v);
    } else if (k == "toy.n_train") {
      cfg.toy.n_train = parse_number<int>(k, v);
    } else if (k == "toy.x_max") {
      cfg.toy.x_max = parse_number<double>(k, v);
    } else if (k == "toy.noise_sd") {
      cfg.toy.noise_sd = parse_number<double>(k, v);
    } else if (k == "toy.n_pred") {
      cfg.toy.n_pred = parse_number<int>(k, v);
    } else if (k == "toy.pred_max") {
      cfg.toy.pred_max = parse_number<double>(k, v);
    } else if (k == "cardio.sigma_p") {
      cfg.cardio.sigma_p = parse_number<double>(k, v);
    } else if (k == "cardio.sigma_q") {
      cfg.cardio.sigma_q = parse_number<double>(k, v);
    } else if (k == "cardio.n_p") {
      cfg.cardio.n_p = parse_number<int>(k, v);
    } else if (k == "cardio.n_q") {
      cfg.cardio.n_q = parse_number<int>(k, v);
    } else if (k == "cardio.n_pred") {
      cfg.cardio.n_pred = parse_number<int>(k, v);
    } else if (k.rfind("prior.", 0) == 0) {
      const Slot s = detail::slot_or_throw(cfg.physics, k.substr(6));
      cfg.priors.fixed[idx(s)] = Prior::parse(v);
      cfg.priors.derive_hyper(s);
    } else if (k.rfind("hyper.", 0) == 0) {
      hyper.emplace_back(k, v);
    } else {
      throw config_error("unknown config key '" + k + "'");
    }
  }
  for (const auto& [k, v] : hyper) {
    const std::string rest = k.substr(6);
    const auto dot = rest.rfind('.');
    if (dot == std::string::npos) throw config_error("expected hyper.<name>.location|scale, got " + k);
    const Slot s = detail::slot_or_throw(cfg.physics, rest.substr(0, dot));
    const std::string which = rest.substr(dot + 1);
    if (which == "location") {
      cfg.priors.location[idx(s)] = Prior::parse(v);
    } else if (which == "scale") {
      cfg.priors.scale[idx(s)] = Prior::parse(v);
    } else {
      throw config_error("expected hyper.<name>.location|scale, got " + k);
    }
  }

  try {
    cfg.sampler.validate();
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  cfg.priors.validate();
  if (cfg.workers < 1) throw config_error("workers must be >= 1");
  if (cfg.individuals < 1) throw config_error("individuals must be >= 1");
  if (cfg.pred_draws < 0) throw config_error("pred_draws must be >= 0");
  if (cfg.out_dir.empty()) throw config_error("out_dir must not be empty");
  if (!cfg.truth_file.empty() && cfg.data_file.empty()) {
    throw config_error("truth_file requires data_file");
  }
  if (cfg.toy.n_train < 1 || cfg.toy.n_pred < 1 || cfg.cardio.n_p < 1 || cfg.cardio.n_q < 1 ||
      cfg.cardio.n_pred < 1) {
    throw config_error("grid sizes must be >= 1");
  }
  return cfg;
}

/// Key/value dump of the effective configuration (written next to outputs).
inline KeyValues describe(const ExperimentConfig& cfg) {
  KeyValues kv;
  kv.emplace_back("experiment", std::string(physics_name(cfg.physics)));
  std::string vs;
  for (Variant v : cfg.variants) vs += (vs.empty() ? "" : ",") + std::string(variant_name(v));
  kv.emplace_back("variants", vs);
  kv.emplace_back("chains", std::to_string(cfg.sampler.n_chains));
  kv.emplace_back("warmup", std::to_string(cfg.sampler.n_warmup));
  kv.emplace_back("samples", std::to_string(cfg.sampler.n_samples));
  kv.emplace_back("target_accept", format_double(cfg.sampler.target_accept));
  kv.emplace_back("max_tree_depth", std::to_string(cfg.sampler.max_tree_depth));
  kv.emplace_back("seed", std::to_string(cfg.seed));
  if (cfg.physics == Physics::Toy) kv.emplace_back("individuals", std::to_string(cfg.individuals));
  if (!cfg.data_file.empty()) kv.emplace_back("data_file", cfg.data_file);
  if (!cfg.truth_file.empty()) kv.emplace_back("truth_file", cfg.truth_file);
  kv.emplace_back("pred_draws", std::to_string(cfg.pred_draws));
  for (Slot s : active_slots(cfg.physics, Variant::SharedDelta)) {
    const std::string n(slot_name(cfg.physics, s));
    kv.emplace_back("prior." + n, cfg.priors.fixed[idx(s)].to_string());
    kv.emplace_back("hyper." + n + ".location", cfg.priors.location[idx(s)].to_string());
    kv.emplace_back("hyper." + n + ".scale", cfg.priors.scale[idx(s)].to_string());
  }
  return kv;
}

}  // namespace dtwin::runner

#endif  // DTWIN_RUNNER_CONFIG_HPP
