// dtwin: fit the toy and cardiovascular calibration studies from the command line.
//
//   dtwin run --experiment toy --variants all --seed 1 --out-dir out/toy
//   dtwin run --config study.cfg --prior.u "positive_normal(1.2,0.5)"
//   dtwin compare out/toy
//
// Exit codes: 0 success, 1 I/O or internal error, 2 configuration error,
// 3 sampler failure.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtwin/errors.hpp"
#include "dtwin/runner/compare.hpp"
#include "dtwin/runner/config.hpp"
#include "dtwin/runner/csv.hpp"
#include "dtwin/runner/experiment.hpp"

namespace {

constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSampler = 3;

dtwin::runner::KeyValues extra_pairs(const std::vector<std::string>& extras) {
  dtwin::runner::KeyValues kv;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0) throw dtwin::config_error("unexpected argument '" + tok + "'");
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      kv.emplace_back(tok.substr(2, eq - 2), tok.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      kv.emplace_back(tok.substr(2), extras[++i]);
    } else {
      throw dtwin::config_error("option '" + tok + "' needs a value");
    }
  }
  return kv;
}

void print_comparison(const std::vector<dtwin::runner::ComparisonRow>& rows) {
  std::printf("%-12s %-14s %6s %8s %12s %10s\n", "parameter", "variant", "n", "covered",
              "mean_width", "ratio");
  for (const auto& r : rows) {
    char ratio[32] = "-";
    if (!std::isnan(r.width_ratio)) std::snprintf(ratio, sizeof ratio, "%.4f", r.width_ratio);
    std::printf("%-12s %-14s %6d %4d/%-3d %12.4f %10s\n", r.parameter.c_str(), r.variant.c_str(),
                r.individuals, r.covered, r.with_truth, r.mean_width, ratio);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint Bayesian calibration of imperfect physical models across individuals"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "simulate (or ingest) data and fit model variants");
  run->allow_extras();
  std::string config_file, experiment, variants, out_dir;
  int chains = 0, warmup = 0, samples = 0, workers = 0;
  std::string seed;
  run->add_option("--config", config_file, "flat key = value config file");
  run->add_option("--experiment", experiment, "toy | cardio");
  run->add_option("--variants", variants, "all or comma list of no_delta,indep_delta,common_delta,shared_delta");
  run->add_option("--chains", chains, "number of chains");
  run->add_option("--warmup", warmup, "warmup iterations per chain");
  run->add_option("--samples", samples, "post-warmup draws per chain");
  run->add_option("--seed", seed, "64-bit seed for data and sampler");
  run->add_option("--out-dir", out_dir, "output directory");
  run->add_option("--workers", workers, "concurrent fits / chains");
  bool quiet = false;
  run->add_flag("--quiet", quiet, "suppress progress output");

  auto* cmp = app.add_subcommand("compare", "compare summary files across variants");
  std::vector<std::string> inputs;
  std::string cmp_out;
  cmp->add_option("inputs", inputs, "summary_<variant>.csv files or directories")->required();
  cmp->add_option("--out", cmp_out, "write the comparison table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      dtwin::runner::KeyValues kv;
      if (!config_file.empty()) kv = dtwin::runner::read_config_file(config_file);
      auto put = [&](const char* k, const std::string& v) {
        if (!v.empty()) kv.emplace_back(k, v);
      };
      put("experiment", experiment);
      put("variants", variants);
      if (chains) put("chains", std::to_string(chains));
      if (warmup) put("warmup", std::to_string(warmup));
      if (samples) put("samples", std::to_string(samples));
      put("seed", seed);
      put("out_dir", out_dir);
      if (workers) put("workers", std::to_string(workers));
      for (auto& p : extra_pairs(run->remaining())) kv.push_back(std::move(p));
      const auto cfg = dtwin::runner::build_config(kv);
      dtwin::runner::run(cfg, quiet ? nullptr : &std::cerr);
      if (!quiet) std::cerr << "outputs written to " << cfg.out_dir << "\n";
      return 0;
    }
    const auto files = dtwin::runner::summary_files(inputs);
    const auto rows = dtwin::runner::compare(dtwin::runner::load_summaries(files));
    print_comparison(rows);
    if (!cmp_out.empty()) dtwin::runner::write_csv(cmp_out, dtwin::runner::comparison_table(rows));
    return 0;
  } catch (const dtwin::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dtwin::sampler_error& e) {
    std::cerr << "sampler failure: " << e.what() << "\n";
    return kExitSampler;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}
