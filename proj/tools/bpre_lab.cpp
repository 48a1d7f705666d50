#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpre/bpre.hpp"
#include "bpre/experiments.hpp"
#include "bpre/io.hpp"
#include "bpre/oracle.hpp"
#include "bpre/walk.hpp"

namespace {

using bpre::json;

struct CommonOpts {
  std::string spec_path;
  double sigma_sq = 0.0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 1;
  std::string out;
};

void add_spec_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--spec", opts.spec_path, "environment spec JSON file");
  cmd->add_option("--sigma2", opts.sigma_sq,
                  "calibrated lognormal-geometric family with this sigma^2");
}

bpre::EnvironmentSpec resolve_spec(const CommonOpts& opts) {
  if (!opts.spec_path.empty() && opts.sigma_sq > 0.0) {
    throw CLI::ValidationError("give either --spec or --sigma2, not both");
  }
  if (!opts.spec_path.empty()) return bpre::load_spec_file(opts.spec_path);
  if (opts.sigma_sq > 0.0) {
    return bpre::EnvironmentSpec::calibrate_lognormal(opts.sigma_sq);
  }
  throw CLI::ValidationError("an environment is required: --spec or --sigma2");
}

std::filesystem::path resolve_out(const CommonOpts& opts) {
  if (!opts.out.empty()) return opts.out;
  if (const char* env = std::getenv("BPRE_LAB_OUT")) return env;
  return "bpre_lab_out";
}

int cmd_calibrate(const CommonOpts& opts) {
  const auto spec = resolve_spec(opts);
  json j;
  j["spec"] = bpre::spec_to_json(spec);
  j["classification"] = bpre::to_string(spec.classification());
  j["gamma"] = spec.gamma();
  j["mean_x"] = spec.mean_x();
  j["mean_x_ex"] = spec.mean_x_ex();
  j["tilted_walk_sigma"] = spec.tilted_walk_sigma();
  std::cout << bpre::json_dump(j) << "\n";
  return 0;
}

int cmd_simulate(const CommonOpts& opts, std::int64_t n, std::int64_t replicas,
                 const std::string& measure, bool spine) {
  const auto spec = resolve_spec(opts);
  const auto out_root = resolve_out(opts);
  json manifest;
  manifest["command"] = "simulate";
  manifest["spec"] = bpre::spec_to_json(spec);
  manifest["n"] = n;
  manifest["replicas"] = replicas;
  manifest["measure"] = measure;
  manifest["spine"] = spine;
  manifest["seed"] = opts.seed;
  bpre::RunDirectory dir(out_root / "simulate", manifest);
  const auto m = bpre::measure_from_string(measure);
  for (std::int64_t i = 0; i < replicas; ++i) {
    auto rng = bpre::chunk_rng({opts.seed, 42}, static_cast<std::uint64_t>(i));
    const auto env = spec.sample_environment(m, n, rng);
    std::vector<bpre::OffspringLaw> laws;
    for (const auto& d : env) laws.push_back(d.law);
    if (spine) {
      const auto trace = bpre::simulate_spine(laws, n, rng);
      bpre::write_spine_csv(dir.file("spine_" + std::to_string(i)), trace);
    } else {
      const auto trace = bpre::simulate_quenched(laws, 1, n, rng);
      bpre::write_trace_csv(dir.file("trace_" + std::to_string(i) + ".csv"),
                            trace);
    }
  }
  dir.finish();
  std::cout << "wrote " << replicas << (spine ? " spine traces under "
                                              : " traces under ")
            << dir.path() << "\n";
  return 0;
}

int cmd_samples(const CommonOpts& opts, std::int64_t n, std::int64_t r,
                std::int64_t count, const std::string& strategy) {
  const auto spec = resolve_spec(opts);
  const auto out_root = resolve_out(opts);
  if (r == 0) r = bpre::default_r(n);
  json manifest;
  manifest["command"] = "samples";
  manifest["spec"] = bpre::spec_to_json(spec);
  manifest["n"] = n;
  manifest["r"] = r;
  manifest["samples"] = count;
  manifest["strategy"] = strategy;
  manifest["seed"] = opts.seed;
  bpre::RunDirectory dir(out_root / "samples", manifest);
  const auto set = bpre::conditioned_survival_sampler(
      spec, n, r, count, {opts.seed, 43},
      bpre::strategy_from_string(strategy), opts.workers);
  bpre::write_samples_csv(dir.file("samples.csv"), set);
  dir.finish();
  std::cout << "kept " << set.samples.size() << " of " << set.total_drawn
            << " draws (kish ess " << set.kish_ess() << ") under "
            << dir.path() << "\n";
  return 0;
}

int cmd_renewal(const CommonOpts& opts, std::int64_t k_max, std::int64_t paths) {
  const auto spec = resolve_spec(opts);
  const auto out_root = resolve_out(opts);
  json manifest;
  manifest["command"] = "renewal";
  manifest["spec"] = bpre::spec_to_json(spec);
  manifest["k_max"] = k_max;
  manifest["paths"] = paths;
  manifest["seed"] = opts.seed;
  bpre::RunDirectory dir(out_root / "renewal", manifest);
  std::vector<double> u_grid, v_grid;
  for (double x = 0.0; x <= 8.0 + 1e-9; x += 0.25) u_grid.push_back(x);
  for (double x = -8.0; x < -1e-9; x += 0.25) v_grid.push_back(x);
  const auto u = bpre::estimate_renewal(spec, 'u', u_grid, k_max, paths,
                                        {opts.seed, 60}, opts.workers);
  const auto v = bpre::estimate_renewal(spec, 'v', v_grid, k_max, paths,
                                        {opts.seed, 61}, opts.workers);
  bpre::write_renewal_csv(dir.file("renewal_u.csv"), u);
  bpre::write_renewal_csv(dir.file("renewal_v.csv"), v);
  dir.finish();
  std::cout << "u(0) = " << u.values.front()
            << ", v(0) = " << v.v_at_zero << " (expectation form)\n"
            << "tables under " << dir.path() << "\n";
  return 0;
}

int cmd_experiment(const CommonOpts& opts, const std::string& id,
                   const std::vector<std::int64_t>& n_list,
                   std::int64_t samples, std::int64_t r_override,
                   const std::string& strategy,
                   const std::string& threshold_file) {
  bpre::ExperimentConfig config;
  config.spec = resolve_spec(opts);
  config.seed = opts.seed;
  config.workers = opts.workers;
  config.n_list = n_list;
  config.samples = samples;
  config.r_override = r_override;
  config.strategy = bpre::strategy_from_string(strategy);
  config.out_dir = resolve_out(opts);
  if (!threshold_file.empty()) {
    std::ifstream in(threshold_file);
    if (!in) throw CLI::ValidationError("cannot open " + threshold_file);
    in >> config.thresholds;
  }
  std::vector<std::string> ids;
  if (id == "all") {
    ids = bpre::experiment_ids();
  } else {
    ids.push_back(id);
  }
  int worst = 0;
  for (const auto& eid : ids) {
    const auto result = bpre::run_experiment(eid, config);
    std::cout << eid << ": " << result.verdict << "\n";
    worst = std::max(worst, result.exit_code());
  }
  return worst;
}

int cmd_oracle(const CommonOpts& opts, std::int64_t n, std::int64_t k) {
  const auto spec = resolve_spec(opts);
  const auto law = bpre::enumerate_conditional_z(spec, k, n);
  json j;
  j["description"] = law.description;
  j["survival"] = bpre::enumerate_survival(spec, n);
  json atoms = json::object();
  for (const auto& [value, p] : law.atoms) {
    atoms[std::to_string(value)] = p;
  }
  j["atoms"] = atoms;
  std::cout << bpre::json_dump(j) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching processes in random environment: simulation lab"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* calibrate = app.add_subcommand(
      "calibrate", "print spec, classification and gamma");
  add_spec_options(calibrate, opts);

  auto* simulate =
      app.add_subcommand("simulate", "raw quenched or spine traces to CSV");
  add_spec_options(simulate, opts);
  std::int64_t sim_n = 32, sim_replicas = 10;
  std::string sim_measure = "tilted";
  bool sim_spine = false;
  simulate->add_option("--n", sim_n, "horizon");
  simulate->add_option("--replicas", sim_replicas, "number of traces");
  simulate->add_option("--measure", sim_measure, "annealed or tilted");
  simulate->add_flag("--spine", sim_spine, "size-biased spine traces");
  simulate->add_option("--seed", opts.seed, "rng seed (required)")
      ->required();
  simulate->add_option("--out", opts.out, "output root");

  auto* samples = app.add_subcommand(
      "samples", "weighted samples of the conditioned process to CSV");
  add_spec_options(samples, opts);
  std::int64_t smp_n = 64, smp_r = 0, smp_count = 100000;
  std::string smp_strategy = "tilted_rao_blackwell";
  samples->add_option("--n", smp_n, "survival horizon");
  samples->add_option("--r", smp_r, "initial-stage horizon (0 = ceil(sqrt n))");
  samples->add_option("--samples", smp_count, "tilted draws");
  samples->add_option("--strategy", smp_strategy,
                      "tilted_rejection or tilted_rao_blackwell");
  samples->add_option("--seed", opts.seed, "rng seed (required)")->required();
  samples->add_option("--workers", opts.workers, "worker threads");
  samples->add_option("--out", opts.out, "output root");

  auto* renewal =
      app.add_subcommand("renewal", "estimate and export renewal tables");
  add_spec_options(renewal, opts);
  std::int64_t ren_k = 20000, ren_paths = 1000000;
  renewal->add_option("--kmax", ren_k, "series truncation");
  renewal->add_option("--samples", ren_paths, "paths");
  renewal->add_option("--seed", opts.seed, "rng seed (required)")->required();
  renewal->add_option("--workers", opts.workers, "worker threads");
  renewal->add_option("--out", opts.out, "output root");

  auto* experiment =
      app.add_subcommand("experiment", "run experiment e1..e8 or all");
  add_spec_options(experiment, opts);
  std::string exp_id;
  std::vector<std::int64_t> exp_n;
  std::int64_t exp_samples = 0, exp_r = 0;
  std::string exp_strategy = "tilted_rao_blackwell";
  std::string threshold_file;
  experiment->add_option("id", exp_id, "e1..e8 or all")->required();
  experiment->add_option("--n", exp_n, "horizon list");
  experiment->add_option("--samples", exp_samples, "sample count (0 = default)");
  experiment->add_option("--r", exp_r, "override r (0 = ceil(sqrt(n)))");
  experiment->add_option("--strategy", exp_strategy,
                         "tilted_rejection or tilted_rao_blackwell");
  experiment->add_option("--threshold-file", threshold_file,
                         "JSON threshold overrides");
  experiment->add_option("--seed", opts.seed, "rng seed (required)")
      ->required();
  experiment->add_option("--workers", opts.workers, "worker threads");
  experiment->add_option("--out", opts.out, "output root");

  auto* oracle = app.add_subcommand(
      "oracle", "exact conditional law by brute-force enumeration");
  add_spec_options(oracle, opts);
  std::int64_t orc_n = 3, orc_k = 1;
  oracle->add_option("--n", orc_n, "survival horizon (<= 4)");
  oracle->add_option("--k", orc_k, "observed generation");

  try {
    app.parse(argc, argv);
    if (calibrate->parsed()) return cmd_calibrate(opts);
    if (simulate->parsed()) {
      return cmd_simulate(opts, sim_n, sim_replicas, sim_measure, sim_spine);
    }
    if (samples->parsed()) {
      return cmd_samples(opts, smp_n, smp_r, smp_count, smp_strategy);
    }
    if (renewal->parsed()) return cmd_renewal(opts, ren_k, ren_paths);
    if (experiment->parsed()) {
      return cmd_experiment(opts, exp_id, exp_n, exp_samples, exp_r,
                            exp_strategy, threshold_file);
    }
    if (oracle->parsed()) return cmd_oracle(opts, orc_n, orc_k);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
