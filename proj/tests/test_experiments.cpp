#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bpre/experiments.hpp"

using namespace bpre;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig config;
  config.spec = EnvironmentSpec::calibrate_lognormal(1.0);
  config.seed = 2024;
  config.workers = 1;
  return config;
}

}  // namespace

TEST_CASE("config round-trip: parse -> serialize -> parse is identity") {
  const auto spec = EnvironmentSpec::calibrate_lognormal(0.5);
  const json j = spec_to_json(spec);
  CHECK(spec_to_json(spec_from_json(j)) == j);

  const auto mix = EnvironmentSpec::discrete_mixture(
      {{OffspringLaw::finite_table({0.5, 0.0, 0.5}), 0.4},
       {OffspringLaw::geometric(0.25), 0.6}});
  const json jm = spec_to_json(mix);
  CHECK(spec_to_json(spec_from_json(jm)) == jm);

  for (const auto& law :
       {OffspringLaw::geometric(0.3), OffspringLaw::poisson(1.5),
        OffspringLaw::point_mass(4),
        OffspringLaw::finite_table({0.25, 0.25, 0.5}),
        OffspringLaw::geometric(0.3).size_bias()}) {
    const json lj = offspring_to_json(law);
    CHECK(offspring_to_json(offspring_from_json(lj)) == lj);
  }
}

TEST_CASE("e1 plumbing on the degenerate point environment") {
  ExperimentConfig config = small_config();
  config.spec = EnvironmentSpec::discrete_mixture(
      {{OffspringLaw::point_mass(1), 1.0}});
  config.strict_spec = false;
  config.n_list = {8, 16};
  config.samples = 2000;
  const auto result = run_e1_initial_stage_law(config);
  // Z_{tau_r} is identically 1, so the consecutive TV distance is zero
  CHECK(result.statistics.at("tv_n8_n16").value == 0.0);
  CHECK(result.statistics.at("min_support").value == 1.0);
  CHECK(result.verdict == "pass");
}

TEST_CASE("e2 plumbing on a deterministic binary environment") {
  ExperimentConfig config = small_config();
  config.spec = EnvironmentSpec::discrete_mixture(
      {{OffspringLaw::point_mass(2), 1.0}});
  config.strict_spec = false;
  config.n_list = {8, 16};
  config.samples = 500;
  const auto result = run_e2_normalized_size_law(config);
  // Z_r e^{-(S_r - S_tau)} = 2^r e^{-r log 2} = 1 deterministically, so the
  // statistic is a point mass near 1 and has no mass near zero
  CHECK(result.statistics.at("min_statistic").value == doctest::Approx(1.0));
  CHECK(result.statistics.count("ks_n8_n16") == 1);
  CHECK(result.statistics.at("near_zero_mass").value == 0.0);
}

TEST_CASE("e1/e2/e8 refuse oracle-only specs under strict checking") {
  ExperimentConfig config = small_config();
  config.spec = EnvironmentSpec::discrete_mixture(
      {{OffspringLaw::point_mass(1), 1.0}});
  CHECK_THROWS_AS(run_e1_initial_stage_law(config), std::invalid_argument);
  CHECK_THROWS_AS(run_e2_normalized_size_law(config), std::invalid_argument);
  CHECK_THROWS_AS(run_e8_transfer(config, 64), std::invalid_argument);
}

TEST_CASE("e3: vacuous blocks at k = 0 pass exactly") {
  ExperimentConfig config = small_config();
  config.samples = 100;
  const auto result = run_e3_environment_factorization(config, 64, 0, 0);
  CHECK(result.verdict == "pass");
  CHECK(result.statistics.at("correlation").value == 0.0);
  CHECK(result.statistics.at("correlation").exact);
}

TEST_CASE("e4: W+ trajectories at reduced scale") {
  ExperimentConfig config = small_config();
  config.n_list = {16, 32, 64};
  config.samples = 800;
  const auto result = run_e4_wplus(config);
  CHECK(result.verdict == "pass");
  CHECK(result.statistics.at("terminal_below_floor_n64").value < 0.01);
  const double m8 = result.statistics.at("median_abs_diff_k8").value;
  const double m2 = result.statistics.at("median_abs_diff_k2").value;
  CHECK(m2 <= m8);
}

TEST_CASE("e5: duality and arcsine at reduced scale") {
  ExperimentConfig config = small_config();
  config.n_list = {30};
  config.samples = 100000;
  config.thresholds = {{"e5", {{"arcsine_n", 400},
                               {"arcsine_samples", 20000},
                               {"arcsine_ks_limit", 0.05}}}};
  const auto result = run_e5_duality_and_arcsine(config);
  CHECK(result.verdict == "pass");
  CHECK(result.statistics.count("p_tau_eq_n_n30") == 1);
  CHECK(result.statistics.at("arcsine_ks").value <= 0.05);
}

TEST_CASE("e7: overshoot decreases at reduced scale") {
  ExperimentConfig config = small_config();
  config.n_list = {64, 256};
  config.samples = 20000;
  const auto result = run_e7_two_walk(config);
  CHECK(result.verdict == "pass");
  const double p1 = result.statistics.at("overshoot_n64_r8").value;
  const double p2 = result.statistics.at("overshoot_n256_r16").value;
  CHECK(p2 < p1);
}

TEST_CASE("experiment results: exit codes and json shape") {
  ExperimentResult result;
  result.id = "e0";
  result.verdict = "pass";
  CHECK(result.exit_code() == 0);
  result.verdict = "fail";
  CHECK(result.exit_code() == 2);
  result.verdict = "inconclusive";
  CHECK(result.exit_code() == 3);

  result.statistics["alpha"] = StatValue{1.0, 0.1, false};
  result.statistics["beta"] = StatValue{2.0, 0.0, true};
  const json j = result.to_json();
  CHECK(j.at("statistics").at("alpha").contains("stderr"));
  CHECK(j.at("statistics").at("beta").at("exact") == true);
}

TEST_CASE("determinism: byte-identical result JSON across reruns and workers") {
  auto run_with = [&](int workers) {
    ExperimentConfig config = small_config();
    config.n_list = {20};
    config.samples = 40000;
    config.workers = workers;
    config.thresholds = {{"e5", {{"arcsine_n", 100},
                                 {"arcsine_samples", 10000},
                                 {"arcsine_ks_limit", 0.1}}}};
    return run_e5_duality_and_arcsine(config).to_json().dump();
  };
  const std::string once = run_with(1);
  CHECK(run_with(1) == once);  // rerun
  CHECK(run_with(4) == once);  // worker count must not matter
}

TEST_CASE("artifact lifecycle: manifest before results, no partial after") {
  namespace fs = std::filesystem;
  const fs::path root =
      fs::temp_directory_path() / "bpre_lab_test_artifacts";
  fs::remove_all(root);
  ExperimentConfig config = small_config();
  config.n_list = {16};
  config.samples = 20000;
  config.out_dir = root;
  config.thresholds = {{"e5", {{"arcsine_n", 100},
                               {"arcsine_samples", 5000},
                               {"arcsine_ks_limit", 0.1}}}};
  const auto result = run_e5_duality_and_arcsine(config);
  CHECK(fs::exists(root / "e5" / "manifest.json"));
  CHECK(fs::exists(root / "e5" / "result.json"));
  CHECK(!fs::exists(root / "e5" / "partial"));
  CHECK(!result.artifacts.empty());

  // manifest carries the spec snapshot and parameters needed to rerun
  std::ifstream in(root / "e5" / "manifest.json");
  json manifest;
  in >> manifest;
  CHECK(manifest.at("id") == "e5");
  CHECK(manifest.at("parameters").at("seed") == 2024);
  CHECK(manifest.at("spec").at("family") == "lognormal_geometric");
  CHECK(!manifest.contains("workers"));
  fs::remove_all(root);
}

TEST_CASE("threshold overrides are data, not code") {
  ExperimentConfig config = small_config();
  CHECK(config.threshold("e1", "tv_final") == doctest::Approx(0.1));
  config.thresholds = {{"e1", {{"tv_final", 0.25}}}};
  CHECK(config.threshold("e1", "tv_final") == doctest::Approx(0.25));
  // untouched entries keep their defaults
  CHECK(config.threshold("e1", "atom_floor") == doctest::Approx(1e-3));
}
