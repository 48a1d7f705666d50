#include <doctest.h>

#include <cmath>
#include <vector>

#include "bpre/spine.hpp"
#include "bpre/stats.hpp"

using namespace bpre;

namespace {

std::vector<OffspringLaw> fixed_geometric_env(std::int64_t n,
                                              std::uint64_t seed) {
  const auto spec = EnvironmentSpec::calibrate_lognormal(1.0);
  auto rng = chunk_rng({seed, 77}, 0);
  std::vector<OffspringLaw> laws;
  for (const auto& d : spec.sample_environment(Measure::tilted, n, rng)) {
    laws.push_back(d.law);
  }
  return laws;
}

}  // namespace

TEST_CASE("spine on deterministic environments") {
  auto rng = chunk_rng({41, 0}, 0);

  // point_mass(1): the spine alone, no side families
  const std::vector<OffspringLaw> ones(10, OffspringLaw::point_mass(1));
  const auto t1 = simulate_spine(ones, 10, rng);
  for (std::int64_t k = 0; k <= 10; ++k) CHECK(t1.z_tilde(k) == 1);
  for (std::int64_t i = 0; i < 10; ++i) {
    CHECK(t1.spine_offspring[static_cast<std::size_t>(i)] == 1);
    for (std::int64_t k = i + 1; k <= 10; ++k) CHECK(t1.side_at(i, k) == 0);
  }
  const auto w1 = wplus_trajectory(t1);
  for (double w : w1) CHECK(w == doctest::Approx(1.0));

  // point_mass(2): full binary tree, Z~_k = 2^k, W constant 1
  const std::vector<OffspringLaw> twos(12, OffspringLaw::point_mass(2));
  const auto t2 = simulate_spine(twos, 12, rng);
  for (std::int64_t k = 0; k <= 12; ++k) CHECK(t2.z_tilde(k) == (1LL << k));
  const auto w2 = wplus_trajectory(t2);
  for (double w : w2) CHECK(w == doctest::Approx(1.0));
}

TEST_CASE("spine invariants on random environments") {
  auto rng = chunk_rng({41, 1}, 0);
  for (int rep = 0; rep < 100; ++rep) {
    const auto env = fixed_geometric_env(15, 500 + static_cast<std::uint64_t>(rep));
    const auto trace = simulate_spine(env, 15, rng);
    for (std::int64_t k = 1; k <= 15; ++k) {
      // representation: total = 1 + sum of side families, and the spine
      // never dies
      std::int64_t total = 1;
      for (std::int64_t i = 0; i < k; ++i) total += trace.side_at(i, k);
      CHECK(trace.z_tilde(k) == total);
      CHECK(trace.z_tilde(k) >= 1);
    }
    for (std::int64_t i = 0; i < 15; ++i) {
      CHECK(trace.spine_offspring[static_cast<std::size_t>(i)] >= 1);
      // seeds: V_{i+1} - 1 non-spine children one generation later
      CHECK(trace.side_at(i, i + 1) ==
            trace.spine_offspring[static_cast<std::size_t>(i)] - 1);
      CHECK(trace.side_at(i, i) == 0);
    }
  }
}

TEST_CASE("quenched spine mean: E[Z~_n^i | env] = eta_{i+1} e^{S_n - S_i}") {
  auto rng = chunk_rng({41, 2}, 0);
  for (const auto& [i, n] : std::vector<std::pair<std::int64_t, std::int64_t>>{
           {0, 5}, {2, 10}, {5, 20}}) {
    const auto env = fixed_geometric_env(
        n, 900 + static_cast<std::uint64_t>(n));
    double s_i = 0.0, s_n = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
      const double x = std::log(env[static_cast<std::size_t>(k)].mean());
      if (k < i) s_i += x;
      s_n += x;
    }
    const double expect =
        env[static_cast<std::size_t>(i)].eta() * std::exp(s_n - s_i);
    const std::int64_t replicas = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (std::int64_t rep = 0; rep < replicas; ++rep) {
      const auto trace = simulate_spine(env, n, rng);
      const double v = static_cast<double>(trace.side_at(i, n));
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / replicas;
    const double se = std::sqrt((sum2 / replicas - mean * mean) / replicas);
    CHECK(std::abs(mean - expect) <= 3.0 * se);
  }
}

TEST_CASE("submartingale bound: degenerate and geometric environments") {
  auto rng = chunk_rng({41, 3}, 0);

  const std::vector<OffspringLaw> ones(8, OffspringLaw::point_mass(1));
  std::vector<SpineTrace> trivial;
  for (int rep = 0; rep < 50; ++rep) trivial.push_back(simulate_spine(ones, 8, rng));
  const auto b0 = spine_submartingale_bound(trivial, 0, 0.5);
  CHECK(b0.exceed_freq == 0.0);

  const auto env = fixed_geometric_env(25, 321);
  std::vector<SpineTrace> traces;
  for (int rep = 0; rep < 4000; ++rep) traces.push_back(simulate_spine(env, 25, rng));
  const auto bound_k0 = spine_submartingale_bound(traces, 0, 0.5);
  CHECK(bound_k0.exceed_freq <=
        bound_k0.bound + 3.0 * std::hypot(bound_k0.exceed_se, bound_k0.bound_se));

  // the bound tightens as the window start k grows (fixed environment)
  const auto bound_k10 = spine_submartingale_bound(traces, 10, 0.5);
  CHECK(bound_k10.bound <= bound_k0.bound + 1e-12);
}

TEST_CASE("alpha/beta window statistics") {
  auto rng = chunk_rng({41, 4}, 0);

  // window covering everything: Zhat_{a,r} = Z~_r - 1
  const auto env = fixed_geometric_env(12, 808);
  for (int rep = 0; rep < 20; ++rep) {
    const auto trace = simulate_spine(env, 12, rng);
    const auto ab = alpha_beta(trace, 12, 12);
    CHECK(ab.z_hat_r == trace.z_tilde(12) - 1);
  }

  // deterministic spine: alpha = beta = 0
  const std::vector<OffspringLaw> ones(10, OffspringLaw::point_mass(1));
  const auto t1 = simulate_spine(ones, 10, rng);
  const auto ab1 = alpha_beta(t1, 2, 8);
  CHECK(ab1.alpha == 0.0);
  CHECK(ab1.window_ok);
  CHECK(ab1.beta == 0.0);
}

TEST_CASE("alpha/beta conditional identity: E[alpha | env, Zhat] = beta") {
  // Replicas on one fixed environment; regressing alpha on beta gives slope
  // 1. The window [tau-a, tau+a] contains one family (origin tau+a) that is
  // born only at generation tau+a+1, so it contributes to alpha but not to
  // beta; its conditional mean eta_{tau+a+1} e^{S_tau - S_{tau+a}} is the
  // exact regression intercept.
  auto rng = chunk_rng({41, 5}, 0);
  std::int64_t a = 4, r = 12;
  std::vector<OffspringLaw> env;
  std::int64_t tau = -1;
  WalkPath walk;
  for (std::uint64_t seed = 100;; ++seed) {
    env = fixed_geometric_env(r, seed);
    std::vector<double> xs;
    for (const auto& law : env) xs.push_back(std::log(law.mean()));
    walk = path_stats(0.0, xs);
    tau = first_min_index(walk.sums, r);
    if (tau + a <= r && tau >= 1) break;
  }
  std::vector<double> alphas, betas;
  for (int rep = 0; rep < 30000; ++rep) {
    const auto trace = simulate_spine(env, r, rng);
    const auto ab = alpha_beta(trace, a, r);
    REQUIRE(ab.window_ok);
    REQUIRE(ab.tau_r == tau);
    alphas.push_back(ab.alpha);
    betas.push_back(ab.beta);
  }
  const auto fit = ols_fit(betas, alphas);
  const double newborn =
      env[static_cast<std::size_t>(tau + a)].eta() *
      std::exp(walk.sums[static_cast<std::size_t>(tau)] -
               walk.sums[static_cast<std::size_t>(tau + a)]);
  CHECK(std::abs(fit.slope - 1.0) <= 3.0 * fit.slope_se);
  CHECK(std::abs(fit.intercept - newborn) <= 3.0 * fit.intercept_se);
}
