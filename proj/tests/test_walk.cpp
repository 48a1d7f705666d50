#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bpre/oracle.hpp"
#include "bpre/stats.hpp"
#include "bpre/walk.hpp"

using namespace bpre;

namespace {

EnvironmentSpec gaussian_family() {
  return EnvironmentSpec::calibrate_lognormal(1.0);
}

// single-atom environment with X = -1 exactly: geometric with mean e^{-1}
EnvironmentSpec drift_down_environment() {
  const double s = 1.0 / (1.0 + std::exp(-1.0));
  return EnvironmentSpec::discrete_mixture({{OffspringLaw::geometric(s), 1.0}});
}

}  // namespace

TEST_CASE("path_stats: sums, extremes, first-minimum index") {
  const auto p1 = path_stats(0.0, {-1.0, 2.0});
  CHECK(p1.sums == std::vector<double>{0.0, -1.0, 1.0});
  CHECK(p1.min_index == 1);
  CHECK(p1.running_min == -1.0);
  CHECK(p1.running_max == 1.0);

  // all-up path: S_0 is the minimum
  CHECK(path_stats(0.0, {1.0, 1.0}).min_index == 0);

  // all-down path: tau = n and M_n < 0, the duality configuration
  const auto p3 = path_stats(0.0, {-1.0, -1.0});
  CHECK(p3.min_index == 2);
  CHECK(p3.running_max == -1.0);

  // ties break to the smallest index
  CHECK(path_stats(0.0, {0.0, 0.0}).min_index == 0);
  CHECK(path_stats(0.0, {-1.0, 1.0, -1.0}).min_index == 1);

  CHECK_THROWS_AS(path_stats(0.0, {}), std::invalid_argument);
}

TEST_CASE("reversal maps {tau_n = n} to {M_n < 0} exactly, path by path") {
  const auto spec = gaussian_family();
  auto rng = chunk_rng({20, 9}, 0);
  for (int rep = 0; rep < 5000; ++rep) {
    std::vector<double> xs;
    for (int k = 0; k < 17; ++k) {
      xs.push_back(spec.sample_increment(Measure::tilted, rng));
    }
    const auto fwd = path_stats(0.0, xs);
    std::reverse(xs.begin(), xs.end());
    const auto rev = path_stats(0.0, xs);
    CHECK((rev.min_index == rev.n()) == (fwd.running_max < 0.0));
  }
}

TEST_CASE("duality: exact equality on the walk oracle, n <= 12") {
  using Atoms = std::vector<std::pair<double, double>>;
  for (const Atoms& atoms : {Atoms{{1.0, 0.5}, {-1.0, 0.5}},
                             Atoms{{1.0, 0.3}, {-1.0, 0.7}},
                             Atoms{{2.0, 0.25}, {-1.0, 0.75}}}) {
    for (std::int64_t n : {1, 2, 3, 5, 8, 12}) {
      const auto tau = enumerate_walk(atoms, n, WalkStatistic::tau_n);
      const auto max_below =
          enumerate_walk(atoms, n, WalkStatistic::max_below_zero);
      CHECK(tau.mass(n) == doctest::Approx(max_below.mass(1)).epsilon(1e-12));
    }
  }
  // hand-checked atom: P(M_2 < 0) = 1/4 for the symmetric +-1 walk
  const auto law = enumerate_walk({{1.0, 0.5}, {-1.0, 0.5}}, 2,
                                  WalkStatistic::max_below_zero);
  CHECK(law.mass(1) == doctest::Approx(0.25));
}

TEST_CASE("duality: Monte Carlo agreement at n = 50") {
  const auto spec = gaussian_family();
  const std::int64_t n = 50, samples = 200000;
  const TauLaw law = minimum_position_law(spec, n, samples, {21, 0});
  const double p_tau =
      static_cast<double>(law.counts[static_cast<std::size_t>(n)]) / samples;
  auto rng = chunk_rng({21, 1}, 0);
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < samples; ++i) {
    double s = 0.0;
    bool below = true;
    for (std::int64_t k = 0; k < n && below; ++k) {
      s += spec.sample_increment(Measure::tilted, rng);
      below = s < 0.0;
    }
    hits += below ? 1 : 0;
  }
  const double p_max = static_cast<double>(hits) / samples;
  const double se =
      std::sqrt((p_tau * (1 - p_tau) + p_max * (1 - p_max)) / samples);
  CHECK(std::abs(p_tau - p_max) <= 3.0 * se);
}

TEST_CASE("conditioned sampling: acceptance and reversal") {
  const auto spec = gaussian_family();
  auto rng = chunk_rng({22, 0}, 0);

  // n = 1, stay_neg: acceptance P(X < 0) = 1/2 for the centered tilted law
  std::int64_t attempts_total = 0;
  const std::int64_t accepted = 20000;
  for (std::int64_t i = 0; i < accepted; ++i) {
    std::int64_t attempts = 0;
    const auto path = sample_conditioned_walk(spec, PathCondition::stay_neg, 1,
                                              rng, 1 << 20, &attempts);
    CHECK(path.sums[1] < 0.0);
    attempts_total += attempts;
  }
  const double rate =
      static_cast<double>(accepted) / static_cast<double>(attempts_total);
  const double se = std::sqrt(0.25 / static_cast<double>(attempts_total));
  CHECK(std::abs(rate - 0.5) <= 3.0 * se);

  // min_at_end by duality: the minimum sits strictly at the end, every path
  for (std::int64_t i = 0; i < 2000; ++i) {
    const auto path = sample_conditioned_walk(spec, PathCondition::min_at_end,
                                              50, rng, 1 << 26);
    CHECK(path.min_index == 50);
    for (std::int64_t k = 0; k < 50; ++k) {
      CHECK(path.sums[50] < path.sums[static_cast<std::size_t>(k)]);
    }
  }

  // stay_nonneg keeps every partial sum nonnegative
  for (std::int64_t i = 0; i < 2000; ++i) {
    const auto path = sample_conditioned_walk(spec, PathCondition::stay_nonneg,
                                              30, rng, 1 << 26);
    CHECK(path.running_min >= 0.0);
  }

  CHECK_THROWS_AS(
      sample_conditioned_walk(spec, PathCondition::stay_neg, 200, rng, 2),
      RejectionExhaustedError);
}

TEST_CASE("acceptance rate scaling: P(M_n < 0) ratio n vs 4n near 2") {
  const auto spec = gaussian_family();
  auto rate_at = [&](std::int64_t n, std::uint64_t stream) {
    auto rng = chunk_rng({23, stream}, 0);
    const std::int64_t accepted = 4000;
    std::int64_t attempts_total = 0;
    for (std::int64_t i = 0; i < accepted; ++i) {
      std::int64_t attempts = 0;
      sample_conditioned_walk(spec, PathCondition::stay_neg, n, rng, 1 << 26,
                              &attempts);
      attempts_total += attempts;
    }
    return static_cast<double>(accepted) / static_cast<double>(attempts_total);
  };
  const double ratio = rate_at(100, 0) / rate_at(400, 1);
  CHECK(ratio > 2.0 * 0.85);
  CHECK(ratio < 2.0 * 1.15);
}

TEST_CASE("renewal table: anchors, monotonicity, harmonicity") {
  const auto spec = gaussian_family();
  std::vector<double> u_grid, v_grid;
  for (double x = 0.0; x <= 6.0 + 1e-9; x += 0.5) u_grid.push_back(x);
  for (double x = -6.0; x < -1e-9; x += 0.5) v_grid.push_back(x);
  const auto u = estimate_renewal(spec, 'u', u_grid, 50000, 300000, {24, 0});
  const auto v = estimate_renewal(spec, 'v', v_grid, 50000, 300000, {24, 1});

  CHECK(u.values.front() == 1.0);  // u(0) = 1 exactly
  CHECK(u.value_at(-0.5) == 0.0);  // u vanishes left of the origin
  CHECK(v.value_at(0.5) == 0.0);   // v vanishes right of the origin
  CHECK(v.v_at_zero > 0.0);

  // u nondecreasing, v nonincreasing in x, up to estimation noise
  for (std::size_t j = 0; j + 1 < u.grid.size(); ++j) {
    CHECK(u.values[j + 1] >=
          u.values[j] - 3.0 * (u.stderrs[j] + u.stderrs[j + 1]));
  }
  for (std::size_t j = 0; j + 1 < v.grid.size(); ++j) {
    CHECK(v.values[j + 1] <=
          v.values[j] + 3.0 * (v.stderrs[j] + v.stderrs[j + 1]));
  }

  for (double x : {0.0, 1.0}) {
    const auto res = check_harmonicity(u, spec, x, 50000, {24, 2});
    CHECK(res.residual <= 3.0 * res.stderr_);
  }
  const auto resv = check_harmonicity(v, spec, -0.5, 50000, {24, 3});
  CHECK(resv.residual <= 3.0 * resv.stderr_);

  CHECK_THROWS_AS(estimate_renewal(spec, 'u', {-1.0, 0.0}, 10, 100, {24, 4}),
                  std::invalid_argument);
}

TEST_CASE("renewal table: degenerate drift-down walk is exact") {
  // X = -1 always (up to rounding of log m): S_k = -k, M_k < 0 always and
  // -S_k = k, so u(x) = 1 + #{k >= 1 : k <= x}. Grid points sit off the
  // integer atoms to keep the comparisons rounding-proof.
  const auto spec = drift_down_environment();
  std::vector<double> grid{0.0, 0.5, 1.25, 1.75, 2.25, 2.75, 3.25};
  const auto u = estimate_renewal(spec, 'u', grid, 50, 1000, {25, 0});
  CHECK(u.values[0] == 1.0);
  CHECK(u.values[1] == 1.0);
  CHECK(u.values[2] == 2.0);  // k = 1 qualifies at x = 1.25
  CHECK(u.values[4] == 3.0);  // k = 1, 2 qualify at x = 2.25
  CHECK(u.stderrs[2] == 0.0);

  // single-atom expectation: E[u(x + X); x + X >= 0] = u(x - 1), and the
  // truncated-table defect |u(x-1) - u(x)| = 1 exactly
  const auto res = check_harmonicity(u, spec, 2.25, 1000, {25, 1});
  CHECK(res.residual == doctest::Approx(1.0));
  CHECK(res.stderr_ == doctest::Approx(0.0));
}

TEST_CASE("minimum position law: edges and degenerate walks") {
  const auto spec = gaussian_family();
  const TauLaw law1 = minimum_position_law(spec, 1, 100000, {26, 0});
  const double p1 = static_cast<double>(law1.counts[1]) / 100000.0;
  CHECK(std::abs(p1 - 0.5) <= 3.0 * std::sqrt(0.25 / 100000.0));

  const TauLaw degenerate =
      minimum_position_law(drift_down_environment(), 20, 500, {26, 1});
  CHECK(degenerate.counts[20] == 500);  // tau_n = n always
}

TEST_CASE("arcsine law: KS at moderate scale") {
  const auto spec = gaussian_family();
  const TauLaw law = minimum_position_law(spec, 500, 20000, {26, 2});
  CHECK(law.ks_distance(arcsine_cdf) <= 0.05);
}

TEST_CASE("meander snapshot: support and cross-scale stability") {
  const auto spec = gaussian_family();
  const auto snap_a = meander_scaling_snapshot(spec, 64, 0.0, 20000, {27, 0});
  for (double e : snap_a.endpoint) CHECK(e <= 0.0);

  const auto snap_b = meander_scaling_snapshot(spec, 256, 0.0, 20000, {27, 1});
  // same limiting endpoint law across scales
  auto a = snap_a.endpoint;
  auto b = snap_b.endpoint;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double ks = 0.0;
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() || ib < b.size()) {
    const double x = std::min(ia < a.size() ? a[ia] : 1e300,
                              ib < b.size() ? b[ib] : 1e300);
    while (ia < a.size() && a[ia] == x) ++ia;
    while (ib < b.size() && b[ib] == x) ++ib;
    ks = std::max(ks, std::abs(static_cast<double>(ia) / a.size() -
                               static_cast<double>(ib) / b.size()));
  }
  CHECK(ks <= 0.05);

  // P(M_n < 0) ratio between n and 4n near 2 (alpha = 2 scaling)
  const double ratio = snap_a.acceptance / snap_b.acceptance;
  CHECK(ratio > 2.0 * 0.85);
  CHECK(ratio < 2.0 * 1.15);
}

TEST_CASE("h-transform weighting: consistent across horizons") {
  // self-normalized u-weighted estimates of an F_1-measurable functional
  // agree between horizons (exact with the true u; the table error is small)
  const auto spec = gaussian_family();
  std::vector<double> u_grid;
  for (double x = 0.0; x <= 8.0 + 1e-9; x += 0.25) u_grid.push_back(x);
  const auto u = estimate_renewal(spec, 'u', u_grid, 50000, 300000, {29, 0});

  auto estimate = [&](std::int64_t n, std::uint64_t stream) {
    auto rng = chunk_rng({29, stream}, 0);
    double num = 0.0, den = 0.0, acc = 0.0;
    const std::int64_t draws = 150000;
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(draws));
    for (std::int64_t i = 0; i < draws; ++i) {
      const auto hs = h_transform_weighted_path(spec, u, n, rng);
      const double phi = hs.path.sums[1] <= 0.5 ? 1.0 : 0.0;
      num += hs.weight * phi;
      den += hs.weight;
      terms.push_back(hs.weight * phi);
    }
    const double mean = num / den;
    for (auto& t : terms) acc += (t - mean * den / draws) * (t - mean * den / draws);
    return std::pair{mean, std::sqrt(acc) / den};
  };
  const auto [a, se_a] = estimate(25, 1);
  const auto [b, se_b] = estimate(100, 2);
  CHECK(a > 0.0);
  CHECK(std::abs(a - b) <= 3.0 * std::hypot(se_a, se_b));

  // weights vanish exactly off the conditioning event
  auto rng = chunk_rng({29, 3}, 0);
  for (int i = 0; i < 200; ++i) {
    const auto hs = h_transform_weighted_path(spec, u, 10, rng);
    if (hs.path.running_min < 0.0) CHECK(hs.weight == 0.0);
  }
}

TEST_CASE("two-walk overshoot: edge r = 0 and monotone decrease") {
  const auto spec = gaussian_family();
  const auto zero = two_walk_overshoot_probability(spec, 50, 0, 2000, {28, 0});
  CHECK(zero.value == 0.0);

  const auto small =
      two_walk_overshoot_probability(spec, 100, 10, 20000, {28, 1});
  const auto large =
      two_walk_overshoot_probability(spec, 400, 20, 20000, {28, 2});
  CHECK(large.value < small.value);

  // r not small: more overshoot than r = 10 at the same n
  const auto wide =
      two_walk_overshoot_probability(spec, 100, 99, 20000, {28, 3});
  CHECK(wide.value > small.value);
}
