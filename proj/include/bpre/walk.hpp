#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bpre/environment.hpp"
#include "bpre/rng.hpp"

namespace bpre {

// Thrown by rejection samplers when max_attempts is exhausted; carries the
// empirical acceptance rate observed so far.
class RejectionExhaustedError : public std::runtime_error {
 public:
  RejectionExhaustedError(std::int64_t attempts, std::int64_t accepted);
  std::int64_t attempts;
  std::int64_t accepted;
  double acceptance_rate;
};

// The associated random walk S_0..S_n with its extremal statistics.
// L_n and M_n run over indices 1..n (S_0 excluded); tau_n is the first index
// in [0, n] attaining the minimum of S_0..S_n.
struct WalkPath {
  double start = 0.0;
  std::vector<double> increments;
  std::vector<double> sums;  // sums[k] = S_k, size n+1
  std::int64_t min_index = 0;
  double running_min = 0.0;  // L_n
  double running_max = 0.0;  // M_n

  std::int64_t n() const { return static_cast<std::int64_t>(increments.size()); }
};

WalkPath path_stats(double start, std::vector<double> increments);

// First index in [0, hi] minimizing sums[0..hi] (ties to the smallest index).
std::int64_t first_min_index(const std::vector<double>& sums, std::int64_t hi);

enum class PathCondition { stay_nonneg, stay_neg, min_at_end };

// Environment draws with the attached walk, produced under a conditioning.
struct ConditionedEnv {
  std::vector<OffspringLaw> laws;
  WalkPath walk;
  std::int64_t attempts = 0;
};

// Rejection sampling of tilted environments on a path event, with early
// abort (the events are prefix-monotone). min_at_end is produced by sampling
// stay_neg and reversing the sequence (duality).
ConditionedEnv sample_conditioned_env(const EnvironmentSpec& spec,
                                      PathCondition kind, std::int64_t n,
                                      Xoshiro256PP& rng,
                                      std::int64_t max_attempts = 1 << 30);

// Walk-only variant (no offspring laws materialized).
WalkPath sample_conditioned_walk(const EnvironmentSpec& spec,
                                 PathCondition kind, std::int64_t n,
                                 Xoshiro256PP& rng,
                                 std::int64_t max_attempts,
                                 std::int64_t* attempts_out = nullptr);

// Renewal function table on one side of the origin, estimated from the
// truncated series u(x) = 1 + sum_{k<=K} P(-S_k <= x, M_k < 0) (side 'u')
// or v(x) = 1 + sum_{k<=K} P(-S_k > x, L_k > 0) (side 'v').
struct RenewalTable {
  char side = 'u';
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<double> stderrs;
  double v_at_zero = 0.0;     // E[v(X); X<0], v side only
  double v_at_zero_se = 0.0;
  std::int64_t truncation_k = 0;
  std::int64_t samples_n = 0;
  bool truncation_ok = true;  // last term below its own standard error
  std::int64_t adaptive_k = 0;  // first k with three consecutive terms < SE

  // Piecewise-linear interpolation on the fitted grid; u(x)=0 for x<0,
  // v(x)=0 for x>0, and linear extrapolation beyond the far end.
  double value_at(double x, bool* extrapolated = nullptr) const;
  double stderr_at(double x) const;
};

RenewalTable estimate_renewal(const EnvironmentSpec& spec, char side,
                              std::vector<double> grid, std::int64_t k_max,
                              std::int64_t n_paths, const RngKey& key,
                              int workers = 1);

struct HarmonicityResidual {
  double residual = 0.0;       // |E[h(x+X); side] - h(x)|
  double stderr_ = 0.0;
  double out_of_grid_mass = 0.0;
};

// Monte Carlo check of the harmonic identity E[u(x+X); x+X>=0] = u(x)
// (resp. E[v(x+X); x+X<0] = v(x)). Throws std::domain_error if more than
// max_out_of_grid of the x+X mass falls beyond the fitted grid.
HarmonicityResidual check_harmonicity(const RenewalTable& table,
                                      const EnvironmentSpec& spec, double x,
                                      std::int64_t n_samples, const RngKey& key,
                                      int workers = 1,
                                      double max_out_of_grid = 1e-3);

// Empirical law of tau_n under the tilted measure.
struct TauLaw {
  std::int64_t n = 0;
  std::int64_t samples = 0;
  std::vector<std::int64_t> counts;  // counts[k] = #{tau_n = k}, size n+1

  // sup_k |Fhat(tau_n <= k) - cdf(k/n)|
  double ks_distance(const std::function<double(double)>& cdf) const;
};

TauLaw minimum_position_law(const EnvironmentSpec& spec, std::int64_t n,
                            std::int64_t n_samples, const RngKey& key,
                            int workers = 1);

// Endpoint and dyadic-time snapshots of S/a_n conditioned on M_n < x.
struct MeanderSnapshot {
  std::int64_t n = 0;
  double a_n = 0.0;
  double acceptance = 0.0;
  std::vector<double> endpoint;                 // S_n / a_n per accepted path
  std::vector<std::vector<double>> dyadic;      // values at n/8, n/4, 3n/8, ...
};

MeanderSnapshot meander_scaling_snapshot(const EnvironmentSpec& spec,
                                         std::int64_t n, double x,
                                         std::int64_t n_accepted,
                                         const RngKey& key, int workers = 1,
                                         std::int64_t max_attempts = 1 << 30);

// One draw for the Doob h-transform estimator of conditioned-walk
// expectations: the path is sampled unconditioned under the tilted measure
// and carries weight u(S_n) 1{L_n >= 0} (u table) or v(S_n) 1{M_n < 0}
// (v table). Self-normalized averages of F_k-measurable functionals agree
// across horizons n; an estimated table biases the law by its estimation
// error, which is why rejection stays the default strategy.
struct HTransformSample {
  WalkPath path;
  double weight = 0.0;
};

HTransformSample h_transform_weighted_path(const EnvironmentSpec& spec,
                                           const RenewalTable& table,
                                           std::int64_t n, Xoshiro256PP& rng);

struct ProbabilityEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::int64_t samples = 0;
};

// P( min_{1<=i<=r} (S^1_i - S^1_r) <= S^2_n | tau^2_n = n ), estimated with
// walk 2 conditioned by min_at_end and walk 1 free. r = 0 uses min = 0.
ProbabilityEstimate two_walk_overshoot_probability(
    const EnvironmentSpec& spec, std::int64_t n, std::int64_t r,
    std::int64_t n_accepted, const RngKey& key, int workers = 1,
    std::int64_t max_attempts = 1 << 30);

}  // namespace bpre
