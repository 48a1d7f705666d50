#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bpre/bpre.hpp"

namespace bpre {

// Size-biased tree with distinguished stem: the spine particle in generation
// i-1 reproduces by the size-biased law, everyone else by the plain law.
// Side populations are stored as counts per origin generation:
//   side[i][j] = Z~_{i+1+j}^{i}, the generation-(i+1+j) descendants of the
//   spine node at generation i that avoid the spine node at i+1.
struct SpineTrace {
  std::vector<OffspringLaw> env;
  WalkPath walk;
  std::vector<std::int64_t> spine_offspring;  // V_1..V_n, each >= 1
  std::vector<std::vector<std::int64_t>> side;
  bool capped = false;  // a side family hit the population guard

  std::int64_t horizon() const {
    return static_cast<std::int64_t>(spine_offspring.size());
  }
  // Z~_k^i (zero for i >= k or beyond the horizon).
  std::int64_t side_at(std::int64_t i, std::int64_t k) const;
  // Z~_k = 1 + sum_i Z~_k^i.
  std::int64_t z_tilde(std::int64_t k) const;
};

SpineTrace simulate_spine(std::span<const OffspringLaw> env,
                          std::int64_t horizon, Xoshiro256PP& rng);

// W_k = e^{-S_k} Z~_k for k = 0..n.
std::vector<double> wplus_trajectory(const SpineTrace& trace);

struct SubmartingaleBound {
  double exceed_freq = 0.0;   // P( sup_{m>k} e^{-S_m} sum_{i=k}^{m-1} Z~_m^i >= eps )
  double exceed_se = 0.0;
  double bound = 0.0;         // (1/eps) E[ 1 ^ sum_{i>=k} eta_{i+1} e^{-S_i} ]
  double bound_se = 0.0;
};

// Empirical check of the Doob-inequality bound over a set of traces (fixed or
// varying environments).
SubmartingaleBound spine_submartingale_bound(std::span<const SpineTrace> traces,
                                             std::int64_t k, double eps);

// Window statistics around tau_r:
//   Zhat_{a,k} = sum_{|i - tau_r| <= a} Z~_k^i
//   alpha = e^{S_tau - S_r} Zhat_{a,r}
//   beta  = e^{S_tau - S_{tau+a}} Zhat_{a,tau+a}  (needs tau_r + a <= r)
struct AlphaBeta {
  std::int64_t tau_r = 0;
  std::int64_t z_hat_r = 0;
  std::int64_t z_hat_tau_a = 0;
  double alpha = 0.0;
  double beta = 0.0;
  bool window_ok = false;  // tau_r + a <= r
};

AlphaBeta alpha_beta(const SpineTrace& trace, std::int64_t a, std::int64_t r);

}  // namespace bpre
