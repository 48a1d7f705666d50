#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpre/environment.hpp"
#include "bpre/walk.hpp"

namespace bpre {

// One quenched realization of the branching process.
struct GenerationTrace {
  std::vector<OffspringLaw> env;
  WalkPath walk;                   // S_k = sum of log m(Q_k)
  std::vector<std::int64_t> sizes; // Z_0..Z_n
  std::int64_t survived_to = 0;    // last k with Z_k > 0
  bool capped = false;
};

GenerationTrace simulate_quenched(std::span<const OffspringLaw> env,
                                  std::int64_t z0, std::int64_t horizon,
                                  Xoshiro256PP& rng,
                                  std::optional<std::int64_t> cap = {});

// Exact P(Z_n > 0 | env) from Z_0 = 1, via the survival-form composition of
// generating functions (cancellation-free; exact for every shipped kind).
double quenched_survival(std::span<const OffspringLaw> env, std::int64_t n);

// extinction[k] = P(one particle at generation k dies by n | env), k=0..n.
std::vector<double> extinction_profile(std::span<const OffspringLaw> env,
                                       std::int64_t n);

enum class SamplerStrategy { tilted_rejection, tilted_rao_blackwell };

SamplerStrategy strategy_from_string(const std::string& s);
std::string to_string(SamplerStrategy s);

// An observation from the conditioned sampler. Observables live at times
// <= r; weight 0 marks a killed path (rejection strategy only).
struct WeightedSample {
  double weight = 0.0;
  std::int64_t z_tau_r = 0;      // Z_{tau_r}
  std::int64_t z_r = 0;          // Z_r
  double stat_norm = 0.0;        // Z_r e^{-(S_r - S_tau_r)}
  std::int64_t tau_r = 0;
  double s_r = 0.0;
  double s_tau_r = 0.0;
  double env_mean_at_tau = 0.0;    // m(Q_{tau_r}) clipped to [0,10] (0 if tau_r=0)
  double env_mean_after_tau = 0.0; // m(Q_{tau_r+1}) clipped to [0,10]
  double env_functional = 0.0;     // optional caller functional of the env
};

// Weighted-sample collection plus the draw accounting needed for ESS
// diagnostics. Merging is associative: samples append in chunk order.
struct WeightedSampleSet {
  std::int64_t n = 0;
  std::int64_t r = 0;
  SamplerStrategy strategy = SamplerStrategy::tilted_rao_blackwell;
  std::int64_t total_drawn = 0;
  std::vector<WeightedSample> samples;  // killed paths excluded

  double sum_weight() const;
  double sum_weight_sq() const;
  double kish_ess() const;
  std::int64_t positive_count() const;
};

// Environment functional recorded per sample (sees laws and the walk).
using EnvFunctional =
    std::function<double(std::span<const OffspringLaw>, const WalkPath&)>;

// Self-normalized importance sampling of P(. | Z_n > 0).
//
// Environments are drawn under the tilted measure over n generations.
// tilted_rejection: population to r, then the survival indicator 1{Z_n>0}
//   drawn from its exact conditional law Bernoulli(1 - e_r^{Z_r});
//   weight = e^{-S_n} on survival. Identical in law to simulating to n.
// tilted_rao_blackwell: population to r conditioned on {Z_r > 0} by exact
//   twisted kernels; weight = e^{-S_n} P(Z_r>0|env) (1 - e_r^{Z_r}), whose
//   environment marginal is e^{-S_n} P(Z_n>0|env).
//
// Throws ZeroEffectiveSampleError when every weight is zero.
class ZeroEffectiveSampleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

WeightedSampleSet conditioned_survival_sampler(
    const EnvironmentSpec& spec, std::int64_t n, std::int64_t r,
    std::int64_t n_samples, const RngKey& key, SamplerStrategy strategy,
    int workers = 1, const EnvFunctional& env_functional = {});

// Default initial-stage horizon r_n = ceil(sqrt(n)).
std::int64_t default_r(std::int64_t n);

}  // namespace bpre
