#include "bpre/bpre.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bpre/parallel.hpp"

namespace bpre {

GenerationTrace simulate_quenched(std::span<const OffspringLaw> env,
                                  std::int64_t z0, std::int64_t horizon,
                                  Xoshiro256PP& rng,
                                  std::optional<std::int64_t> cap) {
  if (z0 < 0) throw std::invalid_argument("simulate_quenched: z0 < 0");
  if (horizon < 0 || horizon > static_cast<std::int64_t>(env.size())) {
    throw std::invalid_argument("simulate_quenched: horizon out of range");
  }
  GenerationTrace trace;
  trace.env.assign(env.begin(), env.begin() + horizon);
  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(horizon));
  for (std::int64_t k = 0; k < horizon; ++k) {
    xs.push_back(std::log(env[static_cast<std::size_t>(k)].mean()));
  }
  trace.sizes.reserve(static_cast<std::size_t>(horizon) + 1);
  trace.sizes.push_back(z0);
  std::int64_t z = z0;
  trace.survived_to = z > 0 ? 0 : -1;
  for (std::int64_t k = 0; k < horizon; ++k) {
    z = env[static_cast<std::size_t>(k)].sample_total(z, rng);
    trace.sizes.push_back(z);
    if (z > 0) trace.survived_to = k + 1;
    if (cap && z > *cap) trace.capped = true;
  }
  if (horizon > 0) trace.walk = path_stats(0.0, std::move(xs));
  return trace;
}

std::vector<double> extinction_profile(std::span<const OffspringLaw> env,
                                       std::int64_t n) {
  if (n < 0 || n > static_cast<std::int64_t>(env.size())) {
    throw std::invalid_argument("extinction_profile: n out of range");
  }
  std::vector<double> ext(static_cast<std::size_t>(n) + 1);
  double sigma = 1.0;
  ext[static_cast<std::size_t>(n)] = 0.0;
  for (std::int64_t k = n - 1; k >= 0; --k) {
    sigma = env[static_cast<std::size_t>(k)].survival_step(sigma);
    ext[static_cast<std::size_t>(k)] = 1.0 - sigma;
  }
  return ext;
}

double quenched_survival(std::span<const OffspringLaw> env, std::int64_t n) {
  if (n < 0 || n > static_cast<std::int64_t>(env.size())) {
    throw std::invalid_argument("quenched_survival: n out of range");
  }
  double sigma = 1.0;
  for (std::int64_t k = n - 1; k >= 0; --k) {
    sigma = env[static_cast<std::size_t>(k)].survival_step(sigma);
  }
  return sigma;
}

SamplerStrategy strategy_from_string(const std::string& s) {
  if (s == "tilted_rejection") return SamplerStrategy::tilted_rejection;
  if (s == "tilted_rao_blackwell") return SamplerStrategy::tilted_rao_blackwell;
  throw std::invalid_argument("unknown strategy: " + s);
}

std::string to_string(SamplerStrategy s) {
  return s == SamplerStrategy::tilted_rejection ? "tilted_rejection"
                                                : "tilted_rao_blackwell";
}

double WeightedSampleSet::sum_weight() const {
  double s = 0.0;
  for (const auto& w : samples) s += w.weight;
  return s;
}

double WeightedSampleSet::sum_weight_sq() const {
  double s = 0.0;
  for (const auto& w : samples) s += w.weight * w.weight;
  return s;
}

double WeightedSampleSet::kish_ess() const {
  const double s1 = sum_weight();
  const double s2 = sum_weight_sq();
  return s2 > 0.0 ? s1 * s1 / s2 : 0.0;
}

std::int64_t WeightedSampleSet::positive_count() const {
  std::int64_t c = 0;
  for (const auto& w : samples) c += w.weight > 0.0 ? 1 : 0;
  return c;
}

std::int64_t default_r(std::int64_t n) {
  return static_cast<std::int64_t>(
      std::ceil(std::sqrt(static_cast<double>(n))));
}

namespace {

// P(at least one of z independent lines survives) given per-line survival
// probability sigma; cancellation-free for tiny sigma.
double survival_from(double sigma, std::int64_t z) {
  if (z <= 0 || sigma <= 0.0) return 0.0;
  if (sigma >= 1.0) return 1.0;
  return -std::expm1(static_cast<double>(z) * std::log1p(-sigma));
}

// Z_k | Z_{k-1} = z, survival to r: exact draw from the twisted convolution
// q^{*z} weighted by 1-(1-sigma)^y, sigma = per-child survival from gen k.
// Proposal/accept when acceptance is decent, inverse-CDF summation of the
// twisted NB pmf otherwise (geometric laws; other kinds stay on rejection).
std::int64_t sample_twisted_total(const OffspringLaw& law, std::int64_t z,
                                  double sigma, Xoshiro256PP& rng) {
  // sigma = 1 still twists: the factor 1-(1-sigma)^y = 1{y >= 1} rejects
  // extinction at this step (the weight already carries P(Z_r > 0 | env))
  const double step_accept = survival_from(law.survival_step(sigma), z);
  const bool can_sum =
      law.kind() == OffspringKind::geometric && !law.size_biased();
  const int max_rounds = can_sum ? 64 : 200000;
  if (!(can_sum && step_accept < 0.1)) {
    for (int round = 0; round < max_rounds; ++round) {
      const std::int64_t y = law.sample_total(z, rng);
      if (rng.uniform01() < survival_from(sigma, y)) return y;
    }
    if (!can_sum) {
      throw RejectionExhaustedError(max_rounds, 0);
    }
  }
  // twisted negative binomial via direct CDF walk; the pmf recurrence runs
  // in log space because z log s can underflow long before the mode
  const double s = law.geometric_s();
  const double q = 1.0 - s;
  const double c = std::exp(static_cast<double>(z) *
                            std::log(s / (s + q * sigma)));  // f(1-sigma)^z
  const double target = rng.uniform01() * (1.0 - c);
  const double log_q = std::log(q);
  double log_nb = static_cast<double>(z) * std::log(s);
  double acc = 0.0;
  std::int64_t y = 0;
  for (;;) {
    if (y > 0 && log_nb > -745.0) {
      acc += std::exp(log_nb) * survival_from(sigma, y);
    }
    if (acc >= target && y > 0) return y;
    log_nb += std::log((static_cast<double>(z) + static_cast<double>(y)) /
                       (static_cast<double>(y) + 1.0)) +
              log_q;
    ++y;
    if (y > (1 << 26)) {
      throw std::runtime_error("sample_twisted_total: CDF walk diverged");
    }
  }
}

struct SamplerChunk {
  std::vector<WeightedSample> samples;
  std::int64_t drawn = 0;
};

}  // namespace

WeightedSampleSet conditioned_survival_sampler(
    const EnvironmentSpec& spec, std::int64_t n, std::int64_t r,
    std::int64_t n_samples, const RngKey& key, SamplerStrategy strategy,
    int workers, const EnvFunctional& env_functional) {
  if (n < 1 || r < 1 || r > n) {
    throw std::invalid_argument("conditioned_survival_sampler: need 1 <= r <= n");
  }
  const std::size_t nn = static_cast<std::size_t>(n);
  const std::size_t rr = static_cast<std::size_t>(r);

  auto chunks = run_chunked<SamplerChunk>(
      static_cast<std::uint64_t>(n_samples), key, workers,
      [&](const ChunkRange& range, Xoshiro256PP& rng) {
        SamplerChunk out;
        out.samples.reserve(range.count / 4 + 16);
        std::vector<OffspringLaw> laws;
        std::vector<double> sums(nn + 1);
        std::vector<double> surv_n(nn + 1);  // survival from gen k to n
        std::vector<double> surv_r(rr + 1);  // survival from gen k to r
        std::vector<std::int64_t> zpath(rr + 1);
        laws.reserve(nn);
        for (std::uint64_t i = 0; i < range.count; ++i) {
          ++out.drawn;
          laws.clear();
          sums[0] = 0.0;
          for (std::size_t k = 0; k < nn; ++k) {
            EnvDraw d = spec.draw(Measure::tilted, rng);
            sums[k + 1] = sums[k] + d.x;
            laws.push_back(std::move(d.law));
          }
          // survival profiles (survival form, cancellation-free)
          surv_n[nn] = 1.0;
          for (std::size_t k = nn; k-- > 0;) {
            surv_n[k] = laws[k].survival_step(surv_n[k + 1]);
          }
          surv_r[rr] = 1.0;
          for (std::size_t k = rr; k-- > 0;) {
            surv_r[k] = laws[k].survival_step(surv_r[k + 1]);
          }

          WeightedSample sample;
          zpath[0] = 1;
          bool killed = false;
          if (strategy == SamplerStrategy::tilted_rejection) {
            std::int64_t z = 1;
            for (std::size_t k = 1; k <= rr && z > 0; ++k) {
              z = laws[k - 1].sample_total(z, rng);
              zpath[k] = z;
            }
            if (z == 0) {
              killed = true;
            } else {
              const double p_tail = survival_from(surv_n[rr], z);
              if (rng.uniform01() < p_tail) {
                sample.weight = std::exp(-sums[nn]);
              } else {
                killed = true;
              }
            }
          } else {
            const double p_surv_r = surv_r[0];
            if (p_surv_r <= 0.0) {
              killed = true;
            } else {
              std::int64_t z = 1;
              for (std::size_t k = 1; k <= rr; ++k) {
                z = sample_twisted_total(laws[k - 1], z, surv_r[k], rng);
                zpath[k] = z;
              }
              const double tail = survival_from(surv_n[rr], z);
              sample.weight = std::exp(-sums[nn]) * p_surv_r * tail;
              if (sample.weight <= 0.0) killed = true;
            }
          }
          if (killed) continue;

          const std::int64_t tau = first_min_index(sums, r);
          sample.tau_r = tau;
          sample.s_r = sums[rr];
          sample.s_tau_r = sums[static_cast<std::size_t>(tau)];
          sample.z_tau_r = zpath[static_cast<std::size_t>(tau)];
          sample.z_r = zpath[rr];
          sample.stat_norm = static_cast<double>(sample.z_r) *
                             std::exp(sample.s_tau_r - sample.s_r);
          auto clip10 = [](double v) { return std::clamp(v, 0.0, 10.0); };
          sample.env_mean_at_tau =
              tau >= 1 ? clip10(laws[static_cast<std::size_t>(tau - 1)].mean())
                       : 0.0;
          sample.env_mean_after_tau =
              tau < n ? clip10(laws[static_cast<std::size_t>(tau)].mean()) : 0.0;
          if (env_functional) {
            std::vector<double> incr(nn);
            for (std::size_t k = 0; k < nn; ++k) incr[k] = sums[k + 1] - sums[k];
            sample.env_functional = env_functional(laws, path_stats(0.0, std::move(incr)));
          }
          out.samples.push_back(sample);
        }
        return out;
      });

  WeightedSampleSet set;
  set.n = n;
  set.r = r;
  set.strategy = strategy;
  for (auto& c : chunks) {
    set.total_drawn += c.drawn;
    set.samples.insert(set.samples.end(), c.samples.begin(), c.samples.end());
  }
  if (set.sum_weight() <= 0.0) {
    throw ZeroEffectiveSampleError(
        "conditioned_survival_sampler: all weights are zero");
  }
  return set;
}

}  // namespace bpre
