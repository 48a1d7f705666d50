#include "bpre/walk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bpre/parallel.hpp"

namespace bpre {

RejectionExhaustedError::RejectionExhaustedError(std::int64_t att,
                                                 std::int64_t acc)
    : std::runtime_error("rejection sampler exhausted max_attempts (" +
                         std::to_string(att) + " attempts, " +
                         std::to_string(acc) + " accepted)"),
      attempts(att),
      accepted(acc),
      acceptance_rate(att > 0 ? static_cast<double>(acc) /
                                    static_cast<double>(att)
                              : 0.0) {}

WalkPath path_stats(double start, std::vector<double> increments) {
  if (increments.empty()) {
    throw std::invalid_argument("path_stats: empty increment vector");
  }
  WalkPath path;
  path.start = start;
  path.sums.resize(increments.size() + 1);
  path.sums[0] = start;
  double s = start;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double min_all = start;
  std::int64_t min_idx = 0;
  for (std::size_t k = 0; k < increments.size(); ++k) {
    s += increments[k];
    path.sums[k + 1] = s;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    if (s < min_all) {
      min_all = s;
      min_idx = static_cast<std::int64_t>(k + 1);
    }
  }
  path.increments = std::move(increments);
  path.running_min = lo;
  path.running_max = hi;
  path.min_index = min_idx;
  return path;
}

std::int64_t first_min_index(const std::vector<double>& sums, std::int64_t hi) {
  std::int64_t idx = 0;
  double best = sums[0];
  for (std::int64_t k = 1; k <= hi; ++k) {
    if (sums[static_cast<std::size_t>(k)] < best) {
      best = sums[static_cast<std::size_t>(k)];
      idx = k;
    }
  }
  return idx;
}

namespace {

// One rejection attempt for the prefix-monotone events. Returns true and
// fills xs on acceptance; aborts at the first violated prefix.
bool attempt_walk(const EnvironmentSpec& spec, PathCondition kind,
                  std::int64_t n, Xoshiro256PP& rng, std::vector<double>& xs) {
  const bool neg = kind != PathCondition::stay_nonneg;  // stay_neg/min_at_end
  xs.clear();
  double s = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    const double x = spec.sample_increment(Measure::tilted, rng);
    s += x;
    if (neg ? (s >= 0.0) : (s < 0.0)) return false;
    xs.push_back(x);
  }
  return true;
}

bool attempt_env(const EnvironmentSpec& spec, PathCondition kind,
                 std::int64_t n, Xoshiro256PP& rng,
                 std::vector<OffspringLaw>& laws, std::vector<double>& xs) {
  const bool neg = kind != PathCondition::stay_nonneg;
  laws.clear();
  xs.clear();
  double s = 0.0;
  for (std::int64_t k = 0; k < n; ++k) {
    EnvDraw d = spec.draw(Measure::tilted, rng);
    s += d.x;
    if (neg ? (s >= 0.0) : (s < 0.0)) return false;
    laws.push_back(std::move(d.law));
    xs.push_back(d.x);
  }
  return true;
}

}  // namespace

WalkPath sample_conditioned_walk(const EnvironmentSpec& spec,
                                 PathCondition kind, std::int64_t n,
                                 Xoshiro256PP& rng, std::int64_t max_attempts,
                                 std::int64_t* attempts_out) {
  if (n < 1) throw std::invalid_argument("sample_conditioned_walk: n < 1");
  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(n));
  for (std::int64_t attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt_walk(spec, kind, n, rng, xs)) {
      if (attempts_out) *attempts_out = attempt;
      if (kind == PathCondition::min_at_end) {
        std::reverse(xs.begin(), xs.end());
      }
      return path_stats(0.0, std::move(xs));
    }
  }
  throw RejectionExhaustedError(max_attempts, 0);
}

ConditionedEnv sample_conditioned_env(const EnvironmentSpec& spec,
                                      PathCondition kind, std::int64_t n,
                                      Xoshiro256PP& rng,
                                      std::int64_t max_attempts) {
  if (n < 1) throw std::invalid_argument("sample_conditioned_env: n < 1");
  ConditionedEnv out;
  std::vector<double> xs;
  for (std::int64_t attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt_env(spec, kind, n, rng, out.laws, xs)) {
      out.attempts = attempt;
      if (kind == PathCondition::min_at_end) {
        std::reverse(out.laws.begin(), out.laws.end());
        std::reverse(xs.begin(), xs.end());
      }
      out.walk = path_stats(0.0, std::move(xs));
      return out;
    }
  }
  throw RejectionExhaustedError(max_attempts, 0);
}

namespace {

struct RenewalAcc {
  std::vector<double> sum_t, sum_t2;   // per grid point
  std::vector<double> term_count;      // per series index k (at widest x)
};

}  // namespace

RenewalTable estimate_renewal(const EnvironmentSpec& spec, char side,
                              std::vector<double> grid, std::int64_t k_max,
                              std::int64_t n_paths, const RngKey& key,
                              int workers) {
  if (side != 'u' && side != 'v') {
    throw std::invalid_argument("estimate_renewal: side must be 'u' or 'v'");
  }
  if (k_max < 1) throw std::invalid_argument("estimate_renewal: k_max < 1");
  if (grid.empty() || !std::is_sorted(grid.begin(), grid.end())) {
    throw std::invalid_argument("estimate_renewal: grid must be sorted");
  }
  for (double x : grid) {
    if (side == 'u' && x < 0.0) {
      throw std::invalid_argument("estimate_renewal: u grid must be >= 0");
    }
    if (side == 'v' && x >= 0.0) {
      throw std::invalid_argument("estimate_renewal: v grid must be < 0");
    }
  }
  const std::size_t g = grid.size();
  const std::size_t km = static_cast<std::size_t>(k_max);

  auto chunks = run_chunked<RenewalAcc>(
      static_cast<std::uint64_t>(n_paths), key.sub(1), workers,
      [&](const ChunkRange& range, Xoshiro256PP& rng) {
        RenewalAcc acc;
        acc.sum_t.assign(g, 0.0);
        acc.sum_t2.assign(g, 0.0);
        acc.term_count.assign(km + 1, 0.0);
        std::vector<double> delta(g + 1);
        std::vector<double> t(g);
        for (std::uint64_t i = 0; i < range.count; ++i) {
          std::fill(delta.begin(), delta.end(), 0.0);
          double s = 0.0;
          for (std::int64_t k = 1; k <= k_max; ++k) {
            s += spec.sample_increment(Measure::tilted, rng);
            if (side == 'u') {
              if (s >= 0.0) break;  // M_k < 0 fails from here on
              // indicator -S_k <= x, i.e. x >= -s
              auto it = std::lower_bound(grid.begin(), grid.end(), -s);
              if (it != grid.end()) {
                delta[static_cast<std::size_t>(it - grid.begin())] += 1.0;
                acc.term_count[static_cast<std::size_t>(k)] += 1.0;
              }
            } else {
              if (s <= 0.0) break;  // L_k > 0 fails from here on
              // indicator -S_k > x, i.e. x < -s
              auto it = std::lower_bound(grid.begin(), grid.end(), -s);
              const std::size_t cut = static_cast<std::size_t>(it - grid.begin());
              if (cut > 0) {
                delta[0] += 1.0;
                delta[cut] -= 1.0;
                acc.term_count[static_cast<std::size_t>(k)] += 1.0;
              }
            }
          }
          // u marks the first qualifying grid index, v marks a [0, cut)
          // range; both resolve by one prefix pass
          double run = 0.0;
          for (std::size_t j = 0; j < g; ++j) {
            run += delta[j];
            t[j] = run;
          }
          for (std::size_t j = 0; j < g; ++j) {
            acc.sum_t[j] += t[j];
            acc.sum_t2[j] += t[j] * t[j];
          }
        }
        return acc;
      });

  RenewalAcc total;
  total.sum_t.assign(g, 0.0);
  total.sum_t2.assign(g, 0.0);
  total.term_count.assign(km + 1, 0.0);
  for (const auto& c : chunks) {
    for (std::size_t j = 0; j < g; ++j) {
      total.sum_t[j] += c.sum_t[j];
      total.sum_t2[j] += c.sum_t2[j];
    }
    for (std::size_t k = 0; k <= km; ++k) total.term_count[k] += c.term_count[k];
  }

  RenewalTable table;
  table.side = side;
  table.grid = std::move(grid);
  table.truncation_k = k_max;
  table.samples_n = n_paths;
  const double n = static_cast<double>(n_paths);
  table.values.resize(g);
  table.stderrs.resize(g);
  for (std::size_t j = 0; j < g; ++j) {
    const double mean = total.sum_t[j] / n;
    const double var = std::max(0.0, total.sum_t2[j] / n - mean * mean);
    table.values[j] = 1.0 + mean;
    table.stderrs[j] = std::sqrt(var / n);
  }

  // Truncation diagnostics at the widest grid point (slowest-decaying terms).
  auto term_se = [&](std::size_t k) {
    const double p = total.term_count[k] / n;
    return std::sqrt(std::max(p * (1.0 - p), 1.0 / n) / n);
  };
  const double last_mean = total.term_count[km] / n;
  table.truncation_ok = last_mean <= term_se(km);
  table.adaptive_k = 0;
  int consecutive = 0;
  for (std::size_t k = 1; k <= km; ++k) {
    if (total.term_count[k] / n <= term_se(k)) {
      if (++consecutive >= 3) {
        table.adaptive_k = static_cast<std::int64_t>(k);
        break;
      }
    } else {
      consecutive = 0;
    }
  }

  if (side == 'v') {
    // v(0) = E[v(X); X < 0], using the fitted table.
    struct VAcc {
      double sum = 0.0, sum2 = 0.0;
    };
    auto vchunks = run_chunked<VAcc>(
        static_cast<std::uint64_t>(n_paths), key.sub(2), workers,
        [&](const ChunkRange& range, Xoshiro256PP& rng) {
          VAcc acc;
          for (std::uint64_t i = 0; i < range.count; ++i) {
            const double x = spec.sample_increment(Measure::tilted, rng);
            const double val = x < 0.0 ? table.value_at(x) : 0.0;
            acc.sum += val;
            acc.sum2 += val * val;
          }
          return acc;
        });
    double sum = 0.0, sum2 = 0.0;
    for (const auto& c : vchunks) {
      sum += c.sum;
      sum2 += c.sum2;
    }
    const double mean = sum / n;
    table.v_at_zero = mean;
    table.v_at_zero_se =
        std::sqrt(std::max(0.0, sum2 / n - mean * mean) / n);
  }
  return table;
}

double RenewalTable::value_at(double x, bool* extrapolated) const {
  if (extrapolated) *extrapolated = false;
  if (side == 'u' && x < 0.0) return 0.0;
  if (side == 'v' && x >= 0.0) return x > 0.0 ? 0.0 : v_at_zero;
  if (x <= grid.front()) {
    if (side == 'u') return values.front();  // u flat on [0, grid[0]]
    if (x == grid.front()) return values.front();
    // v side: linear extrapolation below the most negative grid point
    if (extrapolated) *extrapolated = true;
    if (grid.size() < 2) return values.front();
    const double slope = (values[1] - values[0]) / (grid[1] - grid[0]);
    return values.front() + slope * (x - grid.front());
  }
  if (x >= grid.back()) {
    if (x == grid.back()) return values.back();
    if (side == 'v') {
      // the series limit v(0-) = 1 anchors the gap (grid.back(), 0)
      const double t = (x - grid.back()) / (0.0 - grid.back());
      return values.back() + (1.0 - values.back()) * t;
    }
    if (extrapolated) *extrapolated = true;
    if (grid.size() < 2) return values.back();
    const std::size_t j = grid.size() - 2;
    const double slope = (values[j + 1] - values[j]) / (grid[j + 1] - grid[j]);
    return values.back() + slope * (x - grid.back());
  }
  const auto it = std::upper_bound(grid.begin(), grid.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - grid.begin()) - 1;
  const double t = (x - grid[j]) / (grid[j + 1] - grid[j]);
  return values[j] + (values[j + 1] - values[j]) * t;
}

double RenewalTable::stderr_at(double x) const {
  if (side == 'u' && x < 0.0) return 0.0;
  if (side == 'v' && x >= 0.0) return x > 0.0 ? 0.0 : v_at_zero_se;
  if (x <= grid.front()) return stderrs.front();
  if (x >= grid.back()) return stderrs.back();
  const auto it = std::upper_bound(grid.begin(), grid.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - grid.begin()) - 1;
  const double t = (x - grid[j]) / (grid[j + 1] - grid[j]);
  return stderrs[j] + (stderrs[j + 1] - stderrs[j]) * t;
}

HarmonicityResidual check_harmonicity(const RenewalTable& table,
                                      const EnvironmentSpec& spec, double x,
                                      std::int64_t n_samples, const RngKey& key,
                                      int workers, double max_out_of_grid) {
  if (table.side == 'u' && x < 0.0) {
    throw std::domain_error("check_harmonicity: u side needs x >= 0");
  }
  if (table.side == 'v' && x > 0.0) {
    throw std::domain_error("check_harmonicity: v side needs x <= 0");
  }
  struct Acc {
    double sum = 0.0, sum2 = 0.0, se_sum = 0.0, extrapolated = 0.0;
  };
  auto chunks = run_chunked<Acc>(
      static_cast<std::uint64_t>(n_samples), key, workers,
      [&](const ChunkRange& range, Xoshiro256PP& rng) {
        Acc acc;
        for (std::uint64_t i = 0; i < range.count; ++i) {
          const double t = x + spec.sample_increment(Measure::tilted, rng);
          double val = 0.0;
          const bool in_side = table.side == 'u' ? (t >= 0.0) : (t < 0.0);
          if (in_side) {
            bool extr = false;
            val = table.value_at(t, &extr);
            if (extr) acc.extrapolated += 1.0;
            acc.se_sum += table.stderr_at(t);
          }
          acc.sum += val;
          acc.sum2 += val * val;
        }
        return acc;
      });
  Acc total;
  for (const auto& c : chunks) {
    total.sum += c.sum;
    total.sum2 += c.sum2;
    total.se_sum += c.se_sum;
    total.extrapolated += c.extrapolated;
  }
  const double n = static_cast<double>(n_samples);
  HarmonicityResidual r;
  r.out_of_grid_mass = total.extrapolated / n;
  if (r.out_of_grid_mass > max_out_of_grid) {
    throw std::domain_error(
        "check_harmonicity: x+X mass beyond the fitted grid (" +
        std::to_string(r.out_of_grid_mass) + ")");
  }
  const double mean = total.sum / n;
  const double mc_var = std::max(0.0, total.sum2 / n - mean * mean);
  const double anchor = table.value_at(x);
  const double anchor_se = table.stderr_at(x);
  const double eval_se = total.se_sum / n;  // table errors, fully correlated bound
  r.residual = std::abs(mean - anchor);
  r.stderr_ = std::sqrt(mc_var / n + anchor_se * anchor_se + eval_se * eval_se);
  return r;
}

TauLaw minimum_position_law(const EnvironmentSpec& spec, std::int64_t n,
                            std::int64_t n_samples, const RngKey& key,
                            int workers) {
  if (n < 1) throw std::invalid_argument("minimum_position_law: n < 1");
  using Counts = std::vector<std::int64_t>;
  auto chunks = run_chunked<Counts>(
      static_cast<std::uint64_t>(n_samples), key, workers,
      [&](const ChunkRange& range, Xoshiro256PP& rng) {
        Counts counts(static_cast<std::size_t>(n + 1), 0);
        for (std::uint64_t i = 0; i < range.count; ++i) {
          double s = 0.0, best = 0.0;
          std::int64_t idx = 0;
          for (std::int64_t k = 1; k <= n; ++k) {
            s += spec.sample_increment(Measure::tilted, rng);
            if (s < best) {
              best = s;
              idx = k;
            }
          }
          ++counts[static_cast<std::size_t>(idx)];
        }
        return counts;
      });
  TauLaw law;
  law.n = n;
  law.samples = n_samples;
  law.counts.assign(static_cast<std::size_t>(n + 1), 0);
  for (const auto& c : chunks) {
    for (std::size_t k = 0; k < c.size(); ++k) law.counts[k] += c[k];
  }
  return law;
}

double TauLaw::ks_distance(const std::function<double(double)>& cdf) const {
  double acc = 0.0;
  double worst = 0.0;
  const double total = static_cast<double>(samples);
  for (std::int64_t k = 0; k <= n; ++k) {
    const double ref = cdf(static_cast<double>(k) / static_cast<double>(n));
    worst = std::max(worst, std::abs(acc - ref));  // left limit
    acc += static_cast<double>(counts[static_cast<std::size_t>(k)]) / total;
    worst = std::max(worst, std::abs(acc - ref));
  }
  return worst;
}

MeanderSnapshot meander_scaling_snapshot(const EnvironmentSpec& spec,
                                         std::int64_t n, double x,
                                         std::int64_t n_accepted,
                                         const RngKey& key, int workers,
                                         std::int64_t max_attempts) {
  if (n < 1) throw std::invalid_argument("meander_scaling_snapshot: n < 1");
  if (x < 0.0) throw std::invalid_argument("meander_scaling_snapshot: x < 0");
  struct Acc {
    std::vector<double> endpoint;
    std::vector<std::vector<double>> dyadic;
    std::int64_t attempts = 0;
  };
  const int kDyadic = 8;
  std::vector<std::int64_t> marks;
  for (int j = 1; j <= kDyadic; ++j) marks.push_back(j * n / kDyadic);
  const double a_n = spec.tilted_walk_sigma() * std::sqrt(static_cast<double>(n));

  auto chunks = run_chunked<Acc>(
      static_cast<std::uint64_t>(n_accepted), key, workers,
      [&](const ChunkRange& range, Xoshiro256PP& rng) {
        Acc acc;
        acc.dyadic.resize(kDyadic);
        std::vector<double> snap(kDyadic);
        std::int64_t attempts = 0;
        for (std::uint64_t i = 0; i < range.count; ++i) {
          for (;;) {
            if (++attempts > max_attempts) {
              throw RejectionExhaustedError(
                  attempts, static_cast<std::int64_t>(i));
            }
            double s = 0.0;
            bool ok = true;
            std::size_t mark = 0;
            for (std::int64_t k = 1; k <= n; ++k) {
              s += spec.sample_increment(Measure::tilted, rng);
              if (s >= x) {
                ok = false;
                break;
              }
              while (mark < marks.size() && marks[mark] == k) {
                snap[mark] = s / a_n;
                ++mark;
              }
            }
            if (ok) {
              acc.endpoint.push_back(s / a_n);
              for (int j = 0; j < kDyadic; ++j) acc.dyadic[j].push_back(snap[j]);
              break;
            }
          }
        }
        acc.attempts = attempts;
        return acc;
      },
      2048);

  MeanderSnapshot out;
  out.n = n;
  out.a_n = a_n;
  out.dyadic.resize(kDyadic);
  std::int64_t attempts = 0;
  for (auto& c : chunks) {
    attempts += c.attempts;
    out.endpoint.insert(out.endpoint.end(), c.endpoint.begin(), c.endpoint.end());
    for (int j = 0; j < kDyadic; ++j) {
      out.dyadic[j].insert(out.dyadic[j].end(), c.dyadic[j].begin(),
                           c.dyadic[j].end());
    }
  }
  out.acceptance = attempts > 0 ? static_cast<double>(n_accepted) /
                                      static_cast<double>(attempts)
                                : 0.0;
  return out;
}

HTransformSample h_transform_weighted_path(const EnvironmentSpec& spec,
                                           const RenewalTable& table,
                                           std::int64_t n, Xoshiro256PP& rng) {
  if (n < 1) throw std::invalid_argument("h_transform_weighted_path: n < 1");
  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    xs.push_back(spec.sample_increment(Measure::tilted, rng));
  }
  HTransformSample out;
  out.path = path_stats(0.0, std::move(xs));
  const double s_n = out.path.sums.back();
  if (table.side == 'u') {
    out.weight = out.path.running_min >= 0.0 ? table.value_at(s_n) : 0.0;
  } else {
    out.weight = out.path.running_max < 0.0 ? table.value_at(s_n) : 0.0;
  }
  return out;
}

ProbabilityEstimate two_walk_overshoot_probability(
    const EnvironmentSpec& spec, std::int64_t n, std::int64_t r,
    std::int64_t n_accepted, const RngKey& key, int workers,
    std::int64_t max_attempts) {
  if (r >= n) throw std::invalid_argument("two_walk: need r < n");
  struct Acc {
    std::int64_t hits = 0;
  };
  auto chunks = run_chunked<Acc>(
      static_cast<std::uint64_t>(n_accepted), key, workers,
      [&](const ChunkRange& range, Xoshiro256PP& rng) {
        Acc acc;
        std::int64_t attempts = 0;
        for (std::uint64_t i = 0; i < range.count; ++i) {
          // walk 2 conditioned on tau_n = n: endpoint of a stay-neg path
          // (time reversal leaves S_n unchanged)
          double s2 = 0.0;
          for (;;) {
            if (++attempts > max_attempts) {
              throw RejectionExhaustedError(attempts,
                                            static_cast<std::int64_t>(i));
            }
            double s = 0.0;
            bool ok = true;
            for (std::int64_t k = 1; k <= n; ++k) {
              s += spec.sample_increment(Measure::tilted, rng);
              if (s >= 0.0) {
                ok = false;
                break;
              }
            }
            if (ok) {
              s2 = s;
              break;
            }
          }
          // walk 1 free over r steps
          double lhs = 0.0;
          if (r > 0) {
            double s = 0.0, lo = std::numeric_limits<double>::infinity();
            for (std::int64_t k = 1; k <= r; ++k) {
              s += spec.sample_increment(Measure::tilted, rng);
              lo = std::min(lo, s);
            }
            lhs = lo - s;
          }
          if (lhs <= s2) ++acc.hits;
        }
        return acc;
      },
      2048);
  std::int64_t hits = 0;
  for (const auto& c : chunks) hits += c.hits;
  ProbabilityEstimate est;
  est.samples = n_accepted;
  est.value = static_cast<double>(hits) / static_cast<double>(n_accepted);
  est.stderr_ = std::sqrt(std::max(est.value * (1.0 - est.value),
                                   1.0 / static_cast<double>(n_accepted)) /
                          static_cast<double>(n_accepted));
  return est;
}

}  // namespace bpre
