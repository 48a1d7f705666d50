#include "bpre/spine.hpp"

#include <algorithm>
#include <cmath>

namespace bpre {

std::int64_t SpineTrace::side_at(std::int64_t i, std::int64_t k) const {
  if (i < 0 || i >= k || k > horizon()) return 0;
  const auto& row = side[static_cast<std::size_t>(i)];
  const std::size_t j = static_cast<std::size_t>(k - i - 1);
  return j < row.size() ? row[j] : 0;
}

std::int64_t SpineTrace::z_tilde(std::int64_t k) const {
  std::int64_t total = 1;
  for (std::int64_t i = 0; i < k; ++i) {
    total = checked_add(total, side_at(i, k));
  }
  return total;
}

SpineTrace simulate_spine(std::span<const OffspringLaw> env,
                          std::int64_t horizon, Xoshiro256PP& rng) {
  if (horizon < 1 || horizon > static_cast<std::int64_t>(env.size())) {
    throw std::invalid_argument("simulate_spine: horizon out of range");
  }
  const std::size_t n = static_cast<std::size_t>(horizon);
  SpineTrace trace;
  trace.env.assign(env.begin(), env.begin() + horizon);
  std::vector<double> xs(n);
  std::vector<OffspringLaw> biased;
  biased.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    xs[k] = std::log(env[k].mean());
    biased.push_back(env[k].size_bias());
  }
  trace.walk = path_stats(0.0, std::move(xs));

  trace.spine_offspring.resize(n);
  trace.side.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // spine node at generation i reproduces by the size-biased law of Q_{i+1}
    const std::int64_t v = biased[i].sample(rng);
    trace.spine_offspring[i] = v;
    auto& row = trace.side[i];
    row.resize(n - i, 0);
    std::int64_t z = v - 1;  // non-spine children at generation i+1
    row[0] = z;
    for (std::size_t j = 1; j < row.size() && z > 0; ++j) {
      z = env[i + j].sample_total(z, rng);
      row[j] = z;
    }
  }
  return trace;
}

std::vector<double> wplus_trajectory(const SpineTrace& trace) {
  const std::int64_t n = trace.horizon();
  std::vector<double> w(static_cast<std::size_t>(n) + 1);
  w[0] = 1.0;
  for (std::int64_t k = 1; k <= n; ++k) {
    w[static_cast<std::size_t>(k)] =
        std::exp(-trace.walk.sums[static_cast<std::size_t>(k)]) *
        static_cast<double>(trace.z_tilde(k));
  }
  return w;
}

SubmartingaleBound spine_submartingale_bound(std::span<const SpineTrace> traces,
                                             std::int64_t k, double eps) {
  if (!(eps > 0.0) || !(eps < 1.0)) {
    throw std::invalid_argument("spine_submartingale_bound: eps in (0,1)");
  }
  if (traces.empty()) {
    throw std::invalid_argument("spine_submartingale_bound: no traces");
  }
  double exceed = 0.0;
  double bsum = 0.0, bsum2 = 0.0;
  for (const auto& trace : traces) {
    const std::int64_t n = trace.horizon();
    bool hit = false;
    for (std::int64_t m = k + 1; m <= n && !hit; ++m) {
      std::int64_t tail = 0;
      for (std::int64_t i = k; i < m; ++i) {
        tail = checked_add(tail, trace.side_at(i, m));
      }
      const double val =
          std::exp(-trace.walk.sums[static_cast<std::size_t>(m)]) *
          static_cast<double>(tail);
      if (val >= eps) hit = true;
    }
    if (hit) exceed += 1.0;
    double series = 0.0;
    for (std::int64_t i = k; i < n; ++i) {
      series += trace.env[static_cast<std::size_t>(i)].eta() *
                std::exp(-trace.walk.sums[static_cast<std::size_t>(i)]);
    }
    const double b = std::min(1.0, series);
    bsum += b;
    bsum2 += b * b;
  }
  const double nt = static_cast<double>(traces.size());
  SubmartingaleBound out;
  out.exceed_freq = exceed / nt;
  out.exceed_se = std::sqrt(
      std::max(out.exceed_freq * (1.0 - out.exceed_freq), 1.0 / nt) / nt);
  const double bmean = bsum / nt;
  out.bound = bmean / eps;
  out.bound_se =
      std::sqrt(std::max(0.0, bsum2 / nt - bmean * bmean) / nt) / eps;
  return out;
}

AlphaBeta alpha_beta(const SpineTrace& trace, std::int64_t a, std::int64_t r) {
  if (a < 0 || r < 1 || r > trace.horizon()) {
    throw std::invalid_argument("alpha_beta: bad window");
  }
  AlphaBeta out;
  out.tau_r = first_min_index(trace.walk.sums, r);
  const double s_tau = trace.walk.sums[static_cast<std::size_t>(out.tau_r)];
  const double s_r = trace.walk.sums[static_cast<std::size_t>(r)];
  auto z_hat = [&](std::int64_t kk) {
    std::int64_t total = 0;
    const std::int64_t lo = std::max<std::int64_t>(0, out.tau_r - a);
    const std::int64_t hi = out.tau_r + a;
    for (std::int64_t i = lo; i <= hi; ++i) {
      total = checked_add(total, trace.side_at(i, kk));
    }
    return total;
  };
  out.z_hat_r = z_hat(r);
  out.alpha = std::exp(s_tau - s_r) * static_cast<double>(out.z_hat_r);
  out.window_ok = out.tau_r + a <= r;
  if (out.window_ok) {
    const std::int64_t ka = out.tau_r + a;
    out.z_hat_tau_a = z_hat(ka);
    const double s_ka = trace.walk.sums[static_cast<std::size_t>(ka)];
    out.beta = std::exp(s_tau - s_ka) * static_cast<double>(out.z_hat_tau_a);
  }
  return out;
}

}  // namespace bpre
