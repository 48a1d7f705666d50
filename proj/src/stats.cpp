#include "bpre/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace bpre {

Estimate mean_se(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  if (values.empty()) return {};
  double sum = 0.0, sum2 = 0.0;
  for (double v : values) {
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double var = std::max(0.0, sum2 / n - mean * mean);
  return Estimate{mean, std::sqrt(var / n)};
}

Estimate weighted_mean(const WeightedSampleSet& set,
                       const std::function<double(const WeightedSample&)>& f) {
  double sw = 0.0;
  for (const auto& s : set.samples) sw += s.weight;
  if (sw <= 0.0) return {};
  double num = 0.0;
  for (const auto& s : set.samples) num += s.weight * f(s);
  const double mean = num / sw;
  // ratio-estimator linearization: Var = sum w^2 (f - mean)^2 / (sum w)^2
  double acc = 0.0;
  for (const auto& s : set.samples) {
    const double d = s.weight * (f(s) - mean);
    acc += d * d;
  }
  return Estimate{mean, std::sqrt(acc) / sw};
}

double WeightedAtomLaw::mass(std::int64_t value) const {
  auto it = atoms.find(value);
  return it == atoms.end() ? 0.0 : it->second.value;
}

WeightedAtomLaw weighted_law(
    const WeightedSampleSet& set,
    const std::function<std::int64_t(const WeightedSample&)>& f) {
  WeightedAtomLaw law;
  double sw = 0.0, sw2 = 0.0;
  std::map<std::int64_t, double> mass;
  for (const auto& s : set.samples) {
    sw += s.weight;
    sw2 += s.weight * s.weight;
    mass[f(s)] += s.weight;
  }
  if (sw <= 0.0) return law;
  law.kish_ess = sw2 > 0.0 ? sw * sw / sw2 : 0.0;
  // ratio-estimator error per atom:
  // sum_s w^2 (1{v=a} - p_a)^2 = (1 - 2 p_a) W2_a + p_a^2 W2
  std::map<std::int64_t, double> w2_at;
  for (const auto& s : set.samples) {
    w2_at[f(s)] += s.weight * s.weight;
  }
  for (const auto& [value, m] : mass) {
    const double p = m / sw;
    const double var =
        std::max(0.0, (1.0 - 2.0 * p) * w2_at[value] + p * p * sw2);
    law.atoms[value] = Estimate{p, std::sqrt(var) / sw};
  }
  return law;
}

TvDistance tv_on_atoms(const WeightedAtomLaw& a, const WeightedAtomLaw& b,
                       double floor_mass) {
  std::set<std::int64_t> keep;
  for (const auto& [v, e] : a.atoms) {
    if (e.value >= floor_mass) keep.insert(v);
  }
  for (const auto& [v, e] : b.atoms) {
    if (e.value >= floor_mass) keep.insert(v);
  }
  TvDistance out;
  double tail_a = 1.0, tail_b = 1.0, noise2 = 0.0;
  for (std::int64_t v : keep) {
    const double pa = a.mass(v), pb = b.mass(v);
    out.value += 0.5 * std::abs(pa - pb);
    tail_a -= pa;
    tail_b -= pb;
    const auto ia = a.atoms.find(v);
    const auto ib = b.atoms.find(v);
    if (ia != a.atoms.end()) noise2 += ia->second.stderr_ * ia->second.stderr_;
    if (ib != b.atoms.end()) noise2 += ib->second.stderr_ * ib->second.stderr_;
  }
  out.value += 0.5 * std::abs(tail_a - tail_b);
  out.noise = 0.5 * std::sqrt(noise2);
  return out;
}

double weighted_ks(const WeightedSampleSet& a, const WeightedSampleSet& b,
                   const std::function<double(const WeightedSample&)>& f) {
  auto extract = [&](const WeightedSampleSet& set) {
    std::vector<std::pair<double, double>> vw;
    vw.reserve(set.samples.size());
    double sw = 0.0;
    for (const auto& s : set.samples) {
      if (s.weight <= 0.0) continue;
      vw.emplace_back(f(s), s.weight);
      sw += s.weight;
    }
    std::sort(vw.begin(), vw.end());
    for (auto& [v, w] : vw) w /= sw;
    return vw;
  };
  auto va = extract(a);
  auto vb = extract(b);
  double fa = 0.0, fb = 0.0, worst = 0.0;
  std::size_t ia = 0, ib = 0;
  while (ia < va.size() || ib < vb.size()) {
    const double xa = ia < va.size() ? va[ia].first
                                     : std::numeric_limits<double>::infinity();
    const double xb = ib < vb.size() ? vb[ib].first
                                     : std::numeric_limits<double>::infinity();
    const double x = std::min(xa, xb);
    while (ia < va.size() && va[ia].first == x) fa += va[ia++].second;
    while (ib < vb.size() && vb[ib].first == x) fb += vb[ib++].second;
    worst = std::max(worst, std::abs(fa - fb));
  }
  return worst;
}

double ks_to_cdf(std::vector<double> values,
                 const std::function<double(double)>& cdf) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double ref = cdf(values[i]);
    worst = std::max(worst, std::abs(static_cast<double>(i) / n - ref));
    worst = std::max(worst, std::abs(static_cast<double>(i + 1) / n - ref));
  }
  return worst;
}

Estimate weighted_mass_below(
    const WeightedSampleSet& set,
    const std::function<double(const WeightedSample&)>& f, double threshold) {
  return weighted_mean(
      set, [&](const WeightedSample& s) { return f(s) <= threshold ? 1.0 : 0.0; });
}

double arcsine_cdf(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return 2.0 / std::numbers::pi * std::asin(std::sqrt(t));
}

double ks_two_sample_critical(double alpha, double n1, double n2) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt((n1 + n2) / (n1 * n2));
}

LinearFit ols_fit(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 3 || y.size() != n) {
    throw std::invalid_argument("ols_fit: need matching samples, n >= 3");
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - fit.intercept - fit.slope * x[i];
    rss += e * e;
  }
  const double s2 = rss / static_cast<double>(n - 2);
  fit.slope_se = std::sqrt(s2 / sxx);
  fit.intercept_se =
      std::sqrt(s2 * (1.0 / static_cast<double>(n) + mx * mx / sxx));
  return fit;
}

Estimate correlation(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 3 || y.size() != n) {
    throw std::invalid_argument("correlation: need matching samples, n >= 3");
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return Estimate{0.0, 0.0};
  return Estimate{sxy / std::sqrt(sxx * syy),
                  1.0 / std::sqrt(static_cast<double>(n))};
}

}  // namespace bpre
