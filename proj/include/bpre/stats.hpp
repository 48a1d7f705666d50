#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "bpre/bpre.hpp"

namespace bpre {

struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

// Plain mean with standard error.
Estimate mean_se(std::span<const double> values);

// Self-normalized weighted mean sum(w f)/sum(w) with the ratio-estimator
// standard error.
Estimate weighted_mean(const WeightedSampleSet& set,
                       const std::function<double(const WeightedSample&)>& f);

// Weighted law of an integer observable: atom -> (probability, stderr).
struct WeightedAtomLaw {
  std::map<std::int64_t, Estimate> atoms;
  double kish_ess = 0.0;

  double mass(std::int64_t value) const;
};

WeightedAtomLaw weighted_law(
    const WeightedSampleSet& set,
    const std::function<std::int64_t(const WeightedSample&)>& f);

// Total-variation distance restricted to atoms of estimated mass >= floor in
// either law, plus one lumped tail atom; the TV noise scale is returned as
// the quadrature sum of the selected atoms' standard errors.
struct TvDistance {
  double value = 0.0;
  double noise = 0.0;
};

TvDistance tv_on_atoms(const WeightedAtomLaw& a, const WeightedAtomLaw& b,
                       double floor_mass = 1e-3);

// Weighted two-sample Kolmogorov-Smirnov distance between real observables.
double weighted_ks(const WeightedSampleSet& a, const WeightedSampleSet& b,
                   const std::function<double(const WeightedSample&)>& f);

// Kolmogorov-Smirnov distance of a plain sample against a reference cdf.
double ks_to_cdf(std::vector<double> values,
                 const std::function<double(double)>& cdf);

// Weighted fraction of samples with f(sample) <= threshold.
Estimate weighted_mass_below(
    const WeightedSampleSet& set,
    const std::function<double(const WeightedSample&)>& f, double threshold);

// Beta(1/2,1/2) cdf (the arcsine law).
double arcsine_cdf(double t);

// Asymptotic two-sample KS critical value at significance alpha.
double ks_two_sample_critical(double alpha, double n1, double n2);

// Ordinary least squares y = a + b x with standard errors.
struct LinearFit {
  double intercept = 0.0, slope = 0.0;
  double intercept_se = 0.0, slope_se = 0.0;
};

LinearFit ols_fit(std::span<const double> x, std::span<const double> y);

// Pearson correlation with the large-sample standard error 1/sqrt(n).
Estimate correlation(std::span<const double> x, std::span<const double> y);

}  // namespace bpre
