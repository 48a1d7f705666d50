#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpre/rng.hpp"

namespace bpre {

// Thrown when a generation total would exceed the representable population
// range (2^63 - 1). Populations are semantically unbounded; overflow must
// never be silent.
class PopulationOverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OffspringKind { geometric, poisson, point_mass, finite_table };

// An offspring distribution on {0,1,2,...} with cached moment functionals.
//
// Supported kinds:
//   geometric{s}    q(y) = s(1-s)^y, mean (1-s)/s
//   poisson{lambda}
//   point_mass{k}
//   finite_table{w0..wK}
// A size-biased geometric or Poisson law (weights y q(y)/m) is carried as the
// parametric law with the `size_biased` flag set; size-biased point masses and
// tables stay in-kind. Values are immutable after construction and safe to
// share across threads.
class OffspringLaw {
 public:
  static OffspringLaw geometric(double s);
  static OffspringLaw poisson(double lambda);
  static OffspringLaw point_mass(std::int64_t k);
  // weights[y] = q(y); must be nonnegative and sum to 1 within 1e-12.
  static OffspringLaw finite_table(std::vector<double> weights);

  OffspringKind kind() const { return kind_; }
  bool size_biased() const { return biased_; }

  // m(q) = sum y q(y).
  double mean() const { return mean_; }
  // eta = sum y(y-1) q(y) / m^2. Throws std::domain_error when m = 0.
  double eta() const;
  // zeta(a) = m^{-2} sum_{y>=a} y^2 q(y), a >= 1.
  double zeta(std::int64_t a) const;
  // Law with weights y q(y)/m. Throws std::domain_error when m = 0.
  OffspringLaw size_bias() const;

  double prob_zero() const;
  double pmf(std::int64_t y) const;
  // Largest support point, or -1 if the support is infinite.
  std::int64_t max_support() const;

  // One step of the quenched extinction recursion in survival form:
  // given sigma = P(a child's line survives), returns 1 - f(1 - sigma)
  // where f is this law's generating function. Cancellation-free.
  double survival_step(double sigma) const;

  std::int64_t sample(Xoshiro256PP& rng) const;
  // Sum of z i.i.d. draws (the z-fold convolution), via a closed-form
  // compound draw where the family admits one.
  std::int64_t sample_total(std::int64_t z, Xoshiro256PP& rng) const;

  // Parameter access (meaningful for the matching kind only).
  double geometric_s() const { return s_; }
  double poisson_lambda() const { return lambda_; }
  std::int64_t point_value() const { return point_; }
  const std::vector<double>& table() const { return table_; }

  bool operator==(const OffspringLaw& other) const = default;

 private:
  OffspringLaw() = default;

  OffspringKind kind_ = OffspringKind::point_mass;
  bool biased_ = false;
  double s_ = 0.0;
  double lambda_ = 0.0;
  std::int64_t point_ = 0;
  std::vector<double> table_;
  double mean_ = 0.0;
  double eta_ = 0.0;  // valid iff mean_ > 0
};

// Checked population arithmetic.
std::int64_t checked_add(std::int64_t a, std::int64_t b);
std::int64_t checked_mul(std::int64_t a, std::int64_t b);

}  // namespace bpre
