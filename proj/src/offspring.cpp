#include "bpre/offspring.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace bpre {

namespace {

constexpr double kTailTol = 1e-15;
// Population guard: compound draws are refused above this expected size so
// that an int64 result cannot wrap.
constexpr double kMaxPopulation = 4.6e18;

[[noreturn]] void throw_overflow(const char* where) {
  throw PopulationOverflowError(std::string("population overflow in ") + where);
}

}  // namespace

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t out;
  if (__builtin_add_overflow(a, b, &out)) throw_overflow("checked_add");
  return out;
}

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t out;
  if (__builtin_mul_overflow(a, b, &out)) throw_overflow("checked_mul");
  return out;
}

OffspringLaw OffspringLaw::geometric(double s) {
  if (!(s > 0.0) || !(s < 1.0)) {
    throw std::invalid_argument("geometric: s must lie in (0,1)");
  }
  OffspringLaw law;
  law.kind_ = OffspringKind::geometric;
  law.s_ = s;
  law.mean_ = (1.0 - s) / s;
  law.eta_ = 2.0;
  return law;
}

OffspringLaw OffspringLaw::poisson(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("poisson: lambda must be positive and finite");
  }
  OffspringLaw law;
  law.kind_ = OffspringKind::poisson;
  law.lambda_ = lambda;
  law.mean_ = lambda;
  law.eta_ = 1.0;
  return law;
}

OffspringLaw OffspringLaw::point_mass(std::int64_t k) {
  if (k < 0) throw std::invalid_argument("point_mass: k must be >= 0");
  OffspringLaw law;
  law.kind_ = OffspringKind::point_mass;
  law.point_ = k;
  law.mean_ = static_cast<double>(k);
  law.eta_ = k > 0 ? static_cast<double>(k - 1) / static_cast<double>(k) : 0.0;
  return law;
}

OffspringLaw OffspringLaw::finite_table(std::vector<double> weights) {
  if (weights.empty()) {
    throw std::invalid_argument("finite_table: empty weight vector");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("finite_table: weights must be >= 0");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("finite_table: weights must sum to 1");
  }
  while (weights.size() > 1 && weights.back() == 0.0) weights.pop_back();
  OffspringLaw law;
  law.kind_ = OffspringKind::finite_table;
  for (auto& w : weights) w /= sum;
  law.table_ = std::move(weights);
  double m = 0.0, fact2 = 0.0;
  for (std::size_t y = 0; y < law.table_.size(); ++y) {
    m += static_cast<double>(y) * law.table_[y];
    fact2 += static_cast<double>(y) * static_cast<double>(y - 1) * law.table_[y];
  }
  law.mean_ = m;
  law.eta_ = m > 0.0 ? fact2 / (m * m) : 0.0;
  return law;
}

double OffspringLaw::eta() const {
  if (!(mean_ > 0.0)) throw std::domain_error("eta: degenerate mean m(q) = 0");
  if (!biased_) return eta_;
  switch (kind_) {
    case OffspringKind::geometric: {
      // size-biased geometric: mean 2m+1, second factorial moment 6m^2+4m.
      const double m = (1.0 - s_) / s_;
      return (6.0 * m * m + 4.0 * m) / ((2.0 * m + 1.0) * (2.0 * m + 1.0));
    }
    case OffspringKind::poisson: {
      const double l = lambda_;
      return (2.0 * l + l * l) / ((1.0 + l) * (1.0 + l));
    }
    default:
      return eta_;  // point/table size-bias is materialized in-kind
  }
}

namespace {

// sum_{y >= a} y^p q(y) for geometric/poisson kinds, truncated with a
// certified tail bound below kTailTol relative to the accumulated sum.
double truncated_power_sum(const OffspringLaw& law, std::int64_t a, int p) {
  double acc = 0.0;
  double term;
  std::int64_t y = a;
  if (law.kind() == OffspringKind::geometric) {
    const double s = law.geometric_s();
    const double q = 1.0 - s;
    term = s * std::pow(q, static_cast<double>(a)) *
           std::pow(static_cast<double>(a), p);
    if (a == 0) term = p == 0 ? s : 0.0;
    for (;;) {
      acc += term;
      const double ynext = static_cast<double>(y + 1);
      double next = s * std::pow(q, ynext) * std::pow(ynext, p);
      if (y >= 10) {
        const double ratio = q * std::pow((ynext + 1.0) / ynext, p);
        if (ratio < 1.0 && next / (1.0 - ratio) < kTailTol * (acc + 1e-300)) {
          return acc + next;
        }
      }
      term = next;
      ++y;
      if (y > 100000000) throw std::runtime_error("truncated_power_sum: no convergence");
    }
  }
  // poisson
  const double l = law.poisson_lambda();
  auto pmf = [&](std::int64_t k) {
    return std::exp(static_cast<double>(k) * std::log(l) - l -
                    std::lgamma(static_cast<double>(k) + 1.0));
  };
  term = pmf(a) * std::pow(static_cast<double>(a), p);
  if (a == 0) term = p == 0 ? pmf(0) : 0.0;
  for (;;) {
    acc += term;
    const double ynext = static_cast<double>(y + 1);
    double next = pmf(y + 1) * std::pow(ynext, p);
    if (ynext > l) {
      const double ratio = l / (ynext + 1.0) * std::pow((ynext + 1.0) / ynext, p);
      if (ratio < 1.0 && next / (1.0 - ratio) < kTailTol * (acc + 1e-300)) {
        return acc + next;
      }
    }
    term = next;
    ++y;
    if (y > 100000000) throw std::runtime_error("truncated_power_sum: no convergence");
  }
}

}  // namespace

double OffspringLaw::zeta(std::int64_t a) const {
  if (a < 1) throw std::invalid_argument("zeta: a must be >= 1");
  if (!(mean_ > 0.0)) throw std::domain_error("zeta: degenerate mean m(q) = 0");
  const double m2 = mean_ * mean_;
  switch (kind_) {
    case OffspringKind::point_mass:
      return point_ >= a ? static_cast<double>(point_) * static_cast<double>(point_) / m2
                         : 0.0;
    case OffspringKind::finite_table: {
      double s = 0.0;
      for (std::size_t y = static_cast<std::size_t>(a); y < table_.size(); ++y) {
        s += static_cast<double>(y) * static_cast<double>(y) * table_[y];
      }
      return s / m2;
    }
    case OffspringKind::geometric:
    case OffspringKind::poisson: {
      if (!biased_) return truncated_power_sum(*this, a, 2) / m2;
      // q~(y) = y q(y)/m_base: sum_{y>=a} y^2 q~(y) = sum y^3 q(y) / m_base.
      OffspringLaw base = *this;
      base.biased_ = false;
      base.mean_ = kind_ == OffspringKind::geometric ? (1.0 - s_) / s_ : lambda_;
      return truncated_power_sum(base, a, 3) / base.mean_ / m2;
    }
  }
  throw std::logic_error("zeta: unknown kind");
}

OffspringLaw OffspringLaw::size_bias() const {
  if (!(mean_ > 0.0)) {
    throw std::domain_error("size_bias: degenerate mean m(q) = 0");
  }
  switch (kind_) {
    case OffspringKind::point_mass:
      return *this;
    case OffspringKind::finite_table: {
      std::vector<double> w(table_.size(), 0.0);
      for (std::size_t y = 1; y < table_.size(); ++y) {
        w[y] = static_cast<double>(y) * table_[y] / mean_;
      }
      return finite_table(std::move(w));
    }
    case OffspringKind::geometric:
    case OffspringKind::poisson: {
      if (biased_) {
        throw std::domain_error("size_bias: already size-biased parametric law");
      }
      OffspringLaw law = *this;
      law.biased_ = true;
      // mean of the size-biased law is E[Y^2]/m = eta*m + 1.
      law.mean_ = eta_ * mean_ + 1.0;
      return law;
    }
  }
  throw std::logic_error("size_bias: unknown kind");
}

double OffspringLaw::prob_zero() const {
  if (biased_) return 0.0;
  switch (kind_) {
    case OffspringKind::geometric: return s_;
    case OffspringKind::poisson: return std::exp(-lambda_);
    case OffspringKind::point_mass: return point_ == 0 ? 1.0 : 0.0;
    case OffspringKind::finite_table: return table_[0];
  }
  return 0.0;
}

double OffspringLaw::pmf(std::int64_t y) const {
  if (y < 0) return 0.0;
  const double yd = static_cast<double>(y);
  double base;
  const double base_mean =
      biased_ ? (kind_ == OffspringKind::geometric ? (1.0 - s_) / s_ : lambda_)
              : mean_;
  switch (kind_) {
    case OffspringKind::geometric:
      base = s_ * std::pow(1.0 - s_, yd);
      break;
    case OffspringKind::poisson:
      base = std::exp(yd * std::log(lambda_) - lambda_ - std::lgamma(yd + 1.0));
      break;
    case OffspringKind::point_mass:
      return y == point_ ? 1.0 : 0.0;
    case OffspringKind::finite_table:
      return static_cast<std::size_t>(y) < table_.size()
                 ? table_[static_cast<std::size_t>(y)]
                 : 0.0;
    default:
      return 0.0;
  }
  return biased_ ? yd * base / base_mean : base;
}

std::int64_t OffspringLaw::max_support() const {
  switch (kind_) {
    case OffspringKind::point_mass: return point_;
    case OffspringKind::finite_table:
      return static_cast<std::int64_t>(table_.size()) - 1;
    default: return -1;
  }
}

double OffspringLaw::survival_step(double sigma) const {
  if (sigma <= 0.0) return 0.0;
  if (sigma > 1.0) sigma = 1.0;
  switch (kind_) {
    case OffspringKind::geometric: {
      const double q = 1.0 - s_;
      if (!biased_) return q * sigma / (s_ + q * sigma);
      const double d = s_ + q * sigma;
      const double eps = q * sigma / d;
      return sigma + (1.0 - sigma) * eps * (2.0 - eps);
    }
    case OffspringKind::poisson: {
      const double a = -std::expm1(-lambda_ * sigma);
      if (!biased_) return a;
      return a + sigma * std::exp(-lambda_ * sigma);
    }
    case OffspringKind::point_mass: {
      if (point_ == 0) return 0.0;
      return -std::expm1(static_cast<double>(point_) * std::log1p(-sigma));
    }
    case OffspringKind::finite_table: {
      const double l1p = std::log1p(-sigma);
      double out = 0.0;
      for (std::size_t y = 1; y < table_.size(); ++y) {
        if (table_[y] == 0.0) continue;
        out -= table_[y] * std::expm1(static_cast<double>(y) * l1p);
      }
      return out;
    }
  }
  return 0.0;
}

std::int64_t OffspringLaw::sample(Xoshiro256PP& rng) const {
  switch (kind_) {
    case OffspringKind::geometric: {
      if (!biased_) {
        std::geometric_distribution<std::int64_t> d(s_);
        return d(rng);
      }
      std::negative_binomial_distribution<std::int64_t> d(2, s_);
      return 1 + d(rng);
    }
    case OffspringKind::poisson: {
      std::poisson_distribution<std::int64_t> d(lambda_);
      return biased_ ? 1 + d(rng) : d(rng);
    }
    case OffspringKind::point_mass:
      return point_;
    case OffspringKind::finite_table: {
      double u = rng.uniform01();
      for (std::size_t y = 0; y < table_.size(); ++y) {
        u -= table_[y];
        if (u < 0.0) return static_cast<std::int64_t>(y);
      }
      return static_cast<std::int64_t>(table_.size()) - 1;
    }
  }
  return 0;
}

std::int64_t OffspringLaw::sample_total(std::int64_t z, Xoshiro256PP& rng) const {
  if (z < 0) throw std::invalid_argument("sample_total: z must be >= 0");
  if (z == 0) return 0;
  const double zd = static_cast<double>(z);
  switch (kind_) {
    case OffspringKind::geometric: {
      // sum of geometrics is negative binomial; biased adds a deterministic z.
      const std::int64_t shift = biased_ ? z : 0;
      const std::int64_t trials = biased_ ? checked_mul(z, 2) : z;
      const double m = (1.0 - s_) / s_;
      if (static_cast<double>(trials) * m + static_cast<double>(shift) >
          kMaxPopulation) {
        throw_overflow("sample_total(geometric)");
      }
      std::negative_binomial_distribution<std::int64_t> d(trials, s_);
      return checked_add(shift, d(rng));
    }
    case OffspringKind::poisson: {
      const std::int64_t shift = biased_ ? z : 0;
      if (zd * lambda_ + static_cast<double>(shift) > kMaxPopulation) {
        throw_overflow("sample_total(poisson)");
      }
      std::poisson_distribution<std::int64_t> d(zd * lambda_);
      return checked_add(shift, d(rng));
    }
    case OffspringKind::point_mass:
      return checked_mul(z, point_);
    case OffspringKind::finite_table: {
      if (mean_ * zd > kMaxPopulation) throw_overflow("sample_total(table)");
      if (z <= 64) {
        std::int64_t total = 0;
        for (std::int64_t i = 0; i < z; ++i) {
          total = checked_add(total, sample(rng));
        }
        return total;
      }
      // multinomial split over the atoms, one binomial per atom
      std::int64_t remaining = z;
      double mass = 1.0;
      std::int64_t total = 0;
      for (std::size_t y = 0; y + 1 < table_.size() && remaining > 0; ++y) {
        if (table_[y] <= 0.0) continue;
        const double p = std::min(1.0, table_[y] / mass);
        std::int64_t ny;
        if (p >= 1.0) {
          ny = remaining;
        } else {
          std::binomial_distribution<std::int64_t> d(remaining, p);
          ny = d(rng);
        }
        total = checked_add(total, checked_mul(ny, static_cast<std::int64_t>(y)));
        remaining -= ny;
        mass -= table_[y];
      }
      total = checked_add(
          total, checked_mul(remaining,
                             static_cast<std::int64_t>(table_.size()) - 1));
      return total;
    }
  }
  return 0;
}

}  // namespace bpre
