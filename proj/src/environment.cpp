#include "bpre/environment.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "bpre/parallel.hpp"

namespace bpre {

std::string to_string(Criticality c) {
  switch (c) {
    case Criticality::supercritical: return "supercritical";
    case Criticality::critical: return "critical";
    case Criticality::weakly_subcritical: return "weakly_subcritical";
    case Criticality::intermediately_subcritical:
      return "intermediately_subcritical";
    case Criticality::strongly_subcritical: return "strongly_subcritical";
  }
  return "unknown";
}

std::string to_string(Measure m) {
  return m == Measure::annealed ? "annealed" : "tilted";
}

Measure measure_from_string(const std::string& s) {
  if (s == "annealed") return Measure::annealed;
  if (s == "tilted") return Measure::tilted;
  throw std::invalid_argument("unknown measure: " + s);
}

Criticality classify(double e_x, double e_xex, double tol) {
  if (!std::isfinite(e_x) || !std::isfinite(e_xex)) {
    throw std::domain_error("classify: non-finite moments");
  }
  if (e_x > tol) return Criticality::supercritical;
  if (std::abs(e_x) <= tol) return Criticality::critical;
  if (e_xex > tol) return Criticality::weakly_subcritical;
  if (std::abs(e_xex) <= tol) return Criticality::intermediately_subcritical;
  return Criticality::strongly_subcritical;
}

EnvironmentSpec EnvironmentSpec::lognormal_geometric(double sigma_sq, double mu) {
  if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq)) {
    throw std::invalid_argument("lognormal_geometric: sigma_sq must be > 0");
  }
  EnvironmentSpec spec;
  spec.lognormal_ = true;
  spec.sigma_sq_ = sigma_sq;
  spec.mu_ = mu;
  spec.finalize();
  return spec;
}

EnvironmentSpec EnvironmentSpec::calibrate_lognormal(double sigma_sq) {
  return lognormal_geometric(sigma_sq, -sigma_sq);
}

EnvironmentSpec EnvironmentSpec::discrete_mixture(
    std::vector<std::pair<OffspringLaw, double>> atoms) {
  if (atoms.empty()) {
    throw std::invalid_argument("discrete_mixture: no atoms");
  }
  double total = 0.0;
  for (const auto& [law, p] : atoms) {
    if (!(p >= 0.0)) throw std::invalid_argument("discrete_mixture: p < 0");
    if (!(law.mean() > 0.0)) {
      // X = log m(Q) must be finite for the associated walk.
      throw std::invalid_argument("discrete_mixture: atom with m(q) = 0");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("discrete_mixture: probabilities must sum to 1");
  }
  EnvironmentSpec spec;
  spec.lognormal_ = false;
  spec.oracle_only_ = true;
  for (auto& [law, p] : atoms) p /= total;
  spec.atoms_ = std::move(atoms);
  spec.finalize();
  return spec;
}

void EnvironmentSpec::finalize() {
  if (lognormal_) {
    // Gaussian moments: E[e^X] = e^{mu+s2/2}, E[X e^X] = (mu+s2) e^{mu+s2/2}.
    gamma_ = std::exp(mu_ + sigma_sq_ / 2.0);
    e_x_ = mu_;
    e_xex_ = (mu_ + sigma_sq_) * gamma_;
  } else {
    gamma_ = 0.0;
    e_x_ = 0.0;
    e_xex_ = 0.0;
    atom_x_.clear();
    for (const auto& [law, p] : atoms_) {
      const double x = std::log(law.mean());
      atom_x_.push_back(x);
      gamma_ += p * std::exp(x);
      e_x_ += p * x;
      e_xex_ += p * x * std::exp(x);
    }
    tilted_probs_.clear();
    for (std::size_t j = 0; j < atoms_.size(); ++j) {
      tilted_probs_.push_back(atoms_[j].second * std::exp(atom_x_[j]) / gamma_);
    }
  }
  classification_ = classify(e_x_, e_xex_);
}

EnvDraw EnvironmentSpec::draw(Measure measure, Xoshiro256PP& rng) const {
  if (lognormal_) {
    const double x = sample_increment(measure, rng);
    return EnvDraw{OffspringLaw::geometric(1.0 / (1.0 + std::exp(x))), x};
  }
  double u = rng.uniform01();
  for (std::size_t j = 0; j < atoms_.size(); ++j) {
    u -= measure == Measure::tilted ? tilted_probs_[j] : atoms_[j].second;
    if (u < 0.0) return EnvDraw{atoms_[j].first, atom_x_[j]};
  }
  return EnvDraw{atoms_.back().first, atom_x_.back()};
}

double EnvironmentSpec::sample_increment(Measure measure,
                                         Xoshiro256PP& rng) const {
  if (lognormal_) {
    const double mean = measure == Measure::tilted ? mu_ + sigma_sq_ : mu_;
    std::normal_distribution<double> d(mean, std::sqrt(sigma_sq_));
    return d(rng);
  }
  double u = rng.uniform01();
  for (std::size_t j = 0; j < atoms_.size(); ++j) {
    u -= measure == Measure::tilted ? tilted_probs_[j] : atoms_[j].second;
    if (u < 0.0) return atom_x_[j];
  }
  return atom_x_.back();
}

std::vector<EnvDraw> EnvironmentSpec::sample_environment(
    Measure measure, std::int64_t n, Xoshiro256PP& rng) const {
  if (n < 1) throw std::invalid_argument("sample_environment: n must be >= 1");
  std::vector<EnvDraw> env;
  env.reserve(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) env.push_back(draw(measure, rng));
  return env;
}

double EnvironmentSpec::tilted_walk_sigma() const {
  if (lognormal_) return std::sqrt(sigma_sq_);
  // discrete mixture: Var_P(X) with tilted weights
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t j = 0; j < atoms_.size(); ++j) {
    m1 += tilted_probs_[j] * atom_x_[j];
    m2 += tilted_probs_[j] * atom_x_[j] * atom_x_[j];
  }
  return std::sqrt(std::max(0.0, m2 - m1 * m1));
}

MomentEstimate log_moment_check_a3(const EnvironmentSpec& spec, std::int64_t a,
                                   double alpha, double eps,
                                   std::int64_t n_samples, const RngKey& key,
                                   int workers) {
  if (a < 1) throw std::invalid_argument("log_moment_check_a3: a must be >= 1");
  const double p = alpha + eps;
  auto statistic = [&](const OffspringLaw& law) {
    const double z = law.zeta(a);
    const double lp = z > 1.0 ? std::log(z) : 0.0;
    return std::pow(lp, p);
  };
  if (!spec.is_lognormal()) {
    double v = 0.0;
    for (std::size_t j = 0; j < spec.atoms().size(); ++j) {
      v += spec.tilted_atom_probs()[j] * statistic(spec.atoms()[j].first);
    }
    return MomentEstimate{v, 0.0, true};
  }
  struct Acc {
    double sum = 0.0, sum2 = 0.0;
  };
  auto chunks = run_chunked<Acc>(
      static_cast<std::uint64_t>(n_samples), key, workers,
      [&](const ChunkRange& range, Xoshiro256PP& rng) {
        Acc acc;
        for (std::uint64_t i = 0; i < range.count; ++i) {
          const double v = statistic(spec.draw(Measure::tilted, rng).law);
          acc.sum += v;
          acc.sum2 += v * v;
        }
        return acc;
      });
  double sum = 0.0, sum2 = 0.0;
  for (const auto& c : chunks) {
    sum += c.sum;
    sum2 += c.sum2;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum2 / n - mean * mean);
  return MomentEstimate{mean, std::sqrt(var / n), false};
}

}  // namespace bpre
