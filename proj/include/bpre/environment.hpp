#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bpre/offspring.hpp"
#include "bpre/rng.hpp"

namespace bpre {

enum class Measure { annealed, tilted };

enum class Criticality {
  supercritical,
  critical,
  weakly_subcritical,
  intermediately_subcritical,
  strongly_subcritical,
};

std::string to_string(Criticality c);
std::string to_string(Measure m);
Measure measure_from_string(const std::string& s);

// One generation of environment: the offspring law and X = log m(Q).
struct EnvDraw {
  OffspringLaw law;
  double x;
};

// A distribution over offspring laws together with its tilt constant
// gamma = E[e^X] and first moments of X under the annealed measure.
//
// Two families ship:
//   lognormal_geometric: X ~ Normal(mu, sigma^2), offspring geometric with
//     mean e^X. Exact conjugate tilting (tilted X ~ Normal(mu+sigma^2, sigma^2)).
//   discrete_mixture: finite list of (law, probability) atoms. Exact tilted
//     atom weights p_j e^{x_j}/gamma. Violates the absolute-continuity
//     assumption, so it is flagged oracle_only and the experiment harness
//     refuses it for conditioned-limit runs.
class EnvironmentSpec {
 public:
  static EnvironmentSpec lognormal_geometric(double sigma_sq, double mu);
  // The calibrated family with mu = -sigma^2: E[X] < 0, E[X e^X] = 0 exactly.
  static EnvironmentSpec calibrate_lognormal(double sigma_sq);
  static EnvironmentSpec discrete_mixture(
      std::vector<std::pair<OffspringLaw, double>> atoms);

  double gamma() const { return gamma_; }
  double mean_x() const { return e_x_; }
  double mean_x_ex() const { return e_xex_; }
  Criticality classification() const { return classification_; }
  bool oracle_only() const { return oracle_only_; }

  bool is_lognormal() const { return lognormal_; }
  double sigma_sq() const { return sigma_sq_; }
  double mu() const { return mu_; }
  const std::vector<std::pair<OffspringLaw, double>>& atoms() const {
    return atoms_;
  }
  // Tilted atom probabilities p_j e^{x_j} / gamma (discrete_mixture only).
  const std::vector<double>& tilted_atom_probs() const { return tilted_probs_; }

  EnvDraw draw(Measure measure, Xoshiro256PP& rng) const;
  // Fast path: the increment X alone, without materializing the law.
  double sample_increment(Measure measure, Xoshiro256PP& rng) const;
  std::vector<EnvDraw> sample_environment(Measure measure, std::int64_t n,
                                          Xoshiro256PP& rng) const;

  // sigma for the alpha=2 scaling a_n = sigma sqrt(n) of the tilted walk.
  double tilted_walk_sigma() const;

 private:
  EnvironmentSpec() = default;
  void finalize();

  bool lognormal_ = true;
  double sigma_sq_ = 1.0;
  double mu_ = -1.0;
  std::vector<std::pair<OffspringLaw, double>> atoms_;
  std::vector<double> tilted_probs_;
  std::vector<double> atom_x_;
  bool oracle_only_ = false;

  double gamma_ = 0.0;
  double e_x_ = 0.0;
  double e_xex_ = 0.0;
  Criticality classification_ = Criticality::critical;
};

// Regime from (E[X], E[X e^X]) with tolerance 1e-10 around zero. Subcritical
// splits on the sign of E[X e^X]; the strongly subcritical branch uses
// E[X e^X] < 0 (convention; see README).
Criticality classify(double e_x, double e_xex, double tol = 1e-10);

struct MomentEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  bool exact = false;
};

// Monte Carlo estimate of E_P[(log+ zeta(a))^{alpha+eps}] under the tilted
// measure. For discrete mixtures the exact finite sum is returned instead.
MomentEstimate log_moment_check_a3(const EnvironmentSpec& spec, std::int64_t a,
                                   double alpha, double eps, std::int64_t n_samples,
                                   const RngKey& key, int workers = 1);

}  // namespace bpre
