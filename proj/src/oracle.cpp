#include "bpre/oracle.hpp"

#include <cmath>
#include <functional>

namespace bpre {

double ExactLaw::total() const {
  double t = 0.0;
  for (const auto& [v, p] : atoms) t += p;
  return t;
}

namespace {

constexpr std::int64_t kMaxBranchingN = 4;
constexpr std::int64_t kMaxWalkN = 12;
constexpr std::int64_t kMaxStates = 400000;

std::vector<double> law_pmf_vector(const OffspringLaw& law) {
  const std::int64_t top = law.max_support();
  if (top < 0) {
    throw StateSpaceTooLargeError(
        "oracle: offspring law with infinite support");
  }
  std::vector<double> pmf(static_cast<std::size_t>(top) + 1);
  for (std::int64_t y = 0; y <= top; ++y) {
    pmf[static_cast<std::size_t>(y)] = law.pmf(y);
  }
  return pmf;
}

// q^{*z} for z = 0..zmax, each a dense pmf vector.
std::vector<std::vector<double>> convolution_powers(
    const std::vector<double>& q, std::int64_t zmax) {
  std::vector<std::vector<double>> powers;
  powers.push_back({1.0});  // z = 0
  for (std::int64_t z = 1; z <= zmax; ++z) {
    const auto& prev = powers.back();
    std::vector<double> next(prev.size() + q.size() - 1, 0.0);
    for (std::size_t a = 0; a < prev.size(); ++a) {
      if (prev[a] == 0.0) continue;
      for (std::size_t b = 0; b < q.size(); ++b) {
        next[a + b] += prev[a] * q[b];
      }
    }
    if (static_cast<std::int64_t>(next.size()) > kMaxStates) {
      throw StateSpaceTooLargeError("oracle: population state space too large");
    }
    powers.push_back(std::move(next));
  }
  return powers;
}

struct EnvAtoms {
  std::vector<OffspringLaw> laws;
  std::vector<double> probs;
};

EnvAtoms env_atoms(const EnvironmentSpec& spec) {
  if (spec.is_lognormal()) {
    throw std::invalid_argument(
        "oracle: requires an oracle_only discrete_mixture spec");
  }
  EnvAtoms out;
  for (const auto& [law, p] : spec.atoms()) {
    out.laws.push_back(law);
    out.probs.push_back(p);
  }
  return out;
}

}  // namespace

ExactLaw enumerate_conditional_z(const EnvironmentSpec& spec, std::int64_t k,
                                 std::int64_t n) {
  if (n < 1 || n > kMaxBranchingN) {
    throw std::invalid_argument("enumerate_conditional_z: need 1 <= n <= 4");
  }
  if (k < 0 || k > n) {
    throw std::invalid_argument("enumerate_conditional_z: need 0 <= k <= n");
  }
  const EnvAtoms atoms = env_atoms(spec);
  const std::size_t na = atoms.laws.size();

  std::map<std::int64_t, double> joint;  // value -> P(Z_k = value, Z_n > 0)
  double surv_total = 0.0;

  // iterate all environment sequences q_1..q_n
  std::vector<std::size_t> pick(static_cast<std::size_t>(n), 0);
  for (;;) {
    double env_prob = 1.0;
    std::vector<const OffspringLaw*> env;
    for (std::int64_t j = 0; j < n; ++j) {
      env.push_back(&atoms.laws[pick[static_cast<std::size_t>(j)]]);
      env_prob *= atoms.probs[pick[static_cast<std::size_t>(j)]];
    }
    if (env_prob > 0.0) {
      // forward pmf of Z_j up to time k
      std::vector<double> dist{0.0, 1.0};  // Z_0 = 1
      for (std::int64_t j = 0; j < k; ++j) {
        const auto q = law_pmf_vector(*env[static_cast<std::size_t>(j)]);
        const auto powers = convolution_powers(
            q, static_cast<std::int64_t>(dist.size()) - 1);
        std::vector<double> next;
        for (std::size_t z = 0; z < dist.size(); ++z) {
          if (dist[z] == 0.0) continue;
          const auto& conv = powers[z];
          if (next.size() < conv.size()) next.resize(conv.size(), 0.0);
          for (std::size_t y = 0; y < conv.size(); ++y) {
            next[y] += dist[z] * conv[y];
          }
        }
        dist = std::move(next);
        if (static_cast<std::int64_t>(dist.size()) > kMaxStates) {
          throw StateSpaceTooLargeError("oracle: population space too large");
        }
      }
      // extinction from generation k to n for one particle, exact pgf walk
      double sigma = 1.0;
      for (std::int64_t j = n - 1; j >= k; --j) {
        sigma = env[static_cast<std::size_t>(j)]->survival_step(sigma);
      }
      for (std::size_t z = 0; z < dist.size(); ++z) {
        if (dist[z] == 0.0) continue;
        const double p_surv =
            z == 0 ? 0.0
                   : -std::expm1(static_cast<double>(z) * std::log1p(-sigma));
        joint[static_cast<std::int64_t>(z)] += env_prob * dist[z] * p_surv;
        surv_total += env_prob * dist[z] * p_surv;
      }
    }
    // next sequence
    std::int64_t j = 0;
    for (; j < n; ++j) {
      if (++pick[static_cast<std::size_t>(j)] < na) break;
      pick[static_cast<std::size_t>(j)] = 0;
    }
    if (j == n) break;
  }

  if (surv_total <= 0.0) {
    throw std::domain_error("enumerate_conditional_z: P(Z_n > 0) = 0");
  }
  ExactLaw law;
  law.description = "Z_" + std::to_string(k) + " | Z_" + std::to_string(n) +
                    " > 0 (exact enumeration)";
  for (auto& [v, p] : joint) {
    if (p > 0.0) law.atoms[v] = p / surv_total;
  }
  return law;
}

double enumerate_survival(const EnvironmentSpec& spec, std::int64_t n) {
  if (n < 1 || n > kMaxBranchingN) {
    throw std::invalid_argument("enumerate_survival: need 1 <= n <= 4");
  }
  const EnvAtoms atoms = env_atoms(spec);
  const std::size_t na = atoms.laws.size();
  double total = 0.0;
  std::vector<std::size_t> pick(static_cast<std::size_t>(n), 0);
  for (;;) {
    double env_prob = 1.0;
    for (std::int64_t j = 0; j < n; ++j) {
      env_prob *= atoms.probs[pick[static_cast<std::size_t>(j)]];
    }
    if (env_prob > 0.0) {
      double sigma = 1.0;
      for (std::int64_t j = n - 1; j >= 0; --j) {
        sigma = atoms.laws[pick[static_cast<std::size_t>(j)]].survival_step(sigma);
      }
      total += env_prob * sigma;
    }
    std::int64_t j = 0;
    for (; j < n; ++j) {
      if (++pick[static_cast<std::size_t>(j)] < na) break;
      pick[static_cast<std::size_t>(j)] = 0;
    }
    if (j == n) break;
  }
  return total;
}

ExactLaw enumerate_walk(const std::vector<std::pair<double, double>>& atoms,
                        std::int64_t n, WalkStatistic stat) {
  if (n < 1 || n > kMaxWalkN) {
    throw std::invalid_argument("enumerate_walk: need 1 <= n <= 12");
  }
  if (atoms.empty()) throw std::invalid_argument("enumerate_walk: no atoms");
  double psum = 0.0;
  for (const auto& [x, p] : atoms) psum += p;
  if (std::abs(psum - 1.0) > 1e-12) {
    throw std::invalid_argument("enumerate_walk: probabilities must sum to 1");
  }
  ExactLaw law;
  const std::size_t na = atoms.size();
  std::vector<std::size_t> pick(static_cast<std::size_t>(n), 0);
  for (;;) {
    double prob = 1.0;
    double s = 0.0;
    double min_all = 0.0, max_after = -std::numeric_limits<double>::infinity();
    double min_after = std::numeric_limits<double>::infinity();
    std::int64_t tau = 0;
    for (std::int64_t j = 0; j < n; ++j) {
      const auto& [x, p] = atoms[pick[static_cast<std::size_t>(j)]];
      prob *= p;
      s += x;
      if (s < min_all) {
        min_all = s;
        tau = j + 1;
      }
      max_after = std::max(max_after, s);
      min_after = std::min(min_after, s);
    }
    if (prob > 0.0) {
      std::int64_t value = 0;
      switch (stat) {
        case WalkStatistic::tau_n: value = tau; break;
        case WalkStatistic::max_below_zero: value = max_after < 0.0 ? 1 : 0; break;
        case WalkStatistic::min_nonneg: value = min_after >= 0.0 ? 1 : 0; break;
      }
      law.atoms[value] += prob;
    }
    std::int64_t j = 0;
    for (; j < n; ++j) {
      if (++pick[static_cast<std::size_t>(j)] < na) break;
      pick[static_cast<std::size_t>(j)] = 0;
    }
    if (j == n) break;
  }
  switch (stat) {
    case WalkStatistic::tau_n: law.description = "tau_n (exact)"; break;
    case WalkStatistic::max_below_zero: law.description = "1{M_n < 0} (exact)"; break;
    case WalkStatistic::min_nonneg: law.description = "1{L_n >= 0} (exact)"; break;
  }
  return law;
}

}  // namespace bpre
