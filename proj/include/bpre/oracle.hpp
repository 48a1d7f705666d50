#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bpre/environment.hpp"

namespace bpre {

// An exactly computed law on a finite set of integer atoms.
struct ExactLaw {
  std::map<std::int64_t, double> atoms;
  std::string description;

  double mass(std::int64_t value) const {
    auto it = atoms.find(value);
    return it == atoms.end() ? 0.0 : it->second;
  }
  double total() const;
};

class StateSpaceTooLargeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exact annealed law of Z_k conditioned on {Z_n > 0}, by summation over all
// environment sequences and exact convolution powers. Requires an oracle_only
// spec with finite offspring supports; n <= 4.
ExactLaw enumerate_conditional_z(const EnvironmentSpec& spec, std::int64_t k,
                                 std::int64_t n);

// Exact annealed P(Z_n > 0).
double enumerate_survival(const EnvironmentSpec& spec, std::int64_t n);

enum class WalkStatistic { tau_n, max_below_zero, min_nonneg };

// Exact laws of walk statistics by enumeration over increment-atom sequences,
// n <= 12. For tau_n the atoms are the values of tau; for the events the
// atoms are {0,1}.
ExactLaw enumerate_walk(const std::vector<std::pair<double, double>>& atoms,
                        std::int64_t n, WalkStatistic stat);

}  // namespace bpre
