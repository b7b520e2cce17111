#pragma once

#include <stdexcept>
#include <vector>

#include "urs/feasibility.hpp"

namespace urs {

inline constexpr int kExactCustomerCap = 12;

struct OracleResult {
  std::vector<int> solution;
  ObjectiveResult objective;
  long long nodes_expanded = 0;
  long long elapsed_ms = 0;
};

class OracleCapError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Exact optimum over the masked action space. Held-Karp for plain TSP/ATSP,
// depth-first branch and bound otherwise. Ties resolve to the lexicographically
// smallest sequence.
OracleResult exact_solve(const UnifiedInstance& instance);

// Nearest feasible customer first; a depot only when no customer fits.
OracleResult greedy_solve(const UnifiedInstance& instance);

// Percentage gap of value against reference; negative when value is better.
double gap(double value, double reference, bool maximize);

}  // namespace urs
