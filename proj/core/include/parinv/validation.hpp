#pragma once

// Self-check suite behind the `validate` verb: algebraic identities of the
// n x n formulation, the sigma profile, transition-matrix laws and the
// baseline scores, each compared with a dense p x p computation.

#include <cstdint>
#include <string>
#include <vector>

namespace parinv {

struct ValidationCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<ValidationCheck> run_validation_suite(std::uint64_t seed, std::size_t instances = 50);

}  // namespace parinv
