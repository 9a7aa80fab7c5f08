#pragma once

#include "parinv/posterior.hpp"

#include <functional>
#include <limits>
#include <utility>

namespace testing_targets {

/// Arbitrary log density over states (m, log10 alpha) with a box prior.
class FunctionTarget final : public parinv::LogTarget {
 public:
  FunctionTarget(parinv::PriorSpec prior, std::function<double(const parinv::Vector&)> f)
      : prior_(std::move(prior)), f_(std::move(f)) {}

  const parinv::PriorSpec& prior() const override { return prior_; }
  double log_density(const parinv::Vector& state) const override {
    if (!prior_.contains_state(state)) return -std::numeric_limits<double>::infinity();
    return f_(state);
  }

 private:
  parinv::PriorSpec prior_;
  std::function<double(const parinv::Vector&)> f_;
};

/// q = 1 box [lo, hi] x [alo, ahi].
inline parinv::PriorSpec box(double lo, double hi, double alo, double ahi) {
  parinv::PriorSpec p;
  p.m_lower = parinv::Vector::Constant(1, lo);
  p.m_upper = parinv::Vector::Constant(1, hi);
  p.log10_alpha_lower = alo;
  p.log10_alpha_upper = ahi;
  return p;
}

}  // namespace testing_targets
