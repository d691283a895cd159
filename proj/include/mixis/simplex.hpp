#pragma once

#include <Eigen/Dense>

#include "mixis/common.hpp"

namespace mixis {

// Mixture weights on the probability simplex: nonnegative, summing to one
// (within 1e-12 after renormalize). Construct through the factories so the
// invariant always holds.
class MixtureWeights {
  public:
    static MixtureWeights uniform(int num_components);

    // Scales a positive vector to unit sum. Raises ZeroVector when the sum
    // is not strictly positive and NonFeasible on negative entries.
    static MixtureWeights renormalized(const Eigen::VectorXd& raw);

    const Eigen::VectorXd& values() const noexcept { return values_; }
    double operator[](Eigen::Index j) const { return values_[j]; }
    Eigen::Index size() const noexcept { return values_.size(); }

  private:
    explicit MixtureWeights(Eigen::VectorXd values) : values_(std::move(values)) {}
    Eigen::VectorXd values_;
};

// Feasible region for the weight optimization: per-component floors
// alpha_j > floor_j and sum(alpha) < 1 + eta. Plain aggregate; operations
// that consume it verify feasibility (sum(floors) < 1 + eta) themselves.
struct ConstraintSet {
    Eigen::VectorXd floors;
    double eta = 0.0;

    static ConstraintSet unconstrained(int num_components) {
        return {Eigen::VectorXd::Zero(num_components), 0.0};
    }
    static ConstraintSet uniform_floor(int num_components, double floor_value) {
        return {Eigen::VectorXd::Constant(num_components, floor_value), 0.0};
    }
};

// Checks a candidate weight vector against the constraints (strict floors,
// sum at most 1 + eta) and returns it renormalized to unit sum. Raises
// NonFeasible naming the violated constraint and the 1-based component.
MixtureWeights validate_weights(const Eigen::VectorXd& candidate,
                                const ConstraintSet& constraints);

// Strictly feasible start for the barrier solver: alpha_j = floor_j + delta
// with delta = (1 + eta - sum(floors)) / (J + 1), which equalizes all J + 1
// log-barrier arguments at delta. Raises Infeasible when delta <= 0. The
// result intentionally sums to less than 1 + eta; it is not normalized.
Eigen::VectorXd initial_interior_point(const ConstraintSet& constraints);

// Worst-case variance inflation from clamping weights to the floor epsilon:
// (1 - epsilon (J - K)) / (1 - epsilon J), where K counts entries of alpha
// below epsilon. Requires 0 < epsilon < 1/J (EpsilonTooLarge otherwise).
// The factor is always >= 1 and at most (1 - epsilon) / (1 - J epsilon).
double epsilon_penalty_factor(const Eigen::VectorXd& alpha, double epsilon);

}  // namespace mixis
