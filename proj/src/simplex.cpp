#include "mixis/simplex.hpp"

#include <string>

namespace mixis {

MixtureWeights MixtureWeights::uniform(int num_components) {
    if (num_components <= 0) {
        fail(ErrorCode::InvalidArgument, "MixtureWeights: need at least one component");
    }
    return MixtureWeights(
        Eigen::VectorXd::Constant(num_components, 1.0 / num_components));
}

MixtureWeights MixtureWeights::renormalized(const Eigen::VectorXd& raw) {
    if (raw.size() == 0) {
        fail(ErrorCode::InvalidArgument, "MixtureWeights: empty weight vector");
    }
    for (Eigen::Index j = 0; j < raw.size(); ++j) {
        if (!(raw[j] >= 0.0)) {
            fail(ErrorCode::NonFeasible, "MixtureWeights: negative weight at component " +
                                             std::to_string(j + 1));
        }
    }
    double total = raw.sum();
    if (!(total > 0.0)) {
        fail(ErrorCode::ZeroVector, "MixtureWeights: weights sum to zero");
    }
    return MixtureWeights(raw / total);
}

MixtureWeights validate_weights(const Eigen::VectorXd& candidate,
                                const ConstraintSet& constraints) {
    if (candidate.size() != constraints.floors.size()) {
        fail(ErrorCode::DimensionMismatch,
             "validate_weights: candidate has " + std::to_string(candidate.size()) +
                 " components, constraints have " +
                 std::to_string(constraints.floors.size()));
    }
    for (Eigen::Index j = 0; j < candidate.size(); ++j) {
        if (!(candidate[j] > constraints.floors[j])) {
            fail(ErrorCode::NonFeasible,
                 "validate_weights: floor constraint violated at component " +
                     std::to_string(j + 1) + " (" + std::to_string(candidate[j]) +
                     " <= " + std::to_string(constraints.floors[j]) + ")");
        }
    }
    double total = candidate.sum();
    if (total > 1.0 + constraints.eta + 1e-12) {
        fail(ErrorCode::NonFeasible,
             "validate_weights: sum constraint violated (" + std::to_string(total) +
                 " > " + std::to_string(1.0 + constraints.eta) + ")");
    }
    return MixtureWeights::renormalized(candidate);
}

Eigen::VectorXd initial_interior_point(const ConstraintSet& constraints) {
    Eigen::Index num_components = constraints.floors.size();
    if (num_components == 0) {
        fail(ErrorCode::InvalidArgument, "initial_interior_point: no components");
    }
    double slack = 1.0 + constraints.eta - constraints.floors.sum();
    double delta = slack / static_cast<double>(num_components + 1);
    if (!(delta > 0.0)) {
        fail(ErrorCode::Infeasible,
             "initial_interior_point: floors leave no feasible interior (slack " +
                 std::to_string(slack) + ")");
    }
    return constraints.floors.array() + delta;
}

double epsilon_penalty_factor(const Eigen::VectorXd& alpha, double epsilon) {
    Eigen::Index num_components = alpha.size();
    if (num_components == 0) {
        fail(ErrorCode::InvalidArgument, "epsilon_penalty_factor: empty weight vector");
    }
    if (!(epsilon > 0.0) || !(epsilon * static_cast<double>(num_components) < 1.0)) {
        fail(ErrorCode::EpsilonTooLarge,
             "epsilon_penalty_factor: epsilon must lie in (0, 1/J), got " +
                 std::to_string(epsilon) + " with J = " + std::to_string(num_components));
    }
    Eigen::Index clamped = 0;
    for (Eigen::Index j = 0; j < num_components; ++j) {
        if (alpha[j] < epsilon) ++clamped;
    }
    double j_count = static_cast<double>(num_components);
    double k_count = static_cast<double>(clamped);
    return (1.0 - epsilon * (j_count - k_count)) / (1.0 - epsilon * j_count);
}

}  // namespace mixis
