#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixis/common.hpp"
#include "mixis/densities.hpp"
#include "mixis/simplex.hpp"

namespace mixis {

// The mixture-weight optimization problem
//
//   minimize   f0(alpha, beta) = sum_i (Y_i - X_i'beta)^2 / (Z_i'alpha)
//   subject to alpha_j > floor_j >= 0,  sum(alpha) < 1 + eta
//
// assembled from a pilot sample: Y_i carries the weighted integrand, the K
// columns of X carry the weighted control features (empty without control
// variates), and Z_i holds the proposal densities at sample i, so Z_i'alpha
// is the candidate-mixture density there.
struct ProblemData {
    Eigen::VectorXd y;
    Eigen::MatrixXd x;
    Eigen::MatrixXd z;
    ConstraintSet constraints;
    // Family components pruned from x (rank deficiency), 0-based.
    std::vector<int> dropped_columns;
    // Family component behind each x column; identity for handwritten data.
    std::vector<int> column_components;

    int n() const noexcept { return static_cast<int>(y.size()); }
    int num_components() const noexcept { return static_cast<int>(z.cols()); }
    int num_covariates() const noexcept { return static_cast<int>(x.cols()); }

    // Shape and sign checks: Z nonnegative with no all-zero row (every
    // sample must have positive density under interior alpha), floors
    // nonnegative and jointly feasible.
    void validate() const;
};

struct BarrierConfig {
    // Certificate target: stop once (J+1) rho < f0 * certificate_tolerance,
    // which pins the optimality gap below certificate_tolerance * min f0.
    double certificate_tolerance = 1e-6;
    double rho_divisor = 2.0;
    int max_barrier_stages = 200;
    int max_newton_iterations = 150;
    double newton_decrement_tolerance = 1e-10;
    double gradient_tolerance = 1e-9;
    double armijo_slope = 0.01;
    double backtrack_factor = 0.5;
    int max_backtrack_steps = 60;
    int max_regularization_escalations = 8;
    bool use_preconditioner = true;
};

enum class SolveStatus { Certified, MaxIterationsExceeded, NumericalBreakdown };

struct SolveDiagnostics {
    int barrier_stages = 0;
    int newton_iterations = 0;
    int backtracking_steps = 0;
    int preconditioned_steps = 0;
    double final_rho = 0.0;
    double gap_bound = 0.0;  // (J+1) * final_rho
    // f0 at the last strictly feasible iterate, before renormalization;
    // the certificate statement refers to this value.
    double pre_normalization_objective = 0.0;
};

struct Solution {
    MixtureWeights alpha = MixtureWeights::uniform(1);  // renormalized to unit sum
    Eigen::VectorXd beta;  // in x-column order
    double objective = 0.0;  // f0 at the renormalized alpha
    bool certified = false;
    SolveStatus status = SolveStatus::Certified;
    SolveDiagnostics diagnostics;
};

// f0 at a candidate point. Raises NonPositiveDenominator when Z_i'alpha <= 0
// for some row.
double objective(const ProblemData& problem, const Eigen::VectorXd& alpha,
                 const Eigen::VectorXd& beta);

// Barrier objective f0 - rho sum_j log(alpha_j - floor_j) - rho log(1 + eta
// - sum alpha) with its analytic gradient and Hessian, ordered alpha block
// first. Requires a strictly feasible alpha.
struct BarrierEval {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};
BarrierEval barrier_value_grad_hess(const ProblemData& problem,
                                    const Eigen::VectorXd& alpha,
                                    const Eigen::VectorXd& beta, double rho);

// Block-diagonal rescaling of the Newton system: identity on the alpha
// block, sqrt(median|H_aa| / median|H_bb|) on the beta block. Returns the
// beta-block scale only when it strictly improves the condition number.
std::optional<double> precondition(const Eigen::MatrixXd& hessian, int num_components);

// Damped-Newton barrier solve with warm starts across the rho schedule.
// Starts at beta = 0 and the equalized interior point, divides rho by
// rho_divisor per stage, and certifies via the (J+1) rho duality-gap bound.
// Iteration and regularization failures are reported through the status,
// never thrown, so callers can fall back gracefully.
Solution solve(const ProblemData& problem, const BarrierConfig& config = {});

// Builds ProblemData from a pilot sample drawn from the alpha_pilot mixture.
// Row weights are 1/q_pilot(x_i) (times the optional per-row multiplicity,
// for exhaustively enumerated pilots); Y_i = f p sqrt(w_i) and
// X_{i,j} = (p - q_j) sqrt(w_i), so the fitted beta enters the criterion as
// + beta_j (q_j - p). With use_cv the defensive component is structurally
// excluded from X; any remaining rank deficiency is pruned to a maximal
// independent column set and recorded in dropped_columns.
ProblemData assemble_problem(std::span<const WeightedSample> pilot,
                             const MixtureWeights& alpha_pilot, bool use_cv,
                             std::optional<int> defensive_index,
                             const ConstraintSet& constraints,
                             std::span<const double> multiplicities = {});

// Stacks problems that share Z and constraints (several integrands over one
// pilot) into one: responses concatenate with sqrt(weight_k) scaling, X
// becomes block-diagonal, and the combined objective is the weighted sum of
// the per-integrand criteria under one shared alpha.
ProblemData stack_multi_integrand(std::span<const ProblemData> problems,
                                  std::span<const double> weights);

// Plain-text round trip: header (magic/version, sizes, floors, eta) followed
// by one row per sample holding Y, the X row, then the Z row.
void save_problem(const ProblemData& problem, const std::string& path);
ProblemData load_problem(const std::string& path);

}  // namespace mixis
