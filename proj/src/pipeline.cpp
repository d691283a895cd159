#include "mixis/pipeline.hpp"

#include <cmath>

namespace mixis {

std::vector<WeightedSample> draw_pilot(const ProposalFamily& family,
                                       const DensityModel& p, const Integrand& f,
                                       int n, RngStream& stream) {
    MixtureWeights uniform = MixtureWeights::uniform(family.size());
    return draw_mixture(family, p, f, uniform, n, stream, /*stratified=*/true);
}

WeightOptimization optimize_weights(std::span<const WeightedSample> pilot,
                                    const MixtureWeights& alpha_pilot,
                                    const ProposalFamily& family, bool use_cv,
                                    double epsilon_floor,
                                    const BarrierConfig& solver) {
    const int j = family.size();
    if (epsilon_floor < 0.0) epsilon_floor = 0.1 / j;
    ConstraintSet constraints = ConstraintSet::uniform_floor(j, epsilon_floor);

    WeightOptimization result;
    ProblemData problem = assemble_problem(pilot, alpha_pilot, use_cv,
                                           family.defensive_index, constraints);
    if (!problem.dropped_columns.empty()) {
        std::string msg = "rank-deficient covariates; dropped components";
        for (int c : problem.dropped_columns) msg += ' ' + std::to_string(c + 1);
        result.warnings.push_back(msg);
    }
    result.solution = solve(problem, solver);
    result.certified = result.solution.certified;
    if (result.certified) {
        result.alpha = result.solution.alpha;
    } else {
        result.fallback_to_uniform = true;
        result.alpha = MixtureWeights::uniform(j);
        const char* why = result.solution.status == SolveStatus::NumericalBreakdown
                              ? "numerical breakdown"
                              : "iteration limit";
        result.warnings.push_back(
            std::string("weight optimization not certified (") + why +
            "); falling back to uniform mixture weights");
    }
    return result;
}

FinalEstimate estimate_on_sample(std::span<const WeightedSample> samples,
                                 const MixtureWeights& alpha,
                                 const ProposalFamily& family, bool with_cv,
                                 CvKind kind) {
    FinalEstimate out;
    out.beta = Eigen::VectorXd::Zero(family.size());
    if (!with_cv) {
        out.report = mixture_estimate(samples, alpha);
        return out;
    }
    out.fit = fit_control_coefficients(kind, samples, alpha, family.defensive_index);
    out.beta = out.fit.coefficients.beta;
    out.report.estimate = out.fit.intercept;
    out.report.variance_estimate = out.fit.intercept_variance;
    out.report.n = static_cast<int>(samples.size());
    out.used_cv = true;
    return out;
}

TwoStageResult run_two_stage(const ProposalFamily& family, const DensityModel& p,
                             const Integrand& f, const TwoStageConfig& config,
                             RngStream& stream) {
    if (config.pilot_size <= 0 || config.final_size <= 0)
        fail(ErrorCode::InvalidArgument, "pilot and final sizes must be positive");

    RngStream pilot_stream = stream.child(0);
    RngStream final_stream = stream.child(1);

    TwoStageResult result;
    result.pilot_size = config.pilot_size;
    result.final_size = config.final_size;

    std::vector<WeightedSample> pilot =
        draw_pilot(family, p, f, config.pilot_size, pilot_stream);
    result.optimization =
        optimize_weights(pilot, MixtureWeights::uniform(family.size()), family,
                         config.optimize_with_cv, config.epsilon_floor, config.solver);

    std::vector<WeightedSample> final_sample =
        draw_mixture(family, p, f, result.optimization.alpha, config.final_size,
                     final_stream, config.stratified_final);
    result.estimate = estimate_on_sample(final_sample, result.optimization.alpha,
                                         family, config.estimate_with_cv, config.cv_kind);
    return result;
}

}  // namespace mixis
