#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mixis/densities.hpp"
#include "mixis/estimators.hpp"
#include "mixis/optimizer.hpp"
#include "mixis/regression.hpp"

namespace mixis {

// Two-stage adaptive estimation: a uniform-mixture pilot, a certified convex
// solve for the mixture weights (optionally jointly with control-variate
// coefficients), then a final sample from the optimized mixture on which the
// coefficients are always refit before estimating.
struct TwoStageConfig {
    int pilot_size = 1000;
    int final_size = 10000;
    // Include control-variate columns in the weight optimization (the joint
    // alpha/beta criterion) rather than optimizing alpha alone.
    bool optimize_with_cv = false;
    // Fit and apply control variates on the final sample.
    bool estimate_with_cv = false;
    CvKind cv_kind = CvKind::Hat;
    // Per-component lower bound for the weights; negative means 0.1 / J.
    double epsilon_floor = -1.0;
    bool stratified_final = true;
    BarrierConfig solver;
};

struct WeightOptimization {
    MixtureWeights alpha = MixtureWeights::uniform(1);
    bool certified = false;
    // True when the solve did not certify and the weights fell back to
    // uniform; the raw solver output stays available in `solution`.
    bool fallback_to_uniform = false;
    Solution solution;
    std::vector<std::string> warnings;
};

struct FinalEstimate {
    EstimateReport report;
    // Fitted coefficients in full component space; zero when control
    // variates are off or the fit degenerates.
    Eigen::VectorXd beta;
    ControlFitResult fit;
    bool used_cv = false;
};

struct TwoStageResult {
    WeightOptimization optimization;
    FinalEstimate estimate;
    int pilot_size = 0;
    int final_size = 0;
};

// Stratified pilot from the uniform mixture over the family.
std::vector<WeightedSample> draw_pilot(const ProposalFamily& family,
                                       const DensityModel& p, const Integrand& f,
                                       int n, RngStream& stream);

// Solves for the mixture weights on a pilot drawn from alpha_pilot, with
// uniform floors epsilon_floor (default 0.1/J) and no excess-sum slack. A
// non-certified solve is downgraded to uniform weights with a warning; the
// pipeline never aborts on solver trouble.
WeightOptimization optimize_weights(std::span<const WeightedSample> pilot,
                                    const MixtureWeights& alpha_pilot,
                                    const ProposalFamily& family, bool use_cv,
                                    double epsilon_floor,
                                    const BarrierConfig& solver = {});

// Estimate on a sample drawn from the alpha-mixture. With control variates
// the report takes the regression intercept and its variance; without, the
// plain mixture importance-sampling estimate.
FinalEstimate estimate_on_sample(std::span<const WeightedSample> samples,
                                 const MixtureWeights& alpha,
                                 const ProposalFamily& family, bool with_cv,
                                 CvKind kind);

// Full pipeline. The pilot draws from stream.child(0) and the final sample
// from stream.child(1), so results are reproducible from the one seed.
TwoStageResult run_two_stage(const ProposalFamily& family, const DensityModel& p,
                             const Integrand& f, const TwoStageConfig& config,
                             RngStream& stream);

}  // namespace mixis
