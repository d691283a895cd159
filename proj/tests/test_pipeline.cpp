#include <doctest.h>

#include <cmath>
#include <string>

#include "mixis/oracle.hpp"
#include "mixis/pipeline.hpp"

using namespace mixis;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v[i++] = x;
    return v;
}

// One proposal matches p closely, the other is badly lopsided: the weight
// optimization should lean hard toward the first. A third defensive
// component anchors the family.
struct LopsidedSetup {
    oracle::DiscreteSpace space;
    oracle::DiscreteProblem problem;
    double mu;

    LopsidedSetup() {
        space.p = vec({0.35, 0.3, 0.2, 0.15});
        space.q.resize(3, 4);
        space.q.row(0) = vec({0.3, 0.3, 0.25, 0.15}).transpose();
        space.q.row(1) = vec({0.94, 0.02, 0.02, 0.02}).transpose();
        space.q.row(2) = space.p.transpose();
        space.f = vec({1.0, 2.0, -1.0, 3.0});
        problem = oracle::to_sampling_problem(space, 2);
        mu = oracle::exact_mu(space);
    }
};

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("pilot draws are uniform-stratified and reproducible") {
    LopsidedSetup setup;
    RngStream stream(61);
    auto pilot = draw_pilot(setup.problem.family, setup.problem.p, setup.problem.f,
                            60, stream);
    REQUIRE(pilot.size() == 60);
    int counts[3] = {0, 0, 0};
    for (const auto& s : pilot) counts[s.stratum.value()]++;
    CHECK(counts[0] == 20);
    CHECK(counts[1] == 20);
    CHECK(counts[2] == 20);

    RngStream replay(61);
    auto again = draw_pilot(setup.problem.family, setup.problem.p, setup.problem.f,
                            60, replay);
    CHECK(again[5].point[0] == pilot[5].point[0]);
}

TEST_CASE("weight optimization concentrates on the matching proposal") {
    LopsidedSetup setup;
    RngStream stream(62);
    auto pilot = draw_pilot(setup.problem.family, setup.problem.p, setup.problem.f,
                            1500, stream);
    MixtureWeights uniform = MixtureWeights::uniform(3);

    WeightOptimization opt =
        optimize_weights(pilot, uniform, setup.problem.family, false, -1.0);
    REQUIRE(opt.certified);
    CHECK_FALSE(opt.fallback_to_uniform);
    CHECK(opt.warnings.empty());

    // The component tracking p (or the defensive copy of p) should dominate;
    // the lopsided one should sit at its floor.
    double floor_value = 0.1 / 3.0;
    CHECK(opt.alpha[0] + opt.alpha[2] > 0.85);
    CHECK(opt.alpha[1] == doctest::Approx(floor_value).epsilon(0.05));
    CHECK(opt.alpha.values().sum() == doctest::Approx(1.0).epsilon(1e-14));
    for (int j = 0; j < 3; ++j) CHECK(opt.alpha[j] >= floor_value * (1.0 - 1e-9));

    // And the optimized weights genuinely improve the exact variance.
    double var_uniform =
        oracle::exact_variance(setup.space, oracle::VarianceSpec::mixture(uniform));
    double var_opt =
        oracle::exact_variance(setup.space, oracle::VarianceSpec::mixture(opt.alpha));
    CHECK(var_opt < var_uniform);
}

TEST_CASE("explicit floors carry through to the optimized weights") {
    LopsidedSetup setup;
    RngStream stream(63);
    auto pilot = draw_pilot(setup.problem.family, setup.problem.p, setup.problem.f,
                            800, stream);
    WeightOptimization opt = optimize_weights(pilot, MixtureWeights::uniform(3),
                                              setup.problem.family, true, 0.05);
    REQUIRE(opt.certified);
    for (int j = 0; j < 3; ++j) CHECK(opt.alpha[j] >= 0.05 * (1.0 - 1e-9));
}

TEST_CASE("a strangled solver falls back to uniform weights with a warning") {
    LopsidedSetup setup;
    RngStream stream(64);
    auto pilot = draw_pilot(setup.problem.family, setup.problem.p, setup.problem.f,
                            400, stream);
    BarrierConfig strangled;
    strangled.max_barrier_stages = 1;
    strangled.max_newton_iterations = 1;
    WeightOptimization opt = optimize_weights(pilot, MixtureWeights::uniform(3),
                                              setup.problem.family, false, -1.0,
                                              strangled);
    CHECK_FALSE(opt.certified);
    CHECK(opt.fallback_to_uniform);
    CHECK(opt.alpha.values() == MixtureWeights::uniform(3).values());
    REQUIRE_FALSE(opt.warnings.empty());
    bool mentions_uniform = false;
    for (const std::string& w : opt.warnings)
        if (w.find("uniform") != std::string::npos) mentions_uniform = true;
    CHECK(mentions_uniform);
}

TEST_CASE("estimation with control variates reports the regression intercept") {
    LopsidedSetup setup;
    RngStream stream(65);
    MixtureWeights alpha = MixtureWeights::renormalized(vec({0.5, 0.2, 0.3}));
    auto samples = draw_mixture(setup.problem.family, setup.problem.p,
                                setup.problem.f, alpha, 600, stream, true);

    FinalEstimate with_cv =
        estimate_on_sample(samples, alpha, setup.problem.family, true, CvKind::Hat);
    CHECK(with_cv.used_cv);
    CHECK(with_cv.report.estimate == with_cv.fit.intercept);
    CHECK(with_cv.report.variance_estimate == with_cv.fit.intercept_variance);
    CHECK(with_cv.beta.size() == 3);
    CHECK(with_cv.beta[2] == 0.0);  // defensive hat column is dropped

    FinalEstimate plain =
        estimate_on_sample(samples, alpha, setup.problem.family, false, CvKind::Hat);
    CHECK_FALSE(plain.used_cv);
    CHECK(plain.beta == Eigen::VectorXd::Zero(3));
    CHECK(plain.report.estimate ==
          mixture_estimate(samples, alpha).estimate);
}

TEST_CASE("two-stage run is deterministic and beats the pilot-free baseline") {
    LopsidedSetup setup;
    TwoStageConfig config;
    config.pilot_size = 900;
    config.final_size = 4000;
    config.estimate_with_cv = true;

    RngStream stream(66);
    TwoStageResult result = run_two_stage(setup.problem.family, setup.problem.p,
                                          setup.problem.f, config, stream);
    REQUIRE(result.optimization.certified);
    CHECK(result.pilot_size == 900);
    CHECK(result.final_size == 4000);
    CHECK(result.estimate.used_cv);

    // Close to truth at five standard errors.
    double se = std::sqrt(result.estimate.report.variance_estimate);
    CHECK(std::abs(result.estimate.report.estimate - setup.mu) < 5.0 * se);

    // Same seed, same everything.
    RngStream replay(66);
    TwoStageResult again = run_two_stage(setup.problem.family, setup.problem.p,
                                         setup.problem.f, config, replay);
    CHECK(again.estimate.report.estimate == result.estimate.report.estimate);
    CHECK(again.optimization.alpha.values() == result.optimization.alpha.values());

    // The exact variance at the chosen weights (with the fitted control
    // coefficients) improves on plain uniform sampling.
    double var_uniform = oracle::exact_variance(
        setup.space, oracle::VarianceSpec::mixture(MixtureWeights::uniform(3)));
    double var_final = oracle::exact_variance(
        setup.space,
        oracle::VarianceSpec::stratified_cv(result.optimization.alpha,
                                            result.estimate.beta, CvKind::Hat));
    CHECK(var_final < var_uniform);
}

TEST_CASE("optimizing jointly with control variates also settles the estimate") {
    LopsidedSetup setup;
    TwoStageConfig config;
    config.pilot_size = 1200;
    config.final_size = 3000;
    config.optimize_with_cv = true;
    config.estimate_with_cv = true;

    RngStream stream(67);
    TwoStageResult result = run_two_stage(setup.problem.family, setup.problem.p,
                                          setup.problem.f, config, stream);
    REQUIRE(result.optimization.certified);
    double se = std::sqrt(result.estimate.report.variance_estimate);
    CHECK(std::abs(result.estimate.report.estimate - setup.mu) < 5.0 * se);
    // Beta is refit on the final sample: replaying the final-stage stream by
    // hand must land on the identical report.
    RngStream replay_root(67);
    RngStream final_stream = replay_root.child(1);
    auto final_samples =
        draw_mixture(setup.problem.family, setup.problem.p, setup.problem.f,
                     result.optimization.alpha, config.final_size, final_stream, true);
    FinalEstimate direct = estimate_on_sample(final_samples, result.optimization.alpha,
                                              setup.problem.family, true, CvKind::Hat);
    CHECK(direct.report.estimate == result.estimate.report.estimate);
}

}  // TEST_SUITE
