#include <doctest.h>

#include <cmath>
#include <vector>

#include "mixis/estimators.hpp"

using namespace mixis;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v[i++] = x;
    return v;
}

WeightedSample make_sample(double f, double p, std::initializer_list<double> q,
                           int stratum) {
    WeightedSample s;
    s.f_value = f;
    s.p_density = p;
    s.q_densities = vec(q);
    s.stratum = stratum;
    return s;
}

// A small full-support discrete setup drawn through the real sampler.
struct DiscreteSetup {
    DensityModel p = DiscretePmf::make(vec({0.4, 0.3, 0.3}));
    DensityModel q1 = DiscretePmf::make(vec({0.2, 0.5, 0.3}));
    DensityModel q2 = DiscretePmf::make(vec({0.5, 0.2, 0.3}));
    ProposalFamily family = make_proposal_family({q1, q2}, std::nullopt, p);
    Integrand f = [](const Eigen::VectorXd& x) { return 1.0 + x[0] * x[0]; };
    double mu = 0.4 * 1.0 + 0.3 * 2.0 + 0.3 * 5.0;  // 2.5
};

template <typename Fn>
ErrorCode thrown_code(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("importance estimate with q = p is the sample mean") {
    std::vector<double> f = {1.0, 2.0, 3.0};
    std::vector<double> ones = {1.0, 1.0, 1.0};
    EstimateReport report = importance_estimate(f, ones, ones);
    CHECK(report.estimate == 2.0);
    CHECK(report.variance_estimate == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(report.n == 3);
    CHECK(thrown_code([&] {
              std::vector<double> zero_q = {1.0, 0.0, 1.0};
              importance_estimate(f, ones, zero_q);
          }) == ErrorCode::ZeroDensityAtSample);
}

TEST_CASE("one-hot mixture weights reproduce single-proposal importance sampling") {
    DiscreteSetup setup;
    RngStream stream(11);
    MixtureWeights one_hot = MixtureWeights::renormalized(vec({1.0, 0.0}));
    auto samples = draw_mixture(setup.family, setup.p, setup.f, one_hot, 64, stream, true);

    std::vector<double> f, p, q;
    for (const WeightedSample& s : samples) {
        f.push_back(s.f_value);
        p.push_back(s.p_density);
        q.push_back(s.q_densities[0]);
    }
    EstimateReport direct = importance_estimate(f, p, q);
    EstimateReport mixture = mixture_estimate(samples, one_hot);
    CHECK(mixture.estimate == direct.estimate);  // exact, same arithmetic
    CHECK(mixture.variance_estimate == direct.variance_estimate);
}

TEST_CASE("control-variate estimate with zero coefficients is the plain estimate") {
    DiscreteSetup setup;
    RngStream stream(12);
    MixtureWeights alpha = MixtureWeights::uniform(2);
    auto samples = draw_mixture(setup.family, setup.p, setup.f, alpha, 50, stream, true);
    ControlCoefficients zero = ControlCoefficients::with_unit_means(vec({0.0, 0.0}));
    EstimateReport plain = mixture_estimate(samples, alpha);
    CHECK(cv_estimate(CvKind::Tilde, samples, alpha, zero).estimate == plain.estimate);
    CHECK(cv_estimate(CvKind::Hat, samples, alpha, zero).estimate == plain.estimate);
}

TEST_CASE("hat minus tilde equals the weight-imbalance identity") {
    DiscreteSetup setup;
    RngStream stream(13);
    MixtureWeights alpha = MixtureWeights::renormalized(vec({0.3, 0.7}));
    auto samples = draw_mixture(setup.family, setup.p, setup.f, alpha, 101, stream, false);
    ControlCoefficients coeffs = ControlCoefficients::with_unit_means(vec({0.4, -1.3}));

    double tilde = cv_estimate(CvKind::Tilde, samples, alpha, coeffs).estimate;
    double hat = cv_estimate(CvKind::Hat, samples, alpha, coeffs).estimate;

    CompensatedSum imbalance;  // sum of (p/q_alpha - 1)
    for (const WeightedSample& s : samples)
        imbalance.add(s.p_density / mixture_density_cached(s.q_densities, alpha) - 1.0);
    double expected = coeffs.beta.dot(coeffs.theta) * imbalance.value() /
                      static_cast<double>(samples.size());
    CHECK(hat - tilde == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gamma mapping reproduces the tilde estimate through the hat form") {
    CHECK(gamma_from_beta(vec({1.0, 0.0}), MixtureWeights::uniform(2)) ==
          vec({0.5, -0.5}));

    // Defensive family (q2 = p) with unit feature means: hat at gamma equals
    // tilde at beta exactly.
    DensityModel p = DiscretePmf::make(vec({0.4, 0.3, 0.3}));
    DensityModel q1 = DiscretePmf::make(vec({0.2, 0.5, 0.3}));
    ProposalFamily family = make_proposal_family({q1, p}, 1, p);
    Integrand f = [](const Eigen::VectorXd& x) { return x[0]; };
    MixtureWeights alpha = MixtureWeights::renormalized(vec({0.6, 0.4}));
    RngStream stream(14);
    auto samples = draw_mixture(family, p, f, alpha, 73, stream, true);

    Eigen::VectorXd beta = vec({0.8, -0.2});
    ControlCoefficients tilde_coeffs = ControlCoefficients::with_unit_means(beta);
    ControlCoefficients hat_coeffs =
        ControlCoefficients::with_unit_means(gamma_from_beta(beta, alpha));
    double tilde = cv_estimate(CvKind::Tilde, samples, alpha, tilde_coeffs).estimate;
    double hat = cv_estimate(CvKind::Hat, samples, alpha, hat_coeffs).estimate;
    CHECK(hat == doctest::Approx(tilde).epsilon(1e-13));
}

TEST_CASE("mixture estimate converges to the exact mean") {
    DiscreteSetup setup;
    RngStream stream(15);
    MixtureWeights alpha = MixtureWeights::renormalized(vec({0.45, 0.55}));
    auto samples = draw_mixture(setup.family, setup.p, setup.f, alpha, 20000, stream, true);
    EstimateReport report = mixture_estimate(samples, alpha);
    CHECK(std::abs(report.estimate - setup.mu) <
          5.0 * std::sqrt(report.variance_estimate));
}

TEST_CASE("balance heuristic is bit-identical to the stratified mixture estimate") {
    DiscreteSetup setup;
    RngStream stream(16);
    MixtureWeights alpha = MixtureWeights::renormalized(vec({0.35, 0.65}));
    auto samples = draw_mixture(setup.family, setup.p, setup.f, alpha, 80, stream, true);

    // The mixture weights implied by the realized stratum counts; built the
    // same way multiple_is_estimate builds them internally.
    auto strata = partition_by_stratum(samples, 2);
    MixtureWeights realized = MixtureWeights::renormalized(
        vec({static_cast<double>(strata[0].size()), static_cast<double>(strata[1].size())}));

    EstimateReport mixture = mixture_estimate(samples, realized);
    EstimateReport balance = multiple_is_estimate(strata, PartitionOfUnity::balance());
    CHECK(balance.estimate == mixture.estimate);  // exact same floating value
    CHECK(balance.n == mixture.n);
}

TEST_CASE("indicator partition recovers single-stratum importance sampling") {
    DiscreteSetup setup;
    RngStream stream(17);
    MixtureWeights alpha = MixtureWeights::uniform(2);
    auto samples = draw_mixture(setup.family, setup.p, setup.f, alpha, 60, stream, true);
    auto strata = partition_by_stratum(samples, 2);

    std::vector<double> f, p, q;
    for (const WeightedSample& s : strata[1]) {
        f.push_back(s.f_value);
        p.push_back(s.p_density);
        q.push_back(s.q_densities[1]);
    }
    EstimateReport direct = importance_estimate(f, p, q);
    EstimateReport indicator = multiple_is_estimate(strata, PartitionOfUnity::indicator(1));
    CHECK(indicator.estimate == doctest::Approx(direct.estimate).epsilon(1e-14));
    CHECK(indicator.variance_estimate ==
          doctest::Approx(direct.variance_estimate).epsilon(1e-12));
}

TEST_CASE("power partition stays unbiased at a checkable scale") {
    DiscreteSetup setup;
    RngStream stream(18);
    MixtureWeights alpha = MixtureWeights::uniform(2);
    auto samples = draw_mixture(setup.family, setup.p, setup.f, alpha, 20000, stream, true);
    auto strata = partition_by_stratum(samples, 2);
    EstimateReport report = multiple_is_estimate(strata, PartitionOfUnity::power(2.0));
    CHECK(std::abs(report.estimate - setup.mu) <
          5.0 * std::sqrt(report.variance_estimate));
}

TEST_CASE("partition invariants are enforced at every sample") {
    SUBCASE("weights must sum to one where p is positive") {
        std::vector<std::vector<WeightedSample>> strata(1);
        strata[0].push_back(make_sample(1.0, 0.5, {0.5}, 0));
        PartitionOfUnity bad = PartitionOfUnity::custom_weights(
            [](const WeightedSample&) { return vec({0.6}); });
        CHECK(thrown_code([&] { multiple_is_estimate(strata, bad); }) ==
              ErrorCode::PartitionInvariantViolation);
    }
    SUBCASE("weight must vanish where its proposal does") {
        std::vector<std::vector<WeightedSample>> strata(2);
        strata[0].push_back(make_sample(1.0, 0.5, {0.5, 0.0}, 0));
        strata[1].push_back(make_sample(1.0, 0.5, {0.4, 0.2}, 1));
        PartitionOfUnity bad = PartitionOfUnity::custom_weights(
            [](const WeightedSample&) { return vec({0.5, 0.5}); });
        CHECK(thrown_code([&] { multiple_is_estimate(strata, bad); }) ==
              ErrorCode::PartitionInvariantViolation);
    }
    SUBCASE("empty strata are rejected") {
        std::vector<std::vector<WeightedSample>> strata(2);
        strata[0].push_back(make_sample(1.0, 0.5, {0.5, 0.5}, 0));
        CHECK(thrown_code([&] {
                  multiple_is_estimate(strata, PartitionOfUnity::balance());
              }) == ErrorCode::InsufficientReplicates);
    }
}

TEST_CASE("partition_by_stratum requires tags and preserves order") {
    DiscreteSetup setup;
    RngStream stream(19);
    auto samples =
        draw_mixture(setup.family, setup.p, setup.f, MixtureWeights::uniform(2), 30,
                     stream, true);
    auto strata = partition_by_stratum(samples, 2);
    CHECK(strata[0].size() + strata[1].size() == samples.size());
    std::size_t k = 0;
    for (int j = 0; j < 2; ++j)
        for (const WeightedSample& s : strata[j]) {
            CHECK(s.point[0] == samples[k].point[0]);  // stratum-major original order
            ++k;
        }

    WeightedSample untagged = make_sample(1.0, 0.5, {0.5, 0.5}, 0);
    untagged.stratum.reset();
    std::vector<WeightedSample> bad = {untagged};
    CHECK(thrown_code([&] { partition_by_stratum(bad, 2); }) ==
          ErrorCode::InvalidArgument);
}

}  // TEST_SUITE
