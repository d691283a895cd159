#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixis/pipeline.hpp"

namespace mixis {

// Two built-in benchmark studies: a singular integrand under a correlated
// 5-d Gaussian, and a 3-d Gaussian rare-event union of corner boxes with a
// known mean. Paper scale reproduces the published sample sizes; desk scale
// shrinks them so the whole suite runs in minutes.
enum class ExperimentKind { Singular, RareEvent };
enum class ExperimentScale { Desk, Paper };

// The four estimation strategies compared by the studies: uniform mixture
// weights or optimized ones, each with or without control variates. The
// optimized-with-cv method optimizes weights and coefficients jointly, then
// refits the coefficients on the final sample.
enum class MethodId { Uniform, UniformCv, OptAlpha, OptAlphaCv };

std::string method_label(MethodId id);  // uniform, uniform_cv, opt_alpha, opt_alpha_cv
std::optional<MethodId> parse_method(const std::string& label);
inline bool method_uses_cv(MethodId id) {
    return id == MethodId::UniformCv || id == MethodId::OptAlphaCv;
}
inline bool method_optimizes(MethodId id) {
    return id == MethodId::OptAlpha || id == MethodId::OptAlphaCv;
}

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Singular;
    ExperimentScale scale = ExperimentScale::Desk;
    std::string name;  // "singular" or "rare-event"
    DensityModel p;
    ProposalFamily family;
    Integrand f;
    // Known only for the rare event (sum of the eight corner probabilities).
    std::optional<double> exact_mean;
    double epsilon_floor = 0.0;  // 0.1 / J
    int pilot_size = 0;
    int final_size = 0;
    int replicates = 0;
};

// ||x - x0||^-2.4 under N(0, Sigma), Sigma_ij = 0.5^|i-j|, d = 5; proposals
// N(x_k, 2^-r I) for 5 centers and variances 2^-1..2^-10 (component
// 10(k-1)+(r-1), 0-based) plus a defensive copy of p at index 50.
ExperimentSpec build_singular_experiment(ExperimentScale scale);

// Indicator of a union of eight disjoint corner boxes under N(0, I_3); box i
// needs every |x_c| > eta_i with the signs of corner i, and eta_i is
// calibrated so box i has probability 16^-i * 1e-3. Proposals N(z_k, s_r I)
// for 9 centers (origin + the corner points) and 12 variances (component
// 12k+(r-1)) plus a defensive copy of p at index 108.
ExperimentSpec build_rare_event_experiment(ExperimentScale scale);

// The calibrated corner thresholds eta_1..eta_8 (bisection to 1e-12).
std::vector<double> rare_event_thresholds();

// Per-coordinate sign of corner i (0-based), c = 0..2: +1 when bit c of i is
// clear, -1 when set.
double rare_event_corner_sign(int corner, int coordinate);

struct ExperimentOptions {
    std::uint64_t seed = 1;
    std::optional<int> replicates;       // overrides the spec count
    std::vector<MethodId> methods = {MethodId::Uniform, MethodId::UniformCv,
                                     MethodId::OptAlpha, MethodId::OptAlphaCv};
    std::optional<double> epsilon_floor;  // overrides the spec floor
    int threads = 0;                      // 0 = all hardware threads
    BarrierConfig solver;
};

struct MethodSummary {
    MethodId id = MethodId::Uniform;
    // Per-replicate raw results, replicate order.
    std::vector<double> estimates;
    std::vector<double> variance_estimates;
    std::vector<double> wall_seconds;
    int fallback_count = 0;  // non-certified solves downgraded to uniform
    // Componentwise mean and sd of the optimized weights across replicates;
    // empty for the uniform methods.
    Eigen::VectorXd alpha_mean;
    Eigen::VectorXd alpha_sd;
    // Aggregate metrics (filled by compute_metrics).
    double estimate_mean = 0.0;
    double mse = 0.0;
    double vrf_mc = 0.0;
    double vrf_uis = 0.0;
    double mse_var_ratio = 0.0;
    double wall_seconds_mean = 0.0;
};

struct ExperimentResult {
    std::string experiment;
    std::string scale;
    std::uint64_t seed = 1;
    int replicates = 0;
    int pilot_size = 0;
    int final_size = 0;
    double epsilon_floor = 0.0;
    int threads = 1;
    std::optional<double> exact_mean;
    // Per-draw variance of plain Monte Carlo under p: exact mu(1-mu) for the
    // rare event, estimated from a dedicated 1e6-draw sample for the
    // singular integrand.
    double baseline_variance = 0.0;
    std::vector<MethodSummary> methods;
};

// Runs every requested method over `replicates` independent replicates.
// Replicate r derives all of its randomness from seed-stream child r (with
// sub-streams per purpose: pilot, uniform final, optimized finals), so
// results are reproducible and independent of the thread count. Within a
// replicate the two optimizations share one pilot sample and the two
// uniform methods share one final sample.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const ExperimentOptions& options);

// Fills the aggregate metrics: MSE (mean squared error against the exact
// mean when known, sample variance across replicates otherwise), variance
// reduction factors versus plain Monte Carlo and versus the uniform mixture,
// and the calibration ratio of realized MSE to its internal estimate.
// Requires at least two replicates.
void compute_metrics(ExperimentResult& result);

// CSV table, one row per method:
// method,cv,estimate,vrf_mc,vrf_uis,mse_var_ratio,wall_seconds.
// Estimates print with 9 significant digits, ratio metrics with 6. Timings
// print as 0.000 unless include_timings, keeping the bytes reproducible.
void write_results_csv(const ExperimentResult& result, const std::string& path,
                       bool include_timings);

// Full-precision JSON sidecar: resolved configuration, library version,
// per-replicate estimates and variance estimates, measured timings, and the
// top ten mixture components (mean and sd across replicates) for the
// optimizing methods.
void write_results_json(const ExperimentResult& result, const std::string& path);

// Version string baked in at build time.
std::string library_version();

}  // namespace mixis
