#include "mixis/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#ifndef MIXIS_VERSION_STRING
#define MIXIS_VERSION_STRING "0.0.0-unversioned"
#endif

namespace mixis {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Standard normal upper tail.
double gaussian_upper_tail(double eta) { return 0.5 * std::erfc(eta / std::sqrt(2.0)); }

constexpr int kNumMethods = 4;
constexpr std::array<MethodId, kNumMethods> kMethodOrder = {
    MethodId::Uniform, MethodId::UniformCv, MethodId::OptAlpha, MethodId::OptAlphaCv};

struct ReplicateOutcome {
    std::array<double, kNumMethods> estimate{};
    std::array<double, kNumMethods> variance{};
    std::array<double, kNumMethods> wall{};
    Eigen::VectorXd alpha_star;
    Eigen::VectorXd alpha_dstar;
    bool fallback_star = false;
    bool fallback_dstar = false;
};

ReplicateOutcome run_replicate(const ExperimentSpec& spec,
                               const std::array<bool, kNumMethods>& wanted,
                               double epsilon_floor, const BarrierConfig& solver,
                               std::uint64_t seed, int replicate) {
    ReplicateOutcome out;
    RngStream rep_stream = RngStream(seed).child(static_cast<std::uint64_t>(replicate));
    RngStream pilot_stream = rep_stream.child(0);
    RngStream final_uniform_stream = rep_stream.child(1);
    RngStream final_star_stream = rep_stream.child(2);
    RngStream final_dstar_stream = rep_stream.child(3);

    const auto want = [&](MethodId id) { return wanted[static_cast<int>(id)]; };
    const MixtureWeights uniform = MixtureWeights::uniform(spec.family.size());

    double pilot_seconds = 0.0;
    std::vector<WeightedSample> pilot;
    if (want(MethodId::OptAlpha) || want(MethodId::OptAlphaCv)) {
        auto t0 = Clock::now();
        pilot = draw_pilot(spec.family, spec.p, spec.f, spec.pilot_size, pilot_stream);
        pilot_seconds = seconds_since(t0);
    }

    if (want(MethodId::Uniform) || want(MethodId::UniformCv)) {
        auto t0 = Clock::now();
        std::vector<WeightedSample> sample =
            draw_mixture(spec.family, spec.p, spec.f, uniform, spec.final_size,
                         final_uniform_stream, /*stratified=*/true);
        double draw_seconds = seconds_since(t0);
        if (want(MethodId::Uniform)) {
            auto t1 = Clock::now();
            EstimateReport report = mixture_estimate(sample, uniform);
            int idx = static_cast<int>(MethodId::Uniform);
            out.estimate[idx] = report.estimate;
            out.variance[idx] = report.variance_estimate;
            out.wall[idx] = draw_seconds + seconds_since(t1);
        }
        if (want(MethodId::UniformCv)) {
            auto t1 = Clock::now();
            FinalEstimate fe = estimate_on_sample(sample, uniform, spec.family,
                                                  /*with_cv=*/true, CvKind::Hat);
            int idx = static_cast<int>(MethodId::UniformCv);
            out.estimate[idx] = fe.report.estimate;
            out.variance[idx] = fe.report.variance_estimate;
            out.wall[idx] = draw_seconds + seconds_since(t1);
        }
    }

    auto run_optimized = [&](MethodId id, bool with_cv, RngStream& final_stream,
                             Eigen::VectorXd& alpha_out, bool& fallback_out) {
        auto t0 = Clock::now();
        WeightOptimization opt = optimize_weights(pilot, uniform, spec.family, with_cv,
                                                  epsilon_floor, solver);
        std::vector<WeightedSample> sample =
            draw_mixture(spec.family, spec.p, spec.f, opt.alpha, spec.final_size,
                         final_stream, /*stratified=*/true);
        FinalEstimate fe =
            estimate_on_sample(sample, opt.alpha, spec.family, with_cv, CvKind::Hat);
        int idx = static_cast<int>(id);
        out.estimate[idx] = fe.report.estimate;
        out.variance[idx] = fe.report.variance_estimate;
        out.wall[idx] = pilot_seconds + seconds_since(t0);
        alpha_out = opt.alpha.values();
        fallback_out = opt.fallback_to_uniform;
    };
    if (want(MethodId::OptAlpha))
        run_optimized(MethodId::OptAlpha, false, final_star_stream, out.alpha_star,
                      out.fallback_star);
    if (want(MethodId::OptAlphaCv))
        run_optimized(MethodId::OptAlphaCv, true, final_dstar_stream, out.alpha_dstar,
                      out.fallback_dstar);
    return out;
}

double singular_baseline_variance(const ExperimentSpec& spec, std::uint64_t seed) {
    // Dedicated plain Monte Carlo run under p; the per-draw variance of f.
    constexpr int kDraws = 1'000'000;
    RngStream stream = RngStream(seed).child(std::uint64_t{1} << 32);
    CompensatedSum sum, sum_sq;
    for (int i = 0; i < kDraws; ++i) {
        double v = spec.f(spec.p->draw(stream));
        sum.add(v);
        sum_sq.add(v * v);
    }
    double mean = sum.value() / kDraws;
    return (sum_sq.value() - kDraws * mean * mean) / (kDraws - 1);
}

void format_number(std::string& line, const char* fmt, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, value);
    line += buf;
}

}  // namespace

std::string method_label(MethodId id) {
    switch (id) {
        case MethodId::Uniform: return "uniform";
        case MethodId::UniformCv: return "uniform_cv";
        case MethodId::OptAlpha: return "opt_alpha";
        case MethodId::OptAlphaCv: return "opt_alpha_cv";
    }
    return "unknown";
}

std::optional<MethodId> parse_method(const std::string& label) {
    std::string canon = label;
    std::replace(canon.begin(), canon.end(), '-', '_');
    for (MethodId id : kMethodOrder)
        if (canon == method_label(id)) return id;
    return std::nullopt;
}

ExperimentSpec build_singular_experiment(ExperimentScale scale) {
    constexpr int d = 5;
    constexpr double gamma = 2.4;

    Eigen::MatrixXd covariance(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) covariance(i, j) = std::pow(0.5, std::abs(i - j));
    DensityModel p = GaussianDensity::make(Eigen::VectorXd::Zero(d), covariance);

    Eigen::VectorXd x0 = Eigen::VectorXd::Ones(d);
    Integrand f = [x0, gamma](const Eigen::VectorXd& x) {
        return std::pow((x - x0).norm(), -gamma);
    };

    std::vector<Eigen::VectorXd> centers(5, Eigen::VectorXd::Ones(d));
    centers[1] = -Eigen::VectorXd::Ones(d);
    centers[2] = Eigen::VectorXd::Ones(d);
    centers[2][0] = -1.0;
    centers[3] = -centers[2];
    centers[4] = Eigen::VectorXd::Ones(d);
    centers[4][0] = centers[4][1] = -1.0;

    std::vector<DensityModel> proposals;
    proposals.reserve(51);
    for (int k = 0; k < 5; ++k)
        for (int r = 1; r <= 10; ++r)
            proposals.push_back(
                GaussianDensity::make_isotropic(centers[k], std::pow(2.0, -r)));
    proposals.push_back(p);

    ExperimentSpec spec;
    spec.kind = ExperimentKind::Singular;
    spec.scale = scale;
    spec.name = "singular";
    spec.p = p;
    spec.family = make_proposal_family(std::move(proposals), 50, p);
    spec.f = std::move(f);
    spec.exact_mean = std::nullopt;
    spec.epsilon_floor = 0.1 / 51;
    if (scale == ExperimentScale::Paper) {
        spec.pilot_size = 10'000;
        spec.final_size = 500'000;
        spec.replicates = 5000;
    } else {
        spec.pilot_size = 2000;
        spec.final_size = 20'000;
        spec.replicates = 30;
    }
    return spec;
}

std::vector<double> rare_event_thresholds() {
    std::vector<double> thresholds(8);
    for (int i = 1; i <= 8; ++i) {
        // Solve (upper tail at eta)^3 = 16^-i * 1e-3 for eta by bisection.
        double target = std::cbrt(std::pow(16.0, -i) * 1e-3);
        double lo = 0.0, hi = 20.0;
        while (hi - lo > 1e-12) {
            double mid = 0.5 * (lo + hi);
            if (gaussian_upper_tail(mid) > target)
                lo = mid;
            else
                hi = mid;
        }
        thresholds[i - 1] = 0.5 * (lo + hi);
    }
    return thresholds;
}

double rare_event_corner_sign(int corner, int coordinate) {
    return ((corner >> coordinate) & 1) ? -1.0 : 1.0;
}

ExperimentSpec build_rare_event_experiment(ExperimentScale scale) {
    constexpr int d = 3;
    DensityModel p =
        GaussianDensity::make(Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d));

    std::vector<double> eta = rare_event_thresholds();
    Integrand f = [eta](const Eigen::VectorXd& x) {
        for (int i = 0; i < 8; ++i) {
            bool inside = true;
            for (int c = 0; c < d && inside; ++c)
                inside = x[c] * rare_event_corner_sign(i, c) > eta[i];
            if (inside) return 1.0;
        }
        return 0.0;
    };

    std::vector<Eigen::VectorXd> centers;
    centers.push_back(Eigen::VectorXd::Zero(d));
    for (int i = 0; i < 8; ++i) {
        Eigen::VectorXd z(d);
        for (int c = 0; c < d; ++c) z[c] = eta[i] * rare_event_corner_sign(i, c);
        centers.push_back(z);
    }

    const std::array<double, 12> variances = {1.0 / 50, 1.0 / 40, 1.0 / 30, 1.0 / 20,
                                              1.0 / 10, 1.0 / 2,  2.0,      10.0,
                                              20.0,     30.0,     40.0,     50.0};
    std::vector<DensityModel> proposals;
    proposals.reserve(109);
    for (const Eigen::VectorXd& z : centers)
        for (double v : variances) proposals.push_back(GaussianDensity::make_isotropic(z, v));
    proposals.push_back(p);

    CompensatedSum mu;
    for (int i = 1; i <= 8; ++i) mu.add(std::pow(16.0, -i) * 1e-3);

    ExperimentSpec spec;
    spec.kind = ExperimentKind::RareEvent;
    spec.scale = scale;
    spec.name = "rare-event";
    spec.p = p;
    spec.family = make_proposal_family(std::move(proposals), 108, p);
    spec.f = std::move(f);
    spec.exact_mean = mu.value();
    spec.epsilon_floor = 0.1 / 109;
    if (scale == ExperimentScale::Paper) {
        spec.pilot_size = 10'000;
        spec.final_size = 100'000;
        spec.replicates = 5000;
    } else {
        spec.pilot_size = 2000;
        spec.final_size = 10'000;
        spec.replicates = 30;
    }
    return spec;
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const ExperimentOptions& options) {
    if (options.methods.empty())
        fail(ErrorCode::InvalidArgument, "at least one method is required");
    std::array<bool, kNumMethods> wanted{};
    for (MethodId id : options.methods) wanted[static_cast<int>(id)] = true;

    const int replicates = options.replicates.value_or(spec.replicates);
    if (replicates < 2) fail(ErrorCode::InsufficientReplicates, "need at least 2 replicates");
    const double epsilon_floor = options.epsilon_floor.value_or(spec.epsilon_floor);

    int threads = options.threads;
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, replicates);

    std::vector<ReplicateOutcome> rows(replicates);
    std::atomic<int> next{0};
    std::atomic<bool> stop{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto worker = [&]() {
        for (;;) {
            int r = next.fetch_add(1);
            if (r >= replicates || stop.load()) return;
            try {
                rows[r] = run_replicate(spec, wanted, epsilon_floor, options.solver,
                                        options.seed, r);
            } catch (...) {
                std::scoped_lock lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                stop.store(true);
                return;
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    ExperimentResult result;
    result.experiment = spec.name;
    result.scale = spec.scale == ExperimentScale::Paper ? "paper" : "desk";
    result.seed = options.seed;
    result.replicates = replicates;
    result.pilot_size = spec.pilot_size;
    result.final_size = spec.final_size;
    result.epsilon_floor = epsilon_floor;
    result.threads = threads;
    result.exact_mean = spec.exact_mean;
    result.baseline_variance = spec.exact_mean
                                   ? *spec.exact_mean * (1.0 - *spec.exact_mean)
                                   : singular_baseline_variance(spec, options.seed);

    const int j = spec.family.size();
    for (MethodId id : kMethodOrder) {
        if (!wanted[static_cast<int>(id)]) continue;
        MethodSummary summary;
        summary.id = id;
        summary.estimates.reserve(replicates);
        const int idx = static_cast<int>(id);
        for (const ReplicateOutcome& row : rows) {
            summary.estimates.push_back(row.estimate[idx]);
            summary.variance_estimates.push_back(row.variance[idx]);
            summary.wall_seconds.push_back(row.wall[idx]);
        }
        if (method_optimizes(id)) {
            CompensatedSum fallbacks;
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(j);
            Eigen::VectorXd sq = Eigen::VectorXd::Zero(j);
            for (const ReplicateOutcome& row : rows) {
                const Eigen::VectorXd& a =
                    id == MethodId::OptAlpha ? row.alpha_star : row.alpha_dstar;
                bool fb = id == MethodId::OptAlpha ? row.fallback_star : row.fallback_dstar;
                mean += a;
                sq += a.cwiseProduct(a);
                if (fb) fallbacks.add(1.0);
            }
            mean /= replicates;
            summary.alpha_mean = mean;
            summary.alpha_sd =
                ((sq / replicates - mean.cwiseProduct(mean)).cwiseMax(0.0) *
                 (static_cast<double>(replicates) / (replicates - 1)))
                    .cwiseSqrt();
            summary.fallback_count = static_cast<int>(fallbacks.value());
        }
        result.methods.push_back(std::move(summary));
    }
    compute_metrics(result);
    return result;
}

void compute_metrics(ExperimentResult& result) {
    if (result.replicates < 2)
        fail(ErrorCode::InsufficientReplicates, "metrics require at least 2 replicates");

    auto mean_of = [](const std::vector<double>& v) {
        CompensatedSum s;
        for (double x : v) s.add(x);
        return s.value() / static_cast<double>(v.size());
    };

    double uniform_mse = std::numeric_limits<double>::quiet_NaN();
    for (MethodSummary& m : result.methods) {
        const int r = static_cast<int>(m.estimates.size());
        if (r != result.replicates)
            fail(ErrorCode::ShapeMismatch, "per-replicate results out of step");
        m.estimate_mean = mean_of(m.estimates);
        if (result.exact_mean) {
            CompensatedSum sq, ratio;
            for (int i = 0; i < r; ++i) {
                double err = m.estimates[i] - *result.exact_mean;
                sq.add(err * err);
                ratio.add(err * err / m.variance_estimates[i]);
            }
            m.mse = sq.value() / r;
            m.mse_var_ratio = ratio.value() / r;
        } else {
            CompensatedSum sq;
            for (int i = 0; i < r; ++i) {
                double dev = m.estimates[i] - m.estimate_mean;
                sq.add(dev * dev);
            }
            m.mse = sq.value() / (r - 1);
            m.mse_var_ratio = m.mse / mean_of(m.variance_estimates);
        }
        m.wall_seconds_mean = mean_of(m.wall_seconds);
        if (m.id == MethodId::Uniform) uniform_mse = m.mse;
    }
    for (MethodSummary& m : result.methods) {
        m.vrf_mc = (result.baseline_variance / result.final_size) / m.mse;
        m.vrf_uis = uniform_mse / m.mse;
    }
}

void write_results_csv(const ExperimentResult& result, const std::string& path,
                       bool include_timings) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot open " + path + " for writing");
    out << "method,cv,estimate,vrf_mc,vrf_uis,mse_var_ratio,wall_seconds\n";
    for (const MethodSummary& m : result.methods) {
        std::string line = method_optimizes(m.id) ? "opt_alpha" : "uniform";
        line += method_uses_cv(m.id) ? ",yes," : ",no,";
        format_number(line, "%.9g", m.estimate_mean);
        line += ',';
        format_number(line, "%.6g", m.vrf_mc);
        line += ',';
        format_number(line, "%.6g", m.vrf_uis);
        line += ',';
        format_number(line, "%.6g", m.mse_var_ratio);
        line += ',';
        if (include_timings)
            format_number(line, "%.3f", m.wall_seconds_mean);
        else
            line += "0.000";
        out << line << '\n';
    }
    if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

void write_results_json(const ExperimentResult& result, const std::string& path) {
    json doc;
    doc["schema_version"] = 1;
    doc["version"] = library_version();
    doc["experiment"] = result.experiment;
    doc["scale"] = result.scale;
    doc["seed"] = result.seed;
    doc["replicates"] = result.replicates;
    doc["pilot_size"] = result.pilot_size;
    doc["final_size"] = result.final_size;
    doc["epsilon_floor"] = result.epsilon_floor;
    doc["threads"] = result.threads;
    if (result.exact_mean)
        doc["exact_mean"] = *result.exact_mean;
    else
        doc["exact_mean"] = nullptr;
    doc["baseline_variance"] = result.baseline_variance;

    json methods = json::array();
    for (const MethodSummary& m : result.methods) {
        json entry;
        entry["method"] = method_label(m.id);
        entry["cv"] = method_uses_cv(m.id);
        entry["estimate_mean"] = m.estimate_mean;
        entry["mse"] = m.mse;
        entry["vrf_mc"] = m.vrf_mc;
        entry["vrf_uis"] = m.vrf_uis;
        entry["mse_var_ratio"] = m.mse_var_ratio;
        entry["wall_seconds_mean"] = m.wall_seconds_mean;
        entry["estimates"] = m.estimates;
        entry["variance_estimates"] = m.variance_estimates;
        entry["wall_seconds"] = m.wall_seconds;
        entry["fallback_count"] = m.fallback_count;
        if (m.alpha_mean.size() > 0) {
            std::vector<int> order(m.alpha_mean.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (m.alpha_mean[a] != m.alpha_mean[b])
                    return m.alpha_mean[a] > m.alpha_mean[b];
                return a < b;
            });
            json top = json::array();
            for (size_t i = 0; i < order.size() && i < 10; ++i) {
                int c = order[i];
                top.push_back({{"component", c},
                               {"mean", m.alpha_mean[c]},
                               {"sd", m.alpha_sd[c]}});
            }
            entry["alpha_top"] = std::move(top);
        }
        methods.push_back(std::move(entry));
    }
    doc["methods"] = std::move(methods);

    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot open " + path + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

std::string library_version() { return MIXIS_VERSION_STRING; }

}  // namespace mixis
