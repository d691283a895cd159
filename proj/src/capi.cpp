#include "mixis/mixis.h"

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "mixis/experiments.hpp"
#include "mixis/optimizer.hpp"

struct mixis_problem {
    mixis::ProblemData data;
};

struct mixis_solution {
    mixis::Solution value;
};

namespace {

thread_local std::string g_last_error;

mixis_status map_code(mixis::ErrorCode code) {
    switch (code) {
        case mixis::ErrorCode::Io: return MIXIS_ERR_IO;
        case mixis::ErrorCode::NumericalBreakdown: return MIXIS_ERR_NUMERICAL;
        default: return MIXIS_ERR_INVALID_ARGUMENT;
    }
}

template <typename Fn>
mixis_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return MIXIS_OK;
    } catch (const mixis::Error& e) {
        g_last_error = e.what();
        return map_code(e.code());
    } catch (const nlohmann::json::exception& e) {
        g_last_error = e.what();
        return MIXIS_ERR_INVALID_ARGUMENT;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MIXIS_ERR_INVALID_ARGUMENT;
    }
}

mixis_status require(bool ok, const char* message) {
    if (ok) {
        g_last_error.clear();
        return MIXIS_OK;
    }
    g_last_error = message;
    return MIXIS_ERR_INVALID_ARGUMENT;
}

// Parses the experiment config JSON into a spec + options + timing flag.
void run_experiment_config(const std::string& text, const std::string& out_dir) {
    using nlohmann::json;
    json doc = json::parse(text);
    if (!doc.is_object()) mixis::fail(mixis::ErrorCode::InvalidArgument, "config must be a JSON object");
    if (doc.contains("schema_version") && doc["schema_version"].get<int>() != 1)
        mixis::fail(mixis::ErrorCode::InvalidArgument, "unsupported config schema_version");
    if (!doc.contains("experiment"))
        mixis::fail(mixis::ErrorCode::InvalidArgument, "config field 'experiment' is required");

    std::string experiment = doc["experiment"].get<std::string>();
    std::string scale_name = doc.value("scale", std::string("desk"));
    mixis::ExperimentScale scale;
    if (scale_name == "desk")
        scale = mixis::ExperimentScale::Desk;
    else if (scale_name == "paper")
        scale = mixis::ExperimentScale::Paper;
    else
        mixis::fail(mixis::ErrorCode::InvalidArgument, "scale must be 'desk' or 'paper'");

    mixis::ExperimentSpec spec;
    if (experiment == "singular")
        spec = mixis::build_singular_experiment(scale);
    else if (experiment == "rare-event")
        spec = mixis::build_rare_event_experiment(scale);
    else
        mixis::fail(mixis::ErrorCode::InvalidArgument,
                    "experiment must be 'singular' or 'rare-event'");

    mixis::ExperimentOptions options;
    options.seed = doc.value("seed", std::uint64_t{1});
    if (doc.contains("replicates") && !doc["replicates"].is_null())
        options.replicates = doc["replicates"].get<int>();
    if (doc.contains("epsilon") && !doc["epsilon"].is_null())
        options.epsilon_floor = doc["epsilon"].get<double>();
    options.threads = doc.value("threads", 0);
    if (doc.contains("methods") && !doc["methods"].is_null()) {
        options.methods.clear();
        for (const auto& entry : doc["methods"]) {
            auto id = mixis::parse_method(entry.get<std::string>());
            if (!id)
                mixis::fail(mixis::ErrorCode::InvalidArgument,
                            "unknown method '" + entry.get<std::string>() + "'");
            options.methods.push_back(*id);
        }
    }
    std::string timing = doc.value("timing", std::string("none"));
    if (timing != "none" && timing != "csv")
        mixis::fail(mixis::ErrorCode::InvalidArgument, "timing must be 'none' or 'csv'");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) mixis::fail(mixis::ErrorCode::Io, "cannot create output directory " + out_dir);

    mixis::ExperimentResult result = mixis::run_experiment(spec, options);
    auto base = std::filesystem::path(out_dir);
    mixis::write_results_csv(result, (base / "results.csv").string(), timing == "csv");
    mixis::write_results_json(result, (base / "results.json").string());
}

}  // namespace

extern "C" {

const char* mixis_version(void) {
    static const std::string version = mixis::library_version();
    return version.c_str();
}

const char* mixis_last_error(void) { return g_last_error.c_str(); }

mixis_status mixis_problem_load(const char* path, mixis_problem** out) {
    if (mixis_status s = require(path && out, "path and out must be non-null"); s != MIXIS_OK)
        return s;
    return guarded([&] {
        auto problem = std::make_unique<mixis_problem>();
        problem->data = mixis::load_problem(path);
        *out = problem.release();
    });
}

mixis_status mixis_problem_save(const mixis_problem* problem, const char* path) {
    if (mixis_status s = require(problem && path, "problem and path must be non-null");
        s != MIXIS_OK)
        return s;
    return guarded([&] { mixis::save_problem(problem->data, path); });
}

void mixis_problem_free(mixis_problem* problem) { delete problem; }

mixis_status mixis_problem_dims(const mixis_problem* problem, int32_t* n,
                                int32_t* num_components, int32_t* num_covariates) {
    if (mixis_status s = require(problem != nullptr, "problem must be non-null");
        s != MIXIS_OK)
        return s;
    if (n) *n = problem->data.n();
    if (num_components) *num_components = problem->data.num_components();
    if (num_covariates) *num_covariates = problem->data.num_covariates();
    return MIXIS_OK;
}

mixis_status mixis_problem_set_uniform_floor(mixis_problem* problem, double floor_value) {
    if (mixis_status s = require(problem != nullptr, "problem must be non-null");
        s != MIXIS_OK)
        return s;
    return guarded([&] {
        if (!(floor_value >= 0.0)) {
            mixis::fail(mixis::ErrorCode::NonFeasible,
                        "uniform floor must be nonnegative");
        }
        mixis::ConstraintSet floors = mixis::ConstraintSet::uniform_floor(
            problem->data.num_components(), floor_value);
        floors.eta = problem->data.constraints.eta;
        mixis::initial_interior_point(floors);  // feasibility check
        problem->data.constraints = floors;
    });
}

mixis_status mixis_problem_solve(const mixis_problem* problem,
                                 double certificate_tolerance, mixis_solution** out) {
    if (mixis_status s = require(problem && out, "problem and out must be non-null");
        s != MIXIS_OK)
        return s;
    return guarded([&] {
        mixis::BarrierConfig config;
        if (certificate_tolerance > 0.0)
            config.certificate_tolerance = certificate_tolerance;
        auto solution = std::make_unique<mixis_solution>();
        solution->value = mixis::solve(problem->data, config);
        *out = solution.release();
    });
}

mixis_status mixis_solution_mixture(const mixis_solution* solution, double* alpha,
                                    int32_t len) {
    if (mixis_status s = require(solution && alpha, "solution and alpha must be non-null");
        s != MIXIS_OK)
        return s;
    if (mixis_status s = require(len == solution->value.alpha.size(),
                                 "alpha length does not match the solution");
        s != MIXIS_OK)
        return s;
    Eigen::Map<Eigen::VectorXd>(alpha, len) = solution->value.alpha.values();
    return MIXIS_OK;
}

mixis_status mixis_solution_coefficients(const mixis_solution* solution, double* beta,
                                         int32_t len) {
    if (mixis_status s = require(solution != nullptr, "solution must be non-null");
        s != MIXIS_OK)
        return s;
    if (mixis_status s = require(len == solution->value.beta.size(),
                                 "beta length does not match the solution");
        s != MIXIS_OK)
        return s;
    if (len > 0) {
        if (mixis_status s = require(beta != nullptr, "beta must be non-null");
            s != MIXIS_OK)
            return s;
        Eigen::Map<Eigen::VectorXd>(beta, len) = solution->value.beta;
    }
    return MIXIS_OK;
}

mixis_status mixis_solution_objective(const mixis_solution* solution, double* value) {
    if (mixis_status s = require(solution && value, "solution and value must be non-null");
        s != MIXIS_OK)
        return s;
    *value = solution->value.objective;
    return MIXIS_OK;
}

mixis_status mixis_solution_certified(const mixis_solution* solution, int32_t* flag) {
    if (mixis_status s = require(solution && flag, "solution and flag must be non-null");
        s != MIXIS_OK)
        return s;
    *flag = solution->value.certified ? 1 : 0;
    return MIXIS_OK;
}

mixis_status mixis_solution_status(const mixis_solution* solution, int32_t* status) {
    if (mixis_status s = require(solution && status, "solution and status must be non-null");
        s != MIXIS_OK)
        return s;
    switch (solution->value.status) {
        case mixis::SolveStatus::Certified: *status = 0; break;
        case mixis::SolveStatus::MaxIterationsExceeded: *status = 1; break;
        case mixis::SolveStatus::NumericalBreakdown: *status = 2; break;
    }
    return MIXIS_OK;
}

void mixis_solution_free(mixis_solution* solution) { delete solution; }

mixis_status mixis_run_experiment(const char* config_json, const char* out_dir) {
    if (mixis_status s = require(config_json && out_dir,
                                 "config_json and out_dir must be non-null");
        s != MIXIS_OK)
        return s;
    return guarded([&] { run_experiment_config(config_json, out_dir); });
}

}  // extern "C"
