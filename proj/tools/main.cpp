// Command-line front end. Links only the shared C library; experiment
// configs are assembled into the JSON document the C API consumes.
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixis/mixis.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int exit_code_for(mixis_status status) {
    switch (status) {
        case MIXIS_OK: return 0;
        case MIXIS_ERR_NUMERICAL: return kExitNumerical;
        default: return kExitConfig;
    }
}

int complain(mixis_status status) {
    std::fprintf(stderr, "mixis: %s\n", mixis_last_error());
    return exit_code_for(status);
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int solve_problem_file(const std::string& path, double epsilon, bool epsilon_set,
                       double cert_tol) {
    mixis_problem* problem = nullptr;
    if (mixis_status s = mixis_problem_load(path.c_str(), &problem); s != MIXIS_OK)
        return complain(s);

    if (epsilon_set) {
        if (mixis_status s = mixis_problem_set_uniform_floor(problem, epsilon);
            s != MIXIS_OK) {
            mixis_problem_free(problem);
            return complain(s);
        }
    }

    int32_t n = 0, num_components = 0, num_covariates = 0;
    mixis_problem_dims(problem, &n, &num_components, &num_covariates);

    mixis_solution* solution = nullptr;
    mixis_status s = mixis_problem_solve(problem, cert_tol, &solution);
    mixis_problem_free(problem);
    if (s != MIXIS_OK) return complain(s);

    int32_t certified = 0, status = 0;
    double objective = 0.0;
    std::vector<double> alpha(num_components), beta(num_covariates);
    mixis_solution_certified(solution, &certified);
    mixis_solution_status(solution, &status);
    mixis_solution_objective(solution, &objective);
    mixis_solution_mixture(solution, alpha.data(), num_components);
    mixis_solution_coefficients(solution, beta.data(), num_covariates);
    mixis_solution_free(solution);

    std::printf("n: %d\ncomponents: %d\ncovariates: %d\n", n, num_components,
                num_covariates);
    std::printf("certified: %s\n", certified ? "yes" : "no");
    std::printf("objective: %.17g\n", objective);
    std::printf("alpha:");
    for (double a : alpha) std::printf(" %.17g", a);
    std::printf("\nbeta:");
    for (double b : beta) std::printf(" %.17g", b);
    std::printf("\n");

    if (!certified) {
        std::fprintf(stderr, "mixis: solve did not certify (%s)\n",
                     status == 2 ? "numerical breakdown" : "iteration limit");
        return kExitNumerical;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimally weighted mixture importance sampling"};
    app.set_version_flag("--version", std::string(mixis_version()));
    app.require_subcommand(1);

    CLI::App* run = app.add_subcommand("run",
                                       "Run a built-in experiment or solve a problem file");
    std::string experiment, problem_path, scale, methods, out_dir = "mixis-out";
    std::string config_path, timing;
    std::uint64_t seed = 1;
    int replicates = 0, threads = 0;
    double epsilon = -1.0, cert_tol = -1.0;

    run->add_option("--experiment", experiment, "Built-in experiment")
        ->check(CLI::IsMember({"singular", "rare-event"}));
    run->add_option("--problem", problem_path,
                    "Solve a mixis-problem file instead of running an experiment");
    run->add_option("--scale", scale, "Sample-size preset")
        ->check(CLI::IsMember({"desk", "paper"}));
    run->add_option("--seed", seed, "Base RNG seed");
    run->add_option("--replicates", replicates, "Replicate count override")
        ->check(CLI::PositiveNumber);
    run->add_option("--methods", methods,
                    "Comma-separated subset of uniform,uniform_cv,opt_alpha,opt_alpha_cv");
    run->add_option("--epsilon", epsilon, "Uniform weight floor (default 0.1/J)");
    run->add_option("--threads", threads, "Worker threads (0 = all cores)");
    run->add_option("--out", out_dir, "Output directory")->capture_default_str();
    run->add_option("--config", config_path, "JSON config file; flags override it");
    run->add_option("--timing", timing, "Emit measured wall_seconds in the CSV")
        ->check(CLI::IsMember({"none", "csv"}));
    run->add_option("--cert-tol", cert_tol,
                    "Certificate tolerance for --problem solves (default 1e-6)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    if (!problem_path.empty()) {
        if (!experiment.empty() || !config_path.empty()) {
            std::fprintf(stderr, "mixis: --problem excludes --experiment/--config\n");
            return kExitConfig;
        }
        return solve_problem_file(problem_path, epsilon, run->count("--epsilon") > 0,
                                  cert_tol);
    }

    nlohmann::json config = nlohmann::json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            std::fprintf(stderr, "mixis: cannot open config %s\n", config_path.c_str());
            return kExitConfig;
        }
        try {
            in >> config;
        } catch (const nlohmann::json::exception& e) {
            std::fprintf(stderr, "mixis: bad config %s: %s\n", config_path.c_str(),
                         e.what());
            return kExitConfig;
        }
        if (!config.is_object()) {
            std::fprintf(stderr, "mixis: config %s must hold a JSON object\n",
                         config_path.c_str());
            return kExitConfig;
        }
    }
    if (run->count("--experiment")) config["experiment"] = experiment;
    if (run->count("--scale")) config["scale"] = scale;
    if (run->count("--seed")) config["seed"] = seed;
    if (run->count("--replicates")) config["replicates"] = replicates;
    if (run->count("--methods")) config["methods"] = split_csv(methods);
    if (run->count("--epsilon")) config["epsilon"] = epsilon;
    if (run->count("--threads")) config["threads"] = threads;
    if (run->count("--timing")) config["timing"] = timing;
    if (!config.contains("experiment")) {
        std::fprintf(stderr, "mixis: --experiment (or a config providing it) is required\n");
        return kExitConfig;
    }
    if (!config.contains("schema_version")) config["schema_version"] = 1;

    std::string text = config.dump();
    mixis_status s = mixis_run_experiment(text.c_str(), out_dir.c_str());
    if (s != MIXIS_OK) return complain(s);
    std::printf("wrote %s/results.csv and %s/results.json\n", out_dir.c_str(),
                out_dir.c_str());
    return 0;
}
