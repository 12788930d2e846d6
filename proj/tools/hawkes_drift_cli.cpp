#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hawkes_drift/errors.hpp"
#include "hawkes_drift/experiment.hpp"
#include "hawkes_drift/infer.hpp"
#include "hawkes_drift/simulate.hpp"
#include "hawkes_drift/stattest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hawkes_drift;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

void report_error(const std::string& kind, const std::string& message, const std::vector<std::string>& violations = {}) {
    json error = {{"kind", kind}, {"message", message}};
    if (!violations.empty()) {
        error["violations"] = violations;
    }
    std::cerr << json{{"error", error}}.dump(2) << '\n';
}

struct Observed {
    CovariatePath path;
    EventSequence events;
    EstimationSpec spec;
};

Observed load_observed(const std::string& events_csv, const std::string& covariate_csv, const std::string& model_json,
                       std::optional<double> horizon) {
    std::ifstream model_in(model_json);
    if (!model_in) {
        throw ValidationError("cannot open model '" + model_json + "'");
    }
    json model;
    try {
        model = json::parse(model_in);
    } catch (const json::parse_error& e) {
        throw ValidationError("model '" + model_json + "' is not valid JSON: " + e.what());
    }
    std::vector<std::string> violations;
    Observed out;
    out.spec = parse_estimation(model, violations);
    if (!violations.empty()) {
        throw ConfigError(violations);
    }
    std::ifstream cov_in(covariate_csv);
    if (!cov_in) {
        throw ValidationError("cannot open covariate '" + covariate_csv + "'");
    }
    out.path = read_covariate_csv(cov_in, horizon ? *horizon : -1.0);
    std::ifstream ev_in(events_csv);
    if (!ev_in) {
        throw ValidationError("cannot open events '" + events_csv + "'");
    }
    out.events = read_events_csv(ev_in, out.path.horizon());
    out.events.validate(out.spec.layout.dim());
    return out;
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        report_error("validation", "invalid configuration", e.violations());
        return kExitValidation;
    } catch (const ValidationError& e) {
        report_error("validation", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        report_error("numerical", e.what());
        return kExitNumerical;
    }
}

json read_config(const std::string& path, bool allow_unstable) {
    std::ifstream in(path);
    json source;
    try {
        source = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    if (allow_unstable) {
        source["allow_unstable"] = true;
    }
    return source;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Covariate-driven Hawkes processes: simulation, estimation and tests"};
    app.set_version_flag("--version", software_version());
    app.require_subcommand(1);

    std::string config_path;
    std::size_t jobs = 1;
    std::string out_dir;
    std::optional<std::size_t> replicate;
    bool verbose = false;
    bool allow_unstable = false;
    auto* run = app.add_subcommand("run", "Run every task of an experiment config");
    run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--jobs", jobs, "Replicates run in parallel")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory (overrides the config)");
    run->add_option("--replicate", replicate, "Run only this replicate (1-based)")->check(CLI::PositiveNumber);
    run->add_flag("--verbose", verbose, "Report progress on stderr");
    run->add_flag("--allow-unstable", allow_unstable, "Skip the stability precheck");

    auto* validate = app.add_subcommand("validate", "Check a config without simulating");
    validate->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    validate->add_flag("--allow-unstable", allow_unstable, "Skip the stability precheck");

    std::string events_csv;
    std::string covariate_csv;
    std::string model_json;
    std::optional<double> horizon;
    std::uint64_t seed = 0;
    auto add_observed = [&](CLI::App* sub) {
        sub->add_option("events", events_csv, "Events CSV (t,mark)")->required()->check(CLI::ExistingFile);
        sub->add_option("covariate", covariate_csv, "Covariate CSV (t,x1,...)")->required()->check(CLI::ExistingFile);
        sub->add_option("model", model_json, "Estimation model JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--horizon", horizon, "Observation horizon (default: last covariate time)");
        sub->add_option("--seed", seed, "Seed for the multi-start draws and the correction");
    };
    auto* fit = app.add_subcommand("fit", "Maximum-likelihood fit of one observed trajectory");
    add_observed(fit);

    double exponent = 2.0 / 3.0;
    std::string correction = "inverse_sqrt";
    double alpha = 0.05;
    auto* gof = app.add_subcommand("gof", "Corrected goodness-of-fit test of one observed trajectory");
    add_observed(gof);
    gof->add_option("--subsample-exponent", exponent, "Subsample size is floor(n^exponent)");
    gof->add_option("--correction", correction, "inverse_sqrt or direct");
    gof->add_option("--alpha", alpha, "Test level");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        return guarded([&] {
            const auto config = parse_config(read_config(config_path, allow_unstable));
            RunOptions options;
            options.jobs = jobs;
            options.quiet = !verbose;
            if (!out_dir.empty()) {
                options.output_directory = fs::path(out_dir);
            }
            if (replicate) {
                options.replicate = *replicate - 1;
            }
            const auto summary = run_experiment(config, options);
            std::cout << json{{"output", summary.directory.string()},
                              {"config_hash", config.hash},
                              {"failures", summary.failures},
                              {"summary", summary.summary}}
                             .dump(2)
                      << '\n';
            if (summary.failures == 0) {
                return kExitOk;
            }
            const bool all_validation = std::all_of(summary.replicates.begin(), summary.replicates.end(),
                                                    [](const auto& r) { return r.ok || r.error_kind == "validation"; });
            return all_validation ? kExitValidation : kExitNumerical;
        });
    }
    if (validate->parsed()) {
        return guarded([&] {
            const auto source = read_config(config_path, allow_unstable);
            const auto violations = validate_config(source);
            if (!violations.empty()) {
                throw ConfigError(violations);
            }
            const auto config = parse_config(source);
            const auto stability = is_stable(config.truth);
            std::cout << json{{"valid", true},
                              {"config_hash", config.hash},
                              {"spectral_radius", stability.spectral_radius},
                              {"stability_margin", stability.margin}}
                             .dump(2)
                      << '\n';
            return kExitOk;
        });
    }
    if (fit->parsed()) {
        return guarded([&] {
            const auto observed = load_observed(events_csv, covariate_csv, model_json, horizon);
            const LikelihoodEvaluator likelihood(observed.spec.baseline, observed.path, observed.events);
            FitOptions options = observed.spec.fit;
            options.seed = seed;
            const auto result = fit_mle(likelihood, observed.spec.box, options);
            const auto fisher = fisher_estimate(likelihood, result.theta, observed.spec.fisher);
            json doc = to_json(result);
            doc["fisher"] = to_json(fisher);
            std::cout << doc.dump(2) << '\n';
            return kExitOk;
        });
    }
    if (gof->parsed()) {
        return guarded([&] {
            const auto observed = load_observed(events_csv, covariate_csv, model_json, horizon);
            const LikelihoodEvaluator likelihood(observed.spec.baseline, observed.path, observed.events);
            FitOptions options = observed.spec.fit;
            options.seed = seed;
            const auto result = fit_mle(likelihood, observed.spec.box, options);
            const auto fisher = fisher_outer(likelihood, result.theta);
            Rng rng = make_stream(seed);
            CorrectionOptions correction_options;
            correction_options.variant = correction_variant_from_string(correction);
            const auto residuals = corrected_residuals(likelihood, result.theta, fisher, rng, correction_options);
            const auto full = gof_corrected_ks(residuals, rng, {false, exponent, alpha});
            const auto sub = gof_corrected_ks(residuals, rng, {true, exponent, alpha});
            std::cout << json{{"fit", to_json(result)}, {"full", to_json(full)}, {"subsampled", to_json(sub)}}.dump(2)
                      << '\n';
            return kExitOk;
        });
    }
    return kExitOk;
}
