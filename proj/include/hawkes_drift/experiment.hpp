#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hawkes_drift/asymptotics.hpp"
#include "hawkes_drift/errors.hpp"
#include "hawkes_drift/infer.hpp"
#include "hawkes_drift/sde.hpp"
#include "hawkes_drift/stattest.hpp"

namespace hawkes_drift {

inline constexpr int kConfigSchemaVersion = 1;

[[nodiscard]] std::string software_version();

/// Thrown with every violation found, not just the first.
class ConfigError : public ValidationError {
public:
    explicit ConfigError(std::vector<std::string> violations);
    [[nodiscard]] const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

/// Estimation side of a model: the fitted family, the box and the optimizer settings.
struct EstimationSpec {
    Baseline baseline;
    ThetaBox box;
    ParamLayout layout;
    FitOptions fit;
    FisherVariant fisher{FisherVariant::outer_product};
};

struct CoefTest {
    std::string coef;
    double value{0.0};
};

struct TestSettings {
    double alpha{0.05};
    TestSide side{TestSide::two_sided};
    std::vector<CoefTest> coef;
    std::vector<std::pair<std::string, std::string>> equal;
    double subsample_exponent{2.0 / 3.0};
    CorrectionVariant correction{CorrectionVariant::inverse_sqrt};
};

struct AsymptoticSettings {
    std::size_t replicates{100};
    double horizon{1000.0};
    double k{3.0};
    double clt_alpha{0.01};
    StationaryMeanOptions stationary;
};

enum class ReplicateFiles { none, first, all };

struct ExperimentConfig {
    std::string name;
    nlohmann::json covariate_model;
    SdeModelPtr model;
    std::vector<double> xi;
    std::vector<double> x0;
    double step{0.01};

    Baseline truth_baseline;
    HawkesParams truth;
    EstimationSpec estimation;
    /// Truth in the estimation layout, when it can be expressed there.
    std::optional<Vector> reference;

    double horizon{0.0};
    std::size_t replicates{1};
    std::uint64_t master_seed{0};
    std::vector<std::string> tasks;
    TestSettings tests;
    AsymptoticSettings asymptotics;
    std::string output_directory;
    ReplicateFiles replicate_files{ReplicateFiles::first};
    bool allow_unstable{false};

    nlohmann::json source;
    std::string hash;

    [[nodiscard]] bool has_task(const std::string& task) const;
};

/// Every task name a config may list.
[[nodiscard]] const std::vector<std::string>& known_tasks();

/// Parses the versioned JSON schema; throws ConfigError listing every violation.
[[nodiscard]] ExperimentConfig parse_config(const nlohmann::json& source);
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);

/// Schema, stability and envelope checks without simulating. Empty when the config is valid.
[[nodiscard]] std::vector<std::string> validate_config(const nlohmann::json& source);

/// {"baseline": [...], "box": {...}, "fit": {...}, "fisher": "..."}.
[[nodiscard]] EstimationSpec parse_estimation(const nlohmann::json& source, std::vector<std::string>& violations);

/// 16 hex digits of fnv1a64 over the canonical dump.
[[nodiscard]] std::string config_hash(const nlohmann::json& source);

struct RunOptions {
    std::size_t jobs{1};
    std::optional<std::filesystem::path> output_directory;
    /// Run this replicate alone (0-based), for example to reproduce it from a manifest.
    std::optional<std::size_t> replicate;
    bool quiet{true};
};

/// Per-replicate outcome of the simulate/fit/test/gof pipeline.
struct ReplicateResult {
    std::size_t index{0};
    bool ok{false};
    std::string error;
    std::string error_kind;
    std::size_t n_events{0};
    std::vector<std::size_t> counts;
    std::optional<FitResult> fit;
    std::optional<FisherEstimate> fisher;
    Vector standardized;
    std::vector<TestReport> coef_tests;
    std::vector<TestReport> equal_tests;
    double gof_p_truth{-1.0};
    double gof_p_raw{-1.0};
    double gof_p_full{-1.0};
    double gof_p_subsampled{-1.0};
    std::size_t gof_subsample_size{0};
    /// Per-replicate artifacts (path relative to the output directory, content), written by the collector.
    std::vector<std::pair<std::filesystem::path, std::string>> files;
};

struct RunSummary {
    std::filesystem::path directory;
    std::vector<ReplicateResult> replicates;
    std::optional<LimitCheck> lln;
    std::optional<CltCheck> clt;
    std::size_t failures{0};
    nlohmann::json summary;
};

/// Runs one replicate of the per-replicate pipeline; exceptions propagate. With `keep_files`, the
/// artifacts the config asks for are rendered into ReplicateResult::files.
[[nodiscard]] ReplicateResult run_replicate(const ExperimentConfig& config, std::size_t index,
                                            bool keep_files = false);

/// Runs the whole experiment and writes its artifacts. Failed replicates are recorded and
/// leave a `.failed` marker; the caller decides the exit status from RunSummary::failures.
[[nodiscard]] RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

} // namespace hawkes_drift
