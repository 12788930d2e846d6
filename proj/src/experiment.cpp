#include "hawkes_drift/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "hawkes_drift/errors.hpp"
#include "hawkes_drift/io.hpp"
#include "hawkes_drift/parallel.hpp"
#include "hawkes_drift/random.hpp"
#include "hawkes_drift/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hawkes_drift {

std::string software_version() { return HAWKES_DRIFT_VERSION; }

namespace {

std::string join(const std::vector<std::string>& items, const std::string& sep) {
    std::string out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        out += (k ? sep : "") + items[k];
    }
    return out;
}

/// Reads one JSON object, collecting violations instead of stopping at the first.
class Reader {
public:
    Reader(const json& object, std::string where, std::vector<std::string>& violations)
        : object_(object), where_(std::move(where)), violations_(violations) {
        if (!object_.is_object()) {
            fail("must be an object");
        }
    }

    void allow(std::initializer_list<const char*> keys) {
        if (!object_.is_object()) {
            return;
        }
        const std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& [key, value] : object_.items()) {
            if (!allowed.contains(key)) {
                fail("unknown key '" + key + "'");
            }
        }
    }

    [[nodiscard]] bool has(const char* key) const { return object_.is_object() && object_.contains(key); }

    [[nodiscard]] const json* child(const char* key, bool required = true) {
        if (has(key)) {
            return &object_.at(key);
        }
        if (required) {
            fail("missing key '" + std::string(key) + "'");
        }
        return nullptr;
    }

    template <class T>
    std::optional<T> get(const char* key, bool required = true) {
        const json* node = child(key, required);
        if (node == nullptr) {
            return std::nullopt;
        }
        try {
            return node->get<T>();
        } catch (const json::exception&) {
            fail("key '" + std::string(key) + "' has the wrong type");
            return std::nullopt;
        }
    }

    template <class T>
    T get_or(const char* key, T fallback) {
        auto value = get<T>(key, false);
        return value ? *value : fallback;
    }

    void fail(const std::string& message) { violations_.push_back(where_ + ": " + message); }
    [[nodiscard]] const std::string& where() const noexcept { return where_; }

private:
    const json& object_;
    std::string where_;
    std::vector<std::string>& violations_;
};

std::optional<Baseline> read_baseline(const json* node, const std::string& where,
                                      std::vector<std::string>& violations) {
    if (node == nullptr) {
        return std::nullopt;
    }
    try {
        return Baseline::from_descriptor(*node);
    } catch (const std::exception& e) {
        violations.push_back(where + ": " + e.what());
        return std::nullopt;
    }
}

std::optional<HawkesParams> read_params(const json& node, const std::string& where,
                                        std::vector<std::string>& violations) {
    std::vector<std::string> local;
    Reader r(node, where, local);
    r.allow({"baseline", "mu", "alpha", "beta"});
    if (!local.empty()) {
        violations.insert(violations.end(), local.begin(), local.end());
        return std::nullopt;
    }
    try {
        json stripped = node;
        stripped.erase("baseline");
        HawkesParams params = stripped.get<HawkesParams>();
        params.check_shape();
        return params;
    } catch (const std::exception& e) {
        violations.push_back(where + ": " + e.what());
        return std::nullopt;
    }
}

std::optional<std::pair<double, double>> read_range(const json& node, const std::string& where,
                                                    std::vector<std::string>& violations) {
    if (!node.is_array() || node.size() != 2 || !node[0].is_number() || !node[1].is_number()) {
        violations.push_back(where + ": expected [lower, upper]");
        return std::nullopt;
    }
    const double lo = node[0].get<double>();
    const double hi = node[1].get<double>();
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        violations.push_back(where + ": need finite lower < upper");
        return std::nullopt;
    }
    return std::make_pair(lo, hi);
}

std::optional<ThetaBox> read_box(const json* node, const ParamLayout& layout, std::vector<std::string>& violations) {
    if (node == nullptr) {
        return std::nullopt;
    }
    Reader r(*node, "estimation.box", violations);
    r.allow({"mu", "alpha", "beta"});
    const json* mu = r.child("mu");
    const json* alpha = r.child("alpha");
    const json* beta = r.child("beta");
    if (mu == nullptr || alpha == nullptr || beta == nullptr) {
        return std::nullopt;
    }
    const auto alpha_range = read_range(*alpha, "estimation.box.alpha", violations);
    const auto beta_range = read_range(*beta, "estimation.box.beta", violations);
    std::vector<Vector> lower;
    std::vector<Vector> upper;
    const std::size_t d = layout.dim();
    // Either one [lo, hi] for every mu coordinate or, per component, a list of [lo, hi] pairs.
    if (mu->is_array() && mu->size() == 2 && (*mu)[0].is_number()) {
        const auto range = read_range(*mu, "estimation.box.mu", violations);
        if (!range) {
            return std::nullopt;
        }
        for (std::size_t i = 0; i < d; ++i) {
            const auto m = static_cast<Eigen::Index>(layout.mu_dim(i));
            lower.push_back(Vector::Constant(m, range->first));
            upper.push_back(Vector::Constant(m, range->second));
        }
    } else if (mu->is_array() && mu->size() == d) {
        for (std::size_t i = 0; i < d; ++i) {
            const auto& block = (*mu)[i];
            const auto m = layout.mu_dim(i);
            if (!block.is_array() || block.size() != m) {
                violations.push_back("estimation.box.mu[" + std::to_string(i + 1) + "]: expected " +
                                     std::to_string(m) + " [lower, upper] pairs");
                return std::nullopt;
            }
            Vector lo(static_cast<Eigen::Index>(m));
            Vector hi(static_cast<Eigen::Index>(m));
            for (std::size_t k = 0; k < m; ++k) {
                const auto range = read_range(block[k], "estimation.box.mu", violations);
                if (!range) {
                    return std::nullopt;
                }
                lo[static_cast<Eigen::Index>(k)] = range->first;
                hi[static_cast<Eigen::Index>(k)] = range->second;
            }
            lower.push_back(lo);
            upper.push_back(hi);
        }
    } else {
        violations.push_back("estimation.box.mu: expected [lower, upper] or one list of pairs per component");
        return std::nullopt;
    }
    if (!alpha_range || !beta_range) {
        return std::nullopt;
    }
    try {
        return ThetaBox::from_ranges(layout, lower, upper, *alpha_range, *beta_range);
    } catch (const std::exception& e) {
        violations.push_back(std::string("estimation.box: ") + e.what());
        return std::nullopt;
    }
}

void check_envelope_at(const Baseline& baseline, const HawkesParams& params, std::vector<std::string>& violations) {
    for (std::size_t i = 0; i < baseline.components(); ++i) {
        const auto& family = baseline.family(i);
        const auto& mu = params.mu[i];
        if (static_cast<std::size_t>(mu.size()) != family.mu_dim()) {
            violations.push_back("truth.mu[" + std::to_string(i + 1) + "]: family '" + family.name() + "' expects " +
                                 std::to_string(family.mu_dim()) + " coefficients");
            continue;
        }
        const auto envelope = family.envelope({mu.data(), static_cast<std::size_t>(mu.size())});
        if (!(envelope.lower > 0.0)) {
            violations.push_back("truth: baseline of component " + std::to_string(i + 1) +
                                 " is not bounded away from zero (lower envelope " + format_double(envelope.lower) +
                                 ")");
        }
        if (!envelope.bounded() && !family.unchecked()) {
            violations.push_back("truth: baseline of component " + std::to_string(i + 1) +
                                 " has no finite upper envelope; declare the family unchecked to simulate it");
        }
    }
}

TestSide read_side(Reader& r) {
    const auto side = r.get_or<std::string>("side", "two_sided");
    try {
        return test_side_from_string(side);
    } catch (const ValidationError& e) {
        r.fail(e.what());
        return TestSide::two_sided;
    }
}

} // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : ValidationError("invalid configuration:\n  " + join(violations, "\n  ")), violations_(std::move(violations)) {}

bool ExperimentConfig::has_task(const std::string& task) const {
    return std::find(tasks.begin(), tasks.end(), task) != tasks.end();
}

const std::vector<std::string>& known_tasks() {
    static const std::vector<std::string> tasks{"simulate", "fit", "test-coef", "test-equal", "gof", "lln", "clt"};
    return tasks;
}

std::string config_hash(const json& source) {
    char buffer[17];
    std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(fnv1a64(source.dump())));
    return buffer;
}

EstimationSpec parse_estimation(const json& source, std::vector<std::string>& violations) {
    EstimationSpec spec;
    Reader r(source, "estimation", violations);
    r.allow({"baseline", "box", "fit", "fisher", "reference"});
    const auto baseline = read_baseline(r.child("baseline"), "estimation.baseline", violations);
    if (baseline) {
        spec.baseline = *baseline;
        spec.layout = ParamLayout::of(spec.baseline);
        if (auto box = read_box(r.child("box"), spec.layout, violations)) {
            spec.box = *box;
            try {
                spec.box.check_against(spec.layout, spec.baseline);
            } catch (const std::exception& e) {
                violations.push_back(std::string("estimation.box: ") + e.what());
            }
        }
    }
    if (const json* fit = r.child("fit", false)) {
        Reader f(*fit, "estimation.fit", violations);
        f.allow({"starts", "tolerance", "max_iterations"});
        spec.fit.starts = f.get_or<std::size_t>("starts", spec.fit.starts);
        spec.fit.tolerance = f.get_or<double>("tolerance", spec.fit.tolerance);
        spec.fit.max_iterations = f.get_or<std::size_t>("max_iterations", spec.fit.max_iterations);
        if (spec.fit.starts == 0) {
            f.fail("starts must be at least 1");
        }
        if (!(spec.fit.tolerance > 0.0)) {
            f.fail("tolerance must be positive");
        }
    }
    try {
        spec.fisher = fisher_variant_from_string(r.get_or<std::string>("fisher", "outer_product"));
    } catch (const ValidationError& e) {
        r.fail(e.what());
    }
    return spec;
}

std::vector<std::string> validate_config(const json& source) {
    try {
        (void)parse_config(source);
    } catch (const ConfigError& e) {
        return e.violations();
    }
    return {};
}

ExperimentConfig parse_config(const json& source) {
    std::vector<std::string> violations;
    ExperimentConfig config;
    config.source = source;
    config.hash = config_hash(source);

    Reader top(source, "config", violations);
    if (!source.is_object()) {
        throw ConfigError(violations);
    }
    top.allow({"schema_version", "name", "covariate", "truth", "estimation", "horizon", "replicates", "master_seed",
               "tasks", "tests", "asymptotics", "output", "allow_unstable"});
    const auto version = top.get<int>("schema_version");
    if (version && *version != kConfigSchemaVersion) {
        top.fail("unsupported schema_version " + std::to_string(*version) + " (expected " +
                 std::to_string(kConfigSchemaVersion) + ")");
    }
    config.name = top.get_or<std::string>("name", "experiment");
    config.allow_unstable = top.get_or<bool>("allow_unstable", false);

    // Covariate
    if (const json* cov = top.child("covariate")) {
        Reader c(*cov, "covariate", violations);
        c.allow({"model", "xi", "x0", "step"});
        if (const json* model = c.child("model")) {
            config.covariate_model = *model;
            try {
                config.model = make_sde_model(*model);
            } catch (const std::exception& e) {
                c.fail(e.what());
            }
        }
        config.xi = c.get_or<std::vector<double>>("xi", {});
        config.step = c.get_or<double>("step", config.step);
        if (!(config.step > 0.0) || !std::isfinite(config.step)) {
            c.fail("step must be positive, got " + format_double(config.step));
        }
        if (config.model) {
            config.x0 = c.get_or<std::vector<double>>("x0", std::vector<double>(config.model->state_dim(), 0.0));
            if (config.xi.size() != config.model->xi_dim()) {
                c.fail("xi must have " + std::to_string(config.model->xi_dim()) + " entries for model '" +
                       config.model->name() + "'");
            }
            if (config.x0.size() != config.model->state_dim()) {
                c.fail("x0 must have " + std::to_string(config.model->state_dim()) + " entries");
            }
        }
    }

    // Truth
    if (const json* truth = top.child("truth")) {
        const json* baseline_node = truth->is_object() && truth->contains("baseline") ? &truth->at("baseline") : nullptr;
        if (baseline_node == nullptr) {
            violations.push_back("truth: missing key 'baseline'");
        }
        const auto baseline = read_baseline(baseline_node, "truth.baseline", violations);
        const auto params = read_params(*truth, "truth", violations);
        if (baseline && params) {
            config.truth_baseline = *baseline;
            config.truth = *params;
            if (baseline->components() != params->dim()) {
                violations.push_back("truth: baseline lists " + std::to_string(baseline->components()) +
                                     " components but mu has " + std::to_string(params->dim()));
            } else {
                check_envelope_at(*baseline, *params, violations);
                try {
                    const auto stability = is_stable(*params);
                    if (!stability.stable && !config.allow_unstable) {
                        violations.push_back("truth: stability assumption violated, spectral radius of K = alpha/beta is " +
                                             format_double(stability.spectral_radius) + " (must be < 1)");
                    }
                } catch (const std::exception& e) {
                    violations.push_back(std::string("truth: ") + e.what());
                }
            }
            if (config.model) {
                for (std::size_t i = 0; i < baseline->components(); ++i) {
                    const auto want = baseline->family(i).x_dim();
                    if (want != 0 && want != config.model->state_dim()) {
                        violations.push_back("truth.baseline[" + std::to_string(i + 1) + "]: expects a " +
                                             std::to_string(want) + "-dimensional covariate, model has " +
                                             std::to_string(config.model->state_dim()));
                    }
                }
            }
        }
    }

    // Estimation
    if (const json* est = top.child("estimation")) {
        config.estimation = parse_estimation(*est, violations);
        if (config.estimation.baseline.components() != 0 && config.truth.dim() != 0 &&
            config.estimation.baseline.components() != config.truth.dim()) {
            violations.push_back("estimation.baseline: component count differs from truth");
        }
        if (est->is_object() && est->contains("reference")) {
            if (auto ref = read_params(est->at("reference"), "estimation.reference", violations)) {
                try {
                    if (ref->dim() != config.estimation.layout.dim()) {
                        throw ValidationError("component count differs from the estimation baseline");
                    }
                    for (std::size_t i = 0; i < ref->dim(); ++i) {
                        if (static_cast<std::size_t>(ref->mu[i].size()) != config.estimation.layout.mu_dim(i)) {
                            throw ValidationError("mu block " + std::to_string(i + 1) + " has the wrong length");
                        }
                    }
                    config.reference = config.estimation.layout.flatten(*ref);
                } catch (const std::exception& e) {
                    violations.push_back(std::string("estimation.reference: ") + e.what());
                }
            }
        } else if (config.truth.dim() != 0 && config.estimation.layout.dim() == config.truth.dim() &&
                   config.estimation.baseline.descriptor() == config.truth_baseline.descriptor()) {
            config.reference = config.estimation.layout.flatten(config.truth);
        }
    }

    // Run size
    config.horizon = top.get_or<double>("horizon", 0.0);
    if (!(config.horizon > 0.0) || !std::isfinite(config.horizon)) {
        top.fail("horizon must be positive");
    }
    config.replicates = top.get_or<std::size_t>("replicates", 1);
    if (config.replicates == 0) {
        top.fail("replicates must be at least 1");
    }
    config.master_seed = top.get_or<std::uint64_t>("master_seed", 0);

    config.tasks = top.get_or<std::vector<std::string>>("tasks", {});
    if (config.tasks.empty()) {
        top.fail("tasks must list at least one task");
    }
    for (const auto& task : config.tasks) {
        if (std::find(known_tasks().begin(), known_tasks().end(), task) == known_tasks().end()) {
            top.fail("unknown task '" + task + "' (expected one of " + join(known_tasks(), ", ") + ")");
        }
    }

    // Tests
    if (const json* tests = top.child("tests", false)) {
        Reader t(*tests, "tests", violations);
        t.allow({"alpha", "side", "coef", "equal", "subsample_exponent", "correction"});
        auto& settings = config.tests;
        settings.alpha = t.get_or<double>("alpha", settings.alpha);
        if (!(settings.alpha > 0.0 && settings.alpha < 1.0)) {
            t.fail("alpha must lie in (0, 1)");
        }
        settings.side = read_side(t);
        settings.subsample_exponent = t.get_or<double>("subsample_exponent", settings.subsample_exponent);
        if (!(settings.subsample_exponent > 0.0 && settings.subsample_exponent <= 1.0)) {
            t.fail("subsample_exponent must lie in (0, 1]");
        }
        try {
            settings.correction = correction_variant_from_string(t.get_or<std::string>("correction", "inverse_sqrt"));
        } catch (const ValidationError& e) {
            t.fail(e.what());
        }
        auto resolve = [&](const std::string& name) {
            try {
                (void)config.estimation.layout.index_of(name);
            } catch (const std::exception& e) {
                t.fail("coefficient '" + name + "': " + e.what());
            }
        };
        if (const json* coef = t.child("coef", false)) {
            if (!coef->is_array()) {
                t.fail("coef must be an array");
            } else {
                for (const auto& item : *coef) {
                    Reader c(item, "tests.coef", violations);
                    c.allow({"coef", "value"});
                    CoefTest test;
                    test.coef = c.get_or<std::string>("coef", "");
                    if (test.coef.empty()) {
                        c.fail("missing key 'coef'");
                        continue;
                    }
                    resolve(test.coef);
                    if (auto value = c.get<double>("value", false)) {
                        test.value = *value;
                    } else if (config.reference) {
                        try {
                            test.value = (*config.reference)[static_cast<Eigen::Index>(
                                config.estimation.layout.index_of(test.coef))];
                        } catch (const std::exception&) {
                        }
                    } else {
                        c.fail("value is required when the truth is not expressible in the estimation layout");
                    }
                    settings.coef.push_back(test);
                }
            }
        }
        if (const json* equal = t.child("equal", false)) {
            if (!equal->is_array()) {
                t.fail("equal must be an array of [coef_i, coef_j] pairs");
            } else {
                for (const auto& pair : *equal) {
                    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
                        t.fail("equal entries must be [coef_i, coef_j]");
                        continue;
                    }
                    settings.equal.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
                    resolve(settings.equal.back().first);
                    resolve(settings.equal.back().second);
                }
            }
        }
    }
    if (config.has_task("test-coef") && config.tests.coef.empty()) {
        top.fail("task test-coef needs tests.coef");
    }
    if (config.has_task("test-equal") && config.tests.equal.empty()) {
        top.fail("task test-equal needs tests.equal");
    }

    // Asymptotics
    if (const json* asym = top.child("asymptotics", false)) {
        Reader a(*asym, "asymptotics", violations);
        a.allow({"replicates", "horizon", "k", "clt_alpha", "stationary_draws", "burn_in", "stationary_step"});
        auto& s = config.asymptotics;
        s.replicates = a.get_or<std::size_t>("replicates", s.replicates);
        s.horizon = a.get_or<double>("horizon", s.horizon);
        s.k = a.get_or<double>("k", s.k);
        s.clt_alpha = a.get_or<double>("clt_alpha", s.clt_alpha);
        s.stationary.draws = a.get_or<std::size_t>("stationary_draws", s.stationary.draws);
        s.stationary.burn_in = a.get_or<double>("burn_in", s.stationary.burn_in);
        s.stationary.step = a.get_or<double>("stationary_step", s.stationary.step);
        if (s.replicates < 2) {
            a.fail("replicates must be at least 2");
        }
        if (!(s.horizon > 0.0) || !(s.k > 0.0) || !(s.stationary.step > 0.0) || !(s.stationary.burn_in >= 0.0)) {
            a.fail("horizon, k and stationary_step must be positive, burn_in nonnegative");
        }
        if (s.stationary.draws < 2) {
            a.fail("stationary_draws must be at least 2");
        }
    }

    // Output
    if (const json* out = top.child("output", false)) {
        Reader o(*out, "output", violations);
        o.allow({"directory", "replicate_files"});
        config.output_directory = o.get_or<std::string>("directory", "");
        const auto files = o.get_or<std::string>("replicate_files", "first");
        if (files == "none") {
            config.replicate_files = ReplicateFiles::none;
        } else if (files == "first") {
            config.replicate_files = ReplicateFiles::first;
        } else if (files == "all") {
            config.replicate_files = ReplicateFiles::all;
        } else {
            o.fail("replicate_files must be none, first or all");
        }
    }
    if (config.output_directory.empty()) {
        config.output_directory = "out/" + config.name;
    }

    if (!violations.empty()) {
        throw ConfigError(std::move(violations));
    }
    return config;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open config '" + path.string() + "'");
    }
    json source;
    try {
        source = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(source);
}

// ---------------------------------------------------------------------------
// Running

namespace {

std::string replicate_stem(std::size_t index) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "replicate_%04zu", index + 1);
    return buffer;
}

bool write_files_for(const ExperimentConfig& config, std::size_t index) {
    switch (config.replicate_files) {
    case ReplicateFiles::none:
        return false;
    case ReplicateFiles::first:
        return index == 0;
    case ReplicateFiles::all:
        return true;
    }
    return false;
}

std::ofstream open_out(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    return out;
}

void write_json(const fs::path& path, const json& value) {
    auto out = open_out(path);
    out << value.dump(2) << '\n';
}

} // namespace

ReplicateResult run_replicate(const ExperimentConfig& config, std::size_t index, bool keep_files) {
    ReplicateResult result;
    result.index = index;
    keep_files = keep_files && write_files_for(config, index);
    auto emit = [&](fs::path relative, auto&& writer) {
        std::ostringstream out;
        writer(out);
        result.files.emplace_back(std::move(relative), out.str());
    };
    const std::string stem = replicate_stem(index);
    const auto& m = config.master_seed;

    Rng sim_rng = make_stream(substream_key(m, index, "simulate"));
    const auto path = simulate_path(*config.model, config.xi, config.x0, config.horizon, config.step, sim_rng);
    const auto events = thin_simulate(config.truth, config.truth_baseline, path, sim_rng);
    result.n_events = events.size();
    result.counts = events.counts(config.truth.dim());
    if (keep_files && config.has_task("simulate")) {
        emit(fs::path("simulate") / (stem + "_events.csv"), [&](std::ostream& o) { write_events_csv(o, events); });
        emit(fs::path("simulate") / (stem + "_covariate.csv"), [&](std::ostream& o) { write_covariate_csv(o, path); });
    }

    const bool needs_fit =
        config.has_task("fit") || config.has_task("test-coef") || config.has_task("test-equal") || config.has_task("gof");
    if (config.has_task("gof")) {
        // Time change at the true parameters, a reference for the fitted versions below.
        const LikelihoodEvaluator truth_likelihood(config.truth_baseline, path, events);
        const auto raw = time_change_residuals(truth_likelihood, truth_likelihood.layout().flatten(config.truth));
        if (raw.size() >= 2) {
            result.gof_p_truth = ks_exp1(std::span<const double>(raw).subspan(1)).p_value;
        }
    }
    if (!needs_fit) {
        result.ok = true;
        return result;
    }

    const LikelihoodEvaluator likelihood(config.estimation.baseline, path, events);
    FitOptions fit_options = config.estimation.fit;
    fit_options.seed = substream_key(m, index, "fit");
    fit_options.config_hash = config.hash;
    result.fit = fit_mle(likelihood, config.estimation.box, fit_options);
    result.fisher = fisher_estimate(likelihood, result.fit->theta, config.estimation.fisher);
    if (config.reference && result.fisher->condition_number < 1e12) {
        result.standardized = standardize(*result.fit, *result.fisher, *config.reference);
    }
    if (keep_files && config.has_task("fit")) {
        json doc = to_json(*result.fit);
        doc["fisher"] = to_json(*result.fisher);
        emit(fs::path("fit") / (stem + ".json"), [&](std::ostream& o) { o << doc.dump(2) << '\n'; });
    }

    const auto& tests = config.tests;
    if (config.has_task("test-coef")) {
        for (const auto& test : tests.coef) {
            result.coef_tests.push_back(
                wald_one_coef(*result.fit, *result.fisher, test.coef, test.value, tests.alpha, tests.side));
        }
    }
    if (config.has_task("test-equal")) {
        for (const auto& [a, b] : tests.equal) {
            result.equal_tests.push_back(wald_equal(*result.fit, *result.fisher, a, b, tests.alpha, tests.side));
        }
    }
    if (keep_files && (!result.coef_tests.empty() || !result.equal_tests.empty())) {
        json doc = json::array();
        for (const auto& r : result.coef_tests) {
            doc.push_back(to_json(r));
        }
        for (const auto& r : result.equal_tests) {
            doc.push_back(to_json(r));
        }
        emit(fs::path(config.has_task("test-equal") ? "test-equal" : "test-coef") / (stem + ".json"),
             [&](std::ostream& o) { o << doc.dump(2) << '\n'; });
    }

    if (config.has_task("gof")) {
        Rng gof_rng = make_stream(substream_key(m, index, "gof"));
        const auto outer = config.estimation.fisher == FisherVariant::outer_product
                               ? *result.fisher
                               : fisher_outer(likelihood, result.fit->theta);
        CorrectionOptions correction;
        correction.variant = tests.correction;
        const auto residuals = corrected_residuals(likelihood, result.fit->theta, outer, gof_rng, correction);
        GofOptions full{false, tests.subsample_exponent, tests.alpha};
        GofOptions sub{true, tests.subsample_exponent, tests.alpha};
        const auto report_full = gof_corrected_ks(residuals, gof_rng, full);
        const auto report_sub = gof_corrected_ks(residuals, gof_rng, sub);
        result.gof_p_raw = ks_exp1(residuals.raw).p_value;
        result.gof_p_full = report_full.p_value;
        result.gof_p_subsampled = report_sub.p_value;
        result.gof_subsample_size = report_sub.metadata.at("sample_size").get<std::size_t>();
        if (keep_files) {
            emit(fs::path("gof") / (stem + "_residuals.csv"), [&](std::ostream& o) { write_residuals_csv(o, residuals); });
            const json doc = json::array({to_json(report_full), to_json(report_sub)});
            emit(fs::path("gof") / (stem + ".json"), [&](std::ostream& o) { o << doc.dump(2) << '\n'; });
        }
    }
    result.ok = true;
    return result;
}

namespace {

void write_aggregates(const ExperimentConfig& config, const RunSummary& run, const fs::path& dir) {
    const fs::path agg = dir / "aggregate";
    const auto& reps = run.replicates;

    {
        auto out = open_out(agg / "counts.csv");
        out << "replicate,n_events";
        for (std::size_t i = 0; i < config.truth.dim(); ++i) {
            out << ",n" << (i + 1);
        }
        out << '\n';
        for (const auto& r : reps) {
            if (!r.ok) {
                continue;
            }
            out << (r.index + 1) << ',' << r.n_events;
            for (auto c : r.counts) {
                out << ',' << c;
            }
            out << '\n';
        }
    }

    const bool fitted = std::any_of(reps.begin(), reps.end(), [](const auto& r) { return r.fit.has_value(); });
    if (fitted) {
        const auto& layout = config.estimation.layout;
        auto out = open_out(agg / "estimates.csv");
        out << "replicate";
        for (std::size_t k = 0; k < layout.size(); ++k) {
            out << ',' << layout.name(k);
        }
        out << ",loglik,converged,n_iterations,gradient_norm,condition_number\n";
        for (const auto& r : reps) {
            if (!r.fit) {
                continue;
            }
            out << (r.index + 1);
            for (Eigen::Index k = 0; k < r.fit->theta.size(); ++k) {
                out << ',' << format_double(r.fit->theta[k]);
            }
            out << ',' << format_double(r.fit->loglik) << ',' << (r.fit->converged ? 1 : 0) << ','
                << r.fit->n_iterations << ',' << format_double(r.fit->gradient_norm) << ','
                << format_double(r.fisher->condition_number) << '\n';
        }
        if (config.reference) {
            auto z = open_out(agg / "standardized.csv");
            z << "replicate";
            for (std::size_t k = 0; k < layout.size(); ++k) {
                z << ',' << layout.name(k);
            }
            z << '\n';
            for (const auto& r : reps) {
                if (!r.fit || r.standardized.size() == 0) {
                    continue;
                }
                z << (r.index + 1);
                for (Eigen::Index k = 0; k < r.standardized.size(); ++k) {
                    z << ',' << format_double(r.standardized[k]);
                }
                z << '\n';
            }
        }
    }

    auto write_tests = [&](const char* file, auto member) {
        auto out = open_out(agg / file);
        out << "replicate,test,statistic,p_value,reject\n";
        for (const auto& r : reps) {
            for (const auto& t : r.*member) {
                std::string label = t.metadata.contains("coefficient")
                                        ? t.metadata.at("coefficient").template get<std::string>()
                                        : t.metadata.at("coefficient_i").template get<std::string>() + "=" +
                                              t.metadata.at("coefficient_j").template get<std::string>();
                out << (r.index + 1) << ',' << label << ',' << format_double(t.statistic) << ','
                    << format_double(t.p_value) << ',' << (t.reject_at_alpha ? 1 : 0) << '\n';
            }
        }
    };
    if (config.has_task("test-coef")) {
        write_tests("test_coef.csv", &ReplicateResult::coef_tests);
    }
    if (config.has_task("test-equal")) {
        write_tests("test_equal.csv", &ReplicateResult::equal_tests);
    }

    if (config.has_task("gof")) {
        auto out = open_out(agg / "gof_pvalues.csv");
        out << "replicate,n_events,subsample_size,p_truth,p_raw,p_full,p_subsampled\n";
        std::vector<double> full;
        std::vector<double> sub;
        for (const auto& r : reps) {
            if (!r.ok || r.gof_p_full < 0.0) {
                continue;
            }
            out << (r.index + 1) << ',' << r.n_events << ',' << r.gof_subsample_size << ','
                << format_double(r.gof_p_truth) << ',' << format_double(r.gof_p_raw) << ','
                << format_double(r.gof_p_full) << ',' << format_double(r.gof_p_subsampled) << '\n';
            full.push_back(r.gof_p_full);
            sub.push_back(r.gof_p_subsampled);
        }
        auto qf = open_out(agg / "gof_qq_full.csv");
        write_pvalues_csv(qf, full);
        auto qs = open_out(agg / "gof_qq_subsampled.csv");
        write_pvalues_csv(qs, sub);
    }

    if (run.lln) {
        write_json(dir / "lln" / "lln.json", to_json(*run.lln));
    }
    if (run.clt) {
        write_json(dir / "clt" / "clt.json", to_json(*run.clt));
        auto out = open_out(agg / "clt_deviations.csv");
        write_deviations_csv(out, run.clt->deviations);
    }
    write_json(agg / "summary.json", run.summary);
}

json summarize(const ExperimentConfig& config, const RunSummary& run) {
    json summary = json::object();
    summary["replicates"] = run.replicates.size();
    summary["failures"] = run.failures;
    auto rejection_rates = [&](auto member) {
        json rates = json::object();
        std::map<std::string, std::pair<std::size_t, std::size_t>> tally;
        for (const auto& r : run.replicates) {
            for (const auto& t : r.*member) {
                std::string label = t.metadata.contains("coefficient")
                                        ? t.metadata.at("coefficient").template get<std::string>()
                                        : t.metadata.at("coefficient_i").template get<std::string>() + "=" +
                                              t.metadata.at("coefficient_j").template get<std::string>();
                auto& [rejected, total] = tally[label];
                rejected += t.reject_at_alpha ? 1 : 0;
                ++total;
            }
        }
        for (const auto& [label, counts] : tally) {
            rates[label] = {{"rejection_rate", static_cast<double>(counts.first) / static_cast<double>(counts.second)},
                            {"replicates", counts.second}};
        }
        return rates;
    };
    if (config.has_task("test-coef")) {
        summary["test_coef"] = rejection_rates(&ReplicateResult::coef_tests);
    }
    if (config.has_task("test-equal")) {
        summary["test_equal"] = rejection_rates(&ReplicateResult::equal_tests);
    }
    if (config.has_task("gof")) {
        std::vector<double> full;
        std::vector<double> sub;
        for (const auto& r : run.replicates) {
            if (r.ok && r.gof_p_full >= 0.0) {
                full.push_back(r.gof_p_full);
                sub.push_back(r.gof_p_subsampled);
            }
        }
        if (!full.empty()) {
            summary["gof"] = {{"uniformity_p_full", ks_uniform(full).p_value},
                              {"uniformity_p_subsampled", ks_uniform(sub).p_value},
                              {"replicates", full.size()}};
        }
    }
    if (run.lln) {
        summary["lln"] = to_json(*run.lln);
    }
    if (run.clt) {
        summary["clt"] = to_json(run.clt->report);
    }
    return summary;
}

} // namespace

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    RunSummary run;
    run.directory = options.output_directory ? *options.output_directory : fs::path(config.output_directory);
    const fs::path& dir = run.directory;
    fs::create_directories(dir);
    fs::remove(dir / ".failed");

    std::vector<std::size_t> indices;
    if (options.replicate) {
        if (*options.replicate >= config.replicates) {
            throw ValidationError("replicate " + std::to_string(*options.replicate) + " is out of range (config has " +
                                  std::to_string(config.replicates) + ")");
        }
        indices.push_back(*options.replicate);
    } else {
        for (std::size_t r = 0; r < config.replicates; ++r) {
            indices.push_back(r);
        }
    }

    // Manifest first, so a crashed run still records how to reproduce it.
    json manifest = {{"config_hash", config.hash},
                     {"software_version", software_version()},
                     {"schema_version", kConfigSchemaVersion},
                     {"name", config.name},
                     {"master_seed", config.master_seed},
                     {"seed_rule", "key = splitmix64(splitmix64(master ^ splitmix64(replicate + 1)) ^ fnv1a64(task)), "
                                   "replicate 0-based, stream = mt19937_64(key)"},
                     {"tasks", config.tasks},
                     {"config", config.source}};
    json seeds = json::array();
    for (auto r : indices) {
        json entry = {{"replicate", r + 1}};
        for (const char* task : {"simulate", "fit", "gof"}) {
            entry[task] = substream_key(config.master_seed, r, task);
        }
        seeds.push_back(entry);
    }
    manifest["replicates"] = seeds;
    if (config.has_task("lln") || config.has_task("clt")) {
        manifest["asymptotics_seed_tasks"] = {"stationary", "lln", "clt"};
    }
    write_json(dir / "manifest.json", manifest);

    const bool per_replicate = std::any_of(config.tasks.begin(), config.tasks.end(), [](const std::string& t) {
        return t == "simulate" || t == "fit" || t == "test-coef" || t == "test-equal" || t == "gof";
    });
    if (per_replicate) {
        run.replicates.resize(indices.size());
        parallel_for(indices.size(), options.jobs, [&](std::size_t k) {
            const std::size_t r = indices[k];
            try {
                run.replicates[k] = run_replicate(config, r, true);
            } catch (const ValidationError& e) {
                run.replicates[k].index = r;
                run.replicates[k].error = e.what();
                run.replicates[k].error_kind = "validation";
            } catch (const std::exception& e) {
                run.replicates[k].index = r;
                run.replicates[k].error = e.what();
                run.replicates[k].error_kind = "numerical";
            }
            if (!options.quiet) {
                std::cerr << "replicate " << (r + 1) << '/' << config.replicates
                          << (run.replicates[k].ok ? "" : " failed: " + run.replicates[k].error) << '\n';
            }
        });
    }

    for (auto& r : run.replicates) {
        for (const auto& [relative, content] : r.files) {
            auto out = open_out(dir / relative);
            out << content;
        }
        r.files.clear();
    }

    std::vector<json> failures;
    for (const auto& r : run.replicates) {
        if (!r.ok) {
            failures.push_back({{"replicate", r.index + 1}, {"kind", r.error_kind}, {"message", r.error}});
        }
    }

    if (!options.replicate && (config.has_task("lln") || config.has_task("clt"))) {
        try {
            Rng stationary_rng = make_stream(substream_key(config.master_seed, 0, "stationary"));
            const auto target = lln_limit(config.truth, config.truth_baseline, *config.model, config.xi,
                                          config.asymptotics.stationary, stationary_rng);
            ReplicateSpec spec;
            spec.model = config.model.get();
            spec.xi = config.xi;
            spec.x0 = config.x0;
            spec.horizon = config.asymptotics.horizon;
            spec.step = config.step;
            spec.master_seed = config.master_seed;
            spec.replicates = config.asymptotics.replicates;
            spec.jobs = options.jobs;
            if (config.has_task("lln")) {
                run.lln = lln_check(config.truth, config.truth_baseline, spec, target, config.asymptotics.k);
            }
            if (config.has_task("clt")) {
                run.clt = clt_marginal_check(config.truth, config.truth_baseline, spec, target,
                                             config.asymptotics.clt_alpha);
            }
        } catch (const std::exception& e) {
            failures.push_back({{"task", "asymptotics"}, {"kind", "numerical"}, {"message", e.what()}});
        }
    }

    run.failures = failures.size();
    run.summary = summarize(config, run);
    write_aggregates(config, run, dir);
    if (!failures.empty()) {
        write_json(dir / ".failed", {{"config_hash", config.hash}, {"failures", failures}});
    }
    return run;
}

} // namespace hawkes_drift
