#include "hawkes_drift/stattest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <boost/math/distributions/normal.hpp>

#include "hawkes_drift/errors.hpp"
#include "hawkes_drift/io.hpp"

namespace hawkes_drift {

std::string to_string(TestSide side) {
    switch (side) {
    case TestSide::two_sided:
        return "two_sided";
    case TestSide::greater:
        return "greater";
    case TestSide::less:
        return "less";
    }
    return "two_sided";
}

TestSide test_side_from_string(const std::string& name) {
    if (name == "two_sided" || name == "two-sided") {
        return TestSide::two_sided;
    }
    if (name == "greater") {
        return TestSide::greater;
    }
    if (name == "less") {
        return TestSide::less;
    }
    throw ValidationError("unknown test side '" + name + "' (expected two_sided, greater or less)");
}

nlohmann::json to_json(const TestReport& report) {
    return {{"name", report.name},         {"statistic", report.statistic},
            {"p_value", report.p_value},   {"reject_at_alpha", report.reject_at_alpha},
            {"alpha", report.alpha},       {"side", to_string(report.side)},
            {"metadata", report.metadata}};
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ValidationError("normal_quantile: probability must lie in (0, 1)");
    }
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double normal_p_value(double z, TestSide side) {
    switch (side) {
    case TestSide::two_sided:
        return std::erfc(std::abs(z) / std::numbers::sqrt2);
    case TestSide::greater:
        return 0.5 * std::erfc(z / std::numbers::sqrt2);
    case TestSide::less:
        return 0.5 * std::erfc(-z / std::numbers::sqrt2);
    }
    return 1.0;
}

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ValidationError("alpha must lie in (0, 1)");
    }
}

TestReport wald_report(std::string name, double z, double alpha, TestSide side, double horizon) {
    TestReport report;
    report.name = std::move(name);
    report.statistic = z;
    report.p_value = normal_p_value(z, side);
    report.alpha = alpha;
    report.side = side;
    report.reject_at_alpha = report.p_value < alpha;
    report.metadata["T"] = horizon;
    report.metadata["reference"] = "N(0,1)";
    return report;
}

} // namespace

TestReport wald_one_coef(const Vector& theta_hat, const FisherEstimate& fisher, double horizon, std::size_t index,
                         double theta0, double alpha, TestSide side) {
    check_alpha(alpha);
    const auto k = static_cast<Eigen::Index>(index);
    if (k >= theta_hat.size()) {
        throw ValidationError("wald_one_coef: coefficient index out of range");
    }
    const Matrix inv = fisher_inverse(fisher);
    const double variance = inv(k, k);
    if (!(variance > 0.0)) {
        throw NumericalError("wald_one_coef: nonpositive variance estimate");
    }
    const double z = std::sqrt(horizon) * (theta_hat[k] - theta0) / std::sqrt(variance);
    auto report = wald_report("wald_one_coef", z, alpha, side, horizon);
    report.metadata["index"] = index;
    report.metadata["theta0"] = theta0;
    report.metadata["estimate"] = theta_hat[k];
    report.metadata["std_error"] = std::sqrt(variance / horizon);
    report.metadata["fisher_variant"] = to_string(fisher.variant);
    return report;
}

TestReport wald_one_coef(const FitResult& fit, const FisherEstimate& fisher, const std::string& coef, double theta0,
                         double alpha, TestSide side) {
    auto report = wald_one_coef(fit.theta, fisher, fit.horizon, fit.layout.index_of(coef), theta0, alpha, side);
    report.metadata["coefficient"] = coef;
    report.metadata["n_events"] = fit.n_events;
    return report;
}

TestReport wald_equal(const Vector& theta_hat, const FisherEstimate& fisher, double horizon, std::size_t index_i,
                      std::size_t index_j, double alpha, TestSide side) {
    check_alpha(alpha);
    const auto i = static_cast<Eigen::Index>(index_i);
    const auto j = static_cast<Eigen::Index>(index_j);
    if (i >= theta_hat.size() || j >= theta_hat.size()) {
        throw ValidationError("wald_equal: coefficient index out of range");
    }
    if (i == j) {
        throw ValidationError("wald_equal: the two coefficients must differ");
    }
    const Matrix inv = fisher_inverse(fisher);
    const double variance = inv(i, i) - 2.0 * inv(i, j) + inv(j, j);
    if (!(variance > 0.0)) {
        throw NumericalError("wald_equal: nonpositive variance estimate for the difference");
    }
    const double z = std::sqrt(horizon) * (theta_hat[i] - theta_hat[j]) / std::sqrt(variance);
    auto report = wald_report("wald_equal", z, alpha, side, horizon);
    report.metadata["index_i"] = index_i;
    report.metadata["index_j"] = index_j;
    report.metadata["difference"] = theta_hat[i] - theta_hat[j];
    report.metadata["std_error"] = std::sqrt(variance / horizon);
    report.metadata["fisher_variant"] = to_string(fisher.variant);
    return report;
}

TestReport wald_equal(const FitResult& fit, const FisherEstimate& fisher, const std::string& coef_i,
                      const std::string& coef_j, double alpha, TestSide side) {
    auto report = wald_equal(fit.theta, fisher, fit.horizon, fit.layout.index_of(coef_i), fit.layout.index_of(coef_j),
                             alpha, side);
    report.metadata["coefficient_i"] = coef_i;
    report.metadata["coefficient_j"] = coef_j;
    report.metadata["n_events"] = fit.n_events;
    return report;
}

// ---------------------------------------------------------------------------
// Residuals

std::vector<double> time_change_residuals(const LikelihoodEvaluator& likelihood, const Vector& theta) {
    const auto total = likelihood.total_compensator_at_events(theta);
    std::vector<double> out(total.size());
    double previous = 0.0;
    for (std::size_t k = 0; k < total.size(); ++k) {
        out[k] = total[k] - previous;
        previous = total[k];
    }
    return out;
}

std::vector<double> time_change_residuals(const HawkesParams& params, const Baseline& baseline,
                                          const CovariatePath& path, const EventSequence& events) {
    const LikelihoodEvaluator likelihood(baseline, path, events);
    return time_change_residuals(likelihood, likelihood.layout().flatten(params));
}

std::string to_string(CorrectionVariant variant) {
    return variant == CorrectionVariant::inverse_sqrt ? "inverse_sqrt" : "direct";
}

CorrectionVariant correction_variant_from_string(const std::string& name) {
    if (name == "inverse_sqrt") {
        return CorrectionVariant::inverse_sqrt;
    }
    if (name == "direct") {
        return CorrectionVariant::direct;
    }
    throw ValidationError("unknown correction variant '" + name + "' (expected inverse_sqrt or direct)");
}

ResidualSet corrected_residuals(const LikelihoodEvaluator& likelihood, const Vector& theta_hat,
                                const FisherEstimate& fisher, Rng& rng, const CorrectionOptions& options) {
    const auto& events = likelihood.events();
    if (events.size() < 2) {
        throw ValidationError("corrected_residuals: at least two events are required");
    }
    const auto p = theta_hat.size();
    if (fisher.matrix.rows() != p) {
        throw ValidationError("corrected_residuals: Fisher matrix does not match the parameter dimension");
    }
    if (!(fisher.condition_number < 1e12)) {
        throw NumericalError("corrected_residuals: Fisher information is singular (condition number " +
                             std::to_string(fisher.condition_number) + ")");
    }

    ResidualSet out;
    out.variant = options.variant;
    out.horizon = likelihood.horizon();
    if (options.forced_gaussian) {
        if (options.forced_gaussian->size() != p) {
            throw ValidationError("corrected_residuals: forced gaussian has the wrong dimension");
        }
        out.gaussian = *options.forced_gaussian;
    } else {
        std::normal_distribution<double> normal(0.0, 1.0);
        out.gaussian.resize(p);
        for (Eigen::Index k = 0; k < p; ++k) {
            out.gaussian[k] = normal(rng);
        }
    }

    out.rho = likelihood.total_compensator_gradient(theta_hat) / out.horizon;
    const Matrix weight = options.variant == CorrectionVariant::inverse_sqrt ? symmetric_sqrt(fisher.matrix, true)
                                                                             : fisher.matrix;
    out.slope = out.rho.dot(weight * out.gaussian);

    const auto increments = time_change_residuals(likelihood, theta_hat);
    const double scale = 1.0 / std::sqrt(out.horizon);
    const std::size_t n = events.size();
    out.raw.reserve(n - 1);
    out.correction.reserve(n - 1);
    out.values.reserve(n - 1);
    for (std::size_t k = 1; k < n; ++k) {
        const double raw = increments[k];
        const double correction = scale * (events.times[k] - events.times[k - 1]) * out.slope;
        out.raw.push_back(raw);
        out.correction.push_back(correction);
        out.values.push_back(raw + correction);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

double kolmogorov_survival(double lambda) {
    if (!(lambda > 0.0)) {
        return 1.0;
    }
    constexpr double pi = std::numbers::pi;
    if (lambda < 1.0) {
        // Jacobi theta form of the cdf, fast for small lambda.
        double cdf = 0.0;
        const double c = pi * pi / (8.0 * lambda * lambda);
        for (int k = 1; k <= 50; ++k) {
            const double m = 2.0 * k - 1.0;
            const double term = std::exp(-m * m * c);
            cdf += term;
            if (k >= 10 && term < 1e-300) {
                break;
            }
        }
        cdf *= std::sqrt(2.0 * pi) / lambda;
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (k >= 10 && term < 1e-300) {
            break;
        }
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) {
        throw ValidationError("ks_test: sample is empty");
    }
    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        const double f = cdf(sorted[k]);
        d = std::max(d, std::max(static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n));
    }
    return {d, kolmogorov_survival(std::sqrt(n) * d), sorted.size()};
}

KsResult ks_exp1(std::span<const double> sample) {
    for (std::size_t k = 0; k < sample.size(); ++k) {
        if (!(sample[k] > 0.0)) {
            throw ValidationError("ks_exp1: entry " + std::to_string(k) + " is not positive");
        }
    }
    return ks_test(sample, [](double x) { return -std::expm1(-x); });
}

KsResult ks_normal(std::span<const double> sample, double mean, double sd) {
    if (!(sd > 0.0)) {
        throw ValidationError("ks_normal: sd must be positive");
    }
    return ks_test(sample, [mean, sd](double x) { return normal_cdf((x - mean) / sd); });
}

KsResult ks_uniform(std::span<const double> sample) {
    return ks_test(sample, [](double x) { return std::clamp(x, 0.0, 1.0); });
}

std::size_t subsample_size(std::size_t n, double exponent) {
    if (!(exponent > 0.0 && exponent <= 1.0)) {
        throw ValidationError("subsample exponent must lie in (0, 1]");
    }
    auto k = static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), exponent)));
    if (exponent == 2.0 / 3.0) {
        const auto n2 = static_cast<unsigned __int128>(n) * n;
        auto cube = [](std::size_t v) { return static_cast<unsigned __int128>(v) * v * v; };
        while (cube(k + 1) <= n2) {
            ++k;
        }
        while (k > 0 && cube(k) > n2) {
            --k;
        }
    }
    return std::min(k, n);
}

TestReport gof_corrected_ks(const ResidualSet& residuals, Rng& rng, const GofOptions& options) {
    check_alpha(options.alpha);
    const std::size_t n = residuals.values.size();
    if (n < 10) {
        throw ValidationError("gof_corrected_ks: at least 10 residuals are required, got " + std::to_string(n));
    }
    std::vector<double> sample;
    if (options.subsample) {
        const std::size_t m = subsample_size(n, options.exponent);
        std::vector<std::size_t> index(n);
        for (std::size_t k = 0; k < n; ++k) {
            index[k] = k;
        }
        for (std::size_t k = 0; k < m; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, n - 1);
            std::swap(index[k], index[pick(rng)]);
        }
        sample.reserve(m);
        for (std::size_t k = 0; k < m; ++k) {
            sample.push_back(residuals.values[index[k]]);
        }
    } else {
        sample = residuals.values;
    }
    const auto ks = ks_test(sample, [](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-x); });

    TestReport report;
    report.name = options.subsample ? "gof_corrected_ks_subsampled" : "gof_corrected_ks_full";
    report.statistic = ks.statistic;
    report.p_value = ks.p_value;
    report.alpha = options.alpha;
    report.reject_at_alpha = ks.p_value < options.alpha;
    report.metadata["T"] = residuals.horizon;
    report.metadata["n_residuals"] = n;
    report.metadata["sample_size"] = ks.n;
    report.metadata["subsample_exponent"] = options.subsample ? nlohmann::json(options.exponent) : nlohmann::json();
    report.metadata["correction"] = to_string(residuals.variant);
    report.metadata["reference"] = "Exp(1)";
    return report;
}

void write_residuals_csv(std::ostream& out, const ResidualSet& residuals) {
    out << "i,e_raw,e_corrected\n";
    for (std::size_t k = 0; k < residuals.values.size(); ++k) {
        out << (k + 1) << ',' << format_double(residuals.raw[k]) << ',' << format_double(residuals.values[k]) << '\n';
    }
}

void write_pvalues_csv(std::ostream& out, std::span<const double> p_values) {
    std::vector<double> sorted(p_values.begin(), p_values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    out << "i,p_value,uniform_quantile\n";
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        out << (k + 1) << ',' << format_double(sorted[k]) << ','
            << format_double((static_cast<double>(k) + 0.5) / n) << '\n';
    }
}

} // namespace hawkes_drift
