#include "hawkes_drift/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hawkes_drift/errors.hpp"
#include "hawkes_drift/io.hpp"
#include "hawkes_drift/parallel.hpp"
#include "hawkes_drift/simulate.hpp"

namespace hawkes_drift {

namespace {

Matrix identity_minus_k(const HawkesParams& params) {
    const auto stability = is_stable(params);
    if (!stability.stable) {
        throw ValidationError("stability condition violated: spectral radius of K is " +
                              std::to_string(stability.spectral_radius) + " (must be < 1)");
    }
    const auto d = static_cast<Eigen::Index>(params.dim());
    return Matrix::Identity(d, d) - branching_matrix(params);
}

} // namespace

Vector lln_limit(const HawkesParams& params, const Vector& mu_bar) {
    if (mu_bar.size() != static_cast<Eigen::Index>(params.dim())) {
        throw ValidationError("lln_limit: mu_bar has the wrong length");
    }
    return identity_minus_k(params).partialPivLu().solve(mu_bar);
}

LlnTarget lln_limit(const HawkesParams& params, const Baseline& baseline, const SdeModel& model,
                    std::span<const double> xi, const StationaryMeanOptions& options, Rng& rng) {
    LlnTarget out;
    out.mu_bar = baseline_stationary_mean(model, xi, baseline, params, options, rng);
    const auto lu = identity_minus_k(params).partialPivLu();
    out.limit = lu.solve(out.mu_bar.mean);
    const Matrix m = lu.inverse();
    const Vector var = out.mu_bar.std_error.array().square();
    out.std_error = (m.array().square().matrix() * var).cwiseSqrt();
    return out;
}

Matrix simulate_counts(const HawkesParams& params, const Baseline& baseline, const ReplicateSpec& spec,
                       const char* task) {
    if (spec.model == nullptr) {
        throw ValidationError("simulate_counts: no covariate model");
    }
    if (!(spec.horizon > 0.0) || !(spec.step > 0.0)) {
        throw ValidationError("simulate_counts: horizon and step must be positive");
    }
    const std::size_t d = params.dim();
    Matrix counts(static_cast<Eigen::Index>(spec.replicates), static_cast<Eigen::Index>(d));
    parallel_for(spec.replicates, spec.jobs, [&](std::size_t r) {
        Rng rng = make_stream(substream_key(spec.master_seed, r, task));
        const auto path = simulate_path(*spec.model, spec.xi, spec.x0, spec.horizon, spec.step, rng);
        const auto events = thin_simulate(params, baseline, path, rng);
        const auto n = events.counts(d);
        for (std::size_t i = 0; i < d; ++i) {
            counts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = static_cast<double>(n[i]);
        }
    });
    return counts;
}

bool LimitCheck::all_pass() const {
    return std::all_of(pass.begin(), pass.end(), [](bool b) { return b; });
}

LimitCheck lln_check_from_counts(const Matrix& counts, double horizon, const LlnTarget& target, double k) {
    const auto r = counts.rows();
    if (r < 2) {
        throw ValidationError("lln_check: at least two replicates are required");
    }
    const Matrix rates = counts / horizon;
    LimitCheck out;
    out.theoretical_limit = target.limit;
    out.empirical_value = rates.colwise().mean().transpose();
    const Matrix centered = rates.rowwise() - out.empirical_value.transpose();
    const Vector var = centered.array().square().colwise().sum().transpose() / static_cast<double>(r - 1);
    out.std_error = (var / static_cast<double>(r) + target.std_error.array().square().matrix()).cwiseSqrt();
    out.k = k;
    out.horizon = horizon;
    out.replicates = static_cast<std::size_t>(r);
    for (Eigen::Index i = 0; i < out.empirical_value.size(); ++i) {
        out.pass.push_back(std::abs(out.empirical_value[i] - out.theoretical_limit[i]) <= k * out.std_error[i]);
    }
    return out;
}

LimitCheck lln_check(const HawkesParams& params, const Baseline& baseline, const ReplicateSpec& spec,
                     const LlnTarget& target, double k) {
    return lln_check_from_counts(simulate_counts(params, baseline, spec, "lln"), spec.horizon, target, k);
}

Matrix clt_covariance(const HawkesParams& params, const Vector& mu_bar) {
    const auto lu = identity_minus_k(params).partialPivLu();
    const Vector limit = lu.solve(mu_bar);
    const Matrix m = lu.inverse();
    return m * limit.asDiagonal() * m.transpose();
}

CltCheck clt_check_from_counts(const HawkesParams& params, const Matrix& counts, double horizon,
                               const LlnTarget& target, double alpha) {
    const auto r = counts.rows();
    if (r < 2) {
        throw ValidationError("clt_marginal_check: at least two replicates are required");
    }
    CltCheck out;
    out.deviations = std::sqrt(horizon) * ((counts / horizon).rowwise() - target.limit.transpose());
    out.target_covariance = clt_covariance(params, target.mu_bar.mean);
    const Vector mean = out.deviations.colwise().mean().transpose();
    const Matrix centered = out.deviations.rowwise() - mean.transpose();
    out.empirical_covariance = centered.transpose() * centered / static_cast<double>(r - 1);
    out.frobenius_gap = (out.empirical_covariance - out.target_covariance).norm() / out.target_covariance.norm();

    const auto d = out.deviations.cols();
    double min_p = 1.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        std::vector<double> column(static_cast<std::size_t>(r));
        for (Eigen::Index k = 0; k < r; ++k) {
            column[static_cast<std::size_t>(k)] = out.deviations(k, i);
        }
        const auto ks = ks_normal(column, 0.0, std::sqrt(out.target_covariance(i, i)));
        TestReport marginal;
        marginal.name = "clt_marginal_ks";
        marginal.statistic = ks.statistic;
        marginal.p_value = ks.p_value;
        marginal.alpha = alpha;
        marginal.reject_at_alpha = ks.p_value < alpha;
        marginal.metadata = {{"component", i + 1},
                             {"target_variance", out.target_covariance(i, i)},
                             {"empirical_variance", out.empirical_covariance(i, i)},
                             {"replicates", r},
                             {"T", horizon}};
        min_p = std::min(min_p, ks.p_value);
        out.marginals.push_back(std::move(marginal));
    }
    out.report.name = "clt_marginal_check";
    out.report.statistic = out.frobenius_gap;
    out.report.p_value = std::min(1.0, static_cast<double>(d) * min_p);
    out.report.alpha = alpha;
    out.report.reject_at_alpha = out.report.p_value < alpha;
    out.report.metadata = {{"T", horizon},
                           {"replicates", r},
                           {"frobenius_gap", out.frobenius_gap},
                           {"combination", "bonferroni"}};
    return out;
}

CltCheck clt_marginal_check(const HawkesParams& params, const Baseline& baseline, const ReplicateSpec& spec,
                            const LlnTarget& target, double alpha) {
    return clt_check_from_counts(params, simulate_counts(params, baseline, spec, "clt"), spec.horizon, target, alpha);
}

nlohmann::json to_json(const LimitCheck& check) {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"theoretical_limit", vec(check.theoretical_limit)},
            {"empirical_value", vec(check.empirical_value)},
            {"std_error", vec(check.std_error)},
            {"pass", check.pass},
            {"k", check.k},
            {"T", check.horizon},
            {"replicates", check.replicates}};
}

nlohmann::json to_json(const CltCheck& check) {
    nlohmann::json marginals = nlohmann::json::array();
    for (const auto& m : check.marginals) {
        marginals.push_back(to_json(m));
    }
    return {{"target_covariance", matrix_to_json(check.target_covariance)},
            {"empirical_covariance", matrix_to_json(check.empirical_covariance)},
            {"frobenius_gap", check.frobenius_gap},
            {"marginals", marginals},
            {"report", to_json(check.report)}};
}

void write_deviations_csv(std::ostream& out, const Matrix& deviations) {
    out << "replicate";
    for (Eigen::Index i = 0; i < deviations.cols(); ++i) {
        out << ",z" << (i + 1);
    }
    out << '\n';
    for (Eigen::Index r = 0; r < deviations.rows(); ++r) {
        out << (r + 1);
        for (Eigen::Index i = 0; i < deviations.cols(); ++i) {
            out << ',' << format_double(deviations(r, i));
        }
        out << '\n';
    }
}

} // namespace hawkes_drift
