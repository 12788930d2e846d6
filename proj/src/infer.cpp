#include "hawkes_drift/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "hawkes_drift/errors.hpp"

namespace hawkes_drift {

namespace {

constexpr double kMaxCondition = 1e12;

double condition_of(const Matrix& s) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()), Eigen::EigenvaluesOnly);
    const auto values = eig.eigenvalues().cwiseAbs();
    const double lo = values.minCoeff();
    const double hi = values.maxCoeff();
    if (hi == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    if (eig.eigenvalues().minCoeff() <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return hi / lo;
}

} // namespace

std::vector<Vector> latin_hypercube(const ThetaBox& box, std::size_t n, Rng& rng) {
    const auto p = static_cast<Eigen::Index>(box.size());
    std::vector<Vector> points(n, Vector(p));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<std::size_t> strata(n);
    for (Eigen::Index k = 0; k < p; ++k) {
        std::iota(strata.begin(), strata.end(), std::size_t{0});
        std::shuffle(strata.begin(), strata.end(), rng);
        const double lo = box.lower()[k];
        const double width = box.upper()[k] - lo;
        for (std::size_t r = 0; r < n; ++r) {
            const double u = (static_cast<double>(strata[r]) + uniform(rng)) / static_cast<double>(n);
            points[r][k] = lo + u * width;
        }
    }
    return points;
}

FitResult fit_mle(const LikelihoodEvaluator& likelihood, const ThetaBox& box, const FitOptions& options) {
    const auto& layout = likelihood.layout();
    if (box.size() != layout.size()) {
        throw ValidationError("fit_mle: box has " + std::to_string(box.size()) + " coordinates, model has " +
                              std::to_string(layout.size()));
    }
    if (likelihood.events().empty()) {
        throw ValidationError("fit_mle: at least one event is required");
    }
    if (options.starts == 0) {
        throw ValidationError("fit_mle: at least one start is required");
    }

    std::vector<Vector> starts;
    starts.push_back(options.initial ? box.project(*options.initial) : box.center());
    if (options.starts > 1) {
        Rng rng(options.seed);
        auto lhs = latin_hypercube(box, options.starts - 1, rng);
        starts.insert(starts.end(), lhs.begin(), lhs.end());
    }

    const Objective objective = [&](const Vector& theta, Vector& grad) {
        const double value = -likelihood.value_and_gradient(theta, grad);
        grad = -grad;
        return value;
    };

    BoxMinimizeOptions opt;
    opt.tolerance = options.tolerance;
    opt.max_iterations = options.max_iterations;

    FitResult best;
    best.loglik = -std::numeric_limits<double>::infinity();
    std::vector<StartTrace> traces;
    bool any_progress = false;
    for (const auto& start : starts) {
        const auto run = minimize_in_box(objective, start, box.lower(), box.upper(), opt);
        StartTrace trace{start, -run.value, run.iterations, run.converged, run.status};
        traces.push_back(trace);
        if (!std::isfinite(run.value) || (run.iterations == 0 && !run.converged)) {
            continue;
        }
        any_progress = true;
        const double loglik = -run.value;
        // Prefer converged runs; among equals, the higher likelihood.
        const bool better = !std::isfinite(best.loglik) || (run.converged && !best.converged) ||
                            (run.converged == best.converged && loglik > best.loglik);
        if (better) {
            best.theta = run.x;
            best.loglik = loglik;
            best.n_iterations = run.iterations;
            best.converged = run.converged;
            best.gradient_norm = run.projected_gradient_norm;
        }
    }
    if (!any_progress) {
        std::string trace_text;
        for (std::size_t s = 0; s < traces.size(); ++s) {
            trace_text += "\n  start " + std::to_string(s) + ": " + traces[s].status;
        }
        throw NumericalError("fit_mle: every start failed" + trace_text);
    }

    best.layout = layout;
    best.theta_hat = layout.unflatten(best.theta);
    best.horizon = likelihood.horizon();
    best.n_events = likelihood.events().size();
    best.seed = options.seed;
    best.config_hash = options.config_hash;
    best.starts = std::move(traces);
    for (Eigen::Index k = 0; k < best.theta.size(); ++k) {
        if (best.theta[k] <= box.lower()[k] || best.theta[k] >= box.upper()[k]) {
            best.active.push_back(static_cast<std::size_t>(k));
        }
    }
    return best;
}

FitResult fit_mle(const Baseline& baseline, const CovariatePath& path, const EventSequence& events,
                  const ThetaBox& box, const FitOptions& options) {
    const LikelihoodEvaluator likelihood(baseline, path, events);
    return fit_mle(likelihood, box, options);
}

// ---------------------------------------------------------------------------
// Fisher information

std::string to_string(FisherVariant variant) {
    return variant == FisherVariant::hessian ? "hessian" : "outer_product";
}

FisherVariant fisher_variant_from_string(const std::string& name) {
    if (name == "hessian") {
        return FisherVariant::hessian;
    }
    if (name == "outer_product" || name == "outer") {
        return FisherVariant::outer_product;
    }
    throw ValidationError("unknown Fisher variant '" + name + "' (expected hessian or outer_product)");
}

FisherEstimate fisher_hessian(const LikelihoodEvaluator& likelihood, const Vector& theta_hat) {
    Vector grad;
    Matrix hess;
    likelihood.value_gradient_hessian(theta_hat, grad, hess);
    FisherEstimate out;
    out.variant = FisherVariant::hessian;
    out.matrix = -hess / likelihood.horizon();
    out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
    out.condition_number = condition_of(out.matrix);
    if (likelihood.events().empty()) {
        out.degenerate = true;
        out.warning = "no events: the Fisher information is degenerate";
    }
    return out;
}

FisherEstimate fisher_outer(const LikelihoodEvaluator& likelihood, const Vector& theta_hat) {
    FisherEstimate out;
    out.variant = FisherVariant::outer_product;
    out.matrix = likelihood.outer_product_sum(theta_hat) / likelihood.horizon();
    out.condition_number = condition_of(out.matrix);
    if (likelihood.events().empty()) {
        out.degenerate = true;
        out.warning = "no events: the outer-product Fisher estimate is the zero matrix";
    }
    return out;
}

FisherEstimate fisher_estimate(const LikelihoodEvaluator& likelihood, const Vector& theta_hat,
                               FisherVariant variant) {
    return variant == FisherVariant::hessian ? fisher_hessian(likelihood, theta_hat)
                                             : fisher_outer(likelihood, theta_hat);
}

FisherEstimate fisher_hessian(const HawkesParams& params_hat, const Baseline& baseline, const CovariatePath& path,
                              const EventSequence& events) {
    const LikelihoodEvaluator likelihood(baseline, path, events);
    return fisher_hessian(likelihood, likelihood.layout().flatten(params_hat));
}

FisherEstimate fisher_outer(const HawkesParams& params_hat, const Baseline& baseline, const CovariatePath& path,
                            const EventSequence& events) {
    const LikelihoodEvaluator likelihood(baseline, path, events);
    return fisher_outer(likelihood, likelihood.layout().flatten(params_hat));
}

Matrix symmetric_sqrt(const Matrix& s, bool inverse) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()));
    if (eig.info() != Eigen::Success) {
        throw NumericalError("symmetric_sqrt: eigendecomposition failed");
    }
    Vector values = eig.eigenvalues();
    const double floor = 1e-12 * std::max(values.maxCoeff(), 0.0);
    for (Eigen::Index k = 0; k < values.size(); ++k) {
        const double v = std::max(values[k], floor);
        if (inverse && !(v > 0.0)) {
            throw NumericalError("symmetric_sqrt: matrix is singular");
        }
        values[k] = inverse ? 1.0 / std::sqrt(v) : std::sqrt(v);
    }
    return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix fisher_inverse(const FisherEstimate& fisher) {
    if (!(fisher.condition_number < kMaxCondition)) {
        throw NumericalError("Fisher information is singular or ill-conditioned (condition number " +
                             std::to_string(fisher.condition_number) +
                             "); review the model parameterization and identifiability");
    }
    return fisher.matrix.ldlt().solve(Matrix::Identity(fisher.matrix.rows(), fisher.matrix.cols()));
}

Vector standardize(const Vector& theta_hat, const FisherEstimate& fisher, double horizon, const Vector& theta_ref) {
    if (!(fisher.condition_number < kMaxCondition)) {
        throw NumericalError("standardize: Fisher information is singular (condition number " +
                             std::to_string(fisher.condition_number) +
                             "); review the model parameterization and identifiability");
    }
    if (theta_hat.size() != fisher.matrix.rows() || theta_ref.size() != theta_hat.size()) {
        throw ValidationError("standardize: dimension mismatch");
    }
    return std::sqrt(horizon) * (symmetric_sqrt(fisher.matrix) * (theta_hat - theta_ref));
}

Vector standardize(const FitResult& fit, const FisherEstimate& fisher, const Vector& theta_ref) {
    return standardize(fit.theta, fisher, fit.horizon, theta_ref);
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const FitResult& fit) {
    nlohmann::json theta_named = nlohmann::json::object();
    for (Eigen::Index k = 0; k < fit.theta.size(); ++k) {
        theta_named[fit.layout.name(static_cast<std::size_t>(k))] = fit.theta[k];
    }
    nlohmann::json active = nlohmann::json::array();
    for (auto k : fit.active) {
        active.push_back(fit.layout.name(k));
    }
    nlohmann::json starts = nlohmann::json::array();
    for (const auto& s : fit.starts) {
        starts.push_back({{"start", std::vector<double>(s.start.data(), s.start.data() + s.start.size())},
                          {"loglik", std::isfinite(s.loglik) ? nlohmann::json(s.loglik) : nlohmann::json(nullptr)},
                          {"iterations", s.iterations},
                          {"converged", s.converged},
                          {"status", s.status}});
    }
    nlohmann::json params;
    to_json(params, fit.theta_hat);
    return {{"theta_hat", params},
            {"theta", theta_named},
            {"loglik", fit.loglik},
            {"n_iterations", fit.n_iterations},
            {"converged", fit.converged},
            {"gradient_norm", fit.gradient_norm},
            {"active_constraints", active},
            {"horizon", fit.horizon},
            {"n_events", fit.n_events},
            {"provenance", {{"multistart_seed", fit.seed}, {"config_hash", fit.config_hash}}},
            {"starts", starts}};
}

nlohmann::json to_json(const FisherEstimate& fisher) {
    return {{"variant", to_string(fisher.variant)},
            {"matrix", matrix_to_json(fisher.matrix)},
            {"condition_number",
             std::isfinite(fisher.condition_number) ? nlohmann::json(fisher.condition_number) : nlohmann::json(nullptr)},
            {"degenerate", fisher.degenerate},
            {"warning", fisher.warning}};
}

} // namespace hawkes_drift
