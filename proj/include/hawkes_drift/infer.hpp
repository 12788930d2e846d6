#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hawkes_drift/likelihood.hpp"
#include "hawkes_drift/model.hpp"
#include "hawkes_drift/optimizer.hpp"

namespace hawkes_drift {

struct FitOptions {
    /// Box center plus (starts - 1) latin-hypercube draws; with `initial`, it replaces the box center.
    std::size_t starts{5};
    std::optional<Vector> initial;
    std::uint64_t seed{0};
    double tolerance{1e-8};
    std::size_t max_iterations{500};
    std::string config_hash;
};

struct StartTrace {
    Vector start;
    double loglik{0.0};
    std::size_t iterations{0};
    bool converged{false};
    std::string status;
};

struct FitResult {
    HawkesParams theta_hat;
    Vector theta;
    ParamLayout layout;
    double loglik{0.0};
    std::size_t n_iterations{0};
    bool converged{false};
    double gradient_norm{0.0};
    std::vector<std::size_t> active;
    double horizon{0.0};
    std::size_t n_events{0};
    std::uint64_t seed{0};
    std::string config_hash;
    std::vector<StartTrace> starts;
};

/// Multi-start box-constrained maximum likelihood; returns the best local maximum.
/// Throws NumericalError when no start makes progress.
[[nodiscard]] FitResult fit_mle(const LikelihoodEvaluator& likelihood, const ThetaBox& box,
                                const FitOptions& options = {});
[[nodiscard]] FitResult fit_mle(const Baseline& baseline, const CovariatePath& path, const EventSequence& events,
                                const ThetaBox& box, const FitOptions& options = {});

/// n points of a latin hypercube in the box.
[[nodiscard]] std::vector<Vector> latin_hypercube(const ThetaBox& box, std::size_t n, Rng& rng);

enum class FisherVariant { hessian, outer_product };

[[nodiscard]] std::string to_string(FisherVariant variant);
[[nodiscard]] FisherVariant fisher_variant_from_string(const std::string& name);

struct FisherEstimate {
    Matrix matrix;
    FisherVariant variant{FisherVariant::outer_product};
    double condition_number{0.0};
    bool degenerate{false};
    std::string warning;
};

/// -Hessian(ell)/T at theta_hat.
[[nodiscard]] FisherEstimate fisher_hessian(const LikelihoodEvaluator& likelihood, const Vector& theta_hat);
/// (1/T) sum_i sum_{events of i} lambda_i^-2 grad(lambda_i) grad(lambda_i)^T.
[[nodiscard]] FisherEstimate fisher_outer(const LikelihoodEvaluator& likelihood, const Vector& theta_hat);
[[nodiscard]] FisherEstimate fisher_estimate(const LikelihoodEvaluator& likelihood, const Vector& theta_hat,
                                             FisherVariant variant);

[[nodiscard]] FisherEstimate fisher_hessian(const HawkesParams& params_hat, const Baseline& baseline,
                                            const CovariatePath& path, const EventSequence& events);
[[nodiscard]] FisherEstimate fisher_outer(const HawkesParams& params_hat, const Baseline& baseline,
                                          const CovariatePath& path, const EventSequence& events);

/// Symmetric power S^{1/2} or S^{-1/2} by eigendecomposition with eigenvalues floored at 1e-12 * max.
[[nodiscard]] Matrix symmetric_sqrt(const Matrix& s, bool inverse = false);

/// Inverse of the Fisher matrix; NumericalError if its condition number reaches 1e12.
[[nodiscard]] Matrix fisher_inverse(const FisherEstimate& fisher);

/// sqrt(T) I^{1/2} (theta_hat - theta_ref).
[[nodiscard]] Vector standardize(const Vector& theta_hat, const FisherEstimate& fisher, double horizon,
                                 const Vector& theta_ref);
[[nodiscard]] Vector standardize(const FitResult& fit, const FisherEstimate& fisher, const Vector& theta_ref);

[[nodiscard]] nlohmann::json to_json(const FitResult& fit);
[[nodiscard]] nlohmann::json to_json(const FisherEstimate& fisher);

} // namespace hawkes_drift
