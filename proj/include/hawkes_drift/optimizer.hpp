#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include <Eigen/Dense>

namespace hawkes_drift {

using Vector = Eigen::VectorXd;

struct BoxMinimizeOptions {
    /// Converged when the projected-gradient norm is below tolerance * (1 + |f|).
    double tolerance{1e-8};
    std::size_t max_iterations{500};
    double armijo{1e-4};
    std::size_t max_backtracks{50};
    /// Longest first trial step, in units of the box width of each coordinate.
    double max_step_fraction{0.25};
};

struct BoxMinimizeResult {
    Vector x;
    double value{0.0};
    Vector gradient;
    double projected_gradient_norm{0.0};
    std::size_t iterations{0};
    std::size_t evaluations{0};
    bool converged{false};
    std::string status;
};

/// f(x) with its gradient written into the second argument. May throw or return a
/// non-finite value for points where the model is undefined; the line search backs off.
using Objective = std::function<double(const Vector&, Vector&)>;

/// Projected-gradient norm: coordinates pinned at a bound with the gradient pushing outward count as zero.
[[nodiscard]] Vector projected_gradient(const Vector& x, const Vector& gradient, const Vector& lower,
                                        const Vector& upper);

/// Projected BFGS (Bertsekas two-metric scheme): the inverse-Hessian approximation acts on the
/// free coordinates, epsilon-active coordinates take a scaled gradient step, and every trial
/// point is projected onto the box before it is evaluated.
[[nodiscard]] BoxMinimizeResult minimize_in_box(const Objective& objective, const Vector& start,
                                                const Vector& lower, const Vector& upper,
                                                const BoxMinimizeOptions& options = {});

} // namespace hawkes_drift
