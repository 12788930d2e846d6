#include "hawkes_drift/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hawkes_drift/errors.hpp"

namespace hawkes_drift {

Vector projected_gradient(const Vector& x, const Vector& gradient, const Vector& lower, const Vector& upper) {
    Vector pg = gradient;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if ((x[i] <= lower[i] && gradient[i] > 0.0) || (x[i] >= upper[i] && gradient[i] < 0.0)) {
            pg[i] = 0.0;
        }
    }
    return pg;
}

namespace {

using Matrix = Eigen::MatrixXd;

struct Evaluation {
    double value{std::numeric_limits<double>::infinity()};
    Vector gradient;
};

Evaluation evaluate(const Objective& objective, const Vector& x, std::size_t& counter) {
    ++counter;
    Evaluation out;
    out.gradient.resize(x.size());
    try {
        out.value = objective(x, out.gradient);
    } catch (const ValidationError&) {
        out.value = std::numeric_limits<double>::infinity();
    } catch (const ContractError&) {
        out.value = std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
        out.value = std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(out.value) || !out.gradient.allFinite()) {
        out.value = std::numeric_limits<double>::infinity();
    }
    return out;
}

} // namespace

BoxMinimizeResult minimize_in_box(const Objective& objective, const Vector& start, const Vector& lower,
                                  const Vector& upper, const BoxMinimizeOptions& options) {
    const Eigen::Index n = start.size();
    if (lower.size() != n || upper.size() != n || n == 0) {
        throw ValidationError("minimize_in_box: start and bounds must have the same nonzero length");
    }
    const Vector width = upper - lower;
    if ((width.array() <= 0.0).any()) {
        throw ValidationError("minimize_in_box: need lower < upper");
    }
    auto project = [&](const Vector& v) -> Vector { return v.cwiseMax(lower).cwiseMin(upper); };

    BoxMinimizeResult result;
    result.x = project(start);
    auto current = evaluate(objective, result.x, result.evaluations);
    if (!std::isfinite(current.value)) {
        result.value = current.value;
        result.gradient = Vector::Zero(n);
        result.projected_gradient_norm = std::numeric_limits<double>::infinity();
        result.status = "objective not finite at the start point";
        return result;
    }

    std::vector<double> sorted_width(width.data(), width.data() + n);
    std::nth_element(sorted_width.begin(), sorted_width.begin() + n / 2, sorted_width.end());
    const double typical_width = sorted_width[static_cast<std::size_t>(n / 2)];
    const double g_inf = std::max(current.gradient.cwiseAbs().maxCoeff(), 1e-300);
    const double gamma0 = options.max_step_fraction * typical_width / g_inf;

    Matrix H = gamma0 * Matrix::Identity(n, n);
    bool h_is_scaled_identity = true;
    double gamma = gamma0;
    std::size_t stalled = 0;

    for (result.iterations = 0; result.iterations < options.max_iterations; ++result.iterations) {
        const Vector pg = projected_gradient(result.x, current.gradient, lower, upper);
        result.projected_gradient_norm = pg.norm();
        if (result.projected_gradient_norm <= options.tolerance * (1.0 + std::abs(current.value))) {
            result.converged = true;
            result.status = "converged";
            break;
        }

        // Epsilon-active set: near a bound with the gradient pushing outward.
        const double eps_scale = (result.x - project(result.x - current.gradient)).norm();
        std::vector<bool> active(static_cast<std::size_t>(n), false);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double eps = std::min(1e-6 * width[i], eps_scale);
            active[static_cast<std::size_t>(i)] =
                (result.x[i] - lower[i] <= eps && current.gradient[i] > 0.0) ||
                (upper[i] - result.x[i] <= eps && current.gradient[i] < 0.0);
        }

        auto direction_from = [&](const Matrix& h) {
            Vector d = Vector::Zero(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (active[static_cast<std::size_t>(i)]) {
                    d[i] = -std::max(h(i, i), 0.0) * current.gradient[i];
                    continue;
                }
                double s = 0.0;
                for (Eigen::Index j = 0; j < n; ++j) {
                    if (!active[static_cast<std::size_t>(j)]) {
                        s += h(i, j) * current.gradient[j];
                    }
                }
                d[i] = -s;
            }
            return d;
        };

        Vector d = direction_from(H);
        if (!(current.gradient.dot(d) < 0.0)) {
            H = gamma * Matrix::Identity(n, n);
            h_is_scaled_identity = true;
            d = direction_from(H);
        }

        bool accepted = false;
        Vector x_new;
        Evaluation next;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double t = 1.0;
            for (std::size_t bt = 0; bt < options.max_backtracks; ++bt, t *= 0.5) {
                x_new = project(result.x + t * d);
                const Vector step = x_new - result.x;
                if (step.cwiseAbs().maxCoeff() == 0.0) {
                    break;
                }
                next = evaluate(objective, x_new, result.evaluations);
                if (std::isfinite(next.value) &&
                    next.value <= current.value + options.armijo * current.gradient.dot(step)) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted && !h_is_scaled_identity) {
                H = gamma * Matrix::Identity(n, n);
                h_is_scaled_identity = true;
                d = direction_from(H);
            } else {
                break;
            }
        }
        if (!accepted) {
            result.status = "line search failed";
            break;
        }

        const Vector s = x_new - result.x;
        const Vector y = next.gradient - current.gradient;
        const double sy = s.dot(y);
        const double decrease = current.value - next.value;
        result.x = x_new;
        current = std::move(next);

        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (h_is_scaled_identity) {
                gamma = sy / y.squaredNorm();
                H = gamma * Matrix::Identity(n, n);
                h_is_scaled_identity = false;
            }
            const double rho = 1.0 / sy;
            const Vector hy = H * y;
            const double yhy = y.dot(hy);
            H += (rho * rho * yhy + rho) * s * s.transpose() - rho * (hy * s.transpose() + s * hy.transpose());
        }

        stalled = decrease <= 1e-15 * (1.0 + std::abs(current.value)) ? stalled + 1 : 0;
        if (stalled >= 5) {
            result.status = "stalled";
            ++result.iterations;
            break;
        }
    }
    if (result.status.empty()) {
        result.status = "iteration limit";
    }
    result.value = current.value;
    result.gradient = current.gradient;
    result.projected_gradient_norm = projected_gradient(result.x, current.gradient, lower, upper).norm();
    if (!result.converged && result.projected_gradient_norm <= options.tolerance * (1.0 + std::abs(current.value))) {
        result.converged = true;
    }
    return result;
}

} // namespace hawkes_drift
