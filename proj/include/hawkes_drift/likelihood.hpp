#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hawkes_drift/baseline.hpp"
#include "hawkes_drift/model.hpp"
#include "hawkes_drift/sde.hpp"
#include "hawkes_drift/simulate.hpp"

namespace hawkes_drift {

/// Point-process log-likelihood of one observed trajectory, prepared once and evaluated at many theta.
///
/// The baseline integral is exact for the step-interpolated covariate (the same left-continuous
/// lookup used for the intensity at event times), and the kernel integral is closed form. Excitation
/// and its beta-derivatives follow the recursions, with A = sum exp(-beta (t - s)),
/// B = sum (t - s) exp(...), C = sum (t - s)^2 exp(...):
///   A(t + D) = e A,  B(t + D) = e (B + D A),  C(t + D) = e (C + 2 D B + D^2 A),  e = exp(-beta D).
class LikelihoodEvaluator {
public:
    LikelihoodEvaluator(Baseline baseline, const CovariatePath& path, const EventSequence& events);

    [[nodiscard]] const ParamLayout& layout() const noexcept { return layout_; }
    [[nodiscard]] const Baseline& baseline() const noexcept { return baseline_; }
    [[nodiscard]] const CovariatePath& path() const noexcept { return *path_; }
    [[nodiscard]] const EventSequence& events() const noexcept { return events_; }
    [[nodiscard]] double horizon() const noexcept { return events_.horizon; }

    [[nodiscard]] double value(const Vector& theta) const;
    double value_and_gradient(const Vector& theta, Vector& gradient) const;
    double value_gradient_hessian(const Vector& theta, Vector& gradient, Matrix& hessian) const;

    /// sum over events of grad(lambda_c) grad(lambda_c)^T / lambda_c^2 at the event's left limit.
    [[nodiscard]] Matrix outer_product_sum(const Vector& theta) const;

    /// Per-component compensator Lambda_i(upto), 0 <= upto <= horizon.
    [[nodiscard]] Vector compensator(const Vector& theta, double upto) const;
    /// Total compensator sum_i Lambda_i at every event time, in time order.
    [[nodiscard]] std::vector<double> total_compensator_at_events(const Vector& theta) const;
    /// grad_theta of sum_i Lambda_i(horizon) = integral over [0, horizon] of grad sum_i lambda_i.
    [[nodiscard]] Vector total_compensator_gradient(const Vector& theta) const;

private:
    enum class Need { value, gradient, hessian, outer };
    double sweep(const Vector& theta, Need need, Vector* gradient, Matrix* matrix) const;
    double baseline_integral(std::size_t i, std::span<const double> mu, double upto, double* grad,
                             double* hess) const;
    void check_theta(const Vector& theta) const;

    Baseline baseline_;
    const CovariatePath* path_;
    EventSequence events_;
    ParamLayout layout_;
    std::size_t dim_;
    std::vector<std::size_t> event_nodes_;
    std::vector<std::size_t> counts_;
    std::vector<double> node_weights_;
    bool linear_;
    // For linear families: integral over [0, horizon] of each basis function, per component,
    // and the basis values at each event (for the event's own component).
    std::vector<std::vector<double>> basis_integrals_;
    std::vector<double> event_basis_;
    std::vector<std::size_t> event_basis_offset_;
};

/// ell_T^N: sum over events of log lambda_mark(t-) minus sum_i Lambda_i(T).
[[nodiscard]] double log_likelihood(const HawkesParams& params, const Baseline& baseline,
                                    const CovariatePath& path, const EventSequence& events);
[[nodiscard]] Vector compensator(const HawkesParams& params, const Baseline& baseline, const CovariatePath& path,
                                 const EventSequence& events, double upto);
[[nodiscard]] Vector grad_log_likelihood(const HawkesParams& params, const Baseline& baseline,
                                         const CovariatePath& path, const EventSequence& events);
[[nodiscard]] Matrix hessian_log_likelihood(const HawkesParams& params, const Baseline& baseline,
                                            const CovariatePath& path, const EventSequence& events);

/// ell_T^X: left-point Ito sum of b^T a^{-1} dX - (1/2) b^T a^{-1} b ds with a = sigma sigma^T.
/// Throws NumericalError naming the grid node where a is singular.
[[nodiscard]] double sde_log_likelihood(const SdeModel& model, std::span<const double> xi, const CovariatePath& path);

} // namespace hawkes_drift
