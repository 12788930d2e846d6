#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "hawkes_drift/baseline.hpp"
#include "hawkes_drift/model.hpp"
#include "hawkes_drift/random.hpp"
#include "hawkes_drift/sde.hpp"

namespace hawkes_drift {

/// Y_ij(t) = sum over past events s of component j of alpha_ij exp(-beta_ij (t - s)).
class KernelState {
public:
    KernelState() = default;
    explicit KernelState(std::size_t dim, double t_anchor = 0.0)
        : y_(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))), t_anchor_(t_anchor) {}

    [[nodiscard]] const Matrix& y() const noexcept { return y_; }
    [[nodiscard]] double t_anchor() const noexcept { return t_anchor_; }

    /// Y at t >= t_anchor, without mutating.
    [[nodiscard]] Matrix decayed(const Matrix& beta, double t) const;
    /// Row sums of decayed(beta, t).
    [[nodiscard]] Vector excitation(const Matrix& beta, double t) const;

    void decay_to(const Matrix& beta, double t);
    /// Event in component j at the anchor time: column j gains alpha(:, j).
    void jump(const Matrix& alpha, std::size_t j);

private:
    Matrix y_;
    double t_anchor_{0.0};
};

/// Event times in (0, horizon] with 0-based component marks.
struct EventSequence {
    std::vector<double> times;
    std::vector<std::size_t> marks;
    double horizon{0.0};

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    [[nodiscard]] bool empty() const noexcept { return times.empty(); }
    [[nodiscard]] std::vector<std::size_t> counts(std::size_t dim) const;

    /// Throws ValidationError unless strictly increasing, aligned, inside (0, horizon], marks < dim.
    void validate(std::size_t dim) const;
    /// Copy with events ordered by time (stable in storage order for ties).
    [[nodiscard]] EventSequence sorted() const;
};

/// lambda_i(t) = g_i(X(t-)) + sum_j Y_ij(t); `state` must hold the events strictly before t.
[[nodiscard]] Vector intensity_at(const HawkesParams& params, const Baseline& baseline, const CovariatePath& path,
                                  const KernelState& state, double t);

struct ThinningOptions {
    /// Verify at every proposal that the baseline stays below the envelope used for the bound.
    bool check_envelope{true};
};

/// Ogata thinning on [0, path.horizon()] using the total bound sum_i (g_plus_i + sum_j Y_ij(t)).
///
/// g_plus_i is the family's declared envelope at mu_i. Families admitted as unchecked
/// (no finite envelope) use the maximum of g_i over the frozen covariate grid instead,
/// which dominates the step-interpolated baseline exactly.
[[nodiscard]] EventSequence thin_simulate(const HawkesParams& params, const Baseline& baseline,
                                          const CovariatePath& path, Rng& rng, const ThinningOptions& options = {});

/// Intensity vectors at arbitrary query times in [0, horizon] (any order), from the decay/jump recursion.
[[nodiscard]] std::vector<Vector> replay_intensity(const HawkesParams& params, const Baseline& baseline,
                                                   const CovariatePath& path, const EventSequence& events,
                                                   std::span<const double> query_times);

/// CSV with header `t,mark`, rows sorted by t, marks 1-based.
void write_events_csv(std::ostream& out, const EventSequence& events);
[[nodiscard]] EventSequence read_events_csv(std::istream& in, double horizon);

} // namespace hawkes_drift
