#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hawkes_drift/baseline.hpp"
#include "hawkes_drift/model.hpp"
#include "hawkes_drift/sde.hpp"
#include "hawkes_drift/simulate.hpp"

namespace fixtures {

using namespace hawkes_drift;

/// Two-component OU benchmark: bump baseline on component 1, constant on component 2.
struct OuBenchmark {
    SdeModelPtr model = make_sde_model({{"model", "ornstein_uhlenbeck"}, {"dim", 2}});
    std::vector<double> xi{0.05};
    std::vector<double> x0{0.0, 0.0};
    nlohmann::json bump = {{"family", "gaussian_bump"}, {"center", {0.1, 0.1}}, {"scale", 5.0}};
    Baseline truth_baseline{{make_baseline_family(bump), make_baseline_family({{"family", "constant"}})}};
    Baseline estimation_baseline = Baseline::replicate(make_baseline_family(bump), 2);
    HawkesParams truth = [] {
        HawkesParams p;
        p.mu = {Vector{{0.5, 0.8}}, Vector{{0.7}}};
        p.alpha = Matrix{{0.3, 0.4}, {0.5, 0.4}};
        p.beta = Matrix{{0.8, 0.8}, {1.5, 1.5}};
        return p;
    }();
    /// Truth in the estimation layout (component 2 flat: mu[2][1] = mu[2][2]).
    HawkesParams reference = [] {
        HawkesParams p;
        p.mu = {Vector{{0.5, 0.8}}, Vector{{0.7, 0.7}}};
        p.alpha = Matrix{{0.3, 0.4}, {0.5, 0.4}};
        p.beta = Matrix{{0.8, 0.8}, {1.5, 1.5}};
        return p;
    }();
    ThetaBox box() const {
        const auto layout = ParamLayout::of(estimation_baseline);
        return ThetaBox::from_ranges(layout, {Vector::Constant(2, 0.05), Vector::Constant(2, 0.05)},
                                     {Vector::Constant(2, 5.0), Vector::Constant(2, 5.0)}, {0.001, 5.0},
                                     {0.05, 10.0});
    }
};

/// One-component OU goodness-of-fit setup.
struct GofSetup {
    SdeModelPtr model = make_sde_model({{"model", "ornstein_uhlenbeck"}, {"dim", 1}});
    std::vector<double> xi{0.05};
    std::vector<double> x0{0.0};
    Baseline baseline{{make_baseline_family({{"family", "gaussian_bump"}, {"center", {0.1}}, {"scale", 1.0}})}};
    HawkesParams truth = [] {
        HawkesParams p;
        p.mu = {Vector{{0.5, 1.0}}};
        p.alpha = Matrix{{0.8}};
        p.beta = Matrix{{0.9}};
        return p;
    }();
};

/// One-component Hawkes with a constant baseline; the covariate is irrelevant.
struct ConstantSetup {
    SdeModelPtr model = make_sde_model({{"model", "ornstein_uhlenbeck"}, {"dim", 1}});
    std::vector<double> xi{0.05};
    std::vector<double> x0{0.0};
    Baseline baseline{{make_baseline_family({{"family", "constant"}})}};
    HawkesParams params(double mu, double alpha, double beta) const {
        HawkesParams p;
        p.mu = {Vector{{mu}}};
        p.alpha = Matrix{{alpha}};
        p.beta = Matrix{{beta}};
        return p;
    }
};

struct Dataset {
    CovariatePath path;
    EventSequence events;
};

inline Dataset simulate(const SdeModel& model, const std::vector<double>& xi, const std::vector<double>& x0,
                        const HawkesParams& params, const Baseline& baseline, double horizon, double step,
                        std::uint64_t seed) {
    Rng rng(seed);
    Dataset out;
    out.path = simulate_path(model, xi, x0, horizon, step, rng);
    out.events = thin_simulate(params, baseline, out.path, rng);
    return out;
}

// ---------------------------------------------------------------------------
// Independent oracles: direct double sums, no recursion, no shared helpers.

/// Covariate state left of t on a grid starting at 0.
inline std::vector<double> state_before(const CovariatePath& path, double t) {
    const std::size_t m = path.state_dim();
    auto k = static_cast<std::size_t>(std::floor(t / path.step()));
    k = std::min(k, path.nodes() - 1);
    return {path.values().begin() + static_cast<std::ptrdiff_t>(k * m),
            path.values().begin() + static_cast<std::ptrdiff_t>((k + 1) * m)};
}

inline double g_of(const Baseline& baseline, const HawkesParams& p, std::size_t i, const std::vector<double>& x) {
    return baseline.family(i).evaluate({p.mu[i].data(), static_cast<std::size_t>(p.mu[i].size())}, x);
}

inline double intensity_brute(const HawkesParams& p, const Baseline& baseline, const CovariatePath& path,
                              const EventSequence& ev, std::size_t i, double t) {
    double lambda = g_of(baseline, p, i, state_before(path, t));
    for (std::size_t k = 0; k < ev.size() && ev.times[k] < t; ++k) {
        const auto j = static_cast<Eigen::Index>(ev.marks[k]);
        const auto ii = static_cast<Eigen::Index>(i);
        lambda += p.alpha(ii, j) * std::exp(-p.beta(ii, j) * (t - ev.times[k]));
    }
    return lambda;
}

/// Baseline integral of component i over [0, upto] for the step-interpolated covariate.
inline double baseline_integral_brute(const HawkesParams& p, const Baseline& baseline, const CovariatePath& path,
                                      std::size_t i, double upto) {
    double sum = 0.0;
    const double h = path.step();
    for (std::size_t k = 0; k < path.nodes(); ++k) {
        const double a = static_cast<double>(k) * h;
        if (a >= upto) {
            break;
        }
        const double b = std::min(a + h, upto);
        const auto node = path.node(k);
        sum += g_of(baseline, p, i, {node.begin(), node.end()}) * (b - a);
    }
    return sum;
}

/// Kernel part of the compensator by composite Simpson between successive events.
inline double kernel_integral_simpson(const HawkesParams& p, const EventSequence& ev, std::size_t i, double upto,
                                      int panels = 64) {
    std::vector<double> cuts{0.0};
    for (double t : ev.times) {
        if (t < upto) {
            cuts.push_back(t);
        }
    }
    cuts.push_back(upto);
    auto kernel = [&](double t) {
        double s = 0.0;
        for (std::size_t k = 0; k < ev.size() && ev.times[k] < t; ++k) {
            const auto j = static_cast<Eigen::Index>(ev.marks[k]);
            const auto ii = static_cast<Eigen::Index>(i);
            s += p.alpha(ii, j) * std::exp(-p.beta(ii, j) * (t - ev.times[k]));
        }
        return s;
    };
    double total = 0.0;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        const double a = cuts[c];
        const double b = cuts[c + 1];
        if (b <= a) {
            continue;
        }
        const double h = (b - a) / panels;
        // Evaluate just inside the interval so that the event at `a` counts and the one at `b` does not.
        const double eps = 1e-12 * std::max(1.0, b);
        double s = kernel(a + eps) + kernel(b - eps);
        for (int k = 1; k < panels; ++k) {
            s += (k % 2 ? 4.0 : 2.0) * kernel(a + k * h);
        }
        total += s * h / 3.0;
    }
    return total;
}

inline double log_likelihood_brute(const HawkesParams& p, const Baseline& baseline, const CovariatePath& path,
                                   const EventSequence& ev) {
    double ll = 0.0;
    for (std::size_t k = 0; k < ev.size(); ++k) {
        ll += std::log(intensity_brute(p, baseline, path, ev, ev.marks[k], ev.times[k]));
    }
    const double T = ev.horizon;
    for (std::size_t i = 0; i < p.dim(); ++i) {
        ll -= baseline_integral_brute(p, baseline, path, i, T);
        for (std::size_t k = 0; k < ev.size(); ++k) {
            const auto j = static_cast<Eigen::Index>(ev.marks[k]);
            const auto ii = static_cast<Eigen::Index>(i);
            ll -= p.alpha(ii, j) / p.beta(ii, j) * (1.0 - std::exp(-p.beta(ii, j) * (T - ev.times[k])));
        }
    }
    return ll;
}

/// Largest eigenvalue modulus of a 2 x 2 matrix from the characteristic polynomial.
inline double spectral_radius_2x2(const Matrix& k) {
    const double tr = k(0, 0) + k(1, 1);
    const double det = k(0, 0) * k(1, 1) - k(0, 1) * k(1, 0);
    const double disc = tr * tr / 4.0 - det;
    if (disc >= 0.0) {
        const double r = std::sqrt(disc);
        return std::max(std::abs(tr / 2.0 + r), std::abs(tr / 2.0 - r));
    }
    return std::sqrt(det);
}

} // namespace fixtures
