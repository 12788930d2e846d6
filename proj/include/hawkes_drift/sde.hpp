#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hawkes_drift/baseline.hpp"
#include "hawkes_drift/model.hpp"
#include "hawkes_drift/random.hpp"

namespace hawkes_drift {

/// dX = b(X, xi) dt + sigma(X, xi) dW with X in R^m and W in R^l.
class SdeModel {
public:
    virtual ~SdeModel() = default;

    [[nodiscard]] virtual std::string name() const = 0;
    [[nodiscard]] virtual std::size_t state_dim() const = 0;
    [[nodiscard]] virtual std::size_t noise_dim() const = 0;
    [[nodiscard]] virtual std::size_t xi_dim() const = 0;

    virtual void drift(std::span<const double> x, std::span<const double> xi, std::span<double> out) const = 0;
    /// Row-major m x l.
    virtual void diffusion(std::span<const double> x, std::span<const double> xi, std::span<double> out) const = 0;

    [[nodiscard]] virtual nlohmann::json descriptor() const = 0;
};

using SdeModelPtr = std::shared_ptr<const SdeModel>;

/// dX = -xi X dt + sqrt(2|xi|) dW in R^m; stationary law N(0, I).
class OrnsteinUhlenbeck final : public SdeModel {
public:
    explicit OrnsteinUhlenbeck(std::size_t dim);

    [[nodiscard]] std::string name() const override { return "ornstein_uhlenbeck"; }
    [[nodiscard]] std::size_t state_dim() const override { return dim_; }
    [[nodiscard]] std::size_t noise_dim() const override { return dim_; }
    [[nodiscard]] std::size_t xi_dim() const override { return 1; }
    void drift(std::span<const double> x, std::span<const double> xi, std::span<double> out) const override;
    void diffusion(std::span<const double> x, std::span<const double> xi, std::span<double> out) const override;
    [[nodiscard]] nlohmann::json descriptor() const override;

private:
    std::size_t dim_;
};

/// Kramers oscillator on (X, V), xi = (eta, a, b, sigma):
/// dX = V dt, dV = (-eta V + a X - b X^3) dt + sigma dW.
class KramersOscillator final : public SdeModel {
public:
    [[nodiscard]] std::string name() const override { return "kramers"; }
    [[nodiscard]] std::size_t state_dim() const override { return 2; }
    [[nodiscard]] std::size_t noise_dim() const override { return 1; }
    [[nodiscard]] std::size_t xi_dim() const override { return 4; }
    void drift(std::span<const double> x, std::span<const double> xi, std::span<double> out) const override;
    void diffusion(std::span<const double> x, std::span<const double> xi, std::span<double> out) const override;
    [[nodiscard]] nlohmann::json descriptor() const override;
};

/// Ad hoc model from callables; not serializable beyond its name.
class FunctionSde final : public SdeModel {
public:
    using Field = std::function<void(std::span<const double>, std::span<const double>, std::span<double>)>;

    FunctionSde(std::string name, std::size_t state_dim, std::size_t noise_dim, std::size_t xi_dim, Field drift,
                Field diffusion);

    [[nodiscard]] std::string name() const override { return name_; }
    [[nodiscard]] std::size_t state_dim() const override { return m_; }
    [[nodiscard]] std::size_t noise_dim() const override { return l_; }
    [[nodiscard]] std::size_t xi_dim() const override { return p_; }
    void drift(std::span<const double> x, std::span<const double> xi, std::span<double> out) const override;
    void diffusion(std::span<const double> x, std::span<const double> xi, std::span<double> out) const override;
    [[nodiscard]] nlohmann::json descriptor() const override { return {{"model", name_}}; }

private:
    std::string name_;
    std::size_t m_, l_, p_;
    Field drift_, diffusion_;
};

/// {"model": "ornstein_uhlenbeck", "dim": 2} or {"model": "kramers"}.
[[nodiscard]] SdeModelPtr make_sde_model(const nlohmann::json& descriptor);

/// Covariate trajectory on the uniform grid t0 + k h, k = 0..n-1, over [t0, horizon].
class CovariatePath {
public:
    CovariatePath() = default;
    /// `values` holds n * state_dim doubles, row k = state at node k.
    CovariatePath(double t0, double step, double horizon, std::size_t state_dim, std::vector<double> values);

    [[nodiscard]] double t0() const noexcept { return t0_; }
    [[nodiscard]] double step() const noexcept { return step_; }
    [[nodiscard]] double horizon() const noexcept { return horizon_; }
    [[nodiscard]] std::size_t state_dim() const noexcept { return m_; }
    [[nodiscard]] std::size_t nodes() const noexcept { return m_ == 0 ? 0 : values_.size() / m_; }
    [[nodiscard]] double node_time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * step_; }

    [[nodiscard]] std::span<const double> node(std::size_t k) const {
        return {values_.data() + k * m_, m_};
    }
    /// Index of the greatest grid node <= t.
    [[nodiscard]] std::size_t node_index(double t) const;
    /// State at the greatest grid node <= t (left-continuous step interpolation).
    [[nodiscard]] std::span<const double> lookup(double t) const { return node(node_index(t)); }

    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

    /// Number of grid nodes for a horizon: floor((horizon - t0)/step) + 1.
    [[nodiscard]] static std::size_t node_count(double t0, double step, double horizon);

private:
    double t0_{0.0};
    double step_{1.0};
    double horizon_{0.0};
    std::size_t m_{0};
    std::vector<double> values_;
};

/// Euler-Maruyama: x_{k+1} = x_k + b(x_k) h + sigma(x_k) sqrt(h) Z_k. Throws NumericalError on a non-finite state.
[[nodiscard]] CovariatePath simulate_path(const SdeModel& model, std::span<const double> xi,
                                          std::span<const double> x0, double horizon, double step, Rng& rng);

/// Terminal state after running the scheme for `burn_in` time units from x0 (zeros if empty).
[[nodiscard]] std::vector<double> stationary_draw(const SdeModel& model, std::span<const double> xi,
                                                  double burn_in, double step, Rng& rng,
                                                  std::span<const double> x0 = {});

struct StationaryMean {
    Vector mean;
    Vector std_error;
};

struct StationaryMeanOptions {
    std::size_t draws{1000};
    double burn_in{2000.0};
    double step{0.01};
};

/// Monte Carlo estimate of mu_bar_i = E_pi[g_i(X)] per component, from independent stationary draws.
[[nodiscard]] StationaryMean baseline_stationary_mean(const SdeModel& model, std::span<const double> xi,
                                                      const Baseline& baseline, const HawkesParams& params,
                                                      const StationaryMeanOptions& options, Rng& rng);

/// CSV with header `t,x1,...,xm`, one row per node, 17 significant digits.
void write_covariate_csv(std::ostream& out, const CovariatePath& path);
/// Reads the CSV above; the grid step is inferred from the first two rows, horizon from the last.
[[nodiscard]] CovariatePath read_covariate_csv(std::istream& in, double horizon = -1.0);

} // namespace hawkes_drift
