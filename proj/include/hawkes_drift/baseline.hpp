#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace hawkes_drift {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Bounds g_minus <= g(mu, x) <= g_plus holding for every covariate state x.
struct Envelope {
    double lower{0.0};
    double upper{std::numeric_limits<double>::infinity()};

    [[nodiscard]] bool bounded() const noexcept { return std::isfinite(upper); }
};

/// A parametric family mu -> g_mu(x) of baseline rates driven by the covariate.
///
/// Families that are linear in mu, g = sum_k mu_k b_k(x), report it through
/// linear_in_mu() and basis(); the likelihood then integrates the basis once per
/// dataset instead of once per evaluation.
class BaselineFamily {
public:
    virtual ~BaselineFamily() = default;

    [[nodiscard]] virtual std::string name() const = 0;
    [[nodiscard]] virtual std::size_t mu_dim() const = 0;
    /// Expected covariate dimension; 0 accepts any.
    [[nodiscard]] virtual std::size_t x_dim() const { return 0; }

    [[nodiscard]] virtual double evaluate(std::span<const double> mu, std::span<const double> x) const = 0;
    virtual void grad_mu(std::span<const double> mu, std::span<const double> x, std::span<double> out) const = 0;
    /// Row-major mu_dim x mu_dim.
    virtual void hess_mu(std::span<const double> mu, std::span<const double> x, std::span<double> out) const = 0;

    /// Envelope over all x at a fixed mu.
    [[nodiscard]] virtual Envelope envelope(std::span<const double> mu) const = 0;
    /// Envelope over all x and all mu in the box [mu_lower, mu_upper].
    [[nodiscard]] virtual Envelope envelope_over(std::span<const double> mu_lower,
                                                 std::span<const double> mu_upper) const = 0;

    [[nodiscard]] virtual bool linear_in_mu() const { return false; }
    virtual void basis(std::span<const double> x, std::span<double> out) const;

    [[nodiscard]] virtual nlohmann::json descriptor() const = 0;

    /// Set for families admitted without a finite envelope.
    [[nodiscard]] bool unchecked() const noexcept { return unchecked_; }

protected:
    explicit BaselineFamily(bool unchecked = false) : unchecked_(unchecked) {}

private:
    bool unchecked_;
};

using BaselineFamilyPtr = std::shared_ptr<const BaselineFamily>;

/// g(x) = mu.
class ConstantBaseline final : public BaselineFamily {
public:
    [[nodiscard]] std::string name() const override { return "constant"; }
    [[nodiscard]] std::size_t mu_dim() const override { return 1; }
    [[nodiscard]] double evaluate(std::span<const double> mu, std::span<const double> x) const override;
    void grad_mu(std::span<const double> mu, std::span<const double> x, std::span<double> out) const override;
    void hess_mu(std::span<const double> mu, std::span<const double> x, std::span<double> out) const override;
    [[nodiscard]] Envelope envelope(std::span<const double> mu) const override;
    [[nodiscard]] Envelope envelope_over(std::span<const double> mu_lower,
                                         std::span<const double> mu_upper) const override;
    [[nodiscard]] bool linear_in_mu() const override { return true; }
    void basis(std::span<const double> x, std::span<double> out) const override;
    [[nodiscard]] nlohmann::json descriptor() const override;
};

/// g(x) = mu_far + (mu_peak - mu_far) * exp(-scale * |x - center|^2), mu = (mu_peak, mu_far).
class GaussianBumpBaseline final : public BaselineFamily {
public:
    GaussianBumpBaseline(std::vector<double> center, double scale);

    [[nodiscard]] std::string name() const override { return "gaussian_bump"; }
    [[nodiscard]] std::size_t mu_dim() const override { return 2; }
    [[nodiscard]] std::size_t x_dim() const override { return center_.size(); }
    [[nodiscard]] double evaluate(std::span<const double> mu, std::span<const double> x) const override;
    void grad_mu(std::span<const double> mu, std::span<const double> x, std::span<double> out) const override;
    void hess_mu(std::span<const double> mu, std::span<const double> x, std::span<double> out) const override;
    [[nodiscard]] Envelope envelope(std::span<const double> mu) const override;
    [[nodiscard]] Envelope envelope_over(std::span<const double> mu_lower,
                                         std::span<const double> mu_upper) const override;
    [[nodiscard]] bool linear_in_mu() const override { return true; }
    void basis(std::span<const double> x, std::span<double> out) const override;
    [[nodiscard]] nlohmann::json descriptor() const override;

    [[nodiscard]] double bump(std::span<const double> x) const;
    [[nodiscard]] const std::vector<double>& center() const noexcept { return center_; }
    [[nodiscard]] double scale() const noexcept { return scale_; }

private:
    std::vector<double> center_;
    double scale_;
};

/// g(x) = mu_0 + mu_1 * (center - x[coordinate])^2 / 2.
///
/// Unbounded in x, so construction requires `unchecked`.
class QuadraticWellBaseline final : public BaselineFamily {
public:
    QuadraticWellBaseline(double center, std::size_t coordinate, bool unchecked);

    [[nodiscard]] std::string name() const override { return "quadratic_well"; }
    [[nodiscard]] std::size_t mu_dim() const override { return 2; }
    [[nodiscard]] double evaluate(std::span<const double> mu, std::span<const double> x) const override;
    void grad_mu(std::span<const double> mu, std::span<const double> x, std::span<double> out) const override;
    void hess_mu(std::span<const double> mu, std::span<const double> x, std::span<double> out) const override;
    [[nodiscard]] Envelope envelope(std::span<const double> mu) const override;
    [[nodiscard]] Envelope envelope_over(std::span<const double> mu_lower,
                                         std::span<const double> mu_upper) const override;
    [[nodiscard]] bool linear_in_mu() const override { return true; }
    void basis(std::span<const double> x, std::span<double> out) const override;
    [[nodiscard]] nlohmann::json descriptor() const override;

private:
    double center_;
    std::size_t coordinate_;
};

/// Builds a family from its descriptor, e.g. {"family": "gaussian_bump", "center": [0.1, 0.1], "scale": 5}.
[[nodiscard]] BaselineFamilyPtr make_baseline_family(const nlohmann::json& descriptor);

/// One baseline family per Hawkes component.
class Baseline {
public:
    Baseline() = default;
    explicit Baseline(std::vector<BaselineFamilyPtr> families);

    [[nodiscard]] static Baseline replicate(BaselineFamilyPtr family, std::size_t components);

    [[nodiscard]] std::size_t components() const noexcept { return families_.size(); }
    [[nodiscard]] const BaselineFamily& family(std::size_t i) const { return *families_.at(i); }
    [[nodiscard]] std::vector<std::size_t> mu_dims() const;
    [[nodiscard]] bool all_linear() const;

    [[nodiscard]] nlohmann::json descriptor() const;
    [[nodiscard]] static Baseline from_descriptor(const nlohmann::json& descriptor);

private:
    std::vector<BaselineFamilyPtr> families_;
};

} // namespace hawkes_drift
