#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hawkes_drift/baseline.hpp"

namespace hawkes_drift {

/// theta = (mu blocks per component, alpha, beta) of a d-variate exponential-kernel Hawkes model.
struct HawkesParams {
    std::vector<Vector> mu;
    Matrix alpha;
    Matrix beta;

    [[nodiscard]] std::size_t dim() const noexcept { return mu.size(); }
    /// Throws ValidationError unless alpha and beta are d x d, finite, and beta > 0.
    void check_shape() const;
};

/// Canonical flattening of theta: mu_1 block, ..., mu_d block, alpha row-major, beta row-major.
class ParamLayout {
public:
    ParamLayout() = default;
    explicit ParamLayout(std::vector<std::size_t> mu_dims);

    [[nodiscard]] static ParamLayout of(const HawkesParams& params);
    [[nodiscard]] static ParamLayout of(const Baseline& baseline) { return ParamLayout(baseline.mu_dims()); }

    [[nodiscard]] std::size_t dim() const noexcept { return mu_dims_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] std::size_t mu_dim(std::size_t i) const { return mu_dims_.at(i); }
    [[nodiscard]] const std::vector<std::size_t>& mu_dims() const noexcept { return mu_dims_; }

    [[nodiscard]] std::size_t mu_offset(std::size_t i) const { return mu_offsets_.at(i); }
    [[nodiscard]] std::size_t mu_index(std::size_t i, std::size_t k) const { return mu_offsets_.at(i) + k; }
    [[nodiscard]] std::size_t alpha_index(std::size_t i, std::size_t j) const {
        return mu_total_ + i * dim() + j;
    }
    [[nodiscard]] std::size_t beta_index(std::size_t i, std::size_t j) const {
        return mu_total_ + dim() * dim() + i * dim() + j;
    }

    /// 1-based display names: "mu[1][2]", "alpha[2][1]", "beta[1][1]".
    [[nodiscard]] std::string name(std::size_t index) const;
    [[nodiscard]] std::size_t index_of(const std::string& name) const;

    [[nodiscard]] Vector flatten(const HawkesParams& params) const;
    [[nodiscard]] HawkesParams unflatten(const Vector& theta) const;

    friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

private:
    std::vector<std::size_t> mu_dims_;
    std::vector<std::size_t> mu_offsets_;
    std::size_t mu_total_{0};
    std::size_t size_{0};
};

/// Coordinatewise bounds on the flattened theta.
class ThetaBox {
public:
    ThetaBox() = default;
    ThetaBox(Vector lower, Vector upper);

    /// mu blocks bounded per coordinate; every alpha_ij in alpha_range, every beta_ij in beta_range.
    [[nodiscard]] static ThetaBox from_ranges(const ParamLayout& layout,
                                              const std::vector<Vector>& mu_lower,
                                              const std::vector<Vector>& mu_upper,
                                              std::pair<double, double> alpha_range,
                                              std::pair<double, double> beta_range);

    [[nodiscard]] const Vector& lower() const noexcept { return lower_; }
    [[nodiscard]] const Vector& upper() const noexcept { return upper_; }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(lower_.size()); }

    [[nodiscard]] bool contains(const Vector& theta, double slack = 0.0) const;
    [[nodiscard]] Vector project(const Vector& theta) const;
    [[nodiscard]] Vector center() const { return 0.5 * (lower_ + upper_); }

    /// Rejects boxes whose alpha/beta lower bounds are not positive, or whose
    /// mu blocks admit a non-positive baseline or (unless unchecked) an unbounded one.
    void check_against(const ParamLayout& layout, const Baseline& baseline) const;

private:
    Vector lower_;
    Vector upper_;
};

/// K_ij = alpha_ij / beta_ij.
[[nodiscard]] Matrix branching_matrix(const HawkesParams& params);

/// Largest eigenvalue modulus. Nonnegative matrices use power iteration on K + I,
/// whose dominant eigenvalue rho(K) + 1 is strictly separated in modulus; other
/// matrices, or slow convergence, fall back to a Hessenberg QR eigensolver.
[[nodiscard]] double spectral_radius(const Matrix& k, double rel_tol = 1e-13, std::size_t max_iter = 100000);

struct StabilityReport {
    bool stable{false};
    double spectral_radius{0.0};
    double margin{0.0};
};

[[nodiscard]] StabilityReport is_stable(const HawkesParams& params);

void to_json(nlohmann::json& j, const HawkesParams& params);
void from_json(const nlohmann::json& j, HawkesParams& params);

[[nodiscard]] nlohmann::json matrix_to_json(const Matrix& m);
[[nodiscard]] Matrix matrix_from_json(const nlohmann::json& j);

} // namespace hawkes_drift
