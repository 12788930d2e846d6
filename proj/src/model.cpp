#include "hawkes_drift/model.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include <Eigen/Eigenvalues>

#include "hawkes_drift/errors.hpp"

namespace hawkes_drift {

void HawkesParams::check_shape() const {
    const auto d = static_cast<Eigen::Index>(dim());
    if (d == 0) {
        throw ValidationError("HawkesParams: at least one component is required");
    }
    if (alpha.rows() != d || alpha.cols() != d || beta.rows() != d || beta.cols() != d) {
        throw ValidationError("HawkesParams: alpha and beta must both be " + std::to_string(d) + "x" +
                              std::to_string(d));
    }
    if (!alpha.allFinite() || !beta.allFinite()) {
        throw ValidationError("HawkesParams: alpha and beta must be finite");
    }
    if ((beta.array() <= 0.0).any()) {
        throw ValidationError("HawkesParams: every beta_ij must be positive");
    }
    if ((alpha.array() < 0.0).any()) {
        throw ValidationError("HawkesParams: every alpha_ij must be nonnegative");
    }
    for (const auto& block : mu) {
        if (block.size() == 0 || !block.allFinite()) {
            throw ValidationError("HawkesParams: mu blocks must be nonempty and finite");
        }
    }
}

// ---------------------------------------------------------------------------
// ParamLayout

ParamLayout::ParamLayout(std::vector<std::size_t> mu_dims) : mu_dims_(std::move(mu_dims)) {
    if (mu_dims_.empty()) {
        throw ValidationError("ParamLayout: at least one component is required");
    }
    std::size_t offset = 0;
    for (auto n : mu_dims_) {
        if (n == 0) {
            throw ValidationError("ParamLayout: mu blocks must be nonempty");
        }
        mu_offsets_.push_back(offset);
        offset += n;
    }
    mu_total_ = offset;
    size_ = mu_total_ + 2 * dim() * dim();
}

ParamLayout ParamLayout::of(const HawkesParams& params) {
    std::vector<std::size_t> dims;
    for (const auto& block : params.mu) {
        dims.push_back(static_cast<std::size_t>(block.size()));
    }
    return ParamLayout(std::move(dims));
}

std::string ParamLayout::name(std::size_t index) const {
    if (index >= size_) {
        throw ValidationError("parameter index " + std::to_string(index) + " out of range");
    }
    const auto d = dim();
    if (index < mu_total_) {
        std::size_t i = 0;
        while (i + 1 < d && mu_offsets_[i + 1] <= index) {
            ++i;
        }
        return "mu[" + std::to_string(i + 1) + "][" + std::to_string(index - mu_offsets_[i] + 1) + "]";
    }
    std::size_t rest = index - mu_total_;
    const char* kind = rest < d * d ? "alpha" : "beta";
    rest %= d * d;
    return std::string(kind) + "[" + std::to_string(rest / d + 1) + "][" + std::to_string(rest % d + 1) + "]";
}

std::size_t ParamLayout::index_of(const std::string& name) const {
    static const std::regex pattern(R"(^\s*(mu|alpha|beta)\[(\d+)\]\[(\d+)\]\s*$)");
    std::smatch m;
    if (!std::regex_match(name, m, pattern)) {
        throw ValidationError("cannot parse parameter name '" + name + "' (expected e.g. mu[1][2])");
    }
    const auto i = std::stoul(m[2].str());
    const auto k = std::stoul(m[3].str());
    if (i == 0 || k == 0 || i > dim()) {
        throw ValidationError("parameter '" + name + "' out of range");
    }
    if (m[1] == "mu") {
        if (k > mu_dims_[i - 1]) {
            throw ValidationError("parameter '" + name + "' out of range");
        }
        return mu_index(i - 1, k - 1);
    }
    if (k > dim()) {
        throw ValidationError("parameter '" + name + "' out of range");
    }
    return m[1] == "alpha" ? alpha_index(i - 1, k - 1) : beta_index(i - 1, k - 1);
}

Vector ParamLayout::flatten(const HawkesParams& params) const {
    if (params.dim() != dim()) {
        throw ValidationError("flatten: parameter dimension does not match layout");
    }
    Vector theta(static_cast<Eigen::Index>(size_));
    for (std::size_t i = 0; i < dim(); ++i) {
        if (static_cast<std::size_t>(params.mu[i].size()) != mu_dims_[i]) {
            throw ValidationError("flatten: mu block " + std::to_string(i + 1) + " has the wrong size");
        }
        theta.segment(static_cast<Eigen::Index>(mu_offsets_[i]), params.mu[i].size()) = params.mu[i];
    }
    for (std::size_t i = 0; i < dim(); ++i) {
        for (std::size_t j = 0; j < dim(); ++j) {
            theta[static_cast<Eigen::Index>(alpha_index(i, j))] = params.alpha(i, j);
            theta[static_cast<Eigen::Index>(beta_index(i, j))] = params.beta(i, j);
        }
    }
    return theta;
}

HawkesParams ParamLayout::unflatten(const Vector& theta) const {
    if (static_cast<std::size_t>(theta.size()) != size_) {
        throw ValidationError("unflatten: vector length does not match layout");
    }
    HawkesParams params;
    const auto d = static_cast<Eigen::Index>(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
        params.mu.push_back(theta.segment(static_cast<Eigen::Index>(mu_offsets_[i]),
                                          static_cast<Eigen::Index>(mu_dims_[i])));
    }
    params.alpha.resize(d, d);
    params.beta.resize(d, d);
    for (std::size_t i = 0; i < dim(); ++i) {
        for (std::size_t j = 0; j < dim(); ++j) {
            params.alpha(i, j) = theta[static_cast<Eigen::Index>(alpha_index(i, j))];
            params.beta(i, j) = theta[static_cast<Eigen::Index>(beta_index(i, j))];
        }
    }
    return params;
}

// ---------------------------------------------------------------------------
// ThetaBox

ThetaBox::ThetaBox(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size() || lower_.size() == 0) {
        throw ValidationError("ThetaBox: lower and upper must be nonempty and of equal length");
    }
    for (Eigen::Index k = 0; k < lower_.size(); ++k) {
        if (!std::isfinite(lower_[k]) || !std::isfinite(upper_[k]) || !(lower_[k] < upper_[k])) {
            throw ValidationError("ThetaBox: need finite lower < upper at coordinate " + std::to_string(k));
        }
    }
}

ThetaBox ThetaBox::from_ranges(const ParamLayout& layout,
                               const std::vector<Vector>& mu_lower,
                               const std::vector<Vector>& mu_upper,
                               std::pair<double, double> alpha_range,
                               std::pair<double, double> beta_range) {
    if (mu_lower.size() != layout.dim() || mu_upper.size() != layout.dim()) {
        throw ValidationError("ThetaBox: one mu bound block per component is required");
    }
    Vector lo(static_cast<Eigen::Index>(layout.size()));
    Vector hi(static_cast<Eigen::Index>(layout.size()));
    for (std::size_t i = 0; i < layout.dim(); ++i) {
        const auto n = static_cast<Eigen::Index>(layout.mu_dim(i));
        if (mu_lower[i].size() != n || mu_upper[i].size() != n) {
            throw ValidationError("ThetaBox: mu bound block " + std::to_string(i + 1) + " has the wrong size");
        }
        lo.segment(static_cast<Eigen::Index>(layout.mu_offset(i)), n) = mu_lower[i];
        hi.segment(static_cast<Eigen::Index>(layout.mu_offset(i)), n) = mu_upper[i];
    }
    for (std::size_t i = 0; i < layout.dim(); ++i) {
        for (std::size_t j = 0; j < layout.dim(); ++j) {
            lo[static_cast<Eigen::Index>(layout.alpha_index(i, j))] = alpha_range.first;
            hi[static_cast<Eigen::Index>(layout.alpha_index(i, j))] = alpha_range.second;
            lo[static_cast<Eigen::Index>(layout.beta_index(i, j))] = beta_range.first;
            hi[static_cast<Eigen::Index>(layout.beta_index(i, j))] = beta_range.second;
        }
    }
    return ThetaBox(std::move(lo), std::move(hi));
}

bool ThetaBox::contains(const Vector& theta, double slack) const {
    if (theta.size() != lower_.size()) {
        return false;
    }
    return ((theta.array() >= lower_.array() - slack) && (theta.array() <= upper_.array() + slack)).all();
}

Vector ThetaBox::project(const Vector& theta) const {
    return theta.cwiseMax(lower_).cwiseMin(upper_);
}

void ThetaBox::check_against(const ParamLayout& layout, const Baseline& baseline) const {
    if (size() != layout.size()) {
        throw ValidationError("ThetaBox: size does not match the parameter layout");
    }
    if (baseline.components() != layout.dim()) {
        throw ValidationError("ThetaBox: baseline component count does not match the layout");
    }
    for (std::size_t i = 0; i < layout.dim(); ++i) {
        for (std::size_t j = 0; j < layout.dim(); ++j) {
            if (!(lower_[static_cast<Eigen::Index>(layout.alpha_index(i, j))] > 0.0)) {
                throw ValidationError("ThetaBox: alpha lower bound must be positive");
            }
            if (!(lower_[static_cast<Eigen::Index>(layout.beta_index(i, j))] > 0.0)) {
                throw ValidationError("ThetaBox: beta lower bound must be positive");
            }
        }
    }
    for (std::size_t i = 0; i < layout.dim(); ++i) {
        const auto off = static_cast<Eigen::Index>(layout.mu_offset(i));
        const auto n = static_cast<Eigen::Index>(layout.mu_dim(i));
        const Vector lo = lower_.segment(off, n);
        const Vector hi = upper_.segment(off, n);
        const auto env = baseline.family(i).envelope_over({lo.data(), static_cast<std::size_t>(n)},
                                                          {hi.data(), static_cast<std::size_t>(n)});
        if (!(env.lower > 0.0)) {
            throw ValidationError("ThetaBox: baseline of component " + std::to_string(i + 1) +
                                  " is not bounded away from zero over the box (g_minus must be > 0)");
        }
        if (!env.bounded() && !baseline.family(i).unchecked()) {
            throw ValidationError("ThetaBox: baseline of component " + std::to_string(i + 1) +
                                  " has no finite envelope over the box");
        }
    }
}

// ---------------------------------------------------------------------------
// stability

Matrix branching_matrix(const HawkesParams& params) {
    params.check_shape();
    return params.alpha.cwiseQuotient(params.beta);
}

namespace {

double eigen_spectral_radius(const Matrix& k) {
    Eigen::EigenSolver<Matrix> solver(k, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("spectral_radius: eigenvalue solver did not converge");
    }
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace

double spectral_radius(const Matrix& k, double rel_tol, std::size_t max_iter) {
    if (k.rows() != k.cols() || k.rows() == 0) {
        throw ValidationError("spectral_radius: matrix must be square and nonempty");
    }
    if (!k.allFinite()) {
        throw ValidationError("spectral_radius: matrix has non-finite entries");
    }
    if ((k.array() < 0.0).any()) {
        return eigen_spectral_radius(k);
    }

    const Matrix shifted = k + Matrix::Identity(k.rows(), k.cols());
    Vector v = Vector::Ones(k.rows()) / std::sqrt(static_cast<double>(k.rows()));
    double estimate = 0.0;
    double last_step = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 1; iter <= max_iter; ++iter) {
        Vector w = shifted * v;
        const double norm = w.norm();
        const double step = norm - estimate;
        estimate = norm;
        v = w / norm;
        if (step == 0.0) {
            return std::max(0.0, estimate - 1.0);
        }
        // Geometric convergence: the contraction ratio bounds the remaining error, and Aitken's
        // extrapolation removes its leading term.
        const double ratio = std::isfinite(last_step) ? step / last_step : 1.0;
        if (iter > 2 && std::abs(ratio) < 0.999) {
            const double remaining = step * ratio / (1.0 - ratio);
            if (std::abs(remaining) <= rel_tol * estimate) {
                return std::max(0.0, estimate + remaining - 1.0);
            }
        }
        last_step = step;
    }
    // Defective or nearly degenerate dominant eigenvalue: power iteration stalls.
    try {
        return eigen_spectral_radius(k);
    } catch (const NumericalError&) {
        throw ConvergenceError("spectral_radius: power iteration and QR fallback both failed", max_iter);
    }
}

StabilityReport is_stable(const HawkesParams& params) {
    const double rho = spectral_radius(branching_matrix(params));
    return {rho < 1.0, rho, 1.0 - rho};
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) {
        throw ValidationError("matrix must be a nonempty array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ValidationError("matrix rows must all have the same length");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return m;
}

void to_json(nlohmann::json& j, const HawkesParams& params) {
    nlohmann::json mu = nlohmann::json::array();
    for (const auto& block : params.mu) {
        mu.push_back(std::vector<double>(block.data(), block.data() + block.size()));
    }
    j = {{"mu", mu}, {"alpha", matrix_to_json(params.alpha)}, {"beta", matrix_to_json(params.beta)}};
}

void from_json(const nlohmann::json& j, HawkesParams& params) {
    for (const auto& [key, value] : j.items()) {
        if (key != "mu" && key != "alpha" && key != "beta") {
            throw ValidationError("HawkesParams: unknown key '" + key + "'");
        }
    }
    params.mu.clear();
    for (const auto& block : j.at("mu")) {
        const auto values = block.get<std::vector<double>>();
        params.mu.emplace_back(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    params.alpha = matrix_from_json(j.at("alpha"));
    params.beta = matrix_from_json(j.at("beta"));
    params.check_shape();
}

} // namespace hawkes_drift
