#include "hawkes_drift/baseline.hpp"

#include <algorithm>

#include "hawkes_drift/errors.hpp"

namespace hawkes_drift {

void BaselineFamily::basis(std::span<const double>, std::span<double>) const {
    throw std::logic_error("baseline family '" + name() + "' is not linear in mu");
}

// ---------------------------------------------------------------------------
// constant

double ConstantBaseline::evaluate(std::span<const double> mu, std::span<const double>) const {
    return mu[0];
}

void ConstantBaseline::grad_mu(std::span<const double>, std::span<const double>, std::span<double> out) const {
    out[0] = 1.0;
}

void ConstantBaseline::hess_mu(std::span<const double>, std::span<const double>, std::span<double> out) const {
    out[0] = 0.0;
}

Envelope ConstantBaseline::envelope(std::span<const double> mu) const { return {mu[0], mu[0]}; }

Envelope ConstantBaseline::envelope_over(std::span<const double> mu_lower, std::span<const double> mu_upper) const {
    return {mu_lower[0], mu_upper[0]};
}

void ConstantBaseline::basis(std::span<const double>, std::span<double> out) const { out[0] = 1.0; }

nlohmann::json ConstantBaseline::descriptor() const { return {{"family", name()}}; }

// ---------------------------------------------------------------------------
// gaussian bump

GaussianBumpBaseline::GaussianBumpBaseline(std::vector<double> center, double scale)
    : center_(std::move(center)), scale_(scale) {
    if (center_.empty()) {
        throw ValidationError("gaussian_bump: center must be nonempty");
    }
    if (!(scale_ > 0.0) || !std::isfinite(scale_)) {
        throw ValidationError("gaussian_bump: scale must be positive and finite");
    }
}

double GaussianBumpBaseline::bump(std::span<const double> x) const {
    double sq = 0.0;
    for (std::size_t k = 0; k < center_.size(); ++k) {
        const double diff = x[k] - center_[k];
        sq += diff * diff;
    }
    return std::exp(-scale_ * sq);
}

double GaussianBumpBaseline::evaluate(std::span<const double> mu, std::span<const double> x) const {
    return mu[1] + (mu[0] - mu[1]) * bump(x);
}

void GaussianBumpBaseline::grad_mu(std::span<const double>, std::span<const double> x, std::span<double> out) const {
    const double phi = bump(x);
    out[0] = phi;
    out[1] = 1.0 - phi;
}

void GaussianBumpBaseline::hess_mu(std::span<const double>, std::span<const double>, std::span<double> out) const {
    std::fill(out.begin(), out.begin() + 4, 0.0);
}

Envelope GaussianBumpBaseline::envelope(std::span<const double> mu) const {
    return {std::min(mu[0], mu[1]), std::max(mu[0], mu[1])};
}

Envelope GaussianBumpBaseline::envelope_over(std::span<const double> mu_lower,
                                             std::span<const double> mu_upper) const {
    return {std::min(mu_lower[0], mu_lower[1]), std::max(mu_upper[0], mu_upper[1])};
}

void GaussianBumpBaseline::basis(std::span<const double> x, std::span<double> out) const {
    const double phi = bump(x);
    out[0] = phi;
    out[1] = 1.0 - phi;
}

nlohmann::json GaussianBumpBaseline::descriptor() const {
    return {{"family", name()}, {"center", center_}, {"scale", scale_}};
}

// ---------------------------------------------------------------------------
// quadratic well

QuadraticWellBaseline::QuadraticWellBaseline(double center, std::size_t coordinate, bool unchecked)
    : BaselineFamily(unchecked), center_(center), coordinate_(coordinate) {
    if (!unchecked) {
        throw ValidationError(
            "quadratic_well: the family is unbounded in x and has no finite envelope; "
            "construct it with \"unchecked\": true to admit it");
    }
}

double QuadraticWellBaseline::evaluate(std::span<const double> mu, std::span<const double> x) const {
    const double diff = center_ - x[coordinate_];
    return mu[0] + mu[1] * 0.5 * diff * diff;
}

void QuadraticWellBaseline::grad_mu(std::span<const double>, std::span<const double> x, std::span<double> out) const {
    const double diff = center_ - x[coordinate_];
    out[0] = 1.0;
    out[1] = 0.5 * diff * diff;
}

void QuadraticWellBaseline::hess_mu(std::span<const double>, std::span<const double>, std::span<double> out) const {
    std::fill(out.begin(), out.begin() + 4, 0.0);
}

Envelope QuadraticWellBaseline::envelope(std::span<const double> mu) const {
    if (mu[1] == 0.0) {
        return {mu[0], mu[0]};
    }
    if (mu[1] > 0.0) {
        return {mu[0], std::numeric_limits<double>::infinity()};
    }
    return {-std::numeric_limits<double>::infinity(), mu[0]};
}

Envelope QuadraticWellBaseline::envelope_over(std::span<const double> mu_lower,
                                              std::span<const double> mu_upper) const {
    const double lower = mu_lower[1] >= 0.0 ? mu_lower[0] : -std::numeric_limits<double>::infinity();
    const double upper = mu_upper[1] <= 0.0 ? mu_upper[0] : std::numeric_limits<double>::infinity();
    return {lower, upper};
}

void QuadraticWellBaseline::basis(std::span<const double> x, std::span<double> out) const {
    const double diff = center_ - x[coordinate_];
    out[0] = 1.0;
    out[1] = 0.5 * diff * diff;
}

nlohmann::json QuadraticWellBaseline::descriptor() const {
    return {{"family", name()}, {"center", center_}, {"coordinate", coordinate_}, {"unchecked", unchecked()}};
}

// ---------------------------------------------------------------------------
// factory and per-component set

namespace {

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ValidationError("baseline descriptor: unknown key '" + key + "'");
        }
    }
}

} // namespace

BaselineFamilyPtr make_baseline_family(const nlohmann::json& descriptor) {
    if (!descriptor.is_object() || !descriptor.contains("family")) {
        throw ValidationError("baseline descriptor must be an object with a \"family\" key");
    }
    const auto family = descriptor.at("family").get<std::string>();
    try {
        if (family == "constant") {
            reject_unknown_keys(descriptor, {"family"});
            return std::make_shared<ConstantBaseline>();
        }
        if (family == "gaussian_bump") {
            reject_unknown_keys(descriptor, {"family", "center", "scale"});
            return std::make_shared<GaussianBumpBaseline>(descriptor.at("center").get<std::vector<double>>(),
                                                          descriptor.at("scale").get<double>());
        }
        if (family == "quadratic_well") {
            reject_unknown_keys(descriptor, {"family", "center", "coordinate", "unchecked"});
            return std::make_shared<QuadraticWellBaseline>(descriptor.value("center", 1.0),
                                                           descriptor.value("coordinate", std::size_t{0}),
                                                           descriptor.value("unchecked", false));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("baseline descriptor '" + family + "': " + e.what());
    }
    throw ValidationError("unknown baseline family '" + family + "'");
}

Baseline::Baseline(std::vector<BaselineFamilyPtr> families) : families_(std::move(families)) {
    if (families_.empty()) {
        throw ValidationError("baseline needs at least one component");
    }
    for (const auto& f : families_) {
        if (!f) {
            throw ValidationError("baseline component is null");
        }
    }
}

Baseline Baseline::replicate(BaselineFamilyPtr family, std::size_t components) {
    return Baseline(std::vector<BaselineFamilyPtr>(components, std::move(family)));
}

std::vector<std::size_t> Baseline::mu_dims() const {
    std::vector<std::size_t> dims;
    dims.reserve(families_.size());
    for (const auto& f : families_) {
        dims.push_back(f->mu_dim());
    }
    return dims;
}

bool Baseline::all_linear() const {
    return std::all_of(families_.begin(), families_.end(), [](const auto& f) { return f->linear_in_mu(); });
}

nlohmann::json Baseline::descriptor() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : families_) {
        out.push_back(f->descriptor());
    }
    return out;
}

Baseline Baseline::from_descriptor(const nlohmann::json& descriptor) {
    if (!descriptor.is_array()) {
        throw ValidationError("baseline descriptor must be an array with one family per component");
    }
    std::vector<BaselineFamilyPtr> families;
    for (const auto& item : descriptor) {
        families.push_back(make_baseline_family(item));
    }
    return Baseline(std::move(families));
}

} // namespace hawkes_drift
