#include "hawkes_drift/sde.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "hawkes_drift/errors.hpp"
#include "hawkes_drift/io.hpp"

namespace hawkes_drift {

// ---------------------------------------------------------------------------
// models

OrnsteinUhlenbeck::OrnsteinUhlenbeck(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) {
        throw ValidationError("ornstein_uhlenbeck: dimension must be positive");
    }
}

void OrnsteinUhlenbeck::drift(std::span<const double> x, std::span<const double> xi, std::span<double> out) const {
    for (std::size_t k = 0; k < dim_; ++k) {
        out[k] = -xi[0] * x[k];
    }
}

void OrnsteinUhlenbeck::diffusion(std::span<const double>, std::span<const double> xi, std::span<double> out) const {
    const double s = std::sqrt(2.0 * std::abs(xi[0]));
    for (std::size_t r = 0; r < dim_; ++r) {
        for (std::size_t c = 0; c < dim_; ++c) {
            out[r * dim_ + c] = r == c ? s : 0.0;
        }
    }
}

nlohmann::json OrnsteinUhlenbeck::descriptor() const { return {{"model", name()}, {"dim", dim_}}; }

void KramersOscillator::drift(std::span<const double> x, std::span<const double> xi, std::span<double> out) const {
    const double eta = xi[0], a = xi[1], b = xi[2];
    out[0] = x[1];
    out[1] = -eta * x[1] + a * x[0] - b * x[0] * x[0] * x[0];
}

void KramersOscillator::diffusion(std::span<const double>, std::span<const double> xi, std::span<double> out) const {
    out[0] = 0.0;
    out[1] = xi[3];
}

nlohmann::json KramersOscillator::descriptor() const { return {{"model", name()}}; }

FunctionSde::FunctionSde(std::string name, std::size_t state_dim, std::size_t noise_dim, std::size_t xi_dim,
                         Field drift, Field diffusion)
    : name_(std::move(name)), m_(state_dim), l_(noise_dim), p_(xi_dim), drift_(std::move(drift)),
      diffusion_(std::move(diffusion)) {
    if (m_ == 0 || l_ == 0 || !drift_ || !diffusion_) {
        throw ValidationError("FunctionSde: dimensions must be positive and fields set");
    }
}

void FunctionSde::drift(std::span<const double> x, std::span<const double> xi, std::span<double> out) const {
    drift_(x, xi, out);
}

void FunctionSde::diffusion(std::span<const double> x, std::span<const double> xi, std::span<double> out) const {
    diffusion_(x, xi, out);
}

SdeModelPtr make_sde_model(const nlohmann::json& descriptor) {
    if (!descriptor.is_object() || !descriptor.contains("model")) {
        throw ValidationError("sde descriptor must be an object with a \"model\" key");
    }
    const auto model = descriptor.at("model").get<std::string>();
    for (const auto& [key, value] : descriptor.items()) {
        if (key != "model" && !(model == "ornstein_uhlenbeck" && key == "dim")) {
            throw ValidationError("sde descriptor: unknown key '" + key + "'");
        }
    }
    if (model == "ornstein_uhlenbeck") {
        return std::make_shared<OrnsteinUhlenbeck>(descriptor.value("dim", std::size_t{1}));
    }
    if (model == "kramers") {
        return std::make_shared<KramersOscillator>();
    }
    throw ValidationError("unknown sde model '" + model + "'");
}

// ---------------------------------------------------------------------------
// CovariatePath

std::size_t CovariatePath::node_count(double t0, double step, double horizon) {
    if (!(step > 0.0) || !std::isfinite(step)) {
        throw ValidationError("grid step must be positive and finite");
    }
    if (!(horizon > t0) || !std::isfinite(horizon)) {
        throw ValidationError("horizon must be finite and greater than the start time");
    }
    const double q = (horizon - t0) / step;
    // Absorb representation error so that e.g. 3000 / 0.01 counts 300000 full steps.
    return static_cast<std::size_t>(std::floor(q * (1.0 + 1e-13) + 1e-9)) + 1;
}

CovariatePath::CovariatePath(double t0, double step, double horizon, std::size_t state_dim,
                             std::vector<double> values)
    : t0_(t0), step_(step), horizon_(horizon), m_(state_dim), values_(std::move(values)) {
    if (m_ == 0) {
        throw ValidationError("CovariatePath: state dimension must be positive");
    }
    const auto expected = node_count(t0_, step_, horizon_);
    if (values_.size() != expected * m_) {
        throw ValidationError("CovariatePath: expected " + std::to_string(expected) + " nodes of dimension " +
                              std::to_string(m_) + ", got " + std::to_string(values_.size()) + " values");
    }
}

std::size_t CovariatePath::node_index(double t) const {
    const double tol = 1e-9 * std::max(1.0, std::abs(horizon_));
    if (t < t0_ - tol || t > horizon_ + tol) {
        throw ValidationError("covariate lookup at t=" + format_double(t) + " outside [" + format_double(t0_) +
                              ", " + format_double(horizon_) + "]");
    }
    const double q = std::floor((t - t0_) / step_);
    const auto last = nodes() - 1;
    if (q <= 0.0) {
        return 0;
    }
    return std::min(static_cast<std::size_t>(q), last);
}

// ---------------------------------------------------------------------------
// Euler-Maruyama

namespace {

struct EulerStepper {
    const SdeModel& model;
    std::span<const double> xi;
    double step;
    double sqrt_step;
    std::vector<double> drift;
    std::vector<double> sigma;
    std::vector<double> noise;
    std::normal_distribution<double> normal{0.0, 1.0};

    EulerStepper(const SdeModel& m, std::span<const double> xi_, double h)
        : model(m), xi(xi_), step(h), sqrt_step(std::sqrt(h)), drift(m.state_dim()),
          sigma(m.state_dim() * m.noise_dim()), noise(m.noise_dim()) {}

    void advance(std::vector<double>& x, Rng& rng, std::size_t index) {
        const auto mdim = model.state_dim();
        const auto ldim = model.noise_dim();
        model.drift(x, xi, drift);
        model.diffusion(x, xi, sigma);
        for (auto& z : noise) {
            z = normal(rng);
        }
        for (std::size_t r = 0; r < mdim; ++r) {
            double diffusive = 0.0;
            for (std::size_t c = 0; c < ldim; ++c) {
                diffusive += sigma[r * ldim + c] * noise[c];
            }
            x[r] += drift[r] * step + diffusive * sqrt_step;
            if (!std::isfinite(x[r])) {
                throw NumericalError("sde diverged: non-finite state at step " + std::to_string(index));
            }
        }
    }
};

void check_model_inputs(const SdeModel& model, std::span<const double> xi, std::span<const double> x0) {
    if (xi.size() != model.xi_dim()) {
        throw ValidationError("sde '" + model.name() + "' expects " + std::to_string(model.xi_dim()) +
                              " drift parameters, got " + std::to_string(xi.size()));
    }
    if (!x0.empty() && x0.size() != model.state_dim()) {
        throw ValidationError("sde '" + model.name() + "' initial state must have dimension " +
                              std::to_string(model.state_dim()));
    }
}

} // namespace

CovariatePath simulate_path(const SdeModel& model, std::span<const double> xi, std::span<const double> x0,
                            double horizon, double step, Rng& rng) {
    check_model_inputs(model, xi, x0);
    if (x0.size() != model.state_dim()) {
        throw ValidationError("simulate_path: initial state is required");
    }
    const auto n = CovariatePath::node_count(0.0, step, horizon);
    const auto m = model.state_dim();
    std::vector<double> values(n * m);
    std::vector<double> x(x0.begin(), x0.end());
    std::copy(x.begin(), x.end(), values.begin());
    EulerStepper stepper(model, xi, step);
    for (std::size_t k = 1; k < n; ++k) {
        stepper.advance(x, rng, k);
        std::copy(x.begin(), x.end(), values.begin() + static_cast<std::ptrdiff_t>(k * m));
    }
    return CovariatePath(0.0, step, horizon, m, std::move(values));
}

std::vector<double> stationary_draw(const SdeModel& model, std::span<const double> xi, double burn_in,
                                    double step, Rng& rng, std::span<const double> x0) {
    check_model_inputs(model, xi, x0);
    if (!(burn_in > 0.0) || !(step > 0.0)) {
        throw ValidationError("stationary_draw: burn-in and step must be positive");
    }
    std::vector<double> x = x0.empty() ? std::vector<double>(model.state_dim(), 0.0)
                                       : std::vector<double>(x0.begin(), x0.end());
    const auto steps = CovariatePath::node_count(0.0, step, burn_in) - 1;
    EulerStepper stepper(model, xi, step);
    for (std::size_t k = 1; k <= steps; ++k) {
        stepper.advance(x, rng, k);
    }
    return x;
}

StationaryMean baseline_stationary_mean(const SdeModel& model, std::span<const double> xi,
                                        const Baseline& baseline, const HawkesParams& params,
                                        const StationaryMeanOptions& options, Rng& rng) {
    if (options.draws == 0) {
        throw ValidationError("baseline_stationary_mean: at least one draw is required");
    }
    if (baseline.components() != params.dim()) {
        throw ValidationError("baseline_stationary_mean: baseline and parameter dimensions differ");
    }
    const auto d = static_cast<Eigen::Index>(params.dim());
    // Welford updates: a constant baseline gives its value and a zero error exactly.
    Vector mean = Vector::Zero(d);
    Vector m2 = Vector::Zero(d);
    for (std::size_t r = 0; r < options.draws; ++r) {
        const auto x = stationary_draw(model, xi, options.burn_in, options.step, rng);
        const double count = static_cast<double>(r + 1);
        for (Eigen::Index i = 0; i < d; ++i) {
            const auto& mu = params.mu[static_cast<std::size_t>(i)];
            const double g = baseline.family(static_cast<std::size_t>(i))
                                 .evaluate({mu.data(), static_cast<std::size_t>(mu.size())}, x);
            const double delta = g - mean[i];
            mean[i] += delta / count;
            m2[i] += delta * (g - mean[i]);
        }
    }
    const double n = static_cast<double>(options.draws);
    StationaryMean result{mean, Vector::Zero(d)};
    if (options.draws > 1) {
        for (Eigen::Index i = 0; i < d; ++i) {
            result.std_error[i] = std::sqrt(m2[i] / (n - 1.0) / n);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// CSV

void write_covariate_csv(std::ostream& out, const CovariatePath& path) {
    out << "t";
    for (std::size_t c = 0; c < path.state_dim(); ++c) {
        out << ",x" << (c + 1);
    }
    out << '\n';
    for (std::size_t k = 0; k < path.nodes(); ++k) {
        out << format_double(path.node_time(k));
        for (double v : path.node(k)) {
            out << ',' << format_double(v);
        }
        out << '\n';
    }
}

CovariatePath read_covariate_csv(std::istream& in, double horizon) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ValidationError("covariate csv: empty input");
    }
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "t") {
        throw ValidationError("covariate csv: header must be t,x1,...,xm");
    }
    const std::size_t m = header.size() - 1;
    std::vector<double> times;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != m + 1) {
            throw ValidationError("covariate csv: row " + std::to_string(times.size() + 1) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " + std::to_string(m + 1));
        }
        times.push_back(parse_double(fields[0]));
        for (std::size_t c = 1; c <= m; ++c) {
            values.push_back(parse_double(fields[c]));
        }
    }
    if (times.size() < 2) {
        throw ValidationError("covariate csv: at least two grid nodes are required");
    }
    const double t0 = times.front();
    const double step = (times.back() - t0) / static_cast<double>(times.size() - 1);
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double expected = t0 + static_cast<double>(k) * step;
        if (std::abs(times[k] - expected) > 1e-6 * step) {
            throw ValidationError("covariate csv: grid is not uniform at row " + std::to_string(k + 1));
        }
    }
    const double end = horizon > 0.0 ? horizon : times.back();
    return CovariatePath(t0, step, end, m, std::move(values));
}

} // namespace hawkes_drift
