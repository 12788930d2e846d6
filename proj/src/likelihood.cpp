#include "hawkes_drift/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hawkes_drift/errors.hpp"
#include "hawkes_drift/io.hpp"

namespace hawkes_drift {

namespace {

constexpr std::size_t kMaxMuDim = 64;

} // namespace

LikelihoodEvaluator::LikelihoodEvaluator(Baseline baseline, const CovariatePath& path, const EventSequence& events)
    : baseline_(std::move(baseline)), path_(&path), events_(events.sorted()), layout_(ParamLayout::of(baseline_)),
      dim_(baseline_.components()), linear_(baseline_.all_linear()) {
    events_.validate(dim_);
    if (!(events_.horizon > 0.0)) {
        throw ValidationError("likelihood: horizon must be positive");
    }
    if (path.t0() > 0.0 || events_.horizon > path.horizon() * (1.0 + 1e-12)) {
        throw ValidationError("likelihood: covariate path must cover [0, " + format_double(events_.horizon) + "]");
    }
    for (std::size_t i = 0; i < dim_; ++i) {
        const auto& fam = baseline_.family(i);
        if (fam.mu_dim() > kMaxMuDim) {
            throw ValidationError("likelihood: mu blocks larger than 64 are not supported");
        }
        if (fam.x_dim() != 0 && fam.x_dim() != path.state_dim()) {
            throw ValidationError("family '" + fam.name() + "' expects covariate dimension " +
                                  std::to_string(fam.x_dim()) + ", path has " + std::to_string(path.state_dim()));
        }
    }
    counts_ = events_.counts(dim_);

    event_nodes_.reserve(events_.size());
    for (double t : events_.times) {
        event_nodes_.push_back(path.node_index(t));
    }

    const std::size_t n_nodes = path.nodes();
    const double horizon = events_.horizon;
    node_weights_.assign(n_nodes, 0.0);
    for (std::size_t k = 0; k < n_nodes; ++k) {
        const double a = std::max(path.node_time(k), 0.0);
        const double b = k + 1 < n_nodes ? std::min(path.node_time(k + 1), horizon) : horizon;
        node_weights_[k] = std::max(0.0, b - a);
    }

    if (linear_) {
        basis_integrals_.resize(dim_);
        std::vector<double> scratch(kMaxMuDim);
        for (std::size_t i = 0; i < dim_; ++i) {
            const auto& fam = baseline_.family(i);
            auto& integral = basis_integrals_[i];
            integral.assign(fam.mu_dim(), 0.0);
            std::span<double> b(scratch.data(), fam.mu_dim());
            for (std::size_t k = 0; k < n_nodes; ++k) {
                if (node_weights_[k] == 0.0) {
                    continue;
                }
                fam.basis(path.node(k), b);
                for (std::size_t q = 0; q < b.size(); ++q) {
                    integral[q] += node_weights_[k] * b[q];
                }
            }
        }
        event_basis_offset_.reserve(events_.size());
        for (std::size_t e = 0; e < events_.size(); ++e) {
            const auto& fam = baseline_.family(events_.marks[e]);
            event_basis_offset_.push_back(event_basis_.size());
            event_basis_.resize(event_basis_.size() + fam.mu_dim());
            fam.basis(path.node(event_nodes_[e]),
                      {event_basis_.data() + event_basis_offset_.back(), fam.mu_dim()});
        }
    }
}

void LikelihoodEvaluator::check_theta(const Vector& theta) const {
    if (static_cast<std::size_t>(theta.size()) != layout_.size()) {
        throw ValidationError("likelihood: theta has length " + std::to_string(theta.size()) + ", expected " +
                              std::to_string(layout_.size()));
    }
    if (!theta.allFinite()) {
        throw ValidationError("likelihood: theta has non-finite entries");
    }
    for (std::size_t i = 0; i < dim_; ++i) {
        for (std::size_t j = 0; j < dim_; ++j) {
            if (!(theta[static_cast<Eigen::Index>(layout_.beta_index(i, j))] > 0.0)) {
                throw ValidationError("likelihood: beta must be positive");
            }
        }
    }
}

double LikelihoodEvaluator::baseline_integral(std::size_t i, std::span<const double> mu, double upto, double* grad,
                                              double* hess) const {
    const auto& fam = baseline_.family(i);
    const std::size_t p = fam.mu_dim();
    const auto& path = *path_;
    const bool full = upto >= events_.horizon;
    if (linear_ && full) {
        const auto& integral = basis_integrals_[i];
        double value = 0.0;
        for (std::size_t q = 0; q < p; ++q) {
            value += mu[q] * integral[q];
            if (grad) {
                grad[q] = integral[q];
            }
        }
        if (hess) {
            std::fill(hess, hess + p * p, 0.0);
        }
        return value;
    }
    double g_buf[kMaxMuDim];
    double h_buf[kMaxMuDim * kMaxMuDim];
    double value = 0.0;
    if (grad) {
        std::fill(grad, grad + p, 0.0);
    }
    if (hess) {
        std::fill(hess, hess + p * p, 0.0);
    }
    const std::size_t n_nodes = path.nodes();
    for (std::size_t k = 0; k < n_nodes; ++k) {
        double w = node_weights_[k];
        if (!full) {
            const double a = std::max(path.node_time(k), 0.0);
            const double b = k + 1 < n_nodes ? std::min(path.node_time(k + 1), upto) : upto;
            w = std::max(0.0, b - a);
        }
        if (w == 0.0) {
            if (!full && path.node_time(k) >= upto) {
                break;
            }
            continue;
        }
        const auto x = path.node(k);
        value += w * fam.evaluate(mu, x);
        if (grad) {
            fam.grad_mu(mu, x, {g_buf, p});
            for (std::size_t q = 0; q < p; ++q) {
                grad[q] += w * g_buf[q];
            }
        }
        if (hess) {
            fam.hess_mu(mu, x, {h_buf, p * p});
            for (std::size_t q = 0; q < p * p; ++q) {
                hess[q] += w * h_buf[q];
            }
        }
    }
    return value;
}

double LikelihoodEvaluator::sweep(const Vector& theta, Need need, Vector* gradient, Matrix* matrix) const {
    check_theta(theta);
    const std::size_t d = dim_;
    const std::size_t dd = d * d;
    const auto p = static_cast<Eigen::Index>(layout_.size());
    const bool want_grad = need == Need::gradient || need == Need::hessian;
    const bool want_hess = need == Need::hessian;
    const bool want_outer = need == Need::outer;
    const bool want_b = need != Need::value;

    if (want_grad) {
        gradient->setZero(p);
    }
    if (want_hess || want_outer) {
        matrix->setZero(p, p);
    }

    std::vector<double> alpha(dd), beta(dd);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            alpha[i * d + j] = theta[static_cast<Eigen::Index>(layout_.alpha_index(i, j))];
            beta[i * d + j] = theta[static_cast<Eigen::Index>(layout_.beta_index(i, j))];
        }
    }
    auto mu_of = [&](std::size_t i) {
        return std::span<const double>(theta.data() + layout_.mu_offset(i), layout_.mu_dim(i));
    };

    std::vector<double> A(dd, 0.0), B(dd, 0.0), C(dd, 0.0);
    std::vector<Eigen::Index> idx;
    std::vector<double> val;
    idx.reserve(kMaxMuDim + 2 * d);
    val.reserve(kMaxMuDim + 2 * d);
    double g_grad[kMaxMuDim];
    double g_hess[kMaxMuDim * kMaxMuDim];

    double loglik = 0.0;
    double t_prev = 0.0;
    const auto& path = *path_;
    for (std::size_t e = 0; e < events_.size(); ++e) {
        const double t = events_.times[e];
        const double dt = t - t_prev;
        if (dt > 0.0) {
            for (std::size_t q = 0; q < dd; ++q) {
                const double decay = std::exp(-beta[q] * dt);
                if (want_hess) {
                    C[q] = decay * (C[q] + 2.0 * dt * B[q] + dt * dt * A[q]);
                }
                if (want_b) {
                    B[q] = decay * (B[q] + dt * A[q]);
                }
                A[q] *= decay;
            }
        }
        const std::size_t c = events_.marks[e];
        const auto& fam = baseline_.family(c);
        const std::size_t pc = fam.mu_dim();
        const auto mu = mu_of(c);

        double g;
        if (linear_) {
            const double* b = event_basis_.data() + event_basis_offset_[e];
            g = 0.0;
            for (std::size_t q = 0; q < pc; ++q) {
                g += mu[q] * b[q];
                g_grad[q] = b[q];
            }
            if (want_hess) {
                std::fill(g_hess, g_hess + pc * pc, 0.0);
            }
        } else {
            const auto x = path.node(event_nodes_[e]);
            g = fam.evaluate(mu, x);
            if (want_b) {
                fam.grad_mu(mu, x, {g_grad, pc});
            }
            if (want_hess) {
                fam.hess_mu(mu, x, {g_hess, pc * pc});
            }
        }
        double lambda = g;
        for (std::size_t j = 0; j < d; ++j) {
            lambda += alpha[c * d + j] * A[c * d + j];
        }
        if (!(lambda > 0.0) || !std::isfinite(lambda)) {
            throw ContractError("non-positive intensity " + format_double(lambda) + " at event " + std::to_string(e) +
                                " (t=" + format_double(t) + ", component " + std::to_string(c + 1) + ")");
        }
        loglik += std::log(lambda);

        if (want_b) {
            idx.clear();
            val.clear();
            for (std::size_t q = 0; q < pc; ++q) {
                idx.push_back(static_cast<Eigen::Index>(layout_.mu_index(c, q)));
                val.push_back(g_grad[q]);
            }
            for (std::size_t j = 0; j < d; ++j) {
                idx.push_back(static_cast<Eigen::Index>(layout_.alpha_index(c, j)));
                val.push_back(A[c * d + j]);
            }
            for (std::size_t j = 0; j < d; ++j) {
                idx.push_back(static_cast<Eigen::Index>(layout_.beta_index(c, j)));
                val.push_back(-alpha[c * d + j] * B[c * d + j]);
            }
            const double inv = 1.0 / lambda;
            const double inv2 = inv * inv;
            if (want_grad) {
                for (std::size_t a = 0; a < idx.size(); ++a) {
                    (*gradient)[idx[a]] += val[a] * inv;
                }
            }
            if (want_hess || want_outer) {
                const double sign = want_hess ? -1.0 : 1.0;
                for (std::size_t a = 0; a < idx.size(); ++a) {
                    for (std::size_t b = 0; b < idx.size(); ++b) {
                        (*matrix)(idx[a], idx[b]) += sign * val[a] * val[b] * inv2;
                    }
                }
            }
            if (want_hess) {
                for (std::size_t q = 0; q < pc; ++q) {
                    for (std::size_t r = 0; r < pc; ++r) {
                        (*matrix)(idx[q], idx[r]) += g_hess[q * pc + r] * inv;
                    }
                }
                for (std::size_t j = 0; j < d; ++j) {
                    const auto ia = static_cast<Eigen::Index>(layout_.alpha_index(c, j));
                    const auto ib = static_cast<Eigen::Index>(layout_.beta_index(c, j));
                    (*matrix)(ia, ib) += -B[c * d + j] * inv;
                    (*matrix)(ib, ia) += -B[c * d + j] * inv;
                    (*matrix)(ib, ib) += alpha[c * d + j] * C[c * d + j] * inv;
                }
            }
        }

        for (std::size_t i = 0; i < d; ++i) {
            A[i * d + c] += 1.0;
        }
        t_prev = t;
    }

    if (want_outer) {
        return loglik;
    }

    // Decay to the horizon for the closed-form kernel compensator.
    const double horizon = events_.horizon;
    const double dt = horizon - t_prev;
    if (dt > 0.0) {
        for (std::size_t q = 0; q < dd; ++q) {
            const double decay = std::exp(-beta[q] * dt);
            if (want_hess) {
                C[q] = decay * (C[q] + 2.0 * dt * B[q] + dt * dt * A[q]);
            }
            if (want_b) {
                B[q] = decay * (B[q] + dt * A[q]);
            }
            A[q] *= decay;
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t q = i * d + j;
            const double a = alpha[q];
            const double b = beta[q];
            const double mass = static_cast<double>(counts_[j]) - A[q];
            loglik -= a / b * mass;
            if (want_grad) {
                const auto ia = static_cast<Eigen::Index>(layout_.alpha_index(i, j));
                const auto ib = static_cast<Eigen::Index>(layout_.beta_index(i, j));
                (*gradient)[ia] -= mass / b;
                (*gradient)[ib] -= -a * mass / (b * b) + a * B[q] / b;
                if (want_hess) {
                    const double cross = -mass / (b * b) + B[q] / b;
                    (*matrix)(ia, ib) -= cross;
                    (*matrix)(ib, ia) -= cross;
                    (*matrix)(ib, ib) -= 2.0 * a * mass / (b * b * b) - 2.0 * a * B[q] / (b * b) - a * C[q] / b;
                }
            }
        }
    }

    for (std::size_t i = 0; i < d; ++i) {
        const std::size_t pi = layout_.mu_dim(i);
        const auto off = static_cast<Eigen::Index>(layout_.mu_offset(i));
        loglik -= baseline_integral(i, mu_of(i), horizon, want_grad ? g_grad : nullptr,
                                    want_hess ? g_hess : nullptr);
        if (want_grad) {
            for (std::size_t q = 0; q < pi; ++q) {
                (*gradient)[off + static_cast<Eigen::Index>(q)] -= g_grad[q];
            }
        }
        if (want_hess) {
            for (std::size_t q = 0; q < pi; ++q) {
                for (std::size_t r = 0; r < pi; ++r) {
                    (*matrix)(off + static_cast<Eigen::Index>(q), off + static_cast<Eigen::Index>(r)) -=
                        g_hess[q * pi + r];
                }
            }
        }
    }
    return loglik;
}

double LikelihoodEvaluator::value(const Vector& theta) const { return sweep(theta, Need::value, nullptr, nullptr); }

double LikelihoodEvaluator::value_and_gradient(const Vector& theta, Vector& gradient) const {
    return sweep(theta, Need::gradient, &gradient, nullptr);
}

double LikelihoodEvaluator::value_gradient_hessian(const Vector& theta, Vector& gradient, Matrix& hessian) const {
    return sweep(theta, Need::hessian, &gradient, &hessian);
}

Matrix LikelihoodEvaluator::outer_product_sum(const Vector& theta) const {
    Matrix out;
    sweep(theta, Need::outer, nullptr, &out);
    return out;
}

Vector LikelihoodEvaluator::compensator(const Vector& theta, double upto) const {
    check_theta(theta);
    if (upto < 0.0 || upto > events_.horizon) {
        throw ValidationError("compensator: time " + format_double(upto) + " outside [0, horizon]");
    }
    const auto params = layout_.unflatten(theta);
    Vector out = Vector::Zero(static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < dim_; ++i) {
        const auto& mu = params.mu[i];
        out[static_cast<Eigen::Index>(i)] =
            baseline_integral(i, {mu.data(), static_cast<std::size_t>(mu.size())}, upto, nullptr, nullptr);
    }
    for (std::size_t e = 0; e < events_.size() && events_.times[e] < upto; ++e) {
        const std::size_t j = events_.marks[e];
        const double elapsed = upto - events_.times[e];
        for (std::size_t i = 0; i < dim_; ++i) {
            const double a = params.alpha(i, j);
            const double b = params.beta(i, j);
            out[static_cast<Eigen::Index>(i)] += a / b * -std::expm1(-b * elapsed);
        }
    }
    return out;
}

std::vector<double> LikelihoodEvaluator::total_compensator_at_events(const Vector& theta) const {
    check_theta(theta);
    const auto params = layout_.unflatten(theta);
    const std::size_t d = dim_;
    const auto& path = *path_;

    // Running baseline integral: cumulative over whole cells, plus the partial cell of each event.
    std::vector<double> g_node(d);
    auto eval_node = [&](std::size_t k) {
        for (std::size_t i = 0; i < d; ++i) {
            const auto& mu = params.mu[i];
            g_node[i] = baseline_.family(i).evaluate({mu.data(), static_cast<std::size_t>(mu.size())}, path.node(k));
        }
    };
    double cumulative = 0.0;
    std::size_t node = 0;
    eval_node(0);

    std::vector<double> A(d * d, 0.0);
    std::vector<std::size_t> seen(d, 0);
    std::vector<double> out;
    out.reserve(events_.size());
    double t_prev = 0.0;
    for (std::size_t e = 0; e < events_.size(); ++e) {
        const double t = events_.times[e];
        const std::size_t target = event_nodes_[e];
        while (node < target) {
            const double a = std::max(path.node_time(node), 0.0);
            const double b = path.node_time(node + 1);
            double total = 0.0;
            for (double g : g_node) {
                total += g;
            }
            cumulative += std::max(0.0, b - a) * total;
            ++node;
            eval_node(node);
        }
        double partial = 0.0;
        for (double g : g_node) {
            partial += g;
        }
        double value = cumulative + partial * std::max(0.0, t - std::max(path.node_time(node), 0.0));

        const double dt = t - t_prev;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t q = i * d + j;
                A[q] *= std::exp(-params.beta(i, j) * dt);
                value += params.alpha(i, j) / params.beta(i, j) * (static_cast<double>(seen[j]) - A[q]);
            }
        }
        out.push_back(value);
        const std::size_t c = events_.marks[e];
        for (std::size_t i = 0; i < d; ++i) {
            A[i * d + c] += 1.0;
        }
        ++seen[c];
        t_prev = t;
    }
    return out;
}

Vector LikelihoodEvaluator::total_compensator_gradient(const Vector& theta) const {
    check_theta(theta);
    const auto params = layout_.unflatten(theta);
    const std::size_t d = dim_;
    Vector out = Vector::Zero(static_cast<Eigen::Index>(layout_.size()));
    double g_grad[kMaxMuDim];
    for (std::size_t i = 0; i < d; ++i) {
        const auto& mu = params.mu[i];
        baseline_integral(i, {mu.data(), static_cast<std::size_t>(mu.size())}, events_.horizon, g_grad, nullptr);
        for (std::size_t q = 0; q < layout_.mu_dim(i); ++q) {
            out[static_cast<Eigen::Index>(layout_.mu_index(i, q))] = g_grad[q];
        }
    }
    // Per pair: E = sum exp(-beta tau), B = sum tau exp(-beta tau) over tau = horizon - s.
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double a = params.alpha(i, j);
            const double b = params.beta(i, j);
            double E = 0.0, Bsum = 0.0;
            for (std::size_t e = 0; e < events_.size(); ++e) {
                if (events_.marks[e] != j) {
                    continue;
                }
                const double tau = events_.horizon - events_.times[e];
                const double w = std::exp(-b * tau);
                E += w;
                Bsum += tau * w;
            }
            const double mass = static_cast<double>(counts_[j]) - E;
            out[static_cast<Eigen::Index>(layout_.alpha_index(i, j))] = mass / b;
            out[static_cast<Eigen::Index>(layout_.beta_index(i, j))] = -a * mass / (b * b) + a * Bsum / b;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// free functions

double log_likelihood(const HawkesParams& params, const Baseline& baseline, const CovariatePath& path,
                      const EventSequence& events) {
    const LikelihoodEvaluator eval(baseline, path, events);
    return eval.value(eval.layout().flatten(params));
}

Vector compensator(const HawkesParams& params, const Baseline& baseline, const CovariatePath& path,
                   const EventSequence& events, double upto) {
    const LikelihoodEvaluator eval(baseline, path, events);
    return eval.compensator(eval.layout().flatten(params), upto);
}

Vector grad_log_likelihood(const HawkesParams& params, const Baseline& baseline, const CovariatePath& path,
                           const EventSequence& events) {
    const LikelihoodEvaluator eval(baseline, path, events);
    Vector grad;
    eval.value_and_gradient(eval.layout().flatten(params), grad);
    return grad;
}

Matrix hessian_log_likelihood(const HawkesParams& params, const Baseline& baseline, const CovariatePath& path,
                              const EventSequence& events) {
    const LikelihoodEvaluator eval(baseline, path, events);
    Vector grad;
    Matrix hess;
    eval.value_gradient_hessian(eval.layout().flatten(params), grad, hess);
    return hess;
}

double sde_log_likelihood(const SdeModel& model, std::span<const double> xi, const CovariatePath& path) {
    if (xi.size() != model.xi_dim()) {
        throw ValidationError("sde_log_likelihood: wrong number of drift parameters");
    }
    const auto m = static_cast<Eigen::Index>(model.state_dim());
    const auto l = static_cast<Eigen::Index>(model.noise_dim());
    if (static_cast<std::size_t>(m) != path.state_dim()) {
        throw ValidationError("sde_log_likelihood: path dimension does not match the model");
    }
    Vector b(m);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sigma(m, l);
    double loglik = 0.0;
    const double h = path.step();
    for (std::size_t k = 0; k + 1 < path.nodes(); ++k) {
        const auto x = path.node(k);
        const auto next = path.node(k + 1);
        model.drift(x, xi, {b.data(), static_cast<std::size_t>(m)});
        model.diffusion(x, xi, {sigma.data(), static_cast<std::size_t>(m * l)});
        const Matrix a = sigma * sigma.transpose();
        Eigen::LDLT<Matrix> ldlt(a);
        const double max_pivot = ldlt.vectorD().cwiseAbs().maxCoeff();
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().cwiseAbs().minCoeff() > 1e-14 * std::max(1.0, max_pivot))) {
            throw NumericalError("sde_log_likelihood: diffusion matrix a(x) is singular at grid node " +
                                 std::to_string(k));
        }
        Vector dx(m);
        for (Eigen::Index r = 0; r < m; ++r) {
            dx[r] = next[static_cast<std::size_t>(r)] - x[static_cast<std::size_t>(r)];
        }
        const Vector a_inv_b = ldlt.solve(b);
        loglik += a_inv_b.dot(dx) - 0.5 * a_inv_b.dot(b) * h;
    }
    return loglik;
}

} // namespace hawkes_drift
