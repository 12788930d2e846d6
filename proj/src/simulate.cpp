#include "hawkes_drift/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "hawkes_drift/errors.hpp"
#include "hawkes_drift/io.hpp"

namespace hawkes_drift {

// ---------------------------------------------------------------------------
// KernelState

Matrix KernelState::decayed(const Matrix& beta, double t) const {
    if (t < t_anchor_) {
        throw ValidationError("kernel state cannot be decayed backwards in time");
    }
    const double dt = t - t_anchor_;
    return y_.cwiseProduct((-beta.array() * dt).exp().matrix());
}

Vector KernelState::excitation(const Matrix& beta, double t) const { return decayed(beta, t).rowwise().sum(); }

void KernelState::decay_to(const Matrix& beta, double t) {
    y_ = decayed(beta, t);
    t_anchor_ = t;
}

void KernelState::jump(const Matrix& alpha, std::size_t j) { y_.col(static_cast<Eigen::Index>(j)) += alpha.col(static_cast<Eigen::Index>(j)); }

// ---------------------------------------------------------------------------
// EventSequence

std::vector<std::size_t> EventSequence::counts(std::size_t dim) const {
    std::vector<std::size_t> n(dim, 0);
    for (auto m : marks) {
        ++n.at(m);
    }
    return n;
}

void EventSequence::validate(std::size_t dim) const {
    if (times.size() != marks.size()) {
        throw ValidationError("events: times and marks have different lengths");
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!(times[k] > 0.0) || times[k] > horizon) {
            throw ValidationError("events: time " + format_double(times[k]) + " at index " + std::to_string(k) +
                                  " is outside (0, " + format_double(horizon) + "]");
        }
        if (k > 0 && !(times[k] > times[k - 1])) {
            throw ValidationError("events: times are not strictly increasing at index " + std::to_string(k));
        }
        if (marks[k] >= dim) {
            throw ValidationError("events: mark " + std::to_string(marks[k] + 1) + " at index " +
                                  std::to_string(k) + " exceeds dimension " + std::to_string(dim));
        }
    }
}

EventSequence EventSequence::sorted() const {
    if (times.size() != marks.size()) {
        throw ValidationError("events: times and marks have different lengths");
    }
    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
    EventSequence out;
    out.horizon = horizon;
    out.times.reserve(times.size());
    out.marks.reserve(times.size());
    for (auto k : order) {
        out.times.push_back(times[k]);
        out.marks.push_back(marks[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// intensity

namespace {

double baseline_value(const Baseline& baseline, const HawkesParams& params, std::size_t i,
                      std::span<const double> x) {
    const auto& mu = params.mu[i];
    return baseline.family(i).evaluate({mu.data(), static_cast<std::size_t>(mu.size())}, x);
}

void check_model(const HawkesParams& params, const Baseline& baseline, const CovariatePath& path) {
    params.check_shape();
    if (baseline.components() != params.dim()) {
        throw ValidationError("baseline has " + std::to_string(baseline.components()) +
                              " components but parameters have " + std::to_string(params.dim()));
    }
    for (std::size_t i = 0; i < params.dim(); ++i) {
        const auto& fam = baseline.family(i);
        if (static_cast<std::size_t>(params.mu[i].size()) != fam.mu_dim()) {
            throw ValidationError("mu block " + std::to_string(i + 1) + " does not match family '" + fam.name() + "'");
        }
        if (fam.x_dim() != 0 && fam.x_dim() != path.state_dim()) {
            throw ValidationError("family '" + fam.name() + "' expects a covariate of dimension " +
                                  std::to_string(fam.x_dim()) + ", path has " + std::to_string(path.state_dim()));
        }
    }
}

} // namespace

Vector intensity_at(const HawkesParams& params, const Baseline& baseline, const CovariatePath& path,
                    const KernelState& state, double t) {
    check_model(params, baseline, path);
    const auto x = path.lookup(t);
    Vector lambda = state.excitation(params.beta, t);
    for (std::size_t i = 0; i < params.dim(); ++i) {
        lambda[static_cast<Eigen::Index>(i)] += baseline_value(baseline, params, i, x);
    }
    return lambda;
}

// ---------------------------------------------------------------------------
// thinning

EventSequence thin_simulate(const HawkesParams& params, const Baseline& baseline, const CovariatePath& path,
                            Rng& rng, const ThinningOptions& options) {
    check_model(params, baseline, path);
    const std::size_t d = params.dim();
    const double horizon = path.horizon();

    std::vector<double> g_plus(d);
    for (std::size_t i = 0; i < d; ++i) {
        const auto& mu = params.mu[i];
        const auto env = baseline.family(i).envelope({mu.data(), static_cast<std::size_t>(mu.size())});
        if (!(env.lower > 0.0)) {
            throw ContractError("component " + std::to_string(i + 1) + ": baseline envelope lower bound must be > 0");
        }
        if (env.bounded()) {
            g_plus[i] = env.upper;
        } else if (baseline.family(i).unchecked()) {
            double peak = 0.0;
            for (std::size_t k = 0; k < path.nodes(); ++k) {
                peak = std::max(peak, baseline_value(baseline, params, i, path.node(k)));
            }
            g_plus[i] = peak;
        } else {
            throw ContractError("component " + std::to_string(i + 1) + ": baseline has no finite envelope");
        }
    }
    const double g_plus_total = std::accumulate(g_plus.begin(), g_plus.end(), 0.0);

    EventSequence events;
    events.horizon = horizon;
    KernelState state(d, 0.0);
    std::exponential_distribution<double> waiting(1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const Eigen::ArrayXXd neg_beta = -params.beta.array();

    double t = 0.0;
    Vector lambda(static_cast<Eigen::Index>(d));
    while (true) {
        // Y only decays between events, so the bound at t dominates the intensity until the next event.
        const double bound = g_plus_total + state.excitation(params.beta, t).sum();
        double proposal = t + waiting(rng) / bound;
        if (proposal > horizon) {
            break;
        }
        if (proposal == t) {
            proposal = std::nextafter(t, horizon);
        }
        const Matrix y = state.y().cwiseProduct((neg_beta * (proposal - state.t_anchor())).exp().matrix());
        const auto x = path.lookup(proposal);
        double total = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double g = baseline_value(baseline, params, i, x);
            if (options.check_envelope && g > g_plus[i] * (1.0 + 1e-12)) {
                throw ContractError("baseline of component " + std::to_string(i + 1) + " is " + format_double(g) +
                                    " at t=" + format_double(proposal) + ", above its envelope " +
                                    format_double(g_plus[i]));
            }
            lambda[static_cast<Eigen::Index>(i)] = g + y.row(static_cast<Eigen::Index>(i)).sum();
            total += lambda[static_cast<Eigen::Index>(i)];
        }
        if (total > bound * (1.0 + 1e-12)) {
            throw ContractError("thinning bound " + format_double(bound) + " below total intensity " +
                                format_double(total) + " at t=" + format_double(proposal));
        }
        t = proposal;
        if (uniform(rng) * bound <= total) {
            double pick = uniform(rng) * total;
            std::size_t mark = d - 1;
            for (std::size_t i = 0; i < d; ++i) {
                pick -= lambda[static_cast<Eigen::Index>(i)];
                if (pick < 0.0) {
                    mark = i;
                    break;
                }
            }
            state.decay_to(params.beta, t);
            state.jump(params.alpha, mark);
            events.times.push_back(t);
            events.marks.push_back(mark);
        }
    }
    return events;
}

// ---------------------------------------------------------------------------
// replay

std::vector<Vector> replay_intensity(const HawkesParams& params, const Baseline& baseline,
                                     const CovariatePath& path, const EventSequence& events,
                                     std::span<const double> query_times) {
    check_model(params, baseline, path);
    const auto sorted = events.sorted();
    sorted.validate(params.dim());
    std::vector<std::size_t> order(query_times.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return query_times[a] < query_times[b]; });

    std::vector<Vector> out(query_times.size());
    KernelState state(params.dim(), 0.0);
    std::size_t next_event = 0;
    for (auto q : order) {
        const double t = query_times[q];
        if (t < 0.0 || t > path.horizon()) {
            throw ValidationError("replay_intensity: query time " + format_double(t) + " outside [0, horizon]");
        }
        // Only events strictly before t contribute.
        while (next_event < sorted.size() && sorted.times[next_event] < t) {
            state.decay_to(params.beta, sorted.times[next_event]);
            state.jump(params.alpha, sorted.marks[next_event]);
            ++next_event;
        }
        out[q] = intensity_at(params, baseline, path, state, t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

void write_events_csv(std::ostream& out, const EventSequence& events) {
    const auto sorted = events.sorted();
    out << "t,mark\n";
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        out << format_double(sorted.times[k]) << ',' << (sorted.marks[k] + 1) << '\n';
    }
}

EventSequence read_events_csv(std::istream& in, double horizon) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ValidationError("events csv: empty input");
    }
    const auto header = split_csv_line(line);
    if (header.size() != 2 || header[0] != "t" || header[1] != "mark") {
        throw ValidationError("events csv: header must be t,mark");
    }
    EventSequence events;
    events.horizon = horizon;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != 2) {
            throw ValidationError("events csv: row " + std::to_string(events.size() + 1) + " must have 2 fields");
        }
        events.times.push_back(parse_double(fields[0]));
        const double mark = parse_double(fields[1]);
        if (mark < 1.0 || mark != std::floor(mark)) {
            throw ValidationError("events csv: marks must be positive integers (1-based)");
        }
        events.marks.push_back(static_cast<std::size_t>(mark) - 1);
    }
    return events;
}

} // namespace hawkes_drift
