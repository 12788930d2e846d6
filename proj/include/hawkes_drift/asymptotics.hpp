#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "hawkes_drift/baseline.hpp"
#include "hawkes_drift/model.hpp"
#include "hawkes_drift/sde.hpp"
#include "hawkes_drift/stattest.hpp"

namespace hawkes_drift {

/// (I - K)^{-1} mu_bar by a linear solve; throws ValidationError unless rho(K) < 1.
[[nodiscard]] Vector lln_limit(const HawkesParams& params, const Vector& mu_bar);

struct LlnTarget {
    Vector limit;
    /// Monte Carlo error of mu_bar propagated through (I - K)^{-1}.
    Vector std_error;
    StationaryMean mu_bar;
};

/// Limit with mu_bar estimated by baseline_stationary_mean.
[[nodiscard]] LlnTarget lln_limit(const HawkesParams& params, const Baseline& baseline, const SdeModel& model,
                                  std::span<const double> xi, const StationaryMeanOptions& options, Rng& rng);

/// Everything needed to simulate one replicate trajectory on [0, horizon].
struct ReplicateSpec {
    const SdeModel* model{nullptr};
    std::vector<double> xi;
    std::vector<double> x0;
    double horizon{0.0};
    double step{0.01};
    std::uint64_t master_seed{0};
    std::size_t replicates{1};
    std::size_t jobs{1};
};

/// N_i(T) per replicate (rows) and component (columns); replicate r draws from substream (master, r, task).
[[nodiscard]] Matrix simulate_counts(const HawkesParams& params, const Baseline& baseline, const ReplicateSpec& spec,
                                     const char* task);

struct LimitCheck {
    Vector theoretical_limit;
    Vector empirical_value;
    /// Combined error: replicate spread of N(T)/T and the error of the limit itself.
    Vector std_error;
    std::vector<bool> pass;
    double k{3.0};
    double horizon{0.0};
    std::size_t replicates{0};

    [[nodiscard]] bool all_pass() const;
};

/// Mean N(T)/T over replicates against the limit; pass iff |empirical - limit| <= k * std_error.
[[nodiscard]] LimitCheck lln_check(const HawkesParams& params, const Baseline& baseline, const ReplicateSpec& spec,
                                   const LlnTarget& target, double k = 3.0);
[[nodiscard]] LimitCheck lln_check_from_counts(const Matrix& counts, double horizon, const LlnTarget& target,
                                               double k = 3.0);

/// (I - K)^{-1} Sigma (I - K)^{-T} with Sigma = diag((I - K)^{-1} mu_bar).
[[nodiscard]] Matrix clt_covariance(const HawkesParams& params, const Vector& mu_bar);

struct CltCheck {
    /// sqrt(T) (N(T)/T - limit), one row per replicate.
    Matrix deviations;
    Matrix target_covariance;
    Matrix empirical_covariance;
    /// ||empirical - target||_F / ||target||_F.
    double frobenius_gap{0.0};
    /// Per-component KS against N(0, target_ii).
    std::vector<TestReport> marginals;
    /// Bonferroni combination of the marginal KS tests.
    TestReport report;
};

[[nodiscard]] CltCheck clt_marginal_check(const HawkesParams& params, const Baseline& baseline,
                                          const ReplicateSpec& spec, const LlnTarget& target, double alpha = 0.01);
[[nodiscard]] CltCheck clt_check_from_counts(const HawkesParams& params, const Matrix& counts, double horizon,
                                             const LlnTarget& target, double alpha = 0.01);

[[nodiscard]] nlohmann::json to_json(const LimitCheck& check);
[[nodiscard]] nlohmann::json to_json(const CltCheck& check);

/// `replicate,z1,...,zd`
void write_deviations_csv(std::ostream& out, const Matrix& deviations);

} // namespace hawkes_drift
