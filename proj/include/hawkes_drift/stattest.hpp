#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hawkes_drift/infer.hpp"
#include "hawkes_drift/likelihood.hpp"
#include "hawkes_drift/random.hpp"

namespace hawkes_drift {

enum class TestSide { two_sided, greater, less };

[[nodiscard]] std::string to_string(TestSide side);
[[nodiscard]] TestSide test_side_from_string(const std::string& name);

struct TestReport {
    std::string name;
    double statistic{0.0};
    double p_value{1.0};
    bool reject_at_alpha{false};
    double alpha{0.05};
    TestSide side{TestSide::two_sided};
    nlohmann::json metadata = nlohmann::json::object();
};

[[nodiscard]] nlohmann::json to_json(const TestReport& report);

[[nodiscard]] double normal_cdf(double z);
[[nodiscard]] double normal_quantile(double p);

/// Normal-reference p-value of a Wald statistic for the given alternative.
[[nodiscard]] double normal_p_value(double z, TestSide side);

/// Z = sqrt(T) (theta_hat_k - theta0) / sqrt((I^-1)_kk).
[[nodiscard]] TestReport wald_one_coef(const Vector& theta_hat, const FisherEstimate& fisher, double horizon,
                                       std::size_t index, double theta0, double alpha = 0.05,
                                       TestSide side = TestSide::two_sided);
[[nodiscard]] TestReport wald_one_coef(const FitResult& fit, const FisherEstimate& fisher, const std::string& coef,
                                       double theta0, double alpha = 0.05, TestSide side = TestSide::two_sided);

/// Z = sqrt(T) (theta_hat_i - theta_hat_j) / sqrt((I^-1)_ii - 2 (I^-1)_ij + (I^-1)_jj).
[[nodiscard]] TestReport wald_equal(const Vector& theta_hat, const FisherEstimate& fisher, double horizon,
                                    std::size_t index_i, std::size_t index_j, double alpha = 0.05,
                                    TestSide side = TestSide::two_sided);
[[nodiscard]] TestReport wald_equal(const FitResult& fit, const FisherEstimate& fisher, const std::string& coef_i,
                                    const std::string& coef_j, double alpha = 0.05,
                                    TestSide side = TestSide::two_sided);

/// Increments of the total compensator between successive pooled events, with T_0 = 0:
/// E_k = Lambda(T_k) - Lambda(T_{k-1}), one value per event.
[[nodiscard]] std::vector<double> time_change_residuals(const LikelihoodEvaluator& likelihood, const Vector& theta);
[[nodiscard]] std::vector<double> time_change_residuals(const HawkesParams& params, const Baseline& baseline,
                                                        const CovariatePath& path, const EventSequence& events);

enum class CorrectionVariant {
    /// rho I^{-1/2} x, the published algorithm.
    inverse_sqrt,
    /// rho I x, as displayed in the theorem.
    direct,
};

[[nodiscard]] std::string to_string(CorrectionVariant variant);
[[nodiscard]] CorrectionVariant correction_variant_from_string(const std::string& name);

struct ResidualSet {
    /// Corrected increments between successive events (n - 1 values).
    std::vector<double> values;
    std::vector<double> raw;
    std::vector<double> correction;
    /// rho I^{-1/2} x (or rho I x): the scalar multiplying (T_i - T_{i-1}) / sqrt(T).
    double slope{0.0};
    Vector gaussian;
    Vector rho;
    CorrectionVariant variant{CorrectionVariant::inverse_sqrt};
    double horizon{0.0};
};

struct CorrectionOptions {
    CorrectionVariant variant{CorrectionVariant::inverse_sqrt};
    /// Use this x instead of drawing one from N(0, I_p).
    std::optional<Vector> forced_gaussian;
};

/// Corrected increments for the events held by `likelihood`, at the estimate theta_hat with Fisher
/// estimate `fisher`. For the two-sample form, theta_hat and fisher come from an independent fit
/// while `likelihood` holds the tested trajectory.
[[nodiscard]] ResidualSet corrected_residuals(const LikelihoodEvaluator& likelihood, const Vector& theta_hat,
                                              const FisherEstimate& fisher, Rng& rng,
                                              const CorrectionOptions& options = {});

struct KsResult {
    double statistic{0.0};
    double p_value{1.0};
    std::size_t n{0};
};

/// P(K > lambda) for the Kolmogorov limit law.
[[nodiscard]] double kolmogorov_survival(double lambda);

/// One-sample KS against a continuous cdf, asymptotic p-value at sqrt(n) D.
[[nodiscard]] KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf);
/// KS against Exp(1); every entry must be positive.
[[nodiscard]] KsResult ks_exp1(std::span<const double> sample);
[[nodiscard]] KsResult ks_normal(std::span<const double> sample, double mean = 0.0, double sd = 1.0);
[[nodiscard]] KsResult ks_uniform(std::span<const double> sample);

/// floor(n^exponent), exact for exponent 2/3.
[[nodiscard]] std::size_t subsample_size(std::size_t n, double exponent);

struct GofOptions {
    bool subsample{false};
    double exponent{2.0 / 3.0};
    double alpha{0.05};
};

/// KS of the corrected increments against Exp(1), on all of them or on a uniform subsample
/// without replacement. Negative corrected values count as mass at zero of the empirical cdf.
[[nodiscard]] TestReport gof_corrected_ks(const ResidualSet& residuals, Rng& rng, const GofOptions& options = {});

/// `i,e_raw,e_corrected`
void write_residuals_csv(std::ostream& out, const ResidualSet& residuals);
/// Sorted p-values with uniform plotting positions: `i,p_value,uniform_quantile`.
void write_pvalues_csv(std::ostream& out, std::span<const double> p_values);

} // namespace hawkes_drift
