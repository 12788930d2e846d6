#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "hawkes_drift/errors.hpp"
#include "hawkes_drift/infer.hpp"
#include "hawkes_drift/likelihood.hpp"

using namespace hawkes_drift;

namespace {

ThetaBox scalar_box() {
    const ParamLayout layout({1});
    return ThetaBox::from_ranges(layout, {Vector::Constant(1, 0.05)}, {Vector::Constant(1, 5.0)}, {0.001, 5.0},
                                 {0.05, 10.0});
}

fixtures::Dataset scalar_data(const HawkesParams& p, double horizon, std::uint64_t seed) {
    const fixtures::ConstantSetup setup;
    return fixtures::simulate(*setup.model, setup.xi, setup.x0, p, setup.baseline, horizon, 0.5, seed);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

TEST(Infer, LatinHypercubeStratifiesEveryCoordinate) {
    const auto box = scalar_box();
    Rng rng(3);
    const std::size_t n = 8;
    const auto points = latin_hypercube(box, n, rng);
    ASSERT_EQ(points.size(), n);
    for (std::size_t k = 0; k < box.size(); ++k) {
        std::vector<int> strata(n, 0);
        for (const auto& x : points) {
            ASSERT_TRUE(box.contains(x));
            const double u = (x[static_cast<Eigen::Index>(k)] - box.lower()[static_cast<Eigen::Index>(k)]) /
                             (box.upper()[static_cast<Eigen::Index>(k)] - box.lower()[static_cast<Eigen::Index>(k)]);
            strata[std::min<std::size_t>(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)))] += 1;
        }
        EXPECT_TRUE(std::all_of(strata.begin(), strata.end(), [](int c) { return c == 1; }));
    }
}

TEST(Infer, FitIsDeterministicAndInsideTheBox) {
    const fixtures::ConstantSetup setup;
    const auto data = scalar_data(setup.params(1.0, 0.5, 1.0), 300.0, 21);
    FitOptions options;
    options.seed = 5;
    const auto a = fit_mle(setup.baseline, data.path, data.events, scalar_box(), options);
    const auto b = fit_mle(setup.baseline, data.path, data.events, scalar_box(), options);
    EXPECT_EQ(a.theta, b.theta);
    EXPECT_EQ(a.loglik, b.loglik);
    EXPECT_TRUE(scalar_box().contains(a.theta));
    EXPECT_TRUE(a.converged);
    EXPECT_EQ(a.starts.size(), 5u);
    EXPECT_EQ(a.n_events, data.events.size());
    for (const auto& s : a.starts) {
        EXPECT_LE(s.loglik, a.loglik);
    }
}

TEST(Infer, SingleEventFitDoesNotThrow) {
    const fixtures::ConstantSetup setup;
    const CovariatePath path(0.0, 0.5, 10.0, 1, std::vector<double>(21, 0.0));
    const EventSequence one{{4.0}, {0}, 10.0};
    FitResult fit;
    ASSERT_NO_THROW(fit = fit_mle(setup.baseline, path, one, scalar_box()));
    EXPECT_TRUE(scalar_box().contains(fit.theta));
    EXPECT_TRUE(std::isfinite(fit.loglik));
}

TEST(Infer, RejectsEmptyData) {
    const fixtures::ConstantSetup setup;
    const CovariatePath path(0.0, 0.5, 10.0, 1, std::vector<double>(21, 0.0));
    const EventSequence none{{}, {}, 10.0};
    EXPECT_THROW((void)fit_mle(setup.baseline, path, none, scalar_box()), ValidationError);
}

TEST(Infer, FisherEstimatesAreSymmetricAndPsd) {
    const fixtures::OuBenchmark setup;
    const auto data = fixtures::simulate(*setup.model, setup.xi, setup.x0, setup.truth, setup.truth_baseline, 200.0,
                                         0.01, 8);
    const LikelihoodEvaluator ll(setup.estimation_baseline, data.path, data.events);
    const Vector theta = ll.layout().flatten(setup.reference);
    for (const auto variant : {FisherVariant::hessian, FisherVariant::outer_product}) {
        const auto f = fisher_estimate(ll, theta, variant);
        EXPECT_EQ(f.variant, variant);
        EXPECT_LT((f.matrix - f.matrix.transpose()).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_GT(f.condition_number, 1.0);
    }
    const auto outer = fisher_outer(ll, theta);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(outer.matrix);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
}

TEST(Infer, ZeroEventsGiveDegenerateZeroMatrix) {
    const fixtures::ConstantSetup setup;
    const CovariatePath path(0.0, 0.5, 10.0, 1, std::vector<double>(21, 0.0));
    const EventSequence none{{}, {}, 10.0};
    const auto f = fisher_outer(setup.params(1.0, 0.5, 1.0), setup.baseline, path, none);
    EXPECT_TRUE(f.matrix.isZero(0.0));
    EXPECT_TRUE(f.degenerate);
    EXPECT_FALSE(f.warning.empty());
    EXPECT_THROW((void)fisher_inverse(f), NumericalError);
}

TEST(Infer, PoissonFisherIsInverseRate) {
    const fixtures::ConstantSetup setup;
    const double mu = 2.0;
    const auto p = setup.params(mu, 0.001, 1.0);
    const auto data = scalar_data(p, 5000.0, 77);
    const auto outer = fisher_outer(p, setup.baseline, data.path, data.events);
    const auto hess = fisher_hessian(p, setup.baseline, data.path, data.events);
    EXPECT_NEAR(outer.matrix(0, 0), 1.0 / mu, 0.05 / mu);
    EXPECT_NEAR(hess.matrix(0, 0), 1.0 / mu, 0.05 / mu);
}

TEST(Infer, FisherVariantsAgreeOnLongPaths) {
    const fixtures::OuBenchmark setup;
    std::vector<double> medians;
    for (double horizon : {500.0, 1500.0, 3000.0}) {
        std::vector<double> gaps;
        for (std::uint64_t r = 0; r < 41; ++r) {
            const auto data = fixtures::simulate(*setup.model, setup.xi, setup.x0, setup.truth, setup.truth_baseline,
                                                 horizon, 0.01, substream_key(101, r, "fisher"));
            const LikelihoodEvaluator ll(setup.estimation_baseline, data.path, data.events);
            const Vector theta = ll.layout().flatten(setup.reference);
            const Matrix outer = fisher_outer(ll, theta).matrix;
            gaps.push_back((fisher_hessian(ll, theta).matrix - outer).norm() / outer.norm());
        }
        medians.push_back(median(gaps));
    }
    EXPECT_GT(medians[0], medians[1]);
    EXPECT_GT(medians[1], medians[2]);
    EXPECT_LT(medians[2], 0.1);
}

TEST(Infer, SymmetricSquareRoot) {
    const Matrix s{{4.0, 1.0}, {1.0, 3.0}};
    const Matrix r = symmetric_sqrt(s);
    EXPECT_TRUE((r * r).isApprox(s, 1e-13));
    EXPECT_TRUE((symmetric_sqrt(s, true) * r).isApprox(Matrix::Identity(2, 2), 1e-13));
    EXPECT_TRUE(symmetric_sqrt(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3)));
}

TEST(Infer, StandardizeExamples) {
    FisherEstimate identity;
    identity.matrix = Matrix::Identity(3, 3);
    identity.condition_number = 1.0;
    const Vector theta_hat{{1.5, 0.2, 0.3}};
    const Vector z = standardize(theta_hat, identity, 4.0, Vector{{0.5, 0.2, 0.3}});
    EXPECT_NEAR(z[0], 2.0, 1e-15);
    EXPECT_EQ(z[1], 0.0);
    EXPECT_EQ(z[2], 0.0);
    EXPECT_TRUE(standardize(theta_hat, identity, 4.0, theta_hat).isZero(0.0));

    FisherEstimate singular;
    singular.matrix = Matrix::Zero(3, 3);
    singular.matrix(0, 0) = 1.0;
    singular.condition_number = std::numeric_limits<double>::infinity();
    EXPECT_THROW((void)standardize(theta_hat, singular, 4.0, theta_hat), NumericalError);
}

TEST(Infer, ConsistencyRate) {
    const fixtures::ConstantSetup setup;
    const auto truth = setup.params(1.0, 0.5, 1.0);
    const Vector star{{1.0, 0.5, 1.0}};
    std::vector<double> err_short;
    std::vector<double> err_long;
    for (std::uint64_t r = 0; r < 50; ++r) {
        for (double horizon : {500.0, 2000.0}) {
            const auto data = scalar_data(truth, horizon, substream_key(202, r, horizon < 1000 ? "short" : "long"));
            const auto fit = fit_mle(setup.baseline, data.path, data.events, scalar_box());
            (horizon < 1000 ? err_short : err_long).push_back((fit.theta - star).norm());
        }
    }
    const double ratio = median(err_short) / median(err_long);
    EXPECT_GE(ratio, 1.5);
    EXPECT_LE(ratio, 3.0);
}

TEST(Infer, CoverageOfThreeStandardErrors) {
    const fixtures::ConstantSetup setup;
    const auto truth = setup.params(1.0, 0.5, 1.0);
    const Vector star{{1.0, 0.5, 1.0}};
    const double horizon = 2000.0;
    int covered = 0;
    for (std::uint64_t r = 0; r < 100; ++r) {
        const auto data = scalar_data(truth, horizon, substream_key(303, r, "coverage"));
        const LikelihoodEvaluator ll(setup.baseline, data.path, data.events);
        const auto fit = fit_mle(ll, scalar_box());
        const Matrix inv = fisher_inverse(fisher_outer(ll, fit.theta));
        bool inside = true;
        for (Eigen::Index k = 0; k < 3; ++k) {
            inside = inside && std::abs(fit.theta[k] - star[k]) <= 3.0 * std::sqrt(inv(k, k) / horizon);
        }
        covered += inside ? 1 : 0;
    }
    EXPECT_GE(covered, 90);
}

TEST(Infer, JsonCarriesProvenance) {
    const fixtures::ConstantSetup setup;
    const auto data = scalar_data(setup.params(1.0, 0.5, 1.0), 100.0, 4);
    FitOptions options;
    options.seed = 99;
    options.config_hash = "abc";
    const auto fit = fit_mle(setup.baseline, data.path, data.events, scalar_box(), options);
    const auto j = to_json(fit);
    EXPECT_EQ(j["provenance"]["multistart_seed"], 99);
    EXPECT_EQ(j["provenance"]["config_hash"], "abc");
    EXPECT_TRUE(j["theta"].contains("alpha[1][1]"));
    EXPECT_EQ(fisher_variant_from_string("hessian"), FisherVariant::hessian);
    EXPECT_THROW((void)fisher_variant_from_string("sandwich"), ValidationError);
}
