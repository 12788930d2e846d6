#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "hawkes_drift/asymptotics.hpp"
#include "hawkes_drift/errors.hpp"

using namespace hawkes_drift;

namespace {

LlnTarget exact_target(const HawkesParams& p, const Vector& mu_bar) {
    LlnTarget t;
    t.limit = lln_limit(p, mu_bar);
    t.std_error = Vector::Zero(mu_bar.size());
    t.mu_bar.mean = mu_bar;
    t.mu_bar.std_error = Vector::Zero(mu_bar.size());
    return t;
}

} // namespace

TEST(Asymptotics, ScalarLimit) {
    const fixtures::ConstantSetup setup;
    EXPECT_NEAR(lln_limit(setup.params(1.0, 0.5, 1.0), Vector::Constant(1, 1.0))[0], 2.0, 1e-14);
    EXPECT_NEAR(lln_limit(setup.params(0.7, 0.6, 2.0), Vector::Constant(1, 0.7))[0], 0.7 / 0.7, 1e-14);
    EXPECT_EQ(lln_limit(setup.params(1.3, 0.0, 1.0), Vector::Constant(1, 1.3))[0], 1.3);
}

TEST(Asymptotics, BenchmarkLimitAndCovariance) {
    const fixtures::OuBenchmark setup;
    const Vector mu_bar{{0.7729740830466888, 0.7}};
    const Vector limit = lln_limit(setup.truth, mu_bar);
    EXPECT_NEAR(limit[0], 3.14347769, 1e-7);
    EXPECT_NEAR(limit[1], 2.38339895, 1e-7);
    const Matrix cov = clt_covariance(setup.truth, mu_bar);
    EXPECT_NEAR(cov(0, 0), 26.876, 1e-3);
    EXPECT_NEAR(cov(0, 1), 17.788, 1e-3);
    EXPECT_NEAR(cov(1, 0), 17.788, 1e-3);
    EXPECT_NEAR(cov(1, 1), 15.050, 1e-3);
}

TEST(Asymptotics, ScalarCltVariance) {
    const fixtures::ConstantSetup setup;
    const auto p = setup.params(1.0, 0.5, 1.0);
    EXPECT_NEAR(clt_covariance(p, Vector::Constant(1, 1.0))(0, 0), 8.0, 1e-13);
    const auto poisson = setup.params(1.7, 0.0, 1.0);
    EXPECT_NEAR(clt_covariance(poisson, Vector::Constant(1, 1.7))(0, 0), 1.7, 1e-14);
}

TEST(Asymptotics, LimitIsMonotoneAndDivergesNearCriticality) {
    const fixtures::OuBenchmark setup;
    const Vector mu_bar{{0.8, 0.7}};
    const Vector base = lln_limit(setup.truth, mu_bar);
    EXPECT_TRUE((lln_limit(setup.truth, Vector{{0.9, 0.7}}).array() > base.array()).all());
    EXPECT_TRUE((lln_limit(setup.truth, Vector{{0.8, 0.75}}).array() > base.array()).all());

    const double rho = spectral_radius(branching_matrix(setup.truth));
    double last = 0.0;
    for (double target : {0.5, 0.9, 0.99}) {
        auto p = setup.truth;
        p.alpha *= target / rho;
        const double total = lln_limit(p, mu_bar).sum();
        EXPECT_GT(total, last);
        last = total;
    }
    EXPECT_GT(last, 50.0);

    auto unstable = setup.truth;
    unstable.alpha *= 1.01 / rho;
    EXPECT_THROW((void)lln_limit(unstable, mu_bar), ValidationError);
}

TEST(Asymptotics, GofLimitIsNineTimesStationaryMean) {
    const fixtures::GofSetup setup;
    Rng rng(10);
    const auto target = lln_limit(setup.truth, setup.baseline, *setup.model, setup.xi, {4000, 200.0, 0.1}, rng);
    EXPECT_NEAR(target.limit[0], 9.0 * target.mu_bar.mean[0], 1e-12);
    EXPECT_NEAR(target.std_error[0], 9.0 * target.mu_bar.std_error[0], 1e-12);
    EXPECT_NEAR(target.limit[0], 6.41056962495195, 4.0 * target.std_error[0]);
}

TEST(Asymptotics, ScalarLlnCheckPasses) {
    const fixtures::ConstantSetup setup;
    const auto p = setup.params(1.0, 0.5, 1.0);
    ReplicateSpec spec{setup.model.get(), setup.xi, setup.x0, 5000.0, 1.0, 11, 50, 2};
    const auto check = lln_check(p, setup.baseline, spec, exact_target(p, Vector::Constant(1, 1.0)));
    EXPECT_TRUE(check.all_pass());
    EXPECT_EQ(check.replicates, 50u);
    EXPECT_EQ(check.pass[0], std::abs(check.empirical_value[0] - 2.0) <= 3.0 * check.std_error[0]);
}

TEST(Asymptotics, ShortHorizonStillReports) {
    const fixtures::ConstantSetup setup;
    const auto p = setup.params(1.0, 0.5, 1.0);
    ReplicateSpec spec{setup.model.get(), setup.xi, setup.x0, 10.0, 0.5, 11, 20, 1};
    const auto check = lln_check(p, setup.baseline, spec, exact_target(p, Vector::Constant(1, 1.0)));
    EXPECT_GT(check.std_error[0], 0.1);
    const auto j = to_json(check);
    EXPECT_EQ(j["replicates"], 20);
}

TEST(Asymptotics, CountsDoNotDependOnJobs) {
    const fixtures::OuBenchmark setup;
    ReplicateSpec spec{setup.model.get(), setup.xi, setup.x0, 50.0, 0.01, 5, 8, 1};
    const Matrix serial = simulate_counts(setup.truth, setup.truth_baseline, spec, "lln");
    spec.jobs = 4;
    EXPECT_EQ(simulate_counts(setup.truth, setup.truth_baseline, spec, "lln"), serial);
}

TEST(Asymptotics, ScalarCltMarginalPasses) {
    const fixtures::ConstantSetup setup;
    const auto p = setup.params(1.0, 0.5, 1.0);
    ReplicateSpec spec{setup.model.get(), setup.xi, setup.x0, 3000.0, 1.0, 21, 300, 4};
    const auto check = clt_marginal_check(p, setup.baseline, spec, exact_target(p, Vector::Constant(1, 1.0)));
    EXPECT_FALSE(check.report.reject_at_alpha) << check.report.p_value;
    EXPECT_NEAR(check.empirical_covariance(0, 0), 8.0, 0.15 * 8.0);
    EXPECT_EQ(check.deviations.rows(), 300);

    std::ostringstream csv;
    write_deviations_csv(csv, check.deviations);
    EXPECT_EQ(csv.str().substr(0, 13), "replicate,z1\n");
}
