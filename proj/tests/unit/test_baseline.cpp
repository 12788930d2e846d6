#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hawkes_drift/baseline.hpp"
#include "hawkes_drift/errors.hpp"

using namespace hawkes_drift;

namespace {

std::vector<double> fd_gradient(const BaselineFamily& f, std::vector<double> mu, const std::vector<double>& x) {
    std::vector<double> g(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(mu[k]));
        auto up = mu;
        auto dn = mu;
        up[k] += h;
        dn[k] -= h;
        g[k] = (f.evaluate(up, x) - f.evaluate(dn, x)) / (2 * h);
    }
    return g;
}

std::vector<BaselineFamilyPtr> families() {
    return {make_baseline_family({{"family", "constant"}}),
            make_baseline_family({{"family", "gaussian_bump"}, {"center", {0.1, 0.1}}, {"scale", 5.0}}),
            make_baseline_family({{"family", "gaussian_bump"}, {"center", {0.1}}, {"scale", 1.0}}),
            make_baseline_family({{"family", "quadratic_well"}, {"center", 1.0}, {"unchecked", true}})};
}

} // namespace

TEST(Baseline, FamilyFormulas) {
    const auto bump = make_baseline_family({{"family", "gaussian_bump"}, {"center", {0.1, 0.1}}, {"scale", 5.0}});
    const std::vector<double> mu{0.5, 0.8};
    const std::vector<double> x{0.4, -0.2};
    const double r2 = 0.3 * 0.3 + 0.3 * 0.3;
    EXPECT_NEAR(bump->evaluate(mu, x), 0.8 + (0.5 - 0.8) * std::exp(-5.0 * r2), 1e-15);

    const auto well = make_baseline_family({{"family", "quadratic_well"}, {"center", 1.0}, {"unchecked", true}});
    const std::vector<double> xv{-0.3, 2.0};
    EXPECT_NEAR(well->evaluate(std::vector<double>{0.2, 0.5}, xv), 0.2 + 0.5 * 1.3 * 1.3 / 2.0, 1e-15);

    const auto c = make_baseline_family({{"family", "constant"}});
    EXPECT_EQ(c->evaluate(std::vector<double>{0.7}, xv), 0.7);
}

TEST(Baseline, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> mu_draw(0.1, 3.0);
    std::normal_distribution<double> x_draw(0.0, 1.5);
    for (const auto& f : families()) {
        for (int probe = 0; probe < 100; ++probe) {
            std::vector<double> mu(f->mu_dim());
            for (auto& m : mu) {
                m = mu_draw(rng);
            }
            std::vector<double> x{x_draw(rng), x_draw(rng)};
            if (f->x_dim() == 1) {
                x.resize(1);
            }
            std::vector<double> g(mu.size());
            f->grad_mu(mu, x, g);
            const auto fd = fd_gradient(*f, mu, x);
            for (std::size_t k = 0; k < mu.size(); ++k) {
                EXPECT_NEAR(g[k], fd[k], 1e-6 * std::max(1.0, std::abs(fd[k]))) << f->name();
            }
            std::vector<double> hess(mu.size() * mu.size());
            f->hess_mu(mu, x, hess);
            for (double h : hess) {
                EXPECT_EQ(h, 0.0) << f->name();
            }
        }
    }
}

TEST(Baseline, LinearBasisReproducesEvaluate) {
    for (const auto& f : families()) {
        ASSERT_TRUE(f->linear_in_mu());
        const std::vector<double> x{0.3, -1.1};
        std::vector<double> b(f->mu_dim());
        f->basis(f->x_dim() == 1 ? std::vector<double>{0.3} : x, b);
        std::vector<double> mu(f->mu_dim(), 0.0);
        double dot = 0.0;
        for (std::size_t k = 0; k < mu.size(); ++k) {
            mu[k] = 0.4 + 0.3 * static_cast<double>(k);
            dot += mu[k] * b[k];
        }
        EXPECT_NEAR(f->evaluate(mu, f->x_dim() == 1 ? std::vector<double>{0.3} : x), dot, 1e-14) << f->name();
    }
}

TEST(Baseline, EnvelopesBracketEvaluations) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> mu_draw(0.05, 5.0);
    std::normal_distribution<double> x_draw(0.0, 3.0);
    const auto fams = families();
    for (std::size_t f = 0; f < 3; ++f) {
        const auto& family = *fams[f];
        for (int probe = 0; probe < 10000; ++probe) {
            std::vector<double> mu(family.mu_dim());
            for (auto& m : mu) {
                m = mu_draw(rng);
            }
            std::vector<double> x(family.x_dim() == 0 ? 2 : family.x_dim());
            for (auto& v : x) {
                v = x_draw(rng);
            }
            const auto env = family.envelope(mu);
            const double g = family.evaluate(mu, x);
            ASSERT_GE(g, env.lower);
            ASSERT_LE(g, env.upper);
            ASSERT_GT(env.lower, 0.0);
        }
    }
}

TEST(Baseline, EnvelopeOverBoxBracketsPointEnvelopes) {
    const auto bump = make_baseline_family({{"family", "gaussian_bump"}, {"center", {0.0}}, {"scale", 1.0}});
    const std::vector<double> lo{0.1, 0.2};
    const std::vector<double> hi{2.0, 3.0};
    const auto box = bump->envelope_over(lo, hi);
    EXPECT_NEAR(box.lower, 0.1, 1e-15);
    EXPECT_NEAR(box.upper, 3.0, 1e-15);
    const auto point = bump->envelope(std::vector<double>{1.0, 0.5});
    EXPECT_GE(point.lower, box.lower);
    EXPECT_LE(point.upper, box.upper);
}

TEST(Baseline, QuadraticWellRequiresUnchecked) {
    EXPECT_THROW((void)make_baseline_family({{"family", "quadratic_well"}, {"center", 1.0}}), ValidationError);
    const auto well = make_baseline_family({{"family", "quadratic_well"}, {"center", 1.0}, {"unchecked", true}});
    EXPECT_TRUE(well->unchecked());
    EXPECT_FALSE(well->envelope(std::vector<double>{0.2, 0.5}).bounded());
}

TEST(Baseline, FactoryRejectsBadDescriptors) {
    EXPECT_THROW((void)make_baseline_family({{"family", "linear"}}), ValidationError);
    EXPECT_THROW((void)make_baseline_family({{"family", "constant"}, {"scale", 2.0}}), ValidationError);
    EXPECT_THROW((void)make_baseline_family({{"family", "gaussian_bump"}, {"center", {0.0}}, {"scale", -1.0}}),
                 ValidationError);
    EXPECT_THROW((void)make_baseline_family(nlohmann::json::array()), ValidationError);
}

TEST(Baseline, DescriptorRoundTrip) {
    const Baseline baseline{{make_baseline_family({{"family", "gaussian_bump"}, {"center", {0.1, 0.1}}, {"scale", 5.0}}),
                             make_baseline_family({{"family", "constant"}})}};
    const auto back = Baseline::from_descriptor(baseline.descriptor());
    EXPECT_EQ(back.descriptor(), baseline.descriptor());
    EXPECT_EQ(back.mu_dims(), (std::vector<std::size_t>{2, 1}));
    EXPECT_TRUE(back.all_linear());
}
