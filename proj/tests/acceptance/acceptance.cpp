// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 iff every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fixtures.hpp"
#include "hawkes_drift/asymptotics.hpp"
#include "hawkes_drift/experiment.hpp"
#include "hawkes_drift/likelihood.hpp"
#include "hawkes_drift/parallel.hpp"
#include "hawkes_drift/stattest.hpp"

using namespace hawkes_drift;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kConfigDir{HAWKES_DRIFT_CONFIG_DIR};

struct Outcome {
    bool pass{false};
    std::string detail;
};

json bundled(const std::string& name) {
    std::ifstream in(kConfigDir / (name + ".json"));
    return json::parse(in);
}

std::size_t jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

std::vector<ReplicateResult> run_all(const ExperimentConfig& config) {
    std::vector<ReplicateResult> out(config.replicates);
    parallel_for(config.replicates, jobs(), [&](std::size_t r) { out[r] = run_replicate(config, r); });
    return out;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sd_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::vector<double> standardized_by_sample(const std::vector<double>& v) {
    const double m = mean_of(v);
    const double s = sd_of(v);
    std::vector<double> z;
    for (double x : v) {
        z.push_back((x - m) / s);
    }
    return z;
}

/// KS against N(0, 1) after standardizing by the sample's own mean and SD, with the null
/// distribution of that statistic estimated by simulation (Lilliefors).
double lilliefors_p(const std::vector<double>& sample, std::uint64_t seed, int draws = 4000) {
    const double observed = ks_normal(standardized_by_sample(sample)).statistic;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    int exceed = 0;
    std::vector<double> sim(sample.size());
    for (int d = 0; d < draws; ++d) {
        for (auto& x : sim) {
            x = z(rng);
        }
        exceed += ks_normal(standardized_by_sample(sim)).statistic >= observed ? 1 : 0;
    }
    return (exceed + 1.0) / (draws + 1.0);
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
    const fixtures::OuBenchmark setup;
    double worst_ll = 0.0;
    double worst_grad = 0.0;
    double worst_hess = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto data = fixtures::simulate(*setup.model, setup.xi, setup.x0, setup.truth, setup.truth_baseline, 50.0,
                                             0.01, substream_key(1, seed, "simulate"));
        const LikelihoodEvaluator ll(setup.estimation_baseline, data.path, data.events);
        const Vector theta = ll.layout().flatten(setup.reference);
        Vector grad;
        Matrix hess;
        const double value = ll.value_gradient_hessian(theta, grad, hess);
        const double brute =
            fixtures::log_likelihood_brute(setup.reference, setup.estimation_baseline, data.path, data.events);
        worst_ll = std::max(worst_ll, std::abs(value - brute) / std::abs(brute));

        Vector fd_grad(theta.size());
        Matrix fd_hess(theta.size(), theta.size());
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            const double h = 1e-6 * std::max(1.0, std::abs(theta[k]));
            Vector up = theta;
            Vector dn = theta;
            up[k] += h;
            dn[k] -= h;
            fd_grad[k] = (ll.value(up) - ll.value(dn)) / (2 * h);
            const double hh = 1e-5 * std::max(1.0, std::abs(theta[k]));
            up = theta;
            dn = theta;
            up[k] += hh;
            dn[k] -= hh;
            Vector gu;
            Vector gd;
            ll.value_and_gradient(up, gu);
            ll.value_and_gradient(dn, gd);
            fd_hess.col(k) = (gu - gd) / (2 * hh);
        }
        worst_grad = std::max(worst_grad, (grad - fd_grad).norm() / fd_grad.norm());
        worst_hess = std::max(worst_hess, (hess - fd_hess).norm() / fd_hess.norm());
    }
    const bool pass = worst_ll < 1e-6 && worst_grad < 1e-5 && worst_hess < 1e-4;
    return {pass, "max relative errors over 10 datasets: loglik " + fmt(worst_ll, 3) + " (tol 1e-6), gradient " +
                      fmt(worst_grad, 3) + " (tol 1e-5), Hessian " + fmt(worst_hess, 3) + " (tol 1e-4)"};
}

Outcome criterion_2() {
    const auto config = load_config(kConfigDir / "lln_control.json");
    ReplicateSpec spec{config.model.get(), config.xi, config.x0, 1000.0, config.step, config.master_seed, 500, jobs()};
    const Matrix counts = simulate_counts(config.truth, config.truth_baseline, spec, "simulate");
    LlnTarget target;
    target.limit = Vector::Constant(1, 2.0);
    target.std_error = Vector::Zero(1);
    const auto check = lln_check_from_counts(counts, 1000.0, target, 3.0);
    return {check.all_pass(), "mean N(T)/T = " + fmt(check.empirical_value[0], 6) + ", limit 2, SE " +
                                  fmt(check.std_error[0], 3) + ", |gap|/SE = " +
                                  fmt(std::abs(check.empirical_value[0] - 2.0) / check.std_error[0], 3)};
}

Outcome criterion_3() {
    const auto config = load_config(kConfigDir / "gof_study.json");
    std::vector<double> residuals;
    std::size_t trajectories = 0;
    while (residuals.size() < 1000) {
        Rng rng = make_stream(substream_key(config.master_seed, trajectories++, "simulate"));
        const auto path = simulate_path(*config.model, config.xi, config.x0, 200.0, config.step, rng);
        const auto events = thin_simulate(config.truth, config.truth_baseline, path, rng);
        const auto e = time_change_residuals(config.truth, config.truth_baseline, path, events);
        residuals.insert(residuals.end(), e.begin(), e.end());
    }
    const auto ks = ks_exp1(residuals);
    const bool pass = residuals.size() >= 1000 && ks.p_value > 0.01;
    return {pass, std::to_string(residuals.size()) + " residuals pooled over " + std::to_string(trajectories) +
                      " trajectories at the true parameters, KS vs Exp(1) D = " +
                      fmt(ks.statistic, 4) + ", p = " + fmt(ks.p_value, 4) + " (need > 0.01)"};
}

struct WaldSample {
    std::vector<double> z1;
    std::vector<double> z2;
    std::size_t reject1{0};
    std::size_t reject2{0};
    std::size_t failures{0};
};

WaldSample ou_wald(double horizon, std::size_t replicates) {
    auto source = bundled("ou_benchmark");
    source["horizon"] = horizon;
    source["replicates"] = replicates;
    source["tasks"] = {"fit", "test-equal"};
    const auto config = parse_config(source);
    std::vector<ReplicateResult> results(replicates);
    std::vector<char> failed(replicates, 0);
    parallel_for(replicates, jobs(), [&](std::size_t r) {
        try {
            results[r] = run_replicate(config, r);
        } catch (const std::exception&) {
            failed[r] = 1;
        }
    });
    WaldSample out;
    for (std::size_t r = 0; r < replicates; ++r) {
        if (failed[r] || results[r].equal_tests.size() != 2) {
            ++out.failures;
            continue;
        }
        out.z1.push_back(results[r].equal_tests[0].statistic);
        out.z2.push_back(results[r].equal_tests[1].statistic);
        out.reject1 += results[r].equal_tests[0].reject_at_alpha;
        out.reject2 += results[r].equal_tests[1].reject_at_alpha;
    }
    return out;
}

Outcome criterion_4() {
    const auto w = ou_wald(1500.0, 150);
    const auto ks = ks_normal(w.z2);
    double mean_abs = 0.0;
    for (double z : w.z1) {
        mean_abs += std::abs(z);
    }
    mean_abs /= static_cast<double>(w.z1.size());
    const bool pass = w.failures == 0 && ks.p_value > 0.01 && mean_abs > 2.0;
    return {pass, "T=1500, n=" + std::to_string(w.z2.size()) + " (failed fits " + std::to_string(w.failures) +
                      "): Z2 mean " + fmt(mean_of(w.z2), 3) + ", sd " + fmt(sd_of(w.z2), 3) + ", KS vs N(0,1) p = " +
                      fmt(ks.p_value, 3) + " (need > 0.01); Z1 mean " + fmt(mean_of(w.z1), 3) + ", mean |Z1| = " +
                      fmt(mean_abs, 3) + " (need > 2)"};
}

Outcome criterion_5() {
    const auto w = ou_wald(3000.0, 300);
    const double size = static_cast<double>(w.reject2) / static_cast<double>(w.z2.size());
    const double power = static_cast<double>(w.reject1) / static_cast<double>(w.z1.size());
    const bool pass = w.failures == 0 && w.z2.size() >= 300 && size >= 0.02 && size <= 0.10 && power >= 0.9;
    return {pass, "T=3000, n=" + std::to_string(w.z2.size()) + ": size of the true-null test " + fmt(size, 3) +
                      " (need [0.02, 0.10]), power of the component-1 test " + fmt(power, 3) +
                      " (need >= 0.9), mean Z1 " + fmt(mean_of(w.z1), 3)};
}

Outcome criterion_6() {
    auto source = bundled("kramers_stress");
    source["horizon"] = 1000;
    source["replicates"] = 150;
    source["tasks"] = {"fit", "test-coef"};
    const auto config = parse_config(source);
    const auto results = run_all(config);
    std::vector<double> mu1;
    std::vector<double> mu2;
    std::vector<double> z1;
    std::vector<double> z2;
    for (const auto& r : results) {
        mu1.push_back(r.fit->theta[0]);
        mu2.push_back(r.fit->theta[1]);
        z1.push_back(r.coef_tests[0].statistic);
        z2.push_back(r.coef_tests[1].statistic);
    }
    const double p1 = lilliefors_p(mu1, 601);
    const double p2 = lilliefors_p(mu2, 602);
    const bool pass = p1 > 0.01 && p2 > 0.01;
    return {pass, "T=1000, n=150: standardized mu1-hat KS p = " + fmt(p1, 3) + ", mu2-hat KS p = " + fmt(p2, 3) +
                      " (Lilliefors null, need > 0.01); mu1-hat mean " + fmt(mean_of(mu1), 4) + " sd " +
                      fmt(sd_of(mu1), 3) + ", mu2-hat mean " + fmt(mean_of(mu2), 4) + " sd " + fmt(sd_of(mu2), 3) +
                      "; Fisher-standardized Wald Z vs N(0,1): p = " + fmt(ks_normal(z1).p_value, 3) + ", " +
                      fmt(ks_normal(z2).p_value, 3) + " (information)"};
}

Outcome criterion_7() {
    const auto config = load_config(kConfigDir / "gof_study.json");
    const auto results = run_all(config);
    std::vector<double> full;
    std::vector<double> sub;
    for (const auto& r : results) {
        full.push_back(r.gof_p_full);
        sub.push_back(r.gof_p_subsampled);
    }
    const auto ks_full = ks_uniform(full);
    const auto ks_sub = ks_uniform(sub);
    const bool pass = ks_full.p_value < 0.05 && ks_sub.p_value > 0.05;
    return {pass, "n=" + std::to_string(full.size()) + ", T=" + fmt(config.horizon) +
                      ": uniformity of full-sample p-values p = " + fmt(ks_full.p_value, 3) +
                      " (need < 0.05; their mean is " + fmt(mean_of(full), 3) +
                      "), subsampled p-values p = " + fmt(ks_sub.p_value, 3) + " (need > 0.05)"};
}

Outcome criterion_8() {
    const auto config = load_config(kConfigDir / "ou_benchmark.json");
    const auto& a = config.asymptotics;
    Rng rng = make_stream(substream_key(config.master_seed, 0, "stationary"));
    const auto target = lln_limit(config.truth, config.truth_baseline, *config.model, config.xi, a.stationary, rng);
    ReplicateSpec spec{config.model.get(), config.xi, config.x0, a.horizon, config.step, config.master_seed,
                       a.replicates, jobs()};
    const auto lln = lln_check(config.truth, config.truth_baseline, spec, target, a.k);

    const auto control = load_config(kConfigDir / "lln_control.json");
    ReplicateSpec cspec{control.model.get(), control.xi, control.x0, 3000.0, control.step, control.master_seed, 300,
                        jobs()};
    const Vector mu{{1.0}};
    LlnTarget ctarget;
    ctarget.limit = lln_limit(control.truth, mu);
    ctarget.std_error = Vector::Zero(1);
    ctarget.mu_bar.mean = mu;
    ctarget.mu_bar.std_error = Vector::Zero(1);
    const auto clt = clt_marginal_check(control.truth, control.truth_baseline, cspec, ctarget);
    const double k = 0.5;
    const double oracle = 1.0 / std::pow(1.0 - k, 3);
    const double var = clt.empirical_covariance(0, 0);
    const bool var_ok = std::abs(var - oracle) <= 0.15 * oracle;

    std::string lln_text;
    for (Eigen::Index i = 0; i < lln.empirical_value.size(); ++i) {
        lln_text += " component " + std::to_string(i + 1) + ": " + fmt(lln.empirical_value[i], 6) + " vs " +
                    fmt(lln.theoretical_limit[i], 6) + " (|gap|/SE " +
                    fmt(std::abs(lln.empirical_value[i] - lln.theoretical_limit[i]) / lln.std_error[i], 3) + ");";
    }
    return {lln.all_pass() && var_ok, "LLN at T=" + fmt(a.horizon) + ", " + std::to_string(a.replicates) +
                                          " replicates:" + lln_text + " scalar CLT variance " + fmt(var, 4) +
                                          " vs " + fmt(oracle, 4) + " (within 15%: " + (var_ok ? "yes" : "no") +
                                          "), marginal KS p = " + fmt(clt.marginals[0].p_value, 3)};
}

Outcome criterion_9() {
    const fs::path root = fs::temp_directory_path() / "hawkes_drift_acceptance_9";
    fs::remove_all(root);
    std::size_t compared = 0;
    std::vector<std::string> mismatched;
    for (const auto* name : {"ou_benchmark", "kramers_stress", "gof_study", "lln_control"}) {
        auto source = bundled(name);
        source["horizon"] = 150;
        source["replicates"] = 6;
        if (source.contains("asymptotics")) {
            source["asymptotics"]["replicates"] = 6;
            source["asymptotics"]["horizon"] = 150;
            source["asymptotics"]["stationary_draws"] = 50;
            source["asymptotics"]["burn_in"] = 20;
        }
        const auto config = parse_config(source);
        RunOptions first;
        first.output_directory = root / name / "first";
        RunOptions second;
        second.output_directory = root / name / "second";
        second.jobs = 2;
        (void)run_experiment(config, first);
        (void)run_experiment(config, second);
        for (const auto& entry : fs::directory_iterator(*first.output_directory / "aggregate")) {
            if (entry.path().extension() != ".csv") {
                continue;
            }
            std::ifstream a(entry.path(), std::ios::binary);
            std::ifstream b(*second.output_directory / "aggregate" / entry.path().filename(), std::ios::binary);
            std::stringstream sa;
            std::stringstream sb;
            sa << a.rdbuf();
            sb << b.rdbuf();
            ++compared;
            if (sa.str() != sb.str()) {
                mismatched.push_back(std::string(name) + "/" + entry.path().filename().string());
            }
        }
    }
    fs::remove_all(root);
    std::string detail = std::to_string(compared) + " aggregate CSVs compared across two runs (jobs 1 and 2)";
    for (const auto& m : mismatched) {
        detail += "; differs: " + m;
    }
    return {mismatched.empty() && compared > 0, detail};
}

Outcome criterion_10() {
    struct Case {
        std::string name;
        HawkesParams params;
    };
    std::vector<Case> cases;
    for (const auto* name : {"ou_benchmark", "kramers_stress", "gof_study"}) {
        cases.push_back({name, load_config(kConfigDir / (std::string(name) + ".json")).truth});
    }
    bool pass = true;
    std::string detail;
    for (const auto& c : cases) {
        const auto report = is_stable(c.params);
        const Matrix k = branching_matrix(c.params);
        const double oracle = k.rows() == 1 ? k(0, 0) : fixtures::spectral_radius_2x2(k);
        const bool ok = report.stable && oracle < 1.0 && std::abs(report.margin - (1.0 - oracle)) < 1e-8;
        pass = pass && ok;
        detail += (detail.empty() ? "" : "; ") + c.name + ": rho " + fmt(report.spectral_radius, 10) + ", margin " + fmt(report.margin, 10) +
                  " (oracle " + fmt(1.0 - oracle, 10) + ")" + (ok ? "" : " MISMATCH");
    }
    return {pass, detail};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> selected;
    app.add_option("--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);
    if (selected.empty()) {
        selected.resize(10);
        std::iota(selected.begin(), selected.end(), 1);
    }
    const std::map<int, std::function<Outcome()>> criteria{
        {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4},  {5, criterion_5},
        {6, criterion_6}, {7, criterion_7}, {8, criterion_8}, {9, criterion_9}, {10, criterion_10}};
    bool all = true;
    for (int n : selected) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criteria.at(n)();
        } catch (const std::exception& e) {
            outcome = {false, std::string("error: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << outcome.detail << " ["
                  << fmt(seconds, 3) << " s]" << std::endl;
        all = all && outcome.pass;
    }
    return all ? 0 : 1;
}
