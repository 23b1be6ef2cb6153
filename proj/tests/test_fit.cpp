#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "photonstat/fit.hpp"
#include "photonstat/models.hpp"
#include "photonstat/rng.hpp"

using namespace photonstat;

namespace {

double poisson_draw(Rng& rng, double lambda) {
    if (lambda <= 0.0) return 0.0;
    if (lambda > 50.0) return std::max(0.0, std::round(rng.normal(lambda, std::sqrt(lambda))));
    double acc = rng.exponential(1.0);
    double n = 0.0;
    while (acc < lambda) {
        n += 1.0;
        acc += rng.exponential(1.0);
    }
    return n;
}

FringeData make_fringe(double a0, double t2, double de, double noise, Rng& rng, double dmax = 3200.0,
                       double step = 25.0) {
    FringeData d;
    for (double x = 0.0; x <= dmax; x += step) {
        const double v = a0 * std::exp(-x / t2) * std::abs(std::cos(de * x / kHbarUevPs));
        const double s = std::max(noise, 1e-4);
        d.delay_ps.push_back(x);
        d.visibility.push_back(noise > 0.0 ? v + rng.normal(0.0, noise) : v);
        d.sigma.push_back(s);
    }
    return d;
}

}  // namespace

TEST_CASE("fringe fit: noiseless round trip is exact") {
    Rng rng(1);
    const auto data = make_fringe(0.96, 1058.0, 18.5, 0.0, rng);
    const auto rep = fit_fringe_envelope(data);
    REQUIRE(rep.converged);
    CHECK(rep.chi2 < 1e-10);
    CHECK(rep.param("a0") == Catch::Approx(0.96).epsilon(1e-6));
    CHECK(rep.param("t2_ps") == Catch::Approx(1058.0).epsilon(1e-6));
    CHECK(rep.param("delta_e_uev") == Catch::Approx(18.5).epsilon(1e-6));
}

TEST_CASE("fringe fit: noisy recovery within 2 standard errors") {
    Rng rng(2);
    const auto data = make_fringe(0.95, 1058.0, 18.5, 0.02, rng);
    const auto rep = fit_fringe_envelope(data);
    REQUIRE(rep.converged);
    CHECK(std::abs(rep.param("t2_ps") - 1058.0) < 2.0 * rep.error("t2_ps") + 1e-9);
    CHECK(std::abs(rep.param("delta_e_uev") - 18.5) < 2.0 * rep.error("delta_e_uev") + 1e-9);
    // high-power regime
    Rng rng2(3);
    const auto data2 = make_fringe(0.98, 331.0, 18.5, 0.02, rng2, 1200.0, 10.0);
    const auto rep2 = fit_fringe_envelope(data2);
    REQUIRE(rep2.converged);
    CHECK(rep2.param("t2_ps") == Catch::Approx(331.0).margin(3.0 * rep2.error("t2_ps")));
}

TEST_CASE("analytic jacobian agrees with central finite differences") {
    Rng rng(4);
    const auto data = make_fringe(0.9, 700.0, 12.0, 0.015, rng, 2400.0, 40.0);
    std::vector<double> sig(data.delay_ps.size(), 0.015);
    const auto [residuals, jacobian] = fringe_problem(data, sig);
    for (int trial = 0; trial < 12; ++trial) {
        Eigen::VectorXd p(3);
        p << 0.5 + rng.uniform() * 0.5, std::log(300.0 + rng.uniform() * 1500.0),
            std::log(5.0 + rng.uniform() * 20.0);
        const Eigen::MatrixXd ja = jacobian(p);
        const Eigen::MatrixXd jn = numeric_jacobian(residuals, p, 1e-7);
        for (Eigen::Index i = 0; i < ja.rows(); ++i)
            for (Eigen::Index j = 0; j < ja.cols(); ++j) {
                const double scale = std::max({std::abs(ja(i, j)), std::abs(jn(i, j)), 1e-4});
                CHECK(std::abs(ja(i, j) - jn(i, j)) / scale < 1e-5);
            }
    }
}

TEST_CASE("pull distribution over 50 replicates is calibrated") {
    double sum_t2 = 0.0, sum2_t2 = 0.0, sum_de = 0.0, sum2_de = 0.0;
    int n = 0;
    for (int rep = 0; rep < 50; ++rep) {
        Rng rng(1000 + static_cast<std::uint64_t>(rep));
        const auto data = make_fringe(0.95, 1058.0, 18.5, 0.02, rng);
        const auto fit = fit_fringe_envelope(data);
        if (!fit.converged) continue;
        const double pull_t2 = (fit.param("t2_ps") - 1058.0) / fit.std_errors_raw[1];
        const double pull_de = (fit.param("delta_e_uev") - 18.5) / fit.std_errors_raw[2];
        sum_t2 += pull_t2;
        sum2_t2 += pull_t2 * pull_t2;
        sum_de += pull_de;
        sum2_de += pull_de * pull_de;
        ++n;
    }
    REQUIRE(n >= 48);
    const double mean_t2 = sum_t2 / n;
    const double var_t2 = sum2_t2 / n - mean_t2 * mean_t2;
    const double mean_de = sum_de / n;
    const double var_de = sum2_de / n - mean_de * mean_de;
    CHECK(std::abs(mean_t2) < 0.2);
    CHECK(std::abs(mean_de) < 0.2);
    CHECK(var_t2 > 0.7);
    CHECK(var_t2 < 1.4);
    CHECK(var_de > 0.7);
    CHECK(var_de < 1.4);
}

TEST_CASE("beat frequency estimation") {
    Rng rng(6);
    const auto data = make_fringe(0.95, 1058.0, 18.5, 0.015, rng);
    const auto est = beat_frequency(data);
    REQUIRE(est.found);
    CHECK(est.energy_uev == Catch::Approx(18.5).epsilon(0.02));

    FringeData flat;
    for (double x = 0.0; x <= 2000.0; x += 25.0) {
        flat.delay_ps.push_back(x);
        flat.visibility.push_back(0.5);
        flat.sigma.push_back(0.01);
    }
    CHECK_FALSE(beat_frequency(flat).found);
}

TEST_CASE("oscillation period fit recovers the entanglement beat") {
    Rng rng(7);
    const double period = 2.0 * kPi * kHbarUevPs / 5.7;
    std::vector<double> t, y, s;
    for (double x = -1000.0; x <= 1000.0; x += 29.0) {
        t.push_back(x);
        y.push_back(0.7 + 0.2 * std::exp(-std::abs(x) / 3000.0) * std::cos(2.0 * kPi * x / period) +
                    rng.normal(0.0, 0.01));
        s.push_back(0.01);
    }
    const auto fit = fit_oscillation_period(t, y, s);
    REQUIRE(fit.found);
    CHECK(fit.period_ps == Catch::Approx(period).epsilon(0.01));
    CHECK(fit.energy_uev == Catch::Approx(5.7).epsilon(0.01));
}

namespace {

G2FitData synth_g2_counts(const QuantumDotParams& qd, double fwhm, double wing_level, Rng* rng,
                          double span = 150000.0, double bin = 250.0) {
    G2FitData d;
    d.response_fwhm_ps = fwhm;
    std::vector<double> taus;
    for (double t = -span; t <= span + 1e-9; t += bin) taus.push_back(t);
    d.tau_ps = taus;
    const auto model = detail::convolved_on_grid(taus, fwhm, [&](double t) { return g2_hbt(t, qd); });
    for (std::size_t i = 0; i < taus.size(); ++i) {
        const double mu = wing_level * model[i];
        d.counts.push_back(rng ? poisson_draw(*rng, mu) : mu);
    }
    return d;
}

QuantumDotParams psat_dot() {
    QuantumDotParams qd;
    qd.t1_ps = 1765.0;
    qd.t2_ps = 294.0;
    qd.tau1_ps = 600.0;
    qd.tau2_ps = 5000.0;
    qd.tau3_ps = 30000.0;
    qd.blink_x = 0.22;
    qd.blink_y = 0.05;
    qd.beta = beta_from_g2_zero(0.177);
    return qd;
}

}  // namespace

TEST_CASE("g2 fit: noiseless four-level round trip") {
    const auto qd = psat_dot();
    const auto data = synth_g2_counts(qd, 125.0, 800.0, nullptr);
    const auto rep = fit_g2_hbt(data, 4);
    REQUIRE(rep.converged);
    CHECK(rep.param("tau1_ps") == Catch::Approx(qd.tau1_ps).epsilon(1e-4));
    CHECK(rep.param("tau2_ps") == Catch::Approx(qd.tau2_ps).epsilon(1e-3));
    CHECK(rep.param("tau3_ps") == Catch::Approx(qd.tau3_ps).epsilon(1e-3));
    CHECK(rep.param("blink_x") == Catch::Approx(qd.blink_x).epsilon(1e-3));
    CHECK(rep.param("blink_y") == Catch::Approx(qd.blink_y).epsilon(1e-3));
    CHECK(rep.param("beta") == Catch::Approx(qd.beta).epsilon(1e-4));
    CHECK(rep.derived.at("g2_zero") == Catch::Approx(0.177).margin(1e-4));
    CHECK(rep.chi2 < 1e-8);
}

TEST_CASE("g2 fit: poisson-noisy data recovers g2(0) within errors") {
    const auto qd = psat_dot();
    Rng rng(11);
    const auto data = synth_g2_counts(qd, 125.0, 700.0, &rng);
    const auto rep = fit_g2_hbt(data, 4);
    REQUIRE(rep.converged);
    const double g0 = rep.derived.at("g2_zero");
    const double sg0 = rep.derived_errors.at("g2_zero");
    CHECK(std::abs(g0 - 0.177) < std::max(3.0 * sg0, 0.02));
    CHECK(rep.chi2_per_dof() < 1.3);
}

TEST_CASE("g2 fit: beta = 0 synthetic yields g2(0) consistent with zero") {
    QuantumDotParams qd = psat_dot();
    qd.beta = 1e-6;
    Rng rng(12);
    const auto data = synth_g2_counts(qd, 0.0, 600.0, &rng);
    const auto rep = fit_g2_hbt(data, 4);
    REQUIRE(rep.converged);
    CHECK(rep.derived.at("g2_zero") < 0.01);
}

TEST_CASE("model selection: three-level fit on four-level data is worse") {
    QuantumDotParams qd = psat_dot();
    qd.blink_y = 0.25;  // strong second bunching channel
    Rng rng(13);
    const auto data = synth_g2_counts(qd, 0.0, 900.0, &rng);
    const auto rep4 = fit_g2_hbt(data, 4);
    const auto rep3 = fit_g2_hbt(data, 3);
    REQUIRE(rep4.converged);
    REQUIRE(rep3.converged);
    CHECK(rep4.chi2 < rep3.chi2);
    CHECK(rep3.chi2_per_dof() > 1.15);
}

TEST_CASE("g2 fit warns when the span is short against tau3") {
    QuantumDotParams qd = psat_dot();
    qd.tau3_ps = 120000.0;
    const auto data = synth_g2_counts(qd, 0.0, 800.0, nullptr, 150000.0, 500.0);
    const auto rep = fit_g2_hbt(data, 4);
    bool warned = false;
    for (const auto& w : rep.warnings) warned |= w.find("under-constrained") != std::string::npos;
    CHECK(warned);
}

namespace {

TpiFitData synth_tpi_counts(double eta, double alpha2, double beta, double t2, double detuning, double fwhm,
                            double wing_co, double wing_cross, Rng* rng) {
    TpiFitData d;
    d.dip_shape = psat_dot();
    d.dip_shape.beta = 0.0;
    const double denom = (eta + alpha2 + beta) * (eta + alpha2 + beta);
    const double k = eta * eta / denom;
    const double m = 2.0 * eta * alpha2 / denom;
    auto make = [&](bool co, double wing) {
        G2FitData g;
        g.response_fwhm_ps = fwhm;
        for (double t = -4000.0; t <= 4000.0 + 1e-9; t += 25.0) g.tau_ps.push_back(t);
        const auto model = detail::convolved_on_grid(g.tau_ps, fwhm, [&](double t) {
            double v = 1.0 + k * (g2_qd(t, d.dip_shape) - 1.0);
            if (co) v += m * std::exp(-std::abs(t) / t2) * std::cos(detuning * t / kHbarUevPs);
            return v;
        });
        for (std::size_t i = 0; i < g.tau_ps.size(); ++i) {
            const double mu = wing * model[i];
            g.counts.push_back(rng ? poisson_draw(*rng, mu) : mu);
        }
        return g;
    };
    d.co = make(true, wing_co);
    d.cross = make(false, wing_cross);
    return d;
}

}  // namespace

TEST_CASE("tpi joint fit recovers visibility and coherence time") {
    const double eta = 1.0, alpha2 = 1.0;
    const double beta = beta_from_g2_zero(0.177);
    Rng rng(14);
    const auto data = synth_tpi_counts(eta, alpha2, beta, 294.0, 0.0, 125.0, 420.0, 400.0, &rng);
    const auto rep = fit_tpi(data);
    REQUIRE(rep.converged);
    const double denom = (eta + alpha2 + beta) * (eta + alpha2 + beta);
    const double vis_true = 2.0 * eta * alpha2 / (denom - eta * eta);
    CHECK(rep.derived.at("peak_visibility") ==
          Catch::Approx(vis_true).margin(3.0 * rep.derived_errors.at("peak_visibility") + 0.005));
    CHECK(rep.derived.at("tau_c_ps") == Catch::Approx(294.0).margin(3.0 * rep.derived_errors.at("tau_c_ps") + 2.0));
    CHECK(vis_true == Catch::Approx(0.585).margin(0.002));
}

TEST_CASE("tpi fit: cross-polarized pair alone pins the dip scale") {
    Rng rng(15);
    const auto data = synth_tpi_counts(2.5, 1.0, 2.5 * beta_from_g2_zero(0.095), 471.0, 0.0, 125.0, 300.0, 300.0,
                                       &rng);
    const auto rep = fit_tpi(data);
    REQUIRE(rep.converged);
    const double eta = 2.5, alpha2 = 1.0, beta = 2.5 * beta_from_g2_zero(0.095);
    const double denom = (eta + alpha2 + beta) * (eta + alpha2 + beta);
    CHECK(rep.param("k_dip") == Catch::Approx(eta * eta / denom).margin(0.03));
    const double vis_true = 2.0 * eta * alpha2 / (denom - eta * eta);
    CHECK(vis_true == Catch::Approx(0.723).margin(0.002));
    CHECK(rep.derived.at("peak_visibility") == Catch::Approx(vis_true).margin(0.02));
}

TEST_CASE("lifetime fit") {
    SECTION("double exponential, dominant component is T1") {
        Rng rng(16);
        LifetimeData d;
        for (double t = 0.0; t <= 12000.0; t += 40.0) {
            const double mu = lifetime_decay(t, 800.0, 2600.0, 180.0, 1765.0);
            d.t_ps.push_back(t);
            d.intensity.push_back(poisson_draw(rng, mu));
        }
        const auto rep = fit_lifetime(d);
        REQUIRE(rep.converged);
        CHECK(std::abs(rep.derived.at("t1_ps") - 1765.0) < std::max(2.0 * rep.derived_errors.at("t1_ps"), 25.0));
    }

    SECTION("single exponential data leaves the second amplitude negligible") {
        LifetimeData d;
        for (double t = 0.0; t <= 10000.0; t += 50.0) {
            d.t_ps.push_back(t);
            d.intensity.push_back(3000.0 * std::exp(-t / 1765.0));
            d.sigma.push_back(std::sqrt(std::max(d.intensity.back(), 1.0)));
        }
        const auto rep = fit_lifetime(d);
        REQUIRE(rep.converged);
        const double a_s = rep.param("amp_short");
        const double a_l = rep.param("amp_long");
        CHECK(std::min(a_s, a_l) / std::max(a_s, a_l) < 0.05);
        CHECK(rep.derived.at("t1_ps") == Catch::Approx(1765.0).epsilon(0.02));
    }

    SECTION("negative times are rejected") {
        LifetimeData d;
        d.t_ps = {-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0};
        d.intensity.assign(8, 10.0);
        CHECK_THROWS_AS(fit_lifetime(d), InputError);
    }
}

TEST_CASE("fit report bookkeeping") {
    Rng rng(18);
    const auto data = make_fringe(0.95, 800.0, 10.0, 0.02, rng);
    const auto rep = fit_fringe_envelope(data);
    CHECK(rep.dof == static_cast<int>(data.delay_ps.size()) - 3);
    CHECK(rep.chi2 >= 0.0);
    REQUIRE(rep.std_errors.size() == 3);
    REQUIRE(rep.std_errors_raw.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(rep.std_errors[i] >= rep.std_errors_raw[i] * 0.999);
    CHECK(!rep.initial.empty());
}
