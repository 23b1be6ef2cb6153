#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "photonstat/common.hpp"
#include "photonstat/core.hpp"
#include "photonstat/models.hpp"
#include "photonstat/sampled.hpp"

namespace photonstat {

// ---------------------------------------------------------------------------
// Damped least squares core
// ---------------------------------------------------------------------------

struct LmOptions {
    int max_iterations = 500;
    double chi2_rel_tol = 1e-10;
    double step_norm_tol = 1e-12;
    double lambda_init = 1e-3;
    double lambda_up = 2.0;
    double lambda_down = 3.0;
    double lambda_max = 1e12;
    /// per-component step clamp in internal (mostly log) space; guards
    /// against wild excursions out of the fit basin
    double max_component_step = 1.5;
    /// the relative-chi2 stop only counts while damping is mild, otherwise
    /// heavily damped micro-steps would fake convergence
    double lambda_trust = 1e-1;
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;  ///< (J^T J)^-1 at the optimum, unscaled
    double chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Weighted residual vector r(p), chi2 = |r|^2.
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
/// Jacobian dr/dp; optional, numeric central differences otherwise.
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

inline Eigen::MatrixXd numeric_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& p,
                                        double rel_step = 1e-6) {
    const Eigen::VectorXd r0 = residuals(p);
    Eigen::MatrixXd jac(r0.size(), p.size());
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        const double h = std::max(rel_step * std::abs(p[j]), 1e-9);
        Eigen::VectorXd pp = p, pm = p;
        pp[j] += h;
        pm[j] -= h;
        jac.col(j) = (residuals(pp) - residuals(pm)) / (2.0 * h);
    }
    return jac;
}

/// Levenberg-Marquardt with multiplicative damping of diag(J^T J).
/// Convergence: relative chi2 change below tol on an accepted step, or step
/// norm below tol.
inline LmResult lm_minimize(const ResidualFn& residuals, Eigen::VectorXd p, const LmOptions& opt = {},
                            const JacobianFn& jacobian = nullptr) {
    LmResult res;
    Eigen::VectorXd r = residuals(p);
    double chi2 = r.squaredNorm();
    double lambda = opt.lambda_init;
    bool converged = false;
    int it = 0;
    for (; it < opt.max_iterations && !converged; ++it) {
        const Eigen::MatrixXd jac = jacobian ? jacobian(p) : numeric_jacobian(residuals, p);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;
        bool accepted = false;
        while (lambda <= opt.lambda_max) {
            Eigen::MatrixXd damped = jtj;
            for (Eigen::Index k = 0; k < damped.rows(); ++k)
                damped(k, k) += lambda * std::max(jtj(k, k), 1e-30);
            Eigen::VectorXd step = damped.ldlt().solve(-jtr);
            for (Eigen::Index k = 0; k < step.size(); ++k)
                step[k] = std::clamp(step[k], -opt.max_component_step, opt.max_component_step);
            const Eigen::VectorXd p_try = p + step;
            const Eigen::VectorXd r_try = residuals(p_try);
            const double chi2_try = r_try.squaredNorm();
            if (std::isfinite(chi2_try) && chi2_try <= chi2) {
                const double rel = (chi2 - chi2_try) / std::max(chi2, 1e-300);
                const double lambda_used = lambda;
                p = p_try;
                r = r_try;
                chi2 = chi2_try;
                lambda = std::max(lambda / opt.lambda_down, 1e-12);
                accepted = true;
                if ((rel < opt.chi2_rel_tol && lambda_used <= opt.lambda_trust) ||
                    step.norm() < opt.step_norm_tol)
                    converged = true;
                break;
            }
            lambda *= opt.lambda_up;
        }
        if (!accepted) {
            // no downhill direction left at the damping ceiling: treat a tiny
            // gradient as converged, anything else as failure
            converged = chi2 < 1e-20 || jtr.norm() < 1e-10 * std::max(1.0, chi2);
            break;
        }
    }
    res.params = p;
    res.chi2 = chi2;
    res.iterations = it;
    res.converged = converged;
    const Eigen::MatrixXd jac = jacobian ? jacobian(p) : numeric_jacobian(residuals, p);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    if (lu.isInvertible())
        res.covariance = lu.inverse();
    else
        res.covariance = Eigen::MatrixXd::Zero(p.size(), p.size());
    return res;
}

// ---------------------------------------------------------------------------
// Fit reports
// ---------------------------------------------------------------------------

/// Result of one model fit in natural parameter space.
struct FitReport {
    std::string model_id;
    std::vector<std::string> param_names;
    std::vector<double> params;
    std::vector<double> std_errors;      ///< scaled by sqrt(chi2/dof) when chi2/dof > 1
    std::vector<double> std_errors_raw;  ///< straight from the covariance diagonal
    Eigen::MatrixXd covariance;          ///< natural space, unscaled
    double chi2 = 0.0;
    int dof = 0;
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;
    std::map<std::string, double> initial;         ///< recorded initialization
    std::map<std::string, double> derived;         ///< derived quantities (g2_zero, ...)
    std::map<std::string, double> derived_errors;
    std::map<std::string, std::string> inputs;     ///< provenance (file hashes, fixed params)

    double param(const std::string& name) const {
        for (std::size_t i = 0; i < param_names.size(); ++i)
            if (param_names[i] == name) return params[i];
        throw InputError("FitReport: unknown parameter '" + name + "'");
    }

    double error(const std::string& name) const {
        for (std::size_t i = 0; i < param_names.size(); ++i)
            if (param_names[i] == name) return std_errors[i];
        throw InputError("FitReport: unknown parameter '" + name + "'");
    }

    double chi2_per_dof() const { return dof > 0 ? chi2 / dof : 0.0; }
};

namespace detail {

/// Expands an internal-space LM result to natural space via the chain rule.
/// `to_natural` maps internal params to natural ones; its Jacobian is taken
/// numerically.
inline FitReport make_report(const std::string& model_id, const LmResult& lm,
                             const std::vector<std::string>& names,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& to_natural,
                             int n_points) {
    FitReport rep;
    rep.model_id = model_id;
    rep.param_names = names;
    const Eigen::VectorXd nat = to_natural(lm.params);
    rep.params.assign(nat.data(), nat.data() + nat.size());
    Eigen::MatrixXd grad(nat.size(), lm.params.size());
    for (Eigen::Index j = 0; j < lm.params.size(); ++j) {
        const double h = std::max(1e-7 * std::abs(lm.params[j]), 1e-10);
        Eigen::VectorXd pp = lm.params, pm = lm.params;
        pp[j] += h;
        pm[j] -= h;
        grad.col(j) = (to_natural(pp) - to_natural(pm)) / (2.0 * h);
    }
    rep.covariance = grad * lm.covariance * grad.transpose();
    rep.chi2 = lm.chi2;
    rep.dof = n_points - static_cast<int>(lm.params.size());
    rep.iterations = lm.iterations;
    rep.converged = lm.converged;
    const double scale2 = rep.dof > 0 ? std::max(1.0, rep.chi2 / rep.dof) : 1.0;
    for (Eigen::Index i = 0; i < nat.size(); ++i) {
        const double var = std::max(rep.covariance(i, i), 0.0);
        rep.std_errors_raw.push_back(std::sqrt(var));
        rep.std_errors.push_back(std::sqrt(var * scale2));
    }
    if (!lm.converged) rep.warnings.push_back("fit did not converge");
    return rep;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Periodogram-based beat estimation
// ---------------------------------------------------------------------------

struct BeatEstimate {
    bool found = false;
    double energy_uev = 0.0;
    double std_error_uev = 0.0;
};

struct FringeData {
    std::vector<double> delay_ps;
    std::vector<double> visibility;
    std::vector<double> sigma;  ///< optional; defaults to equal weights
};

inline double median_spacing(const std::vector<double>& xs) {
    if (xs.size() < 2) return 1.0;
    std::vector<double> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> gaps;
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        const double g = sorted[i] - sorted[i - 1];
        if (g > 0.0) gaps.push_back(g);
    }
    if (gaps.empty()) return 1.0;
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    return gaps[gaps.size() / 2];
}

namespace detail {

/// Plain power spectrum of mean-subtracted irregular samples.
/// Returns the angular frequency (rad/ps) of the strongest component, or
/// nothing when no component stands out of the flat background.
inline std::optional<double> dominant_angular_freq(const std::vector<double>& t, const std::vector<double>& y,
                                                   double omega_min, double omega_max, int n_freq = 2048) {
    if (t.size() < 4) return std::nullopt;
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double best_power = 0.0;
    double total_power = 0.0;
    double best_omega = 0.0;
    for (int k = 1; k <= n_freq; ++k) {
        const double omega = omega_min + (omega_max - omega_min) * static_cast<double>(k) / n_freq;
        double re = 0.0, im = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double d = y[i] - mean;
            re += d * std::cos(omega * t[i]);
            im += d * std::sin(omega * t[i]);
        }
        const double p = re * re + im * im;
        total_power += p;
        if (p > best_power) {
            best_power = p;
            best_omega = omega;
        }
    }
    if (best_power < 4.0 * total_power / n_freq) return std::nullopt;  // no peak above the flat level
    return best_omega;
}

/// Beat component of a fringe-visibility table after removing the envelope
/// trend a0 exp(-d/T2) <|cos|> (with <|cos|> = 2/pi).
inline std::optional<double> fringe_beat_omega(const FringeData& data, double a0, double t2) {
    std::vector<double> resid(data.delay_ps.size());
    for (std::size_t i = 0; i < resid.size(); ++i)
        resid[i] = data.visibility[i] -
                   a0 * std::exp(-std::abs(data.delay_ps[i]) / t2) * (2.0 / kPi);
    const double span = *std::max_element(data.delay_ps.begin(), data.delay_ps.end());
    return dominant_angular_freq(data.delay_ps, resid, 2.0 * kPi / (2.0 * span),
                                 0.9 * kPi / median_spacing(data.delay_ps));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fringe envelope fit (visibility vs coarse delay)
// ---------------------------------------------------------------------------

/// Weighted residuals and analytic Jacobian of the fringe-envelope model
/// |a0 exp(-d/T2) cos(dE d/hbar)| in internal space (a0, log T2, log dE).
inline std::pair<ResidualFn, JacobianFn> fringe_problem(const FringeData& data, std::vector<double> sigma) {
    const std::size_t n = data.delay_ps.size();
    auto delays = data.delay_ps;
    auto vis = data.visibility;
    const ResidualFn residuals = [delays, vis, sigma, n](const Eigen::VectorXd& p) {
        const double a0 = p[0];
        const double t2 = std::exp(p[1]);
        const double de = std::exp(p[2]);
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const double f = a0 * std::exp(-std::abs(delays[i]) / t2) *
                             std::abs(std::cos(de * delays[i] / kHbarUevPs));
            r[static_cast<Eigen::Index>(i)] = (vis[i] - f) / sigma[i];
        }
        return r;
    };
    const JacobianFn jacobian = [delays, sigma, n](const Eigen::VectorXd& p) {
        const double a0 = p[0];
        const double t2 = std::exp(p[1]);
        const double de = std::exp(p[2]);
        Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), 3);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = delays[i];
            const double env = std::exp(-std::abs(d) / t2);
            const double arg = de * d / kHbarUevPs;
            const double c = std::cos(arg);
            const double absc = std::abs(c);
            const double sgn = c >= 0.0 ? 1.0 : -1.0;
            const double f = a0 * env * absc;
            const auto row = static_cast<Eigen::Index>(i);
            jac(row, 0) = -(env * absc) / sigma[i];
            jac(row, 1) = -(f * std::abs(d) / t2) / sigma[i];                  // d/dlogT2
            jac(row, 2) = -(-a0 * env * sgn * std::sin(arg) * arg) / sigma[i]; // d/dlogdE
        }
        return jac;
    };
    return {residuals, jacobian};
}

/// Fits |a0 exp(-d/T2) cos(dE d / hbar)| to measured visibilities.
/// Parameters: a0, t2_ps, delta_e_uev.
inline FitReport fit_fringe_envelope(const FringeData& data) {
    const std::size_t n = data.delay_ps.size();
    if (n < 6) throw InputError("fit_fringe_envelope: need at least 6 points");
    std::vector<double> sig = data.sigma;
    if (sig.empty()) sig.assign(n, 0.01);
    for (double s : sig)
        if (!(s > 0.0)) throw InputError("fit_fringe_envelope: sigmas must be positive");

    // Initialization: T2 and a0 from a log-linear fit over the local maxima
    // (the beat's upper envelope), then dE from the periodogram of the
    // envelope-detrended residual. |cos| oscillates at twice the fundamental,
    // so omega_vis = 2 dE / hbar.
    double sw = 0.0, swx = 0.0, swy = 0.0, swxx = 0.0, swxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = data.visibility[i];
        if (v < 0.05) continue;
        const bool peak = (i == 0 || data.visibility[i - 1] <= v) && (i + 1 == n || data.visibility[i + 1] <= v);
        if (!peak) continue;
        const double x = data.delay_ps[i];
        const double y = std::log(v);
        sw += 1.0;
        swx += x;
        swy += y;
        swxx += x * x;
        swxy += x * y;
    }
    double t2_init = 500.0, a0_init = 0.9;
    const double det = sw * swxx - swx * swx;
    if (sw >= 3.0 && std::abs(det) > 1e-12) {
        const double slope = (sw * swxy - swx * swy) / det;
        const double icept = (swy * swxx - swx * swxy) / det;
        if (slope < -1e-12) t2_init = -1.0 / slope;
        a0_init = std::clamp(std::exp(icept), 0.05, 1.0);
    }
    const double span = *std::max_element(data.delay_ps.begin(), data.delay_ps.end());
    t2_init = std::clamp(t2_init, span * 1e-3, span * 10.0);
    double de_init = 10.0;
    const auto omega = detail::fringe_beat_omega(data, a0_init, t2_init);
    if (omega) de_init = std::max(*omega / 2.0 * kHbarUevPs, 1e-3);

    const auto [residuals, jacobian] = fringe_problem(data, sig);

    Eigen::VectorXd p0(3);
    p0 << a0_init, std::log(t2_init), std::log(de_init);
    const LmResult lm = lm_minimize(residuals, p0, {}, jacobian);
    const auto to_natural = [](const Eigen::VectorXd& p) {
        Eigen::VectorXd nat(3);
        nat << p[0], std::exp(p[1]), std::exp(p[2]);
        return nat;
    };
    FitReport rep = detail::make_report("fringe-envelope", lm, {"a0", "t2_ps", "delta_e_uev"}, to_natural,
                                        static_cast<int>(n));
    rep.initial = {{"a0", a0_init}, {"t2_ps", t2_init}, {"delta_e_uev", de_init}};
    if (rep.params[0] > 1.0 + 3.0 * rep.std_errors[0])
        rep.warnings.push_back("fitted zero-delay contrast exceeds 1");
    return rep;
}

/// dE estimate from the dominant visibility-beat component, refined by the
/// envelope fit. Data without a significant beat (flat or bare exponential
/// decay) reports found = false.
inline BeatEstimate beat_frequency(const FringeData& data) {
    BeatEstimate est;
    if (data.delay_ps.size() < 8) return est;
    FitReport rep = fit_fringe_envelope(data);
    if (!rep.converged) return est;
    const auto omega = detail::fringe_beat_omega(
        data, std::clamp(rep.param("a0"), 0.0, 1.0), std::max(rep.param("t2_ps"), 1.0));
    if (!omega) return est;
    est.found = true;
    est.energy_uev = rep.param("delta_e_uev");
    est.std_error_uev = rep.error("delta_e_uev");
    return est;
}

/// Period (and energy via 2*pi*hbar/P) of a signed damped oscillation
/// a + b exp(-|t|/T) cos(2 pi t / P + phase); used for the fidelity beat
/// along tau_Bob.
struct OscillationFit {
    bool found = false;
    double period_ps = 0.0;
    double period_error_ps = 0.0;
    double energy_uev = 0.0;
};

inline OscillationFit fit_oscillation_period(const std::vector<double>& t, const std::vector<double>& y,
                                             const std::vector<double>& sigma = {}) {
    OscillationFit out;
    if (t.size() < 8) return out;
    std::vector<double> sig = sigma;
    if (sig.empty()) sig.assign(t.size(), 1.0);
    const double tmax = *std::max_element(t.begin(), t.end());
    const double tmin = *std::min_element(t.begin(), t.end());
    const double span = std::max(tmax, -tmin);
    const auto omega0 = detail::dominant_angular_freq(t, y, 2.0 * kPi / (4.0 * span), kPi / (2.0 * median_spacing(t)));
    if (!omega0) return out;
    const ResidualFn residuals = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(t.size()));
        const double a = p[0], b = p[1], om = std::exp(p[2]), ph = p[3], damp = std::exp(p[4]);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double f = a + b * std::exp(-std::abs(t[i]) / damp) * std::cos(om * t[i] + ph);
            r[static_cast<Eigen::Index>(i)] = (y[i] - f) / sig[i];
        }
        return r;
    };
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double amp = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) amp = std::max(amp, std::abs(y[i] - mean));
    Eigen::VectorXd p0(5);
    p0 << mean, amp, std::log(*omega0), 0.0, std::log(4.0 * span);
    const LmResult lm = lm_minimize(residuals, p0);
    if (!lm.converged) return out;
    const double om = std::exp(lm.params[2]);
    out.found = true;
    out.period_ps = 2.0 * kPi / om;
    const double sig_logom = std::sqrt(std::max(lm.covariance(2, 2), 0.0));
    out.period_error_ps = out.period_ps * sig_logom;
    out.energy_uev = om * kHbarUevPs;
    return out;
}

// ---------------------------------------------------------------------------
// Autocorrelation fits
// ---------------------------------------------------------------------------

struct G2FitData {
    std::vector<double> tau_ps;   ///< uniform bin centers
    std::vector<double> counts;   ///< raw coincidence counts (Poisson)
    double response_fwhm_ps = 0.0;
};

namespace detail {

/// Convolves a model sampled on the (uniform) data grid with the detector
/// response, extending the evaluation grid by the kernel reach so edges stay
/// unbiased.
template <typename Fn>
inline std::vector<double> convolved_on_grid(const std::vector<double>& tau, double fwhm, Fn&& model) {
    const double step = tau.size() > 1 ? tau[1] - tau[0] : 1.0;
    if (fwhm <= 0.0) {
        std::vector<double> out(tau.size());
        for (std::size_t i = 0; i < tau.size(); ++i) out[i] = model(tau[i]);
        return out;
    }
    const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const auto pad = static_cast<std::size_t>(std::ceil(5.0 * sigma / step)) + 1;
    SampledCurve c;
    c.tau0_ps = tau.front() - static_cast<double>(pad) * step;
    c.step_ps = step;
    c.values.resize(tau.size() + 2 * pad);
    for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] = model(c.tau_at(i));
    const SampledCurve conv = convolve_gaussian(c, fwhm);
    std::vector<double> out(tau.size());
    for (std::size_t i = 0; i < tau.size(); ++i) out[i] = conv.values[i + pad];
    return out;
}

}  // namespace detail

/// Fits norm * conv(g2_hbt) to raw coincidence counts. levels = 3 fixes Y = 0.
/// Degeneracy of the blink timescales is removed by parameterizing
/// tau2 = tau1 + gap2, tau3 = tau2 + gap3 with positive gaps.
inline FitReport fit_g2_hbt(const G2FitData& data, int levels = 4,
                            std::optional<QuantumDotParams> init_hint = std::nullopt) {
    if (levels != 3 && levels != 4) throw InputError("fit_g2_hbt: levels must be 3 or 4");
    const std::size_t n = data.tau_ps.size();
    if (n < 10) throw InputError("fit_g2_hbt: too few bins");
    std::vector<double> sig(n);
    for (std::size_t i = 0; i < n; ++i) sig[i] = std::sqrt(std::max(data.counts[i], 1.0));

    const double span = std::abs(data.tau_ps.back());
    // Initialization: wings give the normalization, the dip minimum gives
    // beta, recovery scale from the dip width, blink scales geometrically
    // spaced across the span.
    double wing = 0.0;
    std::size_t nw = std::max<std::size_t>(1, n / 10);
    for (std::size_t i = 0; i < nw; ++i) wing += data.counts[i] + data.counts[n - 1 - i];
    wing /= static_cast<double>(2 * nw);
    double cmin = data.counts[0];
    for (double c : data.counts) cmin = std::min(cmin, c);
    const double g2min = std::clamp(wing > 0.0 ? cmin / wing : 0.0, 0.0, 0.95);

    QuantumDotParams init;
    // recovery scale: first delay at which the dip has refilled to 1 - 1/e
    // of its depth
    const double bin = data.tau_ps.size() > 1 ? data.tau_ps[1] - data.tau_ps[0] : 1.0;
    init.tau1_ps = span / 50.0;
    if (wing > cmin && wing > 0.0) {
        const double target = wing - (wing - cmin) / std::exp(1.0);
        for (std::size_t k = n / 2; k < n; ++k) {
            if (data.counts[k] >= target) {
                init.tau1_ps = std::clamp(std::abs(data.tau_ps[k]) + bin / 2.0, bin, span / 4.0);
                break;
            }
        }
    }
    init.tau2_ps = std::max(span / 8.0, 3.0 * init.tau1_ps);
    init.tau3_ps = std::max(span / 2.0, 3.0 * init.tau2_ps);
    init.blink_x = 0.1;
    init.blink_y = levels == 4 ? 0.05 : 0.0;
    init.beta = std::max(beta_from_g2_zero(g2min * 0.8), 1e-4);
    if (init_hint) init = *init_hint;

    const bool four = levels == 4;
    const int np = four ? 7 : 5;  // logtau1, loggap2, [loggap3], logX, [logY], logbeta, logN

    const auto unpack = [&](const Eigen::VectorXd& p, QuantumDotParams& qd, double& norm) {
        qd = QuantumDotParams{};
        qd.tau1_ps = std::exp(p[0]);
        qd.tau2_ps = qd.tau1_ps + std::exp(p[1]);
        qd.blink_x = std::exp(p[four ? 3 : 2]);
        if (four) {
            qd.tau3_ps = qd.tau2_ps + std::exp(p[2]);
            qd.blink_y = std::exp(p[4]);
        } else {
            qd.tau3_ps = qd.tau2_ps + 1.0;
            qd.blink_y = 0.0;
        }
        qd.beta = std::exp(p[four ? 5 : 3]);
        norm = std::exp(p[four ? 6 : 4]);
    };

    const ResidualFn residuals = [&](const Eigen::VectorXd& p) {
        QuantumDotParams qd;
        double norm;
        unpack(p, qd, norm);
        const auto model = detail::convolved_on_grid(data.tau_ps, data.response_fwhm_ps,
                                                     [&](double t) { return g2_hbt(t, qd); });
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            r[static_cast<Eigen::Index>(i)] = (data.counts[i] - norm * model[i]) / sig[i];
        return r;
    };

    Eigen::VectorXd p0(np);
    if (four)
        p0 << std::log(init.tau1_ps), std::log(std::max(init.tau2_ps - init.tau1_ps, 1.0)),
            std::log(std::max(init.tau3_ps - init.tau2_ps, 1.0)), std::log(std::max(init.blink_x, 1e-3)),
            std::log(std::max(init.blink_y, 1e-3)), std::log(init.beta), std::log(std::max(wing, 1.0));
    else
        p0 << std::log(init.tau1_ps), std::log(std::max(init.tau2_ps - init.tau1_ps, 1.0)),
            std::log(std::max(init.blink_x, 1e-3)), std::log(init.beta), std::log(std::max(wing, 1.0));

    const LmResult lm = lm_minimize(residuals, p0);
    const auto to_natural = [&](const Eigen::VectorXd& p) {
        QuantumDotParams qd;
        double norm;
        unpack(p, qd, norm);
        Eigen::VectorXd nat(np);
        if (four)
            nat << qd.tau1_ps, qd.tau2_ps, qd.tau3_ps, qd.blink_x, qd.blink_y, qd.beta, norm;
        else
            nat << qd.tau1_ps, qd.tau2_ps, qd.blink_x, qd.beta, norm;
        return nat;
    };
    const std::vector<std::string> names =
        four ? std::vector<std::string>{"tau1_ps", "tau2_ps", "tau3_ps", "blink_x", "blink_y", "beta", "norm"}
             : std::vector<std::string>{"tau1_ps", "tau2_ps", "blink_x", "beta", "norm"};
    FitReport rep = detail::make_report(four ? "g2-4level" : "g2-3level", lm, names, to_natural,
                                        static_cast<int>(n));
    rep.initial = {{"tau1_ps", init.tau1_ps}, {"tau2_ps", init.tau2_ps}, {"tau3_ps", init.tau3_ps},
                   {"blink_x", init.blink_x}, {"blink_y", init.blink_y}, {"beta", init.beta}};
    const double beta = rep.param("beta");
    const double beta_err = rep.error("beta");
    rep.derived["g2_zero"] = g2_zero_from_beta(beta);
    rep.derived_errors["g2_zero"] = 2.0 / std::pow(1.0 + beta, 3) * beta_err;
    const double tau_slow = four ? rep.param("tau3_ps") : rep.param("tau2_ps");
    if (span < 3.0 * tau_slow)
        rep.warnings.push_back("histogram span is short against the slowest blink timescale; fit may be under-constrained");
    return rep;
}

// ---------------------------------------------------------------------------
// Joint co/cross TPI fit
// ---------------------------------------------------------------------------

struct TpiFitData {
    G2FitData co;
    G2FitData cross;
    QuantumDotParams dip_shape;  ///< fixed four-level shape of the eta^2 dip term
};

/// Joint fit of the wing-normalized co/cross pair,
///   cross: N_x * conv[1 + K (g2_qd - 1)]
///   co:    N_c * conv[1 + K (g2_qd - 1) + M exp(-|t|/T2) cos(dE_L t / hbar)]
/// with K = eta^2 / (eta+alpha2+beta)^2 and M = 2 eta alpha2 / (...)^2 shared.
/// Derived: peak visibility M/(1-K) and tau_c = T2.
inline FitReport fit_tpi(const TpiFitData& data, std::optional<double> k_init_hint = std::nullopt,
                         std::optional<double> m_init_hint = std::nullopt) {
    const std::size_t nc = data.co.tau_ps.size();
    const std::size_t nx = data.cross.tau_ps.size();
    if (nc != nx) throw InputError("fit_tpi: co and cross histograms must share axes");
    for (std::size_t i = 0; i < nc; ++i)
        if (std::abs(data.co.tau_ps[i] - data.cross.tau_ps[i]) > 1e-9)
            throw InputError("fit_tpi: co and cross histograms must share axes");
    const std::size_t n = nc + nx;

    std::vector<double> sig_co(nc), sig_x(nx);
    for (std::size_t i = 0; i < nc; ++i) sig_co[i] = std::sqrt(std::max(data.co.counts[i], 1.0));
    for (std::size_t i = 0; i < nx; ++i) sig_x[i] = std::sqrt(std::max(data.cross.counts[i], 1.0));

    const auto wing_of = [](const G2FitData& d) {
        const std::size_t m = d.tau_ps.size();
        const std::size_t nw = std::max<std::size_t>(1, m / 10);
        double w = 0.0;
        for (std::size_t i = 0; i < nw; ++i) w += d.counts[i] + d.counts[m - 1 - i];
        return w / static_cast<double>(2 * nw);
    };
    const double wing_co = wing_of(data.co);
    const double wing_x = wing_of(data.cross);

    double cmin = data.cross.counts[0], cmax_co = 0.0;
    const std::size_t mid = nc / 2;
    for (double c : data.cross.counts) cmin = std::min(cmin, c);
    cmax_co = data.co.counts[mid];
    const double k_init = k_init_hint.value_or(std::clamp(1.0 - cmin / std::max(wing_x, 1.0), 0.02, 0.8));
    const double m_init =
        m_init_hint.value_or(std::clamp(cmax_co / std::max(wing_co, 1.0) - (1.0 - k_init), 0.02, 1.5));
    const double t2_init = data.dip_shape.t2_ps;

    // params: log K, log M, log T2, dE_L, log N_co, log N_x
    const auto model_pair = [&](const Eigen::VectorXd& p, std::vector<double>& co, std::vector<double>& cross) {
        const double k = std::exp(p[0]);
        const double m = std::exp(p[1]);
        const double t2 = std::exp(p[2]);
        const double del = p[3];
        const double n_co = std::exp(p[4]);
        const double n_x = std::exp(p[5]);
        cross = detail::convolved_on_grid(data.cross.tau_ps, data.cross.response_fwhm_ps, [&](double t) {
            return 1.0 + k * (g2_qd(t, data.dip_shape) - 1.0);
        });
        co = detail::convolved_on_grid(data.co.tau_ps, data.co.response_fwhm_ps, [&](double t) {
            return 1.0 + k * (g2_qd(t, data.dip_shape) - 1.0) +
                   m * std::exp(-std::abs(t) / t2) * std::cos(del * t / kHbarUevPs);
        });
        for (auto& v : co) v *= n_co;
        for (auto& v : cross) v *= n_x;
    };

    const ResidualFn residuals = [&](const Eigen::VectorXd& p) {
        std::vector<double> co, cross;
        model_pair(p, co, cross);
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < nc; ++i)
            r[static_cast<Eigen::Index>(i)] = (data.co.counts[i] - co[i]) / sig_co[i];
        for (std::size_t i = 0; i < nx; ++i)
            r[static_cast<Eigen::Index>(nc + i)] = (data.cross.counts[i] - cross[i]) / sig_x[i];
        return r;
    };

    Eigen::VectorXd p0(6);
    p0 << std::log(k_init), std::log(m_init), std::log(t2_init), 0.0, std::log(std::max(wing_co, 1.0)),
        std::log(std::max(wing_x, 1.0));
    const LmResult lm = lm_minimize(residuals, p0);
    const auto to_natural = [](const Eigen::VectorXd& p) {
        Eigen::VectorXd nat(6);
        nat << std::exp(p[0]), std::exp(p[1]), std::exp(p[2]), p[3], std::exp(p[4]), std::exp(p[5]);
        return nat;
    };
    FitReport rep = detail::make_report("tpi", lm, {"k_dip", "m_interference", "tau_c_ps", "detuning_uev", "norm_co", "norm_cross"},
                                        to_natural, static_cast<int>(n));
    rep.initial = {{"k_dip", k_init}, {"m_interference", m_init}, {"tau_c_ps", t2_init}, {"detuning_uev", 0.0}};
    const double k = rep.param("k_dip");
    const double m = rep.param("m_interference");
    const double vis = m / (1.0 - k);
    rep.derived["peak_visibility"] = vis;
    // error propagation across the (K, M) covariance block
    const double dk = m / ((1.0 - k) * (1.0 - k));
    const double dm = 1.0 / (1.0 - k);
    const double scale2 = rep.dof > 0 ? std::max(1.0, rep.chi2 / rep.dof) : 1.0;
    const double var = dk * dk * rep.covariance(0, 0) + dm * dm * rep.covariance(1, 1) +
                       2.0 * dk * dm * rep.covariance(0, 1);
    rep.derived_errors["peak_visibility"] = std::sqrt(std::max(var, 0.0) * scale2);
    rep.derived["tau_c_ps"] = rep.param("tau_c_ps");
    rep.derived_errors["tau_c_ps"] = rep.error("tau_c_ps");
    return rep;
}

// ---------------------------------------------------------------------------
// Lifetime fit
// ---------------------------------------------------------------------------

struct LifetimeData {
    std::vector<double> t_ps;
    std::vector<double> intensity;
    std::vector<double> sigma;  ///< optional; Poisson sqrt(intensity) otherwise
};

/// Double exponential decay fit; the component with the larger integrated
/// contribution (amplitude * tau) is reported as T1.
inline FitReport fit_lifetime(const LifetimeData& data) {
    const std::size_t n = data.t_ps.size();
    if (n < 8) throw InputError("fit_lifetime: too few points");
    for (double t : data.t_ps)
        if (t < 0.0) throw InputError("fit_lifetime: negative times; select the region past the excitation artifact");
    std::vector<double> sig = data.sigma;
    if (sig.empty()) {
        sig.resize(n);
        for (std::size_t i = 0; i < n; ++i) sig[i] = std::sqrt(std::max(data.intensity[i], 1.0));
    }

    // tail regression for the slow component
    const double tmax = data.t_ps.back();
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (data.t_ps[i] < 0.5 * tmax || data.intensity[i] <= 0.0) continue;
        const double x = data.t_ps[i], y = std::log(data.intensity[i]);
        sw += 1;
        swx += x;
        swy += y;
        swxx += x * x;
        swxy += x * y;
    }
    double tau_slow = tmax / 3.0, amp_slow = data.intensity.front();
    const double det = sw * swxx - swx * swx;
    if (sw >= 3 && std::abs(det) > 1e-12) {
        const double slope = (sw * swxy - swx * swy) / det;
        if (slope < -1e-15) tau_slow = -1.0 / slope;
        amp_slow = std::exp((swy * swxx - swx * swxy) / det);
    }

    // params: log a1, log tau_short, log a2, log gap (tau_long = tau_short + gap)
    const ResidualFn residuals = [&](const Eigen::VectorXd& p) {
        const double a1 = std::exp(p[0]);
        const double tau_s = std::exp(p[1]);
        const double a2 = std::exp(p[2]);
        const double tau_l = tau_s + std::exp(p[3]);
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const double f = a1 * std::exp(-data.t_ps[i] / tau_s) + a2 * std::exp(-data.t_ps[i] / tau_l);
            r[static_cast<Eigen::Index>(i)] = (data.intensity[i] - f) / sig[i];
        }
        return r;
    };
    Eigen::VectorXd p0(4);
    p0 << std::log(std::max(data.intensity.front() * 0.2, 1e-6)), std::log(std::max(tau_slow / 6.0, 1.0)),
        std::log(std::max(amp_slow, 1e-6)), std::log(std::max(tau_slow, 2.0));
    const LmResult lm = lm_minimize(residuals, p0);
    const auto to_natural = [](const Eigen::VectorXd& p) {
        Eigen::VectorXd nat(4);
        const double tau_s = std::exp(p[1]);
        nat << std::exp(p[0]), tau_s, std::exp(p[2]), tau_s + std::exp(p[3]);
        return nat;
    };
    FitReport rep =
        detail::make_report("lifetime", lm, {"amp_short", "tau_short_ps", "amp_long", "tau_long_ps"}, to_natural,
                            static_cast<int>(n));
    rep.initial = {{"tau_long_ps", tau_slow}, {"amp_long", amp_slow}};
    const double a_s = rep.param("amp_short"), tau_s = rep.param("tau_short_ps");
    const double a_l = rep.param("amp_long"), tau_l = rep.param("tau_long_ps");
    const bool long_dominant = a_l * tau_l >= a_s * tau_s;
    rep.derived["t1_ps"] = long_dominant ? tau_l : tau_s;
    rep.derived_errors["t1_ps"] = long_dominant ? rep.error("tau_long_ps") : rep.error("tau_short_ps");
    if (tau_l / tau_s < 1.2)
        rep.warnings.push_back("lifetimes are nearly degenerate (ratio < 1.2); consider a single-exponential fit");
    return rep;
}

}  // namespace photonstat
