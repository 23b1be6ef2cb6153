#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "photonstat/common.hpp"
#include "photonstat/core.hpp"
#include "photonstat/sampled.hpp"

namespace photonstat {

// ---------------------------------------------------------------------------
// Single-photon interference
// ---------------------------------------------------------------------------

/// Fringe visibility V = (Imax - Imin) / (Imax + Imin).
inline double fringe_visibility(double i_max, double i_min) {
    if (i_min < 0.0 || i_max < i_min) throw InputError("fringe_visibility: require i_max >= i_min >= 0");
    if (!(i_max > 0.0)) throw InputError("fringe_visibility: undefined for zero intensities");
    return (i_max - i_min) / (i_max + i_min);
}

/// Envelope of the first-order interferogram of a line doublet.
struct FringeEnvelopeParams {
    double a0 = 1.0;          ///< zero-delay contrast
    double t2_ps = 1000.0;    ///< coherence time
    double delta_e_uev = 0.0; ///< splitting driving the contrast beat

    void validate() const {
        if (a0 < 0.0 || a0 > 1.0) throw InputError("FringeEnvelopeParams: a0 must lie in [0,1]");
        if (!(t2_ps > 0.0)) throw InputError("FringeEnvelopeParams: t2 must be positive");
        if (delta_e_uev < 0.0) throw InputError("FringeEnvelopeParams: splitting must be >= 0");
    }
};

/// Signed fringe contrast a0 * exp(-|dtau|/T2) * cos(dE*dtau/hbar).
inline double fringe_contrast(double dtau_ps, const FringeEnvelopeParams& p) {
    p.validate();
    const double t = std::abs(dtau_ps);
    return p.a0 * std::exp(-t / p.t2_ps) * std::cos(p.delta_e_uev * dtau_ps / kHbarUevPs);
}

// ---------------------------------------------------------------------------
// Second-order correlations
// ---------------------------------------------------------------------------

/// Four-level autocorrelation of the dot emission,
///   g2(tau) = 1 - (1+X+Y) e^{-|tau|/tau1} + X e^{-|tau|/tau2} + Y e^{-|tau|/tau3},
/// written in the grouped form (1-e1) + X(e2-e1) + Y(e3-e1) which is exactly
/// zero at tau = 0 and manifestly non-negative for tau2, tau3 >= tau1.
inline double g2_qd(double tau_ps, const QuantumDotParams& p) {
    const double t = std::abs(tau_ps);
    const double e1 = std::exp(-t / p.tau1_ps);
    const double e2 = std::exp(-t / p.tau2_ps);
    const double e3 = std::exp(-t / p.tau3_ps);
    return (1.0 - e1) + p.blink_x * (e2 - e1) + p.blink_y * (e3 - e1);
}

/// Background-corrected autocorrelation (g2_qd + 2*beta + beta^2) / (1+beta)^2.
inline double g2_hbt(double tau_ps, const QuantumDotParams& p) {
    if (p.beta < 0.0) throw InputError("g2_hbt: beta must be >= 0");
    const double b = p.beta;
    return (g2_qd(tau_ps, p) + 2.0 * b + b * b) / ((1.0 + b) * (1.0 + b));
}

/// Zero-delay value of g2_hbt for a perfectly antibunched dot.
inline double g2_zero_from_beta(double beta) {
    if (beta < 0.0) throw InputError("g2_zero_from_beta: beta must be >= 0");
    return (2.0 * beta + beta * beta) / ((1.0 + beta) * (1.0 + beta));
}

/// Inverse of g2_zero_from_beta: (1+beta)^2 = 1/(1 - g2zero).
inline double beta_from_g2_zero(double g2_zero) {
    if (g2_zero < 0.0 || g2_zero >= 1.0) throw InputError("beta_from_g2_zero: g2(0) must lie in [0,1)");
    return 1.0 / std::sqrt(1.0 - g2_zero) - 1.0;
}

// ---------------------------------------------------------------------------
// Two-photon interference with a laser
// ---------------------------------------------------------------------------

/// Parameters of the dot/laser correlation model.
struct TpiParams {
    SourceIntensityRatio ratio{};   ///< eta, alpha^2
    double beta = 0.0;              ///< uncorrelated background intensity
    double t2_ps = 294.0;           ///< dot coherence time (the mutual-coherence decay)
    double detuning_uev = 0.0;      ///< dot-laser detuning dE_L
    double phi_rad = 0.0;           ///< polarization angle (0 co-, pi/2 cross-polarized)
    QuantumDotParams qd{};          ///< four-level autocorrelation entering the eta^2 term
    double response_fwhm_ps = 0.0;  ///< detector response applied by the visibility ops

    void validate() const {
        ratio.validate();
        if (beta < 0.0) throw InputError("TpiParams: beta must be >= 0");
        if (!(t2_ps > 0.0)) throw InputError("TpiParams: t2 must be positive");
        if (phi_rad < 0.0 || phi_rad > kPi / 2.0 + 1e-12)
            throw InputError("TpiParams: phi outside the canonical range [0, pi/2]");
        if (response_fwhm_ps < 0.0) throw InputError("TpiParams: response FWHM must be >= 0");
    }

    double interference_env(double tau_ps) const {
        const double c = std::cos(phi_rad);
        return std::exp(-std::abs(tau_ps) / t2_ps) * std::cos(detuning_uev * tau_ps / kHbarUevPs) * c * c;
    }
};

/// Dissimilar-source correlation function in its published form,
///   g2(tau) = 1 + [2 eta a2 (1 + env) + eta^2 (g2_qd - 1) + a2^2] / (eta + a2 + beta)^2.
/// Its long-delay baseline is larger than 1 (e.g. 1.75 for eta = alpha^2,
/// beta = 0); see g2_tpi_normalized for the wing-normalized variant that
/// measured histograms follow.
inline double g2_tpi(double tau_ps, const TpiParams& p) {
    p.validate();
    const double eta = p.ratio.eta;
    const double a2 = p.ratio.alpha2;
    const double denom = eta + a2 + p.beta;
    const double num = 2.0 * eta * a2 * (1.0 + p.interference_env(tau_ps)) +
                       eta * eta * (g2_qd(tau_ps, p.qd) - 1.0) + a2 * a2;
    return 1.0 + num / (denom * denom);
}

/// Same physics with the dot-laser and laser-laser rate terms folded into the
/// unit baseline:
///   g2(tau) = 1 + [2 eta a2 env + eta^2 (g2_qd - 1)] / (eta + a2 + beta)^2.
/// This is the curve a wing-normalized coincidence histogram follows, and the
/// form all visibility calculations use.
inline double g2_tpi_normalized(double tau_ps, const TpiParams& p) {
    p.validate();
    const double eta = p.ratio.eta;
    const double a2 = p.ratio.alpha2;
    const double denom = eta + a2 + p.beta;
    const double num = 2.0 * eta * a2 * p.interference_env(tau_ps) + eta * eta * (g2_qd(tau_ps, p.qd) - 1.0);
    return 1.0 + num / (denom * denom);
}

namespace detail {

inline TpiParams with_phi(const TpiParams& p, double phi) {
    TpiParams q = p;
    q.phi_rad = phi;
    return q;
}

}  // namespace detail

/// Interference visibility V(tau) = g2_co(tau) / g2_cross(tau) - 1 of the
/// wing-normalized correlation pair, with both curves convolved by the
/// detector response when p.response_fwhm_ps > 0.
inline double tpi_visibility(double tau_ps, const TpiParams& p) {
    const TpiParams co = detail::with_phi(p, 0.0);
    const TpiParams cross = detail::with_phi(p, kPi / 2.0);
    if (p.response_fwhm_ps == 0.0) {
        const double denom = g2_tpi_normalized(tau_ps, cross);
        if (!(denom > 0.0)) throw InputError("tpi_visibility: cross-polarized denominator is not positive");
        return g2_tpi_normalized(tau_ps, co) / denom - 1.0;
    }
    const double sigma = p.response_fwhm_ps / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const double step = std::min(5.0, std::max(p.response_fwhm_ps / 50.0, 0.5));
    const double pad = 5.0 * sigma + step;
    const double span = std::abs(tau_ps) + pad;
    const auto co_c = convolve_gaussian(
        SampledCurve::sample(-span, span, step, [&](double t) { return g2_tpi_normalized(t, co); }),
        p.response_fwhm_ps);
    const auto cross_c = convolve_gaussian(
        SampledCurve::sample(-span, span, step, [&](double t) { return g2_tpi_normalized(t, cross); }),
        p.response_fwhm_ps);
    const double denom = cross_c.at(tau_ps);
    if (!(denom > 0.0)) throw InputError("tpi_visibility: cross-polarized denominator is not positive");
    return co_c.at(tau_ps) / denom - 1.0;
}

/// Peak (zero-delay) visibility; both correlation curves are even in tau.
inline double peak_tpi_visibility(const TpiParams& p) { return tpi_visibility(0.0, p); }

/// Peak visibility as a function of the dot/laser intensity ratio, at fixed
/// multi-photon probability g2(0). The background scales with the dot
/// intensity (beta/eta is set by inverting the background-corrected zero-delay
/// value), matching an experiment that attenuates only the laser.
inline std::vector<std::pair<double, double>> visibility_vs_ratio(const std::vector<double>& ratio_grid,
                                                                  double g2_zero, const TpiParams& fixed) {
    const double beta_per_eta = beta_from_g2_zero(g2_zero);
    std::vector<std::pair<double, double>> out;
    out.reserve(ratio_grid.size());
    for (double r : ratio_grid) {
        if (!(r > 0.0)) throw InputError("visibility_vs_ratio: ratios must be positive");
        TpiParams p = fixed;
        p.ratio.alpha2 = 1.0;
        p.ratio.eta = r;
        p.beta = beta_per_eta * r;
        out.emplace_back(r, peak_tpi_visibility(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cascade entanglement and teleportation
// ---------------------------------------------------------------------------

/// Pure state of the (XX, X) photon pair, basis order {HH, HV, VH, VV}.
struct TwoQubitState {
    std::array<Complex, 4> amps{};

    Complex inner(const TwoQubitState& other) const {
        Complex acc{0.0, 0.0};
        for (std::size_t i = 0; i < 4; ++i) acc += std::conj(amps[i]) * other.amps[i];
        return acc;
    }

    double norm2() const {
        double acc = 0.0;
        for (const auto& a : amps) acc += std::norm(a);
        return acc;
    }

    double fidelity_to(const TwoQubitState& other) const { return std::norm(inner(other)); }
};

struct CascadeStateParams {
    double fss_uev = 0.0;  ///< splitting dE
    double tau_ps = 0.0;   ///< X emission delay after XX
};

/// Time-evolving entangled state of the radiative cascade,
///   (|H_XX H_X> + e^{i dE tau / hbar} |V_XX V_X>) / sqrt(2).
/// Sign convention: H is the higher-energy eigenstate, the phase advances
/// with +dE.
inline TwoQubitState cascade_state(const CascadeStateParams& p) {
    const double s = 1.0 / std::sqrt(2.0);
    const double phase = p.fss_uev * p.tau_ps / kHbarUevPs;
    TwoQubitState st;
    st.amps[0] = {s, 0.0};
    st.amps[3] = std::polar(s, phase);
    return st;
}

/// Teleportation fidelity F_P = g3_P / (g3_P + g3_Q).
/// Branching on the larger argument makes F(p,q) + F(q,p) == 1 hold exactly
/// in floating point.
inline double teleport_fidelity(double g3_p, double g3_q) {
    if (g3_p < 0.0 || g3_q < 0.0) throw InputError("teleport_fidelity: counts must be >= 0");
    const double sum = g3_p + g3_q;
    if (!(sum > 0.0)) throw InputError("teleport_fidelity: undefined for zero total counts");
    if (g3_p >= g3_q) return g3_p / sum;
    return 1.0 - g3_q / sum;
}

// ---------------------------------------------------------------------------
// Lifetime and coherence summaries
// ---------------------------------------------------------------------------

/// Double-exponential decay a1 e^{-t/tau_a} + a2 e^{-t/tau_b} for t >= 0.
inline double lifetime_decay(double t_ps, double amp1, double amp2, double tau_a_ps, double tau_b_ps) {
    if (t_ps < 0.0) throw InputError("lifetime_decay: negative time");
    if (!(tau_a_ps > 0.0) || !(tau_b_ps > 0.0)) throw InputError("lifetime_decay: lifetimes must be positive");
    return amp1 * std::exp(-t_ps / tau_a_ps) + amp2 * std::exp(-t_ps / tau_b_ps);
}

/// T2 / (2 T1). Values above 1 are unphysical and reported as a warning.
inline double fourier_limit_ratio(double t2_ps, double t1_ps, WarningSink* warnings = nullptr) {
    if (!(t2_ps > 0.0) || !(t1_ps > 0.0)) throw InputError("fourier_limit_ratio: times must be positive");
    const double r = t2_ps / (2.0 * t1_ps);
    if (r > 1.0) warn(warnings, "fourier_limit_ratio: T2 > 2*T1 is unphysical");
    return r;
}

}  // namespace photonstat
