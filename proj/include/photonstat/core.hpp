#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>

#include "photonstat/common.hpp"

namespace photonstat {

using Complex = std::complex<double>;

/// Reduced Planck constant in ueV*ps. All energies in this library are
/// micro-electron-volts, all times picoseconds; there is no other unit system.
inline constexpr double kHbarUevPs = 658.2119569;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Angular frequency (rad/ps) of an energy scale.
inline double energy_to_angular_freq(double energy_uev) { return energy_uev / kHbarUevPs; }
inline double angular_freq_to_energy(double omega_rad_per_ps) { return omega_rad_per_ps * kHbarUevPs; }

/// Period of the beat cos(dE*t/hbar), i.e. 2*pi*hbar/dE in ps.
/// dE == 0 has no beat; returned as an empty optional.
inline std::optional<double> beat_period_ps(double delta_e_uev) {
    if (delta_e_uev < 0.0) throw InputError("beat_period_ps: negative energy splitting");
    if (delta_e_uev == 0.0) return std::nullopt;
    return 2.0 * kPi * kHbarUevPs / delta_e_uev;
}

/// Single-photon polarization in the QD eigenbasis, |psi> = c_h|H> + c_v|V>.
/// Unit norm is enforced on construction; global phase carries no meaning.
struct PolarizationState {
    Complex h{1.0, 0.0};
    Complex v{0.0, 0.0};

    PolarizationState() = default;

    PolarizationState(Complex ch, Complex cv) : h(ch), v(cv) {
        const double n2 = std::norm(h) + std::norm(v);
        if (!(n2 > 0.0) || !std::isfinite(n2)) throw InputError("PolarizationState: null or non-finite amplitudes");
        const double inv = 1.0 / std::sqrt(n2);
        h *= inv;
        v *= inv;
    }

    /// <this|other>
    Complex inner(const PolarizationState& other) const {
        return std::conj(h) * other.h + std::conj(v) * other.v;
    }

    PolarizationState orthogonal() const { return {-std::conj(v), std::conj(h)}; }
};

/// |<a|b>|^2, invariant under global phases of either state.
inline double poincare_overlap(const PolarizationState& a, const PolarizationState& b) {
    return std::norm(a.inner(b));
}

enum class PolLabel { H, V, D, A, R, L };

/// The six canonical polarization states: H, V, D=(H+V)/sqrt2, A=(H-V)/sqrt2,
/// R=(H-iV)/sqrt2, L=(H+iV)/sqrt2.
inline PolarizationState jones_state(PolLabel label) {
    const double s = 1.0 / std::sqrt(2.0);
    switch (label) {
        case PolLabel::H: return {{1.0, 0.0}, {0.0, 0.0}};
        case PolLabel::V: return {{0.0, 0.0}, {1.0, 0.0}};
        case PolLabel::D: return {{s, 0.0}, {s, 0.0}};
        case PolLabel::A: return {{s, 0.0}, {-s, 0.0}};
        case PolLabel::R: return {{s, 0.0}, {0.0, -s}};
        case PolLabel::L: return {{s, 0.0}, {0.0, s}};
    }
    throw InputError("jones_state: unknown label");
}

inline PolLabel parse_pol_label(const std::string& s) {
    if (s.size() == 1) {
        switch (s[0]) {
            case 'H': return PolLabel::H;
            case 'V': return PolLabel::V;
            case 'D': return PolLabel::D;
            case 'A': return PolLabel::A;
            case 'R': return PolLabel::R;
            case 'L': return PolLabel::L;
            default: break;
        }
    }
    throw InputError("unknown polarization label '" + s + "' (expected one of H,V,D,A,R,L)");
}

inline const char* pol_label_name(PolLabel l) {
    switch (l) {
        case PolLabel::H: return "H";
        case PolLabel::V: return "V";
        case PolLabel::D: return "D";
        case PolLabel::A: return "A";
        case PolLabel::R: return "R";
        case PolLabel::L: return "L";
    }
    return "?";
}

/// Emitter physics of one quantum dot at one pump power.
///
/// The blink amplitudes/timescales are the X, Y, tau1..tau3 of the four-level
/// autocorrelation model; beta is the uncorrelated background intensity
/// relative to the dot signal. pump_power_rel is a label only: every model
/// takes its T2 / blink / background values explicitly per power point.
struct QuantumDotParams {
    double t1_ps = 1765.0;        ///< X radiative lifetime
    double t2_ps = 294.0;         ///< first-order coherence time
    double fss_uev = 5.7;         ///< fine-structure splitting dE
    double blink_x = 0.0;         ///< bunching amplitude X
    double blink_y = 0.0;         ///< bunching amplitude Y
    double tau1_ps = 600.0;       ///< antibunching recovery time
    double tau2_ps = 5000.0;      ///< X-channel blink timescale
    double tau3_ps = 30000.0;     ///< Y-channel blink timescale
    double beta = 0.0;            ///< background fraction (relative to dot intensity)
    double pump_power_rel = 1.0;  ///< pump power in units of P_sat (label only)
    double entanglement_fidelity_max = 1.0;

    void validate() const {
        if (!(t1_ps > 0.0 && t2_ps > 0.0 && tau1_ps > 0.0 && tau2_ps > 0.0 && tau3_ps > 0.0))
            throw InputError("QuantumDotParams: all timescales must be positive");
        if (t2_ps > 2.0 * t1_ps + 1e-9) throw InputError("QuantumDotParams: T2 exceeds Fourier limit 2*T1");
        if (blink_x < 0.0 || blink_y < 0.0) throw InputError("QuantumDotParams: blink amplitudes must be >= 0");
        if (beta < 0.0) throw InputError("QuantumDotParams: beta must be >= 0");
        if (fss_uev < 0.0) throw InputError("QuantumDotParams: FSS is non-negative by convention");
        if (!(pump_power_rel > 0.0)) throw InputError("QuantumDotParams: pump power must be positive");
        if (entanglement_fidelity_max < 0.0 || entanglement_fidelity_max > 1.0)
            throw InputError("QuantumDotParams: entanglement fidelity must lie in [0,1]");
    }
};

/// Weak coherent (laser) source.
struct LaserParams {
    double intensity_alpha2 = 1.0;  ///< alpha^2, same arbitrary units as eta
    double detuning_uev = 0.0;      ///< dE_L, laser minus dot line
    PolarizationState polarization{};
    double mean_rate_per_ps = 0.0;  ///< detected click rate used by the Monte Carlo

    void validate() const {
        if (intensity_alpha2 < 0.0) throw InputError("LaserParams: intensity must be >= 0");
        if (mean_rate_per_ps < 0.0) throw InputError("LaserParams: rate must be >= 0");
    }
};

/// Timing response and efficiency of one detector channel.
///
/// response_fwhm_ps is the FWHM of the Gaussian *coincidence* response (the
/// width a delta-like correlation feature acquires between two such
/// detectors); the per-detector timestamp jitter is therefore
/// sigma = FWHM / (2*sqrt(2 ln 2)) / sqrt(2).
struct DetectorParams {
    double response_fwhm_ps = 125.0;
    double efficiency = 1.0;
    double dark_rate_per_ps = 0.0;
    double dead_time_ps = 0.0;

    void validate() const {
        if (response_fwhm_ps < 0.0) throw InputError("DetectorParams: response FWHM must be >= 0");
        if (efficiency < 0.0 || efficiency > 1.0) throw InputError("DetectorParams: efficiency must lie in [0,1]");
        if (dark_rate_per_ps < 0.0) throw InputError("DetectorParams: dark rate must be >= 0");
        if (dead_time_ps < 0.0) throw InputError("DetectorParams: dead time must be >= 0");
    }

    double jitter_sigma_ps() const {
        return response_fwhm_ps / (2.0 * std::sqrt(2.0 * std::log(2.0))) / std::sqrt(2.0);
    }
};

/// Relative dot/laser intensity at the detectors.
struct SourceIntensityRatio {
    double eta = 1.0;     ///< dot intensity
    double alpha2 = 1.0;  ///< laser intensity

    void validate() const {
        if (eta < 0.0 || alpha2 < 0.0) throw InputError("SourceIntensityRatio: intensities must be >= 0");
        if (!(eta + alpha2 > 0.0)) throw InputError("SourceIntensityRatio: eta + alpha2 must be positive");
    }

    double ratio() const { return eta / alpha2; }
};

}  // namespace photonstat
