#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "photonstat/common.hpp"
#include "photonstat/core.hpp"
#include "photonstat/events.hpp"
#include "photonstat/rng.hpp"

namespace photonstat {

enum class Topology { michelson, hbt, hom, teleport };

inline const char* topology_name(Topology t) {
    switch (t) {
        case Topology::michelson: return "michelson";
        case Topology::hbt: return "hbt";
        case Topology::hom: return "hom";
        case Topology::teleport: return "teleport";
    }
    return "?";
}

inline Topology parse_topology(const std::string& s) {
    if (s == "michelson") return Topology::michelson;
    if (s == "hbt") return Topology::hbt;
    if (s == "hom") return Topology::hom;
    if (s == "teleport") return Topology::teleport;
    throw ConfigError("unknown topology '" + s + "'");
}

// Channel conventions of the synthesized streams.
inline constexpr std::uint8_t kChD1 = 0;  ///< hbt/hom detector 1
inline constexpr std::uint8_t kChD2 = 1;  ///< hbt/hom detector 2
inline constexpr std::uint8_t kChDH = 0;  ///< teleport: Charlie H
inline constexpr std::uint8_t kChDV = 1;  ///< teleport: Charlie V
inline constexpr std::uint8_t kChDP = 2;  ///< teleport: Bob expected output
inline constexpr std::uint8_t kChDQ = 3;  ///< teleport: Bob orthogonal output

enum class PhotonOrigin : std::uint8_t { X, XX, Laser, Background };

/// One emitted photon before detection.
struct EmittedPhoton {
    double t_emit_ps = 0.0;
    double freq_offset_uev = 0.0;  ///< instantaneous detuning from the dot line
    PolarizationState polarization{};
    PhotonOrigin origin = PhotonOrigin::X;
    std::int32_t cascade_index = -1;  ///< joins XX/X partners; -1 otherwise
};

struct MichelsonConfig {
    std::vector<double> coarse_delays_ps;
    int phase_steps = 24;
    double photons_per_step = 8000.0;
    double contrast_a0 = 1.0;  ///< instrumental zero-delay contrast
};

struct HomConfig {
    double qd_rate_per_ps = 1e-4;   ///< dot photon arrival rate at the analysis detectors (both combined)
    double ratio_eta_alpha2 = 1.0;  ///< eta / alpha^2 at the detectors
    bool copolarized = true;
    double splitting_ratio = 0.99;  ///< dot transmission of the unbalanced splitter
    bool qd_source_is_laser = false;       ///< replace the dot by a second coherent source
    double laser2_coherence_t2_ps = 1000.0;  ///< mutual coherence of that replacement source
};

struct TeleportConfig {
    double x_rate_per_ps = 5e-5;      ///< detected X rate at Charlie
    double laser_rate_per_ps = 5e-5;  ///< detected laser rate at Charlie
    double xx_efficiency_rel = 0.9;   ///< XX detection probability relative to X
    double bob_background_beta = 0.0; ///< uncorrelated background at Bob, relative to the XX rate
    double xx_lifetime_ps = 0.0;      ///< 0 selects the conventional default T1/2
    PolLabel input_state = PolLabel::D;
    bool bob_basis_auto = true;       ///< align Bob's splitter to the expected output state
    PolarizationState bob_p{};        ///< explicit P port when bob_basis_auto is false
    double pairing_reach_ps = 0.0;    ///< interference pairing window; 0 selects 6*T2
};

struct SimConfig {
    std::int64_t duration_ps = 1'000'000'000;
    std::uint64_t seed = 1;
    Topology topology = Topology::hbt;
    QuantumDotParams qd{};
    LaserParams laser{};
    DetectorParams detectors{};
    MichelsonConfig michelson{};
    HomConfig hom{};
    TeleportConfig teleport{};

    void validate() const {
        if (duration_ps <= 0) throw ConfigError("duration_ps must be positive");
        qd.validate();
        laser.validate();
        detectors.validate();
        if (topology == Topology::hbt || topology == Topology::hom || topology == Topology::teleport) {
            if (!(qd.tau1_ps < qd.t1_ps))
                throw ConfigError("tau1_ps must be below t1_ps (the pump rate would be negative)");
        }
        if (topology == Topology::hom) {
            if (!(hom.splitting_ratio > 0.0 && hom.splitting_ratio < 1.0))
                throw ConfigError("hom.splitting_ratio must lie in (0,1)");
            if (hom.qd_rate_per_ps < 0.0 || hom.ratio_eta_alpha2 <= 0.0)
                throw ConfigError("hom rates must be positive");
        }
        if (topology == Topology::michelson && michelson.coarse_delays_ps.empty())
            throw ConfigError("michelson.coarse_delays_ps must not be empty");
        if (topology == Topology::teleport) {
            if (teleport.x_rate_per_ps <= 0.0 || teleport.laser_rate_per_ps < 0.0)
                throw ConfigError("teleport rates must be positive");
            if (teleport.xx_efficiency_rel < 0.0 || teleport.xx_efficiency_rel > 1.0)
                throw ConfigError("teleport.xx_efficiency_rel must lie in [0,1]");
        }
    }
};

// ---------------------------------------------------------------------------
// Elementary generators
// ---------------------------------------------------------------------------

namespace synth_detail {

/// On/off telegraph with bunching amplitude `amp` and correlation decay
/// `tau_ps` (so the gated intensity has g2 = 1 + amp * exp(-|t|/tau)).
struct Telegraph {
    std::vector<double> switch_times;
    bool initial_on = true;

    static Telegraph generate(double amp, double tau_ps, double duration_ps, Rng& rng) {
        Telegraph tg;
        if (amp <= 0.0) {
            tg.initial_on = true;
            return tg;
        }
        const double rate_off = amp / (tau_ps * (1.0 + amp));  // leave the on state
        const double rate_on = 1.0 / (tau_ps * (1.0 + amp));   // return from the dark state
        tg.initial_on = rng.uniform() < 1.0 / (1.0 + amp);     // stationary occupancy
        double t = 0.0;
        bool on = tg.initial_on;
        while (t < duration_ps) {
            t += rng.exponential(on ? 1.0 / rate_off : 1.0 / rate_on);
            if (t >= duration_ps) break;
            tg.switch_times.push_back(t);
            on = !on;
        }
        return tg;
    }

    /// Forward-only query; times must be non-decreasing between calls.
    struct Cursor {
        const Telegraph* tg;
        std::size_t next = 0;
        bool on;
        explicit Cursor(const Telegraph& t) : tg(&t), on(t.initial_on) {}
        bool at(double t) {
            while (next < tg->switch_times.size() && tg->switch_times[next] <= t) {
                on = !on;
                ++next;
            }
            return on;
        }
    };
};

/// Pump rate that gives the requested antibunching recovery time
/// 1/tau1 = pump + 1/T1.
inline double pump_rate(const QuantumDotParams& qd) {
    const double p = 1.0 / qd.tau1_ps - 1.0 / qd.t1_ps;
    if (!(p > 0.0)) throw ConfigError("tau1_ps must be below t1_ps");
    return p;
}

}  // namespace synth_detail

/// Poisson click times at a constant rate.
inline std::vector<double> poisson_times(double rate_per_ps, double duration_ps, Rng& rng) {
    std::vector<double> out;
    if (rate_per_ps <= 0.0) return out;
    out.reserve(static_cast<std::size_t>(rate_per_ps * duration_ps * 1.1) + 16);
    double t = rng.exponential(1.0 / rate_per_ps);
    while (t < duration_ps) {
        out.push_back(t);
        t += rng.exponential(1.0 / rate_per_ps);
    }
    return out;
}

/// Dot emission stream for the single-line (polarizer-filtered) experiments.
///
/// The emitter runs a pump/decay cycle whose X-X autocorrelation is exactly
/// 1 - exp(-|t|/tau1); two independent blink telegraphs gate the emission and
/// multiply in the bunching shoulders; a thinning factor reduces the emitted
/// rate to `target_rate_per_ps` (thinning preserves normalized correlations).
/// Photon frequencies are drawn from a Lorentzian of HWHM hbar/T2, which makes
/// the ensemble first-order coherence decay as exp(-|t|/T2).
inline std::vector<EmittedPhoton> synth_qd_stream(const SimConfig& cfg, double target_rate_per_ps, Rng& rng) {
    const auto& qd = cfg.qd;
    const double pump = synth_detail::pump_rate(qd);
    const double duty = (1.0 / (1.0 + qd.blink_x)) * (1.0 / (1.0 + qd.blink_y));
    const double cycle_ps = 1.0 / pump + qd.t1_ps;
    const double full_rate = duty / cycle_ps;
    if (target_rate_per_ps > full_rate * (1.0 + 1e-9))
        throw ConfigError("requested dot rate exceeds the emitter's saturated rate (" +
                          std::to_string(full_rate) + " /ps)");
    const double keep = target_rate_per_ps / full_rate;
    const double duration = static_cast<double>(cfg.duration_ps);

    auto gate_x = synth_detail::Telegraph::generate(qd.blink_x, qd.tau2_ps, duration, rng);
    auto gate_y = synth_detail::Telegraph::generate(qd.blink_y, qd.tau3_ps, duration, rng);
    synth_detail::Telegraph::Cursor cx(gate_x), cy(gate_y);

    const double gamma_uev = kHbarUevPs / qd.t2_ps;  // Lorentzian HWHM
    const PolarizationState pol_h = jones_state(PolLabel::H);

    std::vector<EmittedPhoton> out;
    out.reserve(static_cast<std::size_t>(target_rate_per_ps * duration * 1.05) + 16);
    double t = 0.0;
    while (true) {
        t += rng.exponential(1.0 / pump);   // re-excitation
        t += rng.exponential(qd.t1_ps);     // radiative decay
        if (t >= duration) break;
        const bool on = cx.at(t) && cy.at(t);
        if (!on || !rng.bernoulli(keep)) continue;
        EmittedPhoton ph;
        ph.t_emit_ps = t;
        ph.freq_offset_uev = rng.lorentzian(gamma_uev);
        ph.polarization = pol_h;
        ph.origin = PhotonOrigin::X;
        out.push_back(ph);
    }
    return out;
}

/// Weak coherent stream: Poisson arrivals, fixed polarization, fixed
/// frequency offset (the configured detuning).
inline std::vector<EmittedPhoton> synth_laser_stream(const SimConfig& cfg, double rate_per_ps, Rng& rng) {
    std::vector<EmittedPhoton> out;
    for (double t : poisson_times(rate_per_ps, static_cast<double>(cfg.duration_ps), rng)) {
        EmittedPhoton ph;
        ph.t_emit_ps = t;
        ph.freq_offset_uev = cfg.laser.detuning_uev;
        ph.polarization = cfg.laser.polarization;
        ph.origin = PhotonOrigin::Laser;
        out.push_back(ph);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Michelson fringe scans
// ---------------------------------------------------------------------------

struct FringeScanRow {
    double delay_ps = 0.0;
    double visibility = 0.0;
    double sigma = 0.0;
    double n_photons = 0.0;
    bool ok = false;
};

/// Scans the fine phase at every coarse delay and extracts the fringe
/// visibility from a sinusoid fit of the phase-binned counts (the fitted
/// extrema feed the (Imax-Imin)/(Imax+Imin) definition).
///
/// Each photon carries one fine-structure component at +-dE plus Lorentzian
/// jitter of HWHM hbar/T2, so the ensemble fringe contrast follows
/// a0 exp(-d/T2) cos(dE d / hbar).
inline std::vector<FringeScanRow> run_michelson(const SimConfig& cfg) {
    cfg.validate();
    const auto& mc = cfg.michelson;
    if (mc.phase_steps < 6) throw ConfigError("michelson.phase_steps must be at least 6");
    Rng rng(derive_seed(cfg.seed, 0x4d49ull));  // "MI"
    const double gamma_uev = kHbarUevPs / cfg.qd.t2_ps;
    std::vector<FringeScanRow> rows;
    rows.reserve(mc.coarse_delays_ps.size());

    for (const double delay : mc.coarse_delays_ps) {
        const int K = mc.phase_steps;
        std::vector<double> port1(static_cast<std::size_t>(K), 0.0);
        double total = 0.0;
        for (int k = 0; k < K; ++k) {
            const double theta = 2.0 * kPi * (static_cast<double>(k) + 0.5) / K;
            // Poisson photon number in this phase bin
            const double mean = mc.photons_per_step;
            std::size_t n = 0;
            {
                double acc = rng.exponential(1.0);
                while (acc < mean) {
                    ++n;
                    acc += rng.exponential(1.0);
                }
            }
            total += static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double line = rng.bernoulli(0.5) ? cfg.qd.fss_uev : -cfg.qd.fss_uev;
                const double omega = line + rng.lorentzian(gamma_uev);
                const double p = 0.5 * (1.0 + mc.contrast_a0 * std::cos(omega * delay / kHbarUevPs + theta));
                if (rng.bernoulli(std::clamp(p, 0.0, 1.0))) port1[static_cast<std::size_t>(k)] += 1.0;
            }
        }

        FringeScanRow row;
        row.delay_ps = delay;
        row.n_photons = total;
        if (total < 200.0) {
            rows.push_back(row);  // flagged, not a failure
            continue;
        }
        // I(theta) = C + A cos(theta) + B sin(theta); uniform grid keeps the
        // regressors orthogonal.
        double c_sum = 0.0, a_sum = 0.0, b_sum = 0.0;
        for (int k = 0; k < K; ++k) {
            const double theta = 2.0 * kPi * (static_cast<double>(k) + 0.5) / K;
            c_sum += port1[static_cast<std::size_t>(k)];
            a_sum += port1[static_cast<std::size_t>(k)] * std::cos(theta);
            b_sum += port1[static_cast<std::size_t>(k)] * std::sin(theta);
        }
        const double c = c_sum / K;
        const double a = 2.0 * a_sum / K;
        const double b = 2.0 * b_sum / K;
        const double r = std::sqrt(a * a + b * b);
        if (!(c > 0.0) || !(r >= 0.0)) {
            rows.push_back(row);
            continue;
        }
        // Poisson error propagation through the orthogonal projections.
        double var_a = 0.0, var_b = 0.0, var_c = 0.0;
        for (int k = 0; k < K; ++k) {
            const double theta = 2.0 * kPi * (static_cast<double>(k) + 0.5) / K;
            const double var = std::max(port1[static_cast<std::size_t>(k)], 1.0);
            var_a += var * std::cos(theta) * std::cos(theta);
            var_b += var * std::sin(theta) * std::sin(theta);
            var_c += var;
        }
        var_a *= 4.0 / (K * K);
        var_b *= 4.0 / (K * K);
        var_c /= K * K;
        const double var_r = r > 1e-12 ? (a * a * var_a + b * b * var_b) / (r * r) : 0.5 * (var_a + var_b);
        const double vis = r / c;
        row.visibility = vis;
        row.sigma = std::sqrt(std::max(var_r / (c * c) + r * r * var_c / (c * c * c * c), 1e-12));
        row.ok = true;
        rows.push_back(row);
    }
    return rows;
}

inline void write_fringe_csv(const std::vector<FringeScanRow>& rows, std::ostream& os,
                             const std::map<std::string, std::string>& meta = {}) {
    for (const auto& [k, v] : meta) os << "# meta: " << k << '=' << v << '\n';
    os << "delay_ps,visibility,sigma,n_photons,status\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%s\n", r.delay_ps, r.visibility, r.sigma,
                      r.n_photons, r.ok ? "ok" : "low_counts");
        os << buf;
    }
    if (!os) throw IoError("write_fringe_csv: stream failure");
}

// ---------------------------------------------------------------------------
// Detection pipeline helpers
// ---------------------------------------------------------------------------

namespace synth_detail {

/// Applies efficiency thinning, per-detector Gaussian jitter, integer
/// timestamps, sorting and optional dead time.
inline EventStream finalize_stream(std::vector<EventRecord>&& raw, const SimConfig& cfg, Rng& rng) {
    EventStream s;
    s.duration_ps = cfg.duration_ps;
    s.events = std::move(raw);
    const double sigma = cfg.detectors.jitter_sigma_ps();
    std::vector<EventRecord> kept;
    kept.reserve(s.events.size());
    for (auto& e : s.events) {
        if (cfg.detectors.efficiency < 1.0 && !rng.bernoulli(cfg.detectors.efficiency)) continue;
        double t = static_cast<double>(e.time_ps);
        if (sigma > 0.0) t += rng.normal(0.0, sigma);
        e.time_ps = std::llround(t);
        kept.push_back(e);
    }
    s.events = std::move(kept);
    s.sort();
    if (cfg.detectors.dead_time_ps > 0.0) {
        const auto dead = static_cast<std::int64_t>(cfg.detectors.dead_time_ps);
        std::map<std::uint8_t, std::int64_t> last;
        std::vector<EventRecord> alive;
        alive.reserve(s.events.size());
        for (const auto& e : s.events) {
            auto it = last.find(e.channel);
            if (it != last.end() && e.time_ps - it->second < dead) continue;
            last[e.channel] = e.time_ps;
            alive.push_back(e);
        }
        s.events = std::move(alive);
    }
    return s;
}

inline std::vector<EventRecord> to_records(const std::vector<std::pair<double, std::uint8_t>>& hits) {
    std::vector<EventRecord> out;
    out.reserve(hits.size());
    for (const auto& [t, ch] : hits) out.push_back({ch, static_cast<std::int64_t>(std::llround(t))});
    return out;
}

}  // namespace synth_detail

// ---------------------------------------------------------------------------
// HBT autocorrelation topology
// ---------------------------------------------------------------------------

/// Dot plus uncorrelated background, split 50:50 onto two detectors.
inline EventStream run_hbt(const SimConfig& cfg) {
    cfg.validate();
    Rng gen(derive_seed(cfg.seed, 0x4842ull));    // emission
    Rng route(derive_seed(cfg.seed, 0x4843ull));  // routing + detection
    const double rate = cfg.hom.qd_rate_per_ps;
    auto dots = synth_qd_stream(cfg, rate, gen);
    auto bg = poisson_times(cfg.qd.beta * rate, static_cast<double>(cfg.duration_ps), gen);

    std::vector<std::pair<double, std::uint8_t>> hits;
    hits.reserve(dots.size() + bg.size());
    for (const auto& ph : dots) hits.emplace_back(ph.t_emit_ps, route.bernoulli(0.5) ? kChD1 : kChD2);
    for (double t : bg) hits.emplace_back(t, route.bernoulli(0.5) ? kChD1 : kChD2);
    std::sort(hits.begin(), hits.end());
    return synth_detail::finalize_stream(synth_detail::to_records(hits), cfg, route);
}

// ---------------------------------------------------------------------------
// HOM / two-photon-interference topology
// ---------------------------------------------------------------------------

/// Dot and laser photons merged into one analysis beam and split 50:50.
/// Close dot-laser pairs get a jointly sampled routing: the probability of
/// landing on opposite detectors is (1 + f)/2 with
/// f = cos(dOmega dt / hbar) * |<pol_a|pol_b>|^2, whose ensemble average over
/// the Lorentzian frequency draws is the exp(-|dt|/T2) cos(dE_L dt/hbar)
/// interference term. Marginal routing stays 50:50, so singles rates are
/// untouched.
inline EventStream run_hom(const SimConfig& cfg) {
    cfg.validate();
    Rng gen(derive_seed(cfg.seed, 0x484dull));
    Rng route(derive_seed(cfg.seed, 0x484eull));

    const double eta_rate = cfg.hom.qd_rate_per_ps;
    const double laser_rate = eta_rate / cfg.hom.ratio_eta_alpha2;
    const double bg_rate = cfg.qd.beta * eta_rate;

    std::vector<EmittedPhoton> dots;
    if (cfg.hom.qd_source_is_laser) {
        // classical reference: a second coherent source with finite mutual coherence
        const double gamma = kHbarUevPs / cfg.hom.laser2_coherence_t2_ps;
        for (double t : poisson_times(eta_rate, static_cast<double>(cfg.duration_ps), gen)) {
            EmittedPhoton ph;
            ph.t_emit_ps = t;
            ph.freq_offset_uev = gen.lorentzian(gamma);
            ph.polarization = jones_state(PolLabel::H);
            ph.origin = PhotonOrigin::Laser;
            dots.push_back(ph);
        }
    } else {
        dots = synth_qd_stream(cfg, eta_rate, gen);
    }

    SimConfig laser_cfg = cfg;
    laser_cfg.laser.polarization = jones_state(cfg.hom.copolarized ? PolLabel::H : PolLabel::V);
    auto lasers = synth_laser_stream(laser_cfg, laser_rate, gen);
    auto bg = poisson_times(bg_rate, static_cast<double>(cfg.duration_ps), gen);

    const double overlap = poincare_overlap(jones_state(PolLabel::H), laser_cfg.laser.polarization);
    const double reach = 6.0 * cfg.qd.t2_ps;

    // greedy nearest-neighbour pairing of dot and laser photons
    std::vector<std::int32_t> partner(dots.size(), -1);
    std::vector<bool> laser_used(lasers.size(), false);
    std::size_t lo = 0;
    for (std::size_t i = 0; i < dots.size(); ++i) {
        const double t = dots[i].t_emit_ps;
        while (lo < lasers.size() && lasers[lo].t_emit_ps < t - reach) ++lo;
        double best = reach;
        std::int32_t best_j = -1;
        for (std::size_t j = lo; j < lasers.size() && lasers[j].t_emit_ps <= t + reach; ++j) {
            if (laser_used[j]) continue;
            const double d = std::abs(lasers[j].t_emit_ps - t);
            if (d <= best) {
                best = d;
                best_j = static_cast<std::int32_t>(j);
            }
        }
        if (best_j >= 0) {
            partner[i] = best_j;
            laser_used[static_cast<std::size_t>(best_j)] = true;
        }
    }

    std::vector<std::pair<double, std::uint8_t>> hits;
    hits.reserve(dots.size() + lasers.size() + bg.size());
    std::vector<bool> laser_routed(lasers.size(), false);
    for (std::size_t i = 0; i < dots.size(); ++i) {
        if (partner[i] >= 0) {
            const auto& lp = lasers[static_cast<std::size_t>(partner[i])];
            const double dt = dots[i].t_emit_ps - lp.t_emit_ps;
            const double f = std::cos((dots[i].freq_offset_uev - lp.freq_offset_uev) * dt / kHbarUevPs) * overlap;
            const bool opposite = route.bernoulli(0.5 * (1.0 + f));
            const bool dot_on_d1 = route.bernoulli(0.5);
            hits.emplace_back(dots[i].t_emit_ps, dot_on_d1 ? kChD1 : kChD2);
            const bool laser_on_d1 = opposite ? !dot_on_d1 : dot_on_d1;
            hits.emplace_back(lp.t_emit_ps, laser_on_d1 ? kChD1 : kChD2);
            laser_routed[static_cast<std::size_t>(partner[i])] = true;
        } else {
            hits.emplace_back(dots[i].t_emit_ps, route.bernoulli(0.5) ? kChD1 : kChD2);
        }
    }
    for (std::size_t j = 0; j < lasers.size(); ++j)
        if (!laser_routed[j]) hits.emplace_back(lasers[j].t_emit_ps, route.bernoulli(0.5) ? kChD1 : kChD2);
    for (double t : bg) hits.emplace_back(t, route.bernoulli(0.5) ? kChD1 : kChD2);

    std::sort(hits.begin(), hits.end());
    return synth_detail::finalize_stream(synth_detail::to_records(hits), cfg, route);
}

// ---------------------------------------------------------------------------
// Teleportation topology
// ---------------------------------------------------------------------------

namespace synth_detail {

/// Cascade pair in the mixture model of the entangled resource:
/// with weight w the pair is the pure time-evolving state, otherwise a
/// classically correlated |HH> or |VV| term. w = 2*F_max - 1 reproduces the
/// configured maximum entanglement fidelity.
struct CascadePair {
    double t_xx = 0.0;
    double t_x = 0.0;
    double x_freq_uev = 0.0;
    std::uint8_t component = 0;  // 0 pure, 1 HH, 2 VV
    double phi = 0.0;            // pure-component phase dE*(t_x - t_xx)/hbar
    std::int32_t xx_hit = -1;    // index into the Bob photon list, -1 when lost
    bool xx_done = false;
};

struct BobHit {
    double t = 0.0;
    std::int32_t pair = -1;  // -1: background
};

struct CharlieHit {
    double t = 0.0;
    double freq_uev = 0.0;
    std::uint8_t kind = 0;   // 0 X, 1 laser, 2 background
    std::int32_t pair = -1;
};

}  // namespace synth_detail

/// Full teleportation apparatus: entangled XX/X pairs from the cascade, the
/// laser qubit interfering with the X at Charlie's PBS (D_H, D_V), the XX
/// analysed at Bob's PBS (D_P, D_Q).
///
/// Outcomes are sampled per detected photon group from the joint quantum
/// probabilities; a detected D_H/D_V pair containing the laser and the X
/// realizes the symmetric Bell projection with an interference weight
/// xi = cos(dOmega dt / hbar) whose ensemble average is
/// exp(-|dt|/T2) cos(dE_L dt / hbar).
inline EventStream run_teleport(const SimConfig& cfg) {
    cfg.validate();
    Rng gen(derive_seed(cfg.seed, 0x5450ull));
    Rng route(derive_seed(cfg.seed, 0x5451ull));

    const auto& tp = cfg.teleport;
    const auto& qd = cfg.qd;
    const double duration = static_cast<double>(cfg.duration_ps);
    const double tau_xx = tp.xx_lifetime_ps > 0.0 ? tp.xx_lifetime_ps : qd.t1_ps / 2.0;
    const double pump = synth_detail::pump_rate(qd);
    const double duty = (1.0 / (1.0 + qd.blink_x)) * (1.0 / (1.0 + qd.blink_y));
    const double cycle_ps = 1.0 / pump + tau_xx + qd.t1_ps;
    const double full_rate = duty / cycle_ps;
    if (tp.x_rate_per_ps > full_rate * (1.0 + 1e-9))
        throw ConfigError("teleport.x_rate_per_ps exceeds the emitter's saturated rate (" +
                          std::to_string(full_rate) + " /ps)");
    const double keep_x = tp.x_rate_per_ps / full_rate;
    const double keep_xx = keep_x * tp.xx_efficiency_rel;
    const double w_pure = std::max(2.0 * qd.entanglement_fidelity_max - 1.0, 0.0);
    const double gamma_uev = kHbarUevPs / qd.t2_ps;

    // --- generate cascade emissions, thinned into Charlie X / Bob XX hits
    auto gate_x = synth_detail::Telegraph::generate(qd.blink_x, qd.tau2_ps, duration, gen);
    auto gate_y = synth_detail::Telegraph::generate(qd.blink_y, qd.tau3_ps, duration, gen);
    synth_detail::Telegraph::Cursor cx(gate_x), cy(gate_y);

    std::vector<synth_detail::CascadePair> pairs;
    std::vector<synth_detail::CharlieHit> charlie;
    std::vector<synth_detail::BobHit> bob;
    double t = 0.0;
    while (true) {
        t += gen.exponential(1.0 / pump);
        const double t_xx = t + gen.exponential(tau_xx);
        const double t_x = t_xx + gen.exponential(qd.t1_ps);
        t = t_x;
        if (t_x >= duration) break;
        const bool on = cx.at(t_x) && cy.at(t_x);
        const bool det_x = on && gen.bernoulli(keep_x);
        const bool det_xx = on && t_xx < duration && gen.bernoulli(keep_xx);
        if (!det_x && !det_xx) continue;
        synth_detail::CascadePair pair;
        pair.t_xx = t_xx;
        pair.t_x = t_x;
        pair.x_freq_uev = gen.lorentzian(gamma_uev);
        const double u = gen.uniform();
        pair.component = u < w_pure ? 0 : (u < w_pure + (1.0 - w_pure) / 2.0 ? 1 : 2);
        pair.phi = qd.fss_uev * (t_x - t_xx) / kHbarUevPs;
        const auto pair_idx = static_cast<std::int32_t>(pairs.size());
        if (det_x) charlie.push_back({t_x, pair.x_freq_uev, 0, pair_idx});
        if (det_xx) {
            pair.xx_hit = static_cast<std::int32_t>(bob.size());
            bob.push_back({t_xx, pair_idx});
        }
        pairs.push_back(pair);
    }

    // --- laser qubit and backgrounds
    const PolarizationState psi_in = jones_state(tp.input_state);
    for (double tl : poisson_times(tp.laser_rate_per_ps, duration, gen))
        charlie.push_back({tl, cfg.laser.detuning_uev, 1, -1});
    for (double tb : poisson_times(qd.beta * tp.x_rate_per_ps, duration, gen)) charlie.push_back({tb, 0.0, 2, -1});
    for (double tb : poisson_times(tp.bob_background_beta * tp.x_rate_per_ps * tp.xx_efficiency_rel, duration, gen))
        bob.push_back({tb, -1});
    std::sort(charlie.begin(), charlie.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    std::sort(bob.begin(), bob.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    // re-link XX hits after sorting
    for (auto& p : pairs) p.xx_hit = -1;
    for (std::size_t i = 0; i < bob.size(); ++i)
        if (bob[i].pair >= 0) pairs[static_cast<std::size_t>(bob[i].pair)].xx_hit = static_cast<std::int32_t>(i);

    // --- Bob analysis basis
    const PolarizationState bob_p = tp.bob_basis_auto ? PolarizationState(psi_in.v, psi_in.h) : tp.bob_p;
    const Complex bp_h = std::conj(bob_p.h);  // <P|H>
    const Complex bp_v = std::conj(bob_p.v);  // <P|V>
    const PolarizationState bob_q = bob_p.orthogonal();
    const Complex bq_h = std::conj(bob_q.h);
    const Complex bq_v = std::conj(bob_q.v);

    // --- greedy X-laser pairing within the interference reach
    const double reach = tp.pairing_reach_ps > 0.0 ? tp.pairing_reach_ps : 6.0 * qd.t2_ps;
    std::vector<std::int32_t> x_partner(charlie.size(), -1);
    std::vector<bool> laser_used(charlie.size(), false);
    {
        std::vector<std::size_t> laser_idx;
        for (std::size_t i = 0; i < charlie.size(); ++i)
            if (charlie[i].kind == 1) laser_idx.push_back(i);
        std::size_t lo = 0;
        for (std::size_t i = 0; i < charlie.size(); ++i) {
            if (charlie[i].kind != 0) continue;
            const double tx = charlie[i].t;
            while (lo < laser_idx.size() && charlie[laser_idx[lo]].t < tx - reach) ++lo;
            double best = reach;
            std::int32_t best_j = -1;
            for (std::size_t j = lo; j < laser_idx.size() && charlie[laser_idx[j]].t <= tx + reach; ++j) {
                if (laser_used[laser_idx[j]]) continue;
                const double d = std::abs(charlie[laser_idx[j]].t - tx);
                if (d <= best) {
                    best = d;
                    best_j = static_cast<std::int32_t>(laser_idx[j]);
                }
            }
            if (best_j >= 0) {
                x_partner[i] = best_j;
                laser_used[static_cast<std::size_t>(best_j)] = true;
            }
        }
    }

    // --- outcome resolution
    std::vector<std::pair<double, std::uint8_t>> hits;
    hits.reserve(charlie.size() + bob.size());
    std::vector<bool> charlie_done(charlie.size(), false);
    std::vector<bool> bob_done(bob.size(), false);

    const auto bob_amp = [&](bool to_p, bool x_is_v) {
        if (to_p) return x_is_v ? bp_v : bp_h;
        return x_is_v ? bq_v : bq_h;
    };

    for (std::size_t i = 0; i < charlie.size(); ++i) {
        if (charlie[i].kind != 0 || charlie_done[i]) continue;
        auto& pair = pairs[static_cast<std::size_t>(charlie[i].pair)];
        const bool has_xx = pair.xx_hit >= 0 && !bob_done[static_cast<std::size_t>(pair.xx_hit)];
        const std::int32_t lj = x_partner[i];
        const bool has_laser = lj >= 0;

        double xi = 0.0;
        if (has_laser) {
            const double dt = charlie[i].t - charlie[static_cast<std::size_t>(lj)].t;
            xi = std::cos((charlie[i].freq_uev - charlie[static_cast<std::size_t>(lj)].freq_uev) * dt / kHbarUevPs);
        }

        // weights over (pattern, bob outcome); pattern 0 = HV, 1 = HH, 2 = VV
        // bob outcome 0 = P, 1 = Q (ignored when !has_xx)
        double w_tab[3][2] = {{0, 0}, {0, 0}, {0, 0}};
        double hv_laser_on_h[2] = {0, 0};  // assignment weight per bob outcome
        const int nb = has_xx ? 2 : 1;
        for (int b = 0; b < nb; ++b) {
            Complex amp_v{1.0, 0.0}, amp_h{1.0, 0.0};  // <b|V>, <b|H> or 1 when Bob untraced
            if (has_xx) {
                amp_v = bob_amp(b == 0, true);
                amp_h = bob_amp(b == 0, false);
            }
            const double av2 = has_xx ? std::norm(amp_v) : 1.0;
            const double ah2 = has_xx ? std::norm(amp_h) : 1.0;
            if (pair.component == 0) {
                if (has_laser) {
                    const Complex a1 = psi_in.h * std::polar(1.0, pair.phi) * amp_v / std::sqrt(2.0);
                    const Complex a2 = psi_in.v * amp_h / std::sqrt(2.0);
                    const double cross = has_xx ? xi * (a1 * std::conj(a2)).real()
                                              : 0.0;  // Bob trace kills the exchange term
                    w_tab[0][b] = std::norm(a1) + std::norm(a2) + 2.0 * cross;
                    hv_laser_on_h[b] = std::max(std::norm(a1) + cross, 0.0);
                    w_tab[1][b] = (1.0 + xi) * std::norm(psi_in.h) * ah2 / 2.0;
                    w_tab[2][b] = (1.0 + xi) * std::norm(psi_in.v) * av2 / 2.0;
                } else {
                    w_tab[1][b] = ah2 / 2.0;  // X measured H
                    w_tab[2][b] = av2 / 2.0;  // X measured V
                }
            } else if (pair.component == 1) {  // |HH>
                if (has_laser) {
                    w_tab[0][b] = std::norm(psi_in.v) * ah2;
                    hv_laser_on_h[b] = 0.0;  // X occupies D_H
                    w_tab[1][b] = (1.0 + xi) * std::norm(psi_in.h) * ah2;
                } else {
                    w_tab[1][b] = ah2;
                }
            } else {  // |VV>
                if (has_laser) {
                    w_tab[0][b] = std::norm(psi_in.h) * av2;
                    hv_laser_on_h[b] = w_tab[0][b];  // laser occupies D_H
                    w_tab[2][b] = (1.0 + xi) * std::norm(psi_in.v) * av2;
                } else {
                    w_tab[2][b] = av2;
                }
            }
        }

        double total = 0.0;
        for (int pat = 0; pat < 3; ++pat)
            for (int b = 0; b < nb; ++b) total += std::max(w_tab[pat][b], 0.0);
        if (!(total > 0.0)) {
            hits.emplace_back(charlie[i].t, route.bernoulli(0.5) ? kChDH : kChDV);
            charlie_done[i] = true;
            continue;
        }
        double u = route.uniform() * total;
        int pat = 0, b = 0;
        for (pat = 0; pat < 3; ++pat) {
            bool brk = false;
            for (b = 0; b < nb; ++b) {
                const double w = std::max(w_tab[pat][b], 0.0);
                if (u < w) {
                    brk = true;
                    break;
                }
                u -= w;
            }
            if (brk) break;
        }
        if (pat > 2) pat = 2, b = nb - 1;

        const double t_x = charlie[i].t;
        if (pat == 0 && has_laser) {
            // one click each on D_H and D_V; the which-photon assignment
            // carries the interference weight
            const double t_l = charlie[static_cast<std::size_t>(lj)].t;
            const double w_l_on_h = std::clamp(w_tab[0][b] > 0.0 ? hv_laser_on_h[b] / w_tab[0][b] : 0.5, 0.0, 1.0);
            const bool laser_on_h = route.bernoulli(w_l_on_h);
            hits.emplace_back(laser_on_h ? t_l : t_x, kChDH);
            hits.emplace_back(laser_on_h ? t_x : t_l, kChDV);
            charlie_done[static_cast<std::size_t>(lj)] = true;
        } else if (pat == 0) {
            hits.emplace_back(t_x, route.bernoulli(0.5) ? kChDH : kChDV);
        } else {
            const std::uint8_t chn = pat == 1 ? kChDH : kChDV;
            hits.emplace_back(t_x, chn);
            if (has_laser) {
                hits.emplace_back(charlie[static_cast<std::size_t>(lj)].t, chn);
                charlie_done[static_cast<std::size_t>(lj)] = true;
            }
        }
        charlie_done[i] = true;

        if (has_xx) {
            const auto bi = static_cast<std::size_t>(pair.xx_hit);
            hits.emplace_back(bob[bi].t, b == 0 ? kChDP : kChDQ);
            bob_done[bi] = true;
        }
    }

    // unresolved Charlie photons: lasers by their polarization, background 50:50
    for (std::size_t i = 0; i < charlie.size(); ++i) {
        if (charlie_done[i] || charlie[i].kind == 0) continue;
        double p_h = 0.5;
        if (charlie[i].kind == 1) p_h = std::norm(psi_in.h);
        hits.emplace_back(charlie[i].t, route.bernoulli(p_h) ? kChDH : kChDV);
    }
    // unresolved Bob photons: marginal of their pair component
    for (std::size_t i = 0; i < bob.size(); ++i) {
        if (bob_done[i]) continue;
        double p_p = 0.5;
        if (bob[i].pair >= 0) {
            const auto& pair = pairs[static_cast<std::size_t>(bob[i].pair)];
            if (pair.component == 1) p_p = std::norm(bp_h);
            else if (pair.component == 2) p_p = std::norm(bp_v);
        }
        hits.emplace_back(bob[i].t, route.bernoulli(p_p) ? kChDP : kChDQ);
    }

    std::sort(hits.begin(), hits.end());
    return synth_detail::finalize_stream(synth_detail::to_records(hits), cfg, route);
}

/// Stream-producing topologies (michelson scans are tabular, see run_michelson).
inline EventStream simulate(const SimConfig& cfg) {
    switch (cfg.topology) {
        case Topology::hbt: return run_hbt(cfg);
        case Topology::hom: return run_hom(cfg);
        case Topology::teleport: return run_teleport(cfg);
        case Topology::michelson: throw ConfigError("michelson topology produces a fringe table, not a tag stream");
    }
    throw ConfigError("unknown topology");
}

}  // namespace photonstat
