#pragma once

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "photonstat/common.hpp"
#include "photonstat/synth.hpp"

namespace photonstat {

using Json = nlohmann::json;

/// Histogramming / post-selection settings carried alongside the simulation.
struct AnalysisConfig {
    std::int64_t g2_span_ps = 150'000;
    std::int64_t g2_bin_ps = 250;
    double wing_fraction = 0.2;
    std::int64_t g3_bin_ps = 29;
    std::int64_t g3_span_charlie_ps = 290;
    std::int64_t g3_span_bob_ps = 1015;
    std::vector<double> windows_ps = {29.0, 87.0, 145.0, 203.0, 261.0, 319.0};
    double six_state_bound = 0.724;  ///< fidelity bound of the six-state protocol (configured, not built in)
};

/// One experiment document: simulation plus analysis settings.
struct ExperimentConfig {
    SimConfig sim{};
    AnalysisConfig analysis{};
    std::string output_dir;
    std::vector<PolLabel> teleport_states = {PolLabel::H, PolLabel::V, PolLabel::D,
                                             PolLabel::A, PolLabel::R, PolLabel::L};
    bool hom_both_polarizations = true;
    std::string config_hash;  ///< fnv1a64 of the canonical document
};

namespace config_detail {

inline void expect_keys(const Json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const Json& obj, const std::string& where, const std::string& key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

inline void read_pol(const Json& obj, const std::string& where, const std::string& key, PolarizationState& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_string()) throw ConfigError(where + "." + key + ": expected a polarization label");
    out = jones_state(parse_pol_label(obj.at(key).get<std::string>()));
}

}  // namespace config_detail

inline ExperimentConfig parse_experiment_config(const Json& doc) {
    using config_detail::expect_keys;
    using config_detail::read;
    ExperimentConfig cfg;
    expect_keys(doc, "config",
                {"seed", "duration_ps", "topology", "output_dir", "qd", "laser", "detectors", "michelson",
                 "hom", "teleport", "analysis"});
    read(doc, "config", "seed", cfg.sim.seed);
    read(doc, "config", "duration_ps", cfg.sim.duration_ps);
    read(doc, "config", "output_dir", cfg.output_dir);
    if (doc.contains("topology")) cfg.sim.topology = parse_topology(doc.at("topology").get<std::string>());

    if (doc.contains("qd")) {
        const auto& q = doc.at("qd");
        expect_keys(q, "qd",
                    {"t1_ps", "t2_ps", "fss_uev", "blink_x", "blink_y", "tau1_ps", "tau2_ps", "tau3_ps", "beta",
                     "pump_power_rel", "entanglement_fidelity_max"});
        read(q, "qd", "t1_ps", cfg.sim.qd.t1_ps);
        read(q, "qd", "t2_ps", cfg.sim.qd.t2_ps);
        read(q, "qd", "fss_uev", cfg.sim.qd.fss_uev);
        read(q, "qd", "blink_x", cfg.sim.qd.blink_x);
        read(q, "qd", "blink_y", cfg.sim.qd.blink_y);
        read(q, "qd", "tau1_ps", cfg.sim.qd.tau1_ps);
        read(q, "qd", "tau2_ps", cfg.sim.qd.tau2_ps);
        read(q, "qd", "tau3_ps", cfg.sim.qd.tau3_ps);
        read(q, "qd", "beta", cfg.sim.qd.beta);
        read(q, "qd", "pump_power_rel", cfg.sim.qd.pump_power_rel);
        read(q, "qd", "entanglement_fidelity_max", cfg.sim.qd.entanglement_fidelity_max);
    }
    if (doc.contains("laser")) {
        const auto& l = doc.at("laser");
        expect_keys(l, "laser", {"intensity_alpha2", "detuning_uev", "polarization", "mean_rate_per_ps"});
        read(l, "laser", "intensity_alpha2", cfg.sim.laser.intensity_alpha2);
        read(l, "laser", "detuning_uev", cfg.sim.laser.detuning_uev);
        config_detail::read_pol(l, "laser", "polarization", cfg.sim.laser.polarization);
        read(l, "laser", "mean_rate_per_ps", cfg.sim.laser.mean_rate_per_ps);
    }
    if (doc.contains("detectors")) {
        const auto& d = doc.at("detectors");
        expect_keys(d, "detectors", {"response_fwhm_ps", "efficiency", "dark_rate_per_ps", "dead_time_ps"});
        read(d, "detectors", "response_fwhm_ps", cfg.sim.detectors.response_fwhm_ps);
        read(d, "detectors", "efficiency", cfg.sim.detectors.efficiency);
        read(d, "detectors", "dark_rate_per_ps", cfg.sim.detectors.dark_rate_per_ps);
        read(d, "detectors", "dead_time_ps", cfg.sim.detectors.dead_time_ps);
    }
    if (doc.contains("michelson")) {
        const auto& m = doc.at("michelson");
        expect_keys(m, "michelson",
                    {"coarse_delays_ps", "delay_min_ps", "delay_max_ps", "delay_step_ps", "phase_steps",
                     "photons_per_step", "contrast_a0"});
        read(m, "michelson", "coarse_delays_ps", cfg.sim.michelson.coarse_delays_ps);
        if (m.contains("delay_min_ps") || m.contains("delay_max_ps") || m.contains("delay_step_ps")) {
            double lo = 0.0, hi = 0.0, step = 0.0;
            read(m, "michelson", "delay_min_ps", lo);
            read(m, "michelson", "delay_max_ps", hi);
            read(m, "michelson", "delay_step_ps", step);
            if (!(step > 0.0) || hi < lo) throw ConfigError("michelson: bad delay range");
            for (double d = lo; d <= hi + 1e-9; d += step) cfg.sim.michelson.coarse_delays_ps.push_back(d);
        }
        read(m, "michelson", "phase_steps", cfg.sim.michelson.phase_steps);
        read(m, "michelson", "photons_per_step", cfg.sim.michelson.photons_per_step);
        read(m, "michelson", "contrast_a0", cfg.sim.michelson.contrast_a0);
    }
    if (doc.contains("hom")) {
        const auto& h = doc.at("hom");
        expect_keys(h, "hom",
                    {"qd_rate_per_ps", "ratio_eta_alpha2", "copolarized", "both_polarizations",
                     "splitting_ratio", "qd_source_is_laser", "laser2_coherence_t2_ps"});
        read(h, "hom", "qd_rate_per_ps", cfg.sim.hom.qd_rate_per_ps);
        read(h, "hom", "ratio_eta_alpha2", cfg.sim.hom.ratio_eta_alpha2);
        read(h, "hom", "copolarized", cfg.sim.hom.copolarized);
        read(h, "hom", "both_polarizations", cfg.hom_both_polarizations);
        read(h, "hom", "splitting_ratio", cfg.sim.hom.splitting_ratio);
        read(h, "hom", "qd_source_is_laser", cfg.sim.hom.qd_source_is_laser);
        read(h, "hom", "laser2_coherence_t2_ps", cfg.sim.hom.laser2_coherence_t2_ps);
    }
    if (doc.contains("teleport")) {
        const auto& t = doc.at("teleport");
        expect_keys(t, "teleport",
                    {"x_rate_per_ps", "laser_rate_per_ps", "xx_efficiency_rel", "bob_background_beta",
                     "xx_lifetime_ps", "input_states", "pairing_reach_ps"});
        read(t, "teleport", "x_rate_per_ps", cfg.sim.teleport.x_rate_per_ps);
        read(t, "teleport", "laser_rate_per_ps", cfg.sim.teleport.laser_rate_per_ps);
        read(t, "teleport", "xx_efficiency_rel", cfg.sim.teleport.xx_efficiency_rel);
        read(t, "teleport", "bob_background_beta", cfg.sim.teleport.bob_background_beta);
        read(t, "teleport", "xx_lifetime_ps", cfg.sim.teleport.xx_lifetime_ps);
        read(t, "teleport", "pairing_reach_ps", cfg.sim.teleport.pairing_reach_ps);
        if (t.contains("input_states")) {
            cfg.teleport_states.clear();
            for (const auto& s : t.at("input_states"))
                cfg.teleport_states.push_back(parse_pol_label(s.get<std::string>()));
            if (cfg.teleport_states.empty()) throw ConfigError("teleport.input_states must not be empty");
        }
    }
    if (doc.contains("analysis")) {
        const auto& a = doc.at("analysis");
        expect_keys(a, "analysis",
                    {"g2_span_ps", "g2_bin_ps", "wing_fraction", "g3_bin_ps", "g3_span_charlie_ps",
                     "g3_span_bob_ps", "windows_ps", "six_state_bound"});
        read(a, "analysis", "g2_span_ps", cfg.analysis.g2_span_ps);
        read(a, "analysis", "g2_bin_ps", cfg.analysis.g2_bin_ps);
        read(a, "analysis", "wing_fraction", cfg.analysis.wing_fraction);
        read(a, "analysis", "g3_bin_ps", cfg.analysis.g3_bin_ps);
        read(a, "analysis", "g3_span_charlie_ps", cfg.analysis.g3_span_charlie_ps);
        read(a, "analysis", "g3_span_bob_ps", cfg.analysis.g3_span_bob_ps);
        read(a, "analysis", "windows_ps", cfg.analysis.windows_ps);
        read(a, "analysis", "six_state_bound", cfg.analysis.six_state_bound);
    }

    cfg.config_hash = hex64(fnv1a64(doc.dump()));
    cfg.sim.validate();
    return cfg;
}

/// Applies a dotted-path scalar override, e.g. "qd.t2_ps=294" or
/// "hom.copolarized=false". Values parse as JSON scalars, falling back to a
/// string.
inline void apply_override(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    Json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty path segment");
        if (dot == std::string::npos) {
            Json parsed = Json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? Json(value) : parsed;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

inline Json load_config_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path + "'");
    Json doc = Json::parse(is, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
    return doc;
}

}  // namespace photonstat
