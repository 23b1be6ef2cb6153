// Command-line front end: simulate detector streams, correlate them, fit the
// closed-form models and assemble teleportation reports. All outputs carry
// the config hash and seed so a result can always be traced to its inputs.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "photonstat/config.hpp"
#include "photonstat/correlate.hpp"
#include "photonstat/events.hpp"
#include "photonstat/fit.hpp"
#include "photonstat/report_io.hpp"
#include "photonstat/synth.hpp"

namespace fs = std::filesystem;
using namespace photonstat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitFormat = 4;

std::uint64_t file_hash(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        const auto n = static_cast<std::size_t>(is.gcount());
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (is.eof()) break;
    }
    return h;
}

fs::path resolve_out_dir(const std::string& flag_dir, const ExperimentConfig& cfg) {
    if (!flag_dir.empty()) return flag_dir;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    if (const char* env = std::getenv("PHOTONSTAT_OUTPUT_DIR"); env && *env) return env;
    return ".";
}

ExperimentConfig load_experiment(const std::string& config_path, const std::vector<std::string>& overrides) {
    Json doc = load_config_json(config_path);
    for (const auto& o : overrides) apply_override(doc, o);
    return parse_experiment_config(doc);
}

MetaMap provenance_meta(const ExperimentConfig& cfg) {
    return {{"config_hash", cfg.config_hash}, {"seed", std::to_string(cfg.sim.seed)}};
}

std::uint64_t teleport_state_seed(const ExperimentConfig& cfg, std::size_t state_index) {
    return derive_seed(cfg.sim.seed, 0x7465, state_index);
}

struct Manifest {
    Json outputs = Json::array();

    void add(const fs::path& path) {
        Json o;
        o["path"] = path.string();
        o["bytes"] = static_cast<std::uint64_t>(fs::file_size(path));
        o["fnv1a64"] = hex64(file_hash(path));
        outputs.push_back(o);
    }

    void write(const fs::path& path, const ExperimentConfig& cfg) const {
        Json j;
        j["tool_version"] = version();
        j["config_hash"] = cfg.config_hash;
        j["seed"] = cfg.sim.seed;
        j["outputs"] = outputs;
        std::ofstream os(path);
        if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
        os << j.dump(2) << '\n';
    }
};

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::string& out_flag,
                 const std::vector<std::string>& overrides) {
    const auto cfg = load_experiment(config_path, overrides);
    const fs::path dir = resolve_out_dir(out_flag, cfg);
    fs::create_directories(dir);
    Manifest manifest;

    switch (cfg.sim.topology) {
        case Topology::michelson: {
            const auto rows = run_michelson(cfg.sim);
            const auto path = dir / "michelson_fringes.csv";
            std::ofstream os(path);
            if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
            write_fringe_csv(rows, os, provenance_meta(cfg));
            os.close();
            manifest.add(path);
            std::cout << "michelson: " << rows.size() << " coarse delays -> " << path.string() << "\n";
            break;
        }
        case Topology::hbt: {
            const auto stream = run_hbt(cfg.sim);
            const auto path = dir / "hbt.ttag";
            write_stream(stream, path.string());
            manifest.add(path);
            std::cout << "hbt: " << stream.events.size() << " events -> " << path.string() << "\n";
            break;
        }
        case Topology::hom: {
            if (cfg.hom_both_polarizations) {
                SimConfig co = cfg.sim;
                co.hom.copolarized = true;
                co.seed = derive_seed(cfg.sim.seed, 0x636f);
                SimConfig cross = cfg.sim;
                cross.hom.copolarized = false;
                cross.seed = derive_seed(cfg.sim.seed, 0x6372);
                const auto s_co = run_hom(co);
                const auto s_cross = run_hom(cross);
                const auto p_co = dir / "hom_co.ttag";
                const auto p_cross = dir / "hom_cross.ttag";
                write_stream(s_co, p_co.string());
                write_stream(s_cross, p_cross.string());
                manifest.add(p_co);
                manifest.add(p_cross);
                std::cout << "hom co: " << s_co.events.size() << " events -> " << p_co.string() << "\n";
                std::cout << "hom cross: " << s_cross.events.size() << " events -> " << p_cross.string() << "\n";
            } else {
                const auto stream = run_hom(cfg.sim);
                const auto path = dir / "hom.ttag";
                write_stream(stream, path.string());
                manifest.add(path);
                std::cout << "hom: " << stream.events.size() << " events -> " << path.string() << "\n";
            }
            break;
        }
        case Topology::teleport: {
            for (std::size_t i = 0; i < cfg.teleport_states.size(); ++i) {
                SimConfig one = cfg.sim;
                one.teleport.input_state = cfg.teleport_states[i];
                one.seed = teleport_state_seed(cfg, i);
                const auto stream = run_teleport(one);
                const auto path = dir / (std::string("teleport_") + pol_label_name(cfg.teleport_states[i]) + ".ttag");
                write_stream(stream, path.string());
                manifest.add(path);
                std::cout << "teleport " << pol_label_name(cfg.teleport_states[i]) << ": " << stream.events.size()
                          << " events -> " << path.string() << "\n";
            }
            break;
        }
    }
    manifest.write(dir / "manifest.json", cfg);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// correlate
// ---------------------------------------------------------------------------

int cmd_correlate_g2(const std::string& input, int a, int b, std::int64_t span, std::int64_t bin, double wings,
                     const std::string& out) {
    const auto stream = read_stream_any(input);
    G2Options opt;
    opt.span_ps = span;
    opt.bin_ps = bin;
    opt.wing_fraction = wings;
    const auto h = correlate_g2(stream, static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b), opt);
    if (h.singles_a == 0) std::cerr << "warning: channel " << a << " has no events in " << input << "\n";
    if (h.singles_b == 0) std::cerr << "warning: channel " << b << " has no events in " << input << "\n";
    MetaMap meta;
    meta["input"] = input;
    meta["input_fnv1a64"] = hex64(file_hash(input));
    write_g2_csv(h, out, meta);
    std::cout << "g2: " << h.total_counts() << " pairs in " << h.counts.size() << " bins -> " << out << "\n";
    return kExitOk;
}

int cmd_correlate_g3(const std::string& input, int trig, int c2, int c3, const G3Options& opt,
                     const std::string& out) {
    const auto stream = read_stream_any(input);
    const auto g = correlate_g3(stream, static_cast<std::uint8_t>(trig), static_cast<std::uint8_t>(c2),
                                static_cast<std::uint8_t>(c3), opt);
    MetaMap meta;
    meta["input"] = input;
    meta["input_fnv1a64"] = hex64(file_hash(input));
    write_g3_csv(g, out, meta);
    std::cout << "g3: " << g.total_counts() << " triples -> " << out << "\n";
    return kExitOk;
}

int cmd_correlate_map(const std::string& p_path, const std::string& q_path, const std::string& out,
                      const std::vector<double>& windows, double six_state_bound, const std::string& scan_out,
                      bool subtract_accidentals) {
    const auto gp = read_g3_csv(p_path);
    const auto gq = read_g3_csv(q_path);
    std::optional<AccidentalFloor> floor;
    if (subtract_accidentals) floor = estimate_accidental_floor(gp, gq);
    const auto map = build_fidelity_map(gp, gq, floor);
    MetaMap meta;
    meta["input_p"] = p_path;
    meta["input_q"] = q_path;
    write_fidelity_map_csv(map, out, meta);
    std::cout << "fidelity map -> " << out << "\n";
    if (!windows.empty()) {
        const auto scan = window_scan(map, windows, six_state_bound);
        const std::string path = scan_out.empty() ? out + ".scan.csv" : scan_out;
        std::ofstream os(path);
        if (!os) throw IoError("cannot open '" + path + "' for writing");
        write_window_scan_csv(scan, os, meta);
        std::cout << "window scan -> " << path << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

FringeData read_fringe_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    FringeData d;
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line.rfind("delay_ps,visibility,sigma", 0) != 0)
                throw FormatError(path + ": expected header 'delay_ps,visibility,sigma,...'");
            header_seen = true;
            continue;
        }
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() < 3) throw FormatError(path + ": malformed row '" + line + "'");
        if (cells.size() >= 5 && cells[4] != "ok") continue;  // flagged rows are skipped
        d.delay_ps.push_back(std::stod(cells[0]));
        d.visibility.push_back(std::stod(cells[1]));
        d.sigma.push_back(std::stod(cells[2]));
    }
    if (!header_seen) throw FormatError(path + ": missing header row");
    return d;
}

G2FitData g2_fit_data_from_csv(const std::string& path, double fwhm) {
    const auto table = read_g2_csv(path);
    G2FitData d;
    d.tau_ps = table.tau_ps;
    d.counts = table.counts;
    d.response_fwhm_ps = fwhm;
    return d;
}

void write_curve(const std::vector<double>& taus, const std::vector<double>& values, const std::string& path) {
    SampledCurve c;
    if (!taus.empty()) {
        c.tau0_ps = taus.front();
        c.step_ps = taus.size() > 1 ? taus[1] - taus[0] : 1.0;
    }
    c.values = values;
    write_curve_csv(c, path);
}

int cmd_fit(const std::string& model, const std::string& data_path, const std::string& data2_path, double fwhm,
            const std::string& dip_report, const std::string& out, const std::string& curve_out) {
    FitReport rep;
    std::vector<double> curve_taus;
    std::vector<double> curve_values;
    std::vector<double> curve2_values;  // cross curve of the joint tpi fit

    if (model == "fringe") {
        const auto data = read_fringe_csv(data_path);
        rep = fit_fringe_envelope(data);
        FringeEnvelopeParams p{std::clamp(rep.param("a0"), 0.0, 1.0), rep.param("t2_ps"), rep.param("delta_e_uev")};
        curve_taus = data.delay_ps;
        for (double d : data.delay_ps) curve_values.push_back(std::abs(fringe_contrast(d, p)));
    } else if (model == "g2-3level" || model == "g2-4level") {
        const auto data = g2_fit_data_from_csv(data_path, fwhm);
        rep = fit_g2_hbt(data, model == "g2-4level" ? 4 : 3);
        QuantumDotParams qd;
        qd.tau1_ps = rep.param("tau1_ps");
        qd.tau2_ps = rep.param("tau2_ps");
        qd.tau3_ps = model == "g2-4level" ? rep.param("tau3_ps") : rep.param("tau2_ps") + 1.0;
        qd.blink_x = rep.param("blink_x");
        qd.blink_y = model == "g2-4level" ? rep.param("blink_y") : 0.0;
        qd.beta = rep.param("beta");
        const double norm = rep.param("norm");
        curve_taus = data.tau_ps;
        curve_values = detail::convolved_on_grid(data.tau_ps, fwhm, [&](double t) { return g2_hbt(t, qd); });
        for (auto& v : curve_values) v *= norm;
    } else if (model == "tpi") {
        if (data2_path.empty()) throw InputError("tpi fit needs --data (co) and --data2 (cross)");
        TpiFitData d;
        d.co = g2_fit_data_from_csv(data_path, fwhm);
        d.cross = g2_fit_data_from_csv(data2_path, fwhm);
        d.dip_shape = QuantumDotParams{};
        if (!dip_report.empty()) {
            const auto params = read_report_params(dip_report);
            if (params.count("tau1_ps")) d.dip_shape.tau1_ps = params.at("tau1_ps");
            if (params.count("tau2_ps")) d.dip_shape.tau2_ps = params.at("tau2_ps");
            if (params.count("tau3_ps")) d.dip_shape.tau3_ps = params.at("tau3_ps");
            if (params.count("blink_x")) d.dip_shape.blink_x = params.at("blink_x");
            if (params.count("blink_y")) d.dip_shape.blink_y = params.at("blink_y");
        }
        rep = fit_tpi(d);
        rep.inputs["dip_report"] = dip_report;
        const double k = rep.param("k_dip");
        const double m = rep.param("m_interference");
        const double t2 = rep.param("tau_c_ps");
        const double del = rep.param("detuning_uev");
        curve_taus = d.co.tau_ps;
        curve_values = detail::convolved_on_grid(d.co.tau_ps, fwhm, [&](double t) {
            return 1.0 + k * (g2_qd(t, d.dip_shape) - 1.0) +
                   m * std::exp(-std::abs(t) / t2) * std::cos(del * t / kHbarUevPs);
        });
        curve2_values = detail::convolved_on_grid(d.cross.tau_ps, fwhm, [&](double t) {
            return 1.0 + k * (g2_qd(t, d.dip_shape) - 1.0);
        });
        for (auto& v : curve_values) v *= rep.param("norm_co");
        for (auto& v : curve2_values) v *= rep.param("norm_cross");
    } else if (model == "lifetime") {
        const auto curve = read_curve_csv(data_path);
        LifetimeData d;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            d.t_ps.push_back(curve.tau_at(i));
            d.intensity.push_back(curve.values[i]);
        }
        rep = fit_lifetime(d);
        curve_taus = d.t_ps;
        for (double t : d.t_ps)
            curve_values.push_back(lifetime_decay(t, rep.param("amp_short"), rep.param("amp_long"),
                                                  rep.param("tau_short_ps"), rep.param("tau_long_ps")));
    } else {
        std::cerr << "unknown model '" << model
                  << "'; available: fringe, g2-3level, g2-4level, tpi, lifetime\n";
        return kExitUsage;
    }

    rep.inputs["data"] = data_path;
    rep.inputs["data_fnv1a64"] = hex64(file_hash(data_path));
    if (!data2_path.empty()) {
        rep.inputs["data2"] = data2_path;
        rep.inputs["data2_fnv1a64"] = hex64(file_hash(data2_path));
    }
    write_fit_report(rep, out);
    if (!curve_out.empty()) {
        write_curve(curve_taus, curve_values, curve_out);
        if (!curve2_values.empty()) write_curve(curve_taus, curve2_values, curve_out + ".cross.csv");
    }
    std::cout << "fit " << rep.model_id << (rep.converged ? " converged" : " DID NOT CONVERGE")
              << ", chi2/dof = " << rep.chi2_per_dof() << " -> " << out << "\n";
    for (std::size_t i = 0; i < rep.param_names.size(); ++i)
        std::cout << "  " << rep.param_names[i] << " = " << rep.params[i] << " +- " << rep.std_errors[i] << "\n";
    for (const auto& [k, v] : rep.derived)
        std::cout << "  " << k << " = " << v << " +- "
                  << (rep.derived_errors.count(k) ? rep.derived_errors.at(k) : 0.0) << "\n";
    for (const auto& w : rep.warnings) std::cerr << "  warning: " << w << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// teleport-report
// ---------------------------------------------------------------------------

int cmd_teleport_report(const std::string& config_path, const std::string& out_flag,
                        const std::vector<std::string>& overrides) {
    auto cfg = load_experiment(config_path, overrides);
    if (cfg.sim.topology != Topology::teleport)
        throw ConfigError("teleport-report needs a teleport topology config");
    const fs::path dir = resolve_out_dir(out_flag, cfg);
    fs::create_directories(dir);
    Manifest manifest;

    G3Options g3opt;
    g3opt.span_charlie_ps = cfg.analysis.g3_span_charlie_ps;
    g3opt.bin_charlie_ps = cfg.analysis.g3_bin_ps;
    g3opt.span_bob_ps = cfg.analysis.g3_span_bob_ps;
    g3opt.bin_bob_ps = cfg.analysis.g3_bin_ps;

    std::optional<G3Histogram> sum_p, sum_q;
    struct StateResult {
        PolLabel state;
        G3Histogram p, q;
    };
    std::vector<StateResult> states;

    for (std::size_t i = 0; i < cfg.teleport_states.size(); ++i) {
        SimConfig one = cfg.sim;
        one.teleport.input_state = cfg.teleport_states[i];
        one.seed = teleport_state_seed(cfg, i);
        const auto stream = run_teleport(one);
        const auto tag_path = dir / (std::string("teleport_") + pol_label_name(cfg.teleport_states[i]) + ".ttag");
        write_stream(stream, tag_path.string());
        manifest.add(tag_path);

        const auto gp = correlate_g3(stream, kChDH, kChDV, kChDP, g3opt);
        const auto gq = correlate_g3(stream, kChDH, kChDV, kChDQ, g3opt);
        MetaMap meta = provenance_meta(cfg);
        meta["input_state"] = pol_label_name(cfg.teleport_states[i]);
        const auto p_path = dir / (std::string("g3_P_") + pol_label_name(cfg.teleport_states[i]) + ".csv");
        const auto q_path = dir / (std::string("g3_Q_") + pol_label_name(cfg.teleport_states[i]) + ".csv");
        write_g3_csv(gp, p_path.string(), meta);
        write_g3_csv(gq, q_path.string(), meta);
        manifest.add(p_path);
        manifest.add(q_path);

        states.push_back({cfg.teleport_states[i], gp, gq});
        sum_p = sum_p ? merge_g3(*sum_p, gp) : gp;
        sum_q = sum_q ? merge_g3(*sum_q, gq) : gq;
        std::cout << "simulated input " << pol_label_name(cfg.teleport_states[i]) << ": "
                  << stream.events.size() << " events, " << gp.total_counts() + gq.total_counts()
                  << " heralded triples in the map\n";
    }

    // mean fidelity map: counts summed over the input states before the
    // ratio, with the flat accidental-triple floor subtracted
    const auto floor = estimate_accidental_floor(*sum_p, *sum_q);
    const auto mean_map = build_fidelity_map(*sum_p, *sum_q, floor);
    const auto map_path = dir / "fidelity_map_mean.csv";
    write_fidelity_map_csv(mean_map, map_path.string(), provenance_meta(cfg));
    manifest.add(map_path);

    const auto scan = window_scan(mean_map, cfg.analysis.windows_ps, cfg.analysis.six_state_bound);
    const auto scan_path = dir / "window_scan.csv";
    {
        std::ofstream os(scan_path);
        if (!os) throw IoError("cannot open '" + scan_path.string() + "' for writing");
        write_window_scan_csv(scan, os, provenance_meta(cfg));
    }
    manifest.add(scan_path);

    // per-basis fidelities at every window
    const auto basis_path = dir / "basis_fidelities.csv";
    {
        std::ofstream os(basis_path);
        if (!os) throw IoError("cannot open '" + basis_path.string() + "' for writing");
        write_meta(os, provenance_meta(cfg));
        os << "state,window_ps,n_triples,fidelity,std_error\n";
        for (const auto& st : states) {
            const auto m = build_fidelity_map(st.p, st.q, estimate_accidental_floor(st.p, st.q));
            const auto sc = window_scan(m, cfg.analysis.windows_ps, cfg.analysis.six_state_bound);
            for (std::size_t w = 0; w < sc.window_sizes_ps.size(); ++w)
                os << pol_label_name(st.state) << ',' << sc.window_sizes_ps[w] << ',' << sc.n_triples[w] << ','
                   << sc.mean_fidelity[w] << ',' << sc.std_error[w] << '\n';
        }
    }
    manifest.add(basis_path);

    // fidelity beat along tau_Bob from the central tau_Charlie band
    OscillationFit beat;
    {
        std::vector<double> taus, fids, sigs;
        const auto kc = mean_map.axis_charlie.half_bins;
        for (std::size_t ib = 0; ib < mean_map.axis_bob.size(); ++ib) {
            double p = 0.0, q = 0.0;
            for (std::int64_t ic = kc - 1; ic <= kc + 1; ++ic) {
                const auto cell = mean_map.cell(static_cast<std::size_t>(ic), ib);
                p += mean_map.signal_p[cell];
                q += mean_map.signal_q[cell];
            }
            if (p + q < 10.0) continue;
            const double f = teleport_fidelity(p, q);
            taus.push_back(mean_map.axis_bob.center_ps(ib));
            fids.push_back(f);
            sigs.push_back(std::sqrt(std::max(f * (1.0 - f), 1e-4) / (p + q)));
        }
        beat = fit_oscillation_period(taus, fids, sigs);
    }

    Json summary;
    summary["tool_version"] = version();
    summary["config_hash"] = cfg.config_hash;
    summary["seed"] = cfg.sim.seed;
    summary["six_state_bound"] = cfg.analysis.six_state_bound;
    summary["windows"] = Json::array();
    for (std::size_t w = 0; w < scan.window_sizes_ps.size(); ++w) {
        Json jw;
        jw["window_ps"] = scan.window_sizes_ps[w];
        jw["effective_window_ps"] = scan.effective_window_ps[w];
        jw["n_triples"] = scan.n_triples[w];
        jw["mean_fidelity"] = scan.mean_fidelity[w];
        jw["std_error"] = scan.std_error[w];
        jw["significance_vs_classical"] = scan.significance_vs_classical[w];
        jw["significance_vs_sixstate"] = scan.significance_vs_sixstate[w];
        summary["windows"].push_back(jw);
    }
    if (beat.found) {
        summary["tau_bob_beat"] = {{"period_ps", beat.period_ps},
                                   {"period_error_ps", beat.period_error_ps},
                                   {"energy_uev", beat.energy_uev}};
    }
    const auto summary_path = dir / "summary.json";
    {
        std::ofstream os(summary_path);
        if (!os) throw IoError("cannot open '" + summary_path.string() + "' for writing");
        os << summary.dump(2) << '\n';
    }
    manifest.add(summary_path);
    manifest.write(dir / "manifest.json", cfg);

    std::cout << "\nteleport report (" << states.size() << " input states)\n";
    for (std::size_t w = 0; w < scan.window_sizes_ps.size(); ++w) {
        std::printf("window %6.1f ps (eff %6.1f): F = %.4f +- %.4f | vs 2/3: %+.1f sd | vs %.3f: %+.1f sd | %lld triples\n",
                    scan.window_sizes_ps[w], scan.effective_window_ps[w], scan.mean_fidelity[w], scan.std_error[w],
                    scan.significance_vs_classical[w], cfg.analysis.six_state_bound,
                    scan.significance_vs_sixstate[w], static_cast<long long>(scan.n_triples[w]));
    }
    if (beat.found)
        std::printf("tau_Bob fidelity beat: period %.1f ps -> %.3f ueV\n", beat.period_ps, beat.energy_uev);
    std::cout << "outputs in " << dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantum-dot photon statistics: simulation, correlation and model fitting"};
    app.require_subcommand(1);

    auto* version_cmd = app.add_subcommand("version", "print the tool version");

    std::string config_path, out_dir;
    std::vector<std::string> overrides;
    auto* sim = app.add_subcommand("simulate", "generate detector streams for the configured topology");
    sim->add_option("--config", config_path, "experiment config (JSON)")->required();
    sim->add_option("--out", out_dir, "output directory");
    sim->add_option("--set", overrides, "dotted-path override, e.g. qd.t2_ps=294");

    auto* corr = app.add_subcommand("correlate", "histogram time-tag streams");
    corr->require_subcommand(1);
    std::string corr_input, corr_out = "g2.csv";
    int ch_a = 0, ch_b = 1;
    std::int64_t span = 150'000, bin = 250;
    double wings = 0.2;
    auto* g2cmd = corr->add_subcommand("g2", "second-order correlation histogram");
    g2cmd->add_option("--input", corr_input, "TTAG1 or CSV stream")->required();
    g2cmd->add_option("--a", ch_a, "first channel");
    g2cmd->add_option("--b", ch_b, "second channel");
    g2cmd->add_option("--span", span, "half-span in ps (multiple of the bin)");
    g2cmd->add_option("--bin", bin, "bin width in ps");
    g2cmd->add_option("--wings", wings, "wing fraction used for normalization");
    g2cmd->add_option("--out", corr_out, "output CSV");

    std::string g3_out = "g3.csv";
    int trig = 0, c2 = 1, c3 = 2;
    G3Options g3opt;
    auto* g3cmd = corr->add_subcommand("g3", "triggered third-order correlation histogram");
    g3cmd->add_option("--input", corr_input, "TTAG1 or CSV stream")->required();
    g3cmd->add_option("--trigger", trig, "trigger channel");
    g3cmd->add_option("--c2", c2, "first delay channel (tau_Charlie)");
    g3cmd->add_option("--c3", c3, "second delay channel (tau_Bob)");
    g3cmd->add_option("--span-charlie", g3opt.span_charlie_ps, "tau_Charlie half-span (ps)");
    g3cmd->add_option("--bin-charlie", g3opt.bin_charlie_ps, "tau_Charlie bin (ps)");
    g3cmd->add_option("--span-bob", g3opt.span_bob_ps, "tau_Bob half-span (ps)");
    g3cmd->add_option("--bin-bob", g3opt.bin_bob_ps, "tau_Bob bin (ps)");
    g3cmd->add_option("--out", g3_out, "output CSV");

    std::string map_p, map_q, map_out = "fidelity_map.csv", scan_out;
    std::vector<double> map_windows;
    double six_state_bound = 0.724;
    auto* mapcmd = corr->add_subcommand("map", "fidelity map from P and Q g3 histograms");
    mapcmd->add_option("--p", map_p, "g3 CSV of the expected output polarization")->required();
    mapcmd->add_option("--q", map_q, "g3 CSV of the orthogonal polarization")->required();
    mapcmd->add_option("--out", map_out, "output CSV");
    mapcmd->add_option("--windows", map_windows, "post-selection window sizes (ps)");
    mapcmd->add_option("--six-state-bound", six_state_bound, "six-state protocol fidelity bound");
    mapcmd->add_option("--scan-out", scan_out, "window scan CSV");

    std::string fit_model, fit_data, fit_data2, dip_report, fit_out = "fit_report.json", curve_out;
    double fit_fwhm = 0.0;
    auto* fit = app.add_subcommand("fit", "least-squares model fits");
    fit->add_option("--model", fit_model, "fringe | g2-3level | g2-4level | tpi | lifetime")->required();
    fit->add_option("--data", fit_data, "input CSV")->required();
    fit->add_option("--data2", fit_data2, "cross-polarized CSV (tpi fit)");
    fit->add_option("--fwhm", fit_fwhm, "detector response FWHM applied to the model (ps)");
    fit->add_option("--dip-report", dip_report, "g2 fit report fixing the dip shape (tpi fit)");
    fit->add_option("--out", fit_out, "fit report (JSON)");
    fit->add_option("--curve-out", curve_out, "fitted model curve (CSV)");

    std::string tr_config, tr_out;
    std::vector<std::string> tr_overrides;
    auto* tr = app.add_subcommand("teleport-report", "run the six-state teleportation analysis");
    tr->add_option("--config", tr_config, "experiment config (JSON)")->required();
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--set", tr_overrides, "dotted-path override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (version_cmd->parsed()) {
            std::cout << "photonstat " << version() << "\n";
            return kExitOk;
        }
        if (sim->parsed()) return cmd_simulate(config_path, out_dir, overrides);
        if (corr->parsed()) {
            if (g2cmd->parsed()) return cmd_correlate_g2(corr_input, ch_a, ch_b, span, bin, wings, corr_out);
            if (g3cmd->parsed()) return cmd_correlate_g3(corr_input, trig, c2, c3, g3opt, g3_out);
            if (mapcmd->parsed())
                return cmd_correlate_map(map_p, map_q, map_out, map_windows, six_state_bound, scan_out);
        }
        if (fit->parsed()) return cmd_fit(fit_model, fit_data, fit_data2, fit_fwhm, dip_report, fit_out, curve_out);
        if (tr->parsed()) return cmd_teleport_report(tr_config, tr_out, tr_overrides);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
