#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "photonstat/common.hpp"
#include "photonstat/events.hpp"
#include "photonstat/models.hpp"
#include "photonstat/sampled.hpp"

namespace photonstat {

/// Uniform delay axis: left-closed right-open bins, an odd number of them,
/// zero delay at the center of the middle bin.
struct HistAxis {
    std::int64_t bin_ps = 1;
    std::int64_t half_bins = 0;  ///< bins span centers (i - half_bins) * bin_ps

    static HistAxis from_span(std::int64_t span_ps, std::int64_t bin_ps) {
        if (bin_ps <= 0) throw InputError("histogram bin width must be positive");
        if (span_ps <= 0 || span_ps % bin_ps != 0)
            throw InputError("histogram span must be a positive multiple of the bin width");
        return {bin_ps, span_ps / bin_ps};
    }

    std::size_t size() const { return static_cast<std::size_t>(2 * half_bins + 1); }
    double center_ps(std::size_t i) const {
        return static_cast<double>((static_cast<std::int64_t>(i) - half_bins) * bin_ps);
    }
    double min_edge_ps() const { return -(static_cast<double>(half_bins) + 0.5) * static_cast<double>(bin_ps); }
    double max_edge_ps() const { return (static_cast<double>(half_bins) + 0.5) * static_cast<double>(bin_ps); }

    /// Bin index of a delay, or false when it falls outside the axis.
    /// Exact integer arithmetic on doubled delays keeps the half-integer bin
    /// edges representable.
    bool index_of(std::int64_t delay_ps, std::size_t& index) const {
        const std::int64_t num = 2 * delay_ps + (2 * half_bins + 1) * bin_ps;
        if (num < 0) return false;
        const std::int64_t denom = 2 * bin_ps;
        const std::int64_t idx = num / denom;
        if (idx >= 2 * half_bins + 1) return false;
        index = static_cast<std::size_t>(idx);
        return true;
    }

    std::vector<double> edges_ps() const {
        std::vector<double> edges(size() + 1);
        for (std::size_t i = 0; i <= size(); ++i)
            edges[i] = min_edge_ps() + static_cast<double>(i) * static_cast<double>(bin_ps);
        return edges;
    }
};

/// Binned second-order coincidence histogram between two channels.
struct CorrelationHistogram {
    HistAxis axis{};
    std::vector<std::int64_t> counts;
    std::vector<double> normalized;  ///< counts / wing baseline; empty when the wings are empty
    std::uint8_t channel_a = 0;
    std::uint8_t channel_b = 0;
    std::int64_t singles_a = 0;
    std::int64_t singles_b = 0;
    std::int64_t acquisition_ps = 0;
    double wing_fraction = 0.2;
    double wing_baseline = 0.0;  ///< mean counts per bin in the designated wings
    double poisson_level = 0.0;  ///< expected pairs per bin for independent Poisson channels

    std::int64_t total_counts() const {
        std::int64_t acc = 0;
        for (auto c : counts) acc += c;
        return acc;
    }
};

struct G2Options {
    std::int64_t span_ps = 50000;
    std::int64_t bin_ps = 25;
    double wing_fraction = 0.2;
    /// When set, only events of channel `a` with time in [first, second) seed
    /// pairs; partner events are unrestricted. Used for slab partitioning.
    std::optional<std::pair<std::int64_t, std::int64_t>> trigger_range;
};

namespace detail {

inline void fill_wing_stats(CorrelationHistogram& h) {
    const std::size_t n = h.counts.size();
    const auto wing = static_cast<std::size_t>(std::max<double>(1.0, std::floor(h.wing_fraction * static_cast<double>(n) / 2.0)));
    std::int64_t acc = 0;
    std::size_t nbins = 0;
    for (std::size_t i = 0; i < wing && i < n; ++i) {
        acc += h.counts[i] + h.counts[n - 1 - i];
        nbins += 2;
    }
    h.wing_baseline = nbins ? static_cast<double>(acc) / static_cast<double>(nbins) : 0.0;
    h.normalized.clear();
    if (h.wing_baseline > 0.0) {
        h.normalized.resize(n);
        for (std::size_t i = 0; i < n; ++i) h.normalized[i] = static_cast<double>(h.counts[i]) / h.wing_baseline;
    }
}

}  // namespace detail

/// Histogram of delays (t_b - t_a) over all pairs within the axis span.
/// Forward-only sliding window over the per-channel sorted times, O(N * k)
/// with k the mean pair occupancy of the span window.
inline CorrelationHistogram correlate_g2(const EventStream& stream, std::uint8_t a, std::uint8_t b,
                                         const G2Options& opt) {
    if (!stream.is_sorted()) throw InputError("correlate_g2: stream must be sorted");
    CorrelationHistogram h;
    h.axis = HistAxis::from_span(opt.span_ps, opt.bin_ps);
    h.counts.assign(h.axis.size(), 0);
    h.channel_a = a;
    h.channel_b = b;
    h.wing_fraction = opt.wing_fraction;
    h.acquisition_ps = stream.effective_duration_ps();

    const auto ta = stream.channel_times(a);
    const auto tb = (a == b) ? ta : stream.channel_times(b);
    h.singles_a = static_cast<std::int64_t>(ta.size());
    h.singles_b = static_cast<std::int64_t>(tb.size());

    // half-open reach of the axis, in ps, rounded conservatively outward
    const auto reach = static_cast<std::int64_t>(h.axis.half_bins * h.axis.bin_ps + h.axis.bin_ps);

    std::size_t lo = 0;
    std::size_t hi = 0;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        const std::int64_t t = ta[i];
        if (opt.trigger_range) {
            if (t < opt.trigger_range->first) continue;
            if (t >= opt.trigger_range->second) break;
        }
        while (lo < tb.size() && tb[lo] < t - reach) ++lo;
        if (hi < lo) hi = lo;
        while (hi < tb.size() && tb[hi] <= t + reach) ++hi;
        for (std::size_t j = lo; j < hi; ++j) {
            if (a == b && j == i) continue;
            std::size_t idx;
            if (h.axis.index_of(tb[j] - t, idx)) ++h.counts[idx];
        }
    }

    detail::fill_wing_stats(h);
    const double t_acq = static_cast<double>(h.acquisition_ps);
    if (t_acq > 0.0)
        h.poisson_level = static_cast<double>(h.singles_a) * static_cast<double>(h.singles_b) *
                          static_cast<double>(h.axis.bin_ps) / t_acq;
    return h;
}

/// Reference all-pairs counter for validating the sliding-window correlator.
/// O(N^2); intended for test streams only.
inline CorrelationHistogram correlate_g2_bruteforce(const EventStream& stream, std::uint8_t a, std::uint8_t b,
                                                    const G2Options& opt) {
    if (!stream.is_sorted()) throw InputError("correlate_g2_bruteforce: stream must be sorted");
    CorrelationHistogram h;
    h.axis = HistAxis::from_span(opt.span_ps, opt.bin_ps);
    h.counts.assign(h.axis.size(), 0);
    h.channel_a = a;
    h.channel_b = b;
    h.wing_fraction = opt.wing_fraction;
    h.acquisition_ps = stream.effective_duration_ps();
    const auto ta = stream.channel_times(a);
    const auto tb = (a == b) ? ta : stream.channel_times(b);
    h.singles_a = static_cast<std::int64_t>(ta.size());
    h.singles_b = static_cast<std::int64_t>(tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (opt.trigger_range &&
            (ta[i] < opt.trigger_range->first || ta[i] >= opt.trigger_range->second))
            continue;
        for (std::size_t j = 0; j < tb.size(); ++j) {
            if (a == b && j == i) continue;
            std::size_t idx;
            if (h.axis.index_of(tb[j] - ta[i], idx)) ++h.counts[idx];
        }
    }
    detail::fill_wing_stats(h);
    const double t_acq = static_cast<double>(h.acquisition_ps);
    if (t_acq > 0.0)
        h.poisson_level = static_cast<double>(h.singles_a) * static_cast<double>(h.singles_b) *
                          static_cast<double>(h.axis.bin_ps) / t_acq;
    return h;
}

/// Sums two partial histograms produced with identical axes/channels.
inline CorrelationHistogram merge_histograms(const CorrelationHistogram& x, const CorrelationHistogram& y) {
    if (x.axis.bin_ps != y.axis.bin_ps || x.axis.half_bins != y.axis.half_bins ||
        x.channel_a != y.channel_a || x.channel_b != y.channel_b)
        throw InputError("merge_histograms: axis or channel mismatch");
    CorrelationHistogram out = x;
    for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += y.counts[i];
    out.singles_a = std::max(x.singles_a, y.singles_a);
    out.singles_b = std::max(x.singles_b, y.singles_b);
    out.acquisition_ps = std::max(x.acquisition_ps, y.acquisition_ps);
    detail::fill_wing_stats(out);
    return out;
}

// ---------------------------------------------------------------------------
// Third-order correlations
// ---------------------------------------------------------------------------

/// 2D histogram over (t_{c2} - t_trigger, t_{c3} - t_trigger).
struct G3Histogram {
    HistAxis axis_charlie{};  ///< first delay axis (c2 vs trigger)
    HistAxis axis_bob{};      ///< second delay axis (c3 vs trigger)
    std::vector<std::int64_t> counts;  ///< row-major [charlie][bob]
    std::uint8_t trigger_channel = 0;
    std::uint8_t channel_c2 = 0;
    std::uint8_t channel_c3 = 0;
    std::int64_t n_triggers = 0;
    std::int64_t acquisition_ps = 0;

    std::int64_t& at(std::size_t ic, std::size_t ib) { return counts[ic * axis_bob.size() + ib]; }
    std::int64_t at(std::size_t ic, std::size_t ib) const { return counts[ic * axis_bob.size() + ib]; }

    std::int64_t total_counts() const {
        std::int64_t acc = 0;
        for (auto c : counts) acc += c;
        return acc;
    }
};

struct G3Options {
    std::int64_t span_charlie_ps = 300;
    std::int64_t bin_charlie_ps = 29;
    std::int64_t span_bob_ps = 1000;
    std::int64_t bin_bob_ps = 29;
};

inline G3Histogram correlate_g3(const EventStream& stream, std::uint8_t trigger, std::uint8_t c2,
                                std::uint8_t c3, const G3Options& opt) {
    if (c2 == c3) throw InputError("correlate_g3: degenerate channels c2 == c3");
    if (!stream.is_sorted()) throw InputError("correlate_g3: stream must be sorted");
    G3Histogram g;
    g.axis_charlie = HistAxis::from_span(opt.span_charlie_ps, opt.bin_charlie_ps);
    g.axis_bob = HistAxis::from_span(opt.span_bob_ps, opt.bin_bob_ps);
    g.counts.assign(g.axis_charlie.size() * g.axis_bob.size(), 0);
    g.trigger_channel = trigger;
    g.channel_c2 = c2;
    g.channel_c3 = c3;
    g.acquisition_ps = stream.effective_duration_ps();

    const auto tt = stream.channel_times(trigger);
    const auto t2 = stream.channel_times(c2);
    const auto t3 = stream.channel_times(c3);
    g.n_triggers = static_cast<std::int64_t>(tt.size());

    const auto reach2 = static_cast<std::int64_t>((g.axis_charlie.half_bins + 1) * g.axis_charlie.bin_ps);
    const auto reach3 = static_cast<std::int64_t>((g.axis_bob.half_bins + 1) * g.axis_bob.bin_ps);

    std::size_t lo2 = 0, hi2 = 0, lo3 = 0, hi3 = 0;
    for (const std::int64_t t : tt) {
        while (lo2 < t2.size() && t2[lo2] < t - reach2) ++lo2;
        if (hi2 < lo2) hi2 = lo2;
        while (hi2 < t2.size() && t2[hi2] <= t + reach2) ++hi2;
        while (lo3 < t3.size() && t3[lo3] < t - reach3) ++lo3;
        if (hi3 < lo3) hi3 = lo3;
        while (hi3 < t3.size() && t3[hi3] <= t + reach3) ++hi3;
        for (std::size_t j = lo2; j < hi2; ++j) {
            std::size_t ic;
            if (!g.axis_charlie.index_of(t2[j] - t, ic)) continue;
            for (std::size_t k = lo3; k < hi3; ++k) {
                std::size_t ib;
                if (g.axis_bob.index_of(t3[k] - t, ib)) ++g.at(ic, ib);
            }
        }
    }
    return g;
}

inline G3Histogram merge_g3(const G3Histogram& x, const G3Histogram& y) {
    if (x.counts.size() != y.counts.size() || x.axis_charlie.bin_ps != y.axis_charlie.bin_ps ||
        x.axis_bob.bin_ps != y.axis_bob.bin_ps)
        throw InputError("merge_g3: axis mismatch");
    G3Histogram out = x;
    for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += y.counts[i];
    out.n_triggers += y.n_triggers;
    out.acquisition_ps = std::max(x.acquisition_ps, y.acquisition_ps);
    return out;
}

// ---------------------------------------------------------------------------
// Fidelity maps and post-selection windows
// ---------------------------------------------------------------------------

/// Uncorrelated triple floor of a teleportation map, estimated from the
/// tau_Bob > 0 sideband where genuine cascade triples cannot occur (the XX
/// always precedes its X).
struct AccidentalFloor {
    double per_cell_p = 0.0;
    double per_cell_q = 0.0;
    std::int64_t n_cells = 0;
};

inline AccidentalFloor estimate_accidental_floor(const G3Histogram& g3_p, const G3Histogram& g3_q,
                                                 double bob_wing_fraction = 0.5) {
    if (bob_wing_fraction <= 0.0 || bob_wing_fraction >= 1.0)
        throw InputError("estimate_accidental_floor: wing fraction must lie in (0,1)");
    AccidentalFloor fl;
    const auto& axis = g3_p.axis_bob;
    const double tau_min = (1.0 - bob_wing_fraction) * axis.max_edge_ps();
    std::int64_t sum_p = 0, sum_q = 0, cells = 0;
    for (std::size_t ic = 0; ic < g3_p.axis_charlie.size(); ++ic) {
        for (std::size_t ib = 0; ib < axis.size(); ++ib) {
            if (axis.center_ps(ib) < tau_min) continue;
            sum_p += g3_p.at(ic, ib);
            sum_q += g3_q.at(ic, ib);
            ++cells;
        }
    }
    fl.n_cells = cells;
    if (cells > 0) {
        fl.per_cell_p = static_cast<double>(sum_p) / static_cast<double>(cells);
        fl.per_cell_q = static_cast<double>(sum_q) / static_cast<double>(cells);
    }
    return fl;
}

/// Cell-wise teleportation fidelity over (tau_Charlie, tau_Bob). counts_p and
/// counts_q are always the raw triples; when an accidental floor was
/// subtracted, signal_p/signal_q hold the corrected values that fidelity,
/// errors and window sums are computed from.
struct FidelityMap {
    HistAxis axis_charlie{};
    HistAxis axis_bob{};
    std::vector<std::int64_t> counts_p;
    std::vector<std::int64_t> counts_q;
    std::vector<double> signal_p;
    std::vector<double> signal_q;
    std::vector<double> fidelity;    ///< valid only where defined[i]
    std::vector<double> std_error;   ///< binomial standard error
    std::vector<std::uint8_t> defined;
    AccidentalFloor floor{};

    std::size_t cell(std::size_t ic, std::size_t ib) const { return ic * axis_bob.size() + ib; }
};

/// Cell-wise F = P / (P + Q) with binomial errors. Axes must match.
/// With a floor estimate, the flat accidental level is subtracted from both
/// channels before the ratio (clamped at zero).
inline FidelityMap build_fidelity_map(const G3Histogram& g3_p, const G3Histogram& g3_q,
                                      const std::optional<AccidentalFloor>& accidentals = std::nullopt) {
    if (g3_p.axis_charlie.bin_ps != g3_q.axis_charlie.bin_ps ||
        g3_p.axis_charlie.half_bins != g3_q.axis_charlie.half_bins ||
        g3_p.axis_bob.bin_ps != g3_q.axis_bob.bin_ps || g3_p.axis_bob.half_bins != g3_q.axis_bob.half_bins)
        throw InputError("build_fidelity_map: axis mismatch between P and Q histograms");
    FidelityMap m;
    m.axis_charlie = g3_p.axis_charlie;
    m.axis_bob = g3_p.axis_bob;
    const std::size_t n = g3_p.counts.size();
    m.counts_p = g3_p.counts;
    m.counts_q = g3_q.counts;
    if (accidentals) m.floor = *accidentals;
    m.signal_p.resize(n);
    m.signal_q.resize(n);
    m.fidelity.assign(n, 0.0);
    m.std_error.assign(n, 0.0);
    m.defined.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::max(static_cast<double>(m.counts_p[i]) - m.floor.per_cell_p, 0.0);
        const double q = std::max(static_cast<double>(m.counts_q[i]) - m.floor.per_cell_q, 0.0);
        m.signal_p[i] = p;
        m.signal_q[i] = q;
        if (p + q <= 0.0) continue;
        const double f = teleport_fidelity(p, q);
        m.fidelity[i] = f;
        m.std_error[i] = std::sqrt(std::max(f * (1.0 - f), 0.0) / (p + q));
        m.defined[i] = 1;
    }
    return m;
}

struct WindowScanResult {
    std::vector<double> window_sizes_ps;            ///< requested sizes
    std::vector<double> effective_window_ps;        ///< realized odd-multiple-of-bin sizes
    std::vector<std::int64_t> n_triples;
    std::vector<double> mean_fidelity;
    std::vector<double> std_error;
    std::vector<double> significance_vs_classical;  ///< standard deviations above 2/3
    std::vector<double> significance_vs_sixstate;   ///< vs the configured bound
};

inline constexpr double kClassicalFidelityBound = 2.0 / 3.0;

/// Mean fidelity from summed counts inside square windows centered on (0,0).
/// A window of size W keeps cells whose centers lie within +-W/2 on both
/// axes, so the realized ("equivalent") window is the nearest odd multiple of
/// the bin width; it is reported alongside the request.
inline WindowScanResult window_scan(const FidelityMap& map, const std::vector<double>& windows_ps,
                                    double six_state_bound) {
    WindowScanResult r;
    const double extent_c = 2.0 * map.axis_charlie.max_edge_ps();
    const double extent_b = 2.0 * map.axis_bob.max_edge_ps();
    for (const double w : windows_ps) {
        if (!(w > 0.0)) throw InputError("window_scan: window sizes must be positive");
        if (w > extent_c + 1e-9 || w > extent_b + 1e-9)
            throw InputError("window_scan: window exceeds map extent");
        const auto kc = static_cast<std::int64_t>(std::floor(w / (2.0 * static_cast<double>(map.axis_charlie.bin_ps)) + 1e-9));
        const auto kb = static_cast<std::int64_t>(std::floor(w / (2.0 * static_cast<double>(map.axis_bob.bin_ps)) + 1e-9));
        double sum_p = 0.0, sum_q = 0.0;
        std::int64_t raw = 0;
        for (std::int64_t ic = -kc; ic <= kc; ++ic) {
            for (std::int64_t ib = -kb; ib <= kb; ++ib) {
                const auto i = map.cell(static_cast<std::size_t>(ic + map.axis_charlie.half_bins),
                                        static_cast<std::size_t>(ib + map.axis_bob.half_bins));
                sum_p += map.signal_p[i];
                sum_q += map.signal_q[i];
                raw += map.counts_p[i] + map.counts_q[i];
            }
        }
        const double n = sum_p + sum_q;
        r.window_sizes_ps.push_back(w);
        r.effective_window_ps.push_back(static_cast<double>((2 * kc + 1) * map.axis_charlie.bin_ps));
        r.n_triples.push_back(raw);
        if (n > 0.0) {
            const double f = teleport_fidelity(sum_p, sum_q);
            const double se = std::sqrt(std::max(f * (1.0 - f), 0.0) / n);
            r.mean_fidelity.push_back(f);
            r.std_error.push_back(se);
            r.significance_vs_classical.push_back(se > 0.0 ? (f - kClassicalFidelityBound) / se : 0.0);
            r.significance_vs_sixstate.push_back(se > 0.0 ? (f - six_state_bound) / se : 0.0);
        } else {
            r.mean_fidelity.push_back(0.0);
            r.std_error.push_back(0.0);
            r.significance_vs_classical.push_back(0.0);
            r.significance_vs_sixstate.push_back(0.0);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// CSV output with metadata headers
// ---------------------------------------------------------------------------

/// Key/value lines prepended to every CSV as "# meta: key=value".
using MetaMap = std::map<std::string, std::string>;

inline void write_meta(std::ostream& os, const MetaMap& meta) {
    for (const auto& [k, v] : meta) os << "# meta: " << k << '=' << v << '\n';
}

inline MetaMap histogram_meta(const CorrelationHistogram& h) {
    MetaMap m;
    m["tool_version"] = version();
    m["bin_convention"] = "left-closed right-open, odd bin count, zero delay at bin center";
    m["bin_ps"] = std::to_string(h.axis.bin_ps);
    m["span_ps"] = std::to_string(h.axis.half_bins * h.axis.bin_ps);
    m["channel_a"] = std::to_string(static_cast<int>(h.channel_a));
    m["channel_b"] = std::to_string(static_cast<int>(h.channel_b));
    m["singles_a"] = std::to_string(h.singles_a);
    m["singles_b"] = std::to_string(h.singles_b);
    m["acquisition_ps"] = std::to_string(h.acquisition_ps);
    m["wing_fraction"] = detail::format_double(h.wing_fraction);
    m["wing_baseline"] = detail::format_double(h.wing_baseline);
    m["poisson_level"] = detail::format_double(h.poisson_level);
    return m;
}

inline void write_g2_csv(const CorrelationHistogram& h, std::ostream& os, const MetaMap& extra_meta = {}) {
    MetaMap meta = histogram_meta(h);
    meta.insert(extra_meta.begin(), extra_meta.end());
    write_meta(os, meta);
    os << "tau_ps,counts,normalized\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        os << detail::format_double(h.axis.center_ps(i)) << ',' << h.counts[i] << ',';
        if (!h.normalized.empty()) os << detail::format_double(h.normalized[i]);
        os << '\n';
    }
    if (!os) throw IoError("write_g2_csv: stream failure");
}

inline void write_g2_csv(const CorrelationHistogram& h, const std::string& path, const MetaMap& extra_meta = {}) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_g2_csv(h, os, extra_meta);
}

/// Parsed g2 CSV: delay centers, raw counts, optional normalized values.
struct G2Table {
    std::vector<double> tau_ps;
    std::vector<double> counts;
    std::vector<double> normalized;
    MetaMap meta;
};

inline G2Table read_g2_csv(std::istream& is, const std::string& name = "<stream>") {
    G2Table t;
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.rfind("# meta: ", 0) == 0) {
            const auto body = line.substr(8);
            const auto eq = body.find('=');
            if (eq != std::string::npos) t.meta[body.substr(0, eq)] = body.substr(eq + 1);
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line.rfind("tau_ps,counts", 0) != 0) throw FormatError(name + ": expected header 'tau_ps,counts,normalized'");
            header_seen = true;
            continue;
        }
        std::istringstream ls(line);
        std::string a, b, c;
        std::getline(ls, a, ',');
        std::getline(ls, b, ',');
        std::getline(ls, c, ',');
        if (a.empty() || b.empty()) throw FormatError(name + ": malformed row '" + line + "'");
        t.tau_ps.push_back(std::stod(a));
        t.counts.push_back(std::stod(b));
        if (!c.empty()) t.normalized.push_back(std::stod(c));
    }
    if (!header_seen) throw FormatError(name + ": missing header row");
    if (!t.normalized.empty() && t.normalized.size() != t.tau_ps.size())
        throw FormatError(name + ": incomplete normalized column");
    return t;
}

inline G2Table read_g2_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    return read_g2_csv(is, path);
}

inline void write_g3_csv(const G3Histogram& g, std::ostream& os, const MetaMap& extra_meta = {}) {
    MetaMap meta = extra_meta;
    meta["tool_version"] = version();
    meta["bin_convention"] = "left-closed right-open, odd bin count, zero delay at bin center";
    meta["trigger_channel"] = std::to_string(static_cast<int>(g.trigger_channel));
    meta["channel_c2"] = std::to_string(static_cast<int>(g.channel_c2));
    meta["channel_c3"] = std::to_string(static_cast<int>(g.channel_c3));
    meta["n_triggers"] = std::to_string(g.n_triggers);
    meta["acquisition_ps"] = std::to_string(g.acquisition_ps);
    write_meta(os, meta);
    os << "tau_charlie_ps,tau_bob_ps,counts\n";
    for (std::size_t ic = 0; ic < g.axis_charlie.size(); ++ic)
        for (std::size_t ib = 0; ib < g.axis_bob.size(); ++ib)
            os << detail::format_double(g.axis_charlie.center_ps(ic)) << ','
               << detail::format_double(g.axis_bob.center_ps(ib)) << ',' << g.at(ic, ib) << '\n';
    if (!os) throw IoError("write_g3_csv: stream failure");
}

inline void write_g3_csv(const G3Histogram& g, const std::string& path, const MetaMap& extra_meta = {}) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_g3_csv(g, os, extra_meta);
}

/// Reads back a g3 CSV (as written by write_g3_csv) including its axes.
inline G3Histogram read_g3_csv(std::istream& is, const std::string& name = "<stream>") {
    MetaMap meta;
    std::vector<double> tc, tb;
    std::vector<std::int64_t> counts;
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.rfind("# meta: ", 0) == 0) {
            const auto body = line.substr(8);
            const auto eq = body.find('=');
            if (eq != std::string::npos) meta[body.substr(0, eq)] = body.substr(eq + 1);
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line.rfind("tau_charlie_ps,tau_bob_ps,counts", 0) != 0)
                throw FormatError(name + ": expected header 'tau_charlie_ps,tau_bob_ps,counts'");
            header_seen = true;
            continue;
        }
        std::istringstream ls(line);
        std::string a, b, c;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c, ','))
            throw FormatError(name + ": malformed row '" + line + "'");
        tc.push_back(std::stod(a));
        tb.push_back(std::stod(b));
        counts.push_back(std::stoll(c));
    }
    if (!header_seen) throw FormatError(name + ": missing header row");
    if (counts.empty()) throw FormatError(name + ": no data rows");
    std::vector<double> uc = tc, ub = tb;
    std::sort(uc.begin(), uc.end());
    uc.erase(std::unique(uc.begin(), uc.end()), uc.end());
    std::sort(ub.begin(), ub.end());
    ub.erase(std::unique(ub.begin(), ub.end()), ub.end());
    if (uc.size() % 2 == 0 || ub.size() % 2 == 0 || uc.size() * ub.size() != counts.size())
        throw FormatError(name + ": axes are not odd-sized dense grids");
    G3Histogram g;
    g.axis_charlie.bin_ps = uc.size() > 1 ? static_cast<std::int64_t>(std::llround(uc[1] - uc[0])) : 1;
    g.axis_charlie.half_bins = static_cast<std::int64_t>(uc.size() / 2);
    g.axis_bob.bin_ps = ub.size() > 1 ? static_cast<std::int64_t>(std::llround(ub[1] - ub[0])) : 1;
    g.axis_bob.half_bins = static_cast<std::int64_t>(ub.size() / 2);
    g.counts.assign(uc.size() * ub.size(), 0);
    for (std::size_t r = 0; r < counts.size(); ++r) {
        const auto ic = static_cast<std::size_t>(
            std::llround(tc[r] / static_cast<double>(g.axis_charlie.bin_ps)) + g.axis_charlie.half_bins);
        const auto ib = static_cast<std::size_t>(
            std::llround(tb[r] / static_cast<double>(g.axis_bob.bin_ps)) + g.axis_bob.half_bins);
        if (ic >= g.axis_charlie.size() || ib >= g.axis_bob.size())
            throw FormatError(name + ": row outside the inferred axes");
        g.at(ic, ib) = counts[r];
    }
    if (meta.count("trigger_channel")) g.trigger_channel = static_cast<std::uint8_t>(std::stoi(meta["trigger_channel"]));
    if (meta.count("channel_c2")) g.channel_c2 = static_cast<std::uint8_t>(std::stoi(meta["channel_c2"]));
    if (meta.count("channel_c3")) g.channel_c3 = static_cast<std::uint8_t>(std::stoi(meta["channel_c3"]));
    if (meta.count("n_triggers")) g.n_triggers = std::stoll(meta["n_triggers"]);
    if (meta.count("acquisition_ps")) g.acquisition_ps = std::stoll(meta["acquisition_ps"]);
    return g;
}

inline G3Histogram read_g3_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    return read_g3_csv(is, path);
}

inline void write_fidelity_map_csv(const FidelityMap& m, std::ostream& os, const MetaMap& extra_meta = {}) {
    MetaMap meta = extra_meta;
    meta["tool_version"] = version();
    meta["bin_convention"] = "left-closed right-open, odd bin count, zero delay at bin center";
    meta["accidental_floor_p"] = detail::format_double(m.floor.per_cell_p);
    meta["accidental_floor_q"] = detail::format_double(m.floor.per_cell_q);
    write_meta(os, meta);
    os << "tau_charlie_ps,tau_bob_ps,counts_p,counts_q,fidelity,std_error\n";
    for (std::size_t ic = 0; ic < m.axis_charlie.size(); ++ic) {
        for (std::size_t ib = 0; ib < m.axis_bob.size(); ++ib) {
            const auto i = m.cell(ic, ib);
            os << detail::format_double(m.axis_charlie.center_ps(ic)) << ','
               << detail::format_double(m.axis_bob.center_ps(ib)) << ',' << m.counts_p[i] << ','
               << m.counts_q[i] << ',';
            if (m.defined[i])
                os << detail::format_double(m.fidelity[i]) << ',' << detail::format_double(m.std_error[i]);
            else
                os << ',';
            os << '\n';
        }
    }
    if (!os) throw IoError("write_fidelity_map_csv: stream failure");
}

inline void write_fidelity_map_csv(const FidelityMap& m, const std::string& path, const MetaMap& extra_meta = {}) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_fidelity_map_csv(m, os, extra_meta);
}

inline void write_window_scan_csv(const WindowScanResult& r, std::ostream& os, const MetaMap& extra_meta = {}) {
    MetaMap meta = extra_meta;
    meta["tool_version"] = version();
    write_meta(os, meta);
    os << "window_ps,effective_window_ps,n_triples,mean_fidelity,std_error,significance_vs_classical,"
          "significance_vs_sixstate\n";
    for (std::size_t i = 0; i < r.window_sizes_ps.size(); ++i)
        os << detail::format_double(r.window_sizes_ps[i]) << ',' << detail::format_double(r.effective_window_ps[i])
           << ',' << r.n_triples[i] << ',' << detail::format_double(r.mean_fidelity[i]) << ','
           << detail::format_double(r.std_error[i]) << ',' << detail::format_double(r.significance_vs_classical[i])
           << ',' << detail::format_double(r.significance_vs_sixstate[i]) << '\n';
    if (!os) throw IoError("write_window_scan_csv: stream failure");
}

}  // namespace photonstat
