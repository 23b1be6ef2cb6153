#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "photonstat/common.hpp"
#include "photonstat/core.hpp"

namespace photonstat {

/// A real function sampled on a uniform time grid (ps).
struct SampledCurve {
    double tau0_ps = 0.0;  ///< grid origin
    double step_ps = 1.0;  ///< grid spacing, > 0
    std::vector<double> values;

    double tau_at(std::size_t i) const { return tau0_ps + step_ps * static_cast<double>(i); }
    std::size_t size() const { return values.size(); }

    static SampledCurve sample(double tau_min, double tau_max, double step, const auto& fn) {
        if (!(step > 0.0) || !(tau_max >= tau_min)) throw InputError("SampledCurve::sample: bad grid");
        SampledCurve c;
        c.tau0_ps = tau_min;
        c.step_ps = step;
        const auto n = static_cast<std::size_t>(std::floor((tau_max - tau_min) / step + 0.5)) + 1;
        c.values.reserve(n);
        for (std::size_t i = 0; i < n; ++i) c.values.push_back(fn(tau_min + step * static_cast<double>(i)));
        return c;
    }

    /// Linear interpolation; clamps to the end values outside the grid.
    double at(double tau_ps) const {
        if (values.empty()) throw InputError("SampledCurve::at: empty curve");
        const double x = (tau_ps - tau0_ps) / step_ps;
        if (x <= 0.0) return values.front();
        const auto n = values.size();
        if (x >= static_cast<double>(n - 1)) return values.back();
        const auto i = static_cast<std::size_t>(x);
        const double f = x - static_cast<double>(i);
        return values[i] * (1.0 - f) + values[i + 1] * f;
    }
};

/// Discrete convolution with a unit-area Gaussian of the given FWHM, kernel
/// truncated at +-5 sigma. FWHM 0 is the identity. Edges are renormalized by
/// the in-range kernel mass, so a constant input stays constant.
inline SampledCurve convolve_gaussian(const SampledCurve& curve, double fwhm_ps,
                                      WarningSink* warnings = nullptr) {
    if (fwhm_ps < 0.0) throw InputError("convolve_gaussian: negative FWHM");
    if (fwhm_ps == 0.0 || curve.values.empty()) return curve;
    if (curve.step_ps > fwhm_ps / 2.0)
        warn(warnings, "convolve_gaussian: grid spacing exceeds FWHM/2, kernel is undersampled");

    const double sigma = fwhm_ps / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const auto half = static_cast<long>(std::ceil(5.0 * sigma / curve.step_ps));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    double total = 0.0;
    for (long k = -half; k <= half; ++k) {
        const double x = static_cast<double>(k) * curve.step_ps / sigma;
        const double w = std::exp(-0.5 * x * x);
        kernel[static_cast<std::size_t>(k + half)] = w;
        total += w;
    }
    for (auto& w : kernel) w /= total;

    const long n = static_cast<long>(curve.values.size());
    SampledCurve out = curve;
    for (long i = 0; i < n; ++i) {
        double acc = 0.0;
        double mass = 0.0;
        const long k0 = std::max(-half, i - (n - 1));
        const long k1 = std::min(half, i);
        for (long k = k0; k <= k1; ++k) {
            const double w = kernel[static_cast<std::size_t>(k + half)];
            acc += w * curve.values[static_cast<std::size_t>(i - k)];
            mass += w;
        }
        out.values[static_cast<std::size_t>(i)] = acc / mass;
    }
    return out;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace detail

/// CSV exchange format for sampled curves: header "tau_ps,value".
inline void write_curve_csv(const SampledCurve& curve, std::ostream& os) {
    os << "tau_ps,value\n";
    for (std::size_t i = 0; i < curve.size(); ++i)
        os << detail::format_double(curve.tau_at(i)) << ',' << detail::format_double(curve.values[i]) << '\n';
    if (!os) throw IoError("write_curve_csv: stream failure");
}

inline void write_curve_csv(const SampledCurve& curve, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_curve_csv(curve, os);
}

/// Reads a two-column table (tau_ps,value with required header). Tolerates
/// leading '#' comment lines. The grid must be uniform.
inline SampledCurve read_curve_csv(std::istream& is, const std::string& name = "<stream>") {
    std::string line;
    bool header_seen = false;
    std::vector<double> taus;
    std::vector<double> vals;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line.rfind("tau_ps,value", 0) != 0)
                throw FormatError(name + ": expected header 'tau_ps,value'");
            header_seen = true;
            continue;
        }
        std::istringstream ls(line);
        std::string a, b;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ','))
            throw FormatError(name + ": malformed row '" + line + "'");
        taus.push_back(std::stod(a));
        vals.push_back(std::stod(b));
    }
    if (!header_seen) throw FormatError(name + ": missing header row");
    SampledCurve c;
    if (taus.empty()) return c;
    c.tau0_ps = taus.front();
    c.step_ps = taus.size() > 1 ? taus[1] - taus[0] : 1.0;
    for (std::size_t i = 1; i + 1 < taus.size(); ++i) {
        const double expect = c.tau0_ps + c.step_ps * static_cast<double>(i);
        if (std::abs(taus[i] - expect) > 1e-6 * std::max(1.0, std::abs(expect)))
            throw FormatError(name + ": non-uniform tau grid");
    }
    c.values = std::move(vals);
    return c;
}

inline SampledCurve read_curve_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    return read_curve_csv(is, path);
}

}  // namespace photonstat
