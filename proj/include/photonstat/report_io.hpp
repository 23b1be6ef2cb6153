#pragma once

#include <json.hpp>

#include <fstream>
#include <string>

#include "photonstat/common.hpp"
#include "photonstat/fit.hpp"

namespace photonstat {

/// Self-describing fit-report document: model id, parameters with raw and
/// scaled errors, covariance, goodness of fit, initialization and input
/// provenance.
inline nlohmann::json fit_report_to_json(const FitReport& rep) {
    nlohmann::json j;
    j["model_id"] = rep.model_id;
    j["converged"] = rep.converged;
    j["chi2"] = rep.chi2;
    j["dof"] = rep.dof;
    j["chi2_per_dof"] = rep.chi2_per_dof();
    j["iterations"] = rep.iterations;
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json errs = nlohmann::json::object();
    nlohmann::json errs_raw = nlohmann::json::object();
    for (std::size_t i = 0; i < rep.param_names.size(); ++i) {
        params[rep.param_names[i]] = rep.params[i];
        errs[rep.param_names[i]] = rep.std_errors[i];
        errs_raw[rep.param_names[i]] = rep.std_errors_raw[i];
    }
    j["params"] = params;
    j["std_errors"] = errs;
    j["std_errors_raw"] = errs_raw;
    nlohmann::json cov = nlohmann::json::array();
    for (Eigen::Index r = 0; r < rep.covariance.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < rep.covariance.cols(); ++c) row.push_back(rep.covariance(r, c));
        cov.push_back(row);
    }
    j["covariance"] = cov;
    j["derived"] = rep.derived;
    j["derived_errors"] = rep.derived_errors;
    j["initialization"] = rep.initial;
    j["inputs"] = rep.inputs;
    j["warnings"] = rep.warnings;
    j["tool_version"] = version();
    return j;
}

inline void write_fit_report(const FitReport& rep, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << fit_report_to_json(rep).dump(2) << '\n';
    if (!os) throw IoError("write_fit_report: stream failure");
}

/// Reads back the parameter map of a stored report (enough to reuse fitted
/// shapes as fixed inputs of later fits).
inline std::map<std::string, double> read_report_params(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open report '" + path + "'");
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.contains("params")) throw FormatError("'" + path + "' is not a fit report");
    std::map<std::string, double> out;
    for (const auto& [k, v] : j.at("params").items()) out[k] = v.get<double>();
    return out;
}

}  // namespace photonstat
