#include "smoothtest/report.hpp"

#include <cstdio>

namespace smoothtest {

std::string format_alpha(double alpha) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", alpha);
    return buf;
}

nlohmann::json TestReport::to_json() const {
    nlohmann::json j;
    j["config"] = config_echo;
    j["n"] = n;
    j["seed"] = seed;
    j["method"] = method;
    j["null_replicates"] = null_replicates;
    j["basis"] = basis_kind;
    j["fit"] = {{"model_params", model_params}, {"model_loglik", model_loglik}};
    if (!reference_params.empty() || basis_kind == "k2") {
        j["fit"]["reference_params"] = reference_params;
        j["fit"]["reference_loglik"] = reference_loglik;
    }
    if (!k2_residuals.empty()) j["k2_residuals"] = k2_residuals;
    j["coefficients"] = coefficients;
    nlohmann::json stats_json = nlohmann::json::array();
    for (const StatReport& s : stats) {
        stats_json.push_back({
            {"name", s.name},
            {"observed", s.observed},
            {"chosen", s.chosen},
            {"p_value", s.p},
            {"critical_values", s.critical_values},
            {"cache_hit", s.cache_hit},
            {"null_file", s.null_file},
        });
    }
    j["statistics"] = stats_json;
    return j;
}

TestReport TestReport::from_json(const nlohmann::json& j) {
    TestReport r;
    r.config_echo = j.at("config").get<std::map<std::string, std::string>>();
    r.n = j.at("n").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.method = j.at("method").get<std::string>();
    r.null_replicates = j.at("null_replicates").get<int>();
    r.basis_kind = j.at("basis").get<std::string>();
    r.model_params = j.at("fit").at("model_params").get<std::vector<double>>();
    r.model_loglik = j.at("fit").at("model_loglik").get<double>();
    if (j.at("fit").contains("reference_params")) {
        r.reference_params = j.at("fit").at("reference_params").get<std::vector<double>>();
        r.reference_loglik = j.at("fit").at("reference_loglik").get<double>();
    }
    if (j.contains("k2_residuals"))
        r.k2_residuals = j.at("k2_residuals").get<std::map<std::string, double>>();
    r.coefficients = j.at("coefficients").get<std::vector<double>>();
    for (const auto& s : j.at("statistics")) {
        StatReport sr;
        sr.name = s.at("name").get<std::string>();
        sr.observed = s.at("observed").get<double>();
        sr.chosen = s.at("chosen").get<std::vector<int>>();
        sr.p = s.at("p_value").get<double>();
        sr.critical_values = s.at("critical_values").get<std::map<std::string, double>>();
        sr.cache_hit = s.at("cache_hit").get<bool>();
        sr.null_file = s.at("null_file").get<std::string>();
        r.stats.push_back(std::move(sr));
    }
    return r;
}

std::string TestReport::dump() const { return to_json().dump(2); }

}  // namespace smoothtest
