#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace smoothtest {

struct StatReport {
    std::string name;  // statistic descriptor
    double observed = 0.0;
    std::vector<int> chosen;
    double p = 1.0;
    std::map<std::string, double> critical_values;  // formatted alpha -> value
    bool cache_hit = false;
    std::string null_file;
};

struct TestReport {
    std::map<std::string, std::string> config_echo;
    int n = 0;
    std::uint64_t seed = 0;
    std::string method;
    int null_replicates = 0;
    std::string basis_kind;
    std::vector<double> model_params;
    double model_loglik = 0.0;
    std::vector<double> reference_params;  // k2 only
    double reference_loglik = 0.0;         // k2 only
    std::map<std::string, double> k2_residuals;  // k2 only
    std::vector<double> coefficients;      // estimated expansion coefficients
    std::vector<StatReport> stats;

    nlohmann::json to_json() const;
    static TestReport from_json(const nlohmann::json& j);
    std::string dump() const;  // canonical serialization (sorted keys)
};

std::string format_alpha(double alpha);

}  // namespace smoothtest
