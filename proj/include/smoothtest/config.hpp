#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smoothtest/fit.hpp"
#include "smoothtest/models.hpp"
#include "smoothtest/stats.hpp"

namespace smoothtest {

// Flat "key = value" configuration with dotted sections and '#' comments.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::filesystem::path& path);
    static KeyValueConfig parse_string(const std::string& text);

    bool has(const std::string& key) const;
    std::string get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    int get_int(const std::string& key) const;
    int get_int_or(const std::string& key, int fallback) const;
    std::uint64_t get_u64_or(const std::string& key, std::uint64_t fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<std::string> get_strings(const std::string& key) const;

    // Keys beginning with "<prefix>." exist.
    bool has_section(const std::string& prefix) const;
    std::vector<std::string> section_names(const std::string& stem) const;  // stem1, stem2, ...

    const std::map<std::string, std::string>& entries() const { return kv_; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

private:
    std::map<std::string, std::string> kv_;
};

// Builds a model from the keys under `prefix` (e.g. "model", "truth",
// "null1.model"). Families: uniform, truncnormal, trunclaplace, asymlaplace,
// line, mixture.
ModelPtr model_from_config(const KeyValueConfig& cfg, const std::string& prefix);

// Estimator for a model: the dedicated root solve for the asymmetric
// Laplace, numerical MLE with configurable box bounds otherwise.
Fitter fitter_from_config(const KeyValueConfig& cfg, const std::string& prefix,
                          const ModelPtr& prototype);

FitOptions fit_options_from_config(const KeyValueConfig& cfg, const std::string& prefix,
                                   const ModelPtr& prototype);

// Common run settings shared by the CLI commands.
struct RunSettings {
    int n = 100;
    int replicates = 1000;
    std::uint64_t seed = 1;
    int threads = 1;
    std::vector<double> alphas{0.05};
    std::string method = "projected";  // projected | parametric | montecarlo
    int quad_panels = 32;
    int quad_nodes = 16;
    std::string basis_kind = "legendre";  // legendre | k2
    int basis_m = 10;
    std::vector<StatConfig> stats;
    std::filesystem::path cache_dir;
    std::filesystem::path out_dir;
};

RunSettings run_settings_from_config(const KeyValueConfig& cfg);

// One observation per line; '#' starts a comment; blank lines skipped.
std::vector<double> load_data_file(const std::filesystem::path& path);

}  // namespace smoothtest
