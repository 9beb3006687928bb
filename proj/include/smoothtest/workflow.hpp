#pragma once

#include <filesystem>

#include "smoothtest/config.hpp"
#include "smoothtest/k2.hpp"
#include "smoothtest/nullcache.hpp"
#include "smoothtest/report.hpp"
#include "smoothtest/resample.hpp"

namespace smoothtest {

// Fits the configured model (and reference, for K2), computes the configured
// statistics on `data`, obtains the null from the cache or a fresh
// simulation, and assembles the report.
TestReport run_gof_test(const KeyValueConfig& cfg, std::span<const double> data);

struct SimulatedNull {
    NullDistribution null;
    std::filesystem::path file;
    bool cache_hit = false;
};

// Simulates (or loads) the configured null distributions; one entry per
// configured statistic. Idempotent for a fixed config and seed.
std::vector<SimulatedNull> run_simulate_null(const KeyValueConfig& cfg);

struct PowerRow {
    std::string model_label;
    std::string basis;   // legendre | k2
    std::string stat;    // statistic descriptor
    double alpha = 0.0;
    double power = 0.0;
    double std_error = 0.0;
    int datasets = 0;
};

// For each configured null model, statistic and level: the fraction of
// datasets drawn from the configured truth that the test rejects.
std::vector<PowerRow> run_power_study(const KeyValueConfig& cfg);
void write_power_csv(const std::filesystem::path& path, std::span<const PowerRow> rows);

struct K2CheckOutcome {
    K2Diagnostics diagnostics;
    bool pass = false;
    double threshold = 1e-7;
};

K2CheckOutcome run_k2_check(const KeyValueConfig& cfg);

struct QqRow {
    double level = 0.0;
    double a = 0.0;
    double b = 0.0;
};

std::vector<QqRow> qq_pairs(const NullDistribution& a, const NullDistribution& b,
                            int levels = 999);
void write_qq_csv(const std::filesystem::path& path, std::span<const QqRow> rows);

// Shared helpers reused by the acceptance suite.

// Quadrature rule covering both models (K2) or the model alone (Legendre);
// for an asymmetric-Laplace-style unbounded model the panel edges follow
// the CDF.
QuadratureRule rule_for(const RunSettings& rs, const ModelPtr& model,
                        const ModelPtr& reference = nullptr);

// Basis builder bound to a config: rebuilds rule + basis at any refitted
// model (used by the refitting engines).
BasisBuilder basis_builder_for(const RunSettings& rs, const ModelPtr& reference = nullptr);

// Null distribution for the configured (model, basis, statistic) triple with
// cache lookup; `sampling_basis` is the frozen basis for projected runs.
struct NullRequest {
    ModelPtr model;           // sampling model
    BasisPtr basis;           // basis evaluated on the replicates
    Fitter refit;             // refitting engines
    BasisBuilder rebuild;
    std::string method = "projected";
    std::vector<StatConfig> stats;
    int n = 0;
    int R = 0;
    std::uint64_t seed = 0;
    int threads = 1;
    std::filesystem::path cache_dir;  // empty -> no caching
};

std::vector<SimulatedNull> obtain_null(const NullRequest& req);

}  // namespace smoothtest
