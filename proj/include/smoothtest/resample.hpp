#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smoothtest/basis.hpp"
#include "smoothtest/fit.hpp"
#include "smoothtest/stats.hpp"

namespace smoothtest {

// Simulated null law of one statistic: sorted replicate values plus
// provenance.
struct NullDistribution {
    std::vector<double> values;  // sorted ascending
    std::string method;          // parametric | projected | montecarlo
    std::uint64_t seed = 0;
    std::uint64_t model_hash = 0;  // identity of the sampling model + basis
    std::string stat_descriptor;
    int n = 0;
    int requested_replicates = 0;
    int fit_failures = 0;          // replicates abandoned after retries
    double elapsed_seconds = 0.0;

    int size() const { return static_cast<int>(values.size()); }
};

// Classical parametric bootstrap: every replicate samples from the fitted
// model, refits, rebuilds the basis at the refit and evaluates the
// statistics there.
std::vector<NullDistribution> parametric_bootstrap_multi(
    const ModelPtr& model_at_obs, const Fitter& refit, const BasisBuilder& rebuild,
    std::span<const StatConfig> stats, int n, int R, std::uint64_t seed, int threads = 1);

NullDistribution parametric_bootstrap(const ModelPtr& model_at_obs, const Fitter& refit,
                                      const BasisBuilder& rebuild, const StatConfig& stat, int n,
                                      int R, std::uint64_t seed, int threads = 1);

// Projected bootstrap: samples from the fitted model but keeps the basis
// frozen at the observed fit; no re-estimation.
std::vector<NullDistribution> projected_bootstrap_multi(const BasisPtr& basis_at_obs,
                                                        std::span<const StatConfig> stats, int n,
                                                        int R, std::uint64_t seed,
                                                        int threads = 1);

NullDistribution projected_bootstrap(const BasisPtr& basis_at_obs, const StatConfig& stat, int n,
                                     int R, std::uint64_t seed, int threads = 1);

// Monte Carlo under a known truth: samples from the true model, fits and
// rebuilds per replicate exactly like the parametric bootstrap.
std::vector<NullDistribution> monte_carlo_null_multi(const ModelPtr& true_model,
                                                     const Fitter& refit,
                                                     const BasisBuilder& rebuild,
                                                     std::span<const StatConfig> stats, int n,
                                                     int R, std::uint64_t seed, int threads = 1);

NullDistribution monte_carlo_null(const ModelPtr& true_model, const Fitter& refit,
                                  const BasisBuilder& rebuild, const StatConfig& stat, int n,
                                  int R, std::uint64_t seed, int threads = 1);

double p_value(double observed, const NullDistribution& null);
double ks_two_sample(const NullDistribution& a, const NullDistribution& b);

}  // namespace smoothtest
