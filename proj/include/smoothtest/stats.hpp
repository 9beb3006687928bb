#pragma once

#include <optional>
#include <string>
#include <vector>

#include "smoothtest/numerics.hpp"

namespace smoothtest {

enum class StatForm { unnormalized, normalized };
enum class Selection { fixed_m, order, subset };

struct StatConfig {
    StatForm form = StatForm::unnormalized;
    Selection selection = Selection::order;
    int m = 1;                       // number of candidate basis functions
    std::optional<int> fixed_m;      // required when selection == fixed_m

    std::string descriptor() const;  // stable id for caches and reports
    static StatConfig parse(const std::string& selection, const std::string& form, int m,
                            std::optional<int> fixed_m = std::nullopt);
};

struct StatResult {
    double value = 0.0;
    std::vector<int> chosen;         // order m as {m}, or the selected subset (1-based)
    std::vector<double> components;  // the v_j values that produced it
};

// S_{m} = v^T gram^{-1} v (normalized) or sum v_j^2 (unnormalized).
double score_stat(std::span<const double> v, const SymMatrix& gram, StatForm form);

// max over m = 1..M of S_m / m on the leading components; ties resolved to
// the smallest m.
StatResult order_selection(std::span<const double> v, const SymMatrix& gram, StatForm form);

// max over nonempty subsets B of S_B / |B|. The unnormalized form uses the
// exact sorted-prefix fast path; the normalized form enumerates all 2^M - 1
// subsets and is guarded at M <= 20.
StatResult subset_selection(std::span<const double> v, const SymMatrix& gram, StatForm form);

// Exhaustive subset maximization; the test oracle for the fast path.
StatResult subset_selection_bruteforce(std::span<const double> v, const SymMatrix& gram,
                                       StatForm form);

StatResult evaluate_statistic(const StatConfig& config, std::span<const double> v,
                              const SymMatrix& gram);

// Empirical (1 - alpha) quantile with "higher" interpolation: the smallest
// replicate value with at least ceil((1-alpha) R) replicates at or below it.
double critical_value(std::span<const double> sorted_null, double alpha);

// (1 + #{null >= observed}) / (R + 1).
double p_value_from_null(double observed, std::span<const double> sorted_null);

// Kolmogorov-Smirnov distance between two empirical CDFs (merge scan).
double ks_two_sample_sorted(std::span<const double> a, std::span<const double> b);

// Interpolated empirical quantile (linear between order statistics).
double empirical_quantile(std::span<const double> sorted_values, double level);

}  // namespace smoothtest
