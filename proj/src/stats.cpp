#include "smoothtest/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "smoothtest/errors.hpp"

namespace smoothtest {

std::string StatConfig::descriptor() const {
    std::string s;
    switch (selection) {
        case Selection::fixed_m: s = "fixed:" + std::to_string(fixed_m.value_or(0)); break;
        case Selection::order: s = "order"; break;
        case Selection::subset: s = "subset"; break;
    }
    s += (form == StatForm::normalized) ? "|normalized" : "|unnormalized";
    s += "|M=" + std::to_string(m);
    return s;
}

StatConfig StatConfig::parse(const std::string& selection, const std::string& form, int m,
                             std::optional<int> fixed_m) {
    StatConfig c;
    c.m = m;
    if (m < 1) throw parameter_error("statistic needs M >= 1");
    if (form == "normalized")
        c.form = StatForm::normalized;
    else if (form == "unnormalized")
        c.form = StatForm::unnormalized;
    else
        throw parameter_error("unknown statistic form: " + form);
    if (selection == "order")
        c.selection = Selection::order;
    else if (selection == "subset")
        c.selection = Selection::subset;
    else if (selection == "fixed")
        c.selection = Selection::fixed_m;
    else
        throw parameter_error("unknown selection rule: " + selection);
    if (c.selection == Selection::fixed_m) {
        if (!fixed_m || *fixed_m < 1 || *fixed_m > m)
            throw parameter_error("fixed-m selection needs 1 <= fixed_m <= M");
        c.fixed_m = fixed_m;
    }
    return c;
}

double score_stat(std::span<const double> v, const SymMatrix& gram, StatForm form) {
    const int m = static_cast<int>(v.size());
    if (form == StatForm::unnormalized) {
        double acc = 0.0;
        for (double x : v) acc += x * x;
        return acc;
    }
    if (gram.dim() != m) throw parameter_error("gram dimension does not match v");
    std::vector<double> x;
    try {
        x = solve_spd(gram, v);
    } catch (const not_positive_definite_error& e) {
        double dmax = 0.0, dmin = 1e300;
        for (int i = 0; i < gram.dim(); ++i) {
            dmax = std::max(dmax, gram.at(i, i));
            dmin = std::min(dmin, gram.at(i, i));
        }
        throw not_positive_definite_error(std::string(e.what()) +
                                          "; gram diagonal range [" + std::to_string(dmin) +
                                          ", " + std::to_string(dmax) + "]");
    }
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += v[i] * x[i];
    return acc;
}

StatResult order_selection(std::span<const double> v, const SymMatrix& gram, StatForm form) {
    const int m = static_cast<int>(v.size());
    if (m < 1) throw parameter_error("order selection needs at least one component");
    StatResult r;
    r.components.assign(v.begin(), v.end());
    double best = -1.0;
    int best_m = 1;
    double sumsq = 0.0;
    for (int k = 1; k <= m; ++k) {
        double s;
        if (form == StatForm::unnormalized) {
            sumsq += v[k - 1] * v[k - 1];
            s = sumsq;
        } else {
            s = score_stat(v.subspan(0, k), gram.leading_block(k), form);
        }
        const double crit = s / k;
        if (crit > best) {
            best = crit;
            best_m = k;
        }
    }
    r.value = best;
    r.chosen = {best_m};
    return r;
}

StatResult subset_selection(std::span<const double> v, const SymMatrix& gram, StatForm form) {
    const int m = static_cast<int>(v.size());
    if (m < 1) throw parameter_error("subset selection needs at least one component");
    StatResult r;
    r.components.assign(v.begin(), v.end());

    if (form == StatForm::unnormalized) {
        // The maximizing subset of size k is always the k largest v_j^2, so
        // the maximum over all subsets is the best prefix mean after sorting.
        std::vector<int> idx(m);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            const double va = v[a] * v[a], vb = v[b] * v[b];
            if (va != vb) return va > vb;
            return a < b;
        });
        double best = -1.0;
        int best_k = 1;
        double acc = 0.0;
        for (int k = 1; k <= m; ++k) {
            acc += v[idx[k - 1]] * v[idx[k - 1]];
            if (acc / k > best) {
                best = acc / k;
                best_k = k;
            }
        }
        r.chosen.assign(idx.begin(), idx.begin() + best_k);
        for (int& j : r.chosen) ++j;
        std::sort(r.chosen.begin(), r.chosen.end());
        // Re-sum in ascending index order so the value is bit-identical to an
        // exhaustive enumeration of the same subset.
        double canonical = 0.0;
        for (int j : r.chosen) canonical += v[j - 1] * v[j - 1];
        r.value = canonical / best_k;
        return r;
    }

    if (m > 20)
        throw complexity_guard_error("normalized subset selection is limited to M <= 20");
    double best = -1.0;
    std::vector<int> best_set;
    for (unsigned mask = 1; mask < (1u << m); ++mask) {
        const int k = std::popcount(mask);
        std::vector<double> vb;
        vb.reserve(k);
        std::vector<int> members;
        members.reserve(k);
        for (int j = 0; j < m; ++j)
            if (mask & (1u << j)) {
                vb.push_back(v[j]);
                members.push_back(j + 1);
            }
        SymMatrix sub(k);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) sub.at(a, b) = gram.at(members[a] - 1, members[b] - 1);
        const double crit = score_stat(vb, sub, StatForm::normalized) / k;
        if (crit > best || (crit == best && (best_set.empty() || members < best_set))) {
            best = crit;
            best_set = members;
        }
    }
    r.value = best;
    r.chosen = best_set;
    return r;
}

StatResult subset_selection_bruteforce(std::span<const double> v, const SymMatrix& gram,
                                       StatForm form) {
    const int m = static_cast<int>(v.size());
    if (m > 24) throw complexity_guard_error("brute-force subset selection is limited to M <= 24");
    double best = -1.0;
    std::vector<int> best_set;
    for (unsigned mask = 1; mask < (1u << m); ++mask) {
        const int k = std::popcount(mask);
        std::vector<double> vb;
        std::vector<int> members;
        for (int j = 0; j < m; ++j)
            if (mask & (1u << j)) {
                vb.push_back(v[j]);
                members.push_back(j + 1);
            }
        double s;
        if (form == StatForm::unnormalized) {
            s = 0.0;
            for (double x : vb) s += x * x;
        } else {
            SymMatrix sub(k);
            for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b) sub.at(a, b) = gram.at(members[a] - 1, members[b] - 1);
            s = score_stat(vb, sub, StatForm::normalized);
        }
        const double crit = s / k;
        if (crit > best || (crit == best && (best_set.empty() || members < best_set))) {
            best = crit;
            best_set = members;
        }
    }
    StatResult r;
    r.value = best;
    r.chosen = best_set;
    r.components.assign(v.begin(), v.end());
    return r;
}

StatResult evaluate_statistic(const StatConfig& config, std::span<const double> v,
                              const SymMatrix& gram) {
    if (static_cast<int>(v.size()) != config.m)
        throw parameter_error("component count does not match the statistic configuration");
    switch (config.selection) {
        case Selection::order:
            return order_selection(v, gram, config.form);
        case Selection::subset:
            return subset_selection(v, gram, config.form);
        case Selection::fixed_m: {
            const int k = config.fixed_m.value();
            StatResult r;
            r.components.assign(v.begin(), v.end());
            r.value = score_stat(v.subspan(0, k),
                                 config.form == StatForm::normalized ? gram.leading_block(k)
                                                                     : SymMatrix(k),
                                 config.form);
            r.chosen = {k};
            return r;
        }
    }
    throw parameter_error("unreachable statistic selection");
}

double critical_value(std::span<const double> sorted_null, double alpha) {
    if (sorted_null.empty()) throw numeric_error("empty null sample");
    if (!(alpha > 0.0 && alpha < 1.0)) throw parameter_error("alpha must lie in (0,1)");
    const std::size_t r = sorted_null.size();
    const std::size_t need = static_cast<std::size_t>(std::ceil((1.0 - alpha) * r));
    const std::size_t idx = (need == 0) ? 0 : need - 1;
    return sorted_null[std::min(idx, r - 1)];
}

double p_value_from_null(double observed, std::span<const double> sorted_null) {
    if (sorted_null.empty()) throw numeric_error("empty null sample");
    const auto it = std::lower_bound(sorted_null.begin(), sorted_null.end(), observed);
    const std::size_t ge = sorted_null.end() - it;
    return (1.0 + static_cast<double>(ge)) / (static_cast<double>(sorted_null.size()) + 1.0);
}

double ks_two_sample_sorted(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw numeric_error("empty sample in KS comparison");
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double worst = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        worst = std::max(worst, std::abs(i / na - j / nb));
    }
    return std::max(worst, std::abs(1.0 - (i < a.size() ? i / na : j / nb)));
}

double empirical_quantile(std::span<const double> sorted_values, double level) {
    if (sorted_values.empty()) throw numeric_error("empty sample in quantile");
    if (level <= 0.0) return sorted_values.front();
    if (level >= 1.0) return sorted_values.back();
    const double pos = level * (static_cast<double>(sorted_values.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted_values.size()) return sorted_values.back();
    return sorted_values[lo] * (1.0 - frac) + sorted_values[lo + 1] * frac;
}

}  // namespace smoothtest
