#include "smoothtest/resample.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "smoothtest/errors.hpp"

namespace smoothtest {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct EngineTask {
    ModelPtr sampling_model;        // model draws come from
    BasisPtr fixed_basis;           // projected engine only
    const Fitter* refit = nullptr;  // refitting engines only
    const BasisBuilder* rebuild = nullptr;
    std::span<const StatConfig> stats;
    int n = 0;
    int R = 0;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string method;
};

std::vector<NullDistribution> run_engine(const EngineTask& task) {
    if (task.R < 1) throw parameter_error("need at least one replicate");
    if (task.n < 1) throw parameter_error("need at least one observation per replicate");
    for (const StatConfig& s : task.stats) {
        const int basis_m = task.fixed_basis ? task.fixed_basis->size() : s.m;
        if (s.m > basis_m) throw parameter_error("statistic M exceeds the basis size");
    }

    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t nstats = task.stats.size();
    std::vector<std::vector<double>> raw(nstats,
                                         std::vector<double>(static_cast<std::size_t>(task.R)));
    std::vector<int> failures_per_thread(std::max(task.threads, 1), 0);

    const auto worker = [&](int tid, int begin, int end) {
        std::vector<double> data(static_cast<std::size_t>(task.n));
        for (int r = begin; r < end; ++r) {
            RngStream rng(task.seed, static_cast<std::uint64_t>(r));
            BasisPtr basis;
            bool ok = false;
            for (int attempt = 0; attempt < 4 && !ok; ++attempt) {
                task.sampling_model->sample_n(rng, data);
                if (task.fixed_basis) {
                    basis = task.fixed_basis;
                    ok = true;
                    break;
                }
                try {
                    ModelPtr fitted = (*task.refit)(data);
                    basis = (*task.rebuild)(fitted);
                    ok = true;
                } catch (const numeric_error&) {
                    // retry with a fresh sample
                }
            }
            if (!ok) {
                ++failures_per_thread[tid];
                for (std::size_t s = 0; s < nstats; ++s) raw[s][r] = kNan;
                continue;
            }
            const std::vector<double> v = empirical_process_all(*basis, data);
            for (std::size_t s = 0; s < nstats; ++s) {
                const StatConfig& cfg = task.stats[s];
                const std::span<const double> head(v.data(), static_cast<std::size_t>(cfg.m));
                raw[s][r] = evaluate_statistic(cfg, head, basis->gram()).value;
            }
        }
    };

    const int nthreads = std::max(1, std::min(task.threads, task.R));
    if (nthreads == 1) {
        worker(0, 0, task.R);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (task.R + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t) {
            const int begin = t * chunk;
            const int end = std::min(task.R, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(worker, t, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    int failures = 0;
    for (int f : failures_per_thread) failures += f;
    if (failures > 0 && static_cast<double>(failures) > 0.01 * task.R)
        throw integrity_error("replicate fit failures exceeded 1% of R (" +
                              std::to_string(failures) + " of " + std::to_string(task.R) + ")");

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<NullDistribution> out(nstats);
    for (std::size_t s = 0; s < nstats; ++s) {
        NullDistribution& nd = out[s];
        nd.values.reserve(static_cast<std::size_t>(task.R));
        for (double v : raw[s])
            if (!std::isnan(v)) nd.values.push_back(v);
        std::sort(nd.values.begin(), nd.values.end());
        nd.method = task.method;
        nd.seed = task.seed;
        nd.model_hash = task.fixed_basis ? task.fixed_basis->hash() : task.sampling_model->hash();
        nd.stat_descriptor = task.stats[s].descriptor();
        nd.n = task.n;
        nd.requested_replicates = task.R;
        nd.fit_failures = failures;
        nd.elapsed_seconds = elapsed;
    }
    return out;
}

}  // namespace

std::vector<NullDistribution> parametric_bootstrap_multi(
    const ModelPtr& model_at_obs, const Fitter& refit, const BasisBuilder& rebuild,
    std::span<const StatConfig> stats, int n, int R, std::uint64_t seed, int threads) {
    EngineTask task;
    task.sampling_model = model_at_obs;
    task.refit = &refit;
    task.rebuild = &rebuild;
    task.stats = stats;
    task.n = n;
    task.R = R;
    task.seed = seed;
    task.threads = threads;
    task.method = "parametric";
    return run_engine(task);
}

NullDistribution parametric_bootstrap(const ModelPtr& model_at_obs, const Fitter& refit,
                                      const BasisBuilder& rebuild, const StatConfig& stat, int n,
                                      int R, std::uint64_t seed, int threads) {
    return parametric_bootstrap_multi(model_at_obs, refit, rebuild, {&stat, 1}, n, R, seed,
                                      threads)[0];
}

std::vector<NullDistribution> projected_bootstrap_multi(const BasisPtr& basis_at_obs,
                                                        std::span<const StatConfig> stats, int n,
                                                        int R, std::uint64_t seed, int threads) {
    EngineTask task;
    task.sampling_model = basis_at_obs->model_ptr();
    task.fixed_basis = basis_at_obs;
    task.stats = stats;
    task.n = n;
    task.R = R;
    task.seed = seed;
    task.threads = threads;
    task.method = "projected";
    return run_engine(task);
}

NullDistribution projected_bootstrap(const BasisPtr& basis_at_obs, const StatConfig& stat, int n,
                                     int R, std::uint64_t seed, int threads) {
    return projected_bootstrap_multi(basis_at_obs, {&stat, 1}, n, R, seed, threads)[0];
}

std::vector<NullDistribution> monte_carlo_null_multi(const ModelPtr& true_model,
                                                     const Fitter& refit,
                                                     const BasisBuilder& rebuild,
                                                     std::span<const StatConfig> stats, int n,
                                                     int R, std::uint64_t seed, int threads) {
    EngineTask task;
    task.sampling_model = true_model;
    task.refit = &refit;
    task.rebuild = &rebuild;
    task.stats = stats;
    task.n = n;
    task.R = R;
    task.seed = seed;
    task.threads = threads;
    task.method = "montecarlo";
    return run_engine(task);
}

NullDistribution monte_carlo_null(const ModelPtr& true_model, const Fitter& refit,
                                  const BasisBuilder& rebuild, const StatConfig& stat, int n,
                                  int R, std::uint64_t seed, int threads) {
    return monte_carlo_null_multi(true_model, refit, rebuild, {&stat, 1}, n, R, seed, threads)[0];
}

double p_value(double observed, const NullDistribution& null) {
    return p_value_from_null(observed, null.values);
}

double ks_two_sample(const NullDistribution& a, const NullDistribution& b) {
    return ks_two_sample_sorted(a.values, b.values);
}

}  // namespace smoothtest
