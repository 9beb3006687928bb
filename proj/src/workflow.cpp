#include "smoothtest/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

namespace smoothtest {

QuadratureRule rule_for(const RunSettings& rs, const ModelPtr& model, const ModelPtr& reference) {
    if (reference) {
        const ModelPtr both[2] = {model, reference};
        return shared_rule(both, rs.quad_panels, rs.quad_nodes);
    }
    return default_rule(*model, rs.quad_panels, rs.quad_nodes);
}

BasisBuilder basis_builder_for(const RunSettings& rs, const ModelPtr& reference) {
    if (rs.basis_kind == "k2") {
        return [rs, reference](const ModelPtr& m) -> BasisPtr {
            return k2_basis(m, reference, rs.basis_m, rule_for(rs, m, reference));
        };
    }
    return [rs](const ModelPtr& m) -> BasisPtr {
        return legendre_composed_basis(m, rs.basis_m, rule_for(rs, m));
    };
}

std::vector<SimulatedNull> obtain_null(const NullRequest& req) {
    std::vector<SimulatedNull> out(req.stats.size());
    std::vector<StatConfig> missing;
    std::vector<std::size_t> missing_idx;
    const std::uint64_t id_hash = req.basis ? req.basis->hash() : req.model->hash();

    for (std::size_t i = 0; i < req.stats.size(); ++i) {
        NullCacheKey key{id_hash, req.stats[i].descriptor(), req.n, req.R, req.seed, req.method};
        if (!req.cache_dir.empty()) {
            if (auto hit = try_load_cached(req.cache_dir, key)) {
                out[i].null = std::move(*hit);
                out[i].file = req.cache_dir / key.filename();
                out[i].cache_hit = true;
                continue;
            }
        }
        missing.push_back(req.stats[i]);
        missing_idx.push_back(i);
    }

    if (!missing.empty()) {
        std::vector<NullDistribution> fresh;
        if (req.method == "projected") {
            fresh = projected_bootstrap_multi(req.basis, missing, req.n, req.R, req.seed,
                                              req.threads);
        } else if (req.method == "parametric") {
            fresh = parametric_bootstrap_multi(req.model, req.refit, req.rebuild, missing, req.n,
                                               req.R, req.seed, req.threads);
        } else if (req.method == "montecarlo") {
            fresh = monte_carlo_null_multi(req.model, req.refit, req.rebuild, missing, req.n,
                                           req.R, req.seed, req.threads);
        } else {
            throw parameter_error("unknown simulation method: " + req.method);
        }
        for (std::size_t k = 0; k < missing.size(); ++k) {
            const std::size_t i = missing_idx[k];
            fresh[k].model_hash = id_hash;
            out[i].null = std::move(fresh[k]);
            if (!req.cache_dir.empty()) {
                NullCacheKey key{id_hash, req.stats[i].descriptor(), req.n, req.R, req.seed,
                                 req.method};
                out[i].file = store_cached(req.cache_dir, key, out[i].null);
            }
        }
    }
    return out;
}

TestReport run_gof_test(const KeyValueConfig& cfg, std::span<const double> data) {
    const RunSettings rs = run_settings_from_config(cfg);
    const ModelPtr proto = model_from_config(cfg, "model");
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!proto->in_support(data[i]))
            throw support_violation_error("observation " + std::to_string(i) + " (value " +
                                          std::to_string(data[i]) +
                                          ") lies outside the model support");
    }
    if (data.size() < 2) throw data_error("need at least two observations to fit and test");

    const Fitter fit = fitter_from_config(cfg, "model", proto);
    const ModelPtr fitted = fit(data);

    TestReport report;
    report.config_echo = {cfg.entries().begin(), cfg.entries().end()};
    report.n = static_cast<int>(data.size());
    report.seed = rs.seed;
    report.method = rs.method;
    report.null_replicates = rs.replicates;
    report.basis_kind = rs.basis_kind;
    report.model_params = fitted->params();
    {
        double acc = 0.0;
        for (double x : data) acc += fitted->log_pdf(x);
        report.model_loglik = acc;
    }

    BasisPtr basis;
    ModelPtr ref_fitted;
    if (rs.basis_kind == "k2") {
        if (!cfg.has_section("reference"))
            throw format_error("k2 basis needs a reference.* section");
        const ModelPtr ref_proto = model_from_config(cfg, "reference");
        const Fitter ref_fit = fitter_from_config(cfg, "reference", ref_proto);
        ref_fitted = ref_fit(data);
        report.reference_params = ref_fitted->params();
        double acc = 0.0;
        for (double x : data) acc += ref_fitted->log_pdf(x);
        report.reference_loglik = acc;
        const auto k2 = k2_basis_full(fitted, ref_fitted, rs.basis_m,
                                      rule_for(rs, fitted, ref_fitted));
        report.k2_residuals = k2->diagnostics().to_map();
        basis = k2;
    } else {
        basis = legendre_composed_basis(fitted, rs.basis_m, rule_for(rs, fitted));
    }

    const std::vector<double> v = empirical_process_all(*basis, data);
    report.coefficients = estimate_coefficients(*basis, data);

    // Null distributions. For a K2 basis the null is simulated under the
    // fitted reference (one simulation serves every tested model); otherwise
    // under the fitted model itself.
    NullRequest req;
    req.stats = rs.stats;
    req.n = static_cast<int>(data.size());
    req.R = rs.replicates;
    req.seed = rs.seed;
    req.threads = rs.threads;
    req.cache_dir = rs.cache_dir;
    req.method = rs.method;

    const bool reference_null =
        rs.basis_kind == "k2" && cfg.get_bool_or("k2.reference_null", true);
    if (reference_null) {
        // Projected bootstrap of the reference residual process.
        req.method = "projected";
        req.model = ref_fitted;
        req.basis = legendre_composed_basis(ref_fitted, rs.basis_m, rule_for(rs, ref_fitted));
    } else {
        req.model = fitted;
        req.basis = basis;
        if (rs.method != "projected") {
            req.refit = fit;
            req.rebuild = basis_builder_for(rs, ref_fitted);
        }
    }
    const std::vector<SimulatedNull> nulls = obtain_null(req);

    for (std::size_t s = 0; s < rs.stats.size(); ++s) {
        const StatConfig& sc = rs.stats[s];
        const StatResult res =
            evaluate_statistic(sc, {v.data(), static_cast<std::size_t>(sc.m)}, basis->gram());
        StatReport sr;
        sr.name = sc.descriptor();
        sr.observed = res.value;
        sr.chosen = res.chosen;
        sr.p = p_value(res.value, nulls[s].null);
        for (double a : rs.alphas)
            sr.critical_values[format_alpha(a)] = critical_value(nulls[s].null.values, a);
        sr.cache_hit = nulls[s].cache_hit;
        sr.null_file = nulls[s].file.string();
        report.stats.push_back(std::move(sr));
    }
    return report;
}

std::vector<SimulatedNull> run_simulate_null(const KeyValueConfig& cfg) {
    const RunSettings rs = run_settings_from_config(cfg);
    const ModelPtr model = model_from_config(cfg, "model");

    NullRequest req;
    req.stats = rs.stats;
    req.n = rs.n;
    req.R = rs.replicates;
    req.seed = rs.seed;
    req.threads = rs.threads;
    req.cache_dir = rs.cache_dir;
    req.method = rs.method;
    req.model = model;

    ModelPtr reference;
    if (rs.basis_kind == "k2") {
        reference = model_from_config(cfg, "reference");
        req.basis = k2_basis(model, reference, rs.basis_m, rule_for(rs, model, reference));
    } else {
        req.basis = legendre_composed_basis(model, rs.basis_m, rule_for(rs, model));
    }
    if (rs.method != "projected") {
        req.refit = fitter_from_config(cfg, "model", model);
        req.rebuild = basis_builder_for(rs, reference);
    }
    return obtain_null(req);
}

std::vector<PowerRow> run_power_study(const KeyValueConfig& cfg) {
    const RunSettings rs = run_settings_from_config(cfg);
    const ModelPtr truth = model_from_config(cfg, "truth");
    const int datasets = cfg.get_int_or("power.datasets", 1000);
    const int n = rs.n;

    const std::vector<std::string> null_sections = cfg.section_names("null");
    if (null_sections.empty()) throw format_error("power study needs null1.*, null2.* sections");

    const bool any_k2 = [&] {
        for (const auto& sec : null_sections)
            if (cfg.get_or(sec + ".basis", rs.basis_kind) == "k2") return true;
        return false;
    }();

    ModelPtr ref_proto;
    Fitter ref_fit;
    if (any_k2) {
        if (!cfg.has_section("reference"))
            throw format_error("k2 power study needs a reference.* section");
        ref_proto = model_from_config(cfg, "reference");
        ref_fit = fitter_from_config(cfg, "reference", ref_proto);
    }

    // Calibration dataset: one draw from the truth fixes the parameter
    // values at which the null laws are simulated.
    std::vector<double> calib(static_cast<std::size_t>(n));
    {
        RngStream rng(derive_seed(rs.seed, 0xCA11B), 0);
        truth->sample_n(rng, calib);
    }

    struct NullModelCtx {
        std::string label;
        std::string basis_kind;
        ModelPtr proto;
        Fitter fit;
        std::vector<std::vector<double>> criticals;  // stat x alpha
    };
    std::vector<NullModelCtx> ctxs;

    ModelPtr ref_calib;
    std::vector<std::vector<double>> ref_criticals;  // stat x alpha (k2 cells)
    if (any_k2) {
        ref_calib = ref_fit(calib);
        BasisPtr ref_basis =
            legendre_composed_basis(ref_calib, rs.basis_m, rule_for(rs, ref_calib));
        NullRequest req;
        req.stats = rs.stats;
        req.n = n;
        req.R = rs.replicates;
        req.seed = derive_seed(rs.seed, 0x5EF);
        req.threads = rs.threads;
        req.cache_dir = rs.cache_dir;
        req.method = "projected";
        req.model = ref_calib;
        req.basis = ref_basis;
        const auto nulls = obtain_null(req);
        for (std::size_t s = 0; s < rs.stats.size(); ++s) {
            std::vector<double> crits;
            for (double a : rs.alphas) crits.push_back(critical_value(nulls[s].null.values, a));
            ref_criticals.push_back(std::move(crits));
        }
    }

    for (std::size_t j = 0; j < null_sections.size(); ++j) {
        const std::string& sec = null_sections[j];
        NullModelCtx ctx;
        ctx.label = cfg.get_or(sec + ".label", sec);
        ctx.basis_kind = cfg.get_or(sec + ".basis", rs.basis_kind);
        ctx.proto = model_from_config(cfg, sec + ".model");
        ctx.fit = fitter_from_config(cfg, sec + ".model", ctx.proto);
        if (ctx.basis_kind == "k2") {
            ctx.criticals = ref_criticals;
        } else {
            const ModelPtr fitted = ctx.fit(calib);
            BasisPtr basis = legendre_composed_basis(fitted, rs.basis_m, rule_for(rs, fitted));
            NullRequest req;
            req.stats = rs.stats;
            req.n = n;
            req.R = rs.replicates;
            req.seed = derive_seed(rs.seed, 0xA110 + j);
            req.threads = rs.threads;
            req.cache_dir = rs.cache_dir;
            req.method = "projected";
            req.model = fitted;
            req.basis = basis;
            const auto nulls = obtain_null(req);
            for (std::size_t s = 0; s < rs.stats.size(); ++s) {
                std::vector<double> crits;
                for (double a : rs.alphas)
                    crits.push_back(critical_value(nulls[s].null.values, a));
                ctx.criticals.push_back(std::move(crits));
            }
        }
        ctxs.push_back(std::move(ctx));
    }

    // Rejection counts [model][stat][alpha].
    const std::size_t nstats = rs.stats.size(), nalpha = rs.alphas.size();
    std::vector<std::vector<std::vector<int>>> hits(
        ctxs.size(), std::vector<std::vector<int>>(nstats, std::vector<int>(nalpha, 0)));
    std::vector<int> used(ctxs.size(), 0);
    std::mutex merge_mu;

    const std::uint64_t data_seed = derive_seed(rs.seed, 0xD475);
    const int nthreads = std::max(1, rs.threads);
    const auto worker = [&](int begin, int end) {
        auto local_hits = hits;  // zero-initialized copy shape
        for (auto& a : local_hits)
            for (auto& b : a) std::fill(b.begin(), b.end(), 0);
        std::vector<int> local_used(ctxs.size(), 0);
        std::vector<double> data(static_cast<std::size_t>(n));
        for (int t = begin; t < end; ++t) {
            RngStream rng(data_seed, static_cast<std::uint64_t>(t));
            truth->sample_n(rng, data);
            ModelPtr ref_fitted;
            bool ref_ok = true;
            if (any_k2) {
                try {
                    ref_fitted = ref_fit(data);
                } catch (const numeric_error&) {
                    ref_ok = false;
                }
            }
            for (std::size_t jm = 0; jm < ctxs.size(); ++jm) {
                const NullModelCtx& ctx = ctxs[jm];
                try {
                    if (ctx.basis_kind == "k2" && !ref_ok) continue;
                    const ModelPtr fitted = ctx.fit(data);
                    BasisPtr basis;
                    if (ctx.basis_kind == "k2")
                        basis = k2_basis(fitted, ref_fitted, rs.basis_m,
                                         rule_for(rs, fitted, ref_fitted));
                    else
                        basis = legendre_composed_basis(fitted, rs.basis_m, rule_for(rs, fitted));
                    const std::vector<double> v = empirical_process_all(*basis, data);
                    ++local_used[jm];
                    for (std::size_t s = 0; s < nstats; ++s) {
                        const StatConfig& sc = rs.stats[s];
                        const double obs =
                            evaluate_statistic(sc, {v.data(), static_cast<std::size_t>(sc.m)},
                                               basis->gram())
                                .value;
                        for (std::size_t a = 0; a < nalpha; ++a)
                            if (obs >= ctx.criticals[s][a]) ++local_hits[jm][s][a];
                    }
                } catch (const numeric_error&) {
                    // dataset skipped for this model
                }
            }
        }
        std::lock_guard<std::mutex> lock(merge_mu);
        for (std::size_t jm = 0; jm < ctxs.size(); ++jm) {
            used[jm] += local_used[jm];
            for (std::size_t s = 0; s < nstats; ++s)
                for (std::size_t a = 0; a < nalpha; ++a) hits[jm][s][a] += local_hits[jm][s][a];
        }
    };

    if (nthreads == 1) {
        worker(0, datasets);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (datasets + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t) {
            const int begin = t * chunk, end = std::min(datasets, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(worker, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    std::vector<PowerRow> rows;
    for (std::size_t jm = 0; jm < ctxs.size(); ++jm) {
        if (used[jm] < datasets - datasets / 100)
            throw integrity_error("more than 1% of power-study datasets failed to fit for " +
                                  ctxs[jm].label);
        for (std::size_t s = 0; s < nstats; ++s)
            for (std::size_t a = 0; a < nalpha; ++a) {
                PowerRow row;
                row.model_label = ctxs[jm].label;
                row.basis = ctxs[jm].basis_kind;
                row.stat = rs.stats[s].descriptor();
                row.alpha = rs.alphas[a];
                row.datasets = used[jm];
                row.power = static_cast<double>(hits[jm][s][a]) / used[jm];
                row.std_error = std::sqrt(row.power * (1.0 - row.power) / used[jm]);
                rows.push_back(std::move(row));
            }
    }
    return rows;
}

void write_power_csv(const std::filesystem::path& path, std::span<const PowerRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open CSV for writing: " + path.string());
    out << "model,basis,statistic,alpha,power,std_error,datasets\n";
    char buf[256];
    for (const PowerRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%g,%.6f,%.6f,%d\n", r.model_label.c_str(),
                      r.basis.c_str(), r.stat.c_str(), r.alpha, r.power, r.std_error, r.datasets);
        out << buf;
    }
}

K2CheckOutcome run_k2_check(const KeyValueConfig& cfg) {
    const RunSettings rs = run_settings_from_config(cfg);
    const ModelPtr target = model_from_config(cfg, "model");
    const ModelPtr reference = model_from_config(cfg, "reference");
    const auto basis =
        k2_basis_full(target, reference, rs.basis_m, rule_for(rs, target, reference));
    K2CheckOutcome out;
    out.diagnostics = basis->diagnostics();
    out.threshold = cfg.get_double_or("k2.residual_threshold", 1e-7);
    out.pass = out.diagnostics.max_residual() < out.threshold;
    return out;
}

std::vector<QqRow> qq_pairs(const NullDistribution& a, const NullDistribution& b, int levels) {
    if (a.values.empty() || b.values.empty()) throw numeric_error("empty null distribution");
    std::vector<QqRow> rows;
    rows.reserve(static_cast<std::size_t>(levels));
    for (int i = 1; i <= levels; ++i) {
        const double q = static_cast<double>(i) / (levels + 1);
        rows.push_back({q, empirical_quantile(a.values, q), empirical_quantile(b.values, q)});
    }
    return rows;
}

void write_qq_csv(const std::filesystem::path& path, std::span<const QqRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open CSV for writing: " + path.string());
    out << "level,value_a,value_b\n";
    char buf[128];
    for (const QqRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.17g,%.17g\n", r.level, r.a, r.b);
        out << buf;
    }
}

}  // namespace smoothtest
