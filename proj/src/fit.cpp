#include "smoothtest/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace smoothtest {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double asym_laplace_score_equation(double beta, std::span<const double> data, double theta,
                                   double sigma) {
    const double n = static_cast<double>(data.size());
    double neg = 0.0, pos = 0.0;
    for (double x : data) {
        const double d = x - theta;
        if (d < 0.0)
            neg -= d;
        else
            pos += d;
    }
    return 1.0 - 2.0 * beta * beta / (1.0 + beta * beta) +
           std::numbers::sqrt2 / sigma * (neg / (n * beta) - beta * pos / n);
}

double fit_asym_laplace(std::span<const double> data, double theta, double sigma) {
    if (data.empty()) throw estimation_failure_error("cannot fit asymmetry on empty data");
    for (double x : data)
        if (!std::isfinite(x)) throw estimation_failure_error("non-finite observation in fit");
    double lo = 1e-6, hi = 1e6;
    double flo = asym_laplace_score_equation(lo, data, theta, sigma);
    double fhi = asym_laplace_score_equation(hi, data, theta, sigma);
    if (!(flo > 0.0) || !(fhi < 0.0))
        throw estimation_failure_error("no sign change on the (1e-6, 1e6) bracket");
    // Bisection in log space down to a tight bracket, then Newton steps on
    // the equation itself.
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        const double fm = asym_laplace_score_equation(mid, data, theta, sigma);
        if (fm > 0.0)
            lo = mid;
        else
            hi = mid;
        if (hi / lo < 1.0 + 1e-12) break;
    }
    double beta = 0.5 * (lo + hi);
    for (int it = 0; it < 60; ++it) {
        const double f = asym_laplace_score_equation(beta, data, theta, sigma);
        if (std::abs(f) < 1e-13) break;
        const double h = 1e-7 * beta;
        const double fp = (asym_laplace_score_equation(beta + h, data, theta, sigma) -
                           asym_laplace_score_equation(beta - h, data, theta, sigma)) /
                          (2.0 * h);
        if (fp == 0.0) break;
        const double next = beta - f / fp;
        if (!(next > lo && next < hi)) break;
        beta = next;
    }
    if (std::abs(asym_laplace_score_equation(beta, data, theta, sigma)) > 1e-10)
        throw estimation_failure_error("asymmetry estimate did not reach residual 1e-10");
    return beta;
}

namespace {

// Clamps into the box and, for the leading simplex_head weight parameters,
// back into the simplex.
void project_feasible(std::vector<double>& x, const FitOptions& opt) {
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = std::min(std::max(x[i], opt.lower[i]), opt.upper[i]);
    if (opt.simplex_head > 1) {
        double head = 0.0;
        for (int i = 0; i < opt.simplex_head; ++i) head += x[i];
        const double cap = 1.0 - opt.simplex_margin;
        if (head > cap) {
            const double f = cap / head;
            for (int i = 0; i < opt.simplex_head; ++i)
                x[i] = std::max(x[i] * f, opt.lower[i]);
        }
    } else if (opt.simplex_head == 1) {
        x[0] = std::min(x[0], 1.0 - opt.simplex_margin);
    }
}

double mean_loglik(const Model& m, std::span<const double> data) {
    double acc = 0.0;
    for (double x : data) {
        const double l = m.log_pdf(x);
        if (!std::isfinite(l)) return kNegInf;
        acc += l;
    }
    return acc / static_cast<double>(data.size());
}

}  // namespace

FitResult fit_mle(const ModelPtr& prototype, std::span<const double> data,
                  std::span<const double> init, const FitOptions& options) {
    const int p = prototype->param_dim();
    if (p == 0) {
        FitResult r;
        r.params = {};
        r.model = prototype;
        r.loglik = mean_loglik(*prototype, data);
        r.converged = true;
        return r;
    }
    if (static_cast<int>(options.lower.size()) != p || static_cast<int>(options.upper.size()) != p)
        throw parameter_error("fit bounds must match the parameter dimension");
    if (data.empty()) throw estimation_failure_error("cannot fit on empty data");

    int evals = 0;
    const auto objective = [&](std::vector<double> x) -> double {
        project_feasible(x, options);
        ++evals;
        return mean_loglik(*prototype->with_params(x), data);
    };

    std::vector<double> start(init.begin(), init.end());
    project_feasible(start, options);
    if (objective(start) == kNegInf)
        throw estimation_failure_error("log-likelihood is not finite at the starting point");

    // Nelder-Mead (maximization) with feasibility projection on every probe.
    const double alpha = 1.0, gamma = 2.0, rho = 0.5, shrink = 0.5;
    std::vector<std::vector<double>> simplex;
    std::vector<double> fvals;
    simplex.push_back(start);
    fvals.push_back(objective(start));
    for (int i = 0; i < p; ++i) {
        std::vector<double> v = start;
        const double step = 0.1 * std::max(0.05, std::abs(start[i]));
        v[i] += (v[i] + step <= options.upper[i]) ? step : -step;
        project_feasible(v, options);
        simplex.push_back(v);
        fvals.push_back(objective(v));
    }

    int iterations = 0;
    while (iterations < options.max_iterations) {
        ++iterations;
        std::vector<int> order(simplex.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fvals[a] > fvals[b]; });
        std::vector<std::vector<double>> s2;
        std::vector<double> f2;
        for (int idx : order) {
            s2.push_back(simplex[idx]);
            f2.push_back(fvals[idx]);
        }
        simplex.swap(s2);
        fvals.swap(f2);

        const double spread = std::abs(fvals.front() - fvals.back());
        if (spread < 1e-12 * (1.0 + std::abs(fvals.front()))) break;

        std::vector<double> centroid(p, 0.0);
        for (int i = 0; i < p; ++i) {
            for (int j = 0; j < p; ++j) centroid[j] += simplex[i][j];
        }
        for (double& c : centroid) c /= p;

        const std::vector<double>& worst = simplex.back();
        std::vector<double> refl(p);
        for (int j = 0; j < p; ++j) refl[j] = centroid[j] + alpha * (centroid[j] - worst[j]);
        project_feasible(refl, options);
        const double frefl = objective(refl);

        if (frefl > fvals.front()) {
            std::vector<double> exp_(p);
            for (int j = 0; j < p; ++j) exp_[j] = centroid[j] + gamma * (refl[j] - centroid[j]);
            project_feasible(exp_, options);
            const double fexp = objective(exp_);
            if (fexp > frefl) {
                simplex.back() = exp_;
                fvals.back() = fexp;
            } else {
                simplex.back() = refl;
                fvals.back() = frefl;
            }
        } else if (frefl > fvals[fvals.size() - 2]) {
            simplex.back() = refl;
            fvals.back() = frefl;
        } else {
            std::vector<double> con(p);
            for (int j = 0; j < p; ++j) con[j] = centroid[j] + rho * (worst[j] - centroid[j]);
            project_feasible(con, options);
            const double fcon = objective(con);
            if (fcon > fvals.back()) {
                simplex.back() = con;
                fvals.back() = fcon;
            } else {
                for (std::size_t i = 1; i < simplex.size(); ++i) {
                    for (int j = 0; j < p; ++j)
                        simplex[i][j] = simplex[0][j] + shrink * (simplex[i][j] - simplex[0][j]);
                    project_feasible(simplex[i], options);
                    fvals[i] = objective(simplex[i]);
                }
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < fvals.size(); ++i)
        if (fvals[i] > fvals[best]) best = i;
    std::vector<double> x = simplex[best];
    double fx = fvals[best];

    // Projected-gradient polish with the analytic score; gradient of the
    // mean log-likelihood is the mean score.
    const auto gradient = [&](const std::vector<double>& at) {
        const auto m = prototype->with_params(at);
        std::vector<double> g(p, 0.0), s(p);
        for (double xi : data) {
            m->score(xi, s);
            for (int k = 0; k < p; ++k) g[k] += s[k];
        }
        for (double& v : g) v /= static_cast<double>(data.size());
        return g;
    };
    const auto projected_norm = [&](const std::vector<double>& at, std::vector<double> g) {
        // At an active simplex face, drop the ascent component that would
        // push the weight sum further out.
        if (options.simplex_head > 1) {
            double head = 0.0;
            for (int i = 0; i < options.simplex_head; ++i) head += at[i];
            if (head >= 1.0 - options.simplex_margin - 1e-12) {
                double avg = 0.0;
                for (int i = 0; i < options.simplex_head; ++i) avg += g[i];
                avg /= options.simplex_head;
                if (avg > 0.0)
                    for (int i = 0; i < options.simplex_head; ++i) g[i] -= avg;
            }
        }
        double acc = 0.0;
        for (int k = 0; k < p; ++k) {
            double gk = g[k];
            if (at[k] >= options.upper[k] - 1e-12 && gk > 0.0) gk = 0.0;
            if (at[k] <= options.lower[k] + 1e-12 && gk < 0.0) gk = 0.0;
            acc += gk * gk;
        }
        return std::sqrt(acc);
    };

    bool converged = false;
    double step = 0.1;
    for (int it = 0; it < 400; ++it) {
        const std::vector<double> g = gradient(x);
        if (projected_norm(x, g) < options.gradient_tol) {
            converged = true;
            break;
        }
        bool improved = false;
        while (step > 1e-14) {
            std::vector<double> trial = x;
            for (int k = 0; k < p; ++k) trial[k] += step * g[k];
            project_feasible(trial, options);
            const double ft = objective(trial);
            if (ft > fx) {
                x = trial;
                fx = ft;
                improved = true;
                step *= 1.6;
                break;
            }
            step *= 0.5;
        }
        if (!improved) {
            converged = projected_norm(x, gradient(x)) < options.gradient_tol;
            break;
        }
    }

    if (iterations >= options.max_iterations && !converged)
        throw convergence_error("maximum fit iterations reached", x);

    FitResult r;
    r.params = x;
    r.loglik = fx;
    r.converged = converged;
    r.evaluations = evals;
    r.model = prototype->with_params(x);
    return r;
}

std::vector<double> heuristic_init(const Model& prototype, std::span<const double> data) {
    return prototype.init_from_data(data);
}

Fitter make_mle_fitter(ModelPtr prototype, FitOptions options) {
    return [prototype, options](std::span<const double> data) -> ModelPtr {
        const std::vector<double> init = heuristic_init(*prototype, data);
        const FitResult r = fit_mle(prototype, data, init, options);
        return r.model;
    };
}

Fitter make_asym_laplace_fitter(double theta, double sigma) {
    return [theta, sigma](std::span<const double> data) -> ModelPtr {
        const double beta = fit_asym_laplace(data, theta, sigma);
        return asym_laplace_model(theta, sigma, beta);
    };
}

}  // namespace smoothtest
