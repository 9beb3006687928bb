#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "smoothtest/models.hpp"

namespace smoothtest {

// Left side of the asymmetric-Laplace likelihood equation in beta:
//   1 - 2 beta^2/(1+beta^2)
//     + (sqrt2/sigma) [ (1/(n beta)) sum (x_j-theta)^-  -  (beta/n) sum (x_j-theta)^+ ].
double asym_laplace_score_equation(double beta, std::span<const double> data, double theta,
                                   double sigma);

// Maximum-likelihood asymmetry estimate: the root of the equation above,
// bracketed on (1e-6, 1e6) and refined by bisection/Newton until the
// residual falls below 1e-10.
double fit_asym_laplace(std::span<const double> data, double theta, double sigma);

struct FitOptions {
    std::vector<double> lower;       // box bounds, one per free parameter
    std::vector<double> upper;
    int simplex_head = 0;            // first k params are mixture weights: sum <= 1 - margin
    double simplex_margin = 1e-6;
    int max_iterations = 2000;
    double gradient_tol = 1e-7;      // projected-gradient norm of mean log-likelihood
};

struct FitResult {
    std::vector<double> params;
    double loglik = 0.0;             // mean log-likelihood at the optimum
    bool converged = false;
    int evaluations = 0;
    ModelPtr model;                  // prototype rebound at `params`
};

// Numerical maximum likelihood for a model prototype: Nelder-Mead with box
// clamping, then projected-gradient polish using the model's analytic score.
FitResult fit_mle(const ModelPtr& prototype, std::span<const double> data,
                  std::span<const double> init, const FitOptions& options);

// Deterministic initialization for mixture models: free weights from the
// data mass within one scale of each component's location, free component
// (mu, sigma) from sample moments.
std::vector<double> heuristic_init(const Model& prototype, std::span<const double> data);

// data -> refitted model; used by the resampling engines.
using Fitter = std::function<ModelPtr(std::span<const double>)>;

// Fitter for any model built from mixture/truncated-normal parts: heuristic
// init + fit_mle with the given bounds.
Fitter make_mle_fitter(ModelPtr prototype, FitOptions options);

// Fitter for the asymmetric Laplace (scalar root solve).
Fitter make_asym_laplace_fitter(double theta, double sigma);

}  // namespace smoothtest
