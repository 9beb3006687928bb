#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>

#include "smoothtest/models.hpp"

namespace smoothtest {

// M basis functions over a model together with their score-residualized
// versions h~_j = h_j - b^T <b^T, h_j>. Immutable after construction;
// evaluation is reentrant.
class BasisSet {
public:
    virtual ~BasisSet() = default;

    virtual const Model& model() const = 0;
    virtual ModelPtr model_ptr() const = 0;
    virtual int size() const = 0;
    virtual std::string kind() const = 0;

    // Raw h_j and residual h~_j, 1-based j.
    virtual double eval(int j, double x) const = 0;
    virtual double eval_residual(int j, double x) const = 0;

    // All residuals at one point (out.size() == size()); the hot path for
    // the resampling engines.
    virtual void eval_residual_all(double x, std::span<double> out) const;

    // Gram matrix <h~_i, h~_j> under the model, computed by quadrature.
    virtual const SymMatrix& gram() const = 0;

    // <h~_j, 1> under the model (zero in exact arithmetic; always carried).
    virtual const std::vector<double>& residual_means() const = 0;

    virtual std::uint64_t hash() const = 0;
};

using BasisPtr = std::shared_ptr<const BasisSet>;

// model -> basis at that model's parameters; used when an engine rebuilds
// the basis after a refit.
using BasisBuilder = std::function<BasisPtr(const ModelPtr&)>;

// Compositions of the normalized shifted Legendre polynomials with the model
// CDF, residualized against the orthonormalized score.
BasisPtr legendre_composed_basis(ModelPtr model, int m, const QuadratureRule& rule);

// v_{G,n}(h~_j) = n^{-1/2} sum_i h~_j(X_i) - n^{1/2} <h~_j, 1>.
double empirical_process(const BasisSet& basis, int j, std::span<const double> data);

// All M components in one pass over the data.
std::vector<double> empirical_process_all(const BasisSet& basis, std::span<const double> data);

// Function-indexed version for arbitrary h in L2(G).
double empirical_process(const std::function<double(double)>& h, const Model& model,
                         std::span<const double> data, const QuadratureRule& rule);

// theta_hat_j = n^{-1} sum_i h_j(X_i): estimated expansion coefficients,
// reported as diagnostics.
std::vector<double> estimate_coefficients(const BasisSet& basis, std::span<const double> data);

// Pi h = h - psi^T <u^T, h>: the projection induced by parameter estimation.
std::function<double(double)> projection_pi(std::function<double(double)> h, ModelPtr model,
                                            const EstimatorSpec& psi, const QuadratureRule& rule);

}  // namespace smoothtest
