#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "smoothtest/numerics.hpp"
#include "smoothtest/rng.hpp"

namespace smoothtest {

struct Interval {
    double lo;
    double hi;
};

// Role of each free parameter, used for default fit boxes and weight
// handling.
enum class ParamRole { weight, location, scale, other };

// A univariate parametric model: density, CDF, quantile, sampler, score and
// free-parameter vector. Implementations are immutable; refitting produces a
// new instance via with_params().
class Model {
public:
    virtual ~Model() = default;

    virtual std::string family() const = 0;
    virtual Interval support() const = 0;

    // Finite interval used for quadrature; equals support() unless the
    // support is unbounded, in which case the tails beyond CDF mass 1e-12
    // are dropped for integration only.
    virtual Interval quad_interval() const { return support(); }

    // Interior points where the density is not smooth (quadrature panel
    // edges snap to these).
    virtual std::vector<double> quad_breakpoints() const { return {}; }

    virtual int param_dim() const = 0;
    virtual std::vector<double> params() const = 0;
    virtual std::shared_ptr<Model> with_params(std::span<const double> p) const = 0;

    // Fixed constants that define the family member but are not free
    // parameters (frozen locations/scales, fixed weights, ...); folded into
    // hash() so distinct frozen shapes get distinct identities.
    virtual std::vector<double> shape_constants() const { return {}; }

    virtual double pdf(double x) const = 0;
    virtual double log_pdf(double x) const;
    virtual double cdf(double x) const = 0;
    virtual double quantile(double u) const;  // default: bisection on cdf
    virtual double sample(RngStream& rng) const;  // default: inverse CDF

    // Score d/dparam ln pdf(x); out.size() == param_dim().
    virtual void score(double x, std::span<double> out) const;

    std::vector<double> score_vec(double x) const;
    bool in_support(double x) const;

    // Deterministic starting point for numerical fits; defaults to the
    // current parameter values, moment-based for the concrete families.
    virtual std::vector<double> init_from_data(std::span<const double> data) const;

    virtual std::vector<ParamRole> param_roles() const {
        return std::vector<ParamRole>(param_dim(), ParamRole::other);
    }

    // Stable identity of (family, shape constants, params, support) for
    // cache keys.
    virtual std::uint64_t hash() const;

    void sample_n(RngStream& rng, std::span<double> out) const;

protected:
    // Central finite differences of log_pdf, relative step 1e-6.
    void score_fd(double x, std::span<double> out) const;
};

using ModelPtr = std::shared_ptr<const Model>;

// --- families ---------------------------------------------------------

ModelPtr uniform_model(double lo, double hi);

// Normal(mu, sigma) truncated to [lo, hi]; (mu, sigma) free when
// free_params is set, otherwise the model contributes no parameters.
ModelPtr trunc_normal_model(double mu, double sigma, double lo, double hi,
                            bool free_params = false);

// Laplace(mu, scale b) truncated to [lo, hi]; parameters fixed.
ModelPtr trunc_laplace_model(double mu, double b, double lo, double hi);

// Asymmetric Laplace with fixed location theta and scale sigma, free
// asymmetry beta.
ModelPtr asym_laplace_model(double theta, double sigma, double beta);

// Convex combination of component models on a shared support. When
// free_weights is set, the first (c-1) weights are free parameters and the
// last weight is 1 minus their sum; otherwise `weights` is fixed. Component
// free parameters (if any) follow the weight parameters in the joint vector.
ModelPtr mixture_model(std::vector<ModelPtr> components, std::vector<double> weights,
                       bool free_weights = false);

// Spectral line shape: normal(mu, sigma) blurred by a heavy-tailed kernel
// (1 + (d/scale)^2)^(-power), restricted and normalized to [lo, hi]. The
// blur integral uses a fixed 201-node Gauss-Legendre rule over mu +- 8 sigma.
// power must be a half-integer > 0.5 so the kernel CDF stays closed-form.
ModelPtr convolved_line_model(double mu, double sigma, double scale, double power,
                              double lo, double hi);

// --- model-measure utilities ------------------------------------------

// sum_i w_i f(x_i) g(x_i) density(x_i): the L2(model) inner product.
double weighted_inner_product(const std::function<double(double)>& f,
                              const std::function<double(double)>& g,
                              const std::function<double(double)>& density,
                              const QuadratureRule& rule);

double inner_product(const std::function<double(double)>& f,
                     const std::function<double(double)>& g, const Model& model,
                     const QuadratureRule& rule);

// Default composite rule for a model: equal-width panels over the (possibly
// truncated) support for bounded models, CDF-equidistributed panel edges for
// unbounded ones; edges always include the model's breakpoints.
QuadratureRule default_rule(const Model& model, int panels = 32, int nodes_per_panel = 16);

// Shared rule for several models on a common support (panel edges include
// every model's breakpoints).
QuadratureRule shared_rule(std::span<const ModelPtr> models, int panels = 32,
                           int nodes_per_panel = 16);

// Fisher information as the outer product <u^T, u^T> under the model.
SymMatrix fisher_information(const Model& model, const QuadratureRule& rule);

// Orthonormalized score b = Gamma^(-1/2) u; Gram matrix of b equals the
// identity under the model measure.
class OrthonormalScore {
public:
    OrthonormalScore() = default;
    OrthonormalScore(ModelPtr model, const QuadratureRule& rule);

    int dim() const { return p_; }
    void eval(double x, std::span<double> out) const;
    std::vector<double> eval_vec(double x) const;
    const SymMatrix& inverse_sqrt_information() const { return isqrt_; }

private:
    ModelPtr model_;
    SymMatrix isqrt_;
    int p_ = 0;
};

// Influence function psi of a locally asymptotically linear estimator:
// psi = Gamma^{-1} u for maximum likelihood, psi = <phi^T,u^T>^{-1} phi for
// the method of moments (phi_k(x) = x^k - mu_k).
struct EstimatorSpec {
    enum class Kind { mle, moments, closed_form };
    Kind kind = Kind::mle;
    int p = 0;
    std::function<void(double, std::span<double>)> psi;

    std::vector<double> psi_vec(double x) const {
        std::vector<double> out(p);
        psi(x, out);
        return out;
    }
};

EstimatorSpec psi_for(ModelPtr model, EstimatorSpec::Kind kind, const QuadratureRule& rule);

}  // namespace smoothtest
