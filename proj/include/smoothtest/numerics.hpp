#pragma once

#include <functional>
#include <span>
#include <vector>

#include "smoothtest/errors.hpp"

namespace smoothtest {

// Composite quadrature rule over a finite interval. Nodes lie strictly inside
// (lo, hi) and weights are positive; sum of weights equals hi - lo.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    double lo = 0.0;
    double hi = 0.0;

    std::size_t size() const { return nodes.size(); }

    // Integrates f over (lo, hi).
    double integrate(const std::function<double(double)>& f) const;
};

// Composite Gauss-Legendre rule: `panels` equal-width panels with
// `nodes_per_panel` nodes each; exact through degree 2*nodes_per_panel - 1
// on every panel.
QuadratureRule gauss_legendre_rule(int panels, int nodes_per_panel, double lo, double hi);

// Same but with panel edges placed explicitly. `edges` must be strictly
// increasing; the first and last entries are the interval bounds.
QuadratureRule gauss_legendre_rule_edges(std::span<const double> edges, int nodes_per_panel);

// Splits [lo, hi] into `panels` panels whose edges include every breakpoint,
// then applies Gauss-Legendre on each. Used so that densities with kinks
// (Laplace locations and the like) keep spectral quadrature accuracy.
QuadratureRule gauss_legendre_rule_with_breakpoints(int panels, int nodes_per_panel,
                                                    double lo, double hi,
                                                    std::span<const double> breakpoints);

// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
void gauss_legendre_base(int n, std::vector<double>& nodes, std::vector<double>& weights);

// Normalized shifted Legendre polynomial h_j on [0,1]:
// int_0^1 h_i h_j du = 1{i=j}, h_0 = 1, h_j(u) = sqrt(2j+1) P_j(2u-1).
double legendre_shifted_normalized(int j, double u);

// Evaluates h_1(u) .. h_m(u) in one recurrence pass (out.size() == m).
void legendre_shifted_all(int m, double u, std::span<double> out);

// Dense symmetric matrix, row-major with full storage.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(int dim) : dim_(dim), a_(static_cast<std::size_t>(dim) * dim, 0.0) {}
    static SymMatrix identity(int dim);

    int dim() const { return dim_; }
    double& at(int i, int j) { return a_[static_cast<std::size_t>(i) * dim_ + j]; }
    double at(int i, int j) const { return a_[static_cast<std::size_t>(i) * dim_ + j]; }

    // Enforces exact symmetry by averaging, erroring if the asymmetry
    // exceeds `tol` in absolute value.
    void symmetrize(double tol = 1e-12);

    double max_asymmetry() const;

    SymMatrix leading_block(int m) const;

    std::vector<double> mul(std::span<const double> v) const;
    SymMatrix mul(const SymMatrix& other) const;

private:
    int dim_ = 0;
    std::vector<double> a_;
};

struct EigenDecomposition {
    std::vector<double> values;   // ascending
    SymMatrix vectors;            // columns are eigenvectors
};

// Cyclic Jacobi eigensolver; off-diagonal Frobenius threshold 1e-14 relative
// to the matrix scale. Dimensions in this library are tiny (p <= ~20).
EigenDecomposition jacobi_eigen(const SymMatrix& m);

// Principal inverse square root S of an SPD matrix: S m S = I, S SPD.
// Throws not_positive_definite_error when an eigenvalue falls at or below
// 1e-12 times the largest one.
SymMatrix principal_inverse_sqrt(const SymMatrix& m);

// Cholesky factorization of an SPD matrix (lower triangular factor, packed
// into a SymMatrix's lower part). Throws not_positive_definite_error naming
// the failing leading minor.
SymMatrix cholesky(const SymMatrix& m);

// Solves m x = v for SPD m via Cholesky.
std::vector<double> solve_spd(const SymMatrix& m, std::span<const double> v);

// Solves a general small square system a x = b by Gaussian elimination with
// partial pivoting (row-major a, dim x dim).
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, int dim);

// Standard normal CDF and its inverse (Wichura's AS 241, double precision).
double norm_cdf(double x);
double norm_pdf(double x);
double norm_quantile(double p);

}  // namespace smoothtest
