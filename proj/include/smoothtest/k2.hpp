#pragma once

#include <map>

#include "smoothtest/basis.hpp"
#include "smoothtest/rng.hpp"

namespace smoothtest {

// Pointwise square root of the density ratio sqrt(f_reference / g_target):
// the inner-product-preserving map from L2(F) into L2(G). Throws
// support_mismatch_error if the target density vanishes on a rule node.
std::function<double(double)> isometry_l(ModelPtr target, ModelPtr reference,
                                         const QuadratureRule& rule);

// Reflection swapping l and 1:  K phi = phi - (l-1) <l-1, phi> / (1 - <l,1>).
// Returns phi unchanged when 1 - <l,1> falls below the degeneracy threshold.
std::function<double(double)> reflect_K(std::function<double(double)> phi,
                                        std::function<double(double)> l, ModelPtr target,
                                        const QuadratureRule& rule);

// Reflection swapping two unit functions b and c under the target measure:
// U phi = phi - (b-c) <b-c, phi> / (1 - <b,c>).
std::function<double(double)> reflect_swap(std::function<double(double)> phi,
                                           std::function<double(double)> b,
                                           std::function<double(double)> c, ModelPtr model,
                                           const QuadratureRule& rule);

// Extends an orthonormal mean-zero score set of size q to size p by
// Gram-Schmidt of donor basis functions (indices above m_donor_start in the
// reference Legendre-composed family) under the reference measure. Throws
// span_degeneracy_error when the donors cannot supply p - q independent
// directions.
std::vector<std::function<double(double)>> extend_score(ModelPtr reference, int p,
                                                        int m_donor_start,
                                                        const QuadratureRule& rule);

// One rank-one reflection record of the chain realizing U_p.
struct ReflectionStep {
    std::vector<double> b;  // coefficients of b_k over the internal dictionary
    std::vector<double> c;  // coefficients of c~_k
    double denom = 1.0;     // 1 - <b_k, c~_k>
    bool identity = false;  // denominator below the degeneracy threshold
};

// Max residuals of every operator identity, for k2-check and the acceptance
// suite. Grid norms are sup-norms over the quadrature nodes; scalar entries
// are absolute deviations of inner products.
struct K2Diagnostics {
    double k_maps_l_to_one = 0.0;       // ||K l - 1||_grid
    double k_maps_one_to_l = 0.0;       // ||K 1 - l||_grid
    double k_fixes_orthogonal = 0.0;    // ||K phi - phi||_grid, phi _|_ span(1, l)
    double k_involution = 0.0;          // ||K K phi - phi||_grid
    double k_unitary = 0.0;             // |<K phi, K phi'> - <phi, phi'>|
    double k_self_adjoint = 0.0;        // |<K phi, phi'> - <phi, K phi'>|
    double c_gram = 0.0;                // ||<c_i,c_j> - I||_max
    double c_mean = 0.0;                // max |<c_k, 1>|
    double ctilde_mean = 0.0;           // max |<c~_k, 1>|
    double ctilde_orth = 0.0;           // max |<c~_k, b_j>|, j < k
    double step_involution = 0.0;       // ||U_k U_k phi - phi||_grid
    double up_maps_c_to_b = 0.0;        // max_k ||U_p c_k - b_k||_grid
    double up_fixes_one = 0.0;          // ||U_p 1 - 1||_grid
    double up_unitary = 0.0;            // |<U_p phi, U_p phi'> - <phi, phi'>|
    double basis_gram = 0.0;            // ||<h_i,h_j> - I||_max
    double score_transfer = 0.0;        // max |<b_k,h_j>_G - <a_k,phi_j>_F|
    double residual_mean = 0.0;         // max |<h~_j, 1>_G|
    double covariance_transfer = 0.0;   // max |<h~_i,h~_j>_G - <phi~_i,phi~_j>_F|
    double residual_image = 0.0;        // ||U_p K l phi~_j - (h_j - b^T<b^T,h_j>)||_grid

    double max_residual() const;
    std::map<std::string, double> to_map() const;
};

// Orthonormal basis for L2(G) built from a reference basis by the unitary
// composition U_p K (l .): every function is a closed-form combination of
// {1, l, l phi_j, l a_k, b_k} with scalars cached at construction, so
// evaluation at arbitrary points is exact and cheap.
class K2Basis final : public BasisSet {
public:
    K2Basis(ModelPtr target, ModelPtr reference, int m, const QuadratureRule& rule);

    // BasisSet interface (target-side functions).
    const Model& model() const override { return *target_; }
    ModelPtr model_ptr() const override { return target_; }
    int size() const override { return m_; }
    std::string kind() const override { return "k2"; }
    double eval(int j, double x) const override;
    double eval_residual(int j, double x) const override;
    void eval_residual_all(double x, std::span<double> out) const override;
    const SymMatrix& gram() const override { return gram_; }
    const std::vector<double>& residual_means() const override { return means_; }
    std::uint64_t hash() const override;

    const Model& reference() const { return *reference_; }
    int target_dim() const { return p_; }
    int reference_dim() const { return q_; }

    // Individual construction pieces, mostly for tests and diagnostics.
    double eval_l(double x) const;
    double eval_b(int k, double x) const;           // 1-based
    double eval_a(int k, double x) const;           // includes extensions
    double eval_phi(int j, double x) const;
    double eval_phi_residual(int j, double x) const;
    double eval_c(int k, double x) const;
    double eval_c_tilde(int k, double x) const;

    const std::vector<ReflectionStep>& chain() const { return chain_; }
    bool k_is_identity() const { return k_identity_; }
    double bhattacharyya() const { return s_l_; }

    // Coefficient-space operator algebra over the internal dictionary.
    int dict_size() const { return ndict_; }
    double ip(std::span<const double> a, std::span<const double> b) const;
    std::vector<double> apply_K(std::vector<double> v) const;
    std::vector<double> apply_chain_step(int k, std::vector<double> v) const;  // 1-based
    std::vector<double> apply_Up(std::vector<double> v) const;
    double eval_coeffs(std::span<const double> coeffs, double x) const;
    double grid_sup_norm(std::span<const double> coeffs) const;
    std::vector<double> unit_dict_function(RngStream& rng) const;
    std::vector<double> coeffs_h(int j) const;
    std::vector<double> coeffs_h_residual(int j) const;
    std::vector<double> coeffs_b(int k) const;
    std::vector<double> coeffs_c(int k) const;
    std::vector<double> coeffs_one() const;
    std::vector<double> coeffs_l() const;

    // Reference-side Gram matrix <phi~_i, phi~_j>_F.
    const SymMatrix& reference_gram() const { return ref_gram_; }

    K2Diagnostics diagnostics() const;

private:
    void dict_values(double x, std::span<double> out) const;

    ModelPtr target_;
    ModelPtr reference_;
    int m_ = 0;       // number of test functions
    int p_ = 0;       // target parameter dimension
    int q_ = 0;       // reference parameter dimension
    int mdict_ = 0;   // reference basis functions carried (m_ + donors)
    int ndict_ = 0;   // 2 + mdict_ + q_ + p_

    OrthonormalScore target_score_;
    OrthonormalScore reference_score_;

    // a_k as combinations over the F-side primitives [1, phi_1.., s_1..q].
    std::vector<std::vector<double>> a_fcoef_;
    // l a_k over the dictionary.
    std::vector<std::vector<double>> a_dict_;
    std::vector<std::vector<double>> c_;       // c_k coefficients
    std::vector<ReflectionStep> chain_;
    std::vector<std::vector<double>> h_;       // h_j
    std::vector<std::vector<double>> ht_;      // h~_j
    std::vector<double> proj_a_;               // <a_k, phi_j>_F, m_ x p_

    std::vector<double> gd_;                   // dictionary Gram, ndict x ndict
    std::vector<double> grid_nodes_;
    std::vector<double> grid_dict_;            // dictionary values at nodes
    double s_l_ = 0.0;                         // <l, 1>_G
    bool k_identity_ = false;

    SymMatrix gram_;
    std::vector<double> means_;
    SymMatrix ref_gram_;
};

// Builds (or reuses) the K2 basis for a (target, reference, m) triple;
// results are memoized on the parameter hashes since bootstrap loops request
// the same basis many times.
BasisPtr k2_basis(ModelPtr target, ModelPtr reference, int m, const QuadratureRule& rule);
std::shared_ptr<const K2Basis> k2_basis_full(ModelPtr target, ModelPtr reference, int m,
                                             const QuadratureRule& rule);

}  // namespace smoothtest
