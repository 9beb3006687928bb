#include "smoothtest/k2.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <unordered_map>

namespace smoothtest {

namespace {

constexpr double kDegenerate = 1e-10;  // reflection-denominator threshold

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace

std::function<double(double)> isometry_l(ModelPtr target, ModelPtr reference,
                                         const QuadratureRule& rule) {
    for (double x : rule.nodes) {
        if (target->pdf(x) < 1e-300)
            throw support_mismatch_error("target density vanishes inside the reference support");
    }
    return [target, reference](double x) {
        const double g = target->pdf(x);
        if (g < 1e-300) throw evaluation_error("density ratio undefined: target density is zero");
        return std::sqrt(reference->pdf(x) / g);
    };
}

std::function<double(double)> reflect_K(std::function<double(double)> phi,
                                        std::function<double(double)> l, ModelPtr target,
                                        const QuadratureRule& rule) {
    const auto one = [](double) { return 1.0; };
    const double s = inner_product(l, one, *target, rule);
    if (1.0 - s < kDegenerate) return phi;
    const double coef =
        (inner_product(l, phi, *target, rule) - inner_product(phi, one, *target, rule)) /
        (1.0 - s);
    return [phi = std::move(phi), l = std::move(l), coef](double x) {
        return phi(x) - (l(x) - 1.0) * coef;
    };
}

std::function<double(double)> reflect_swap(std::function<double(double)> phi,
                                           std::function<double(double)> b,
                                           std::function<double(double)> c, ModelPtr model,
                                           const QuadratureRule& rule) {
    const double denom = 1.0 - inner_product(b, c, *model, rule);
    if (denom < kDegenerate) return phi;
    const double coef = (inner_product(b, phi, *model, rule) -
                         inner_product(c, phi, *model, rule)) /
                        denom;
    return [phi = std::move(phi), b = std::move(b), c = std::move(c), coef](double x) {
        return phi(x) - (b(x) - c(x)) * coef;
    };
}

std::vector<std::function<double(double)>> extend_score(ModelPtr reference, int p,
                                                        int m_donor_start,
                                                        const QuadratureRule& rule) {
    const int q = reference->param_dim();
    if (q > p) throw parameter_error("reference has more parameters than requested set size");
    if (q == p) return {};

    auto score = std::make_shared<OrthonormalScore>(reference, rule);
    // Primitives: [1, s_1..s_q, donors...]; donors are reference Legendre
    // compositions with indices above m_donor_start.
    const int max_donors = (p - q) + 6;
    const int nprim = 1 + q + max_donors;
    std::vector<std::function<double(double)>> prim;
    prim.emplace_back([](double) { return 1.0; });
    for (int k = 0; k < q; ++k)
        prim.emplace_back([score, k](double x) {
            double buf[16];
            score->eval(x, std::span<double>(buf, static_cast<std::size_t>(score->dim())));
            return buf[k];
        });
    for (int d = 0; d < max_donors; ++d) {
        const int j = m_donor_start + 1 + d;
        prim.emplace_back(
            [reference, j](double x) { return legendre_shifted_normalized(j, reference->cdf(x)); });
    }

    std::vector<double> gf(static_cast<std::size_t>(nprim) * nprim, 0.0);
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const double x = rule.nodes[i];
        const double wf = rule.weights[i] * reference->pdf(x);
        std::vector<double> v(nprim);
        for (int a = 0; a < nprim; ++a) v[a] = prim[a](x);
        for (int a = 0; a < nprim; ++a)
            for (int b = 0; b < nprim; ++b) gf[a * nprim + b] += wf * v[a] * v[b];
    }
    const auto ipf = [&](std::span<const double> a, std::span<const double> b) {
        double acc = 0.0;
        for (int i = 0; i < nprim; ++i) {
            double row = 0.0;
            for (int j = 0; j < nprim; ++j) row += gf[i * nprim + j] * b[j];
            acc += a[i] * row;
        }
        return acc;
    };

    std::vector<std::vector<double>> fixed;  // orthonormal set to project out
    for (int k = 0; k <= q; ++k) {
        std::vector<double> e(nprim, 0.0);
        e[k] = 1.0;
        fixed.push_back(e);
    }
    std::vector<std::vector<double>> accepted;
    for (int d = 0; d < max_donors && static_cast<int>(accepted.size()) < p - q; ++d) {
        std::vector<double> cand(nprim, 0.0);
        cand[1 + q + d] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& f : fixed) {
                const double proj = ipf(f, cand) / ipf(f, f);
                for (int i = 0; i < nprim; ++i) cand[i] -= proj * f[i];
            }
            for (const auto& f : accepted) {
                const double proj = ipf(f, cand);
                for (int i = 0; i < nprim; ++i) cand[i] -= proj * f[i];
            }
        }
        const double norm = std::sqrt(std::max(ipf(cand, cand), 0.0));
        if (norm < 1e-8) continue;  // donor inside the existing span
        for (double& c : cand) c /= norm;
        accepted.push_back(cand);
    }
    if (static_cast<int>(accepted.size()) < p - q)
        throw span_degeneracy_error("donor basis could not extend the score set");

    std::vector<std::function<double(double)>> out;
    for (const auto& coef : accepted) {
        out.emplace_back([prim, coef, nprim](double x) {
            double acc = 0.0;
            for (int i = 0; i < nprim; ++i)
                if (coef[i] != 0.0) acc += coef[i] * prim[i](x);
            return acc;
        });
    }
    return out;
}

double K2Diagnostics::max_residual() const {
    double m = 0.0;
    for (const auto& [name, v] : to_map()) m = std::max(m, v);
    return m;
}

std::map<std::string, double> K2Diagnostics::to_map() const {
    return {
        {"k_maps_l_to_one", k_maps_l_to_one},
        {"k_maps_one_to_l", k_maps_one_to_l},
        {"k_fixes_orthogonal", k_fixes_orthogonal},
        {"k_involution", k_involution},
        {"k_unitary", k_unitary},
        {"k_self_adjoint", k_self_adjoint},
        {"c_gram", c_gram},
        {"c_mean", c_mean},
        {"ctilde_mean", ctilde_mean},
        {"ctilde_orth", ctilde_orth},
        {"step_involution", step_involution},
        {"up_maps_c_to_b", up_maps_c_to_b},
        {"up_fixes_one", up_fixes_one},
        {"up_unitary", up_unitary},
        {"basis_gram", basis_gram},
        {"score_transfer", score_transfer},
        {"residual_mean", residual_mean},
        {"covariance_transfer", covariance_transfer},
        {"residual_image", residual_image},
    };
}

K2Basis::K2Basis(ModelPtr target, ModelPtr reference, int m, const QuadratureRule& rule)
    : target_(std::move(target)), reference_(std::move(reference)), m_(m) {
    if (m_ < 1) throw parameter_error("basis size must be >= 1");
    p_ = target_->param_dim();
    q_ = reference_->param_dim();
    if (q_ > p_)
        throw parameter_error("reference model must not have more free parameters than the target");

    const Interval ts = target_->quad_interval();
    const Interval rs = reference_->quad_interval();
    if (std::abs(ts.lo - rs.lo) > 1e-9 || std::abs(ts.hi - rs.hi) > 1e-9)
        throw support_mismatch_error("target and reference must share a support");

    const int donors = (p_ > q_) ? (p_ - q_) + 6 : 0;
    mdict_ = m_ + donors;
    ndict_ = 2 + mdict_ + q_ + p_;
    if (ndict_ > 64) throw parameter_error("dictionary too large (reduce m or parameter count)");

    target_score_ = OrthonormalScore(target_, rule);
    reference_score_ = OrthonormalScore(reference_, rule);

    // Node-level values of every dictionary entry, plus the F-side
    // primitives used for the reference-measure inner products.
    const std::size_t nn = rule.size();
    grid_nodes_ = rule.nodes;
    grid_dict_.assign(nn * ndict_, 0.0);
    const int nf = 1 + mdict_ + q_;
    std::vector<double> grid_f(nn * nf, 0.0);
    std::vector<double> fw(nn), gw(nn);
    {
        std::vector<double> phi(mdict_), sv(std::max(q_, 1)), bv(std::max(p_, 1));
        for (std::size_t i = 0; i < nn; ++i) {
            const double x = rule.nodes[i];
            const double g = target_->pdf(x);
            const double f = reference_->pdf(x);
            if (g < 1e-300)
                throw support_mismatch_error("target density vanishes on a quadrature node");
            const double l = std::sqrt(f / g);
            legendre_shifted_all(mdict_, reference_->cdf(x), phi);
            reference_score_.eval(x, std::span<double>(sv.data(), static_cast<std::size_t>(q_)));
            target_score_.eval(x, std::span<double>(bv.data(), static_cast<std::size_t>(p_)));
            double* d = &grid_dict_[i * ndict_];
            d[0] = 1.0;
            d[1] = l;
            for (int j = 0; j < mdict_; ++j) d[2 + j] = l * phi[j];
            for (int k = 0; k < q_; ++k) d[2 + mdict_ + k] = l * sv[k];
            for (int k = 0; k < p_; ++k) d[2 + mdict_ + q_ + k] = bv[k];
            double* pf = &grid_f[i * nf];
            pf[0] = 1.0;
            for (int j = 0; j < mdict_; ++j) pf[1 + j] = phi[j];
            for (int k = 0; k < q_; ++k) pf[1 + mdict_ + k] = sv[k];
            fw[i] = rule.weights[i] * f;
            gw[i] = rule.weights[i] * g;
        }
    }

    gd_.assign(static_cast<std::size_t>(ndict_) * ndict_, 0.0);
    for (std::size_t i = 0; i < nn; ++i) {
        const double* d = &grid_dict_[i * ndict_];
        for (int a = 0; a < ndict_; ++a) {
            const double wa = gw[i] * d[a];
            for (int b = a; b < ndict_; ++b) gd_[a * ndict_ + b] += wa * d[b];
        }
    }
    for (int a = 0; a < ndict_; ++a)
        for (int b = 0; b < a; ++b) gd_[a * ndict_ + b] = gd_[b * ndict_ + a];

    std::vector<double> gf(static_cast<std::size_t>(nf) * nf, 0.0);
    for (std::size_t i = 0; i < nn; ++i) {
        const double* pf = &grid_f[i * nf];
        for (int a = 0; a < nf; ++a) {
            const double wa = fw[i] * pf[a];
            for (int b = a; b < nf; ++b) gf[a * nf + b] += wa * pf[b];
        }
    }
    for (int a = 0; a < nf; ++a)
        for (int b = 0; b < a; ++b) gf[a * nf + b] = gf[b * nf + a];
    const auto ipf = [&](std::span<const double> a, std::span<const double> b) {
        double acc = 0.0;
        for (int i = 0; i < nf; ++i) {
            if (a[i] == 0.0) continue;
            double row = 0.0;
            for (int j = 0; j < nf; ++j) row += gf[i * nf + j] * b[j];
            acc += a[i] * row;
        }
        return acc;
    };

    // Reference score set a_1..a_p over the F-side primitives; extensions by
    // Gram-Schmidt of donor functions when q < p.
    a_fcoef_.clear();
    for (int k = 0; k < q_; ++k) {
        std::vector<double> e(nf, 0.0);
        e[1 + mdict_ + k] = 1.0;
        a_fcoef_.push_back(std::move(e));
    }
    if (p_ > q_) {
        std::vector<std::vector<double>> fixed;
        {
            std::vector<double> one(nf, 0.0);
            one[0] = 1.0;
            fixed.push_back(std::move(one));
        }
        for (int k = 0; k < q_; ++k) fixed.push_back(a_fcoef_[k]);
        int accepted = 0;
        for (int dcand = 0; dcand < donors && accepted < p_ - q_; ++dcand) {
            std::vector<double> cand(nf, 0.0);
            cand[1 + m_ + dcand] = 1.0;  // phi_{m+1+dcand}
            for (int pass = 0; pass < 2; ++pass) {
                for (const auto& fx : fixed) {
                    const double proj = ipf(fx, cand) / ipf(fx, fx);
                    for (int i = 0; i < nf; ++i) cand[i] -= proj * fx[i];
                }
            }
            const double norm = std::sqrt(std::max(ipf(cand, cand), 0.0));
            if (norm < 1e-8) continue;
            for (double& c : cand) c /= norm;
            fixed.push_back(cand);
            a_fcoef_.push_back(cand);
            ++accepted;
        }
        if (accepted < p_ - q_)
            throw span_degeneracy_error("donor basis could not extend the reference score set");
    }

    // l a_k over the dictionary: F-primitive i multiplies into dictionary
    // slot (1, 2+j, 2+mdict+k) for i = (0, 1+j, 1+mdict+k).
    const auto fprim_to_dict = [&](const std::vector<double>& fc) {
        std::vector<double> v(ndict_, 0.0);
        v[1] = fc[0];
        for (int j = 0; j < mdict_; ++j) v[2 + j] = fc[1 + j];
        for (int k = 0; k < q_; ++k) v[2 + mdict_ + k] = fc[1 + mdict_ + k];
        return v;
    };
    a_dict_.clear();
    for (const auto& fc : a_fcoef_) a_dict_.push_back(fprim_to_dict(fc));

    s_l_ = gd_[1 * ndict_ + 0];
    k_identity_ = (1.0 - s_l_ < kDegenerate);

    c_.clear();
    for (int k = 0; k < p_; ++k) c_.push_back(apply_K(a_dict_[k]));

    // Reflection chain: c~_1 = c_1, c~_k = U_{k-1} ... U_1 c_k.
    chain_.clear();
    for (int k = 0; k < p_; ++k) {
        std::vector<double> ct = c_[k];
        for (int s = 0; s < k; ++s) ct = apply_chain_step(s + 1, ct);
        ReflectionStep step;
        step.b.assign(ndict_, 0.0);
        step.b[2 + mdict_ + q_ + k] = 1.0;
        step.denom = 1.0 - ip(step.b, ct);
        step.identity = step.denom < kDegenerate;
        step.c = std::move(ct);
        chain_.push_back(std::move(step));
    }

    // Raw and residual test functions.
    proj_a_.assign(static_cast<std::size_t>(m_) * std::max(p_, 1), 0.0);
    std::vector<double> ephi(nf, 0.0);
    for (int j = 0; j < m_; ++j) {
        std::fill(ephi.begin(), ephi.end(), 0.0);
        ephi[1 + j] = 1.0;
        for (int k = 0; k < p_; ++k) proj_a_[j * p_ + k] = ipf(a_fcoef_[k], ephi);
    }
    h_.clear();
    ht_.clear();
    for (int j = 0; j < m_; ++j) {
        std::vector<double> lphi(ndict_, 0.0);
        lphi[2 + j] = 1.0;
        h_.push_back(apply_Up(apply_K(lphi)));
        std::vector<double> lphit = lphi;
        for (int k = 0; k < p_; ++k) {
            const double pr = proj_a_[j * p_ + k];
            for (int i = 0; i < ndict_; ++i) lphit[i] -= pr * a_dict_[k][i];
        }
        ht_.push_back(apply_Up(apply_K(std::move(lphit))));
    }

    gram_ = SymMatrix(m_);
    means_.assign(m_, 0.0);
    std::vector<double> one(ndict_, 0.0);
    one[0] = 1.0;
    for (int i = 0; i < m_; ++i) {
        means_[i] = ip(ht_[i], one);
        for (int j = i; j < m_; ++j) {
            const double v = ip(ht_[i], ht_[j]);
            gram_.at(i, j) = v;
            gram_.at(j, i) = v;
        }
    }

    ref_gram_ = SymMatrix(m_);
    std::vector<std::vector<double>> phit(m_);
    for (int j = 0; j < m_; ++j) {
        std::vector<double> v(nf, 0.0);
        v[1 + j] = 1.0;
        for (int k = 0; k < p_; ++k) {
            const double pr = proj_a_[j * p_ + k];
            for (int i = 0; i < nf; ++i) v[i] -= pr * a_fcoef_[k][i];
        }
        phit[j] = std::move(v);
    }
    for (int i = 0; i < m_; ++i)
        for (int j = i; j < m_; ++j) {
            const double v = ipf(phit[i], phit[j]);
            ref_gram_.at(i, j) = v;
            ref_gram_.at(j, i) = v;
        }
}

double K2Basis::ip(std::span<const double> a, std::span<const double> b) const {
    double acc = 0.0;
    for (int i = 0; i < ndict_; ++i) {
        if (a[i] == 0.0) continue;
        double row = 0.0;
        const double* g = &gd_[static_cast<std::size_t>(i) * ndict_];
        for (int j = 0; j < ndict_; ++j) row += g[j] * b[j];
        acc += a[i] * row;
    }
    return acc;
}

std::vector<double> K2Basis::apply_K(std::vector<double> v) const {
    if (k_identity_) return v;
    // d = l - 1; K v = v - d <d, v> / (1 - <l,1>).
    std::vector<double> d(ndict_, 0.0);
    d[1] = 1.0;
    d[0] = -1.0;
    const double coef = ip(d, v) / (1.0 - s_l_);
    v[1] -= coef;
    v[0] += coef;
    return v;
}

std::vector<double> K2Basis::apply_chain_step(int k, std::vector<double> v) const {
    const ReflectionStep& step = chain_[k - 1];
    if (step.identity) return v;
    std::vector<double> d(ndict_);
    for (int i = 0; i < ndict_; ++i) d[i] = step.b[i] - step.c[i];
    const double coef = ip(d, v) / step.denom;
    for (int i = 0; i < ndict_; ++i) v[i] -= coef * d[i];
    return v;
}

std::vector<double> K2Basis::apply_Up(std::vector<double> v) const {
    for (int k = 1; k <= p_; ++k) v = apply_chain_step(k, std::move(v));
    return v;
}

void K2Basis::dict_values(double x, std::span<double> out) const {
    const double g = target_->pdf(x);
    if (g < 1e-300) throw evaluation_error("k2 evaluation outside the target support");
    const double f = reference_->pdf(x);
    const double l = std::sqrt(f / g);
    double phi[64], sv[16], bv[16];
    legendre_shifted_all(mdict_, reference_->cdf(x), std::span<double>(phi, static_cast<std::size_t>(mdict_)));
    reference_score_.eval(x, std::span<double>(sv, static_cast<std::size_t>(q_)));
    target_score_.eval(x, std::span<double>(bv, static_cast<std::size_t>(p_)));
    out[0] = 1.0;
    out[1] = l;
    for (int j = 0; j < mdict_; ++j) out[2 + j] = l * phi[j];
    for (int k = 0; k < q_; ++k) out[2 + mdict_ + k] = l * sv[k];
    for (int k = 0; k < p_; ++k) out[2 + mdict_ + q_ + k] = bv[k];
}

double K2Basis::eval_coeffs(std::span<const double> coeffs, double x) const {
    double dv[64];
    dict_values(x, std::span<double>(dv, static_cast<std::size_t>(ndict_)));
    return dot(coeffs, std::span<const double>(dv, static_cast<std::size_t>(ndict_)));
}

double K2Basis::grid_sup_norm(std::span<const double> coeffs) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < grid_nodes_.size(); ++i) {
        const double v = dot(coeffs, std::span<const double>(&grid_dict_[i * ndict_],
                                                             static_cast<std::size_t>(ndict_)));
        worst = std::max(worst, std::abs(v));
    }
    return worst;
}

std::vector<double> K2Basis::unit_dict_function(RngStream& rng) const {
    std::vector<double> v(ndict_);
    for (double& c : v) c = 2.0 * rng.uniform() - 1.0;
    const double norm = std::sqrt(std::max(ip(v, v), 1e-300));
    for (double& c : v) c /= norm;
    return v;
}

std::vector<double> K2Basis::coeffs_h(int j) const { return h_[j - 1]; }
std::vector<double> K2Basis::coeffs_h_residual(int j) const { return ht_[j - 1]; }
std::vector<double> K2Basis::coeffs_b(int k) const {
    std::vector<double> v(ndict_, 0.0);
    v[2 + mdict_ + q_ + (k - 1)] = 1.0;
    return v;
}
std::vector<double> K2Basis::coeffs_c(int k) const { return c_[k - 1]; }
std::vector<double> K2Basis::coeffs_one() const {
    std::vector<double> v(ndict_, 0.0);
    v[0] = 1.0;
    return v;
}
std::vector<double> K2Basis::coeffs_l() const {
    std::vector<double> v(ndict_, 0.0);
    v[1] = 1.0;
    return v;
}

double K2Basis::eval(int j, double x) const { return eval_coeffs(h_[j - 1], x); }

double K2Basis::eval_residual(int j, double x) const { return eval_coeffs(ht_[j - 1], x); }

void K2Basis::eval_residual_all(double x, std::span<double> out) const {
    double dv[64];
    dict_values(x, std::span<double>(dv, static_cast<std::size_t>(ndict_)));
    for (int j = 0; j < m_; ++j)
        out[j] = dot(ht_[j], std::span<const double>(dv, static_cast<std::size_t>(ndict_)));
}

double K2Basis::eval_l(double x) const {
    const double g = target_->pdf(x);
    if (g < 1e-300) throw evaluation_error("k2 evaluation outside the target support");
    return std::sqrt(reference_->pdf(x) / g);
}

double K2Basis::eval_b(int k, double x) const {
    double bv[16];
    target_score_.eval(x, std::span<double>(bv, static_cast<std::size_t>(p_)));
    return bv[k - 1];
}

double K2Basis::eval_a(int k, double x) const {
    const std::vector<double>& fc = a_fcoef_[k - 1];
    double phi[64], sv[16];
    legendre_shifted_all(mdict_, reference_->cdf(x),
                         std::span<double>(phi, static_cast<std::size_t>(mdict_)));
    reference_score_.eval(x, std::span<double>(sv, static_cast<std::size_t>(q_)));
    double acc = fc[0];
    for (int j = 0; j < mdict_; ++j) acc += fc[1 + j] * phi[j];
    for (int s = 0; s < q_; ++s) acc += fc[1 + mdict_ + s] * sv[s];
    return acc;
}

double K2Basis::eval_phi(int j, double x) const {
    return legendre_shifted_normalized(j, reference_->cdf(x));
}

double K2Basis::eval_phi_residual(int j, double x) const {
    double v = eval_phi(j, x);
    for (int k = 0; k < p_; ++k) v -= proj_a_[(j - 1) * p_ + k] * eval_a(k + 1, x);
    return v;
}

double K2Basis::eval_c(int k, double x) const { return eval_coeffs(c_[k - 1], x); }

double K2Basis::eval_c_tilde(int k, double x) const { return eval_coeffs(chain_[k - 1].c, x); }

std::uint64_t K2Basis::hash() const {
    std::uint64_t h = target_->hash();
    h ^= reference_->hash() + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    h ^= 0x6b32ull + (h << 7);  // basis kind tag
    h ^= static_cast<std::uint64_t>(m_) * 0x9E3779B97F4A7C15ull;
    return h;
}

K2Diagnostics K2Basis::diagnostics() const {
    K2Diagnostics d;
    const std::vector<double> one = coeffs_one();
    const std::vector<double> l = coeffs_l();

    const auto minus = [&](std::vector<double> a, const std::vector<double>& b) {
        for (int i = 0; i < ndict_; ++i) a[i] -= b[i];
        return a;
    };

    d.k_maps_l_to_one = grid_sup_norm(minus(apply_K(l), one));
    d.k_maps_one_to_l = grid_sup_norm(minus(apply_K(one), l));

    RngStream rng(0xD1A6u, 0);
    for (int rep = 0; rep < 3; ++rep) {
        std::vector<double> u = unit_dict_function(rng);
        std::vector<double> w = unit_dict_function(rng);
        d.k_involution = std::max(d.k_involution, grid_sup_norm(minus(apply_K(apply_K(u)), u)));
        d.k_unitary = std::max(d.k_unitary,
                               std::abs(ip(apply_K(u), apply_K(w)) - ip(u, w)));
        d.k_self_adjoint = std::max(d.k_self_adjoint,
                                    std::abs(ip(apply_K(u), w) - ip(u, apply_K(w))));
        d.up_unitary = std::max(d.up_unitary,
                                std::abs(ip(apply_Up(u), apply_Up(w)) - ip(u, w)));
        for (int k = 1; k <= p_; ++k)
            d.step_involution = std::max(
                d.step_involution,
                grid_sup_norm(minus(apply_chain_step(k, apply_chain_step(k, u)), u)));

        // Component of u orthogonal to span(1, l) must be fixed by K.
        std::vector<double> perp = u;
        const double l_res_sq = std::max(ip(l, l) - s_l_ * s_l_, 0.0);
        for (int pass = 0; pass < 2; ++pass) {
            const double p1 = ip(perp, one);
            for (int i = 0; i < ndict_; ++i) perp[i] -= p1 * one[i];
            if (l_res_sq > 1e-16) {
                std::vector<double> lres(ndict_, 0.0);
                for (int i = 0; i < ndict_; ++i) lres[i] = l[i] - s_l_ * one[i];
                const double nrm = std::sqrt(l_res_sq);
                for (int i = 0; i < ndict_; ++i) lres[i] /= nrm;
                const double p2 = ip(perp, lres);
                for (int i = 0; i < ndict_; ++i) perp[i] -= p2 * lres[i];
            }
        }
        d.k_fixes_orthogonal =
            std::max(d.k_fixes_orthogonal, grid_sup_norm(minus(apply_K(perp), perp)));
    }

    for (int i = 0; i < p_; ++i) {
        d.c_mean = std::max(d.c_mean, std::abs(ip(c_[i], one)));
        for (int j = 0; j < p_; ++j) {
            const double target = (i == j) ? 1.0 : 0.0;
            d.c_gram = std::max(d.c_gram, std::abs(ip(c_[i], c_[j]) - target));
        }
    }
    for (int k = 0; k < p_; ++k) {
        d.ctilde_mean = std::max(d.ctilde_mean, std::abs(ip(chain_[k].c, one)));
        for (int j = 0; j < k; ++j)
            d.ctilde_orth = std::max(d.ctilde_orth, std::abs(ip(chain_[k].c, chain_[j].b)));
        d.up_maps_c_to_b =
            std::max(d.up_maps_c_to_b, grid_sup_norm(minus(apply_Up(c_[k]), chain_[k].b)));
    }
    d.up_fixes_one = grid_sup_norm(minus(apply_Up(one), one));

    for (int i = 0; i < m_; ++i) {
        d.residual_mean = std::max(d.residual_mean, std::abs(means_[i]));
        for (int j = 0; j < m_; ++j) {
            const double target = (i == j) ? 1.0 : 0.0;
            d.basis_gram = std::max(d.basis_gram, std::abs(ip(h_[i], h_[j]) - target));
            d.covariance_transfer =
                std::max(d.covariance_transfer, std::abs(gram_.at(i, j) - ref_gram_.at(i, j)));
        }
        for (int k = 0; k < p_; ++k) {
            d.score_transfer = std::max(
                d.score_transfer, std::abs(ip(chain_[k].b, h_[i]) - proj_a_[i * p_ + k]));
        }
        // h~_j against the explicit b-projection of h_j.
        std::vector<double> res = h_[i];
        for (int k = 0; k < p_; ++k) {
            const double pr = ip(chain_[k].b, h_[i]);
            for (int t = 0; t < ndict_; ++t) res[t] -= pr * chain_[k].b[t];
        }
        d.residual_image = std::max(d.residual_image, grid_sup_norm(minus(res, ht_[i])));
    }
    return d;
}

BasisPtr k2_basis(ModelPtr target, ModelPtr reference, int m, const QuadratureRule& rule) {
    return k2_basis_full(std::move(target), std::move(reference), m, rule);
}

std::shared_ptr<const K2Basis> k2_basis_full(ModelPtr target, ModelPtr reference, int m,
                                             const QuadratureRule& rule) {
    static std::mutex mu;
    static std::unordered_map<std::uint64_t, std::shared_ptr<const K2Basis>> cache;

    std::uint64_t key = target->hash();
    key ^= reference->hash() + 0x9E3779B97F4A7C15ull + (key << 6) + (key >> 2);
    key ^= static_cast<std::uint64_t>(m) * 0x100000001B3ull;
    key ^= static_cast<std::uint64_t>(rule.size()) << 17;
    std::uint64_t lob, hib;
    static_assert(sizeof(double) == 8);
    std::memcpy(&lob, &rule.lo, 8);
    std::memcpy(&hib, &rule.hi, 8);
    key ^= lob ^ (hib << 1);

    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    auto basis = std::make_shared<const K2Basis>(target, reference, m, rule);
    {
        std::lock_guard<std::mutex> lock(mu);
        if (cache.size() > 64) cache.clear();
        cache.emplace(key, basis);
    }
    return basis;
}

}  // namespace smoothtest
