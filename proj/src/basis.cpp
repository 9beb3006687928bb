#include "smoothtest/basis.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

namespace smoothtest {

void BasisSet::eval_residual_all(double x, std::span<double> out) const {
    for (int j = 1; j <= size(); ++j) out[j - 1] = eval_residual(j, x);
}

namespace {

class LegendreBasis final : public BasisSet {
public:
    LegendreBasis(ModelPtr model, int m, const QuadratureRule& rule)
        : model_(std::move(model)), m_(m), score_(model_, rule) {
        if (m < 1) throw parameter_error("basis size must be >= 1");
        const int p = model_->param_dim();

        // Projection coefficients <h_j, b_k> under the model.
        proj_.assign(static_cast<std::size_t>(m_) * p, 0.0);
        std::vector<double> h(m_), b(p);
        for (std::size_t i = 0; i < rule.size(); ++i) {
            const double x = rule.nodes[i];
            const double wg = rule.weights[i] * model_->pdf(x);
            legendre_shifted_all(m_, model_->cdf(x), h);
            score_.eval(x, b);
            for (int j = 0; j < m_; ++j)
                for (int k = 0; k < p; ++k) proj_[j * p + k] += wg * h[j] * b[k];
        }

        // Residual means and Gram matrix by direct quadrature of the
        // residual functions.
        means_.assign(m_, 0.0);
        gram_ = SymMatrix(m_);
        std::vector<double> r(m_);
        for (std::size_t i = 0; i < rule.size(); ++i) {
            const double x = rule.nodes[i];
            const double wg = rule.weights[i] * model_->pdf(x);
            eval_residual_all(x, r);
            for (int j = 0; j < m_; ++j) {
                means_[j] += wg * r[j];
                for (int k = j; k < m_; ++k) gram_.at(j, k) += wg * r[j] * r[k];
            }
        }
        for (int j = 0; j < m_; ++j)
            for (int k = 0; k < j; ++k) gram_.at(j, k) = gram_.at(k, j);
    }

    const Model& model() const override { return *model_; }
    ModelPtr model_ptr() const override { return model_; }
    int size() const override { return m_; }
    std::string kind() const override { return "legendre"; }

    double eval(int j, double x) const override {
        return legendre_shifted_normalized(j, model_->cdf(x));
    }
    double eval_residual(int j, double x) const override {
        const int p = score_.dim();
        double v = eval(j, x);
        if (p > 0) {
            std::vector<double> b(p);
            score_.eval(x, b);
            for (int k = 0; k < p; ++k) v -= proj_[(j - 1) * p + k] * b[k];
        }
        return v;
    }
    void eval_residual_all(double x, std::span<double> out) const override {
        legendre_shifted_all(m_, model_->cdf(x), out);
        const int p = score_.dim();
        if (p == 0) return;
        double bb[16];
        std::span<double> b(bb, static_cast<std::size_t>(p));
        score_.eval(x, b);
        for (int j = 0; j < m_; ++j) {
            double v = out[j];
            for (int k = 0; k < p; ++k) v -= proj_[j * p + k] * b[k];
            out[j] = v;
        }
    }

    const SymMatrix& gram() const override { return gram_; }
    const std::vector<double>& residual_means() const override { return means_; }

    std::uint64_t hash() const override {
        std::uint64_t h = model_->hash();
        h ^= 0x6c6567656e647265ull + (h << 7);  // basis kind tag
        h ^= static_cast<std::uint64_t>(m_) * 0x9E3779B97F4A7C15ull;
        return h;
    }

private:
    ModelPtr model_;
    int m_;
    OrthonormalScore score_;
    std::vector<double> proj_;
    std::vector<double> means_;
    SymMatrix gram_;
};

}  // namespace

BasisPtr legendre_composed_basis(ModelPtr model, int m, const QuadratureRule& rule) {
    return std::make_shared<LegendreBasis>(std::move(model), m, rule);
}

namespace {

void check_support(const Model& model, std::span<const double> data) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!model.in_support(data[i])) {
            char buf[128];
            std::snprintf(buf, sizeof(buf),
                          "observation %zu (value %.17g) lies outside the model support", i,
                          data[i]);
            throw support_violation_error(buf);
        }
    }
}

}  // namespace

double empirical_process(const BasisSet& basis, int j, std::span<const double> data) {
    if (j < 1 || j > basis.size()) throw parameter_error("basis index out of range");
    check_support(basis.model(), data);
    const double n = static_cast<double>(data.size());
    double acc = 0.0;
    for (double x : data) acc += basis.eval_residual(j, x);
    return acc / std::sqrt(n) - std::sqrt(n) * basis.residual_means()[j - 1];
}

std::vector<double> empirical_process_all(const BasisSet& basis, std::span<const double> data) {
    check_support(basis.model(), data);
    const int m = basis.size();
    const double n = static_cast<double>(data.size());
    std::vector<double> acc(m, 0.0), r(m);
    for (double x : data) {
        basis.eval_residual_all(x, r);
        for (int j = 0; j < m; ++j) acc[j] += r[j];
    }
    const double rn = std::sqrt(n);
    for (int j = 0; j < m; ++j) acc[j] = acc[j] / rn - rn * basis.residual_means()[j];
    return acc;
}

double empirical_process(const std::function<double(double)>& h, const Model& model,
                         std::span<const double> data, const QuadratureRule& rule) {
    check_support(model, data);
    const double n = static_cast<double>(data.size());
    double acc = 0.0;
    for (double x : data) acc += h(x);
    const double mean = inner_product(h, [](double) { return 1.0; }, model, rule);
    return acc / std::sqrt(n) - std::sqrt(n) * mean;
}

std::vector<double> estimate_coefficients(const BasisSet& basis, std::span<const double> data) {
    check_support(basis.model(), data);
    const int m = basis.size();
    std::vector<double> theta(m, 0.0);
    for (double x : data)
        for (int j = 1; j <= m; ++j) theta[j - 1] += basis.eval(j, x);
    for (double& t : theta) t /= static_cast<double>(data.size());
    return theta;
}

std::function<double(double)> projection_pi(std::function<double(double)> h, ModelPtr model,
                                            const EstimatorSpec& psi, const QuadratureRule& rule) {
    const int p = model->param_dim();
    if (psi.p != p) throw parameter_error("estimator spec does not match the model dimension");
    std::vector<double> coef(p, 0.0);
    std::vector<double> u(p);
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const double x = rule.nodes[i];
        model->score(x, u);
        const double wg = rule.weights[i] * model->pdf(x) * h(x);
        for (int k = 0; k < p; ++k) coef[k] += wg * u[k];
    }
    return [h = std::move(h), psi, coef, p](double x) {
        double v = h(x);
        if (p > 0) {
            std::vector<double> w(p);
            psi.psi(x, w);
            for (int k = 0; k < p; ++k) v -= w[k] * coef[k];
        }
        return v;
    };
}

}  // namespace smoothtest
