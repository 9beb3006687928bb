#include "smoothtest/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace smoothtest {

double QuadratureRule::integrate(const std::function<double(double)>& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double v = f(nodes[i]);
        if (!std::isfinite(v)) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "non-finite integrand value at node x=%.17g", nodes[i]);
            throw evaluation_error(buf);
        }
        acc += weights[i] * v;
    }
    return acc;
}

void gauss_legendre_base(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        // Chebyshev-based initial guess, refined by Newton on P_n.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
}

QuadratureRule gauss_legendre_rule_edges(std::span<const double> edges, int nodes_per_panel) {
    if (edges.size() < 2 || nodes_per_panel < 2)
        throw invalid_interval_error("quadrature rule needs >= 2 edges and >= 2 nodes per panel");
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (!std::isfinite(edges[i]) || !(edges[i] < edges[i + 1]))
            throw invalid_interval_error("quadrature panel edges must be finite and strictly increasing");
    }
    if (!std::isfinite(edges.back()))
        throw invalid_interval_error("quadrature panel edges must be finite and strictly increasing");

    std::vector<double> bx, bw;
    gauss_legendre_base(nodes_per_panel, bx, bw);

    QuadratureRule rule;
    rule.lo = edges.front();
    rule.hi = edges.back();
    rule.nodes.reserve((edges.size() - 1) * nodes_per_panel);
    rule.weights.reserve((edges.size() - 1) * nodes_per_panel);
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const double a = edges[p], b = edges[p + 1];
        const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        for (int k = 0; k < nodes_per_panel; ++k) {
            rule.nodes.push_back(mid + half * bx[k]);
            rule.weights.push_back(half * bw[k]);
        }
    }
    return rule;
}

QuadratureRule gauss_legendre_rule(int panels, int nodes_per_panel, double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
        throw invalid_interval_error("invalid quadrature interval");
    if (panels < 1 || nodes_per_panel < 2)
        throw invalid_interval_error("quadrature rule needs panels >= 1, nodes_per_panel >= 2");
    std::vector<double> edges(panels + 1);
    for (int i = 0; i <= panels; ++i) edges[i] = lo + (hi - lo) * i / panels;
    edges.front() = lo;
    edges.back() = hi;
    return gauss_legendre_rule_edges(edges, nodes_per_panel);
}

QuadratureRule gauss_legendre_rule_with_breakpoints(int panels, int nodes_per_panel,
                                                    double lo, double hi,
                                                    std::span<const double> breakpoints) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
        throw invalid_interval_error("invalid quadrature interval");
    std::vector<double> cuts;
    for (double b : breakpoints)
        if (b > lo && b < hi) cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    // Segment between consecutive cuts, panels allocated proportionally to
    // segment length (at least one each), total kept at `panels`.
    std::vector<double> segs{lo};
    segs.insert(segs.end(), cuts.begin(), cuts.end());
    segs.push_back(hi);
    const int nseg = static_cast<int>(segs.size()) - 1;
    const int total = std::max(panels, nseg);
    std::vector<int> alloc(nseg, 1);
    int remaining = total - nseg;
    for (int pass = 0; remaining > 0; ++pass) {
        // Largest-width-per-panel segment gets the next panel.
        int best = 0;
        double best_w = -1.0;
        for (int s = 0; s < nseg; ++s) {
            const double w = (segs[s + 1] - segs[s]) / alloc[s];
            if (w > best_w) {
                best_w = w;
                best = s;
            }
        }
        ++alloc[best];
        --remaining;
    }
    std::vector<double> edges;
    for (int s = 0; s < nseg; ++s) {
        for (int i = 0; i < alloc[s]; ++i)
            edges.push_back(segs[s] + (segs[s + 1] - segs[s]) * i / alloc[s]);
    }
    edges.push_back(hi);
    return gauss_legendre_rule_edges(edges, nodes_per_panel);
}

double legendre_shifted_normalized(int j, double u) {
    if (j < 0) throw parameter_error("legendre order must be >= 0");
    if (!(u >= 0.0 && u <= 1.0)) throw evaluation_error("legendre argument outside [0,1]");
    const double t = 2.0 * u - 1.0;
    double p0 = 1.0, p1 = t;
    if (j == 0) return 1.0;
    for (int k = 2; k <= j; ++k) {
        const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    return std::sqrt(2.0 * j + 1.0) * p1;
}

void legendre_shifted_all(int m, double u, std::span<double> out) {
    const double t = 2.0 * u - 1.0;
    double p0 = 1.0, p1 = t;
    for (int j = 1; j <= m; ++j) {
        if (j >= 2) {
            const double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
            p0 = p1;
            p1 = p2;
        }
        out[j - 1] = std::sqrt(2.0 * j + 1.0) * p1;
    }
}

SymMatrix SymMatrix::identity(int dim) {
    SymMatrix m(dim);
    for (int i = 0; i < dim; ++i) m.at(i, i) = 1.0;
    return m;
}

double SymMatrix::max_asymmetry() const {
    double worst = 0.0;
    for (int i = 0; i < dim_; ++i)
        for (int j = i + 1; j < dim_; ++j)
            worst = std::max(worst, std::abs(at(i, j) - at(j, i)));
    return worst;
}

void SymMatrix::symmetrize(double tol) {
    if (max_asymmetry() > tol) throw numeric_error("matrix is not symmetric within tolerance");
    for (int i = 0; i < dim_; ++i)
        for (int j = i + 1; j < dim_; ++j) {
            const double v = 0.5 * (at(i, j) + at(j, i));
            at(i, j) = v;
            at(j, i) = v;
        }
}

SymMatrix SymMatrix::leading_block(int m) const {
    SymMatrix b(m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) b.at(i, j) = at(i, j);
    return b;
}

std::vector<double> SymMatrix::mul(std::span<const double> v) const {
    std::vector<double> out(dim_, 0.0);
    for (int i = 0; i < dim_; ++i) {
        double acc = 0.0;
        for (int j = 0; j < dim_; ++j) acc += at(i, j) * v[j];
        out[i] = acc;
    }
    return out;
}

SymMatrix SymMatrix::mul(const SymMatrix& other) const {
    SymMatrix out(dim_);
    for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j) {
            double acc = 0.0;
            for (int k = 0; k < dim_; ++k) acc += at(i, k) * other.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

EigenDecomposition jacobi_eigen(const SymMatrix& m) {
    const int n = m.dim();
    SymMatrix a = m;
    SymMatrix v = SymMatrix::identity(n);
    if (n == 0) return {{}, v};

    double scale = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) scale = std::max(scale, std::abs(a.at(i, j)));
    if (scale == 0.0) scale = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
        off = std::sqrt(2.0 * off);
        if (off <= 1e-14 * scale) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    // Sort eigenpairs ascending.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int i, int j) { return a.at(i, i) < a.at(j, j); });
    EigenDecomposition d;
    d.values.resize(n);
    d.vectors = SymMatrix(n);
    for (int col = 0; col < n; ++col) {
        d.values[col] = a.at(order[col], order[col]);
        for (int row = 0; row < n; ++row) d.vectors.at(row, col) = v.at(row, order[col]);
    }
    return d;
}

SymMatrix principal_inverse_sqrt(const SymMatrix& m) {
    const int n = m.dim();
    if (n == 0) return SymMatrix(0);
    const EigenDecomposition d = jacobi_eigen(m);
    const double lmax = d.values.back();
    SymMatrix out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) {
                const double lk = d.values[k];
                if (lk <= 1e-12 * std::max(lmax, 0.0))
                    throw not_positive_definite_error("matrix is not positive definite (inverse sqrt)");
                acc += d.vectors.at(i, k) * d.vectors.at(j, k) / std::sqrt(lk);
            }
            out.at(i, j) = acc;
        }
    return out;
}

SymMatrix cholesky(const SymMatrix& m) {
    const int n = m.dim();
    SymMatrix l(n);
    for (int j = 0; j < n; ++j) {
        double diag = m.at(j, j);
        for (int k = 0; k < j; ++k) diag -= l.at(j, k) * l.at(j, k);
        if (!(diag > 0.0)) {
            char buf[96];
            std::snprintf(buf, sizeof(buf),
                          "matrix is not positive definite (leading minor %d)", j + 1);
            throw not_positive_definite_error(buf);
        }
        l.at(j, j) = std::sqrt(diag);
        for (int i = j + 1; i < n; ++i) {
            double acc = m.at(i, j);
            for (int k = 0; k < j; ++k) acc -= l.at(i, k) * l.at(j, k);
            l.at(i, j) = acc / l.at(j, j);
        }
    }
    return l;
}

std::vector<double> solve_spd(const SymMatrix& m, std::span<const double> v) {
    const int n = m.dim();
    const SymMatrix l = cholesky(m);
    std::vector<double> y(n), x(n);
    for (int i = 0; i < n; ++i) {
        double acc = v[i];
        for (int k = 0; k < i; ++k) acc -= l.at(i, k) * y[k];
        y[i] = acc / l.at(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        double acc = y[i];
        for (int k = i + 1; k < n; ++k) acc -= l.at(k, i) * x[k];
        x[i] = acc / l.at(i, i);
    }
    return x;
}

std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, int dim) {
    for (int col = 0; col < dim; ++col) {
        int piv = col;
        for (int r = col + 1; r < dim; ++r)
            if (std::abs(a[r * dim + col]) > std::abs(a[piv * dim + col])) piv = r;
        if (std::abs(a[piv * dim + col]) < 1e-300)
            throw numeric_error("singular matrix in dense solve");
        if (piv != col) {
            for (int c = 0; c < dim; ++c) std::swap(a[col * dim + c], a[piv * dim + c]);
            std::swap(b[col], b[piv]);
        }
        for (int r = col + 1; r < dim; ++r) {
            const double f = a[r * dim + col] / a[col * dim + col];
            for (int c = col; c < dim; ++c) a[r * dim + c] -= f * a[col * dim + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(dim);
    for (int r = dim - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < dim; ++c) acc -= a[r * dim + c] * x[c];
        x[r] = acc / a[r * dim + r];
    }
    return x;
}

double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// AS 241 PPND16 (Wichura 1988): inverse of the standard normal CDF.
double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw parameter_error("norm_quantile needs p in (0,1)");
    const double q = p - 0.5;
    double r;
    if (std::abs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                  3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -val : val;
}

}  // namespace smoothtest
