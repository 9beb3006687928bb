#include "smoothtest/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numbers>

namespace smoothtest {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t hash_doubles(std::uint64_t h, std::span<const double> xs) {
    for (double x : xs) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof(bits));
        h = fnv1a(h, &bits, sizeof(bits));
    }
    return h;
}

}  // namespace

double Model::log_pdf(double x) const {
    const double d = pdf(x);
    return d > 0.0 ? std::log(d) : -kInf;
}

double Model::quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw parameter_error("quantile argument must lie in (0,1)");
    Interval iv = quad_interval();
    double lo = iv.lo, hi = iv.hi;
    // The quadrature interval carries all but ~1e-12 of the mass; widen a
    // touch so cdf brackets u even at extreme arguments.
    while (cdf(lo) > u && std::isfinite(lo)) lo -= (hi - lo);
    while (cdf(hi) < u && std::isfinite(hi)) hi += (hi - lo);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (cdf(mid) < u)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-14 * (1.0 + std::abs(mid))) break;
    }
    return 0.5 * (lo + hi);
}

double Model::sample(RngStream& rng) const {
    return quantile(rng.uniform());
}

void Model::sample_n(RngStream& rng, std::span<double> out) const {
    for (double& x : out) x = sample(rng);
}

void Model::score(double x, std::span<double> out) const {
    score_fd(x, out);
}

void Model::score_fd(double x, std::span<double> out) const {
    const std::vector<double> base = params();
    std::vector<double> shifted = base;
    for (int k = 0; k < param_dim(); ++k) {
        const double step = 1e-6 * std::max(1.0, std::abs(base[k]));
        shifted[k] = base[k] + step;
        const double up = with_params(shifted)->log_pdf(x);
        shifted[k] = base[k] - step;
        const double dn = with_params(shifted)->log_pdf(x);
        shifted[k] = base[k];
        out[k] = (up - dn) / (2.0 * step);
    }
}

std::vector<double> Model::score_vec(double x) const {
    std::vector<double> out(param_dim());
    score(x, out);
    return out;
}

bool Model::in_support(double x) const {
    const Interval s = support();
    return x >= s.lo && x <= s.hi;
}

std::vector<double> Model::init_from_data(std::span<const double>) const {
    return params();
}

namespace {

void sample_moments(std::span<const double> data, double& mean, double& sd) {
    mean = 0.0;
    for (double x : data) mean += x;
    mean /= std::max<std::size_t>(1, data.size());
    double var = 0.0;
    for (double x : data) var += (x - mean) * (x - mean);
    var /= std::max<std::size_t>(1, data.size() - 1);
    sd = std::sqrt(std::max(var, 1e-8));
}

}  // namespace

std::uint64_t Model::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    const std::string fam = family();
    h = fnv1a(h, fam.data(), fam.size());
    const Interval s = support();
    const double edges[2] = {s.lo, s.hi};
    h = hash_doubles(h, edges);
    h = hash_doubles(h, shape_constants());
    const std::vector<double> p = params();
    h = hash_doubles(h, p);
    return h;
}

// --- uniform -----------------------------------------------------------

namespace {

class UniformModel final : public Model {
public:
    UniformModel(double lo, double hi) : lo_(lo), hi_(hi) {
        if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
            throw parameter_error("uniform model needs finite lo < hi");
    }
    std::string family() const override { return "uniform"; }
    Interval support() const override { return {lo_, hi_}; }
    int param_dim() const override { return 0; }
    std::vector<double> params() const override { return {}; }
    std::shared_ptr<Model> with_params(std::span<const double>) const override {
        return std::make_shared<UniformModel>(lo_, hi_);
    }
    double pdf(double x) const override {
        return (x >= lo_ && x <= hi_) ? 1.0 / (hi_ - lo_) : 0.0;
    }
    double cdf(double x) const override {
        if (x <= lo_) return 0.0;
        if (x >= hi_) return 1.0;
        return (x - lo_) / (hi_ - lo_);
    }
    double quantile(double u) const override { return lo_ + u * (hi_ - lo_); }
    void score(double, std::span<double>) const override {}

private:
    double lo_, hi_;
};

// --- truncated normal --------------------------------------------------

class TruncNormalModel final : public Model {
public:
    TruncNormalModel(double mu, double sigma, double lo, double hi, bool free_params)
        : mu_(mu), sigma_(sigma), lo_(lo), hi_(hi), free_(free_params) {
        if (!(sigma > 0.0)) throw parameter_error("truncated normal needs sigma > 0");
        if (!(lo < hi)) throw parameter_error("truncated normal needs lo < hi");
        alpha_ = (lo_ - mu_) / sigma_;
        beta_ = (hi_ - mu_) / sigma_;
        mass_ = norm_cdf(beta_) - norm_cdf(alpha_);
        if (!(mass_ > 1e-300)) throw parameter_error("truncated normal carries no mass on support");
    }
    std::string family() const override { return free_ ? "truncnormal" : "truncnormal:fixed"; }
    Interval support() const override { return {lo_, hi_}; }
    int param_dim() const override { return free_ ? 2 : 0; }
    std::vector<double> params() const override {
        return free_ ? std::vector<double>{mu_, sigma_} : std::vector<double>{};
    }
    std::shared_ptr<Model> with_params(std::span<const double> p) const override {
        if (!free_) return std::make_shared<TruncNormalModel>(mu_, sigma_, lo_, hi_, false);
        return std::make_shared<TruncNormalModel>(p[0], p[1], lo_, hi_, true);
    }
    std::vector<double> shape_constants() const override {
        return free_ ? std::vector<double>{} : std::vector<double>{mu_, sigma_};
    }
    double pdf(double x) const override {
        if (x < lo_ || x > hi_) return 0.0;
        return norm_pdf((x - mu_) / sigma_) / (sigma_ * mass_);
    }
    double cdf(double x) const override {
        if (x <= lo_) return 0.0;
        if (x >= hi_) return 1.0;
        return (norm_cdf((x - mu_) / sigma_) - norm_cdf(alpha_)) / mass_;
    }
    double quantile(double u) const override {
        if (!(u > 0.0 && u < 1.0)) throw parameter_error("quantile argument must lie in (0,1)");
        const double p = norm_cdf(alpha_) + u * mass_;
        double x = mu_ + sigma_ * norm_quantile(std::min(std::max(p, 1e-300), 1.0 - 1e-16));
        return std::min(std::max(x, lo_), hi_);
    }
    void score(double x, std::span<double> out) const override {
        if (!free_) return;
        const double z = (x - mu_) / sigma_;
        const double pa = norm_pdf(alpha_), pb = norm_pdf(beta_);
        out[0] = z / sigma_ + (pb - pa) / (sigma_ * mass_);
        out[1] = (z * z - 1.0) / sigma_ + (beta_ * pb - alpha_ * pa) / (sigma_ * mass_);
    }
    std::vector<double> init_from_data(std::span<const double> data) const override {
        if (!free_ || data.empty()) return params();
        double mean, sd;
        sample_moments(data, mean, sd);
        return {std::min(std::max(mean, lo_), hi_), sd};
    }
    std::vector<ParamRole> param_roles() const override {
        if (!free_) return {};
        return {ParamRole::location, ParamRole::scale};
    }

private:
    double mu_, sigma_, lo_, hi_;
    bool free_;
    double alpha_, beta_, mass_;
};

// --- truncated Laplace ---------------------------------------------------

class TruncLaplaceModel final : public Model {
public:
    TruncLaplaceModel(double mu, double b, double lo, double hi)
        : mu_(mu), b_(b), lo_(lo), hi_(hi) {
        if (!(b > 0.0)) throw parameter_error("truncated Laplace needs scale > 0");
        if (!(lo < hi)) throw parameter_error("truncated Laplace needs lo < hi");
        mass_ = parent_cdf(hi_) - parent_cdf(lo_);
        if (!(mass_ > 1e-300)) throw parameter_error("truncated Laplace carries no mass on support");
    }
    std::string family() const override { return "trunclaplace"; }
    Interval support() const override { return {lo_, hi_}; }
    std::vector<double> quad_breakpoints() const override {
        if (mu_ > lo_ && mu_ < hi_) return {mu_};
        return {};
    }
    int param_dim() const override { return 0; }
    std::vector<double> params() const override { return {}; }
    std::shared_ptr<Model> with_params(std::span<const double>) const override {
        return std::make_shared<TruncLaplaceModel>(mu_, b_, lo_, hi_);
    }
    std::vector<double> shape_constants() const override { return {mu_, b_}; }
    double pdf(double x) const override {
        if (x < lo_ || x > hi_) return 0.0;
        return std::exp(-std::abs(x - mu_) / b_) / (2.0 * b_ * mass_);
    }
    double cdf(double x) const override {
        if (x <= lo_) return 0.0;
        if (x >= hi_) return 1.0;
        return (parent_cdf(x) - parent_cdf(lo_)) / mass_;
    }
    double quantile(double u) const override {
        if (!(u > 0.0 && u < 1.0)) throw parameter_error("quantile argument must lie in (0,1)");
        const double p = parent_cdf(lo_) + u * mass_;
        double x;
        if (p < 0.5)
            x = mu_ + b_ * std::log(2.0 * p);
        else
            x = mu_ - b_ * std::log(2.0 * (1.0 - p));
        return std::min(std::max(x, lo_), hi_);
    }
    void score(double, std::span<double>) const override {}

private:
    double parent_cdf(double x) const {
        if (x < mu_) return 0.5 * std::exp((x - mu_) / b_);
        return 1.0 - 0.5 * std::exp(-(x - mu_) / b_);
    }
    double mu_, b_, lo_, hi_;
    double mass_;
};

// --- asymmetric Laplace --------------------------------------------------

// Density with fixed location theta and scale sigma, asymmetry beta > 0:
//   g(x) = (sqrt2/sigma) beta/(1+beta^2) exp(-(sqrt2 beta/sigma)(x-theta)),  x >= theta
//   g(x) = (sqrt2/sigma) beta/(1+beta^2) exp( (sqrt2/(sigma beta))(x-theta)), x < theta
// P(X < theta) = beta^2/(1+beta^2).
class AsymLaplaceModel final : public Model {
public:
    AsymLaplaceModel(double theta, double sigma, double beta)
        : theta_(theta), sigma_(sigma), beta_(beta) {
        if (!(sigma > 0.0)) throw parameter_error("asymmetric Laplace needs sigma > 0");
        if (!(beta > 0.0)) throw parameter_error("asymmetric Laplace needs beta > 0");
    }
    std::string family() const override { return "asymlaplace"; }
    Interval support() const override { return {-kInf, kInf}; }
    Interval quad_interval() const override { return {quantile(1e-12), quantile(1.0 - 1e-12)}; }
    std::vector<double> quad_breakpoints() const override { return {theta_}; }
    int param_dim() const override { return 1; }
    std::vector<double> params() const override { return {beta_}; }
    std::shared_ptr<Model> with_params(std::span<const double> p) const override {
        return std::make_shared<AsymLaplaceModel>(theta_, sigma_, p[0]);
    }
    std::vector<double> shape_constants() const override { return {theta_, sigma_}; }
    double pdf(double x) const override {
        const double c = std::numbers::sqrt2 / sigma_ * beta_ / (1.0 + beta_ * beta_);
        if (x >= theta_) return c * std::exp(-std::numbers::sqrt2 * beta_ / sigma_ * (x - theta_));
        return c * std::exp(std::numbers::sqrt2 / (sigma_ * beta_) * (x - theta_));
    }
    double cdf(double x) const override {
        const double b2 = beta_ * beta_;
        if (x < theta_)
            return b2 / (1.0 + b2) * std::exp(std::numbers::sqrt2 / (sigma_ * beta_) * (x - theta_));
        return 1.0 - std::exp(-std::numbers::sqrt2 * beta_ / sigma_ * (x - theta_)) / (1.0 + b2);
    }
    double quantile(double u) const override {
        if (!(u > 0.0 && u < 1.0)) throw parameter_error("quantile argument must lie in (0,1)");
        const double b2 = beta_ * beta_;
        const double split = b2 / (1.0 + b2);
        if (u < split)
            return theta_ + sigma_ * beta_ / std::numbers::sqrt2 * std::log(u / split);
        return theta_ - sigma_ / (std::numbers::sqrt2 * beta_) * std::log((1.0 - u) * (1.0 + b2));
    }
    void score(double x, std::span<double> out) const override {
        const double common = 1.0 / beta_ - 2.0 * beta_ / (1.0 + beta_ * beta_);
        if (x >= theta_)
            out[0] = common - std::numbers::sqrt2 / sigma_ * (x - theta_);
        else
            out[0] = common - std::numbers::sqrt2 / (sigma_ * beta_ * beta_) * (x - theta_);
    }
    double theta() const { return theta_; }
    double sigma() const { return sigma_; }

private:
    double theta_, sigma_, beta_;
};

// --- mixture -------------------------------------------------------------

class MixtureModel final : public Model {
public:
    MixtureModel(std::vector<ModelPtr> comps, std::vector<double> weights, bool free_weights)
        : comps_(std::move(comps)), w_(std::move(weights)), free_weights_(free_weights) {
        const std::size_t c = comps_.size();
        if (c == 0 || w_.size() != c) throw parameter_error("mixture needs one weight per component");
        double sum = 0.0;
        for (double w : w_) {
            if (!(w >= 0.0) || w > 1.0 + 1e-12) throw parameter_error("mixture weights must lie in [0,1]");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw parameter_error("mixture weights must sum to one");
        const Interval s0 = comps_[0]->support();
        for (const auto& m : comps_) {
            const Interval s = m->support();
            if (std::abs(s.lo - s0.lo) > 1e-9 || std::abs(s.hi - s0.hi) > 1e-9)
                throw support_mismatch_error("mixture components must share a common support");
        }
        cum_.resize(c);
        double acc = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            acc += w_[i];
            cum_[i] = acc;
        }
        comp_param_offset_.resize(c);
        int off = free_weights_ ? static_cast<int>(c) - 1 : 0;
        for (std::size_t i = 0; i < c; ++i) {
            comp_param_offset_[i] = off;
            off += comps_[i]->param_dim();
        }
        pdim_ = off;
    }

    std::string family() const override {
        std::string f = free_weights_ ? "mixture:w" : "mixture";
        for (const auto& m : comps_) f += "|" + m->family();
        return f;
    }
    Interval support() const override { return comps_[0]->support(); }
    std::vector<double> quad_breakpoints() const override {
        std::vector<double> bp;
        for (const auto& m : comps_) {
            const auto b = m->quad_breakpoints();
            bp.insert(bp.end(), b.begin(), b.end());
        }
        return bp;
    }
    int param_dim() const override { return pdim_; }
    std::vector<double> params() const override {
        std::vector<double> p;
        if (free_weights_)
            p.insert(p.end(), w_.begin(), w_.end() - 1);
        for (const auto& m : comps_) {
            const auto cp = m->params();
            p.insert(p.end(), cp.begin(), cp.end());
        }
        return p;
    }
    std::shared_ptr<Model> with_params(std::span<const double> p) const override {
        const std::size_t c = comps_.size();
        std::vector<double> w = w_;
        std::size_t off = 0;
        if (free_weights_) {
            double head = 0.0;
            for (std::size_t i = 0; i + 1 < c; ++i) {
                w[i] = p[off++];
                head += w[i];
            }
            w[c - 1] = 1.0 - head;
        }
        std::vector<ModelPtr> comps(c);
        for (std::size_t i = 0; i < c; ++i) {
            const int d = comps_[i]->param_dim();
            comps[i] = comps_[i]->with_params(p.subspan(off, d));
            off += d;
        }
        return std::make_shared<MixtureModel>(std::move(comps), std::move(w), free_weights_);
    }
    double pdf(double x) const override {
        double acc = 0.0;
        for (std::size_t i = 0; i < comps_.size(); ++i) acc += w_[i] * comps_[i]->pdf(x);
        return acc;
    }
    double cdf(double x) const override {
        double acc = 0.0;
        for (std::size_t i = 0; i < comps_.size(); ++i) acc += w_[i] * comps_[i]->cdf(x);
        return acc;
    }
    double sample(RngStream& rng) const override {
        const int i = rng.categorical(cum_.data(), static_cast<int>(comps_.size()));
        return comps_[i]->sample(rng);
    }
    void score(double x, std::span<double> out) const override {
        if (pdim_ == 0) return;
        const double g = pdf(x);
        const std::size_t c = comps_.size();
        if (g <= 0.0) {
            for (int k = 0; k < pdim_; ++k) out[k] = 0.0;
            return;
        }
        if (free_weights_) {
            const double last = comps_[c - 1]->pdf(x);
            for (std::size_t i = 0; i + 1 < c; ++i) out[i] = (comps_[i]->pdf(x) - last) / g;
        }
        for (std::size_t i = 0; i < c; ++i) {
            const int d = comps_[i]->param_dim();
            if (d == 0) continue;
            double cs[16];
            comps_[i]->score(x, std::span<double>(cs, static_cast<std::size_t>(d)));
            const double f = w_[i] * comps_[i]->pdf(x) / g;
            for (int k = 0; k < d; ++k) out[comp_param_offset_[i] + k] = f * cs[k];
        }
    }
    std::vector<ParamRole> param_roles() const override {
        std::vector<ParamRole> roles;
        if (free_weights_)
            roles.assign(comps_.size() - 1, ParamRole::weight);
        for (const auto& m : comps_) {
            const auto cr = m->param_roles();
            roles.insert(roles.end(), cr.begin(), cr.end());
        }
        return roles;
    }
    std::vector<double> init_from_data(std::span<const double> data) const override {
        if (pdim_ == 0 || data.empty()) return params();
        std::vector<double> init;
        const std::size_t c = comps_.size();
        if (free_weights_) {
            // Assign each observation to the component with the largest
            // density and start the weights at the resulting proportions.
            std::vector<double> counts(c, 0.5);
            for (double x : data) {
                std::size_t best = 0;
                double bestp = -1.0;
                for (std::size_t i = 0; i < c; ++i) {
                    const double p = comps_[i]->pdf(x);
                    if (p > bestp) {
                        bestp = p;
                        best = i;
                    }
                }
                counts[best] += 1.0;
            }
            double total = 0.0;
            for (double v : counts) total += v;
            for (std::size_t i = 0; i + 1 < c; ++i)
                init.push_back(std::min(std::max(counts[i] / total, 0.02), 0.95));
        }
        for (const auto& m : comps_) {
            const auto ci = m->init_from_data(data);
            init.insert(init.end(), ci.begin(), ci.end());
        }
        return init;
    }
    std::vector<double> shape_constants() const override {
        return free_weights_ ? std::vector<double>{} : w_;
    }
    std::uint64_t hash() const override {
        std::uint64_t h = Model::hash();
        for (const auto& m : comps_) {
            const std::uint64_t ch = m->hash();
            h ^= ch + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
        }
        return h;
    }
    const std::vector<double>& weights() const { return w_; }
    bool has_free_weights() const { return free_weights_; }
    int free_weight_count() const {
        return free_weights_ ? static_cast<int>(comps_.size()) - 1 : 0;
    }

private:
    std::vector<ModelPtr> comps_;
    std::vector<double> w_;
    bool free_weights_;
    std::vector<double> cum_;
    std::vector<int> comp_param_offset_;
    int pdim_ = 0;
};

// --- convolved spectral line ----------------------------------------------

// Antiderivative of (1 + (d/s)^2)^(-power): s * I_m(atan(d/s)) with
// m = 2 power - 2 and I_m the cosine-power integral, which is closed-form
// for integer m.
class CosPowerIntegral {
public:
    explicit CosPowerIntegral(int m) : m_(m) {}
    double operator()(double theta) const {
        // I_0 = theta, I_1 = sin, I_m = cos^{m-1} sin / m + (m-1)/m I_{m-2}.
        const double s = std::sin(theta), c = std::cos(theta);
        double even = theta, odd = s;  // I_0, I_1
        if (m_ == 0) return even;
        if (m_ == 1) return odd;
        double val = 0.0;
        for (int k = 2; k <= m_; ++k) {
            const double prev = (k % 2 == 0) ? even : odd;
            val = std::pow(c, k - 1) * s / k + (k - 1.0) / k * prev;
            if (k % 2 == 0)
                even = val;
            else
                odd = val;
        }
        return val;
    }

private:
    int m_;
};

class ConvolvedLineModel final : public Model {
public:
    ConvolvedLineModel(double mu, double sigma, double scale, double power, double lo, double hi)
        : mu_(mu), sigma_(sigma), scale_(scale), power_(power), lo_(lo), hi_(hi) {
        if (!(sigma > 0.0) || !(scale > 0.0))
            throw parameter_error("convolved line needs sigma > 0 and scale > 0");
        const double m = 2.0 * power - 2.0;
        if (m < 0.0 || std::abs(m - std::round(m)) > 1e-9)
            throw parameter_error("convolved line supports half-integer powers >= 1 only");
        kernel_m_ = static_cast<int>(std::round(m));
        if (!(lo < hi)) throw parameter_error("convolved line needs lo < hi");

        std::vector<double> bx, bw;
        gauss_legendre_base(201, bx, bw);
        const double a = mu_ - 8.0 * sigma_, b = mu_ + 8.0 * sigma_;
        nodes_.resize(201);
        gweights_.resize(201);
        for (int i = 0; i < 201; ++i) {
            nodes_[i] = 0.5 * (a + b) + 0.5 * (b - a) * bx[i];
            gweights_[i] = 0.5 * (b - a) * bw[i] *
                           norm_pdf((nodes_[i] - mu_) / sigma_) / sigma_;
        }
        kernel_halfmass_ = scale_ * CosPowerIntegral(kernel_m_)(std::numbers::pi / 2.0);
        double z = 0.0;
        for (int i = 0; i < 201; ++i)
            z += gweights_[i] * (kernel_anti(hi_ - nodes_[i]) - kernel_anti(lo_ - nodes_[i]));
        if (!(z > 1e-300)) throw degenerate_line_error("line profile carries no mass on support");
        norm_ = z;
    }

    std::string family() const override { return "convolvedline"; }
    Interval support() const override { return {lo_, hi_}; }
    int param_dim() const override { return 0; }
    std::vector<double> params() const override { return {}; }
    std::shared_ptr<Model> with_params(std::span<const double>) const override {
        return std::make_shared<ConvolvedLineModel>(mu_, sigma_, scale_, power_, lo_, hi_);
    }
    double pdf(double x) const override {
        if (x < lo_ || x > hi_) return 0.0;
        double acc = 0.0;
        for (int i = 0; i < 201; ++i) acc += gweights_[i] * kernel(x - nodes_[i]);
        return acc / norm_;
    }
    double cdf(double x) const override {
        if (x <= lo_) return 0.0;
        if (x >= hi_) return 1.0;
        double acc = 0.0;
        for (int i = 0; i < 201; ++i)
            acc += gweights_[i] * (kernel_anti(x - nodes_[i]) - kernel_anti(lo_ - nodes_[i]));
        return std::min(acc / norm_, 1.0);
    }
    double sample(RngStream& rng) const override {
        // w + t with w normal and t from the kernel, conditioned on support.
        // Kernel mass beyond +-reach can only land outside the support.
        const double reach = (hi_ - lo_) + 8.0 * sigma_ + scale_;
        const double mlo = kernel_cdf(-reach), mhi = kernel_cdf(reach);
        for (int tries = 0; tries < 100000; ++tries) {
            const double w = mu_ + sigma_ * rng.normal();
            const double u = rng.uniform();
            if (u < mlo || u > mhi) continue;
            const double t = kernel_quantile(u);
            const double x = w + t;
            if (x >= lo_ && x <= hi_) return x;
        }
        throw evaluation_error("line-profile sampler failed to land in support");
    }
    void score(double, std::span<double>) const override {}
    std::vector<double> shape_constants() const override {
        return {mu_, sigma_, scale_, power_};
    }

private:
    double kernel(double d) const {
        const double y = 1.0 + (d / scale_) * (d / scale_);
        return std::pow(y, -power_);
    }
    double kernel_anti(double d) const {
        return scale_ * CosPowerIntegral(kernel_m_)(std::atan(d / scale_));
    }
    double kernel_cdf(double d) const {
        return 0.5 + 0.5 * kernel_anti(d) / kernel_halfmass_;
    }
    double kernel_quantile(double u) const {
        double lo = -scale_, hi = scale_;
        while (kernel_cdf(lo) > u) lo *= 2.0;
        while (kernel_cdf(hi) < u) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (kernel_cdf(mid) < u)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    }

    double mu_, sigma_, scale_, power_, lo_, hi_;
    int kernel_m_ = 0;
    std::vector<double> nodes_, gweights_;
    double kernel_halfmass_ = 0.0;
    double norm_ = 0.0;
};

}  // namespace

ModelPtr uniform_model(double lo, double hi) {
    return std::make_shared<UniformModel>(lo, hi);
}

ModelPtr trunc_normal_model(double mu, double sigma, double lo, double hi, bool free_params) {
    return std::make_shared<TruncNormalModel>(mu, sigma, lo, hi, free_params);
}

ModelPtr trunc_laplace_model(double mu, double b, double lo, double hi) {
    return std::make_shared<TruncLaplaceModel>(mu, b, lo, hi);
}

ModelPtr asym_laplace_model(double theta, double sigma, double beta) {
    return std::make_shared<AsymLaplaceModel>(theta, sigma, beta);
}

ModelPtr mixture_model(std::vector<ModelPtr> components, std::vector<double> weights,
                       bool free_weights) {
    return std::make_shared<MixtureModel>(std::move(components), std::move(weights), free_weights);
}

ModelPtr convolved_line_model(double mu, double sigma, double scale, double power, double lo,
                              double hi) {
    return std::make_shared<ConvolvedLineModel>(mu, sigma, scale, power, lo, hi);
}

double weighted_inner_product(const std::function<double(double)>& f,
                              const std::function<double(double)>& g,
                              const std::function<double(double)>& density,
                              const QuadratureRule& rule) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const double x = rule.nodes[i];
        const double v = f(x) * g(x) * density(x);
        if (!std::isfinite(v)) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "non-finite inner-product term at node x=%.17g", x);
            throw evaluation_error(buf);
        }
        acc += rule.weights[i] * v;
    }
    return acc;
}

double inner_product(const std::function<double(double)>& f,
                     const std::function<double(double)>& g, const Model& model,
                     const QuadratureRule& rule) {
    return weighted_inner_product(f, g, [&](double x) { return model.pdf(x); }, rule);
}

QuadratureRule default_rule(const Model& model, int panels, int nodes_per_panel) {
    const Interval s = model.support();
    const Interval q = model.quad_interval();
    const std::vector<double> bp = model.quad_breakpoints();
    if (std::isfinite(s.lo) && std::isfinite(s.hi))
        return gauss_legendre_rule_with_breakpoints(panels, nodes_per_panel, q.lo, q.hi, bp);

    // Unbounded support: equal-mass panels in the middle, geometrically
    // shrinking mass towards both 1e-12 tail cuts. Exponential tails need
    // bounded panel width in x, which geometric CDF levels deliver; the
    // composed Legendre polynomials raise the effective tail rate by up to
    // 2M+1, so equal-mass panels alone lose ~1e-6 there.
    const int tail = std::max(4, panels / 4);
    const int center = std::max(2, panels - 2 * tail);
    const double u_tail = 0.125, u_min = 1e-12;
    std::vector<double> levels;
    const double ratio = std::pow(u_min / u_tail, 1.0 / tail);
    for (int k = 1; k <= tail; ++k) levels.push_back(u_tail * std::pow(ratio, tail - k));
    for (int k = 1; k < center; ++k)
        levels.push_back(u_tail + (1.0 - 2.0 * u_tail) * k / center);
    for (int k = 0; k < tail; ++k) levels.push_back(1.0 - u_tail * std::pow(ratio, k));

    std::vector<double> edges;
    edges.push_back(q.lo);
    for (double u : levels) edges.push_back(model.quantile(u));
    edges.push_back(q.hi);
    for (double b : bp)
        if (b > q.lo && b < q.hi) edges.push_back(b);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                edges.end());
    return gauss_legendre_rule_edges(edges, nodes_per_panel);
}

QuadratureRule shared_rule(std::span<const ModelPtr> models, int panels, int nodes_per_panel) {
    if (models.empty()) throw parameter_error("shared_rule needs at least one model");
    const Interval q0 = models[0]->quad_interval();
    std::vector<double> bp;
    for (const auto& m : models) {
        const Interval q = m->quad_interval();
        if (std::abs(q.lo - q0.lo) > 1e-9 || std::abs(q.hi - q0.hi) > 1e-9)
            throw support_mismatch_error("models do not share a support");
        const auto b = m->quad_breakpoints();
        bp.insert(bp.end(), b.begin(), b.end());
    }
    return gauss_legendre_rule_with_breakpoints(panels, nodes_per_panel, q0.lo, q0.hi, bp);
}

SymMatrix fisher_information(const Model& model, const QuadratureRule& rule) {
    const int p = model.param_dim();
    SymMatrix gamma(p);
    if (p == 0) return gamma;
    std::vector<double> u(p);
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const double x = rule.nodes[i];
        model.score(x, u);
        const double wg = rule.weights[i] * model.pdf(x);
        for (int a = 0; a < p; ++a)
            for (int b = a; b < p; ++b) gamma.at(a, b) += wg * u[a] * u[b];
    }
    for (int a = 0; a < p; ++a)
        for (int b = 0; b < a; ++b) gamma.at(a, b) = gamma.at(b, a);
    // Outer-product Fisher information must be positive definite for a
    // well-posed model.
    try {
        (void)cholesky(gamma);
    } catch (const not_positive_definite_error&) {
        throw not_positive_definite_error("Fisher information is not positive definite (ill-posed model)");
    }
    return gamma;
}

OrthonormalScore::OrthonormalScore(ModelPtr model, const QuadratureRule& rule)
    : model_(std::move(model)), p_(model_->param_dim()) {
    if (p_ > 16) throw parameter_error("parameter dimension above 16 is not supported");
    isqrt_ = principal_inverse_sqrt(fisher_information(*model_, rule));
}

void OrthonormalScore::eval(double x, std::span<double> out) const {
    if (p_ == 0) return;
    double u[16];
    model_->score(x, std::span<double>(u, static_cast<std::size_t>(p_)));
    for (int i = 0; i < p_; ++i) {
        double acc = 0.0;
        for (int j = 0; j < p_; ++j) acc += isqrt_.at(i, j) * u[j];
        out[i] = acc;
    }
}

std::vector<double> OrthonormalScore::eval_vec(double x) const {
    std::vector<double> out(p_);
    eval(x, out);
    return out;
}

EstimatorSpec psi_for(ModelPtr model, EstimatorSpec::Kind kind, const QuadratureRule& rule) {
    const int p = model->param_dim();
    EstimatorSpec spec;
    spec.kind = kind;
    spec.p = p;
    if (p == 0) {
        spec.psi = [](double, std::span<double>) {};
        return spec;
    }
    if (kind == EstimatorSpec::Kind::mle) {
        const SymMatrix gamma = fisher_information(*model, rule);
        // psi = Gamma^{-1} u, realized by solving Gamma psi = u per point via
        // a cached inverse.
        const SymMatrix s = principal_inverse_sqrt(gamma);
        const SymMatrix inv = s.mul(s);
        spec.psi = [model, inv, p](double x, std::span<double> out) {
            std::vector<double> u(p);
            model->score(x, u);
            for (int i = 0; i < p; ++i) {
                double acc = 0.0;
                for (int j = 0; j < p; ++j) acc += inv.at(i, j) * u[j];
                out[i] = acc;
            }
        };
        return spec;
    }
    if (kind != EstimatorSpec::Kind::moments)
        throw parameter_error("psi_for supports mle and moments estimators");

    // Method of moments: phi_k(x) = x^k - mu_k, psi = <phi^T,u^T>^{-1} phi.
    std::vector<double> mu(p, 0.0);
    for (int k = 1; k <= p; ++k)
        mu[k - 1] = inner_product([k](double x) { return std::pow(x, k); },
                                  [](double) { return 1.0; }, *model, rule);
    std::vector<double> cross(static_cast<std::size_t>(p) * p, 0.0);  // <phi_i, u_j>
    std::vector<double> u(p);
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const double x = rule.nodes[i];
        model->score(x, u);
        const double wg = rule.weights[i] * model->pdf(x);
        for (int a = 0; a < p; ++a) {
            const double phi_a = std::pow(x, a + 1) - mu[a];
            for (int b = 0; b < p; ++b) cross[a * p + b] += wg * phi_a * u[b];
        }
    }
    // Columns of C^{-1} from C col_i = e_i.
    std::vector<double> inv(static_cast<std::size_t>(p) * p, 0.0);
    for (int i = 0; i < p; ++i) {
        std::vector<double> rhs(p, 0.0);
        rhs[i] = 1.0;
        std::vector<double> col;
        try {
            col = solve_dense(cross, rhs, p);
        } catch (const numeric_error&) {
            throw numeric_error("degenerate moment system: <phi^T,u^T> is singular");
        }
        for (int j = 0; j < p; ++j) inv[j * p + i] = col[j];
    }
    auto mu_copy = mu;
    spec.psi = [model, inv, mu_copy, p](double x, std::span<double> out) {
        std::vector<double> phi(p);
        for (int k = 1; k <= p; ++k) phi[k - 1] = std::pow(x, k) - mu_copy[k - 1];
        for (int i = 0; i < p; ++i) {
            double acc = 0.0;
            for (int j = 0; j < p; ++j) acc += inv[i * p + j] * phi[j];
            out[i] = acc;
        }
    };
    return spec;
}

}  // namespace smoothtest
