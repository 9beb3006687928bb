#include "smoothtest/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace smoothtest {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw format_error("config line " + std::to_string(lineno) + " has no '='");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw format_error("config line " + std::to_string(lineno) + " has an empty key");
        cfg.kv_[key] = value;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

bool KeyValueConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string KeyValueConfig::get(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw format_error("missing config key: " + key);
    return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key) const {
    const std::string v = get(key);
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (trim(v.substr(used)).empty()) return x;
    } catch (const std::exception&) {
    }
    throw format_error("config key " + key + " is not a number: '" + v + "'");
}

double KeyValueConfig::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

int KeyValueConfig::get_int(const std::string& key) const {
    const double x = get_double(key);
    if (x != std::floor(x)) throw format_error("config key " + key + " is not an integer");
    return static_cast<int>(x);
}

int KeyValueConfig::get_int_or(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t KeyValueConfig::get_u64_or(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    return std::stoull(get(key));
}

bool KeyValueConfig::get_bool_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw format_error("config key " + key + " is not a boolean: '" + v + "'");
}

std::vector<std::string> KeyValueConfig::get_strings(const std::string& key) const {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(get(key));
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& s : get_strings(key)) {
        try {
            out.push_back(std::stod(s));
        } catch (const std::exception&) {
            throw format_error("config key " + key + " has a non-numeric entry: '" + s + "'");
        }
    }
    return out;
}

bool KeyValueConfig::has_section(const std::string& prefix) const {
    const std::string want = prefix + ".";
    const auto it = kv_.lower_bound(want);
    return it != kv_.end() && it->first.compare(0, want.size(), want) == 0;
}

std::vector<std::string> KeyValueConfig::section_names(const std::string& stem) const {
    std::vector<std::string> names;
    for (int i = 1;; ++i) {
        const std::string name = stem + std::to_string(i);
        if (!has_section(name)) break;
        names.push_back(name);
    }
    return names;
}

ModelPtr model_from_config(const KeyValueConfig& cfg, const std::string& prefix) {
    const std::string family = cfg.get(prefix + ".family");
    if (family == "uniform") {
        const auto s = cfg.get_doubles(prefix + ".support");
        if (s.size() != 2) throw format_error(prefix + ".support needs two values");
        return uniform_model(s[0], s[1]);
    }
    if (family == "truncnormal") {
        const auto s = cfg.get_doubles(prefix + ".support");
        if (s.size() != 2) throw format_error(prefix + ".support needs two values");
        return trunc_normal_model(cfg.get_double(prefix + ".mu"), cfg.get_double(prefix + ".sigma"),
                                  s[0], s[1], cfg.get_bool_or(prefix + ".free", false));
    }
    if (family == "trunclaplace") {
        const auto s = cfg.get_doubles(prefix + ".support");
        if (s.size() != 2) throw format_error(prefix + ".support needs two values");
        return trunc_laplace_model(cfg.get_double(prefix + ".mu"),
                                   cfg.get_double(prefix + ".scale"), s[0], s[1]);
    }
    if (family == "asymlaplace") {
        return asym_laplace_model(cfg.get_double(prefix + ".theta"),
                                  cfg.get_double(prefix + ".sigma"),
                                  cfg.get_double_or(prefix + ".beta", 1.0));
    }
    if (family == "line") {
        const auto s = cfg.get_doubles(prefix + ".support");
        if (s.size() != 2) throw format_error(prefix + ".support needs two values");
        return convolved_line_model(cfg.get_double(prefix + ".mu"),
                                    cfg.get_double(prefix + ".sigma"),
                                    cfg.get_double(prefix + ".scale"),
                                    cfg.get_double_or(prefix + ".power", 2.5), s[0], s[1]);
    }
    if (family == "mixture") {
        std::vector<ModelPtr> comps;
        for (int i = 1;; ++i) {
            const std::string cp = prefix + ".component" + std::to_string(i);
            if (!cfg.has(cp + ".family")) break;
            comps.push_back(model_from_config(cfg, cp));
        }
        if (comps.empty()) throw format_error(prefix + " mixture has no components");
        const std::string wspec = cfg.get(prefix + ".weights");
        if (wspec == "free") {
            std::vector<double> w(comps.size(), 1.0 / static_cast<double>(comps.size()));
            ModelPtr proto = mixture_model(std::move(comps), std::move(w), true);
            if (cfg.has(prefix + ".init_weights")) {
                const auto iw = cfg.get_doubles(prefix + ".init_weights");
                std::vector<double> params(iw.begin(), iw.end());
                const auto rest = proto->params();
                for (std::size_t i = params.size(); i < rest.size(); ++i)
                    params.push_back(rest[i]);
                proto = proto->with_params(params);
            }
            return proto;
        }
        return mixture_model(std::move(comps), cfg.get_doubles(prefix + ".weights"), false);
    }
    throw format_error("unknown model family: " + family);
}

FitOptions fit_options_from_config(const KeyValueConfig& cfg, const std::string& prefix,
                                   const ModelPtr& prototype) {
    FitOptions opt;
    const int p = prototype->param_dim();
    const Interval s = prototype->support();
    if (cfg.has(prefix + ".fit.lower"))
        opt.lower = cfg.get_doubles(prefix + ".fit.lower");
    if (cfg.has(prefix + ".fit.upper"))
        opt.upper = cfg.get_doubles(prefix + ".fit.upper");
    if (opt.lower.empty() || opt.upper.empty()) {
        const double width = std::isfinite(s.hi - s.lo) ? (s.hi - s.lo) : 40.0;
        const auto roles = prototype->param_roles();
        const auto values = prototype->params();
        opt.lower.assign(p, 0.0);
        opt.upper.assign(p, 0.0);
        int weight_head = 0;
        for (int i = 0; i < p; ++i) {
            switch (roles[i]) {
                case ParamRole::weight:
                    opt.lower[i] = 1e-3;
                    opt.upper[i] = 1.0 - 1e-3;
                    if (i == weight_head) ++weight_head;
                    break;
                case ParamRole::location:
                    opt.lower[i] = std::isfinite(s.lo) ? s.lo : values[i] - 5.0 * width;
                    opt.upper[i] = std::isfinite(s.hi) ? s.hi : values[i] + 5.0 * width;
                    break;
                case ParamRole::scale:
                    opt.lower[i] = width / 100.0;
                    opt.upper[i] = 2.0 * width;
                    break;
                case ParamRole::other:
                    opt.lower[i] = 1e-6;
                    opt.upper[i] = 1e6;
                    break;
            }
        }
        opt.simplex_head = weight_head;
    }
    if (cfg.has(prefix + ".fit.simplex_head"))
        opt.simplex_head = cfg.get_int(prefix + ".fit.simplex_head");
    opt.max_iterations = cfg.get_int_or(prefix + ".fit.max_iterations", 2000);
    if (static_cast<int>(opt.lower.size()) != p || static_cast<int>(opt.upper.size()) != p)
        throw format_error(prefix + ".fit bounds must have one entry per free parameter");
    return opt;
}

Fitter fitter_from_config(const KeyValueConfig& cfg, const std::string& prefix,
                          const ModelPtr& prototype) {
    const std::string kind = cfg.get_or(prefix + ".estimator", "auto");
    if (kind == "none" || prototype->param_dim() == 0)
        return [prototype](std::span<const double>) { return prototype; };
    if (kind == "root" || (kind == "auto" && prototype->family() == "asymlaplace")) {
        const auto sc = prototype->shape_constants();  // {theta, sigma}
        return make_asym_laplace_fitter(sc[0], sc[1]);
    }
    if (kind == "mle" || kind == "auto")
        return make_mle_fitter(prototype, fit_options_from_config(cfg, prefix, prototype));
    throw format_error("unknown estimator kind: " + kind);
}

RunSettings run_settings_from_config(const KeyValueConfig& cfg) {
    RunSettings rs;
    rs.n = cfg.get_int_or("run.n", 100);
    rs.replicates = cfg.get_int_or("run.replicates", 1000);
    rs.seed = cfg.get_u64_or("run.seed", 1);
    rs.threads = cfg.get_int_or("run.threads", 1);
    if (cfg.has("run.alpha")) rs.alphas = cfg.get_doubles("run.alpha");
    for (double a : rs.alphas)
        if (!(a > 0.0 && a < 1.0)) throw format_error("run.alpha values must lie in (0,1)");
    rs.method = cfg.get_or("run.method", "projected");
    if (rs.method != "projected" && rs.method != "parametric" && rs.method != "montecarlo")
        throw format_error("run.method must be projected, parametric or montecarlo");
    rs.quad_panels = cfg.get_int_or("quadrature.panels", 32);
    rs.quad_nodes = cfg.get_int_or("quadrature.nodes", 16);
    rs.basis_kind = cfg.get_or("basis.kind", "legendre");
    if (rs.basis_kind != "legendre" && rs.basis_kind != "k2")
        throw format_error("basis.kind must be legendre or k2");
    rs.basis_m = cfg.get_int_or("basis.m", 10);
    if (rs.basis_m < 1) throw format_error("basis.m must be >= 1");

    std::vector<std::string> selections{"order"};
    if (cfg.has("stat.selection")) selections = cfg.get_strings("stat.selection");
    const std::string form = cfg.get_or("stat.form", "unnormalized");
    for (const std::string& sel : selections) {
        std::optional<int> fm;
        if (sel == "fixed") fm = cfg.get_int("stat.fixed_m");
        rs.stats.push_back(StatConfig::parse(sel, form, rs.basis_m, fm));
    }
    rs.cache_dir = cfg.get_or("run.cache_dir", "cache");
    rs.out_dir = cfg.get_or("run.out", ".");
    return rs;
}

std::vector<double> load_data_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open data file: " + path.string());
    std::vector<double> data;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        try {
            std::size_t used = 0;
            const double x = std::stod(t, &used);
            if (!trim(t.substr(used)).empty()) throw std::invalid_argument("trailing text");
            if (!std::isfinite(x)) throw std::invalid_argument("non-finite");
            data.push_back(x);
        } catch (const std::exception&) {
            throw data_error("data file " + path.string() + " line " + std::to_string(lineno) +
                             " is not a single finite number: '" + t + "'");
        }
    }
    if (data.empty()) throw data_error("data file " + path.string() + " holds no observations");
    return data;
}

}  // namespace smoothtest
