// Command-line driver: goodness-of-fit tests, null-distribution simulation,
// power studies, K2 operator diagnostics and QQ exports.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "smoothtest/workflow.hpp"

namespace {

using namespace smoothtest;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIntegrity = 4;

struct CommonFlags {
    std::string config_path;
    std::string data_path;
    std::string out;
    std::string cache_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int replicates = 0;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_config = true) {
    auto* c = cmd->add_option("--config", flags.config_path, "configuration file");
    if (needs_config) c->required();
    cmd->add_option("--out", flags.out, "output directory or file");
    cmd->add_option("--cache-dir", flags.cache_dir, "null-distribution cache directory");
    cmd->add_option("--seed", flags.seed, "override run.seed")->each([&](const std::string&) {
        flags.seed_set = true;
    });
    cmd->add_option("--replicates", flags.replicates, "override run.replicates");
    cmd->add_option("--threads", flags.threads, "override run.threads");
}

KeyValueConfig load_config(const CommonFlags& flags) {
    KeyValueConfig cfg = KeyValueConfig::parse_file(flags.config_path);
    if (flags.seed_set) cfg.set("run.seed", std::to_string(flags.seed));
    if (flags.replicates > 0) cfg.set("run.replicates", std::to_string(flags.replicates));
    if (flags.threads > 0) cfg.set("run.threads", std::to_string(flags.threads));
    if (!flags.cache_dir.empty()) cfg.set("run.cache_dir", flags.cache_dir);
    if (!flags.out.empty()) cfg.set("run.out", flags.out);
    return cfg;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const integrity_error& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return kExitIntegrity;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-driven smooth goodness-of-fit tests"};
    app.require_subcommand(1);

    CommonFlags gof_flags, sim_flags, power_flags, check_flags;
    std::string qq_a, qq_b, qq_out;

    auto* gof = app.add_subcommand("gof-test", "fit the model, test it against the data");
    add_common(gof, gof_flags);
    gof->add_option("--data", gof_flags.data_path, "observations, one per line")->required();

    auto* sim = app.add_subcommand("simulate-null", "simulate and cache a null distribution");
    add_common(sim, sim_flags);

    auto* power = app.add_subcommand("power-study", "rejection rates against a known truth");
    add_common(power, power_flags);

    auto* check = app.add_subcommand("k2-check", "verify the K2 operator identities");
    add_common(check, check_flags);

    auto* qq = app.add_subcommand("qq-export", "paired quantiles of two null caches");
    qq->add_option("--a", qq_a, "first null cache file")->required();
    qq->add_option("--b", qq_b, "second null cache file")->required();
    qq->add_option("--out", qq_out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (gof->parsed()) {
        return run_guarded([&] {
            const KeyValueConfig cfg = load_config(gof_flags);
            const std::vector<double> data = load_data_file(gof_flags.data_path);
            const TestReport report = run_gof_test(cfg, data);
            const RunSettings rs = run_settings_from_config(cfg);
            std::filesystem::create_directories(rs.out_dir);
            const auto path = rs.out_dir / "report.json";
            std::ofstream out(path, std::ios::trunc);
            out << report.dump() << "\n";
            if (!out) throw data_error("cannot write report: " + path.string());
            std::cout << report.dump() << "\n";
            return kExitOk;
        });
    }
    if (sim->parsed()) {
        return run_guarded([&] {
            const KeyValueConfig cfg = load_config(sim_flags);
            const auto nulls = run_simulate_null(cfg);
            const RunSettings rs = run_settings_from_config(cfg);
            std::filesystem::create_directories(rs.out_dir);
            for (const SimulatedNull& sn : nulls) {
                const auto csv =
                    rs.out_dir / (sn.file.stem().string() + ".csv");
                export_null_csv(csv, sn.null);
                std::cout << (sn.cache_hit ? "cache-hit " : "simulated ")
                          << sn.null.stat_descriptor << " R=" << sn.null.size() << " -> "
                          << sn.file.string() << " (" << csv.string() << ")\n";
            }
            return kExitOk;
        });
    }
    if (power->parsed()) {
        return run_guarded([&] {
            const KeyValueConfig cfg = load_config(power_flags);
            const auto rows = run_power_study(cfg);
            const RunSettings rs = run_settings_from_config(cfg);
            std::filesystem::path out_path = rs.out_dir;
            if (out_path.extension() != ".csv") {
                std::filesystem::create_directories(out_path);
                out_path /= "power.csv";
            }
            write_power_csv(out_path, rows);
            for (const PowerRow& r : rows)
                std::cout << r.model_label << " " << r.basis << " " << r.stat
                          << " alpha=" << r.alpha << " power=" << r.power << " se=" << r.std_error
                          << "\n";
            std::cout << "written " << out_path.string() << "\n";
            return kExitOk;
        });
    }
    if (check->parsed()) {
        return run_guarded([&] {
            const KeyValueConfig cfg = load_config(check_flags);
            const K2CheckOutcome outcome = run_k2_check(cfg);
            nlohmann::json j;
            j["residuals"] = outcome.diagnostics.to_map();
            j["max_residual"] = outcome.diagnostics.max_residual();
            j["threshold"] = outcome.threshold;
            j["pass"] = outcome.pass;
            std::cout << j.dump(2) << "\n";
            if (!check_flags.out.empty()) {
                std::ofstream out(check_flags.out, std::ios::trunc);
                out << j.dump(2) << "\n";
            }
            return outcome.pass ? kExitOk : kExitIntegrity;
        });
    }
    if (qq->parsed()) {
        return run_guarded([&] {
            const NullDistribution a = load_null(qq_a);
            const NullDistribution b = load_null(qq_b);
            const auto rows = qq_pairs(a, b);
            write_qq_csv(qq_out, rows);
            std::cout << "written " << qq_out << " (" << rows.size() << " rows)\n";
            return kExitOk;
        });
    }
    return kExitUsage;
}
