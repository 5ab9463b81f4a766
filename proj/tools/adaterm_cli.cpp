// adaterm: run experiment configs, summarize results, emit surfaces.

#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "adaterm/adaterm.hpp"

namespace {

int cmd_summarize(const std::string& dir) {
    try {
        const auto rows = adaterm::collect_results(dir);
        const auto summary = adaterm::summarize(rows);
        std::ofstream os(std::filesystem::path(dir) / "summary.csv");
        adaterm::write_summary(summary, os);
        adaterm::write_summary(summary, std::cout);
        return adaterm::kExitOk;
    } catch (const adaterm::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
    } catch (const adaterm::ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
    }
    return adaterm::kExitConfig;
}

int cmd_surface(const std::string& kind, const std::string& out) {
    const auto k = adaterm::parse_grid_kind(kind);
    if (!k) {
        std::cerr << "error: unknown surface kind '" << kind << "' (dof-gradient, tau, dof-increment)\n";
        return adaterm::kExitConfig;
    }
    const auto table = adaterm::emit_grid(adaterm::GridSpec::defaults(*k));
    if (out.empty()) {
        adaterm::write_csv(table, std::cout);
    } else {
        std::ofstream os(out);
        if (!os) {
            std::cerr << "error: cannot write " << out << '\n';
            return adaterm::kExitConfig;
        }
        adaterm::write_csv(table, os);
    }
    return adaterm::kExitOk;
}

int cmd_verify(std::size_t points, std::uint64_t seed) {
    const auto rep = adaterm::verify_gradients(points, {1, 2, 5, 8}, adaterm::Rng(seed));
    std::cout << "gradient,max_rel_err\n"
              << "grad_m," << rep.max_err_m << '\n'
              << "grad_v," << rep.max_err_v << '\n'
              << "grad_nu_exact," << rep.max_err_nu << '\n';
    if (!rep.passes()) {
        std::cerr << "invariant failure: finite-difference error above 1e-5\n";
        return adaterm::kExitInvariant;
    }
    return adaterm::kExitOk;
}

int cmd_run(const std::string& path, std::optional<adaterm::ExperimentKind> only) {
    adaterm::HarnessConfig cfg;
    try {
        cfg = adaterm::load_config(path);
    } catch (const adaterm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return adaterm::kExitConfig;
    }
    return adaterm::run_harness(cfg, std::cout, std::cerr, only);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AdaTerm optimizer experiments"};
    app.require_subcommand(1);

    std::string config;
    auto* run = app.add_subcommand("run", "Run every experiment in a config file");
    run->add_option("config", config, "JSON config")->required();

    std::string dir;
    auto* summarize = app.add_subcommand("summarize", "Summarize results.csv files under a directory");
    summarize->add_option("dir", dir, "Results directory")->required();

    std::string kind, out;
    auto* surface = app.add_subcommand("surface", "Emit a grid as CSV");
    surface->add_option("kind", kind, "dof-gradient, tau or dof-increment")->required();
    surface->add_option("--out", out, "Output file (default stdout)");

    std::size_t points = 100;
    std::uint64_t seed = 0;
    auto* verify = app.add_subcommand("verify-gradients", "Finite-difference check of the t log-density gradients");
    verify->add_option("--points", points, "Random points per dimension");
    verify->add_option("--seed", seed, "Seed");

    auto* regret = app.add_subcommand("regret", "Run only the regret experiments of a config file");
    regret->add_option("config", config, "JSON config")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : adaterm::kExitConfig;
    }

    if (*run) return cmd_run(config, std::nullopt);
    if (*regret) return cmd_run(config, adaterm::ExperimentKind::Regret);
    if (*summarize) return cmd_summarize(dir);
    if (*surface) return cmd_surface(kind, out);
    if (*verify) return cmd_verify(points, seed);
    return adaterm::kExitConfig;
}
