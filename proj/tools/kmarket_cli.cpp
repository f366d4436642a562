// Command-line driver for the kinetic market simulator.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kmarket/experiments.hpp"

namespace {

struct CommonOptions {
    std::string config;
    std::string preset;
    std::optional<unsigned long long> seed;
    std::optional<std::size_t> ensemble;
    std::string out;
    bool fast = false;
    bool emit_bands = false;
    std::string mode;
    std::size_t threads = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o)
{
    cmd->add_option("-c,--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("-p,--preset", o.preset, "named preset");
    cmd->add_option("--seed", o.seed, "base seed");
    cmd->add_option("-e,--ensemble", o.ensemble, "ensemble size");
    cmd->add_option("-o,--out", o.out, "output directory");
    cmd->add_flag("--fast", o.fast, "35x35 grid, dt = 1e-4, ensemble 20");
    cmd->add_flag("--emit-bands", o.emit_bands, "write bands.csv");
    cmd->add_option("--mode", o.mode, "boltzmann or fp")->check(CLI::IsMember({"boltzmann", "fp"}));
    cmd->add_option("-j,--threads", o.threads, "worker threads (0 = all cores)");
}

kmarket::RunConfig resolve(const CommonOptions& o)
{
    kmarket::RunConfig cfg;
    if (!o.config.empty()) {
        cfg = kmarket::load_config(o.config);
        if (!o.preset.empty()) {
            throw CLI::ValidationError("--preset", "cannot be combined with --config (use a \"preset\" key)");
        }
    }
    else if (!o.preset.empty()) {
        cfg = kmarket::preset(o.preset);
    }
    else {
        cfg = kmarket::default_config();
    }
    if (o.fast) {
        kmarket::apply_fast(cfg);
    }
    if (o.seed) {
        cfg.scenario.seed = *o.seed;
    }
    if (o.ensemble) {
        cfg.scenario.ensemble = *o.ensemble;
    }
    if (!o.out.empty()) {
        cfg.output.dir = o.out;
    }
    if (o.emit_bands) {
        cfg.output.emit_bands = true;
    }
    if (!o.mode.empty()) {
        cfg.mode = o.mode == "fp" ? kmarket::Mode::FokkerPlanck : kmarket::Mode::Boltzmann;
    }
    cfg.validate();
    return cfg;
}

void report(const kmarket::EnsembleResult& res, const std::vector<std::filesystem::path>& files)
{
    std::cout << "runs: " << res.runs.size() << "\n"
              << "bubble %: " << kmarket::format_number(res.percentages.bubble) << "\n"
              << "crash %: " << kmarket::format_number(res.percentages.crash) << "\n";
    for (const auto& f : files) {
        std::cout << "wrote " << f.string() << "\n";
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Kinetic market simulator"};
    app.require_subcommand(1);

    CommonOptions run_opts;
    auto* run = app.add_subcommand("run", "single run");
    add_common(run, run_opts);

    CommonOptions ens_opts;
    auto* ens = app.add_subcommand("ensemble", "ensemble of runs with seeds base .. base+E-1");
    add_common(ens, ens_opts);

    CommonOptions sweep_opts;
    std::vector<double> alphas{0.05, 0.5, 0.95};
    std::vector<double> betas{0.25};
    auto* sweep = app.add_subcommand("sweep", "bubble/crash percentages over an (alpha, beta) grid");
    add_common(sweep, sweep_opts);
    sweep->add_option("--alpha", alphas, "alpha values")->delimiter(',');
    sweep->add_option("--beta", betas, "beta values")->delimiter(',');

    CommonOptions fp_opts;
    auto* fp = app.add_subcommand("fp", "Fokker-Planck run");
    add_common(fp, fp_opts);

    auto* presets = app.add_subcommand("presets", "list presets");
    std::string dump_name;
    presets->add_option("--show", dump_name, "print the resolved config of one preset");
    std::string presets_action = "list";
    presets->add_option("action", presets_action, "list (default)")->check(CLI::IsMember({"list"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*presets) {
            if (!dump_name.empty()) {
                std::cout << kmarket::config_to_json(kmarket::preset(dump_name)).dump(2) << "\n";
            }
            else {
                for (const auto& name : kmarket::preset_names()) {
                    std::cout << name << "\n";
                }
            }
            return 0;
        }
        if (*run) {
            auto cfg = resolve(run_opts);
            cfg.scenario.ensemble = 1;
            const auto res = kmarket::run_ensemble(cfg, run_opts.threads);
            report(res, kmarket::emit_results(res, cfg));
        }
        else if (*ens) {
            const auto cfg = resolve(ens_opts);
            const auto res = kmarket::run_ensemble(cfg, ens_opts.threads);
            report(res, kmarket::emit_results(res, cfg));
        }
        else if (*sweep) {
            const auto cfg = resolve(sweep_opts);
            const auto points = kmarket::run_sweep(cfg, alphas, betas, sweep_opts.threads);
            std::filesystem::create_directories(cfg.output.dir);
            const auto path = cfg.output.dir / "sweep.csv";
            kmarket::write_sweep_csv(path, points);
            for (const auto& p : points) {
                std::cout << "alpha " << kmarket::format_number(p.alpha) << " beta "
                          << kmarket::format_number(p.beta) << ": bubble "
                          << kmarket::format_number(p.percentages.bubble) << " %, crash "
                          << kmarket::format_number(p.percentages.crash) << " %\n";
            }
            std::cout << "wrote " << path.string() << "\n";
        }
        else if (*fp) {
            auto cfg = resolve(fp_opts);
            cfg.mode = kmarket::Mode::FokkerPlanck;
            const auto res = kmarket::run_ensemble(cfg, fp_opts.threads);
            report(res, kmarket::emit_results(res, cfg));
        }
    }
    catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
