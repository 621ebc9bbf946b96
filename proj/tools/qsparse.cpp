// qsparse: sparse-aperture radar reconstruction experiments.
//
//   qsparse run      --config FILE [--output-dir DIR] [--seed N] [--workers N] [--trace]
//   qsparse validate --config FILE
//   qsparse report   --config FILE [--output FILE]
//
// Exit status: 0 success, 1 partial failure (some sweep point or range cell
// failed), 2 config error.

#include "qsparse/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

struct Overrides {
    std::string output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    bool trace = false;
};

qsparse::ExperimentConfig load(const std::string& path, const Overrides& o) {
    auto cfg = qsparse::load_config(path);
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    if (o.seed) cfg.seed = *o.seed;
    if (o.workers) cfg.workers = *o.workers;
    if (o.trace) cfg.trace = true;
    return cfg;
}

int cmd_run(const std::string& path, const Overrides& o) {
    const auto cfg = load(path, o);
    const auto res = qsparse::run_experiment(cfg);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& r : res.rows) {
        std::cout << "rate " << r.rate << "  " << qsparse::to_string(r.method) << "  M_s " << r.m_s;
        if (r.error)
            std::cout << "  FAILED: " << *r.error;
        else
            std::cout << "  rmse " << *r.rmse;
        if (!r.cell_failures.empty()) std::cout << "  (" << r.cell_failures.size() << " cells failed)";
        std::cout << '\n';
    }
    std::cout << "results: " << (res.run_dir / "results.csv").string() << '\n';
    return res.any_failure() ? kExitPartial : kExitOk;
}

int cmd_validate(const std::string& path) {
    const auto cfg = qsparse::load_config(path);
    const auto diags = qsparse::validate_config(cfg);
    for (const auto& d : diags) std::cout << path << ": " << d << '\n';
    if (qsparse::has_errors(diags)) return kExitConfig;
    if (diags.empty()) std::cout << path << ": ok\n";
    return kExitOk;
}

int cmd_report(const std::string& path, const Overrides& o, const std::string& output) {
    const auto cfg = load(path, o);
    const std::string text = qsparse::emit_yaml(qsparse::planning_report(cfg));
    if (output.empty())
        std::cout << text;
    else
        qsparse::io::write_atomically(output, [&](std::ostream& os) { os << text; });
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-aperture radar reconstruction: OMP versus an HHL-based solver on a statevector simulator"};
    app.require_subcommand(1);

    std::string config;
    std::string output;
    Overrides o;
    std::uint64_t seed = 0;
    unsigned workers = 0;

    auto* run = app.add_subcommand("run", "Run the rate x method sweep and write a run directory");
    run->add_option("-c,--config", config, "Experiment config (YAML)")->required();
    run->add_option("-o,--output-dir", o.output_dir, "Override output_dir");
    auto* seed_opt = run->add_option("-s,--seed", seed, "Override the top-level seed");
    auto* workers_opt = run->add_option("-j,--workers", workers, "Override the worker count")->check(CLI::PositiveNumber);
    run->add_flag("--trace", o.trace, "Write a gate trace of one QRA cell per sweep point");

    auto* validate = app.add_subcommand("validate", "Check a config and print diagnostics");
    validate->add_option("-c,--config", config, "Experiment config (YAML)")->required();

    auto* report = app.add_subcommand("report", "Print calibration and complexity for a config without imaging");
    report->add_option("-c,--config", config, "Experiment config (YAML)")->required();
    report->add_option("--output", output, "Write the report here instead of stdout");
    auto* report_seed = report->add_option("-s,--seed", seed, "Override the top-level seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    if (seed_opt->count() > 0 || report_seed->count() > 0) o.seed = seed;
    if (workers_opt->count() > 0) o.workers = workers;

    try {
        if (*run) return cmd_run(config, o);
        if (*validate) return cmd_validate(config);
        if (*report) return cmd_report(config, o, output);
    } catch (const qsparse::ConfigError& e) {
        std::cerr << config << ": " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitPartial;
    }
    return kExitOk;
}
