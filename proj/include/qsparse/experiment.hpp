#pragma once

// Experiment driver behind the CLI: YAML config with presets, validation with
// line diagnostics, the rate x method sweep, and the run directory.
//
// Run directory layout:
//   config.yaml          normalized snapshot of the effective config
//   results.csv          one row per (rate, method); no timings, so reruns are byte-identical
//   report.yaml          per-run calibration, qubit counts, gates, p1, fidelity, wall time, complexity
//   images/<tag>.pgm     |sigma| per range cell, plus the same values as images/<tag>.csv
//   dumps/sigma_true.*   ground-truth scene (QSB1 binary and row,col,re,im CSV)
//   dumps/<tag>.*        recovered scene for each row of results.csv
//   traces/<tag>.trace   gate log of one QRA cell, only with trace: true

#include "qsparse/io.hpp"
#include "qsparse/qra.hpp"

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>

namespace qsparse {

enum class AperturePattern { random, uniform, block };

struct SceneSpec {
    std::size_t range_cells = 8;          // L_t
    std::size_t occupied_cells = 3;
    std::size_t scatterers_per_cell = 3;  // K_c
    std::optional<std::uint64_t> seed;    // unset: derived from the top-level seed
};

struct ExperimentConfig {
    std::string preset;
    RadarParams radar;
    SceneSpec scene;
    AperturePattern pattern = AperturePattern::random;
    std::vector<double> rates{1.0, 0.75, 0.5, 0.25};
    std::vector<ImagingMethod> methods{ImagingMethod::qra, ImagingMethod::omp};
    QRAConfig solver;
    std::optional<double> snr_db;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::string output_dir = "runs/default";
    bool trace = false;

    std::map<std::string, int> lines;  // dotted key -> 1-based source line, for diagnostics
};

inline std::string to_string(AperturePattern p) {
    switch (p) {
    case AperturePattern::random: return "random";
    case AperturePattern::uniform: return "uniform";
    case AperturePattern::block: return "block";
    }
    return "unknown";
}

inline std::string to_string(Debias d) {
    switch (d) {
    case Debias::none: return "none";
    case Debias::scale: return "scale";
    case Debias::support_lsq: return "support_lsq";
    }
    return "unknown";
}

inline std::string to_string(Normalization n) { return n == Normalization::none ? "none" : "unit_frobenius"; }

// ---------------------------------------------------------------------------
// Presets

/// Synthetic analogs of the two measured datasets: radar parameters, grid sizes
/// and the operating eta. The aperture rate is M_s / M_all with M_s = eta, which
/// together with unit-Frobenius normalization puts the spectrum at {1, 2}.
inline ExperimentConfig preset_config(std::string_view name) {
    ExperimentConfig c;
    c.preset = std::string(name);
    c.methods = {ImagingMethod::qra, ImagingMethod::omp};
    c.solver.normalization = Normalization::unit_frobenius;
    c.solver.lambda0 = 1.0;
    c.pattern = AperturePattern::random;
    if (name == "f16-like") {
        c.radar.carrier_frequency = 36.11425e9;  // centre of 34.2857 - 37.9428 GHz
        c.radar.bandwidth = 3.6571e9;
        c.radar.fast_time_samples = 401;
        c.radar.full_pulses = 128;
        c.radar.pulse_duration = 1e-6;
        c.radar.chirp_rate = c.radar.bandwidth / c.radar.pulse_duration;
        c.radar.prf = 1000.0;
        c.scene = {401, 8, 10, std::nullopt};
        c.solver.eta = 23.0;
        c.rates = {23.0 / 128.0};
    } else if (name == "yak42-like") {
        c.radar.carrier_frequency = 5.52e9;
        c.radar.bandwidth = 400e6;
        c.radar.fast_time_samples = 1024;
        c.radar.full_pulses = 256;
        c.radar.pulse_duration = 25.6e-6;
        c.radar.chirp_rate = c.radar.bandwidth / c.radar.pulse_duration;
        c.radar.prf = 400.0;
        c.scene = {1024, 8, 12, std::nullopt};
        c.solver.eta = 33.0;
        c.rates = {33.0 / 256.0};
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "' (expected f16-like or yak42-like)", 0);
    }
    return c;
}

inline ExperimentConfig default_config() {
    ExperimentConfig c;
    c.radar.carrier_frequency = 10e9;
    c.radar.bandwidth = 500e6;
    c.radar.fast_time_samples = 64;
    c.radar.full_pulses = 64;
    c.radar.pulse_duration = 1e-6;
    c.radar.chirp_rate = c.radar.bandwidth / c.radar.pulse_duration;
    c.radar.prf = 1000.0;
    c.solver.normalization = Normalization::unit_frobenius;
    return c;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

template <class T>
T scalar_as(const YAML::Node& n, const std::string& key) {
    if (!n.IsScalar()) throw ConfigError(key + " must be a scalar", line_of(n));
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(key + " has an invalid value '" + n.Scalar() + "'", line_of(n));
    }
}

inline std::size_t count_as(const YAML::Node& n, const std::string& key) {
    const auto v = scalar_as<long long>(n, key);
    if (v < 0) throw ConfigError(key + " must be non-negative", line_of(n));
    return static_cast<std::size_t>(v);
}

inline void reject_unknown(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& section) {
    if (!map.IsMap()) throw ConfigError((section.empty() ? "config" : section) + " must be a mapping", line_of(map));
    for (const auto& kv : map) {
        const auto key = kv.first.Scalar();
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + (section.empty() ? key : section + "." + key) + "'", line_of(kv.first));
    }
}

class Reader {
public:
    explicit Reader(ExperimentConfig& cfg) : cfg_(cfg) {}

    template <class F>
    void field(const YAML::Node& section, const std::string& prefix, const std::string& key, F&& assign) {
        const auto n = section[key];
        if (!n) return;
        const std::string dotted = prefix.empty() ? key : prefix + "." + key;
        cfg_.lines[dotted] = line_of(n);
        assign(n, dotted);
    }

private:
    ExperimentConfig& cfg_;
};

inline ImagingMethod parse_method(const YAML::Node& n) {
    const auto s = scalar_as<std::string>(n, "methods");
    if (s == "qra") return ImagingMethod::qra;
    if (s == "omp") return ImagingMethod::omp;
    if (s == "oracle") return ImagingMethod::oracle;
    throw ConfigError("unknown method '" + s + "' (expected qra, omp or oracle)", line_of(n));
}

}  // namespace detail

/// Parses YAML text. Syntax and type errors throw ConfigError with the line;
/// range checks are left to validate_config.
inline ExperimentConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(e.msg, e.mark.line >= 0 ? e.mark.line + 1 : 0);
    }
    if (!root || root.IsNull()) throw ConfigError("config is empty", 0);
    detail::reject_unknown(root,
                           {"preset", "radar", "scene", "aperture", "methods", "solver", "noise", "seed", "workers",
                            "output_dir", "trace"},
                           "");

    ExperimentConfig cfg = default_config();
    if (const auto p = root["preset"]) {
        try {
            cfg = preset_config(detail::scalar_as<std::string>(p, "preset"));
        } catch (const ConfigError& e) {
            if (e.line > 0) throw;
            throw ConfigError(e.what(), detail::line_of(p));
        }
        cfg.lines["preset"] = detail::line_of(p);
    }
    detail::Reader rd(cfg);
    using detail::count_as;
    using detail::scalar_as;

    if (const auto radar = root["radar"]) {
        detail::reject_unknown(radar,
                               {"carrier_frequency", "chirp_rate", "pulse_duration", "fast_time_samples", "full_pulses",
                                "bandwidth", "prf"},
                               "radar");
        bool chirp_given = false;
        rd.field(radar, "radar", "carrier_frequency", [&](auto& n, auto& k) { cfg.radar.carrier_frequency = scalar_as<double>(n, k); });
        rd.field(radar, "radar", "bandwidth", [&](auto& n, auto& k) { cfg.radar.bandwidth = scalar_as<double>(n, k); });
        rd.field(radar, "radar", "pulse_duration", [&](auto& n, auto& k) { cfg.radar.pulse_duration = scalar_as<double>(n, k); });
        rd.field(radar, "radar", "chirp_rate", [&](auto& n, auto& k) {
            cfg.radar.chirp_rate = scalar_as<double>(n, k);
            chirp_given = true;
        });
        rd.field(radar, "radar", "fast_time_samples", [&](auto& n, auto& k) { cfg.radar.fast_time_samples = count_as(n, k); });
        rd.field(radar, "radar", "full_pulses", [&](auto& n, auto& k) { cfg.radar.full_pulses = count_as(n, k); });
        rd.field(radar, "radar", "prf", [&](auto& n, auto& k) { cfg.radar.prf = scalar_as<double>(n, k); });
        if (!chirp_given && cfg.radar.pulse_duration > 0.0) cfg.radar.chirp_rate = cfg.radar.bandwidth / cfg.radar.pulse_duration;
    }

    if (const auto scene = root["scene"]) {
        detail::reject_unknown(scene, {"range_cells", "occupied_cells", "scatterers_per_cell", "seed"}, "scene");
        rd.field(scene, "scene", "range_cells", [&](auto& n, auto& k) { cfg.scene.range_cells = count_as(n, k); });
        rd.field(scene, "scene", "occupied_cells", [&](auto& n, auto& k) { cfg.scene.occupied_cells = count_as(n, k); });
        rd.field(scene, "scene", "scatterers_per_cell", [&](auto& n, auto& k) { cfg.scene.scatterers_per_cell = count_as(n, k); });
        rd.field(scene, "scene", "seed", [&](auto& n, auto& k) { cfg.scene.seed = scalar_as<std::uint64_t>(n, k); });
    }

    if (const auto ap = root["aperture"]) {
        detail::reject_unknown(ap, {"pattern", "rates"}, "aperture");
        rd.field(ap, "aperture", "pattern", [&](auto& n, auto& k) {
            const auto s = scalar_as<std::string>(n, k);
            if (s == "random") cfg.pattern = AperturePattern::random;
            else if (s == "uniform") cfg.pattern = AperturePattern::uniform;
            else if (s == "block") cfg.pattern = AperturePattern::block;
            else throw ConfigError("unknown aperture pattern '" + s + "' (expected random, uniform or block)", detail::line_of(n));
        });
        rd.field(ap, "aperture", "rates", [&](auto& n, auto& k) {
            cfg.rates.clear();
            if (n.IsScalar()) {
                cfg.rates.push_back(scalar_as<double>(n, k));
                return;
            }
            if (!n.IsSequence()) throw ConfigError(k + " must be a number or a list", detail::line_of(n));
            for (const auto& r : n) cfg.rates.push_back(scalar_as<double>(r, k));
        });
    }

    rd.field(root, "", "methods", [&](auto& n, auto& k) {
        cfg.methods.clear();
        if (n.IsScalar()) {
            cfg.methods.push_back(detail::parse_method(n));
            return;
        }
        if (!n.IsSequence()) throw ConfigError(k + " must be a list", detail::line_of(n));
        for (const auto& m : n) cfg.methods.push_back(detail::parse_method(m));
    });

    if (const auto sv = root["solver"]) {
        detail::reject_unknown(sv,
                               {"eta", "eta_grid", "lambda0", "normalization", "extra_precision_bits", "rotation_margin",
                                "fallback", "debias", "max_qubits"},
                               "solver");
        rd.field(sv, "solver", "eta", [&](auto& n, auto& k) {
            if (n.IsScalar() && n.Scalar() == "auto") cfg.solver.eta.reset();
            else cfg.solver.eta = scalar_as<double>(n, k);
        });
        rd.field(sv, "solver", "eta_grid", [&](auto& n, auto& k) {
            cfg.solver.eta_grid.clear();
            if (n.IsMap()) {
                detail::reject_unknown(n, {"min", "max", "step"}, k);
                const double lo = scalar_as<double>(n["min"], k + ".min");
                const double hi = scalar_as<double>(n["max"], k + ".max");
                const double step = n["step"] ? scalar_as<double>(n["step"], k + ".step") : 1.0;
                if (!(step > 0.0)) throw ConfigError(k + ".step must be positive", detail::line_of(n));
                for (double e = lo; e <= hi + 1e-12; e += step) cfg.solver.eta_grid.push_back(e);
            } else if (n.IsSequence()) {
                for (const auto& e : n) cfg.solver.eta_grid.push_back(scalar_as<double>(e, k));
            } else {
                throw ConfigError(k + " must be a list or a {min, max, step} mapping", detail::line_of(n));
            }
        });
        rd.field(sv, "solver", "lambda0", [&](auto& n, auto& k) { cfg.solver.lambda0 = scalar_as<double>(n, k); });
        rd.field(sv, "solver", "normalization", [&](auto& n, auto& k) {
            const auto s = scalar_as<std::string>(n, k);
            if (s == "none") cfg.solver.normalization = Normalization::none;
            else if (s == "unit_frobenius") cfg.solver.normalization = Normalization::unit_frobenius;
            else throw ConfigError("unknown normalization '" + s + "' (expected none or unit_frobenius)", detail::line_of(n));
        });
        rd.field(sv, "solver", "extra_precision_bits", [&](auto& n, auto& k) {
            cfg.solver.calibration.extra_precision_bits = static_cast<unsigned>(count_as(n, k));
        });
        rd.field(sv, "solver", "rotation_margin", [&](auto& n, auto& k) { cfg.solver.calibration.rotation_margin = count_as(n, k); });
        rd.field(sv, "solver", "max_qubits", [&](auto& n, auto& k) {
            cfg.solver.calibration.max_total_qubits = static_cast<unsigned>(count_as(n, k));
        });
        rd.field(sv, "solver", "fallback", [&](auto& n, auto& k) { cfg.solver.allow_fallback = scalar_as<bool>(n, k); });
        rd.field(sv, "solver", "debias", [&](auto& n, auto& k) {
            const auto s = scalar_as<std::string>(n, k);
            if (s == "none") cfg.solver.debias = Debias::none;
            else if (s == "scale") cfg.solver.debias = Debias::scale;
            else if (s == "support_lsq") cfg.solver.debias = Debias::support_lsq;
            else throw ConfigError("unknown debias '" + s + "' (expected none, scale or support_lsq)", detail::line_of(n));
        });
    }

    if (const auto noise = root["noise"]) {
        detail::reject_unknown(noise, {"snr_db"}, "noise");
        rd.field(noise, "noise", "snr_db", [&](auto& n, auto& k) {
            if (n.IsNull() || (n.IsScalar() && n.Scalar() == "none")) cfg.snr_db.reset();
            else cfg.snr_db = scalar_as<double>(n, k);
        });
    }

    rd.field(root, "", "seed", [&](auto& n, auto& k) { cfg.seed = scalar_as<std::uint64_t>(n, k); });
    rd.field(root, "", "workers", [&](auto& n, auto& k) { cfg.workers = static_cast<unsigned>(count_as(n, k)); });
    rd.field(root, "", "output_dir", [&](auto& n, auto& k) { cfg.output_dir = scalar_as<std::string>(n, k); });
    rd.field(root, "", "trace", [&](auto& n, auto& k) { cfg.trace = scalar_as<bool>(n, k); });
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path.string(), 0);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Validation

struct Diagnostic {
    enum class Severity { error, warning } severity = Severity::error;
    int line = 0;
    std::string message;

    bool is_error() const { return severity == Severity::error; }
};

inline std::ostream& operator<<(std::ostream& os, const Diagnostic& d) {
    os << (d.is_error() ? "error" : "warning");
    if (d.line > 0) os << ": line " << d.line;
    return os << ": " << d.message;
}

inline bool has_errors(const std::vector<Diagnostic>& diags) {
    return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) { return d.is_error(); });
}

inline std::size_t selected_pulses(const ExperimentConfig& cfg, double rate) {
    return ApertureSelection::selected_count(cfg.radar.full_pulses, rate);
}

/// Schema and range checks plus a dry-run calibration per rate. Never throws on
/// a bad config; everything is reported as a diagnostic.
inline std::vector<Diagnostic> validate_config(const ExperimentConfig& cfg) {
    std::vector<Diagnostic> out;
    auto line = [&](const std::string& key) {
        const auto it = cfg.lines.find(key);
        return it == cfg.lines.end() ? 0 : it->second;
    };
    auto error = [&](const std::string& key, std::string msg) { out.push_back({Diagnostic::Severity::error, line(key), std::move(msg)}); };
    auto warn = [&](const std::string& key, std::string msg) { out.push_back({Diagnostic::Severity::warning, line(key), std::move(msg)}); };

    try {
        cfg.radar.validate();
    } catch (const InvalidInput& e) {
        error("radar", std::string("radar: ") + e.what());
    }
    if (cfg.rates.empty()) error("aperture.rates", "aperture.rates is empty");
    for (double r : cfg.rates)
        if (!(r > 0.0) || r > 1.0) error("aperture.rates", "sampling rate " + io::detail::format_double(r) + " is outside (0, 1]");
    if (cfg.methods.empty()) error("methods", "methods is empty");
    if (cfg.scene.range_cells == 0) error("scene.range_cells", "scene.range_cells must be at least 1");
    if (cfg.scene.occupied_cells > cfg.scene.range_cells) error("scene.occupied_cells", "scene.occupied_cells exceeds scene.range_cells");
    if (cfg.scene.occupied_cells == 0) error("scene.occupied_cells", "scene.occupied_cells must be at least 1 so RMSE is defined");
    if (cfg.scene.scatterers_per_cell == 0 || cfg.scene.scatterers_per_cell > cfg.radar.full_pulses)
        error("scene.scatterers_per_cell", "scene.scatterers_per_cell must lie in [1, full_pulses]");
    if (cfg.workers == 0) error("workers", "workers must be at least 1");
    if (cfg.output_dir.empty()) error("output_dir", "output_dir is empty");
    if (!(cfg.solver.lambda0 > 0.0)) error("solver.lambda0", "solver.lambda0 must be positive");
    if (cfg.solver.eta && !(*cfg.solver.eta > 0.0)) error("solver.eta", "solver.eta must be positive");
    if (!cfg.solver.eta && cfg.solver.eta_grid.empty()) error("solver.eta_grid", "solver.eta_grid is empty");
    for (double e : cfg.solver.eta_grid)
        if (!(e > 0.0)) error("solver.eta_grid", "solver.eta_grid entries must be positive");
    if (cfg.solver.calibration.rotation_margin == 0) error("solver.rotation_margin", "solver.rotation_margin must be at least 1");
    if (cfg.snr_db && !std::isfinite(*cfg.snr_db)) error("noise.snr_db", "noise.snr_db must be finite");
    if (has_errors(out)) return out;
    for (double r : cfg.rates) {
        const std::size_t ms = selected_pulses(cfg, r);
        if (cfg.scene.scatterers_per_cell > ms)
            error("scene.scatterers_per_cell", "K_c = " + std::to_string(cfg.scene.scatterers_per_cell) + " exceeds M_s = "
                                                    + std::to_string(ms) + " at rate " + io::detail::format_double(r));
    }

    if (has_errors(out)) return out;
    const bool wants_circuit = std::any_of(cfg.methods.begin(), cfg.methods.end(), [](ImagingMethod m) { return m != ImagingMethod::omp; });
    for (double r : cfg.rates) {
        const std::size_t ms = selected_pulses(cfg, r);
        if (!wants_circuit) break;
        // Partial-Fourier rows are orthonormal, so the Gram spectrum is {1 (x M_s), 0}
        // before normalization; that is all the dry run needs.
        RVector gram = RVector::Zero(static_cast<Eigen::Index>(cfg.radar.full_pulses));
        const double unit = cfg.solver.normalization == Normalization::unit_frobenius ? 1.0 / static_cast<double>(ms) : 1.0;
        gram.tail(static_cast<Eigen::Index>(ms)).setConstant(unit);
        try {
            if (cfg.solver.eta) {
                calibrate_spectrum(shifted_spectrum(gram, *cfg.solver.eta, cfg.solver.lambda0), cfg.radar.full_pulses,
                                   *cfg.solver.eta, cfg.solver.lambda0, cfg.solver.calibration);
            } else {
                calibrate_eta(gram, cfg.solver.lambda0, cfg.solver.eta_grid, cfg.solver.calibration);
            }
        } catch (const CalibrationError& e) {
            const std::string key = cfg.solver.eta ? "solver.eta" : "solver.eta_grid";
            const std::string msg = "rate " + io::detail::format_double(r) + ": calibration fails (" + e.what() + ")";
            if (cfg.solver.allow_fallback)
                warn(key, msg + "; the generalized rotation fallback mode will be used");
            else
                warn(key, msg + "; set solver.fallback: true to use the generalized rotation fallback mode");
        } catch (const InvalidInput& e) {
            warn("radar.full_pulses", "rate " + io::detail::format_double(r) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Running

struct RunRow {
    double rate = 0.0;
    ImagingMethod method = ImagingMethod::omp;
    std::size_t m_s = 0;
    std::optional<double> rmse;
    std::optional<std::string> error;
    // Filled for the circuit-based methods.
    std::optional<HHLParams> params;
    std::optional<double> success_probability;
    std::optional<double> fidelity;
    std::size_t gate_count = 0;
    double kappa = 1.0;
    ComplexityReport complexity;
    std::vector<CellFailure> cell_failures;
    double flop_proxy = 0.0;
    double wall_seconds = 0.0;
};

struct ExperimentResult {
    std::vector<RunRow> rows;
    std::vector<std::string> warnings;
    std::filesystem::path run_dir;
    double wall_seconds = 0.0;

    bool any_failure() const {
        return std::any_of(rows.begin(), rows.end(), [](const RunRow& r) { return r.error || !r.cell_failures.empty(); });
    }
};

namespace detail {

/// Independent, reproducible seeds for each purpose and sweep point.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline ApertureSelection make_aperture(const ExperimentConfig& cfg, double rate, std::size_t rate_index) {
    const auto m_all = cfg.radar.full_pulses;
    switch (cfg.pattern) {
    case AperturePattern::uniform: return ApertureSelection::uniform(m_all, rate);
    case AperturePattern::block: return ApertureSelection::block_missing(m_all, rate);
    case AperturePattern::random: break;
    }
    return ApertureSelection::random(m_all, rate, derive_seed(cfg.seed, 1, rate_index));
}

inline std::string rate_tag(double rate) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << rate;
    return os.str();
}

inline std::string row_tag(const RunRow& r) { return "rate" + rate_tag(r.rate) + "_" + to_string(r.method); }

inline std::string csv_number(const std::optional<double>& v) { return v ? io::detail::format_double(*v) : std::string(); }

}  // namespace detail

inline CMatrix experiment_scene(const ExperimentConfig& cfg) {
    const std::uint64_t seed = cfg.scene.seed ? *cfg.scene.seed : detail::derive_seed(cfg.seed, 0, 0);
    return random_cell_scene(cfg.scene.range_cells, cfg.radar.full_pulses, cfg.scene.occupied_cells,
                             cfg.scene.scatterers_per_cell, seed);
}

inline void write_results_csv(std::ostream& os, const std::vector<RunRow>& rows) {
    using detail::csv_number;
    os << "rate,method,m_s,rmse,success_probability,gate_count,qubits_a,qubits_c,qubits_i,qubits_total,eta,kappa,"
          "omp_cost,qra_cost,qra_cost_per_cell,status\n";
    for (const auto& r : rows) {
        os << io::detail::format_double(r.rate) << ',' << to_string(r.method) << ',' << r.m_s << ',' << csv_number(r.rmse)
           << ',' << csv_number(r.success_probability) << ',';
        if (r.method == ImagingMethod::qra && !r.error) os << r.gate_count;
        os << ',';
        if (r.params && r.method == ImagingMethod::qra)
            os << r.params->n_a << ',' << r.params->n_c << ',' << r.params->n_input << ',' << r.params->total_qubits();
        else
            os << ",,,";
        os << ',';
        if (r.params) os << io::detail::format_double(r.params->eta) << ',' << io::detail::format_double(r.kappa);
        else os << ',';
        os << ',' << io::detail::format_double(r.complexity.omp_cost) << ','
           << (r.params ? io::detail::format_double(r.complexity.qra_cost) : std::string()) << ','
           << (r.params ? io::detail::format_double(r.complexity.qra_cost_per_cell) : std::string()) << ','
           << (r.error ? "failed" : (r.cell_failures.empty() ? "ok" : "partial")) << '\n';
    }
}

inline YAML::Node complexity_yaml(const ComplexityReport& c) {
    YAML::Node n;
    n["inputs"]["K_c"] = c.inputs.k_c;
    n["inputs"]["L_t"] = c.inputs.range_cells;
    n["inputs"]["M_all"] = c.inputs.full_pulses;
    n["inputs"]["M_s"] = c.inputs.selected;
    n["inputs"]["kappa"] = c.inputs.kappa;
    n["inputs"]["epsilon"] = c.epsilon;
    n["omp_cost"]["formula"] = "K_c * L_t * M_all * M_s";
    n["omp_cost"]["value"] = c.omp_cost;
    n["omp_cost"]["order"] = order_of_magnitude(c.omp_cost);
    n["qra_cost"]["formula"] = "kappa * L_t * log2(M_all) / epsilon";
    n["qra_cost"]["value"] = c.qra_cost;
    n["qra_cost"]["order"] = order_of_magnitude(c.qra_cost);
    n["qra_cost_per_cell"]["formula"] = "kappa * log2(M_all) / epsilon";
    n["qra_cost_per_cell"]["value"] = c.qra_cost_per_cell;
    n["qra_cost_per_cell"]["order"] = order_of_magnitude(c.qra_cost_per_cell);
    n["whole_scene_cost"]["formula"] = "kappa * log2(L_t^2 * M_all * M_s) / epsilon";
    n["whole_scene_cost"]["value"] = c.whole_scene_cost;
    n["whole_scene_cost"]["note"] = "formula only, not simulated";
    n["measured"]["gate_count"] = c.measured_gate_count;
    n["measured"]["omp_flop_proxy"] = c.measured_flop_proxy;
    return n;
}

inline YAML::Node params_yaml(const HHLParams& p) {
    YAML::Node n;
    n["mode"] = p.mode == RotationMode::lcm ? "lcm" : "generalized";
    n["eta"] = p.eta;
    n["lambda0"] = p.lambda0;
    n["n_lambda"] = p.n_lambda;
    n["registers"]["S"] = 1;
    n["registers"]["A"] = p.n_a;
    n["registers"]["B"] = 1;
    n["registers"]["C"] = p.n_c;
    n["registers"]["I"] = p.n_input;
    n["registers"]["total"] = p.total_qubits();
    if (p.mode == RotationMode::lcm) {
        n["N_a"] = p.lcm;
        n["N_sa"] = p.rotation_divisor;
        YAML::Node levels;
        for (auto l : p.levels) levels.push_back(l);
        levels.SetStyle(YAML::EmitterStyle::Flow);
        n["scaled_eigenvalue_levels"] = levels;
    } else {
        n["rotation_constant"] = p.rotation_constant;
    }
    return n;
}

inline YAML::Node config_yaml(const ExperimentConfig& c) {
    YAML::Node n;
    if (!c.preset.empty()) n["preset"] = c.preset;
    n["radar"]["carrier_frequency"] = c.radar.carrier_frequency;
    n["radar"]["bandwidth"] = c.radar.bandwidth;
    n["radar"]["chirp_rate"] = c.radar.chirp_rate;
    n["radar"]["pulse_duration"] = c.radar.pulse_duration;
    n["radar"]["fast_time_samples"] = c.radar.fast_time_samples;
    n["radar"]["full_pulses"] = c.radar.full_pulses;
    n["radar"]["prf"] = c.radar.prf;
    n["scene"]["range_cells"] = c.scene.range_cells;
    n["scene"]["occupied_cells"] = c.scene.occupied_cells;
    n["scene"]["scatterers_per_cell"] = c.scene.scatterers_per_cell;
    if (c.scene.seed) n["scene"]["seed"] = *c.scene.seed;
    n["aperture"]["pattern"] = to_string(c.pattern);
    for (double r : c.rates) n["aperture"]["rates"].push_back(r);
    for (auto m : c.methods) n["methods"].push_back(to_string(m));
    if (c.solver.eta) n["solver"]["eta"] = *c.solver.eta;
    else n["solver"]["eta"] = "auto";
    for (double e : c.solver.eta_grid) n["solver"]["eta_grid"].push_back(e);
    n["solver"]["lambda0"] = c.solver.lambda0;
    n["solver"]["normalization"] = to_string(c.solver.normalization);
    n["solver"]["extra_precision_bits"] = c.solver.calibration.extra_precision_bits;
    n["solver"]["rotation_margin"] = c.solver.calibration.rotation_margin;
    n["solver"]["max_qubits"] = c.solver.calibration.max_total_qubits;
    n["solver"]["fallback"] = c.solver.allow_fallback;
    n["solver"]["debias"] = to_string(c.solver.debias);
    if (c.snr_db) n["noise"]["snr_db"] = *c.snr_db;
    else n["noise"]["snr_db"] = "none";
    n["seed"] = c.seed;
    n["workers"] = c.workers;
    n["output_dir"] = c.output_dir;
    n["trace"] = c.trace;
    n["aperture"]["rates"].SetStyle(YAML::EmitterStyle::Flow);
    n["methods"].SetStyle(YAML::EmitterStyle::Flow);
    n["solver"]["eta_grid"].SetStyle(YAML::EmitterStyle::Flow);
    return n;
}

inline std::string emit_yaml(const YAML::Node& n) {
    YAML::Emitter e;
    e.SetDoublePrecision(17);
    e << n;
    return std::string(e.c_str()) + "\n";
}

/// Runs one (rate, method) point. Errors become row.error; nothing escapes.
inline RunRow run_point(const ExperimentConfig& cfg, const CMatrix& scene, double rate, std::size_t rate_index,
                        ImagingMethod method, const std::filesystem::path& run_dir) {
    const auto start = std::chrono::steady_clock::now();
    RunRow row;
    row.rate = rate;
    row.method = method;
    try {
        const auto aperture = detail::make_aperture(cfg, rate, rate_index);
        row.m_s = aperture.size();
        const auto dict = build_partial_fourier_dictionary(cfg.radar.full_pulses, aperture);
        std::optional<NoiseSpec> noise;
        if (cfg.snr_db) noise = NoiseSpec{*cfg.snr_db, detail::derive_seed(cfg.seed, 2, rate_index)};
        const CMatrix profiles = synth_range_profiles(scene, dict, noise);

        std::optional<QRASolver> solver;
        if (method != ImagingMethod::omp) {
            solver.emplace(dict.matrix, cfg.solver);
            row.params = solver->params();
            row.kappa = solver->system().condition_number;
        }
        // Sweep points already run in parallel; cells inside a point stay serial.
        const RangeCellImage img = image_with_solver(profiles, dict, cfg.scene.scatterers_per_cell, method,
                                                     solver ? &*solver : nullptr, 1);
        row.rmse = (img.coefficients - scene).norm() / scene.norm();
        row.cell_failures = img.failures;
        row.flop_proxy = img.flop_proxy;
        row.gate_count = img.gate_count;
        if (method == ImagingMethod::qra && img.solved_cells > 0) {
            row.success_probability = img.min_success_probability;
            row.fidelity = img.min_fidelity;
            // Gates of a single cell solve; all cells share one circuit.
            row.gate_count = img.gate_count / img.solved_cells;
        }

        ComplexityInputs ci;
        ci.k_c = cfg.scene.scatterers_per_cell;
        ci.range_cells = cfg.scene.range_cells;
        ci.full_pulses = cfg.radar.full_pulses;
        ci.selected = row.m_s;
        ci.kappa = row.kappa;
        ci.n_c = row.params ? row.params->n_c : 1;
        row.complexity = complexity_report(ci, row.gate_count, row.flop_proxy);

        const std::string tag = detail::row_tag(row);
        io::write_pgm(run_dir / "images" / (tag + ".pgm"), img.modulus);
        io::write_image_csv(run_dir / "images" / (tag + ".csv"), img.modulus);
        io::write_binary(run_dir / "dumps" / (tag + ".qsb"), img.coefficients);
        io::write_matrix_csv(run_dir / "dumps" / (tag + ".csv"), img.coefficients);

        if (cfg.trace && method == ImagingMethod::qra) {
            for (Eigen::Index r = 0; r < profiles.rows(); ++r) {
                const CVector y = profiles.row(r).transpose();
                if (y.squaredNorm() == 0.0) continue;
                std::vector<GateRecord> trace;
                solver->circuit().solve(solver->system_for(y).gamma, &trace);
                io::write_atomically(run_dir / "traces" / (tag + ".trace"), [&](std::ostream& os) {
                    os << "# range cell " << r << ", " << trace.size() << " gates\n";
                    for (const auto& g : trace) os << g << '\n';
                });
                break;
            }
        }
    } catch (const std::exception& e) {
        row.error = e.what();
        row.rmse.reset();
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return row;
}

inline YAML::Node report_yaml(const ExperimentResult& res) {
    YAML::Node n;
    n["run_dir"] = res.run_dir.string();
    n["wall_seconds"] = res.wall_seconds;
    n["status"] = res.any_failure() ? "partial_failure" : "ok";
    for (const auto& r : res.rows) {
        YAML::Node e;
        e["rate"] = r.rate;
        e["method"] = to_string(r.method);
        e["m_s"] = r.m_s;
        if (r.rmse) e["rmse"] = *r.rmse;
        if (r.error) e["error"] = *r.error;
        if (r.params) e["calibration"] = params_yaml(*r.params);
        if (r.success_probability) e["success_probability_min"] = *r.success_probability;
        if (r.fidelity) e["fidelity_min"] = *r.fidelity;
        if (r.method == ImagingMethod::qra) e["gate_count_per_cell"] = r.gate_count;
        if (r.method == ImagingMethod::omp) e["omp_flop_proxy"] = r.flop_proxy;
        if (!r.error) e["complexity"] = complexity_yaml(r.complexity);
        for (const auto& f : r.cell_failures) {
            YAML::Node fn;
            fn["cell"] = f.cell;
            fn["error"] = f.message;
            e["cell_failures"].push_back(fn);
        }
        e["wall_seconds"] = r.wall_seconds;
        n["runs"].push_back(e);
    }
    for (const auto& w : res.warnings) n["warnings"].push_back(w);
    return n;
}

/// RMSE should not fall as the rate drops; a violation is only a warning.
inline std::vector<std::string> trend_warnings(const ExperimentConfig& cfg, const std::vector<RunRow>& rows) {
    std::vector<std::string> out;
    for (auto m : cfg.methods) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : rows)
            if (r.method == m && r.rmse) pts.emplace_back(r.rate, *r.rmse);
        std::sort(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.first > b.first; });
        for (std::size_t i = 1; i < pts.size(); ++i)
            if (pts[i].second + 1e-9 < pts[i - 1].second)
                out.push_back(to_string(m) + ": rmse drops from " + io::detail::format_double(pts[i - 1].second) + " at rate "
                              + io::detail::format_double(pts[i - 1].first) + " to " + io::detail::format_double(pts[i].second)
                              + " at rate " + io::detail::format_double(pts[i].first));
    }
    return out;
}

/// Runs the full sweep into cfg.output_dir. Throws ConfigError on an invalid
/// config; per-point failures are recorded in the rows.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const auto diags = validate_config(cfg);
    for (const auto& d : diags)
        if (d.is_error()) throw ConfigError(d.message, d.line);

    const auto start = std::chrono::steady_clock::now();
    ExperimentResult res;
    res.run_dir = cfg.output_dir;
    std::filesystem::create_directories(res.run_dir);
    io::write_atomically(res.run_dir / "config.yaml", [&](std::ostream& os) { os << emit_yaml(config_yaml(cfg)); });

    const CMatrix scene = experiment_scene(cfg);
    io::write_binary(res.run_dir / "dumps" / "sigma_true.qsb", scene);
    io::write_matrix_csv(res.run_dir / "dumps" / "sigma_true.csv", scene);

    struct Point {
        std::size_t rate_index;
        ImagingMethod method;
    };
    std::vector<Point> points;
    for (std::size_t i = 0; i < cfg.rates.size(); ++i)
        for (auto m : cfg.methods) points.push_back({i, m});

    res.rows.resize(points.size());
    parallel_for(points.size(), cfg.workers, [&](std::size_t i) {
        res.rows[i] = run_point(cfg, scene, cfg.rates[points[i].rate_index], points[i].rate_index, points[i].method, res.run_dir);
    });

    for (const auto& d : diags) {
        std::ostringstream os;
        os << d;
        res.warnings.push_back(os.str());
    }
    for (auto& w : trend_warnings(cfg, res.rows)) res.warnings.push_back(std::move(w));

    io::write_atomically(res.run_dir / "results.csv", [&](std::ostream& os) { write_results_csv(os, res.rows); });
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    io::write_atomically(res.run_dir / "report.yaml", [&](std::ostream& os) { os << emit_yaml(report_yaml(res)); });
    return res;
}

/// Dry run: calibration and complexity per rate, without imaging. Backs `report`.
inline YAML::Node planning_report(const ExperimentConfig& cfg) {
    const auto diags = validate_config(cfg);
    for (const auto& d : diags)
        if (d.is_error()) throw ConfigError(d.message, d.line);
    YAML::Node n;
    n["config"] = config_yaml(cfg);
    for (std::size_t i = 0; i < cfg.rates.size(); ++i) {
        YAML::Node e;
        const double rate = cfg.rates[i];
        e["rate"] = rate;
        const auto aperture = detail::make_aperture(cfg, rate, i);
        e["m_s"] = aperture.size();
        ComplexityInputs ci;
        ci.k_c = cfg.scene.scatterers_per_cell;
        ci.range_cells = cfg.scene.range_cells;
        ci.full_pulses = cfg.radar.full_pulses;
        ci.selected = aperture.size();
        try {
            const auto dict = build_partial_fourier_dictionary(cfg.radar.full_pulses, aperture);
            const QRASolver solver(dict.matrix, cfg.solver);
            e["calibration"] = params_yaml(solver.params());
            ci.kappa = solver.system().condition_number;
            ci.n_c = solver.params().n_c;
            e["complexity"] = complexity_yaml(complexity_report(ci));
        } catch (const Error& ex) {
            e["calibration_error"] = ex.what();
        }
        n["rates"].push_back(e);
    }
    for (const auto& d : diags) {
        std::ostringstream os;
        os << d;
        n["diagnostics"].push_back(os.str());
    }
    return n;
}

}  // namespace qsparse
