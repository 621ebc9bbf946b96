#pragma once

// Quantum-enhanced reconstruction (QRA): ridge system, calibrated HHL solve,
// top-K selection and debiasing, plus the per-range-cell imaging driver and
// the cost formulas that compare it with OMP.

#include "qsparse/hhl.hpp"
#include "qsparse/radar_model.hpp"
#include "qsparse/sparse_solvers.hpp"

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

namespace qsparse {

enum class Normalization {
    none,
    unit_frobenius,  // Phi / ||Phi||_F and Y / ||Phi||_F; the recovered sigma is unchanged
};

struct QRAConfig {
    std::optional<double> eta;              // unset: search eta_grid
    std::vector<double> eta_grid = default_eta_grid();
    double lambda0 = 1.0;
    Normalization normalization = Normalization::none;
    CalibrationOptions calibration;
    bool allow_fallback = false;            // generalized rotation when no eta calibrates
    Debias debias = Debias::support_lsq;

    static std::vector<double> default_eta_grid() {
        std::vector<double> g;
        for (int e = 1; e <= 64; ++e) g.push_back(e);
        return g;
    }
};

/// Spectrum of Xi = eta * G + lambda0 I given the ascending eigenvalues of G = Phi^H Phi.
inline std::vector<double> shifted_spectrum(const RVector& gram_eigenvalues, double eta, double lambda0) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(gram_eigenvalues.size()));
    for (Eigen::Index j = 0; j < gram_eigenvalues.size(); ++j) out.push_back(eta * std::max(0.0, gram_eigenvalues(j)) + lambda0);
    return out;
}

struct EtaChoice {
    double eta = 0.0;
    HHLParams params;
};

/// Picks the eta in `grid` whose calibrated circuit uses the fewest qubits;
/// ties go to the smaller eta. Throws CalibrationError carrying the residuals of
/// the first grid point when nothing calibrates.
inline EtaChoice calibrate_eta(const RVector& gram_eigenvalues, double lambda0, const std::vector<double>& grid,
                               const CalibrationOptions& opt = {}) {
    if (grid.empty()) throw InvalidInput("empty eta grid");
    std::optional<EtaChoice> best;
    std::vector<double> first_residuals;
    bool have_residuals = false;
    const auto n = static_cast<std::size_t>(gram_eigenvalues.size());
    for (double eta : grid) {
        if (!(eta > 0.0)) throw InvalidInput("eta grid entries must be positive");
        try {
            const auto spectrum = shifted_spectrum(gram_eigenvalues, eta, lambda0);
            HHLParams p = calibrate_spectrum(spectrum, n, eta, lambda0, opt);
            if (!best || p.total_qubits() < best->params.total_qubits()
                || (p.total_qubits() == best->params.total_qubits() && eta < best->eta))
                best = EtaChoice{eta, std::move(p)};
        } catch (const CalibrationError& e) {
            if (!have_residuals) {
                first_residuals = e.fractional_residuals;
                have_residuals = true;
            }
        }
    }
    if (!best)
        throw CalibrationError("no eta in the search grid gives an integral scaled spectrum; widen the eta grid or enable "
                               "the generalized rotation fallback",
                               first_residuals);
    return *best;
}

struct QRAResult {
    RecoveryResult recovery;  // estimate = debiased K-sparse sigma, dense = sigma-tilde
    CVector raw_top_k;        // top-K of sigma-tilde before debiasing
    HHLOutcome hhl;
    HHLParams params;
    double kappa = 1.0;
};

/// Everything that depends only on Phi: normalization, eta, Xi and its spectrum,
/// the calibrated parameters and the circuit. reconstruct() is const and may be
/// called from several threads for different data vectors.
class QRASolver {
public:
    QRASolver(const CMatrix& phi, QRAConfig config) : config_(std::move(config)) {
        if (phi.size() == 0) throw InvalidInput("empty measurement matrix");
        if (!phi.allFinite()) throw InvalidInput("non-finite entries in Phi");
        scale_ = 1.0;
        if (config_.normalization == Normalization::unit_frobenius) {
            scale_ = phi.norm();
            if (!(scale_ > 0.0)) throw InvalidInput("measurement matrix is zero");
        }
        phi_ = phi / scale_;

        const CMatrix gram = phi_.adjoint() * phi_;
        if (config_.eta) {
            eta_ = *config_.eta;
        } else {
            Eigen::SelfAdjointEigenSolver<CMatrix> es(gram, Eigen::EigenvaluesOnly);
            if (es.info() != Eigen::Success) throw DegenerateSystem("Gram eigendecomposition failed");
            try {
                eta_ = calibrate_eta(es.eigenvalues(), config_.lambda0, config_.eta_grid, config_.calibration).eta;
            } catch (const CalibrationError&) {
                if (!config_.allow_fallback) throw;
                eta_ = config_.eta_grid.front();
            }
        }

        system_ = build_regularized_system(phi_, CVector::Zero(phi_.rows()), eta_, config_.lambda0);
        try {
            params_ = calibrate_params(system_, config_.calibration);
        } catch (const CalibrationError&) {
            if (!config_.allow_fallback) throw;
            params_ = generalized_params(system_, config_.calibration);
        }
        circuit_.emplace(system_, params_);
    }

    const HHLParams& params() const { return params_; }
    const RegularizedSystem& system() const { return system_; }
    const HHLCircuit& circuit() const { return *circuit_; }
    const CMatrix& normalized_phi() const { return phi_; }
    double eta() const { return eta_; }
    double phi_scale() const { return scale_; }

    /// The same system for a concrete data vector (Y already divided by the Phi scale).
    RegularizedSystem system_for(const CVector& y) const {
        RegularizedSystem sys = system_;
        sys.gamma = phi_.adjoint() * (y / scale_);
        return sys;
    }

    QRAResult reconstruct(const CVector& y, std::size_t k) const {
        check_inputs(y, k);
        const CVector yn = y / scale_;
        const CVector gamma = phi_.adjoint() * yn;

        QRAResult out;
        out.params = params_;
        out.kappa = system_.condition_number;
        out.hhl.qubit_count = circuit_->layout().total_qubits();
        out.hhl.qubits_a = params_.n_a;
        out.hhl.qubits_c = params_.n_c;
        out.hhl.qubits_i = params_.n_input;

        CVector dense;
        if (gamma.norm() == 0.0) {
            dense = CVector::Zero(phi_.cols());
        } else {
            out.hhl = circuit_->solve(gamma);
            dense = out.hhl.solution;
        }
        finish(out, dense, yn, k, "qra");
        return out;
    }

    /// Classical shadow of reconstruct(): direct solve of the same system, same top-K and debias.
    QRAResult reconstruct_classically(const CVector& y, std::size_t k) const {
        check_inputs(y, k);
        const CVector yn = y / scale_;
        QRAResult out;
        out.params = params_;
        out.kappa = system_.condition_number;
        RegularizedSystem sys = system_;
        sys.gamma = phi_.adjoint() * yn;
        const CVector dense = sys.gamma.norm() == 0.0 ? CVector::Zero(phi_.cols()) : direct_solve(sys);
        finish(out, dense, yn, k, "oracle");
        return out;
    }

private:
    void check_inputs(const CVector& y, std::size_t k) const {
        if (y.size() != phi_.rows()) throw InvalidInput("Y length does not match Phi rows");
        if (!y.allFinite()) throw InvalidInput("non-finite entries in Y");
        if (k == 0 || k > static_cast<std::size_t>(phi_.cols())) throw InvalidInput("K must lie in [1, P]");
    }

    void finish(QRAResult& out, const CVector& dense, const CVector& yn, std::size_t k, const char* tag) const {
        RecoveryResult picked = top_k(dense, k);
        out.raw_top_k = picked.estimate;
        out.recovery.dense = dense;
        out.recovery.support = picked.support;
        out.recovery.estimate = debias(phi_, yn, picked.estimate, picked.support, config_.debias);
        out.recovery.residual_norm = (yn - phi_ * out.recovery.estimate).norm() * scale_;
        out.recovery.method = tag;
    }

    QRAConfig config_;
    CMatrix phi_;
    double scale_ = 1.0;
    double eta_ = 1.0;
    RegularizedSystem system_;
    HHLParams params_;
    std::optional<HHLCircuit> circuit_;
};

/// Algorithm 1 on one data vector.
inline QRAResult qra_reconstruct(const CMatrix& phi, const CVector& y, std::size_t k, const QRAConfig& config = {}) {
    return QRASolver(phi, config).reconstruct(y, k);
}

/// Runs body(i) for i in [0, count) on up to `workers` threads. Each index is
/// visited once; the caller writes results into per-index slots so the output
/// does not depend on scheduling. The first exception is rethrown after join.
inline void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body) {
    workers = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

enum class ImagingMethod { qra, omp, oracle };

inline std::string to_string(ImagingMethod m) {
    switch (m) {
    case ImagingMethod::qra: return "qra";
    case ImagingMethod::omp: return "omp";
    case ImagingMethod::oracle: return "oracle";
    }
    return "unknown";
}

struct CellFailure {
    std::size_t cell;
    std::string message;
};

struct RangeCellImage {
    CMatrix coefficients;                // L_t x M_all recovered sigma per cell
    RMatrix modulus;                     // |coefficients|
    std::vector<CellFailure> failures;   // cells that threw and were zero-filled, sorted by cell
    std::size_t gate_count = 0;          // summed over QRA cells
    double flop_proxy = 0.0;             // summed over OMP cells
    double min_success_probability = 1.0;
    double min_fidelity = 1.0;           // QRA dense solution vs direct solve, worst cell
    std::size_t solved_cells = 0;
};

/// Cross-range recovery in every range cell of `profiles` (L_t x M_s) with the
/// shared dictionary. All-zero cells are skipped and stay zero. `solver` must be
/// built on the same dictionary; it is required for the qra and oracle methods.
inline RangeCellImage image_with_solver(const CMatrix& profiles, const MeasurementMatrix& dictionary, std::size_t k_c,
                                        ImagingMethod method, const QRASolver* solver, unsigned workers = 1) {
    if (profiles.cols() != dictionary.rows()) throw InvalidInput("profile width does not match the dictionary rows");
    if (method != ImagingMethod::omp && solver == nullptr) throw InvalidInput("qra and oracle imaging need a solver");
    const auto cells = static_cast<std::size_t>(profiles.rows());
    const auto width = dictionary.cols();

    struct CellResult {
        CVector sigma;
        std::optional<std::string> error;
        std::size_t gates = 0;
        double flops = 0.0;
        double p1 = 1.0;
        double fidelity = 1.0;
        bool solved = false;
    };
    std::vector<CellResult> slots(cells);

    parallel_for(cells, workers, [&](std::size_t r) {
        CellResult& slot = slots[r];
        const CVector y = profiles.row(static_cast<Eigen::Index>(r)).transpose();
        slot.sigma = CVector::Zero(width);
        if (y.squaredNorm() == 0.0) return;
        try {
            switch (method) {
            case ImagingMethod::omp: {
                auto res = omp(dictionary.matrix, y, k_c);
                slot.sigma = res.estimate;
                slot.flops = res.flop_proxy;
                break;
            }
            case ImagingMethod::qra: {
                auto res = solver->reconstruct(y, k_c);
                slot.sigma = res.recovery.estimate;
                slot.gates = res.hhl.gate_count;
                slot.p1 = res.hhl.success_probability;
                slot.fidelity = fidelity(res.recovery.dense, direct_solve(solver->system_for(y)));
                break;
            }
            case ImagingMethod::oracle:
                slot.sigma = solver->reconstruct_classically(y, k_c).recovery.estimate;
                break;
            }
            slot.solved = true;
        } catch (const Error& e) {
            slot.sigma = CVector::Zero(width);
            slot.error = e.what();
        }
    });

    RangeCellImage img;
    img.coefficients = CMatrix::Zero(static_cast<Eigen::Index>(cells), width);
    for (std::size_t r = 0; r < cells; ++r) {
        const auto& s = slots[r];
        img.coefficients.row(static_cast<Eigen::Index>(r)) = s.sigma.transpose();
        if (s.error) img.failures.push_back({r, *s.error});
        img.gate_count += s.gates;
        img.flop_proxy += s.flops;
        if (s.solved) {
            ++img.solved_cells;
            img.min_success_probability = std::min(img.min_success_probability, s.p1);
            img.min_fidelity = std::min(img.min_fidelity, s.fidelity);
        }
    }
    img.modulus = img.coefficients.cwiseAbs();
    return img;
}

/// image_with_solver with a solver built here from `config`.
inline RangeCellImage image_per_range_cell(const CMatrix& profiles, const MeasurementMatrix& dictionary, std::size_t k_c,
                                           ImagingMethod method, const QRAConfig& config = {}, unsigned workers = 1) {
    std::optional<QRASolver> solver;
    if (method != ImagingMethod::omp) solver.emplace(dictionary.matrix, config);
    return image_with_solver(profiles, dictionary, k_c, method, solver ? &*solver : nullptr, workers);
}

// ---------------------------------------------------------------------------
// Complexity accounting

struct ComplexityInputs {
    std::size_t k_c = 1;          // per-cell sparsity
    std::size_t range_cells = 1;  // L_t
    std::size_t full_pulses = 1;  // M_all
    std::size_t selected = 1;     // M_s
    double kappa = 1.0;
    unsigned n_c = 1;             // epsilon = 2^-n_c
};

struct ComplexityReport {
    ComplexityInputs inputs;
    double epsilon = 0.0;
    double omp_cost = 0.0;          // K_c L_t M_all M_s
    double qra_cost = 0.0;          // kappa L_t log2(M_all) / epsilon
    double qra_cost_per_cell = 0.0; // kappa log2(M_all) / epsilon
    double whole_scene_cost = 0.0;  // kappa log2(L_t^2 M_all M_s) / epsilon, formula only
    std::size_t measured_gate_count = 0;
    double measured_flop_proxy = 0.0;
};

/// floor(log10(x)): the power of ten a cost is "of the order of".
inline int order_of_magnitude(double x) {
    if (!(x > 0.0)) throw InvalidInput("order of magnitude of a non-positive number");
    return static_cast<int>(std::floor(std::log10(x)));
}

inline ComplexityReport complexity_report(const ComplexityInputs& in, std::size_t gate_count = 0, double flop_proxy = 0.0) {
    if (in.k_c == 0 || in.range_cells == 0 || in.full_pulses == 0 || in.selected == 0)
        throw InvalidInput("complexity inputs must be positive");
    if (!(in.kappa >= 1.0)) throw InvalidInput("condition number must be at least 1");
    ComplexityReport r;
    r.inputs = in;
    r.epsilon = std::ldexp(1.0, -static_cast<int>(in.n_c));
    const double lt = static_cast<double>(in.range_cells);
    const double m_all = static_cast<double>(in.full_pulses);
    const double ms = static_cast<double>(in.selected);
    r.omp_cost = static_cast<double>(in.k_c) * lt * m_all * ms;
    // log2(1) = 0 would zero the cost; a single pulse still needs one qubit.
    const double log_m = std::max(1.0, std::log2(m_all));
    r.qra_cost_per_cell = in.kappa * log_m / r.epsilon;
    r.qra_cost = r.qra_cost_per_cell * lt;
    r.whole_scene_cost = in.kappa * std::max(1.0, std::log2(lt * lt * m_all * ms)) / r.epsilon;
    r.measured_gate_count = gate_count;
    r.measured_flop_proxy = flop_proxy;
    return r;
}

}  // namespace qsparse
