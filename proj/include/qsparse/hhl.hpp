#pragma once

// HHL circuit for Xi x = yhat on the S|A|B|C|I register stack.
//
// Stages:
//   1. phase estimation: H on C, controlled U^(2^k) with U = exp(i 2 pi Xi / 2^n_lambda)
//      from C qubit k, inverse QFT on C. C then holds lambda~_j = 2^(n_c - n_lambda) lambda_j.
//   2. controlled rotation: B to (|0>+|1>)/sqrt2, C-controlled load of
//      l = N_a / lambda~ into A, the B phase exp(i 2 pi p (N_a - l lambda~) / N_a)
//      built from (A,C)-controlled phase gates, then A-controlled Ry on S so that
//      S = cos(l / N_sa)|0> + sin(l / N_sa)|1>.
//   3. uncomputation of stage 2 (except the Ry) and of stage 1.
// Post-selecting S = |1> leaves sum_j beta_j sin(N_a / (lambda~_j N_sa)) |u_j> on I.

#include "qsparse/common.hpp"
#include "qsparse/qsim.hpp"
#include "qsparse/sparse_solvers.hpp"

#include <Eigen/Eigenvalues>

#include <bit>
#include <chrono>
#include <cmath>
#include <numeric>
#include <span>

namespace qsparse {

enum class RotationMode {
    lcm,          // A/B register construction keyed off N_a = lcm of the scaled eigenvalues
    generalized,  // Ry(2 asin(C0 / c)) keyed directly off register C; A and B unused
};

struct CalibrationOptions {
    unsigned extra_precision_bits = 1;      // C-register bits beyond the minimal exact encoding
    unsigned max_fraction_bits = 10;
    double integrality_tolerance = 1e-6;
    std::uint64_t rotation_margin = 256;    // N_sa = margin * N_a / min lambda~
    unsigned max_total_qubits = 26;
    unsigned fallback_precision_bits = 6;   // generalized mode: n_c = n_lambda + this
    std::uint64_t max_lcm = std::uint64_t{1} << 20;
};

struct HHLParams {
    RotationMode mode = RotationMode::lcm;
    unsigned n_c = 0;
    unsigned n_lambda = 0;
    unsigned n_a = 0;
    unsigned n_input = 0;
    std::size_t dimension = 0;              // N_I before zero padding
    std::uint64_t lcm = 0;                  // N_a
    std::uint64_t rotation_divisor = 0;     // N_sa
    double rotation_constant = 1.0;         // C0 of the generalized mode
    std::vector<double> scaled_eigenvalues; // 2^(n_c - n_lambda) lambda_j, with multiplicity
    std::vector<std::uint64_t> levels;      // distinct rounded scaled eigenvalues (lcm mode)
    double eta = 1.0;
    double lambda0 = 1.0;

    double eigenvalue_scale() const { return std::ldexp(1.0, static_cast<int>(n_c) - static_cast<int>(n_lambda)); }
    unsigned total_qubits() const { return 2 + n_a + n_c + n_input; }
    RegisterLayout layout() const { return RegisterLayout::hhl(n_a, n_c, n_input); }
};

namespace detail {

inline unsigned eigen_bit_length(double lambda_max, double tol) {
    const auto top = static_cast<std::uint64_t>(std::floor(lambda_max + tol));
    return std::max(1U, static_cast<unsigned>(std::bit_width(top)));
}

inline std::vector<double> fractional_residuals(std::span<const double> values, double scale) {
    std::vector<double> r;
    r.reserve(values.size());
    for (double v : values) r.push_back(std::abs(scale * v - std::round(scale * v)));
    return r;
}

}  // namespace detail

/// Register sizes and rotation constants for the lcm construction, from a spectrum.
///
/// n_lambda is the bit length of the largest eigenvalue. The smallest shift s >=
/// extra_precision_bits that puts every 2^s lambda_j within the integrality
/// tolerance of an integer fixes n_c = n_lambda + s. Then N_a = lcm(lambda~),
/// n_a = ceil(log2(1 + N_a / min lambda~)), N_sa = margin * N_a / min lambda~.
inline HHLParams calibrate_spectrum(std::span<const double> eigenvalues, std::size_t dimension, double eta,
                                    double lambda0, const CalibrationOptions& opt = {}) {
    if (eigenvalues.empty()) throw InvalidInput("empty spectrum");
    const double lo = *std::min_element(eigenvalues.begin(), eigenvalues.end());
    const double hi = *std::max_element(eigenvalues.begin(), eigenvalues.end());
    if (!(lo > 0.0)) throw CalibrationError("spectrum is not positive", {});

    HHLParams p;
    p.mode = RotationMode::lcm;
    p.eta = eta;
    p.lambda0 = lambda0;
    p.dimension = dimension;
    p.n_input = std::max<unsigned>(1, static_cast<unsigned>(ceil_log2(dimension)));
    p.n_lambda = detail::eigen_bit_length(hi, opt.integrality_tolerance);

    std::vector<double> residuals;
    std::optional<unsigned> shift;
    for (unsigned s = opt.extra_precision_bits; s <= opt.extra_precision_bits + opt.max_fraction_bits; ++s) {
        residuals = detail::fractional_residuals(eigenvalues, std::ldexp(1.0, static_cast<int>(s)));
        if (*std::max_element(residuals.begin(), residuals.end()) <= opt.integrality_tolerance) {
            shift = s;
            break;
        }
    }
    if (!shift)
        throw CalibrationError("scaled eigenvalues are not integral within " + std::to_string(opt.integrality_tolerance)
                                   + "; adjust eta or enable the generalized rotation fallback",
                               residuals);

    p.n_c = p.n_lambda + *shift;
    const double scale = p.eigenvalue_scale();
    for (double v : eigenvalues) {
        p.scaled_eigenvalues.push_back(scale * v);
        const auto level = static_cast<std::uint64_t>(std::llround(scale * v));
        if (level == 0) throw CalibrationError("an eigenvalue rounds to zero in the C register", {scale * v});
        if (level >= (std::uint64_t{1} << p.n_c)) throw CalibrationError("scaled eigenvalue overflows register C", {scale * v});
        p.levels.push_back(level);
    }
    std::sort(p.levels.begin(), p.levels.end());
    p.levels.erase(std::unique(p.levels.begin(), p.levels.end()), p.levels.end());

    std::uint64_t n_a = 1;
    for (auto l : p.levels) {
        n_a = std::lcm(n_a, l);
        if (n_a > opt.max_lcm) throw CalibrationError("lcm of the scaled eigenvalues exceeds " + std::to_string(opt.max_lcm), {});
    }
    p.lcm = n_a;
    const std::uint64_t max_ratio = n_a / p.levels.front();
    p.n_a = static_cast<unsigned>(std::bit_width(max_ratio));
    p.rotation_divisor = opt.rotation_margin * max_ratio;

    if (p.total_qubits() > opt.max_total_qubits)
        throw CalibrationError("circuit needs " + std::to_string(p.total_qubits()) + " qubits, budget is "
                                   + std::to_string(opt.max_total_qubits),
                               {});
    return p;
}

inline HHLParams calibrate_params(const RegularizedSystem& sys, const CalibrationOptions& opt = {}) {
    const std::vector<double> spectrum(sys.eigenvalues.data(), sys.eigenvalues.data() + sys.eigenvalues.size());
    return calibrate_spectrum(spectrum, static_cast<std::size_t>(sys.dimension()), sys.eta, sys.lambda0, opt);
}

/// Parameters for the generalized rotation mode; works for any positive spectrum.
inline HHLParams generalized_params(const RegularizedSystem& sys, const CalibrationOptions& opt = {}) {
    const double lo = sys.eigenvalues.minCoeff();
    if (!(lo > 0.0)) throw CalibrationError("spectrum is not positive", {});
    HHLParams p;
    p.mode = RotationMode::generalized;
    p.eta = sys.eta;
    p.lambda0 = sys.lambda0;
    p.dimension = static_cast<std::size_t>(sys.dimension());
    p.n_input = std::max<unsigned>(1, static_cast<unsigned>(ceil_log2(p.dimension)));
    p.n_lambda = detail::eigen_bit_length(sys.eigenvalues.maxCoeff(), 0.0);
    p.n_c = p.n_lambda + opt.fallback_precision_bits;
    p.n_a = 0;
    p.rotation_constant = 1.0;
    for (Eigen::Index j = 0; j < sys.eigenvalues.size(); ++j) p.scaled_eigenvalues.push_back(p.eigenvalue_scale() * sys.eigenvalues(j));
    if (p.total_qubits() > opt.max_total_qubits)
        throw CalibrationError("circuit needs " + std::to_string(p.total_qubits()) + " qubits", {});
    return p;
}

struct HHLOutcome {
    CVector solution;                 // rescaled estimate of Xi^{-1} gamma
    CVector direction;                // post-selected I amplitudes, unit norm, phase-normalized
    double success_probability = 0.0; // p_1
    double garbage_probability = 0.0; // mass left outside A = B = C = 0 before post-selection
    double fidelity = 0.0;            // versus the direct solve
    std::size_t gate_count = 0;
    unsigned qubit_count = 0;
    unsigned qubits_a = 0;
    unsigned qubits_c = 0;
    unsigned qubits_i = 0;
    double wall_seconds = 0.0;
};

inline constexpr double kMinSuccessProbability = 1e-12;

/// |<v, w>| / (||v|| ||w||).
inline double fidelity(const CVector& v, const CVector& w) {
    if (v.size() != w.size()) throw InvalidInput("fidelity: length mismatch");
    const double nv = v.norm();
    const double nw = w.norm();
    if (!(nv > 0.0) || !(nw > 0.0)) throw InvalidInput("fidelity of a zero vector");
    return std::min(1.0, std::abs(v.dot(w)) / (nv * nw));
}

/// Circuit for one calibrated system. Construction precomputes the controlled
/// evolution operators; execution only touches the statevector passed in, so
/// one circuit can serve many right-hand sides concurrently.
class HHLCircuit {
public:
    HHLCircuit(const RegularizedSystem& sys, HHLParams params)
        : params_(std::move(params)), layout_(params_.layout()), xi_(sys.xi) {
        if (static_cast<std::size_t>(sys.dimension()) != params_.dimension)
            throw InvalidInput("parameters were calibrated for a different dimension");
        const auto padded = static_cast<Eigen::Index>(std::uint64_t{1} << params_.n_input);
        const auto n = sys.dimension();
        for (unsigned k = 0; k < params_.n_c; ++k) {
            // exp(i 2 pi lambda 2^k / 2^n_lambda), reduced mod 1 before scaling by 2 pi.
            CVector phases(n);
            for (Eigen::Index j = 0; j < n; ++j) {
                const double turns = sys.eigenvalues(j) * std::ldexp(1.0, static_cast<int>(k) - static_cast<int>(params_.n_lambda));
                phases(j) = std::polar(1.0, 2.0 * kPi * (turns - std::floor(turns)));
            }
            CMatrix u = CMatrix::Identity(padded, padded);
            u.topLeftCorner(n, n) = sys.eigenvectors * phases.asDiagonal() * sys.eigenvectors.adjoint();
            if (!is_unitary(u)) throw InvalidInput("evolution operator is not unitary");
            powers_.push_back(u);
            inverse_powers_.push_back(u.adjoint());
        }
    }

    const HHLParams& params() const { return params_; }
    const RegisterLayout& layout() const { return layout_; }
    const QubitRegister& reg(std::string_view name) const { return layout_.at(name); }

    Statevector prepare(const CVector& yhat) const { return prepare_input_state(yhat, layout_, "I"); }

    void run_phase_estimation(Statevector& s) const {
        const auto& c = reg("C");
        const auto& in = reg("I");
        apply_hadamard_all(s, c);
        for (unsigned k = 0; k < params_.n_c; ++k) apply_register_unitary(s, in, powers_[k], Controls::on(c.qubit(k)), "cu");
        apply_inverse_qft(s, c);
    }

    void run_inverse_phase_estimation(Statevector& s) const {
        const auto& c = reg("C");
        const auto& in = reg("I");
        apply_qft(s, c);
        for (unsigned k = params_.n_c; k-- > 0;)
            apply_register_unitary(s, in, inverse_powers_[k], Controls::on(c.qubit(k)), "cu_dag");
        apply_hadamard_all(s, c);
    }

    /// B to |+>, A loaded with N_a / lambda~ for every C value dividing N_a,
    /// then the B phase exp(i 2 pi p (N_a - l lambda~) / N_a).
    void prepare_interference(Statevector& s) const {
        apply_hadamard(s, reg("B").qubit(0));
        load_quotient(s);
        apply_constraint_phases(s, +1.0);
    }

    void unprepare_interference(Statevector& s) const {
        apply_constraint_phases(s, -1.0);
        load_quotient(s);
        apply_hadamard(s, reg("B").qubit(0));
    }

    /// Ry(2 * 2^a / N_sa) on S from each A qubit a; the angles add up to 2 l / N_sa.
    void rotate_ancilla(Statevector& s) const {
        const auto& a = reg("A");
        const unsigned target = reg("S").qubit(0);
        for (unsigned k = 0; k < a.width; ++k) {
            const double angle = 2.0 * std::ldexp(1.0, static_cast<int>(k)) / static_cast<double>(params_.rotation_divisor);
            apply_1q(s, ry_matrix(angle), target, Controls::on(a.qubit(k)), "ry", angle);
        }
    }

    void run_controlled_rotation(Statevector& s) const {
        if (params_.mode == RotationMode::generalized) {
            generalized_rotation(s);
            return;
        }
        prepare_interference(s);
        rotate_ancilla(s);
    }

    void run_uncomputation(Statevector& s) const {
        if (params_.mode == RotationMode::lcm) unprepare_interference(s);
        run_inverse_phase_estimation(s);
    }

    /// Runs every stage on gamma / ||gamma||, post-selects S = |1>, and rescales the
    /// I-register amplitudes into an estimate of Xi^{-1} gamma. With `trace` set,
    /// every gate applied is also appended there.
    HHLOutcome solve(const CVector& gamma, std::vector<GateRecord>* trace = nullptr) const {
        const auto start = std::chrono::steady_clock::now();
        if (gamma.size() != static_cast<Eigen::Index>(params_.dimension)) throw InvalidInput("right-hand side has the wrong length");
        const double gnorm = gamma.norm();
        if (!(gnorm > 0.0)) throw DegenerateSystem("zero right-hand side");

        Statevector s = prepare(gamma / gnorm);
        if (trace) s.enable_trace();
        run_phase_estimation(s);
        run_controlled_rotation(s);
        run_uncomputation(s);

        HHLOutcome out;
        const auto& work = reg("A").mask() | reg("B").mask() | reg("C").mask();
        for (Eigen::Index i = 0; i < s.dimension(); ++i)
            if (static_cast<std::uint64_t>(i) & work) out.garbage_probability += std::norm(s.amplitudes()(i));

        const double p1 = outcome_probability(s, reg("S").qubit(0), true);
        if (!(p1 > kMinSuccessProbability)) throw DegenerateSystem("post-selection probability below 1e-12");
        out.success_probability = postselect(s, reg("S").qubit(0), true);

        const CVector slice = read_register_amplitudes(s, layout_, "I", {{"S", 1}}, false)
                                  .head(static_cast<Eigen::Index>(params_.dimension));
        double inverse_gain = 0.0;
        if (params_.mode == RotationMode::lcm)
            inverse_gain = static_cast<double>(params_.rotation_divisor) / static_cast<double>(params_.lcm);
        else
            inverse_gain = 1.0 / params_.rotation_constant;
        out.solution = gnorm * params_.eigenvalue_scale() * inverse_gain * std::sqrt(out.success_probability) * slice;
        out.direction = read_register_amplitudes(s, layout_, "I", {{"S", 1}}, true).head(static_cast<Eigen::Index>(params_.dimension));
        out.direction /= out.direction.norm();

        out.gate_count = s.gate_count();
        out.qubit_count = layout_.total_qubits();
        out.qubits_a = params_.n_a;
        out.qubits_c = params_.n_c;
        out.qubits_i = params_.n_input;
        if (trace) trace->insert(trace->end(), s.trace()->begin(), s.trace()->end());
        out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return out;
    }

private:
    /// For each C value c with c | N_a and N_a / c representable in A, XOR N_a / c into A.
    /// Self-inverse.
    void load_quotient(Statevector& s) const {
        const auto& a = reg("A");
        const auto& c = reg("C");
        for (std::uint64_t level = 1; level < c.dimension(); ++level) {
            if (params_.lcm % level != 0) continue;
            const std::uint64_t quotient = params_.lcm / level;
            if (quotient >= a.dimension()) continue;
            const Controls on_level = Controls::none().and_register(c, level);
            for (unsigned k = 0; k < a.width; ++k)
                if (quotient >> k & 1U) apply_x(s, a.qubit(k), on_level);
        }
    }

    /// Phase 2 pi p (N_a - l lambda~) / N_a on B = |p>: a 2 pi phase for the N_a term and
    /// one doubly controlled phase per (A qubit, C qubit) pair for -l lambda~.
    void apply_constraint_phases(Statevector& s, double sign) const {
        const auto& a = reg("A");
        const auto& c = reg("C");
        const unsigned b = reg("B").qubit(0);
        apply_phase(s, sign * 2.0 * kPi, b);
        const double n_a = static_cast<double>(params_.lcm);
        for (unsigned i = 0; i < a.width; ++i)
            for (unsigned j = 0; j < c.width; ++j) {
                const double weight = std::ldexp(1.0, static_cast<int>(i + j));
                const double turns = std::fmod(weight, n_a) / n_a;
                apply_phase(s, -sign * 2.0 * kPi * turns, b, Controls::on(a.qubit(i)).and_on(c.qubit(j)));
            }
    }

    /// Ry(2 asin(C0 / c)) on S for every nonzero C value c.
    void generalized_rotation(Statevector& s) const {
        const auto& c = reg("C");
        const unsigned target = reg("S").qubit(0);
        for (std::uint64_t level = 1; level < c.dimension(); ++level) {
            const double ratio = std::min(1.0, params_.rotation_constant / static_cast<double>(level));
            const double angle = 2.0 * std::asin(ratio);
            apply_1q(s, ry_matrix(angle), target, Controls::none().and_register(c, level), "ry", angle);
        }
    }

    HHLParams params_;
    RegisterLayout layout_;
    CMatrix xi_;
    std::vector<CMatrix> powers_;
    std::vector<CMatrix> inverse_powers_;
};

/// Builds the circuit, runs it on sys.gamma, and compares against the direct solve.
inline HHLOutcome solve(const RegularizedSystem& sys, const HHLParams& params) {
    HHLCircuit circuit(sys, params);
    HHLOutcome out = circuit.solve(sys.gamma);
    out.fidelity = fidelity(out.solution, direct_solve(sys));
    return out;
}

/// Largest fraction, over the occupied C values, of branch mass sitting on A values
/// with N_a - l c != 0. Meaningful right after prepare_interference.
inline double constraint_violation(const Statevector& s, const HHLCircuit& circuit) {
    const auto& a = circuit.reg("A");
    const auto& c = circuit.reg("C");
    const auto lcm = circuit.params().lcm;
    std::vector<double> total(c.dimension(), 0.0);
    std::vector<double> bad(c.dimension(), 0.0);
    for (Eigen::Index i = 0; i < s.dimension(); ++i) {
        const double w = std::norm(s.amplitudes()(i));
        const auto level = c.value_of(static_cast<std::uint64_t>(i));
        const auto l = a.value_of(static_cast<std::uint64_t>(i));
        total[level] += w;
        if (lcm != l * level) bad[level] += w;
    }
    double worst = 0.0;
    for (std::size_t level = 0; level < total.size(); ++level)
        if (total[level] > 1e-12) worst = std::max(worst, bad[level] / total[level]);
    return worst;
}

/// p_1 = sum_j |beta_j|^2 sin^2(N_a / (lambda~_j N_sa)) with beta = U^H yhat.
inline double analytic_success_probability(const RegularizedSystem& sys, const HHLParams& params, const CVector& yhat) {
    const CVector beta = sys.eigenvectors.adjoint() * yhat;
    double p = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        const double level = std::round(params.scaled_eigenvalues[static_cast<std::size_t>(j)]);
        const double arg = static_cast<double>(params.lcm) / (level * static_cast<double>(params.rotation_divisor));
        p += std::norm(beta(j)) * std::pow(std::sin(arg), 2);
    }
    return p;
}

}  // namespace qsparse
