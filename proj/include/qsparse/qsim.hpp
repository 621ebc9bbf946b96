#pragma once

// Exact statevector simulator.
//
// Bit layout: qubit q is bit q of the basis index. A register of width w at
// offset o holds the integer value (index >> o) & (2^w - 1), so qubit k of a
// register carries weight 2^k inside it. RegisterLayout::hhl() stacks the
// registers S, A, B, C, I from the most to the least significant bits.

#include "qsparse/common.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace qsparse {

struct QubitRegister {
    std::string name;
    unsigned offset = 0;
    unsigned width = 0;

    std::uint64_t mask() const { return ((std::uint64_t{1} << width) - 1) << offset; }
    std::uint64_t value_of(std::uint64_t index) const { return (index >> offset) & ((std::uint64_t{1} << width) - 1); }
    unsigned qubit(unsigned k) const { return offset + k; }
    std::uint64_t dimension() const { return std::uint64_t{1} << width; }
};

class RegisterLayout {
public:
    /// Registers listed from most to least significant.
    explicit RegisterLayout(const std::vector<std::pair<std::string, unsigned>>& msb_to_lsb) {
        unsigned offset = 0;
        for (auto it = msb_to_lsb.rbegin(); it != msb_to_lsb.rend(); ++it) {
            registers_.insert(registers_.begin(), QubitRegister{it->first, offset, it->second});
            offset += it->second;
        }
        total_ = offset;
        if (total_ > 30) throw InvalidInput("layout needs " + std::to_string(total_) + " qubits; limit is 30");
    }

    /// S (1) | A (n_a) | B (1) | C (n_c) | I (n_i), most significant first.
    static RegisterLayout hhl(unsigned n_a, unsigned n_c, unsigned n_i) {
        return RegisterLayout({{"S", 1}, {"A", n_a}, {"B", 1}, {"C", n_c}, {"I", n_i}});
    }

    const QubitRegister& at(std::string_view name) const {
        for (const auto& r : registers_)
            if (r.name == name) return r;
        throw InvalidInput("no register named " + std::string(name));
    }

    const std::vector<QubitRegister>& registers() const { return registers_; }
    unsigned total_qubits() const { return total_; }

private:
    std::vector<QubitRegister> registers_;
    unsigned total_ = 0;
};

/// Control condition: the gate acts where (index & mask) == value.
struct Controls {
    std::uint64_t mask = 0;
    std::uint64_t value = 0;

    static Controls none() { return {}; }

    static Controls on(unsigned qubit, bool set = true) { return Controls{}.and_on(qubit, set); }

    Controls and_on(unsigned qubit, bool set = true) const {
        Controls c = *this;
        const std::uint64_t bit = std::uint64_t{1} << qubit;
        c.mask |= bit;
        c.value = set ? (c.value | bit) : (c.value & ~bit);
        return c;
    }

    /// Condition on a whole register holding `register_value`.
    Controls and_register(const QubitRegister& reg, std::uint64_t register_value) const {
        Controls c = *this;
        c.mask |= reg.mask();
        c.value = (c.value & ~reg.mask()) | ((register_value << reg.offset) & reg.mask());
        return c;
    }

    std::vector<unsigned> qubits() const {
        std::vector<unsigned> q;
        for (unsigned b = 0; b < 64; ++b)
            if (mask >> b & 1U) q.push_back(b);
        return q;
    }
};

struct GateRecord {
    std::string name;
    std::vector<unsigned> targets;
    std::vector<unsigned> controls;
    double angle = 0.0;
};

inline std::ostream& operator<<(std::ostream& os, const GateRecord& g) {
    auto list = [&os](const std::vector<unsigned>& v) {
        os << '[';
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        os << ']';
    };
    os << g.name << " targets=";
    list(g.targets);
    os << " controls=";
    list(g.controls);
    os << " angle=" << g.angle;
    return os;
}

class Statevector {
public:
    explicit Statevector(unsigned qubits) : qubits_(qubits), amps_(CVector::Zero(Eigen::Index{1} << qubits)) {
        if (qubits > 30) throw InvalidInput("statevector limited to 30 qubits");
        amps_(0) = 1.0;
    }

    unsigned qubits() const { return qubits_; }
    Eigen::Index dimension() const { return amps_.size(); }
    CVector& amplitudes() { return amps_; }
    const CVector& amplitudes() const { return amps_; }
    double norm() const { return amps_.norm(); }

    std::size_t gate_count() const { return gate_count_; }
    void enable_trace() { trace_.emplace(); }
    const std::vector<GateRecord>* trace() const { return trace_ ? &*trace_ : nullptr; }

    void record(std::string_view name, std::vector<unsigned> targets, const Controls& ctrl, double angle = 0.0) {
        ++gate_count_;
        if (trace_) trace_->push_back({std::string(name), std::move(targets), ctrl.qubits(), angle});
    }

    void write_trace(std::ostream& os) const {
        if (!trace_) return;
        for (const auto& g : *trace_) os << g << '\n';
    }

private:
    unsigned qubits_;
    CVector amps_;
    std::size_t gate_count_ = 0;
    std::optional<std::vector<GateRecord>> trace_;
};

// ---------------------------------------------------------------------------
// Primitive kernels

/// 2x2 matrix on `target`, restricted to basis states satisfying `ctrl`.
inline void apply_1q(Statevector& state, const Eigen::Matrix2cd& u, unsigned target, const Controls& ctrl = {},
                     std::string_view name = "u", double angle = 0.0) {
    if (target >= state.qubits()) throw InvalidInput("target qubit out of range");
    if (ctrl.mask >> target & 1U) throw InvalidInput("target qubit is also a control");
    const std::uint64_t bit = std::uint64_t{1} << target;
    auto& a = state.amplitudes();
    const auto dim = static_cast<std::uint64_t>(a.size());
    for (std::uint64_t i = 0; i < dim; ++i) {
        if ((i & bit) || (i & ctrl.mask) != ctrl.value) continue;
        const cplx a0 = a(static_cast<Eigen::Index>(i));
        const cplx a1 = a(static_cast<Eigen::Index>(i | bit));
        a(static_cast<Eigen::Index>(i)) = u(0, 0) * a0 + u(0, 1) * a1;
        a(static_cast<Eigen::Index>(i | bit)) = u(1, 0) * a0 + u(1, 1) * a1;
    }
    state.record(name, {target}, ctrl, angle);
}

/// Multiplies each basis amplitude satisfying `ctrl` by factor_of(index).
template <class FactorFn>
inline void apply_diagonal(Statevector& state, FactorFn&& factor_of, const Controls& ctrl) {
    auto& a = state.amplitudes();
    const auto dim = static_cast<std::uint64_t>(a.size());
    for (std::uint64_t i = 0; i < dim; ++i)
        if ((i & ctrl.mask) == ctrl.value) a(static_cast<Eigen::Index>(i)) *= factor_of(i);
}

inline bool is_unitary(const CMatrix& u, double tol = 1e-10) {
    if (u.rows() != u.cols()) return false;
    return (u.adjoint() * u - CMatrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff() <= tol;
}

/// Dense unitary on a whole register, applied slice by slice over the basis
/// states of all other qubits that satisfy `ctrl`.
inline void apply_register_unitary(Statevector& state, const QubitRegister& reg, const CMatrix& u,
                                   const Controls& ctrl = {}, std::string_view name = "unitary") {
    const auto rdim = static_cast<Eigen::Index>(reg.dimension());
    if (u.rows() != rdim || u.cols() != rdim) throw InvalidInput("unitary does not match register dimension");
    if (ctrl.mask & reg.mask()) throw InvalidInput("control overlaps the target register");
    auto& a = state.amplitudes();
    const auto dim = static_cast<std::uint64_t>(a.size());

    std::vector<std::uint64_t> bases;
    for (std::uint64_t i = 0; i < dim; ++i)
        if (!(i & reg.mask()) && (i & ctrl.mask) == ctrl.value) bases.push_back(i);

    CMatrix block(rdim, static_cast<Eigen::Index>(bases.size()));
    for (std::size_t b = 0; b < bases.size(); ++b)
        for (Eigen::Index v = 0; v < rdim; ++v)
            block(v, static_cast<Eigen::Index>(b)) = a(static_cast<Eigen::Index>(bases[b] | (static_cast<std::uint64_t>(v) << reg.offset)));
    block = u * block;
    for (std::size_t b = 0; b < bases.size(); ++b)
        for (Eigen::Index v = 0; v < rdim; ++v)
            a(static_cast<Eigen::Index>(bases[b] | (static_cast<std::uint64_t>(v) << reg.offset))) = block(v, static_cast<Eigen::Index>(b));

    std::vector<unsigned> targets;
    for (unsigned k = 0; k < reg.width; ++k) targets.push_back(reg.qubit(k));
    state.record(name, std::move(targets), ctrl);
}

/// U on `target` when `control_qubit` is |1>. U must be unitary to 1e-10.
inline void apply_controlled_unitary(Statevector& state, unsigned control_qubit, const CMatrix& u,
                                     const QubitRegister& target, std::string_view name = "cu") {
    if (!is_unitary(u)) throw InvalidInput("controlled operator is not unitary");
    apply_register_unitary(state, target, u, Controls::on(control_qubit), name);
}

// ---------------------------------------------------------------------------
// Named gates

inline Eigen::Matrix2cd hadamard_matrix() {
    const double s = 1.0 / std::sqrt(2.0);
    Eigen::Matrix2cd h;
    h << s, s, s, -s;
    return h;
}

inline Eigen::Matrix2cd ry_matrix(double theta) {
    Eigen::Matrix2cd m;
    m << std::cos(theta / 2), -std::sin(theta / 2), std::sin(theta / 2), std::cos(theta / 2);
    return m;
}

inline Eigen::Matrix2cd rz_matrix(double theta) {
    Eigen::Matrix2cd m;
    m << std::polar(1.0, -theta / 2), 0.0, 0.0, std::polar(1.0, theta / 2);
    return m;
}

inline void apply_hadamard(Statevector& s, unsigned q, const Controls& c = {}) { apply_1q(s, hadamard_matrix(), q, c, "h"); }

inline void apply_x(Statevector& s, unsigned q, const Controls& c = {}) {
    Eigen::Matrix2cd x;
    x << 0.0, 1.0, 1.0, 0.0;
    apply_1q(s, x, q, c, "x");
}

/// diag(1, e^{i theta}).
inline void apply_phase(Statevector& s, double theta, unsigned q, const Controls& c = {}) {
    if (c.mask >> q & 1U) throw InvalidInput("phase target is also a control");
    const Controls on = c.and_on(q);
    const cplx factor = std::polar(1.0, theta);
    apply_diagonal(s, [factor](std::uint64_t) { return factor; }, on);
    s.record("p", {q}, c, theta);
}

inline void apply_swap(Statevector& s, unsigned q0, unsigned q1) {
    if (q0 == q1) return;
    auto& a = s.amplitudes();
    const std::uint64_t b0 = std::uint64_t{1} << q0;
    const std::uint64_t b1 = std::uint64_t{1} << q1;
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(a.size()); ++i)
        if ((i & b0) && !(i & b1)) std::swap(a(static_cast<Eigen::Index>(i)), a(static_cast<Eigen::Index>((i & ~b0) | b1)));
    s.record("swap", {q0, q1}, {});
}

inline void apply_hadamard_all(Statevector& s, const QubitRegister& reg) {
    for (unsigned k = 0; k < reg.width; ++k) apply_hadamard(s, reg.qubit(k));
}

enum class Rotation { ry, rz, rzz };

/// Ry/Rz act on each target in turn; Rzz = exp(-i theta/2 Z(x)Z) needs exactly two targets.
inline void apply_rotation(Statevector& s, Rotation kind, double theta, std::span<const unsigned> targets,
                           const Controls& ctrl = {}) {
    switch (kind) {
    case Rotation::ry:
        for (auto q : targets) apply_1q(s, ry_matrix(theta), q, ctrl, "ry", theta);
        break;
    case Rotation::rz:
        for (auto q : targets) apply_1q(s, rz_matrix(theta), q, ctrl, "rz", theta);
        break;
    case Rotation::rzz: {
        if (targets.size() != 2 || targets[0] == targets[1]) throw InvalidInput("rzz needs two distinct targets");
        const std::uint64_t b0 = std::uint64_t{1} << targets[0];
        const std::uint64_t b1 = std::uint64_t{1} << targets[1];
        if (ctrl.mask & (b0 | b1)) throw InvalidInput("rzz target is also a control");
        const cplx odd = std::polar(1.0, theta / 2);
        const cplx even = std::conj(odd);
        apply_diagonal(
            s, [&](std::uint64_t i) { return (((i & b0) != 0) != ((i & b1) != 0)) ? odd : even; }, ctrl);
        s.record("rzz", {targets[0], targets[1]}, ctrl, theta);
        break;
    }
    }
}

/// QFT |x> = 2^{-n/2} sum_k exp(2 pi i x k / 2^n) |k>, built from H, controlled
/// phases and a final bit reversal.
inline void apply_qft(Statevector& s, const QubitRegister& reg) {
    const unsigned n = reg.width;
    for (unsigned j = n; j-- > 0;) {
        apply_hadamard(s, reg.qubit(j));
        for (unsigned k = j; k-- > 0;)
            apply_phase(s, kPi / static_cast<double>(std::uint64_t{1} << (j - k)), reg.qubit(j), Controls::on(reg.qubit(k)));
    }
    for (unsigned i = 0; i < n / 2; ++i) apply_swap(s, reg.qubit(i), reg.qubit(n - 1 - i));
}

/// Exact inverse of apply_qft: sum_k exp(2 pi i m k / 2^n) |k> / 2^{n/2} -> |m>.
inline void apply_inverse_qft(Statevector& s, const QubitRegister& reg) {
    const unsigned n = reg.width;
    for (unsigned i = 0; i < n / 2; ++i) apply_swap(s, reg.qubit(i), reg.qubit(n - 1 - i));
    for (unsigned j = 0; j < n; ++j) {
        for (unsigned k = 0; k < j; ++k)
            apply_phase(s, -kPi / static_cast<double>(std::uint64_t{1} << (j - k)), reg.qubit(j), Controls::on(reg.qubit(k)));
        apply_hadamard(s, reg.qubit(j));
    }
}

// ---------------------------------------------------------------------------
// Measurement and readout

inline double outcome_probability(const Statevector& s, unsigned qubit, bool outcome) {
    const std::uint64_t bit = std::uint64_t{1} << qubit;
    const auto& a = s.amplitudes();
    double p = 0.0;
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(a.size()); ++i)
        if (((i & bit) != 0) == outcome) p += std::norm(a(static_cast<Eigen::Index>(i)));
    return p;
}

inline constexpr double kMinPostselectProbability = 1e-15;

/// Projects `qubit` onto `outcome`, renormalizes, and returns the exact outcome probability.
inline double postselect(Statevector& s, unsigned qubit, bool outcome) {
    if (qubit >= s.qubits()) throw InvalidInput("postselect qubit out of range");
    const double p = outcome_probability(s, qubit, outcome);
    if (!(p > kMinPostselectProbability)) throw InvalidInput("post-selection on a zero-probability branch");
    const std::uint64_t bit = std::uint64_t{1} << qubit;
    auto& a = s.amplitudes();
    const double scale = 1.0 / std::sqrt(p);
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(a.size()); ++i) {
        if (((i & bit) != 0) == outcome)
            a(static_cast<Eigen::Index>(i)) *= scale;
        else
            a(static_cast<Eigen::Index>(i)) = 0.0;
    }
    return p;
}

/// Marginal distribution of a register's value.
inline std::vector<double> register_probabilities(const Statevector& s, const QubitRegister& reg) {
    std::vector<double> p(reg.dimension(), 0.0);
    const auto& a = s.amplitudes();
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(a.size()); ++i) p[reg.value_of(i)] += std::norm(a(static_cast<Eigen::Index>(i)));
    return p;
}

/// Amplitudes of `reg` with every other register pinned to a basis value
/// (`fixed`, default 0). With `normalize_phase` the first entry of modulus
/// above 1e-14 is rotated onto the positive real axis.
inline CVector read_register_amplitudes(const Statevector& s, const RegisterLayout& layout, std::string_view reg_name,
                                        const std::map<std::string, std::uint64_t>& fixed = {},
                                        bool normalize_phase = true) {
    const auto& reg = layout.at(reg_name);
    std::uint64_t base = 0;
    for (const auto& [name, value] : fixed) {
        const auto& other = layout.at(name);
        if (other.name == reg.name) throw InvalidInput("cannot pin the register being read");
        if (value >= other.dimension()) throw InvalidInput("pinned value out of range for register " + name);
        base |= value << other.offset;
    }
    CVector out(static_cast<Eigen::Index>(reg.dimension()));
    for (Eigen::Index v = 0; v < out.size(); ++v) out(v) = s.amplitudes()(static_cast<Eigen::Index>(base | (static_cast<std::uint64_t>(v) << reg.offset)));
    if (normalize_phase) {
        for (Eigen::Index v = 0; v < out.size(); ++v)
            if (std::abs(out(v)) > 1e-14) {
                out *= std::conj(out(v)) / std::abs(out(v));
                break;
            }
    }
    return out;
}

inline constexpr double kUnitNormTolerance = 1e-9;

/// |b> = sum_i yhat_i |i> on `reg_name`, zero-padded; every other register |0...0>.
inline Statevector prepare_input_state(const CVector& yhat, const RegisterLayout& layout, std::string_view reg_name = "I") {
    const auto& reg = layout.at(reg_name);
    if (std::abs(yhat.norm() - 1.0) > kUnitNormTolerance) throw InvalidInput("input state is not unit norm");
    if (static_cast<std::uint64_t>(yhat.size()) > reg.dimension()) throw InvalidInput("input longer than register dimension");
    Statevector s(layout.total_qubits());
    auto& a = s.amplitudes();
    a(0) = 0.0;
    for (Eigen::Index i = 0; i < yhat.size(); ++i) a(static_cast<Eigen::Index>(static_cast<std::uint64_t>(i) << reg.offset)) = yhat(i);
    return s;
}

}  // namespace qsparse
