#pragma once

// Synthetic sparse-aperture radar echoes and the measurement operators that
// map scene coefficients to echo samples.
//
// Indices are 0-based throughout. The vectorized echo follows the fast-time
// major interleaving Y(n) = S(n / M_s, n % M_s): n = l * M_s + m'.

#include "qsparse/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

namespace qsparse {

inline constexpr double kSpeedOfLight = 299792458.0;

struct RadarParams {
    double carrier_frequency = 0.0;   // Hz
    double chirp_rate = 0.0;          // Hz/s
    double pulse_duration = 0.0;      // s
    std::size_t fast_time_samples = 1;
    std::size_t full_pulses = 1;
    double bandwidth = 0.0;           // Hz
    double prf = 1.0;                 // Hz

    void validate() const {
        if (fast_time_samples < 1) throw InvalidInput("fast_time_samples must be >= 1");
        if (full_pulses < 1) throw InvalidInput("full_pulses must be >= 1");
        if (!(pulse_duration > 0.0)) throw InvalidInput("pulse_duration must be > 0");
        if (!(carrier_frequency > 0.0)) throw InvalidInput("carrier_frequency must be > 0");
        if (!(prf > 0.0)) throw InvalidInput("prf must be > 0");
    }

    /// t_l, uniform over [-T_p/2, T_p/2]; a single sample sits at 0.
    double fast_time(std::size_t l) const {
        if (fast_time_samples == 1) return 0.0;
        return -0.5 * pulse_duration
               + pulse_duration * static_cast<double>(l) / static_cast<double>(fast_time_samples - 1);
    }

    double slow_time(std::size_t m) const { return static_cast<double>(m) / prf; }
};

/// Range to the radar as a polynomial in slow time: R(tau) = sum_k c_k tau^k.
struct RangeHistory {
    std::vector<double> coefficients;

    double operator()(double tau) const {
        double r = 0.0;
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) r = r * tau + *it;
        return r;
    }

    static RangeHistory linear(double r0, double velocity) { return {{r0, velocity}}; }
    static RangeHistory constant(double r0) { return {{r0}}; }
};

struct ScatterPoint {
    std::size_t index = 0;  // grid cell p
    cplx coefficient{0.0, 0.0};
};

/// Sparse scene on a discrete grid. `grid[p]` is the range history of cell p.
struct SceneModel {
    std::vector<RangeHistory> grid;
    std::vector<ScatterPoint> points;

    std::size_t grid_size() const { return grid.size(); }

    std::size_t sparsity() const {
        return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const ScatterPoint& s) {
            return s.coefficient != cplx{0.0, 0.0};
        }));
    }

    void validate() const {
        std::vector<bool> seen(grid.size(), false);
        for (const auto& s : points) {
            if (s.index >= grid.size()) throw InvalidInput("scatter point index outside the grid");
            if (seen[s.index]) throw InvalidInput("two scatter points share grid cell " + std::to_string(s.index));
            seen[s.index] = true;
        }
        if (sparsity() == 0) throw InvalidInput("scene has no nonzero scatter point");
    }

    CVector coefficients() const {
        CVector sigma = CVector::Zero(static_cast<Eigen::Index>(grid.size()));
        for (const auto& s : points) sigma(static_cast<Eigen::Index>(s.index)) = s.coefficient;
        return sigma;
    }
};

/// The M_s pulses actually transmitted, as strictly increasing indices into [0, M_all).
class ApertureSelection {
public:
    ApertureSelection(std::vector<std::size_t> indices, std::size_t full_pulses)
        : indices_(std::move(indices)), full_pulses_(full_pulses) {
        if (indices_.empty()) throw InvalidInput("aperture selects no pulses");
        for (std::size_t i = 0; i < indices_.size(); ++i) {
            if (indices_[i] >= full_pulses_) throw InvalidInput("aperture index outside [0, M_all)");
            if (i > 0 && indices_[i] == indices_[i - 1]) throw InvalidInput("duplicate aperture index");
            if (i > 0 && indices_[i] < indices_[i - 1]) throw InvalidInput("aperture indices must be increasing");
        }
    }

    static ApertureSelection full(std::size_t full_pulses) {
        std::vector<std::size_t> idx(full_pulses);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        return {std::move(idx), full_pulses};
    }

    /// M_s = round(rate * M_all), clamped to [1, M_all].
    static std::size_t selected_count(std::size_t full_pulses, double rate) {
        if (!(rate > 0.0) || rate > 1.0) throw InvalidInput("sampling rate must lie in (0, 1]");
        auto m = static_cast<std::size_t>(std::llround(rate * static_cast<double>(full_pulses)));
        return std::clamp<std::size_t>(m, 1, full_pulses);
    }

    /// Evenly spaced pulses floor(i * M_all / M_s).
    static ApertureSelection uniform(std::size_t full_pulses, double rate) {
        const std::size_t ms = selected_count(full_pulses, rate);
        std::vector<std::size_t> idx(ms);
        for (std::size_t i = 0; i < ms; ++i) idx[i] = i * full_pulses / ms;
        return {std::move(idx), full_pulses};
    }

    static ApertureSelection random(std::size_t full_pulses, double rate, std::uint64_t seed) {
        const std::size_t ms = selected_count(full_pulses, rate);
        std::vector<std::size_t> all(full_pulses);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::mt19937_64 rng(seed);
        // Partial Fisher-Yates; std::shuffle is not portable across standard libraries.
        for (std::size_t i = 0; i < ms; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, full_pulses - 1);
            std::swap(all[i], all[pick(rng)]);
        }
        all.resize(ms);
        std::sort(all.begin(), all.end());
        return {std::move(all), full_pulses};
    }

    /// One contiguous block of M_all - M_s pulses missing from the middle of the aperture.
    static ApertureSelection block_missing(std::size_t full_pulses, double rate) {
        const std::size_t ms = selected_count(full_pulses, rate);
        const std::size_t gap = full_pulses - ms;
        const std::size_t start = (full_pulses - gap) / 2;
        std::vector<std::size_t> idx;
        idx.reserve(ms);
        for (std::size_t m = 0; m < full_pulses; ++m)
            if (m < start || m >= start + gap) idx.push_back(m);
        return {std::move(idx), full_pulses};
    }

    const std::vector<std::size_t>& indices() const { return indices_; }
    std::size_t size() const { return indices_.size(); }
    std::size_t full_pulses() const { return full_pulses_; }
    std::size_t operator[](std::size_t i) const { return indices_[i]; }

private:
    std::vector<std::size_t> indices_;
    std::size_t full_pulses_;
};

struct NoiseSpec {
    double snr_db = 0.0;
    std::uint64_t seed = 0;
};

struct EchoData {
    CMatrix samples;  // L x M_s
    CVector vector;   // L * M_s
};

enum class MatrixKind { physical, partial_fourier };

struct MeasurementMatrix {
    CMatrix matrix;
    MatrixKind kind = MatrixKind::physical;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }
};

inline CVector vectorize_echo(const CMatrix& s) {
    const Eigen::Index cols = s.cols();
    CVector y(s.size());
    for (Eigen::Index n = 0; n < y.size(); ++n) y(n) = s(n / cols, n % cols);
    return y;
}

inline CMatrix devectorize_echo(const CVector& y, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != y.size()) throw InvalidInput("devectorize: size mismatch");
    CMatrix s(rows, cols);
    for (Eigen::Index n = 0; n < y.size(); ++n) s(n / cols, n % cols) = y(n);
    return s;
}

namespace detail {

inline cplx echo_phase_term(const RadarParams& p, double t, double range) {
    const double delay = t - 2.0 * range / kSpeedOfLight;
    const double phase = 2.0 * kPi * p.carrier_frequency * delay + kPi * p.chirp_rate * delay * delay;
    return std::polar(1.0, phase);
}

/// Adds circular complex Gaussian noise at `snr_db` relative to the mean sample power.
inline void add_noise(CMatrix& s, const NoiseSpec& noise) {
    const double signal_power = s.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(s.size(), 1));
    const double noise_power = signal_power / std::pow(10.0, noise.snr_db / 10.0);
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(noise_power / 2.0));
    for (Eigen::Index c = 0; c < s.cols(); ++c)
        for (Eigen::Index r = 0; r < s.rows(); ++r) s(r, c) += cplx{gauss(rng), gauss(rng)};
}

}  // namespace detail

/// Echo of every nonzero scatterer summed over the selected pulses, optionally with noise.
inline EchoData synth_echo(const RadarParams& params, const SceneModel& scene, const ApertureSelection& aperture,
                           const std::optional<NoiseSpec>& noise = std::nullopt) {
    params.validate();
    scene.validate();
    if (aperture.full_pulses() != params.full_pulses)
        throw InvalidInput("aperture built for a different M_all");

    const auto L = static_cast<Eigen::Index>(params.fast_time_samples);
    const auto ms = static_cast<Eigen::Index>(aperture.size());
    EchoData echo;
    echo.samples = CMatrix::Zero(L, ms);
    for (Eigen::Index m = 0; m < ms; ++m) {
        const double tau = params.slow_time(aperture[static_cast<std::size_t>(m)]);
        for (const auto& pt : scene.points) {
            if (pt.coefficient == cplx{0.0, 0.0}) continue;
            const double range = scene.grid[pt.index](tau);
            for (Eigen::Index l = 0; l < L; ++l)
                echo.samples(l, m) += pt.coefficient * detail::echo_phase_term(params, params.fast_time(l), range);
        }
    }
    if (noise) detail::add_noise(echo.samples, *noise);
    echo.vector = vectorize_echo(echo.samples);
    return echo;
}

/// Physical measurement matrix: column p is the unit-modulus echo of grid cell p,
/// laid out with the same fast-time-major index map as vectorize_echo.
inline MeasurementMatrix build_measurement_matrix(const RadarParams& params, const std::vector<RangeHistory>& grid,
                                                  const ApertureSelection& aperture) {
    params.validate();
    if (grid.empty()) throw InvalidInput("empty scene grid");
    if (aperture.full_pulses() != params.full_pulses)
        throw InvalidInput("aperture built for a different M_all");

    const auto ms = static_cast<Eigen::Index>(aperture.size());
    const Eigen::Index rows = static_cast<Eigen::Index>(params.fast_time_samples) * ms;
    MeasurementMatrix phi{CMatrix(rows, static_cast<Eigen::Index>(grid.size())), MatrixKind::physical};
    for (Eigen::Index n = 0; n < rows; ++n) {
        const double t = params.fast_time(static_cast<std::size_t>(n / ms));
        const double tau = params.slow_time(aperture[static_cast<std::size_t>(n % ms)]);
        for (std::size_t p = 0; p < grid.size(); ++p)
            phi.matrix(n, static_cast<Eigen::Index>(p)) = detail::echo_phase_term(params, t, grid[p](tau));
    }
    return phi;
}

/// Rows `aperture[i]` of the unitary M_all-point inverse DFT, exp(+j 2 pi m k / M_all) / sqrt(M_all).
inline MeasurementMatrix build_partial_fourier_dictionary(std::size_t full_pulses, const ApertureSelection& aperture) {
    if (aperture.full_pulses() != full_pulses) throw InvalidInput("aperture built for a different M_all");
    const auto n = static_cast<Eigen::Index>(full_pulses);
    const double scale = 1.0 / std::sqrt(static_cast<double>(full_pulses));
    MeasurementMatrix phi{CMatrix(static_cast<Eigen::Index>(aperture.size()), n), MatrixKind::partial_fourier};
    for (Eigen::Index i = 0; i < phi.rows(); ++i) {
        const auto m = static_cast<std::uint64_t>(aperture[static_cast<std::size_t>(i)]);
        for (Eigen::Index k = 0; k < n; ++k) {
            // Reduce m*k first so the angle stays in [0, 2 pi).
            const auto mk = (m * static_cast<std::uint64_t>(k)) % full_pulses;
            phi.matrix(i, k) = std::polar(scale, 2.0 * kPi * static_cast<double>(mk) / static_cast<double>(full_pulses));
        }
    }
    return phi;
}

/// Range-compressed data for per-range-cell imaging: row r holds (Phi * scene.row(r)^T)^T.
/// `scene` is L_t x M_all; the result is L_t x M_s.
inline CMatrix synth_range_profiles(const CMatrix& scene, const MeasurementMatrix& dictionary,
                                    const std::optional<NoiseSpec>& noise = std::nullopt) {
    if (scene.cols() != dictionary.cols()) throw InvalidInput("scene width does not match the dictionary");
    CMatrix profiles = (dictionary.matrix * scene.transpose()).transpose();
    if (noise) detail::add_noise(profiles, *noise);
    return profiles;
}

/// K distinct random positions, unit-modulus coefficients with random phase.
inline CVector random_sparse_vector(std::size_t size, std::size_t sparsity, std::mt19937_64& rng) {
    if (sparsity > size) throw InvalidInput("sparsity exceeds vector size");
    std::vector<std::size_t> pos(size);
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    for (std::size_t i = 0; i < sparsity; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, size - 1);
        std::swap(pos[i], pos[pick(rng)]);
    }
    std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
    CVector v = CVector::Zero(static_cast<Eigen::Index>(size));
    for (std::size_t i = 0; i < sparsity; ++i) v(static_cast<Eigen::Index>(pos[i])) = std::polar(1.0, angle(rng));
    return v;
}

/// L_t x M_all scene with `per_cell` scatterers in each of `occupied` randomly chosen range cells.
inline CMatrix random_cell_scene(std::size_t range_cells, std::size_t cross_cells, std::size_t occupied,
                                 std::size_t per_cell, std::uint64_t seed) {
    if (occupied > range_cells) throw InvalidInput("more occupied cells than range cells");
    std::mt19937_64 rng(seed);
    CVector mask = random_sparse_vector(range_cells, occupied, rng);
    CMatrix scene = CMatrix::Zero(static_cast<Eigen::Index>(range_cells), static_cast<Eigen::Index>(cross_cells));
    for (Eigen::Index r = 0; r < mask.size(); ++r)
        if (mask(r) != cplx{0.0, 0.0}) scene.row(r) = random_sparse_vector(cross_cells, per_cell, rng).transpose();
    return scene;
}

}  // namespace qsparse
