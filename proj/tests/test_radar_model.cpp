#include "qsparse/radar_model.hpp"

#include <gtest/gtest.h>

using namespace qsparse;

namespace {

RadarParams small_radar(std::size_t L = 16, std::size_t m_all = 8) {
    RadarParams p;
    p.carrier_frequency = 10e9;
    p.bandwidth = 200e6;
    p.pulse_duration = 2e-6;
    p.chirp_rate = p.bandwidth / p.pulse_duration;
    p.fast_time_samples = L;
    p.full_pulses = m_all;
    p.prf = 500.0;
    return p;
}

/// Turntable-like grid: P cells at distinct ranges with small radial velocities.
std::vector<RangeHistory> small_grid(std::size_t cells) {
    std::vector<RangeHistory> g;
    for (std::size_t p = 0; p < cells; ++p)
        g.push_back(RangeHistory::linear(1000.0 + 0.37 * static_cast<double>(p), 0.05 * (static_cast<double>(p) - 2.0)));
    return g;
}

SceneModel scene_with(const std::vector<RangeHistory>& grid, std::vector<ScatterPoint> pts) {
    SceneModel s;
    s.grid = grid;
    s.points = std::move(pts);
    return s;
}

}  // namespace

TEST(RadarParams, ValidateRejectsBadValues) {
    auto p = small_radar();
    EXPECT_NO_THROW(p.validate());
    p.pulse_duration = 0.0;
    EXPECT_THROW(p.validate(), InvalidInput);
    p = small_radar();
    p.carrier_frequency = -1.0;
    EXPECT_THROW(p.validate(), InvalidInput);
    p = small_radar();
    p.fast_time_samples = 0;
    EXPECT_THROW(p.validate(), InvalidInput);
}

TEST(RadarParams, FastTimeSpansThePulse) {
    const auto p = small_radar(5);
    EXPECT_DOUBLE_EQ(p.fast_time(0), -1e-6);
    EXPECT_DOUBLE_EQ(p.fast_time(4), 1e-6);
    EXPECT_NEAR(p.fast_time(2), 0.0, 1e-18);
}

TEST(SynthEcho, ZeroRangeZeroChirpCollapsesToCarrier) {
    auto p = small_radar(7, 4);
    p.chirp_rate = 0.0;
    const auto scene = scene_with({RangeHistory::constant(0.0)}, {{0, cplx{1.0, 0.0}}});
    const auto echo = synth_echo(p, scene, ApertureSelection({0, 2, 3}, 4));
    for (Eigen::Index l = 0; l < 7; ++l)
        for (Eigen::Index m = 0; m < 3; ++m) {
            const cplx expected = std::polar(1.0, 2.0 * kPi * p.carrier_frequency * p.fast_time(static_cast<std::size_t>(l)));
            EXPECT_LT(std::abs(echo.samples(l, m) - expected), 1e-9);
        }
}

TEST(SynthEcho, TwoPointsAddUp) {
    const auto p = small_radar();
    const auto grid = small_grid(5);
    const auto ap = ApertureSelection::random(8, 0.5, 3);
    const auto a = synth_echo(p, scene_with(grid, {{1, cplx{0.7, -0.2}}}), ap);
    const auto b = synth_echo(p, scene_with(grid, {{3, cplx{-0.1, 1.1}}}), ap);
    const auto ab = synth_echo(p, scene_with(grid, {{1, cplx{0.7, -0.2}}, {3, cplx{-0.1, 1.1}}}), ap);
    EXPECT_LT((ab.samples - a.samples - b.samples).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SynthEcho, MatchesMeasurementMatrixOnTheGrid) {
    const auto p = small_radar(12, 10);
    const auto grid = small_grid(9);
    const auto ap = ApertureSelection::full(10);
    std::mt19937_64 rng(9);
    const CVector sigma = random_sparse_vector(9, 3, rng);
    SceneModel scene;
    scene.grid = grid;
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
        if (sigma(i) != cplx{0.0, 0.0}) scene.points.push_back({static_cast<std::size_t>(i), sigma(i)});
    const auto echo = synth_echo(p, scene, ap);
    const auto phi = build_measurement_matrix(p, grid, ap);
    const CVector model = phi.matrix * sigma;
    EXPECT_LE((echo.vector - model).norm(), 1e-10 * model.norm());
}

TEST(SynthEcho, ConsistencyHoldsOnRandomAperturesAndScenes) {
    const auto p = small_radar(8, 12);
    const auto grid = small_grid(6);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto ap = ApertureSelection::random(12, 0.5, seed);
        std::mt19937_64 rng(seed);
        const CVector sigma = random_sparse_vector(6, 1 + seed % 4, rng);
        SceneModel scene;
        scene.grid = grid;
        for (Eigen::Index i = 0; i < sigma.size(); ++i)
            if (sigma(i) != cplx{0.0, 0.0}) scene.points.push_back({static_cast<std::size_t>(i), sigma(i)});
        const CVector model = build_measurement_matrix(p, grid, ap).matrix * sigma;
        EXPECT_LE((synth_echo(p, scene, ap).vector - model).norm(), 1e-10 * model.norm());
    }
}

TEST(SynthEcho, NoiseHitsTheRequestedSnr) {
    const auto p = small_radar(64, 32);
    const auto grid = small_grid(4);
    const auto scene = scene_with(grid, {{0, cplx{1.0, 0.0}}, {2, cplx{0.0, 1.0}}});
    const auto ap = ApertureSelection::full(32);
    const auto clean = synth_echo(p, scene, ap);
    const auto noisy = synth_echo(p, scene, ap, NoiseSpec{10.0, 77});
    const double snr = clean.samples.squaredNorm() / (noisy.samples - clean.samples).squaredNorm();
    EXPECT_NEAR(10.0 * std::log10(snr), 10.0, 0.5);
    const auto again = synth_echo(p, scene, ap, NoiseSpec{10.0, 77});
    EXPECT_EQ(noisy.samples, again.samples);
}

TEST(SynthEcho, RejectsMismatchedApertureAndBadScene) {
    const auto p = small_radar();
    const auto grid = small_grid(3);
    EXPECT_THROW(synth_echo(p, scene_with(grid, {{0, 1.0}}), ApertureSelection::full(9)), InvalidInput);
    EXPECT_THROW(synth_echo(p, scene_with(grid, {{7, 1.0}}), ApertureSelection::full(8)), InvalidInput);
    EXPECT_THROW(synth_echo(p, scene_with(grid, {{0, 1.0}, {0, 2.0}}), ApertureSelection::full(8)), InvalidInput);
    EXPECT_THROW(synth_echo(p, scene_with(grid, {}), ApertureSelection::full(8)), InvalidInput);
}

TEST(SceneModel, SparsityCountsNonzeroPoints) {
    const auto scene = scene_with(small_grid(5), {{0, 1.0}, {2, 0.0}, {4, cplx{0.0, 2.0}}});
    EXPECT_EQ(scene.grid_size(), 5u);
    EXPECT_EQ(scene.sparsity(), 2u);
    const CVector sigma = scene.coefficients();
    EXPECT_EQ(sigma(4), cplx(0.0, 2.0));
    EXPECT_EQ(sigma(1), cplx(0.0, 0.0));
}

TEST(Aperture, RejectsEmptyDuplicateAndOutOfRange) {
    EXPECT_THROW(ApertureSelection({}, 4), InvalidInput);
    EXPECT_THROW(ApertureSelection({1, 1}, 4), InvalidInput);
    EXPECT_THROW(ApertureSelection({2, 1}, 4), InvalidInput);
    EXPECT_THROW(ApertureSelection({4}, 4), InvalidInput);
    EXPECT_THROW(ApertureSelection::random(8, 0.0, 1), InvalidInput);
    EXPECT_THROW(ApertureSelection::uniform(8, 1.5), InvalidInput);
}

TEST(Aperture, PatternsHaveTheRequestedSizeAndAreIncreasing) {
    for (double rate : {0.125, 0.25, 0.5, 0.75, 1.0}) {
        for (const auto& ap : {ApertureSelection::random(64, rate, 5), ApertureSelection::uniform(64, rate),
                               ApertureSelection::block_missing(64, rate)}) {
            EXPECT_EQ(ap.size(), static_cast<std::size_t>(rate * 64));
            for (std::size_t i = 1; i < ap.size(); ++i) EXPECT_LT(ap[i - 1], ap[i]);
        }
    }
    EXPECT_EQ(ApertureSelection::random(64, 0.5, 5).indices(), ApertureSelection::random(64, 0.5, 5).indices());
    EXPECT_NE(ApertureSelection::random(64, 0.5, 5).indices(), ApertureSelection::random(64, 0.5, 6).indices());
}

TEST(MeasurementMatrix, PhysicalEntriesHaveUnitModulus) {
    const auto phi = build_measurement_matrix(small_radar(), small_grid(6), ApertureSelection::uniform(8, 0.5));
    EXPECT_EQ(phi.kind, MatrixKind::physical);
    EXPECT_EQ(phi.rows(), 16 * 4);
    EXPECT_EQ(phi.cols(), 6);
    EXPECT_LT((phi.matrix.cwiseAbs().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(MeasurementMatrix, EqualRangesGiveIdenticalCarrierColumns) {
    auto p = small_radar(10, 4);
    p.chirp_rate = 0.0;
    const std::vector<RangeHistory> grid{RangeHistory::constant(0.0), RangeHistory::constant(0.0)};
    const auto phi = build_measurement_matrix(p, grid, ApertureSelection::full(4));
    EXPECT_LT((phi.matrix.col(0) - phi.matrix.col(1)).norm(), 1e-15);
    for (Eigen::Index n = 0; n < phi.rows(); ++n) {
        const double t = p.fast_time(static_cast<std::size_t>(n / 4));
        EXPECT_LT(std::abs(phi.matrix(n, 0) - std::polar(1.0, 2.0 * kPi * p.carrier_frequency * t)), 1e-9);
    }
}

TEST(PartialFourier, FullApertureIsUnitary) {
    const auto phi = build_partial_fourier_dictionary(16, ApertureSelection::full(16));
    EXPECT_EQ(phi.kind, MatrixKind::partial_fourier);
    EXPECT_LT((phi.matrix * phi.matrix.adjoint() - CMatrix::Identity(16, 16)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((phi.matrix.adjoint() * phi.matrix - CMatrix::Identity(16, 16)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PartialFourier, DcRowOfFourPointIdft) {
    const auto phi = build_partial_fourier_dictionary(4, ApertureSelection({0}, 4));
    ASSERT_EQ(phi.rows(), 1);
    for (Eigen::Index k = 0; k < 4; ++k) EXPECT_LT(std::abs(phi.matrix(0, k) - 0.5), 1e-15);
}

TEST(PartialFourier, RowsAreIdftRowsAndOrthonormal) {
    const auto ap = ApertureSelection::random(256, 0.25, 17);
    const auto phi = build_partial_fourier_dictionary(256, ap);
    ASSERT_EQ(phi.rows(), 64);
    EXPECT_LT((phi.matrix * phi.matrix.adjoint() - CMatrix::Identity(64, 64)).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index i = 0; i < phi.rows(); i += 13)
        for (Eigen::Index k = 0; k < 256; k += 31) {
            const double angle = 2.0 * kPi * static_cast<double>(ap[static_cast<std::size_t>(i)]) * static_cast<double>(k) / 256.0;
            EXPECT_LT(std::abs(phi.matrix(i, k) - std::polar(1.0 / 16.0, angle)), 1e-12);
        }
    // Column Gram: unit diagonal scaled by M_s / M_all, bounded coherence.
    const CMatrix gram = phi.matrix.adjoint() * phi.matrix * (256.0 / 64.0);
    EXPECT_LT((gram.diagonal().array() - 1.0).abs().maxCoeff(), 1e-12);
    CMatrix off = gram;
    off.diagonal().setZero();
    const double coherence = off.cwiseAbs().maxCoeff();
    RecordProperty("max_off_diagonal_coherence", std::to_string(coherence));
    EXPECT_LT(coherence, 1.0);
}

TEST(Vectorize, ScalarIsItself) {
    CMatrix s(1, 1);
    s(0, 0) = {2.0, -1.0};
    const CVector y = vectorize_echo(s);
    ASSERT_EQ(y.size(), 1);
    EXPECT_EQ(y(0), s(0, 0));
}

TEST(Vectorize, MatchesTheFloorRemainderIndexMaps) {
    // n = 0..3 for L = 2, M_s = 2: fast time index floor(n / M_s), slow time n mod M_s.
    CMatrix s(2, 2);
    s << cplx{1, 0}, cplx{2, 0}, cplx{3, 0}, cplx{4, 0};
    const CVector y = vectorize_echo(s);
    for (Eigen::Index n = 0; n < 4; ++n) EXPECT_EQ(y(n), s(n / 2, n % 2));
    EXPECT_EQ(y(1), cplx(2, 0));
    EXPECT_EQ(y(2), cplx(3, 0));
}

TEST(Vectorize, RoundTripsNonSquare) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    CMatrix s(5, 3);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = {g(rng), g(rng)};
    EXPECT_EQ(devectorize_echo(vectorize_echo(s), 5, 3), s);
    EXPECT_THROW(devectorize_echo(vectorize_echo(s), 4, 3), InvalidInput);
}

TEST(RangeProfiles, RowsAreDictionaryTimesScene) {
    const auto ap = ApertureSelection::random(32, 0.5, 4);
    const auto dict = build_partial_fourier_dictionary(32, ap);
    const CMatrix scene = random_cell_scene(6, 32, 2, 3, 8);
    const CMatrix prof = synth_range_profiles(scene, dict);
    ASSERT_EQ(prof.rows(), 6);
    ASSERT_EQ(prof.cols(), 16);
    for (Eigen::Index r = 0; r < 6; ++r)
        EXPECT_LT((prof.row(r).transpose() - dict.matrix * scene.row(r).transpose()).norm(), 1e-12);
    // Exactly two occupied rows with three scatterers each.
    int occupied = 0;
    for (Eigen::Index r = 0; r < 6; ++r) {
        const auto nz = (scene.row(r).array().abs() > 0.0).count();
        if (nz > 0) {
            ++occupied;
            EXPECT_EQ(nz, 3);
        }
    }
    EXPECT_EQ(occupied, 2);
}

TEST(RandomSparseVector, HasExactSparsityAndUnitModulus) {
    std::mt19937_64 rng(1);
    const CVector v = random_sparse_vector(50, 7, rng);
    EXPECT_EQ((v.array().abs() > 0.0).count(), 7);
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (std::abs(v(i)) > 0.0) { EXPECT_NEAR(std::abs(v(i)), 1.0, 1e-15); }
    EXPECT_THROW(random_sparse_vector(3, 4, rng), InvalidInput);
}
