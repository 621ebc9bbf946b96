#include "qsparse/radar_model.hpp"
#include "qsparse/sparse_solvers.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace qsparse;

namespace {

CMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    CMatrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = {g(rng), g(rng)};
    return m;
}

CVector diag_system_solution(std::initializer_list<double> d, std::initializer_list<double> g) {
    const auto n = static_cast<Eigen::Index>(d.size());
    CMatrix xi = CMatrix::Zero(n, n);
    CVector gamma(n);
    Eigen::Index i = 0;
    for (double v : d) xi(i, i) = v, ++i;
    i = 0;
    for (double v : g) gamma(i++) = v;
    return direct_solve(make_regularized_system(xi, gamma, 1.0, 1.0));
}

}  // namespace

// --- build_regularized_system -----------------------------------------------

TEST(RegularizedSystem, IdentityExample) {
    CVector y(2);
    y << 1.0, 0.0;
    const auto sys = build_regularized_system(CMatrix::Identity(2, 2), y, 1.0, 1.0);
    EXPECT_LT((sys.xi - 2.0 * CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((sys.gamma - y).norm(), 1e-15);
    EXPECT_NEAR(sys.condition_number, 1.0, 1e-12);
    EXPECT_EQ(sys.row_sparsity, 1u);
}

TEST(RegularizedSystem, AcceptsBothOperatingPoints) {
    std::mt19937_64 rng(2);
    const CMatrix phi = random_matrix(6, 4, rng);
    const CVector y = random_matrix(6, 1, rng);
    for (double eta : {23.0, 33.0}) {
        const auto sys = build_regularized_system(phi, y, eta, 1.0);
        CMatrix expect = eta * phi.adjoint() * phi;
        expect.diagonal().array() += 1.0;
        EXPECT_LT((sys.xi - expect).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(RegularizedSystem, RejectsBadScalarsAndNonFiniteInputs) {
    const CMatrix phi = CMatrix::Identity(2, 2);
    const CVector y = CVector::Ones(2);
    EXPECT_THROW(build_regularized_system(phi, y, 0.0, 1.0), InvalidInput);
    EXPECT_THROW(build_regularized_system(phi, y, 1.0, -1.0), InvalidInput);
    CVector bad = y;
    bad(0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(build_regularized_system(phi, bad, 1.0, 1.0), InvalidInput);
    EXPECT_THROW(build_regularized_system(phi, CVector::Ones(3), 1.0, 1.0), InvalidInput);
}

TEST(RegularizedSystem, HermitianPositiveDefiniteForRandomPhi) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> pos(0.1, 50.0);
    for (int t = 0; t < 50; ++t) {
        const CMatrix phi = random_matrix(3 + t % 7, 2 + t % 9, rng);
        const double eta = pos(rng);
        const double lambda0 = pos(rng) / 10.0;
        const auto sys = build_regularized_system(phi, CVector::Ones(phi.rows()), eta, lambda0);
        EXPECT_LT((sys.xi - sys.xi.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GE(sys.eigenvalues.minCoeff(), lambda0 - 1e-9);
        EXPECT_NEAR(sys.condition_number, sys.eigenvalues.maxCoeff() / sys.eigenvalues.minCoeff(), 1e-12 * sys.condition_number);
        // Eigenpairs reproduce Xi.
        const CMatrix rebuilt = sys.eigenvectors * sys.eigenvalues.cast<cplx>().asDiagonal() * sys.eigenvectors.adjoint();
        EXPECT_LT((rebuilt - sys.xi).cwiseAbs().maxCoeff(), 1e-9 * sys.eigenvalues.maxCoeff());
    }
}

// --- direct_solve -------------------------------------------------------------

TEST(DirectSolve, TwoIdentityExample) {
    const CVector x = diag_system_solution({2.0, 2.0}, {1.0, 0.0});
    EXPECT_NEAR(x(0).real(), 0.5, 1e-15);
    EXPECT_NEAR(std::abs(x(1)), 0.0, 1e-15);
}

TEST(DirectSolve, DiagonalInverse) {
    const CVector x = diag_system_solution({1.0, 2.0, 4.0}, {1.0, 1.0, 1.0});
    EXPECT_NEAR(x(0).real(), 1.0, 1e-15);
    EXPECT_NEAR(x(1).real(), 0.5, 1e-15);
    EXPECT_NEAR(x(2).real(), 0.25, 1e-15);
}

TEST(DirectSolve, ResidualBoundOnAThousandRandomSystems) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> dim(1, 64);
    std::uniform_real_distribution<double> eta(0.5, 40.0);
    for (int t = 0; t < 1000; ++t) {
        const int p = dim(rng);
        const int rows = 1 + (t % 2 == 0 ? p / 2 : p);
        const CMatrix phi = random_matrix(rows, p, rng);
        const CVector y = random_matrix(rows, 1, rng);
        const auto sys = build_regularized_system(phi, y, eta(rng), 1.0);
        const CVector x = direct_solve(sys);
        ASSERT_LE((sys.xi * x - sys.gamma).norm(), 1e-10 * sys.gamma.norm()) << "trial " << t;
    }
}

TEST(DirectSolve, RejectsIllConditionedSystems) {
    CMatrix xi = CMatrix::Identity(2, 2);
    xi(1, 1) = 1e-14;
    const auto sys = make_regularized_system(xi, CVector::Ones(2), 1.0, 1.0);
    EXPECT_THROW(direct_solve(sys), DegenerateSystem);
}

// --- row_sparsity -----------------------------------------------------------------

TEST(RowSparsity, Examples) {
    EXPECT_EQ(row_sparsity(2.0 * CMatrix::Identity(4, 4)), 1u);
    std::mt19937_64 rng(5);
    EXPECT_EQ(row_sparsity(random_matrix(8, 8, rng)), 8u);
    CMatrix tri = CMatrix::Zero(6, 6);
    for (int i = 0; i < 6; ++i) {
        tri(i, i) = 2.0;
        if (i > 0) tri(i, i - 1) = cplx{0.0, -1.0};
        if (i < 5) tri(i, i + 1) = cplx{0.0, 1.0};
    }
    EXPECT_EQ(row_sparsity(tri), 3u);
    CMatrix tiny = CMatrix::Identity(3, 3);
    tiny(0, 1) = 1e-12;
    EXPECT_EQ(row_sparsity(tiny), 1u);
}

// --- top_k ----------------------------------------------------------------------------

TEST(TopK, KeepsLargestModuli) {
    CVector v(3);
    v << 3.0, 1.0, 2.0;
    const auto r = top_k(v, 2);
    EXPECT_EQ(r.estimate(0), cplx(3.0, 0.0));
    EXPECT_EQ(r.estimate(1), cplx(0.0, 0.0));
    EXPECT_EQ(r.estimate(2), cplx(2.0, 0.0));
    EXPECT_EQ(r.support, (std::vector<std::size_t>{0, 2}));
}

TEST(TopK, TiesGoToLowestIndex) {
    CVector v(4);
    v << cplx{0, 1}, cplx{-1, 0}, cplx{1, 0}, cplx{0, -1};
    const auto r = top_k(v, 1);
    EXPECT_EQ(r.support, std::vector<std::size_t>{0});
    EXPECT_EQ(top_k(v, 3).support, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(TopK, AgreesWithFullSortAndIsIdempotent) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
        const CVector v = random_matrix(20, 1, rng);
        const std::size_t k = 1 + static_cast<std::size_t>(t % 20);
        const auto r = top_k(v, k);
        EXPECT_EQ(r.support.size(), k);
        EXPECT_TRUE(std::is_sorted(r.support.begin(), r.support.end()));
        EXPECT_EQ((r.estimate.array().abs() > 0.0).count(), static_cast<Eigen::Index>(k));

        std::vector<std::pair<double, std::size_t>> order;
        for (Eigen::Index i = 0; i < v.size(); ++i) order.emplace_back(-std::abs(v(i)), static_cast<std::size_t>(i));
        std::sort(order.begin(), order.end());
        std::vector<std::size_t> expected;
        for (std::size_t i = 0; i < k; ++i) expected.push_back(order[i].second);
        std::sort(expected.begin(), expected.end());
        EXPECT_EQ(r.support, expected);

        EXPECT_EQ(top_k(r.estimate, k).estimate, r.estimate);
        // Positive rescaling keeps the argmax set.
        EXPECT_EQ(top_k(3.7 * v, k).support, r.support);
        // Modulus order is preserved among kept entries.
        for (auto i : r.support)
            for (Eigen::Index j = 0; j < v.size(); ++j)
                if (std::find(r.support.begin(), r.support.end(), static_cast<std::size_t>(j)) == r.support.end()) {
                    EXPECT_GE(std::abs(v(static_cast<Eigen::Index>(i))), std::abs(v(j)));
                }
    }
    EXPECT_THROW(top_k(CVector::Ones(3), 4), InvalidInput);
}

// --- rmse ---------------------------------------------------------------------------------

TEST(Rmse, Examples) {
    std::mt19937_64 rng(7);
    const CVector s = random_matrix(10, 1, rng);
    EXPECT_DOUBLE_EQ(rmse(s, s), 0.0);
    EXPECT_NEAR(rmse(CVector::Zero(10), s), 1.0, 1e-15);
    EXPECT_NEAR(rmse(2.0 * s, s), 1.0, 1e-15);
    EXPECT_THROW(rmse(s, CVector::Zero(10)), InvalidInput);
    EXPECT_THROW(rmse(s, CVector::Ones(3)), InvalidInput);
}

TEST(Rmse, ScaleConsistent) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 20; ++t) {
        const CVector a = random_matrix(12, 1, rng);
        const CVector b = random_matrix(12, 1, rng);
        EXPECT_NEAR(rmse(4.5 * a, 4.5 * b), rmse(a, b), 1e-12);
    }
}

// --- omp ------------------------------------------------------------------------------------

TEST(Omp, OrthonormalColumnsOneSparse) {
    std::mt19937_64 rng(9);
    const CMatrix q = qsparse::testing::random_unitary(8, rng).leftCols(5);
    CVector sigma = CVector::Zero(5);
    sigma(3) = {0.4, -1.2};
    const auto r = omp(q, q * sigma, 1);
    EXPECT_EQ(r.support, std::vector<std::size_t>{3});
    EXPECT_LT((r.estimate - sigma).norm(), 1e-12);
}

TEST(Omp, PartialFourierFiveSeparatedScatterers) {
    const auto ap = ApertureSelection::random(256, 0.25, 21);
    const auto dict = build_partial_fourier_dictionary(256, ap);
    CVector sigma = CVector::Zero(256);
    for (int i = 0; i < 5; ++i) sigma(10 + 50 * i) = std::polar(1.0, 0.7 * i);
    const auto r = omp(dict.matrix, dict.matrix * sigma, 5);
    EXPECT_EQ(r.support, (std::vector<std::size_t>{10, 60, 110, 160, 210}));
    EXPECT_LE(rmse(r.estimate, sigma), 1e-10);
    EXPECT_FALSE(r.fallback_used);
}

TEST(Omp, ZeroDataStopsImmediately) {
    const auto dict = build_partial_fourier_dictionary(16, ApertureSelection::uniform(16, 0.5));
    const auto r = omp(dict.matrix, CVector::Zero(8), 3);
    EXPECT_EQ(r.estimate, CVector::Zero(16));
    EXPECT_EQ(r.support, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(r.residual_norm, 0.0);
    EXPECT_TRUE(r.residual_history.empty());
}

TEST(Omp, ResidualNonIncreasingAndOrthogonalToSelection) {
    std::mt19937_64 rng(10);
    for (int t = 0; t < 30; ++t) {
        const CMatrix phi = random_matrix(20, 40, rng);
        const CVector y = random_matrix(20, 1, rng);
        const auto r = omp(phi, y, 8);
        for (std::size_t i = 1; i < r.residual_history.size(); ++i)
            EXPECT_LE(r.residual_history[i], r.residual_history[i - 1] + 1e-12);
        const CVector residual = y - phi * r.estimate;
        for (auto idx : r.support)
            if (r.estimate(static_cast<Eigen::Index>(idx)) != cplx{0.0, 0.0}) {
                EXPECT_LT(std::abs(phi.col(static_cast<Eigen::Index>(idx)).dot(residual)), 1e-9 * std::max(1.0, y.norm()));
            }
        EXPECT_NEAR(r.residual_norm, residual.norm(), 1e-12);
    }
}

TEST(Omp, RankDeficientSubmatrixUsesFlaggedFallback) {
    // Columns 0 and 1 coincide and nothing spans the third row, so the
    // residual never vanishes and round three must refit a singular subproblem.
    CMatrix phi(3, 3);
    phi << 1.0, 1.0, 0.0,
           0.0, 0.0, 1.0,
           0.0, 0.0, 0.0;
    CVector y(3);
    y << 1.0, 0.5, 1.0;
    const auto r = omp(phi, y, 3);
    EXPECT_TRUE(r.fallback_used);
    EXPECT_EQ(r.support, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_NEAR(r.residual_norm, 1.0, 1e-6);
    EXPECT_NEAR(std::abs(r.estimate(0) + r.estimate(1) - 1.0), 0.0, 1e-6);
    EXPECT_THROW(omp(phi, y, 4), InvalidInput);
}

// --- debias --------------------------------------------------------------------------------

TEST(Debias, SupportLeastSquaresIsExactOnTheTrueSupport) {
    const auto dict = build_partial_fourier_dictionary(32, ApertureSelection::random(32, 0.5, 3));
    CVector sigma = CVector::Zero(32);
    sigma(4) = 1.0;
    sigma(19) = cplx{0.0, -2.0};
    const CVector y = dict.matrix * sigma;
    CVector shrunk = 0.3 * sigma;
    const std::vector<std::size_t> support{4, 19};
    EXPECT_LT((debias(dict.matrix, y, shrunk, support, Debias::support_lsq) - sigma).norm(), 1e-12);
    EXPECT_LT((debias(dict.matrix, y, shrunk, support, Debias::scale) - sigma).norm(), 1e-12);
    EXPECT_EQ(debias(dict.matrix, y, shrunk, support, Debias::none), shrunk);
}
