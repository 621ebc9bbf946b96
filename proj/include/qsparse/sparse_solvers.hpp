#pragma once

// Classical side of the reconstruction: the ridge-regularized normal equations,
// a dense direct solve used as the oracle for the quantum path, OMP, top-K
// sparsification and the error metric.

#include "qsparse/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace qsparse {

struct RegularizedSystem {
    CMatrix xi;              // eta * Phi^H Phi + lambda0 * I
    CVector gamma;           // Phi^H Y
    double eta = 1.0;
    double lambda0 = 1.0;
    RVector eigenvalues;     // ascending
    CMatrix eigenvectors;    // columns u_j
    double condition_number = 1.0;
    std::size_t row_sparsity = 0;

    Eigen::Index dimension() const { return xi.rows(); }
};

struct RecoveryResult {
    CVector estimate;                   // final K-sparse estimate
    CVector dense;                      // pre-sparsification solution (QRA) or LS fit (OMP)
    std::vector<std::size_t> support;   // sorted, K entries
    double residual_norm = 0.0;         // ||Y - Phi estimate||
    std::string method;
    bool fallback_used = false;         // OMP hit a rank-deficient subproblem
    std::vector<double> residual_history;
    double flop_proxy = 0.0;            // complex multiply-adds, rough
};

inline constexpr double kRowSparsityThreshold = 1e-10;

/// Maximum number of entries per row with modulus above `threshold`.
inline std::size_t row_sparsity(const CMatrix& m, double threshold = kRowSparsityThreshold) {
    std::size_t best = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::size_t count = 0;
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            if (std::abs(m(r, c)) > threshold) ++count;
        best = std::max(best, count);
    }
    return best;
}

/// Wraps an already formed Hermitian matrix; computes the spectrum eagerly.
inline RegularizedSystem make_regularized_system(CMatrix xi, CVector gamma, double eta, double lambda0) {
    if (xi.rows() != xi.cols()) throw InvalidInput("system matrix must be square");
    if (gamma.size() != xi.rows()) throw InvalidInput("right-hand side has the wrong length");
    if (!xi.allFinite() || !gamma.allFinite()) throw InvalidInput("non-finite entries in the regularized system");

    RegularizedSystem sys;
    sys.xi = 0.5 * (xi + xi.adjoint());
    sys.gamma = std::move(gamma);
    sys.eta = eta;
    sys.lambda0 = lambda0;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(sys.xi);
    if (es.info() != Eigen::Success) throw DegenerateSystem("Hermitian eigendecomposition failed");
    sys.eigenvalues = es.eigenvalues();
    sys.eigenvectors = es.eigenvectors();
    const double lo = sys.eigenvalues.minCoeff();
    sys.condition_number = lo > 0.0 ? sys.eigenvalues.maxCoeff() / lo : std::numeric_limits<double>::infinity();
    sys.row_sparsity = row_sparsity(sys.xi);
    return sys;
}

/// Xi = eta Phi^H Phi + lambda0 I, gamma = Phi^H Y.
inline RegularizedSystem build_regularized_system(const CMatrix& phi, const CVector& y, double eta, double lambda0) {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidInput("eta must be a positive finite number");
    if (!(lambda0 > 0.0) || !std::isfinite(lambda0)) throw InvalidInput("lambda0 must be a positive finite number");
    if (phi.rows() != y.size()) throw InvalidInput("Phi rows and Y length differ");
    if (!phi.allFinite() || !y.allFinite()) throw InvalidInput("non-finite entries in Phi or Y");

    CMatrix xi = eta * (phi.adjoint() * phi);
    xi.diagonal().array() += lambda0;
    return make_regularized_system(std::move(xi), phi.adjoint() * y, eta, lambda0);
}

inline constexpr double kDirectSolveTolerance = 1e-10;
inline constexpr double kMaxConditionNumber = 1e12;

/// Cholesky solve of Xi x = gamma; rejects ill-conditioned systems and
/// any solution whose relative residual exceeds 1e-10.
inline CVector direct_solve(const RegularizedSystem& sys) {
    if (!(sys.condition_number < kMaxConditionNumber))
        throw DegenerateSystem("condition number " + std::to_string(sys.condition_number) + " exceeds 1e12");
    Eigen::LLT<CMatrix> llt(sys.xi);
    if (llt.info() != Eigen::Success) throw DegenerateSystem("system matrix is not positive definite");
    CVector x = llt.solve(sys.gamma);
    const double scale = std::max(sys.gamma.norm(), std::numeric_limits<double>::min());
    const double residual = (sys.xi * x - sys.gamma).norm();
    if (sys.gamma.norm() > 0.0 && residual / scale > kDirectSolveTolerance) {
        // One step of iterative refinement before giving up.
        x += llt.solve(sys.gamma - sys.xi * x);
        if ((sys.xi * x - sys.gamma).norm() / scale > kDirectSolveTolerance)
            throw DegenerateSystem("direct solve residual above 1e-10");
    }
    return x;
}

namespace detail {

inline CMatrix gather_columns(const CMatrix& phi, const std::vector<std::size_t>& cols) {
    CMatrix sub(phi.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = phi.col(static_cast<Eigen::Index>(cols[i]));
    return sub;
}

struct LeastSquares {
    CVector coefficients;
    bool regularized = false;
};

/// min ||A x - y||; falls back to a small ridge when A is numerically rank deficient.
inline LeastSquares least_squares(const CMatrix& a, const CVector& y) {
    Eigen::ColPivHouseholderQR<CMatrix> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() == a.cols()) return {qr.solve(y), false};
    const double ridge = 1e-8 * std::max(1.0, a.squaredNorm());
    CMatrix normal = a.adjoint() * a;
    normal.diagonal().array() += ridge;
    return {normal.ldlt().solve(a.adjoint() * y), true};
}

inline std::vector<std::size_t> pad_support(std::vector<std::size_t> support, std::size_t k, std::size_t size) {
    std::sort(support.begin(), support.end());
    for (std::size_t i = 0; support.size() < k && i < size; ++i)
        if (!std::binary_search(support.begin(), support.end(), i)) {
            support.insert(std::lower_bound(support.begin(), support.end(), i), i);
        }
    return support;
}

}  // namespace detail

inline constexpr double kOmpRelativeStop = 1e-9;

/// Orthogonal matching pursuit: K rounds of correlate, select, least-squares
/// refit, stopping early once ||r|| < 1e-9 ||Y||. Columns are scored by
/// normalized correlation; ties go to the lowest index.
inline RecoveryResult omp(const CMatrix& phi, const CVector& y, std::size_t k) {
    if (phi.rows() != y.size()) throw InvalidInput("Phi rows and Y length differ");
    const auto ncols = static_cast<std::size_t>(phi.cols());
    if (k > std::min<std::size_t>(static_cast<std::size_t>(phi.rows()), ncols))
        throw InvalidInput("K exceeds min(rows, cols) of Phi");

    RecoveryResult out;
    out.method = "omp";
    const RVector col_norms = phi.colwise().norm().transpose();
    const double y_norm = y.norm();
    const double rows = static_cast<double>(phi.rows());

    CVector residual = y;
    CVector coeffs;
    std::vector<std::size_t> chosen;
    std::vector<bool> used(ncols, false);

    for (std::size_t it = 0; it < k; ++it) {
        if (residual.norm() <= kOmpRelativeStop * y_norm) break;
        const CVector corr = phi.adjoint() * residual;
        out.flop_proxy += rows * static_cast<double>(ncols);

        std::size_t best = ncols;
        double best_score = -1.0;
        for (std::size_t p = 0; p < ncols; ++p) {
            if (used[p] || col_norms(static_cast<Eigen::Index>(p)) == 0.0) continue;
            const double score = std::abs(corr(static_cast<Eigen::Index>(p))) / col_norms(static_cast<Eigen::Index>(p));
            if (score > best_score) {
                best_score = score;
                best = p;
            }
        }
        if (best == ncols) break;
        used[best] = true;
        chosen.push_back(best);

        const CMatrix sub = detail::gather_columns(phi, chosen);
        auto ls = detail::least_squares(sub, y);
        out.fallback_used = out.fallback_used || ls.regularized;
        coeffs = std::move(ls.coefficients);
        const double s = static_cast<double>(chosen.size());
        out.flop_proxy += rows * s * s + rows * s;
        residual = y - sub * coeffs;
        out.residual_history.push_back(residual.norm());
    }

    out.estimate = CVector::Zero(phi.cols());
    for (std::size_t i = 0; i < chosen.size(); ++i)
        out.estimate(static_cast<Eigen::Index>(chosen[i])) = coeffs(static_cast<Eigen::Index>(i));
    out.dense = out.estimate;
    out.support = detail::pad_support(chosen, k, ncols);
    out.residual_norm = residual.norm();
    return out;
}

/// Keeps the K entries of largest modulus (ties: lowest index) and zeroes the rest.
inline RecoveryResult top_k(const CVector& dense, std::size_t k) {
    const auto n = static_cast<std::size_t>(dense.size());
    if (k > n) throw InvalidInput("K exceeds vector length");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(dense(static_cast<Eigen::Index>(a))) > std::abs(dense(static_cast<Eigen::Index>(b)));
    });
    order.resize(k);
    std::sort(order.begin(), order.end());

    RecoveryResult out;
    out.method = "top_k";
    out.dense = dense;
    out.estimate = CVector::Zero(dense.size());
    for (auto i : order) out.estimate(static_cast<Eigen::Index>(i)) = dense(static_cast<Eigen::Index>(i));
    out.support = std::move(order);
    return out;
}

/// ||estimate - reference|| / ||reference||.
inline double rmse(const CVector& estimate, const CVector& reference) {
    if (estimate.size() != reference.size()) throw InvalidInput("rmse: length mismatch");
    const double ref = reference.norm();
    if (!(ref > 0.0)) throw InvalidInput("rmse: reference has zero norm");
    return (estimate - reference).norm() / ref;
}

/// Classical post-processing applied after top-K selection.
enum class Debias {
    none,         // keep the top-K values as they are
    scale,        // one complex scalar fitted by least squares against Y
    support_lsq,  // least-squares refit of the coefficients on the selected support
};

inline CVector debias(const CMatrix& phi, const CVector& y, const CVector& sparse,
                      const std::vector<std::size_t>& support, Debias mode) {
    switch (mode) {
    case Debias::none:
        return sparse;
    case Debias::scale: {
        const CVector model = phi * sparse;
        const double denom = model.squaredNorm();
        if (denom == 0.0) return sparse;
        return (model.dot(y) / denom) * sparse;
    }
    case Debias::support_lsq: {
        CVector out = CVector::Zero(sparse.size());
        if (support.empty()) return out;
        const auto ls = detail::least_squares(detail::gather_columns(phi, support), y);
        for (std::size_t i = 0; i < support.size(); ++i)
            out(static_cast<Eigen::Index>(support[i])) = ls.coefficients(static_cast<Eigen::Index>(i));
        return out;
    }
    }
    return sparse;
}

}  // namespace qsparse
