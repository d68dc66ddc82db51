#pragma once

// Small dense linear-algebra helpers shared by the certificate and the
// linearization oracle. Everything here is sized for desk-scale systems.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gridcert {

using Eigen::Index;
using Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::RowVector2d;
using Eigen::Vector2d;
using Eigen::VectorXcd;
using Eigen::VectorXd;

/// Largest |M(i,j) - M(j,i)|.
inline double max_asymmetry(const MatrixXd& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("max_asymmetry: matrix is not square");
    if (m.size() == 0) return 0.0;
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

/// Columns form an orthonormal basis of the orthogonal complement of `n`.
/// Built from the Householder reflector that maps n/|n| onto e_1.
inline MatrixXd orthonormal_complement(const VectorXd& n) {
    const Index dim = n.size();
    const double norm = n.norm();
    if (dim == 0 || norm == 0.0) throw std::invalid_argument("orthonormal_complement: zero vector");
    VectorXd u = n / norm;
    // Reflect onto -sign(u0) e_1 to avoid cancellation.
    const double sign = u(0) >= 0.0 ? 1.0 : -1.0;
    u(0) += sign;
    const double unorm = u.norm();
    MatrixXd h = MatrixXd::Identity(dim, dim);
    if (unorm > 0.0) {
        u /= unorm;
        h -= 2.0 * u * u.transpose();
    }
    return h.rightCols(dim - 1);
}

struct SymmetricExtremum {
    double value = std::numeric_limits<double>::quiet_NaN();
    VectorXd vector;  // unit eigenvector belonging to `value`
};

/// Smallest eigenvalue of a symmetric matrix restricted to the orthogonal
/// complement of `null_dir`. The returned vector is expressed in the
/// original coordinates.
inline SymmetricExtremum deflated_min_eigen(const MatrixXd& m, const VectorXd& null_dir) {
    const MatrixXd basis = orthonormal_complement(null_dir);
    SymmetricExtremum out;
    if (basis.cols() == 0) {
        out.value = std::numeric_limits<double>::infinity();
        out.vector = VectorXd::Zero(m.rows());
        return out;
    }
    const MatrixXd projected = basis.transpose() * (0.5 * (m + m.transpose())) * basis;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(projected);
    if (es.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver failed");
    out.value = es.eigenvalues()(0);
    out.vector = basis * es.eigenvectors().col(0);
    return out;
}

/// Schur complement A - B C^{-1} B^T of the symmetric block matrix [[A, B], [B^T, C]].
/// Throws when C is numerically singular (2-norm condition number above `max_condition`).
inline MatrixXd schur_complement(const MatrixXd& a, const MatrixXd& b, const MatrixXd& c,
                                 double max_condition = 1e12) {
    if (c.rows() == 0) return a;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (c + c.transpose()), Eigen::EigenvaluesOnly);
    const VectorXd mags = es.eigenvalues().cwiseAbs();
    const double hi = mags.maxCoeff();
    const double lo = mags.minCoeff();
    if (!(lo > 0.0) || hi / lo > max_condition) {
        throw std::runtime_error("schur_complement: eliminated block is numerically singular (condition " +
                                 std::to_string(lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()) +
                                 ")");
    }
    const MatrixXd s = a - b * c.fullPivLu().solve(b.transpose());
    return 0.5 * (s + s.transpose());
}

/// Maps an angle into (-pi, pi].
inline double normalize_angle(double a) {
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    double r = std::remainder(a, two_pi);  // in [-pi, pi]
    if (r <= -3.14159265358979323846) r += two_pi;
    return r;
}

}  // namespace gridcert
