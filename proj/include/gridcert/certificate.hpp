#pragma once

// Closed-form small-signal stability certificate evaluated from the
// stationary power flow and the synchronous reactances alone:
//
//     gamma_i > 0 at every generator-type bus, and
//     diag(Gamma_i) + L(theta*, V*; B) is positive semidefinite.
//
// The 2N x 2N matrices use the interleaved (theta_1, V_1, theta_2, ...)
// ordering. They always annihilate the rotation vector n (ones in the
// theta slots), so the semidefinite test runs on the complement of n.

#include "gridcert/devices.hpp"
#include "gridcert/errors.hpp"
#include "gridcert/linalg.hpp"
#include "gridcert/netmodel.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gridcert {

enum class Verdict { stable, unstable, marginal };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::stable: return "stable";
        case Verdict::unstable: return "unstable";
        case Verdict::marginal: return "marginal";
    }
    return "?";
}

inline double gamma(const BusOperatingPoint& rho, double X_d, double X_q) {
    const double phi = internal_phase(rho, X_q);
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double v2 = rho.V * rho.V;
    return rho.Q + v2 * c * c / X_q + v2 * s * s / X_d;
}

/// 2x2 block of a generator-type bus. Requires gamma > 0.
inline Matrix2d gamma_block(const BusOperatingPoint& rho, double X_d, double X_q) {
    const double g = gamma(rho, X_d, X_q);
    if (!(g > 0.0)) throw DomainError("gamma <= 0: local condition violated, Gamma undefined");
    const double phi = internal_phase(rho, X_q);
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double v2 = rho.V * rho.V;
    const double num = v2 * v2 / (X_q * X_d) - rho.P * rho.P + (v2 * c * c / X_d + v2 * s * s / X_q) * rho.Q -
                       2.0 * (1.0 / X_q - 1.0 / X_d) * rho.P * v2 * c * s;
    Matrix2d out = Matrix2d::Zero();
    out(1, 1) = num / (v2 * g);
    return out;
}

/// 2x2 block of a constant-power (grid-following) load.
inline Matrix2d load_gamma_block(double Q_ref, double V) {
    if (!(V > 0.0)) throw std::invalid_argument("load_gamma_block: V must be positive");
    Matrix2d out = Matrix2d::Zero();
    out(1, 1) = Q_ref / (V * V);
    return out;
}

/// Network matrix L; equals the Hessian of the network energy
/// U_0 = -1/2 sum_ij B_ij V_i V_j cos(theta_i - theta_j).
inline MatrixXd network_matrix(const VectorXd& theta, const VectorXd& V, const MatrixXd& B) {
    const Index n = B.rows();
    if (theta.size() != n || V.size() != n) throw std::invalid_argument("network_matrix: size mismatch");
    MatrixXd L = MatrixXd::Zero(2 * n, 2 * n);
    for (Index i = 0; i < n; ++i) {
        double tt = 0.0;
        double tv = 0.0;
        for (Index j = 0; j < n; ++j) {
            if (j == i || B(i, j) == 0.0) continue;
            const double d = theta(i) - theta(j);
            const double c = std::cos(d);
            const double s = std::sin(d);
            tt += B(i, j) * V(i) * V(j) * c;
            tv += B(i, j) * V(j) * s;
            L(2 * i, 2 * j) = -B(i, j) * V(i) * V(j) * c;
            L(2 * i, 2 * j + 1) = B(i, j) * V(i) * s;
            L(2 * i + 1, 2 * j) = -B(i, j) * V(j) * s;
            L(2 * i + 1, 2 * j + 1) = -B(i, j) * c;
        }
        L(2 * i, 2 * i) = tt;
        L(2 * i, 2 * i + 1) = tv;
        L(2 * i + 1, 2 * i) = tv;
        L(2 * i + 1, 2 * i + 1) = -B(i, i);
    }
    return L;
}

/// Rotation vector: 1 in every theta slot, 0 in every V slot.
inline VectorXd rotation_vector(Index n_bus) {
    VectorXd n = VectorXd::Zero(2 * n_bus);
    for (Index i = 0; i < n_bus; ++i) n(2 * i) = 1.0;
    return n;
}

struct CertifyOptions {
    double tol = 1e-8;
};

struct StabilityReport {
    std::vector<std::optional<double>> gammas;  // empty for load buses
    std::vector<Matrix2d> Gammas;               // per-bus blocks (empty when not computable)
    MatrixXd L;
    MatrixXd M_cond;  // diag(Gamma) + L
    double min_eig = std::numeric_limits<double>::quiet_NaN();
    Verdict verdict = Verdict::marginal;
    std::optional<VectorXd> witness;           // eigenvector of min_eig when unstable
    std::optional<std::size_t> violating_bus;  // first bus failing gamma > 0
    std::string message;
};

/// Evaluates the certificate at a power flow. Throws DomainError (with the
/// bus index set) when a generator-type bus is outside its capability region.
inline StabilityReport certify(const PowerFlowSolution& flow, std::span<const DeviceParams> devices,
                               const Network& net, const CertifyOptions& opts = {}) {
    const std::size_t n = net.n_bus;
    if (flow.size() != n || devices.size() != n) throw std::invalid_argument("certify: size mismatch");

    StabilityReport rep;
    rep.gammas.assign(n, std::nullopt);
    rep.L = network_matrix(flow.theta, flow.V, net.B);

    bool gamma_marginal = false;
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Index>(i);
        if (!has_angle(devices[i])) continue;
        const Vector2d x = synchronous_reactances(devices[i]);
        try {
            rep.gammas[i] = gamma({flow.V(k), flow.P(k), flow.Q(k)}, x(0), x(1));
        } catch (DomainError& e) {
            e.set_bus(i);
            throw;
        }
        const double g = *rep.gammas[i];
        if (g < -opts.tol && !rep.violating_bus) rep.violating_bus = i;
        if (std::abs(g) <= opts.tol) gamma_marginal = true;
    }
    if (rep.violating_bus) {
        rep.verdict = Verdict::unstable;
        rep.message = "gamma <= 0 at bus index " + std::to_string(*rep.violating_bus);
        return rep;
    }
    if (gamma_marginal) {
        rep.verdict = Verdict::marginal;
        rep.message = "gamma within tolerance of zero";
        return rep;
    }

    rep.M_cond = rep.L;
    rep.Gammas.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Index>(i);
        if (has_angle(devices[i])) {
            const Vector2d x = synchronous_reactances(devices[i]);
            rep.Gammas[i] = gamma_block({flow.V(k), flow.P(k), flow.Q(k)}, x(0), x(1));
        } else {
            rep.Gammas[i] = load_gamma_block(flow.Q(k), flow.V(k));
        }
        rep.M_cond.block<2, 2>(2 * k, 2 * k) += rep.Gammas[i];
    }

    const auto ext = deflated_min_eigen(rep.M_cond, rotation_vector(static_cast<Index>(n)));
    rep.min_eig = ext.value;
    if (ext.value > opts.tol) {
        rep.verdict = Verdict::stable;
    } else if (ext.value < -opts.tol) {
        rep.verdict = Verdict::unstable;
        rep.witness = ext.vector;
        rep.message = "diag(Gamma) + L has a negative eigenvalue";
    } else {
        rep.verdict = Verdict::marginal;
        rep.message = "smallest eigenvalue within tolerance of zero";
    }
    return rep;
}

}  // namespace gridcert
