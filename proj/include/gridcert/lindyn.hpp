#pragma once

// Linearization oracle. The power system DAE around an equilibrium is
//
//     x' = -R (H_xx x + H_xv v),     0 = H_vx x + H_vv v,
//
// with H the Hessian of the total energy U = U_0 + sum_i U_i over
// (device states, bus voltages) and R the damping/interconnection matrix.
// Eliminating v (Kron reduction) gives A = -R (H / H_vv), whose spectrum
// decides stability independently of the closed-form certificate.

#include "gridcert/certificate.hpp"
#include "gridcert/devices.hpp"
#include "gridcert/linalg.hpp"
#include "gridcert/system.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridcert {

/// Hessian over (concatenated device states) + (theta_1, V_1, ..., theta_N, V_N).
struct FullHessian {
    MatrixXd H;
    Index n_state = 0;

    [[nodiscard]] Index n_alg() const { return H.rows() - n_state; }
    [[nodiscard]] MatrixXd xx() const { return H.topLeftCorner(n_state, n_state); }
    [[nodiscard]] MatrixXd xv() const { return H.topRightCorner(n_state, n_alg()); }
    [[nodiscard]] MatrixXd vv() const { return H.bottomRightCorner(n_alg(), n_alg()); }
};

class DegenerateEquilibrium : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EquilibriumResiduals {
    double dynamics = 0.0;  // max |x'| over all device states
    double balance = 0.0;   // max mismatch between network and device injections
};

inline EquilibriumResiduals equilibrium_residuals(const System& sys, const Equilibrium& eq) {
    EquilibriumResiduals r;
    const auto pq = power_balance(eq.flow.theta, eq.flow.V, sys.net.B);
    const VectorXd v = eq.v();
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        const auto bv = bus_voltage(v, i);
        const VectorXd dx = state_derivative(eq.states[i], bv, eq.setpoints[i], sys.devices[i], sys.omega0);
        if (dx.size() > 0) r.dynamics = std::max(r.dynamics, dx.lpNorm<Eigen::Infinity>());
        const auto w = output_power(eq.states[i], bv, sys.devices[i], eq.setpoints[i]);
        const auto k = static_cast<Index>(i);
        r.balance = std::max({r.balance, std::abs(pq.P(k) - w.P), std::abs(pq.Q(k) - w.Q)});
    }
    return r;
}

/// Assembles device energy Hessians and the network matrix. Throws
/// std::invalid_argument when `eq` is not an equilibrium to `consistency_tol`.
inline FullHessian assemble_full_hessian(const System& sys, const Equilibrium& eq, double consistency_tol = 1e-8) {
    const auto res = equilibrium_residuals(sys, eq);
    if (!(res.dynamics <= consistency_tol) || !(res.balance <= consistency_tol)) {
        throw std::invalid_argument("inconsistent equilibrium: dynamics residual " + std::to_string(res.dynamics) +
                                    ", balance residual " + std::to_string(res.balance));
    }
    const StateLayout lay(sys);
    const Index n_bus = static_cast<Index>(sys.n_bus());
    FullHessian out;
    out.n_state = lay.total;
    out.H = MatrixXd::Zero(lay.total + 2 * n_bus, lay.total + 2 * n_bus);
    out.H.bottomRightCorner(2 * n_bus, 2 * n_bus) = network_matrix(eq.flow.theta, eq.flow.V, sys.net.B);

    const VectorXd v = eq.v();
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        const auto local = energy_derivatives(eq.states[i], bus_voltage(v, i), sys.devices[i], eq.setpoints[i],
                                              sys.omega0)
                               .hessian;
        const Index ns = lay.dim[i];
        std::vector<Index> map;
        for (Index a = 0; a < ns; ++a) map.push_back(lay.offset[i] + a);
        map.push_back(lay.total + 2 * static_cast<Index>(i));
        map.push_back(lay.total + 2 * static_cast<Index>(i) + 1);
        for (Index a = 0; a < local.rows(); ++a)
            for (Index b = 0; b < local.cols(); ++b) out.H(map[a], map[b]) += local(a, b);
    }
    out.H = (0.5 * (out.H + out.H.transpose())).eval();
    return out;
}

/// Damping/interconnection matrix acting on the energy gradient, x' = -R dU/dx.
inline MatrixXd interconnection_matrix(const System& sys) {
    const StateLayout lay(sys);
    MatrixXd R = MatrixXd::Zero(lay.total, lay.total);
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        const Index o = lay.offset[i];
        std::visit(Overloaded{[&](const TwoAxisParams& p) {
                                  R(o, o + 1) = -1.0 / p.M;
                                  R(o + 1, o) = 1.0 / p.M;
                                  R(o + 1, o + 1) = p.D / (sys.omega0 * p.M * p.M);
                                  R(o + 2, o + 2) = (p.X_d - p.X_d_prime) / p.tau_d;
                                  R(o + 3, o + 3) = (p.X_q - p.X_q_prime) / p.tau_q;
                              },
                              [&](const VsgParams& p) {
                                  R(o, o + 1) = -1.0 / p.M;
                                  R(o + 1, o) = 1.0 / p.M;
                                  R(o + 1, o + 1) = p.D / (sys.omega0 * p.M * p.M);
                              },
                              [&](const FdcParams& p) { R(o, o) = sys.omega0 / p.D; },
                              [](const LoadParams&) {}},
                   sys.devices[i]);
    }
    return R;
}

/// Schur complement H / H_vv onto the device states.
inline MatrixXd kron_reduce(const FullHessian& h, double max_condition = 1e12) {
    return schur_complement(h.xx(), h.xv(), h.vv(), max_condition);
}

struct LinearModel {
    FullHessian hessian;
    MatrixXd R;
    MatrixXd reduced;  // H / H_vv
    MatrixXd A;        // -R (H / H_vv)
};

inline LinearModel linearize(const System& sys, const Equilibrium& eq) {
    LinearModel m;
    m.hessian = assemble_full_hessian(sys, eq);
    m.R = interconnection_matrix(sys);
    m.reduced = kron_reduce(m.hessian);
    m.A = -m.R * m.reduced;
    return m;
}

struct EigenOptions {
    double tol_eig = 1e-7;
};

struct EigenAnalysis {
    VectorXcd spectrum;
    Verdict verdict = Verdict::marginal;
    Index structural_zero = -1;  // index into spectrum of the rotational mode
    double max_real = 0.0;       // largest real part excluding the rotational mode
    Index near_zero = 0;         // eigenvalues with |lambda| <= tol_eig
};

/// Decides stability from the spectrum of the Kron-reduced state matrix.
/// Exactly one eigenvalue is expected at zero (the uniform phase shift);
/// any additional one within tol_eig of the origin is reported as a
/// DegenerateEquilibrium.
inline EigenAnalysis analyze_spectrum(const MatrixXd& A, const EigenOptions& opts = {}) {
    if (A.rows() == 0) throw std::invalid_argument("analyze_spectrum: system has no dynamic states");
    Eigen::EigenSolver<MatrixXd> es(A, false);
    if (es.info() != Eigen::Success) throw std::runtime_error("nonsymmetric eigensolver failed");
    EigenAnalysis out;
    out.spectrum = es.eigenvalues();
    const Index n = out.spectrum.size();
    Index best = 0;
    for (Index k = 0; k < n; ++k) {
        if (std::abs(out.spectrum(k)) < std::abs(out.spectrum(best))) best = k;
        if (std::abs(out.spectrum(k)) <= opts.tol_eig) ++out.near_zero;
    }
    out.structural_zero = best;
    if (out.near_zero > 1) {
        throw DegenerateEquilibrium("degenerate equilibrium: " + std::to_string(out.near_zero) +
                                    " eigenvalues within tolerance of zero");
    }
    out.max_real = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < n; ++k) {
        if (k == best) continue;
        out.max_real = std::max(out.max_real, out.spectrum(k).real());
    }
    if (n == 1 || out.max_real < -opts.tol_eig)
        out.verdict = Verdict::stable;
    else if (out.max_real > opts.tol_eig)
        out.verdict = Verdict::unstable;
    else
        out.verdict = Verdict::marginal;
    return out;
}

inline EigenAnalysis eig_verdict(const System& sys, const Equilibrium& eq, const EigenOptions& opts = {}) {
    return analyze_spectrum(linearize(sys, eq).A, opts);
}

// ---------------------------------------------------------------------------
// Angle-voltage Hessian (internal voltages eliminated, frequency dropped)

/// Hessian over (delta of each angle-bearing device in bus order) +
/// (theta_1, V_1, ..., theta_N, V_N), built from the closed-form blocks.
/// Its delta-delta block is diag(gamma) and its Schur complement onto the
/// voltages is diag(Gamma) + L.
inline MatrixXd angle_voltage_hessian(const System& sys, const PowerFlowSolution& flow) {
    const Index n_bus = static_cast<Index>(sys.n_bus());
    std::vector<std::size_t> gens;
    for (std::size_t i = 0; i < sys.n_bus(); ++i)
        if (has_angle(sys.devices[i])) gens.push_back(i);
    const Index ng = static_cast<Index>(gens.size());
    MatrixXd H = MatrixXd::Zero(ng + 2 * n_bus, ng + 2 * n_bus);
    H.bottomRightCorner(2 * n_bus, 2 * n_bus) = network_matrix(flow.theta, flow.V, sys.net.B);
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        const auto k = static_cast<Index>(i);
        const Index vi = ng + 2 * k;
        if (!has_angle(sys.devices[i])) {
            H.block<2, 2>(vi, vi) += load_gamma_block(flow.Q(k), flow.V(k));
            continue;
        }
        const Index di = static_cast<Index>(std::find(gens.begin(), gens.end(), i) - gens.begin());
        const Vector2d x = synchronous_reactances(sys.devices[i]);
        const auto blk = reduced_hessian_blocks({flow.V(k), flow.P(k), flow.Q(k)}, x(0), x(1));
        H(di, di) = blk.dd;
        H.block<1, 2>(di, vi) = blk.dv;
        H.block<2, 1>(vi, di) = blk.dv.transpose();
        H.block<2, 2>(vi, vi) += blk.vv;
    }
    return H;
}

/// Voltage block of angle_voltage_hessian written as
/// diag(Phi_i^T diag(1/X_q, 1/X_d) Phi_i) + diag(Theta_i^T) (-B kron I_2) diag(Theta_i).
/// Defined only when every bus carries a generator-type device.
inline MatrixXd factorized_voltage_hessian(const System& sys, const PowerFlowSolution& flow) {
    const Index n = static_cast<Index>(sys.n_bus());
    MatrixXd phi_part = MatrixXd::Zero(2 * n, 2 * n);
    MatrixXd theta_blocks = MatrixXd::Zero(2 * n, 2 * n);
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        if (!has_angle(sys.devices[i]))
            throw std::invalid_argument("factorized_voltage_hessian: bus index " + std::to_string(i) + " is a load");
        const auto k = static_cast<Index>(i);
        const Vector2d x = synchronous_reactances(sys.devices[i]);
        const double V = flow.V(k);
        const double ph = internal_phase({V, flow.P(k), flow.Q(k)}, x(1));
        Matrix2d Phi;
        Phi << V * std::cos(ph), -std::sin(ph),  //
            V * std::sin(ph), std::cos(ph);
        const double th = flow.theta(k);
        Matrix2d Th;
        Th << -V * std::sin(th), std::cos(th),  //
            V * std::cos(th), std::sin(th);
        phi_part.block<2, 2>(2 * k, 2 * k) = Phi.transpose() * Vector2d(1.0 / x(1), 1.0 / x(0)).asDiagonal() * Phi;
        theta_blocks.block<2, 2>(2 * k, 2 * k) = Th;
    }
    MatrixXd negB = MatrixXd::Zero(2 * n, 2 * n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) negB(2 * i, 2 * j) = negB(2 * i + 1, 2 * j + 1) = -sys.net.B(i, j);
    return phi_part + theta_blocks.transpose() * negB * theta_blocks;
}

}  // namespace gridcert
