#pragma once

// Time-domain simulation of the nonlinear power system DAE
//
//     x' = f(x, v),    0 = g(x, v)   (network injections = device outputs)
//
// with fixed-step classical RK4 on x and a Newton solve for v at every stage.

#include "gridcert/certificate.hpp"
#include "gridcert/csv.hpp"
#include "gridcert/devices.hpp"
#include "gridcert/errors.hpp"
#include "gridcert/linalg.hpp"
#include "gridcert/system.hpp"

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace gridcert {

struct SystemState {
    VectorXd x;  // concatenated device states
    VectorXd v;  // interleaved (theta_i, V_i)
    double t = 0.0;
};

struct TrajectorySample {
    SystemState state;
    double W = 0.0;  // Bregman storage relative to the equilibrium
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    bool truncated = false;
    std::string diagnostic;
};

/// Network injection minus device output at every bus, interleaved (P, Q).
inline VectorXd algebraic_residual(const System& sys, const std::vector<Setpoint>& setpoints, const VectorXd& x,
                                   const VectorXd& v) {
    const Index n = static_cast<Index>(sys.n_bus());
    VectorXd theta(n), V(n);
    for (Index i = 0; i < n; ++i) {
        theta(i) = v(2 * i);
        V(i) = v(2 * i + 1);
    }
    const auto pq = power_balance(theta, V, sys.net.B);
    const auto states = unpack_states(sys, x);
    VectorXd g(2 * n);
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        const auto k = static_cast<Index>(i);
        const auto w = output_power(states[i], bus_voltage(v, i), sys.devices[i], setpoints[i]);
        g(2 * k) = pq.P(k) - w.P;
        g(2 * k + 1) = pq.Q(k) - w.Q;
    }
    return g;
}

struct AlgebraicOptions {
    double tolerance = 1e-10;
    int max_iterations = 25;
};

/// Newton solve of 0 = g(x, v) for the bus voltages, starting at `v_guess`.
/// Throws SolverError when the iteration diverges or stalls.
inline VectorXd algebraic_solve(const System& sys, const std::vector<Setpoint>& setpoints, const VectorXd& x,
                                const VectorXd& v_guess, const AlgebraicOptions& opts = {}) {
    const Index n = static_cast<Index>(sys.n_bus());
    VectorXd v = v_guess;
    VectorXd g = algebraic_residual(sys, setpoints, x, v);
    double res = g.lpNorm<Eigen::Infinity>();
    int it = 0;
    const auto states = unpack_states(sys, x);
    while (res > opts.tolerance) {
        if (it >= opts.max_iterations)
            throw SolverError("algebraic solve did not converge (residual " + std::to_string(res) + ")", res, it);
        VectorXd theta(n), V(n);
        for (Index i = 0; i < n; ++i) {
            theta(i) = v(2 * i);
            V(i) = v(2 * i + 1);
        }
        MatrixXd J = power_balance_jacobian(theta, V, sys.net.B);
        for (std::size_t i = 0; i < sys.n_bus(); ++i) {
            const auto k = static_cast<Index>(i);
            J.block<2, 2>(2 * k, 2 * k) -=
                output_power_jacobian(states[i], bus_voltage(v, i), sys.devices[i], setpoints[i]);
        }
        Eigen::FullPivLU<MatrixXd> lu(J);
        if (!lu.isInvertible()) throw SolverError("algebraic Jacobian is singular", res, it);
        v -= lu.solve(g);
        ++it;
        g = algebraic_residual(sys, setpoints, x, v);
        res = g.lpNorm<Eigen::Infinity>();
        bool bad = !std::isfinite(res);
        for (Index i = 0; i < n && !bad; ++i) bad = !(v(2 * i + 1) > 0.0);
        if (bad) throw SolverError("algebraic solve diverged", res, it);
    }
    return v;
}

/// Concatenated device state derivatives.
inline VectorXd dynamics(const System& sys, const std::vector<Setpoint>& setpoints, const VectorXd& x,
                         const VectorXd& v) {
    const StateLayout lay(sys);
    const auto states = unpack_states(sys, x);
    VectorXd dx(lay.total);
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        if (lay.dim[i] == 0) continue;
        dx.segment(lay.offset[i], lay.dim[i]) =
            state_derivative(states[i], bus_voltage(v, i), setpoints[i], sys.devices[i], sys.omega0);
    }
    return dx;
}

/// U_0(v) = -1/2 sum_ij B_ij V_i V_j cos(theta_i - theta_j).
inline double network_energy(const VectorXd& v, const MatrixXd& B) {
    const Index n = B.rows();
    double u = 0.0;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            if (B(i, j) == 0.0) continue;
            u -= 0.5 * B(i, j) * v(2 * i + 1) * v(2 * j + 1) * std::cos(v(2 * i) - v(2 * j));
        }
    return u;
}

/// Total energy U(x, v) = U_0(v) + sum_i U_i(x_i, v_i).
inline double total_energy(const System& sys, const std::vector<Setpoint>& setpoints, const VectorXd& x,
                           const VectorXd& v) {
    const auto states = unpack_states(sys, x);
    double u = network_energy(v, sys.net.B);
    for (std::size_t i = 0; i < sys.n_bus(); ++i)
        u += energy(states[i], bus_voltage(v, i), sys.devices[i], setpoints[i], sys.omega0);
    return u;
}

/// Bregman distance of the total energy from the equilibrium:
/// W(z) = U(z) - U(z*) - grad U(z*) . (z - z*), with z = (x, v).
class BregmanStorage {
public:
    BregmanStorage(const System& sys, const Equilibrium& eq)
        : sys_(sys), setpoints_(eq.setpoints), x_star_(pack_states(sys, eq.states)), v_star_(eq.v()) {
        u_star_ = total_energy(sys, setpoints_, x_star_, v_star_);
        const StateLayout lay(sys);
        const Index n = static_cast<Index>(sys.n_bus());
        grad_x_ = VectorXd::Zero(lay.total);
        grad_v_ = VectorXd::Zero(2 * n);
        const auto pq = power_balance(eq.flow.theta, eq.flow.V, sys.net.B);
        for (Index i = 0; i < n; ++i) {
            grad_v_(2 * i) = pq.P(i);
            grad_v_(2 * i + 1) = pq.Q(i) / eq.flow.V(i);
        }
        for (std::size_t i = 0; i < sys.n_bus(); ++i) {
            const auto d = energy_derivatives(eq.states[i], bus_voltage(v_star_, i), sys.devices[i], setpoints_[i],
                                              sys.omega0);
            const Index ns = lay.dim[i];
            grad_x_.segment(lay.offset[i], ns) = d.gradient.head(ns);
            grad_v_.segment(2 * static_cast<Index>(i), 2) += d.gradient.tail(2);
        }
    }

    double operator()(const VectorXd& x, const VectorXd& v) const {
        return total_energy(sys_, setpoints_, x, v) - u_star_ - grad_x_.dot(x - x_star_) - grad_v_.dot(v - v_star_);
    }

private:
    System sys_;
    std::vector<Setpoint> setpoints_;
    VectorXd x_star_;
    VectorXd v_star_;
    double u_star_ = 0.0;
    VectorXd grad_x_;
    VectorXd grad_v_;
};

inline double storage_value(const System& sys, const Equilibrium& eq, const VectorXd& x, const VectorXd& v) {
    return BregmanStorage(sys, eq)(x, v);
}

/// Analytic storage decay rate
/// -sum D delta'^2 / omega0 - sum (tau_d E_q'^2/(X_d - X_d') + tau_q E_d'^2/(X_q - X_q')).
inline double dissipation_rate(const System& sys, const std::vector<Setpoint>& setpoints, const VectorXd& x,
                               const VectorXd& v) {
    const StateLayout lay(sys);
    const VectorXd dx = dynamics(sys, setpoints, x, v);
    double rate = 0.0;
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        const Index o = lay.offset[i];
        std::visit(Overloaded{[&](const TwoAxisParams& p) {
                                  rate -= p.D * dx(o) * dx(o) / sys.omega0;
                                  rate -= p.tau_d * dx(o + 2) * dx(o + 2) / (p.X_d - p.X_d_prime);
                                  rate -= p.tau_q * dx(o + 3) * dx(o + 3) / (p.X_q - p.X_q_prime);
                              },
                              [&](const VsgParams& p) { rate -= p.D * dx(o) * dx(o) / sys.omega0; },
                              [&](const FdcParams& p) { rate -= p.D * dx(o) * dx(o) / sys.omega0; },
                              [](const LoadParams&) {}},
                   sys.devices[i]);
    }
    return rate;
}

/// Distance of x from the equilibrium set: device angles are compared after
/// removing their mean shift (the uniform phase rotation), other states directly.
inline double phase_aligned_deviation(const System& sys, const VectorXd& x, const VectorXd& x_star) {
    const StateLayout lay(sys);
    VectorXd d = x - x_star;
    double shift = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        if (lay.dim[i] == 0) continue;
        shift += d(lay.offset[i]);
        ++count;
    }
    if (count > 0) shift /= count;
    for (std::size_t i = 0; i < sys.n_bus(); ++i)
        if (lay.dim[i] > 0) d(lay.offset[i]) -= shift;
    return d.norm();
}

struct SimulationOptions {
    double dt = 1e-3;
    double t_end = 10.0;
    int record_every = 1;  // record one sample per this many steps
};

/// Fixed-step RK4 on the device states, with the bus voltages re-solved at
/// every stage. An algebraic failure truncates the trajectory.
inline Trajectory simulate(const System& sys, const Equilibrium& eq, const VectorXd& x0,
                           const SimulationOptions& opts = {}) {
    if (!(opts.dt > 0.0) || !(opts.t_end >= 0.0) || opts.record_every < 1)
        throw std::invalid_argument("simulate: dt and t_end must be positive");
    const auto& u = eq.setpoints;
    const BregmanStorage storage(sys, eq);
    Trajectory traj;

    VectorXd x = x0;
    VectorXd v;
    try {
        v = algebraic_solve(sys, u, x, eq.v());
    } catch (const SolverError& e) {
        traj.truncated = true;
        traj.diagnostic = std::string("initial algebraic solve failed: ") + e.what();
        return traj;
    }
    traj.samples.push_back({{x, v, 0.0}, storage(x, v)});

    const auto steps = static_cast<long>(std::llround(opts.t_end / opts.dt));
    const double h = opts.dt;
    for (long s = 1; s <= steps; ++s) {
        try {
            const VectorXd k1 = dynamics(sys, u, x, v);
            VectorXd xs = x + 0.5 * h * k1;
            VectorXd vs = algebraic_solve(sys, u, xs, v);
            const VectorXd k2 = dynamics(sys, u, xs, vs);
            xs = x + 0.5 * h * k2;
            vs = algebraic_solve(sys, u, xs, vs);
            const VectorXd k3 = dynamics(sys, u, xs, vs);
            xs = x + h * k3;
            vs = algebraic_solve(sys, u, xs, vs);
            const VectorXd k4 = dynamics(sys, u, xs, vs);
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            v = algebraic_solve(sys, u, x, vs);
        } catch (const SolverError& e) {
            traj.truncated = true;
            traj.diagnostic = "algebraic divergence at t=" + std::to_string(static_cast<double>(s) * h) + ": " +
                              e.what();
            break;
        }
        if (s % opts.record_every == 0 || s == steps)
            traj.samples.push_back({{x, v, static_cast<double>(s) * h}, storage(x, v)});
    }
    return traj;
}

/// One row per (sample, bus):
/// t,bus,theta,V,P,Q,delta,omega,E_q,E_d,W  (absent states left empty).
/// `bus_ids` labels the bus column; defaults to 1-based indices.
inline void write_trajectory_csv(std::ostream& os, const System& sys, const std::vector<Setpoint>& setpoints,
                                 const Trajectory& traj, const std::vector<int>& bus_ids = {}) {
    using detail::fmt12;
    os << "t,bus,theta,V,P,Q,delta,omega,E_q,E_d,W\n";
    for (const auto& s : traj.samples) {
        const auto states = unpack_states(sys, s.state.x);
        for (std::size_t i = 0; i < sys.n_bus(); ++i) {
            const auto bv = bus_voltage(s.state.v, i);
            const auto w = output_power(states[i], bv, sys.devices[i], setpoints[i]);
            const int id = bus_ids.empty() ? static_cast<int>(i) + 1 : bus_ids[i];
            os << fmt12(s.state.t) << ',' << id << ',' << fmt12(bv.theta) << ',' << fmt12(bv.V) << ',' << fmt12(w.P)
               << ',' << fmt12(w.Q) << ',';
            std::visit(Overloaded{[&](const TwoAxisState& x) {
                                      os << fmt12(x.delta) << ',' << fmt12(x.omega) << ',' << fmt12(x.E_q) << ','
                                         << fmt12(x.E_d);
                                  },
                                  [&](const VsgState& x) { os << fmt12(x.delta) << ',' << fmt12(x.omega) << ",,"; },
                                  [&](const FdcState& x) { os << fmt12(x.delta) << ",,,"; },
                                  [&](const LoadState&) { os << ",,,"; }},
                       states[i]);
            os << ',' << fmt12(s.W) << '\n';
        }
    }
}

}  // namespace gridcert
