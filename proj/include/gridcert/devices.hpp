#pragma once

// Bus-component models: two-axis synchronous generator, virtual synchronous
// generator (VSG), frequency droop control (FDC) and constant-power load.
//
// Every generator-type model is written in terms of an internal voltage
// (e_q, e_d) behind reactances (x_d, x_q): the two-axis model uses its
// states E_q, E_d and transient reactances, VSG/FDC use (V_fd, 0) and the
// synchronous reactances. Bus-side dq voltages are
//     V_q = V cos(delta - theta),  V_d = V sin(delta - theta).
//
// Flat state ordering per kind:
//     two_axis: (delta, omega, E_q, E_d)
//     vsg:      (delta, omega)
//     fdc:      (delta)
//     load:     ()
// Energy gradients and Hessians are taken over (flat state..., theta, V).

#include "gridcert/errors.hpp"
#include "gridcert/linalg.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>

namespace gridcert {

inline constexpr double kDefaultOmega0 = 2.0 * std::numbers::pi * 60.0;

struct TwoAxisParams {
    double M = 0.0;
    double D = 0.0;
    double tau_d = 0.0;
    double tau_q = 0.0;
    double X_d = 0.0;
    double X_q = 0.0;
    double X_d_prime = 0.0;
    double X_q_prime = 0.0;
};

struct VsgParams {
    double M = 0.0;
    double D = 0.0;
    double X_d = 0.0;
    double X_q = 0.0;
};

struct FdcParams {
    double D = 0.0;
    double X_d = 0.0;
    double X_q = 0.0;
};

/// Constant consumed powers; negative values mean consumption.
struct LoadParams {
    double P_ref = 0.0;
    double Q_ref = 0.0;
};

using DeviceParams = std::variant<TwoAxisParams, VsgParams, FdcParams, LoadParams>;

enum class DeviceKind { two_axis, vsg, fdc, load };

struct TwoAxisState {
    double delta = 0.0;
    double omega = 0.0;
    double E_q = 0.0;
    double E_d = 0.0;
};
struct VsgState {
    double delta = 0.0;
    double omega = 0.0;
};
struct FdcState {
    double delta = 0.0;
};
struct LoadState {};

using DeviceState = std::variant<TwoAxisState, VsgState, FdcState, LoadState>;

/// Constant inputs that hold a device at its stationary power flow.
struct Setpoint {
    double P_m = 0.0;
    double V_fd = 0.0;
};

/// (V*, P*, Q*) at one bus.
struct BusOperatingPoint {
    double V = 1.0;
    double P = 0.0;
    double Q = 0.0;
};

struct BusVoltage {
    double theta = 0.0;
    double V = 1.0;
};

struct BusInjection {
    double P = 0.0;
    double Q = 0.0;
};

// ---------------------------------------------------------------------------
// Kind helpers

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

inline DeviceKind kind_of(const DeviceParams& p) { return static_cast<DeviceKind>(p.index()); }

inline const char* kind_name(DeviceKind k) {
    switch (k) {
        case DeviceKind::two_axis: return "two_axis";
        case DeviceKind::vsg: return "vsg";
        case DeviceKind::fdc: return "fdc";
        case DeviceKind::load: return "load";
    }
    return "?";
}

inline Index state_dim(DeviceKind k) {
    switch (k) {
        case DeviceKind::two_axis: return 4;
        case DeviceKind::vsg: return 2;
        case DeviceKind::fdc: return 1;
        case DeviceKind::load: return 0;
    }
    return 0;
}
inline Index state_dim(const DeviceParams& p) { return state_dim(kind_of(p)); }

/// Devices that carry an internal angle and therefore a gamma entry.
inline bool has_angle(const DeviceParams& p) { return kind_of(p) != DeviceKind::load; }

/// Synchronous reactances (X_d, X_q) of a generator-type device.
inline Vector2d synchronous_reactances(const DeviceParams& p) {
    return std::visit(Overloaded{[](const LoadParams&) -> Vector2d {
                                     throw std::invalid_argument("load has no synchronous reactance");
                                 },
                                 [](const auto& g) -> Vector2d { return {g.X_d, g.X_q}; }},
                      p);
}

/// Throws std::invalid_argument when a parameter set is not admissible.
inline void validate(const DeviceParams& params) {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    std::visit(Overloaded{[&](const TwoAxisParams& p) {
                              positive(p.M, "M");
                              positive(p.D, "D");
                              positive(p.tau_d, "tau_d");
                              positive(p.tau_q, "tau_q");
                              positive(p.X_d, "X_d");
                              positive(p.X_q, "X_q");
                              positive(p.X_d_prime, "X_d_prime");
                              positive(p.X_q_prime, "X_q_prime");
                              if (!(p.X_d_prime < p.X_d)) throw std::invalid_argument("X_d_prime must be below X_d");
                              if (!(p.X_q_prime < p.X_q)) throw std::invalid_argument("X_q_prime must be below X_q");
                          },
                          [&](const VsgParams& p) {
                              positive(p.M, "M");
                              positive(p.D, "D");
                              positive(p.X_d, "X_d");
                              positive(p.X_q, "X_q");
                          },
                          [&](const FdcParams& p) {
                              positive(p.D, "D");
                              positive(p.X_d, "X_d");
                              positive(p.X_q, "X_q");
                          },
                          [&](const LoadParams& p) {
                              if (!std::isfinite(p.P_ref) || !std::isfinite(p.Q_ref))
                                  throw std::invalid_argument("load powers must be finite");
                          }},
               params);
}

/// Flat vector of a device state.
inline VectorXd pack(const DeviceState& s) {
    return std::visit(Overloaded{[](const TwoAxisState& x) { return VectorXd{{x.delta, x.omega, x.E_q, x.E_d}}; },
                                 [](const VsgState& x) { return VectorXd{{x.delta, x.omega}}; },
                                 [](const FdcState& x) { return VectorXd{{x.delta}}; },
                                 [](const LoadState&) { return VectorXd(0); }},
                      s);
}

inline DeviceState unpack(DeviceKind kind, std::span<const double> x) {
    if (static_cast<Index>(x.size()) != state_dim(kind)) throw std::invalid_argument("unpack: state dimension mismatch");
    switch (kind) {
        case DeviceKind::two_axis: return TwoAxisState{x[0], x[1], x[2], x[3]};
        case DeviceKind::vsg: return VsgState{x[0], x[1]};
        case DeviceKind::fdc: return FdcState{x[0]};
        case DeviceKind::load: return LoadState{};
    }
    return LoadState{};
}

inline DeviceKind kind_of(const DeviceState& s) { return static_cast<DeviceKind>(s.index()); }

inline void check_state_kind(const DeviceParams& p, const DeviceState& s) {
    if (p.index() != s.index()) throw std::invalid_argument("device state does not match device kind");
}

/// Internal angle delta of a device state (NaN for loads).
inline double angle_of(const DeviceState& s) {
    return std::visit(Overloaded{[](const LoadState&) { return std::nan(""); }, [](const auto& x) { return x.delta; }},
                      s);
}

// ---------------------------------------------------------------------------
// Stationary quantities

/// Stationary phase difference delta* - theta*. Throws DomainError when
/// Q + V^2/X_q <= 0 (operating point outside the generator capability).
inline double internal_phase(const BusOperatingPoint& rho, double X_q) {
    if (!(rho.V > 0.0)) throw DomainError("bus voltage must be positive");
    const double den = rho.Q + rho.V * rho.V / X_q;
    if (!(den > 0.0)) throw DomainError("operating point outside generator capability (Q + V^2/X_q <= 0)");
    return std::atan(rho.P / den);
}

inline Setpoint stationary_setpoint(const BusOperatingPoint& rho, double X_d, double X_q) {
    const double phi = internal_phase(rho, X_q);
    return {rho.P, (X_d * rho.P / rho.V) * std::sin(phi) + (X_d * rho.Q / rho.V + rho.V) * std::cos(phi)};
}

/// Setpoint for any device kind; loads carry no generator setpoint.
inline Setpoint stationary_setpoint(const BusOperatingPoint& rho, const DeviceParams& params) {
    if (!has_angle(params)) return {};
    const Vector2d x = synchronous_reactances(params);
    return stationary_setpoint(rho, x(0), x(1));
}

inline DeviceState stationary_state(double theta_star, const BusOperatingPoint& rho, const DeviceParams& params) {
    return std::visit(
        Overloaded{[&](const TwoAxisParams& p) -> DeviceState {
                       const double phi = internal_phase(rho, p.X_q);
                       const Setpoint u = stationary_setpoint(rho, p.X_d, p.X_q);
                       const double vq = rho.V * std::cos(phi);
                       const double vd = rho.V * std::sin(phi);
                       TwoAxisState x;
                       x.delta = theta_star + phi;
                       x.omega = 0.0;
                       x.E_d = (1.0 - p.X_q_prime / p.X_q) * vd;
                       x.E_q = (p.X_d_prime * u.V_fd + (p.X_d - p.X_d_prime) * vq) / p.X_d;
                       return x;
                   },
                   [&](const VsgParams& p) -> DeviceState {
                       return VsgState{theta_star + internal_phase(rho, p.X_q), 0.0};
                   },
                   [&](const FdcParams& p) -> DeviceState { return FdcState{theta_star + internal_phase(rho, p.X_q)}; },
                   [](const LoadParams&) -> DeviceState { return LoadState{}; }},
        params);
}

// ---------------------------------------------------------------------------
// Grid connection

namespace detail {

struct Emf {
    double e_q;
    double e_d;
    double x_d;
    double x_q;
};

inline Emf emf_of(const DeviceParams& params, const DeviceState& state, const Setpoint& u) {
    return std::visit(Overloaded{[&](const TwoAxisParams& p) {
                                     const auto& x = std::get<TwoAxisState>(state);
                                     return Emf{x.E_q, x.E_d, p.X_d_prime, p.X_q_prime};
                                 },
                                 [&](const VsgParams& p) { return Emf{u.V_fd, 0.0, p.X_d, p.X_q}; },
                                 [&](const FdcParams& p) { return Emf{u.V_fd, 0.0, p.X_d, p.X_q}; },
                                 [](const LoadParams&) { return Emf{0.0, 0.0, 1.0, 1.0}; }},
                      params);
}

struct Dq {
    double vd;
    double vq;
};

inline Dq dq_voltage(double delta, const BusVoltage& v) {
    return {v.V * std::sin(delta - v.theta), v.V * std::cos(delta - v.theta)};
}

inline BusInjection emf_power(const Emf& e, const Dq& dq) {
    const double k = 1.0 / e.x_q - 1.0 / e.x_d;
    return {e.e_q * dq.vd / e.x_d - e.e_d * dq.vq / e.x_q + k * dq.vd * dq.vq,
            e.e_q * dq.vq / e.x_d + e.e_d * dq.vd / e.x_q - dq.vd * dq.vd / e.x_q - dq.vq * dq.vq / e.x_d};
}

}  // namespace detail

/// Power (P, Q) supplied by the device to its bus. The VSG/FDC internal
/// voltage is V_fd of `u`; loads return their constant references.
inline BusInjection output_power(const DeviceState& state, const BusVoltage& v, const DeviceParams& params,
                                 const Setpoint& u) {
    check_state_kind(params, state);
    if (const auto* load = std::get_if<LoadParams>(&params)) return {load->P_ref, load->Q_ref};
    const auto e = detail::emf_of(params, state, u);
    return detail::emf_power(e, detail::dq_voltage(angle_of(state), v));
}

/// d(P, Q)/d(theta, V) of output_power, rows (P, Q), columns (theta, V).
inline Matrix2d output_power_jacobian(const DeviceState& state, const BusVoltage& v, const DeviceParams& params,
                                      const Setpoint& u) {
    check_state_kind(params, state);
    if (!has_angle(params)) return Matrix2d::Zero();
    const auto e = detail::emf_of(params, state, u);
    const auto dq = detail::dq_voltage(angle_of(state), v);
    const double k = 1.0 / e.x_q - 1.0 / e.x_d;
    Matrix2d d_pq_d_dq;  // columns (vd, vq)
    d_pq_d_dq << e.e_q / e.x_d + k * dq.vq, -e.e_d / e.x_q + k * dq.vd,  //
        e.e_d / e.x_q - 2.0 * dq.vd / e.x_q, e.e_q / e.x_d - 2.0 * dq.vq / e.x_d;
    Matrix2d d_dq_d_v;  // rows (vd, vq), columns (theta, V)
    d_dq_d_v << -dq.vq, dq.vd / v.V,  //
        dq.vd, dq.vq / v.V;
    return d_pq_d_dq * d_dq_d_v;
}

/// Right-hand side of the device state equation, in flat state order.
inline VectorXd state_derivative(const DeviceState& state, const BusVoltage& v, const Setpoint& u,
                                 const DeviceParams& params, double omega0 = kDefaultOmega0) {
    check_state_kind(params, state);
    const BusInjection w = output_power(state, v, params, u);
    return std::visit(
        Overloaded{[&](const TwoAxisParams& p) {
                       const auto& x = std::get<TwoAxisState>(state);
                       const auto dq = detail::dq_voltage(x.delta, v);
                       const double i_d = (x.E_q - dq.vq) / p.X_d_prime;
                       const double i_q = (dq.vd - x.E_d) / p.X_q_prime;
                       return VectorXd{{omega0 * x.omega, (-p.D * x.omega - w.P + u.P_m) / p.M,
                                        (-x.E_q - (p.X_d - p.X_d_prime) * i_d + u.V_fd) / p.tau_d,
                                        (-x.E_d + (p.X_q - p.X_q_prime) * i_q) / p.tau_q}};
                   },
                   [&](const VsgParams& p) {
                       const auto& x = std::get<VsgState>(state);
                       return VectorXd{{omega0 * x.omega, (-p.D * x.omega - w.P + u.P_m) / p.M}};
                   },
                   [&](const FdcParams& p) { return VectorXd{{omega0 * (u.P_m - w.P) / p.D}}; },
                   [](const LoadParams&) { return VectorXd(0); }},
        params);
}

// ---------------------------------------------------------------------------
// Energy functions

namespace detail {

/// First and second derivatives of (vd, vq) with respect to (delta, theta, V).
struct DqDerivatives {
    Eigen::Matrix<double, 2, 3> J;  // rows vd, vq
    Eigen::Matrix3d H_vd;
    Eigen::Matrix3d H_vq;
};

inline DqDerivatives dq_derivatives(const Dq& dq, double V) {
    DqDerivatives d;
    d.J << dq.vq, -dq.vq, dq.vd / V,  //
        -dq.vd, dq.vd, dq.vq / V;
    d.H_vd << -dq.vd, dq.vd, dq.vq / V,  //
        dq.vd, -dq.vd, -dq.vq / V,       //
        dq.vq / V, -dq.vq / V, 0.0;
    d.H_vq << -dq.vq, dq.vq, -dq.vd / V,  //
        dq.vq, -dq.vq, dq.vd / V,         //
        -dq.vd / V, dq.vd / V, 0.0;
    return d;
}

}  // namespace detail

/// Energy U_i of a device as a function of its state and bus voltage.
inline double energy(const DeviceState& state, const BusVoltage& v, const DeviceParams& params, const Setpoint& u,
                     double omega0 = kDefaultOmega0) {
    check_state_kind(params, state);
    return std::visit(
        Overloaded{[&](const TwoAxisParams& p) {
                       const auto& x = std::get<TwoAxisState>(state);
                       const auto dq = detail::dq_voltage(x.delta, v);
                       return 0.5 * omega0 * p.M * x.omega * x.omega + x.E_q * x.E_q / (2.0 * (p.X_d - p.X_d_prime)) +
                              x.E_d * x.E_d / (2.0 * (p.X_q - p.X_q_prime)) +
                              (dq.vd - x.E_d) * (dq.vd - x.E_d) / (2.0 * p.X_q_prime) +
                              (x.E_q - dq.vq) * (x.E_q - dq.vq) / (2.0 * p.X_d_prime);
                   },
                   [&](const VsgParams& p) {
                       const auto& x = std::get<VsgState>(state);
                       const auto dq = detail::dq_voltage(x.delta, v);
                       return 0.5 * omega0 * p.M * x.omega * x.omega + dq.vd * dq.vd / (2.0 * p.X_q) +
                              (u.V_fd - dq.vq) * (u.V_fd - dq.vq) / (2.0 * p.X_d);
                   },
                   [&](const FdcParams& p) {
                       const auto dq = detail::dq_voltage(std::get<FdcState>(state).delta, v);
                       return dq.vd * dq.vd / (2.0 * p.X_q) + (u.V_fd - dq.vq) * (u.V_fd - dq.vq) / (2.0 * p.X_d);
                   },
                   [&](const LoadParams& p) { return -p.P_ref * v.theta - p.Q_ref * std::log(v.V); }},
        params);
}

struct EnergyDerivatives {
    VectorXd gradient;  // over (flat state..., theta, V)
    MatrixXd hessian;
};

/// Closed-form gradient and Hessian of `energy`.
inline EnergyDerivatives energy_derivatives(const DeviceState& state, const BusVoltage& v, const DeviceParams& params,
                                            const Setpoint& u, double omega0 = kDefaultOmega0) {
    check_state_kind(params, state);
    const Index ns = state_dim(params);
    EnergyDerivatives out{VectorXd::Zero(ns + 2), MatrixXd::Zero(ns + 2, ns + 2)};

    if (const auto* load = std::get_if<LoadParams>(&params)) {
        out.gradient << -load->P_ref, -load->Q_ref / v.V;
        out.hessian(1, 1) = load->Q_ref / (v.V * v.V);
        return out;
    }

    const auto e = detail::emf_of(params, state, u);
    const double delta = angle_of(state);
    const auto dq = detail::dq_voltage(delta, v);
    const auto d = detail::dq_derivatives(dq, v.V);
    const double f_vd = (dq.vd - e.e_d) / e.x_q;
    const double f_vq = -(e.e_q - dq.vq) / e.x_d;

    // Indices of (delta, theta, V) in the local variable vector.
    const Index i_theta = ns;
    const std::array<Index, 3> y{0, i_theta, i_theta + 1};

    const Eigen::RowVector3d grad_y = f_vd * d.J.row(0) + f_vq * d.J.row(1);
    Eigen::Matrix3d hess_y = d.J.transpose() * Vector2d(1.0 / e.x_q, 1.0 / e.x_d).asDiagonal() * d.J +
                             f_vd * d.H_vd + f_vq * d.H_vq;
    hess_y = (0.5 * (hess_y + hess_y.transpose())).eval();
    for (int a = 0; a < 3; ++a) {
        out.gradient(y[a]) = grad_y(a);
        for (int b = 0; b < 3; ++b) out.hessian(y[a], y[b]) = hess_y(a, b);
    }

    std::visit(Overloaded{[&](const TwoAxisParams& p) {
                              const auto& x = std::get<TwoAxisState>(state);
                              out.gradient(1) = omega0 * p.M * x.omega;
                              out.hessian(1, 1) = omega0 * p.M;
                              // E_q at 2, E_d at 3
                              out.gradient(2) = x.E_q / (p.X_d - p.X_d_prime) + (x.E_q - dq.vq) / p.X_d_prime;
                              out.gradient(3) = x.E_d / (p.X_q - p.X_q_prime) - (dq.vd - x.E_d) / p.X_q_prime;
                              out.hessian(2, 2) = 1.0 / (p.X_d - p.X_d_prime) + 1.0 / p.X_d_prime;
                              out.hessian(3, 3) = 1.0 / (p.X_q - p.X_q_prime) + 1.0 / p.X_q_prime;
                              for (int a = 0; a < 3; ++a) {
                                  const double h_eq = -d.J(1, a) / p.X_d_prime;
                                  const double h_ed = -d.J(0, a) / p.X_q_prime;
                                  out.hessian(2, y[a]) = out.hessian(y[a], 2) = h_eq;
                                  out.hessian(3, y[a]) = out.hessian(y[a], 3) = h_ed;
                              }
                          },
                          [&](const VsgParams& p) {
                              const auto& x = std::get<VsgState>(state);
                              out.gradient(1) = omega0 * p.M * x.omega;
                              out.hessian(1, 1) = omega0 * p.M;
                          },
                          [](const auto&) {}},
               params);
    return out;
}

// ---------------------------------------------------------------------------
// Stationary Hessian blocks of the angle-voltage energy

struct ReducedHessianBlocks {
    double dd = 0.0;     // delta-delta
    RowVector2d dv;      // delta-(theta, V)
    Matrix2d vv;         // (theta, V)-(theta, V)
};

/// Closed-form Hessian of the generator energy over (delta, theta, V) at
/// the stationary state belonging to `rho`, after the internal voltages
/// (two-axis) are eliminated and the frequency is dropped.
inline ReducedHessianBlocks reduced_hessian_blocks(const BusOperatingPoint& rho, double X_d, double X_q) {
    const double phi = internal_phase(rho, X_q);
    const double vq = rho.V * std::cos(phi);
    const double vd = rho.V * std::sin(phi);
    const double dd = vq * vq / X_q + vd * vd / X_d + rho.Q;
    const double cross = (rho.P + (1.0 / X_q - 1.0 / X_d) * vd * vq) / rho.V;
    ReducedHessianBlocks h;
    h.dd = dd;
    h.dv << -dd, cross;
    h.vv << dd, -cross,  //
        -cross, (vd * vd / X_q + vq * vq / X_d) / (rho.V * rho.V);
    return h;
}

}  // namespace gridcert
