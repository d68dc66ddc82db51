#pragma once

// A power system: network plus one device per bus, and the equilibrium
// (device setpoints and stationary states) attached to a power flow.

#include "gridcert/devices.hpp"
#include "gridcert/errors.hpp"
#include "gridcert/netmodel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridcert {

struct System {
    Network net;
    std::vector<DeviceParams> devices;  // one per bus
    double omega0 = kDefaultOmega0;

    [[nodiscard]] std::size_t n_bus() const { return net.n_bus; }
};

inline void validate(const System& sys) {
    if (sys.devices.size() != sys.net.n_bus) throw std::invalid_argument("system: one device per bus required");
    if (!(sys.omega0 > 0.0)) throw std::invalid_argument("system: omega0 must be positive");
    for (const auto& d : sys.devices) validate(d);
}

/// Offsets of each device's states inside the concatenated state vector.
struct StateLayout {
    std::vector<Index> offset;
    std::vector<Index> dim;
    Index total = 0;

    explicit StateLayout(const System& sys) {
        for (const auto& d : sys.devices) {
            offset.push_back(total);
            dim.push_back(state_dim(d));
            total += dim.back();
        }
    }
};

inline BusVoltage bus_voltage(const VectorXd& v, std::size_t i) {
    const auto k = static_cast<Index>(i);
    return {v(2 * k), v(2 * k + 1)};
}

/// Interleaved (theta_1, V_1, theta_2, V_2, ...) vector of a power flow.
inline VectorXd interleave(const VectorXd& theta, const VectorXd& V) {
    VectorXd v(2 * theta.size());
    for (Index i = 0; i < theta.size(); ++i) {
        v(2 * i) = theta(i);
        v(2 * i + 1) = V(i);
    }
    return v;
}

inline VectorXd pack_states(const System& sys, const std::vector<DeviceState>& states) {
    const StateLayout lay(sys);
    VectorXd x(lay.total);
    for (std::size_t i = 0; i < states.size(); ++i) {
        check_state_kind(sys.devices[i], states[i]);
        x.segment(lay.offset[i], lay.dim[i]) = pack(states[i]);
    }
    return x;
}

inline std::vector<DeviceState> unpack_states(const System& sys, const VectorXd& x) {
    const StateLayout lay(sys);
    if (x.size() != lay.total) throw std::invalid_argument("unpack_states: size mismatch");
    std::vector<DeviceState> out;
    out.reserve(sys.devices.size());
    for (std::size_t i = 0; i < sys.devices.size(); ++i) {
        out.push_back(unpack(kind_of(sys.devices[i]),
                             std::span<const double>(x.data() + lay.offset[i], static_cast<std::size_t>(lay.dim[i]))));
    }
    return out;
}

struct Equilibrium {
    PowerFlowSolution flow;
    std::vector<Setpoint> setpoints;
    std::vector<DeviceState> states;

    [[nodiscard]] VectorXd v() const { return interleave(flow.theta, flow.V); }
};

/// Tolerance on |P_ref - P*|, |Q_ref - Q*| for load buses.
inline constexpr double kLoadMatchTolerance = 1e-8;

/// Setpoints and stationary states realizing `flow`. Throws DomainError
/// with the offending bus when a generator bus is outside its capability
/// region, std::invalid_argument when a load's references disagree with the flow.
inline Equilibrium make_equilibrium(const System& sys, const PowerFlowSolution& flow) {
    validate(sys);
    if (flow.size() != sys.n_bus()) throw std::invalid_argument("make_equilibrium: size mismatch");
    Equilibrium eq;
    eq.flow = flow;
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        const auto k = static_cast<Index>(i);
        const BusOperatingPoint rho{flow.V(k), flow.P(k), flow.Q(k)};
        if (const auto* load = std::get_if<LoadParams>(&sys.devices[i])) {
            if (std::abs(load->P_ref - rho.P) > kLoadMatchTolerance ||
                std::abs(load->Q_ref - rho.Q) > kLoadMatchTolerance) {
                throw std::invalid_argument("load at bus index " + std::to_string(i) +
                                            " does not match the power flow injection");
            }
        }
        try {
            eq.setpoints.push_back(stationary_setpoint(rho, sys.devices[i]));
            eq.states.push_back(stationary_state(flow.theta(k), rho, sys.devices[i]));
        } catch (DomainError& e) {
            e.set_bus(i);
            throw;
        }
    }
    return eq;
}

/// Loads take their references from the power flow at their bus.
inline void sync_loads_to_flow(System& sys, const PowerFlowSolution& flow) {
    for (std::size_t i = 0; i < sys.n_bus(); ++i) {
        if (auto* load = std::get_if<LoadParams>(&sys.devices[i])) {
            load->P_ref = flow.P(static_cast<Index>(i));
            load->Q_ref = flow.Q(static_cast<Index>(i));
        }
    }
}

}  // namespace gridcert
