#pragma once

// Lossless transmission network: susceptance matrix, bus power balance and a
// Newton power-flow solver over Slack/PV/PQ bus specifications.

#include "gridcert/errors.hpp"
#include "gridcert/linalg.hpp"

#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace gridcert {

struct Line {
    std::size_t from = 0;
    std::size_t to = 0;
    double b = 0.0;  // susceptance, per-unit, > 0
};

struct Network {
    std::size_t n_bus = 0;
    std::vector<Line> lines;
    MatrixXd B;  // B_ij = b_ij off the diagonal, rows sum to zero
};

/// Stationary power flow (theta*, V*, P*, Q*). Angles are kept unwrapped.
struct PowerFlowSolution {
    VectorXd theta;
    VectorXd V;
    VectorXd P;
    VectorXd Q;
    int iterations = 0;
    double residual = 0.0;  // infinity norm of the specified-injection mismatch

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(V.size()); }
};

struct SlackBus {
    double theta = 0.0;
    double V = 1.0;
};
struct PvBus {
    double P = 0.0;
    double V = 1.0;
};
struct PqBus {
    double P = 0.0;
    double Q = 0.0;
};
using BusSpec = std::variant<SlackBus, PvBus, PqBus>;

namespace detail {

inline bool is_connected(std::size_t n_bus, std::span<const Line> lines) {
    if (n_bus <= 1) return true;
    std::vector<std::size_t> parent(n_bus);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    std::size_t components = n_bus;
    for (const auto& l : lines) {
        const auto ra = find(l.from);
        const auto rb = find(l.to);
        if (ra != rb) {
            parent[ra] = rb;
            --components;
        }
    }
    return components == 1;
}

}  // namespace detail

/// Susceptance matrix of a lossless network. Parallel lines between the
/// same pair of buses add up. Throws std::invalid_argument on bad indices,
/// non-positive susceptances, self loops or a disconnected line graph.
inline MatrixXd build_susceptance(std::size_t n_bus, std::span<const Line> lines) {
    if (n_bus == 0) throw std::invalid_argument("network needs at least one bus");
    MatrixXd B = MatrixXd::Zero(static_cast<Index>(n_bus), static_cast<Index>(n_bus));
    for (const auto& l : lines) {
        if (l.from >= n_bus || l.to >= n_bus)
            throw std::invalid_argument("line references bus outside [0, " + std::to_string(n_bus) + ")");
        if (l.from == l.to) throw std::invalid_argument("line connects a bus to itself");
        if (!(l.b > 0.0) || !std::isfinite(l.b)) throw std::invalid_argument("line susceptance must be positive");
        const auto i = static_cast<Index>(l.from);
        const auto j = static_cast<Index>(l.to);
        B(i, j) += l.b;
        B(j, i) += l.b;
        B(i, i) -= l.b;
        B(j, j) -= l.b;
    }
    if (!detail::is_connected(n_bus, lines)) throw std::invalid_argument("network graph is disconnected");
    return B;
}

inline Network make_network(std::size_t n_bus, std::vector<Line> lines) {
    Network net;
    net.B = build_susceptance(n_bus, lines);
    net.n_bus = n_bus;
    net.lines = std::move(lines);
    return net;
}

struct BusPowers {
    VectorXd P;
    VectorXd Q;
};

/// Active and reactive power injected from each bus into the network.
inline BusPowers power_balance(const VectorXd& theta, const VectorXd& V, const MatrixXd& B) {
    const Index n = B.rows();
    if (theta.size() != n || V.size() != n) throw std::invalid_argument("power_balance: size mismatch");
    BusPowers out{VectorXd::Zero(n), VectorXd::Zero(n)};
    for (Index i = 0; i < n; ++i) {
        double p = 0.0;
        double q = 0.0;
        for (Index j = 0; j < n; ++j) {
            if (B(i, j) == 0.0) continue;
            const double d = theta(i) - theta(j);
            p += B(i, j) * V(i) * V(j) * std::sin(d);
            q -= B(i, j) * V(i) * V(j) * std::cos(d);
        }
        out.P(i) = p;
        out.Q(i) = q;
    }
    return out;
}

/// Jacobian of (P, Q) with respect to (theta, V). Row/column ordering is
/// interleaved per bus: (P_1, Q_1, P_2, ...) x (theta_1, V_1, theta_2, ...).
inline MatrixXd power_balance_jacobian(const VectorXd& theta, const VectorXd& V, const MatrixXd& B) {
    const Index n = B.rows();
    MatrixXd J = MatrixXd::Zero(2 * n, 2 * n);
    for (Index i = 0; i < n; ++i) {
        const Index p = 2 * i;
        const Index q = 2 * i + 1;
        for (Index j = 0; j < n; ++j) {
            if (j == i || B(i, j) == 0.0) continue;
            const double d = theta(i) - theta(j);
            const double c = std::cos(d);
            const double s = std::sin(d);
            const double bij = B(i, j);
            J(p, 2 * i) += bij * V(i) * V(j) * c;
            J(p, 2 * j) = -bij * V(i) * V(j) * c;
            J(p, 2 * i + 1) += bij * V(j) * s;
            J(p, 2 * j + 1) = bij * V(i) * s;
            J(q, 2 * i) += bij * V(i) * V(j) * s;
            J(q, 2 * j) = -bij * V(i) * V(j) * s;
            J(q, 2 * i + 1) -= bij * V(j) * c;
            J(q, 2 * j + 1) = -bij * V(i) * c;
        }
        J(q, 2 * i + 1) -= 2.0 * B(i, i) * V(i);
    }
    return J;
}

struct PowerFlowOptions {
    double tolerance = 1e-10;
    int max_iterations = 50;
};

/// Newton power flow with full steps. Unknowns are theta at PV/PQ buses and
/// V at PQ buses; P and Q of the returned solution come from power_balance.
/// The default start is flat (theta = slack angle, V = 1 at PQ buses).
inline PowerFlowSolution solve_power_flow(const Network& net, std::span<const BusSpec> specs,
                                          const std::optional<PowerFlowSolution>& initial_guess = std::nullopt,
                                          const PowerFlowOptions& opts = {}) {
    const std::size_t n = net.n_bus;
    if (specs.size() != n) throw std::invalid_argument("solve_power_flow: one BusSpec per bus required");

    std::size_t slack_count = 0;
    double slack_theta = 0.0;
    for (const auto& s : specs) {
        if (const auto* sl = std::get_if<SlackBus>(&s)) {
            ++slack_count;
            slack_theta = sl->theta;
        }
    }
    if (slack_count != 1) throw std::invalid_argument("solve_power_flow: exactly one slack bus required");

    VectorXd theta = VectorXd::Constant(static_cast<Index>(n), slack_theta);
    VectorXd V = VectorXd::Ones(static_cast<Index>(n));
    if (initial_guess) {
        if (initial_guess->size() != n) throw std::invalid_argument("solve_power_flow: initial guess size mismatch");
        theta = initial_guess->theta;
        V = initial_guess->V;
    }

    // Unknown and equation index lists, both in bus order.
    std::vector<Index> unknown_cols;  // columns of the interleaved Jacobian
    std::vector<Index> eq_rows;
    std::vector<double> target;
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Index>(k);
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, SlackBus>) {
                    theta(i) = s.theta;
                    V(i) = s.V;
                } else if constexpr (std::is_same_v<T, PvBus>) {
                    V(i) = s.V;
                    unknown_cols.push_back(2 * i);
                    eq_rows.push_back(2 * i);
                    target.push_back(s.P);
                } else {
                    unknown_cols.push_back(2 * i);
                    unknown_cols.push_back(2 * i + 1);
                    eq_rows.push_back(2 * i);
                    eq_rows.push_back(2 * i + 1);
                    target.push_back(s.P);
                    target.push_back(s.Q);
                }
            },
            specs[k]);
    }
    for (Index i = 0; i < V.size(); ++i) {
        if (!(V(i) > 0.0)) throw std::invalid_argument("solve_power_flow: voltage magnitudes must be positive");
    }

    const auto m = static_cast<Index>(eq_rows.size());
    auto mismatch = [&](const VectorXd& th, const VectorXd& vm) {
        const auto pq = power_balance(th, vm, net.B);
        VectorXd r(m);
        for (Index k = 0; k < m; ++k) {
            const Index row = eq_rows[static_cast<std::size_t>(k)];
            const double value = (row % 2 == 0) ? pq.P(row / 2) : pq.Q(row / 2);
            r(k) = value - target[static_cast<std::size_t>(k)];
        }
        return r;
    };

    VectorXd r = mismatch(theta, V);
    double res = m > 0 ? r.lpNorm<Eigen::Infinity>() : 0.0;
    int it = 0;
    while (res > opts.tolerance) {
        if (it >= opts.max_iterations) {
            throw SolverError("power flow did not converge after " + std::to_string(it) +
                                  " iterations (residual " + std::to_string(res) + ")",
                              res, it);
        }
        const MatrixXd full = power_balance_jacobian(theta, V, net.B);
        MatrixXd J(m, m);
        for (Index a = 0; a < m; ++a)
            for (Index b = 0; b < m; ++b)
                J(a, b) = full(eq_rows[static_cast<std::size_t>(a)], unknown_cols[static_cast<std::size_t>(b)]);
        Eigen::FullPivLU<MatrixXd> lu(J);
        if (!lu.isInvertible()) throw SolverError("power flow Jacobian is singular", res, it);
        const VectorXd dx = lu.solve(-r);
        for (Index b = 0; b < m; ++b) {
            const Index col = unknown_cols[static_cast<std::size_t>(b)];
            if (col % 2 == 0)
                theta(col / 2) += dx(b);
            else
                V(col / 2) += dx(b);
        }
        ++it;
        r = mismatch(theta, V);
        res = r.lpNorm<Eigen::Infinity>();
        if (!std::isfinite(res) || (V.array() <= 0.0).any()) {
            throw SolverError("power flow diverged at iteration " + std::to_string(it), res, it);
        }
    }

    PowerFlowSolution sol;
    const auto pq = power_balance(theta, V, net.B);
    sol.theta = std::move(theta);
    sol.V = std::move(V);
    sol.P = pq.P;
    sol.Q = pq.Q;
    sol.iterations = it;
    sol.residual = res;
    return sol;
}

}  // namespace gridcert
