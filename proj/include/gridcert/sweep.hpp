#pragma once

// Reactance sweep at one generator bus: certificate and eigenvalue verdicts
// on a (X_d, X_q) grid, for each load mode. Points are evaluated on a small
// thread pool and collected in row-major order (X_d outer, X_q inner).

#include "gridcert/certificate.hpp"
#include "gridcert/config.hpp"
#include "gridcert/csv.hpp"
#include "gridcert/lindyn.hpp"
#include "gridcert/system.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace gridcert {

struct SweepRow {
    LoadMode mode = LoadMode::as_configured;
    double X_d = 0.0;
    double X_q = 0.0;
    std::string verdict_certificate;  // stable | unstable | marginal | infeasible
    std::string verdict_eigen;        // stable | unstable | marginal | infeasible | degenerate | error
    double min_eig = std::numeric_limits<double>::quiet_NaN();
};

/// Replaces (X_d, X_q) of a generator-type device.
inline DeviceParams with_reactances(DeviceParams d, double X_d, double X_q) {
    std::visit(Overloaded{[](LoadParams&) { throw std::invalid_argument("swept bus carries a load"); },
                          [&](auto& g) {
                              g.X_d = X_d;
                              g.X_q = X_q;
                          }},
               d);
    return d;
}

inline SweepRow evaluate_sweep_point(const SystemConfig& cfg, const PowerFlowSolution& flow, std::size_t bus,
                                     LoadMode mode, double X_d, double X_q) {
    SweepRow row{mode, X_d, X_q, "infeasible", "infeasible"};
    System sys = make_system(cfg, flow, mode);
    Equilibrium eq;
    try {
        sys.devices[bus] = with_reactances(sys.devices[bus], X_d, X_q);
        eq = make_equilibrium(sys, flow);
    } catch (const std::invalid_argument&) {
        return row;
    } catch (const DomainError&) {
        return row;
    }
    try {
        const auto rep = certify(flow, sys.devices, sys.net);
        row.verdict_certificate = to_string(rep.verdict);
        row.min_eig = rep.min_eig;
    } catch (const DomainError&) {
        row.verdict_certificate = "infeasible";
    }
    try {
        row.verdict_eigen = to_string(eig_verdict(sys, eq).verdict);
    } catch (const DegenerateEquilibrium&) {
        row.verdict_eigen = "degenerate";
    } catch (const std::exception&) {
        row.verdict_eigen = "error";
    }
    return row;
}

/// Worker count: hardware concurrency, capped by GRIDCERT_THREADS when set.
inline unsigned sweep_threads() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("GRIDCERT_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return n;
}

inline std::vector<SweepRow> run_sweep(const SystemConfig& cfg, const SweepConfig& sweep, unsigned threads = 0) {
    const std::size_t bus = cfg.index_of(sweep.bus_id);
    const auto flow = solve_config_power_flow(cfg);
    for (const auto mode : sweep.modes)
        if (!has_angle(make_system(cfg, flow, mode).devices[bus]))
            throw std::invalid_argument("sweep bus " + std::to_string(sweep.bus_id) + " carries a load in " +
                                        to_string(mode) + " mode");
    const auto xds = sweep.xd.values();
    const auto xqs = sweep.xq.values();

    struct Point {
        LoadMode mode;
        double xd;
        double xq;
    };
    std::vector<Point> points;
    for (const auto mode : sweep.modes)
        for (const double xd : xds)
            for (const double xq : xqs) points.push_back({mode, xd, xq});

    std::vector<SweepRow> rows(points.size());
    if (threads == 0) threads = sweep_threads();
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(points.size())));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t k = next++; k < points.size(); k = next++)
            rows[k] = evaluate_sweep_point(cfg, flow, bus, points[k].mode, points[k].xd, points[k].xq);
    };
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    pool.clear();
    return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "load_mode,X_d,X_q,verdict_certificate,verdict_eigen,min_eig\n";
    for (const auto& r : rows) {
        os << to_string(r.mode) << ',' << detail::fmt12(r.X_d) << ',' << detail::fmt12(r.X_q) << ','
           << r.verdict_certificate << ',' << r.verdict_eigen << ',';
        if (std::isfinite(r.min_eig)) os << detail::fmt12(r.min_eig);
        os << '\n';
    }
}

}  // namespace gridcert
