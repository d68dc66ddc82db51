// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "gridcert/config.hpp"
#include "gridcert/simlab.hpp"
#include "gridcert/sweep.hpp"
#include "support/oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>

using namespace gridcert;
namespace gt = gridcert::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool hvv_positive(const System& sys, const Equilibrium& eq) {
    const auto h = assemble_full_hessian(sys, eq);
    return Eigen::SelfAdjointEigenSolver<MatrixXd>(h.vv()).eigenvalues().minCoeff() > 0;
}

// 1 ------------------------------------------------------------------------
Outcome three_bus_reference() {
    const auto t0 = Clock::now();
    const auto cfg = load_config(std::string(GRIDCERT_DATA_DIR) + "/three_bus.json");
    const auto flow = solve_config_power_flow(cfg);
    const double dt = seconds_since(t0);
    const double theta[] = {-0.0308, -0.0560, 0.0}, V[] = {1.0, 0.9931, 1.0};
    const double P[] = {1.0, -3.5, 2.5}, Q[] = {0.2886, -0.5, 0.3805};
    double err = 0;
    for (Index i = 0; i < 3; ++i) {
        err = std::max(err, std::abs(normalize_angle(flow.theta(i)) - theta[i]));
        err = std::max(err, std::abs(flow.V(i) - V[i]));
        err = std::max(err, std::abs(flow.P(i) - P[i]));
        err = std::max(err, std::abs(flow.Q(i) - Q[i]));
    }
    return {err <= 5e-4 && dt < 1.0, fmt("max deviation %.2e, %.3f s", err, dt)};
}

// 2 ------------------------------------------------------------------------
Outcome oracle_agreement() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    int compared = 0, disagree = 0, outside = 0, near_boundary = 0, sufficiency_checked = 0, sufficiency_broken = 0;
    for (int s = 0; compared < 1000 && s < 20000; ++s) {
        const auto r = gt::random_system(rng);
        const auto rep = certify(r.flow, r.sys.devices, r.sys.net);
        if (gt::certificate_margin(rep) < 10) {
            ++near_boundary;
            continue;
        }
        Verdict eig;
        try {
            eig = eig_verdict(r.sys, r.eq).verdict;
        } catch (const DegenerateEquilibrium&) {
            ++near_boundary;
            continue;
        }
        if (rep.verdict == Verdict::stable) {
            ++sufficiency_checked;
            if (eig != Verdict::stable) ++sufficiency_broken;
        }
        if (!hvv_positive(r.sys, r.eq)) {
            ++outside;
            continue;
        }
        ++compared;
        if (eig != rep.verdict) ++disagree;
    }
    const double dt = seconds_since(t0);
    return {compared >= 500 && disagree == 0 && sufficiency_broken == 0 && dt < 60.0,
            fmt("%d compared, %d disagreements; %d outside H_vv>0, %d near boundary; "
                "certificate-stable => eig-stable on %d/%d; %.1f s",
                compared, disagree, outside, near_boundary, sufficiency_checked - sufficiency_broken,
                sufficiency_checked, dt)};
}

// 3 ------------------------------------------------------------------------
Outcome dynamic_parameter_invariance() {
    std::mt19937_64 rng(77);
    int systems = 0, changed = 0, variants = 0, skipped = 0;
    while (systems < 50) {
        const auto r = gt::random_system(rng);
        const auto rep = certify(r.flow, r.sys.devices, r.sys.net);
        if (gt::certificate_margin(rep) < 10 || !hvv_positive(r.sys, r.eq)) continue;
        const auto base = eig_verdict(r.sys, r.eq);
        if (std::abs(base.max_real) < 1e-5) continue;
        ++systems;
        for (int k = 0; k < 10; ++k) {
            System sys = r.sys;
            for (auto& d : sys.devices) {
                d = gt::swap_kind(rng, d, static_cast<DeviceKind>(std::uniform_int_distribution<int>(0, 2)(rng)));
                d = gt::rescale_dynamics(rng, d);
            }
            const auto eq = make_equilibrium(sys, r.flow);
            if (!hvv_positive(sys, eq)) {
                ++skipped;
                continue;
            }
            ++variants;
            const bool same = certify(r.flow, sys.devices, sys.net).verdict == rep.verdict &&
                              eig_verdict(sys, eq).verdict == base.verdict;
            if (!same) ++changed;
        }
    }
    return {changed == 0 && variants >= 250,
            fmt("%d systems, %d variants, %d verdict changes (%d variants outside H_vv>0)", systems, variants, changed,
                skipped)};
}

// 4 ------------------------------------------------------------------------
Outcome hessians_vs_finite_differences() {
    std::mt19937_64 rng(4);
    double worst = 0;
    int points = 0;
    for (int s = 0; s < 400; ++s) {
        const auto kind = static_cast<DeviceKind>(s % 4);
        const DeviceParams p = kind == DeviceKind::load
                                   ? DeviceParams{LoadParams{gt::uniform(rng, -2, 2), gt::uniform(rng, -2, 2)}}
                                   : gt::random_generator(rng, kind, gt::log_uniform(rng, 0.05, 1),
                                                          gt::log_uniform(rng, 0.05, 1));
        const double d = gt::uniform(rng, -1, 1), w = gt::uniform(rng, -0.1, 0.1);
        DeviceState x;
        switch (kind) {
            case DeviceKind::two_axis:
                x = TwoAxisState{d, w, gt::uniform(rng, 0.5, 1.5), gt::uniform(rng, -0.5, 0.5)};
                break;
            case DeviceKind::vsg: x = VsgState{d, w}; break;
            case DeviceKind::fdc: x = FdcState{d}; break;
            case DeviceKind::load: x = LoadState{}; break;
        }
        const Setpoint u{gt::uniform(rng, 0, 1), gt::uniform(rng, 0.8, 1.2)};
        const BusVoltage v{gt::uniform(rng, -1, 1), gt::uniform(rng, 0.9, 1.1)};
        const Index ns = state_dim(p);
        const auto f = [&](const VectorXd& z) {
            return energy(unpack(kind, std::span<const double>(z.data(), static_cast<std::size_t>(ns))),
                          {z(ns), z(ns + 1)}, p, u);
        };
        VectorXd z(ns + 2);
        z << pack(x), v.theta, v.V;
        worst = std::max(worst, gt::rel_error(energy_derivatives(x, v, p, u).hessian, gt::fd_hessian(f, z)));
        ++points;
    }
    for (int s = 0; s < 100; ++s) {
        const auto r = gt::random_system(rng);
        const auto U0 = [&](const VectorXd& q) { return network_energy(q, r.sys.net.B); };
        const MatrixXd L = network_matrix(r.flow.theta, r.flow.V, r.sys.net.B);
        worst = std::max(worst, gt::rel_error(L, gt::fd_hessian(U0, interleave(r.flow.theta, r.flow.V))));
        ++points;
    }
    return {worst < 1e-6, fmt("%d points, worst relative error %.2e", points, worst)};
}

// 5 ------------------------------------------------------------------------
Outcome reduction_chain() {
    std::mt19937_64 rng(5);
    double worst = 0;
    int points = 0;
    while (points < 100) {
        const double X_d = gt::log_uniform(rng, 0.05, 1), X_q = gt::log_uniform(rng, 0.05, 1);
        const BusOperatingPoint rho{gt::uniform(rng, 0.9, 1.1), gt::uniform(rng, -2, 2), gt::uniform(rng, -0.3, 1)};
        if (gamma(rho, X_d, X_q) <= 0) continue;
        ++points;
        const double theta = gt::uniform(rng, -1, 1);
        const TwoAxisParams ta{0.2, 1.0, 5.0, 1.0, X_d, X_q, gt::uniform(rng, 0.2, 0.9) * X_d,
                               gt::uniform(rng, 0.2, 0.9) * X_q};
        const VsgParams vsg{0.2, 1.0, X_d, X_q};
        const FdcParams fdc{1.0, X_d, X_q};
        const auto u = stationary_setpoint(rho, X_d, X_q);
        const BusVoltage v{theta, rho.V};
        const MatrixXd h_ta = energy_derivatives(stationary_state(theta, rho, ta), v, ta, u).hessian;
        const MatrixXd h_vsg = energy_derivatives(stationary_state(theta, rho, vsg), v, vsg, u).hessian;
        const MatrixXd h_fdc = energy_derivatives(stationary_state(theta, rho, fdc), v, fdc, u).hessian;

        const std::array<Index, 4> keep{0, 1, 4, 5};
        MatrixXd a(4, 4), b(4, 2);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) a(i, j) = h_ta(keep[i], keep[j]);
            b(i, 0) = h_ta(keep[i], 2);
            b(i, 1) = h_ta(keep[i], 3);
        }
        worst = std::max(worst, gt::rel_error(schur_complement(a, b, h_ta.block(2, 2, 2, 2)), h_vsg));

        const std::array<Index, 3> no_omega{0, 2, 3};
        MatrixXd h3(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) h3(i, j) = h_vsg(no_omega[i], no_omega[j]);
        worst = std::max(worst, gt::rel_error(h_fdc, h3));

        const double g = gamma(rho, X_d, X_q);
        worst = std::max(worst, std::abs(h_fdc(0, 0) - g) / std::max(1.0, std::abs(g)));
        const MatrixXd schur = h_fdc.block(1, 1, 2, 2) - h_fdc.block(1, 0, 2, 1) * h_fdc.block(0, 1, 1, 2) / g;
        worst = std::max(worst, gt::rel_error(gamma_block(rho, X_d, X_q), schur));
    }
    return {worst < 1e-10, fmt("%d points, worst relative error %.2e", points, worst)};
}

// 6 ------------------------------------------------------------------------
Outcome voltage_hessian_identity() {
    std::mt19937_64 rng(6);
    gt::RandomSystemOptions o;
    o.allow_loads = false;
    double worst = 0, min_eig = std::numeric_limits<double>::infinity();
    for (int s = 0; s < 100; ++s) {
        const auto r = gt::random_system(rng, o);
        const MatrixXd H = angle_voltage_hessian(r.sys, r.flow);
        const Index nv = 2 * static_cast<Index>(r.sys.n_bus());
        const MatrixXd vv = H.bottomRightCorner(nv, nv);
        worst = std::max(worst, gt::rel_error(factorized_voltage_hessian(r.sys, r.flow), vv));
        min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<MatrixXd>(vv).eigenvalues().minCoeff());
    }
    return {worst <= 1e-12 && min_eig > 0,
            fmt("100 equilibria, identity error %.2e, smallest eigenvalue %.3g", worst, min_eig)};
}

// 7 ------------------------------------------------------------------------
Outcome rotation_mode() {
    std::mt19937_64 rng(7);
    double null_err = 0;
    int bad_zero = 0, degenerate = 0;
    for (int s = 0; s < 100; ++s) {
        const auto r = gt::random_system(rng);
        const auto n = static_cast<Index>(r.sys.n_bus());
        const VectorXd one = rotation_vector(n);
        null_err = std::max(null_err, (network_matrix(r.flow.theta, r.flow.V, r.sys.net.B) * one).cwiseAbs().maxCoeff());
        const auto rep = certify(r.flow, r.sys.devices, r.sys.net);
        if (rep.M_cond.size() > 0) null_err = std::max(null_err, (rep.M_cond * one).cwiseAbs().maxCoeff());
        try {
            const auto ana = eig_verdict(r.sys, r.eq);
            if (ana.near_zero != 1) ++bad_zero;
        } catch (const DegenerateEquilibrium&) {
            ++degenerate;
        }
    }
    return {null_err <= 1e-10 && bad_zero == 0 && degenerate == 0,
            fmt("100 equilibria, null residual %.2e, %d without a single zero eigenvalue, %d degenerate", null_err,
                bad_zero, degenerate)};
}

// 8 ------------------------------------------------------------------------
Outcome sweep_containment() {
    const auto t0 = Clock::now();
    const auto cfg = load_config(std::string(GRIDCERT_DATA_DIR) + "/three_bus.json");
    const auto rows = run_sweep(cfg, *cfg.sweep);
    const double dt = seconds_since(t0);
    std::set<std::pair<double, double>> forming, following;
    int mismatch = 0;
    for (const auto& r : rows) {
        if (r.verdict_certificate != r.verdict_eigen) ++mismatch;
        if (r.verdict_certificate != "stable") continue;
        (r.mode == LoadMode::forming ? forming : following).insert({r.X_d, r.X_q});
    }
    int escaped = 0;
    for (const auto& p : following)
        if (!forming.count(p)) ++escaped;
    const bool grid_ok = cfg.sweep->xd.steps >= 20 && cfg.sweep->xq.steps >= 20;
    return {grid_ok && escaped == 0 && forming.size() > following.size() && mismatch == 0 && dt < 120.0,
            fmt("%dx%d grid, stable: forming %zu, following %zu, %d following-only, %d cert/eig mismatches, %.2f s",
                cfg.sweep->xd.steps, cfg.sweep->xq.steps, forming.size(), following.size(), escaped, mismatch, dt)};
}

// 9 ------------------------------------------------------------------------
struct SimCase {
    System sys;
    Equilibrium eq;
    double max_real;
};

Outcome simulation() {
    const auto cfg = load_config(std::string(GRIDCERT_DATA_DIR) + "/three_bus.json");
    const auto flow = solve_config_power_flow(cfg);
    const std::size_t bus = cfg.index_of(cfg.sweep->bus_id);

    // pick well-separated stable and unstable points off the sweep grid
    std::vector<SimCase> stable, unstable;
    for (const auto mode : {LoadMode::forming, LoadMode::following}) {
        for (const double xd : cfg.sweep->xd.values()) {
            for (const double xq : cfg.sweep->xq.values()) {
                System sys = make_system(cfg, flow, mode);
                sys.devices[bus] = with_reactances(sys.devices[bus], xd, xq);
                Equilibrium eq;
                try {
                    eq = make_equilibrium(sys, flow);
                } catch (const std::exception&) {
                    continue;
                }
                const auto ana = eig_verdict(sys, eq);
                const auto cert = certify(flow, sys.devices, sys.net).verdict;
                if (cert == Verdict::stable && ana.max_real < -0.2)
                    stable.push_back({sys, eq, ana.max_real});
                else if (cert == Verdict::unstable && ana.max_real > 0.1)
                    unstable.push_back({sys, eq, ana.max_real});
            }
        }
    }
    const auto spread = [](std::vector<SimCase> v) {
        std::vector<SimCase> out;
        for (std::size_t k = 0; k < 5 && v.size() >= 5; ++k) out.push_back(v[k * (v.size() - 1) / 4]);
        return out;
    };
    stable = spread(stable);
    unstable = spread(unstable);
    if (stable.size() < 5 || unstable.size() < 5) return {false, "not enough stable/unstable grid points"};

    const SimulationOptions opts{.dt = 2e-3, .t_end = 60.0, .record_every = 1};
    int decayed = 0, grew = 0;
    double worst_W_rise = 0;
    std::string growth;
    // 0.05 rad on the swept bus rotor angle
    const auto run = [&](const SimCase& c, bool track_W) {
        const VectorXd xs = pack_states(c.sys, c.eq.states);
        VectorXd x0 = xs;
        x0(StateLayout(c.sys).offset[bus]) += 0.05;
        const auto traj = simulate(c.sys, c.eq, x0, opts);
        for (std::size_t k = 1; k < traj.samples.size() && track_W; ++k)
            worst_W_rise = std::max(worst_W_rise, traj.samples[k].W - traj.samples[k - 1].W);
        const double d0 = phase_aligned_deviation(c.sys, traj.samples.front().state.x, xs);
        double dmax = 0;
        for (const auto& s : traj.samples) dmax = std::max(dmax, phase_aligned_deviation(c.sys, s.state.x, xs));
        const double dend = phase_aligned_deviation(c.sys, traj.samples.back().state.x, xs);
        return std::tuple{traj.truncated, d0, dmax, dend};
    };
    for (const auto& c : stable) {
        const auto [trunc, d0, dmax, dend] = run(c, true);
        if (!trunc && dend < 1e-4 * d0) ++decayed;
    }
    for (const auto& c : unstable) {
        const auto [trunc, d0, dmax, dend] = run(c, false);
        if (dmax >= 10 * d0) ++grew;
        growth += fmt(" %.3gx", dmax / d0);
    }

    // RK4 order on the first stable case
    const auto& c = stable.front();
    VectorXd x0 = pack_states(c.sys, c.eq.states);
    x0(StateLayout(c.sys).offset[bus]) += 0.05;
    const auto end = [&](double h) { return simulate(c.sys, c.eq, x0, {.dt = h, .t_end = 0.4}).samples.back().state.x; };
    const VectorXd ref = end(2.5e-4);
    const double order = std::log2((end(4e-3) - ref).norm() / (end(2e-3) - ref).norm());

    return {decayed == 5 && grew == 5 && worst_W_rise <= 1e-6 && order > 3.5 && order < 4.5,
            fmt("decayed %d/5, grew %d/5 (%s ), max W increase per step on stable runs %.2e, RK4 order %.2f", decayed, grew,
                growth.c_str() + 1, worst_W_rise, order)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"power flow reproduces the three-bus reference operating point", three_bus_reference},
        {"certificate agrees with eigenvalues", oracle_agreement},
        {"verdicts independent of dynamic parameters", dynamic_parameter_invariance},
        {"analytic Hessians match finite differences", hessians_vs_finite_differences},
        {"model-reduction chain and gamma blocks", reduction_chain},
        {"voltage Hessian factorization and definiteness", voltage_hessian_identity},
        {"rotation null vector and single zero eigenvalue", rotation_mode},
        {"grid-forming region contains grid-following region", sweep_containment},
        {"time-domain decay, growth and dissipation", simulation},
    };
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
