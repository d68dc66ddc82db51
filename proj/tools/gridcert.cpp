// gridcert command line: powerflow | certify | eigen | simulate | sweep
//
// Exit codes: 0 ok/stable, 1 unstable, 2 solver or capability failure,
// 3 marginal, 4 configuration or usage error.

#include "gridcert/certificate.hpp"
#include "gridcert/config.hpp"
#include "gridcert/lindyn.hpp"
#include "gridcert/simlab.hpp"
#include "gridcert/sweep.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

using namespace gridcert;

enum Exit : int { kOk = 0, kUnstable = 1, kSolver = 2, kMarginal = 3, kUsage = 4 };

int exit_for(Verdict v) {
    switch (v) {
        case Verdict::stable: return kOk;
        case Verdict::unstable: return kUnstable;
        case Verdict::marginal: return kMarginal;
    }
    return kSolver;
}

struct Common {
    std::string config;
    std::string out;
    bool no_timestamp = false;
    std::string load_mode;
};

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void emit(const Common& c, const std::string& text) {
    if (c.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(c.out, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + c.out + "'");
    f << text;
}

std::string header_line(const Common& c) { return c.no_timestamp ? "" : "# generated " + timestamp() + "\n"; }

LoadMode mode_of(const Common& c) {
    return c.load_mode.empty() ? LoadMode::as_configured : parse_load_mode(c.load_mode);
}

std::string bus_label(const SystemConfig& cfg, std::optional<std::size_t> idx) {
    return idx && *idx < cfg.buses.size() ? std::to_string(cfg.buses[*idx].id) : "?";
}

int cmd_powerflow(const SystemConfig& cfg, const Common& c) {
    const auto flow = solve_config_power_flow(cfg);
    std::ostringstream os;
    os << header_line(c);
    os << "bus      theta          V          P          Q\n";
    char line[128];
    for (std::size_t i = 0; i < flow.size(); ++i) {
        const auto k = static_cast<Index>(i);
        std::snprintf(line, sizeof line, "%3d %10.4f %10.4f %10.4f %10.4f\n", cfg.buses[i].id,
                      normalize_angle(flow.theta(k)) + 0.0, flow.V(k), flow.P(k) + 0.0, flow.Q(k) + 0.0);
        os << line;
    }
    emit(c, os.str());
    return kOk;
}

int cmd_certify(const SystemConfig& cfg, const Common& c, bool text) {
    const auto flow = solve_config_power_flow(cfg);
    const auto sys = make_system(cfg, flow, mode_of(c));
    const auto rep = certify(flow, sys.devices, sys.net);

    std::ostringstream os;
    if (text) {
        os << header_line(c);
        os << "verdict: " << to_string(rep.verdict) << '\n';
        for (std::size_t i = 0; i < rep.gammas.size(); ++i) {
            os << "bus " << cfg.buses[i].id << " gamma: ";
            if (rep.gammas[i])
                os << detail::fmt12(*rep.gammas[i]);
            else
                os << "-";
            os << '\n';
        }
        if (std::isfinite(rep.min_eig)) os << "min_eig: " << detail::fmt12(rep.min_eig) << '\n';
        if (rep.violating_bus) os << "violating_bus: " << bus_label(cfg, rep.violating_bus) << '\n';
        if (!rep.message.empty()) os << "note: " << rep.message << '\n';
    } else {
        nlohmann::ordered_json j;
        if (!c.no_timestamp) j["generated_at"] = timestamp();
        auto& g = j["gammas"] = nlohmann::ordered_json::array();
        for (const auto& v : rep.gammas) g.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json());
        j["min_eig"] = std::isfinite(rep.min_eig) ? nlohmann::ordered_json(rep.min_eig) : nlohmann::ordered_json();
        j["verdict"] = to_string(rep.verdict);
        if (rep.witness) j["witness"] = std::vector<double>(rep.witness->begin(), rep.witness->end());
        if (rep.violating_bus) j["violating_bus"] = cfg.buses[*rep.violating_bus].id;
        os << j.dump(2) << '\n';
    }
    emit(c, os.str());
    return exit_for(rep.verdict);
}

int cmd_eigen(const SystemConfig& cfg, const Common& c) {
    const auto flow = solve_config_power_flow(cfg);
    const auto sys = make_system(cfg, flow, mode_of(c));
    const auto eq = make_equilibrium(sys, flow);
    const auto ana = eig_verdict(sys, eq);
    std::ostringstream os;
    os << header_line(c) << "re,im\n";
    for (Index k = 0; k < ana.spectrum.size(); ++k)
        os << detail::fmt12(ana.spectrum(k).real()) << ',' << detail::fmt12(ana.spectrum(k).imag()) << '\n';
    emit(c, os.str());
    std::cerr << "verdict: " << to_string(ana.verdict) << '\n';
    return exit_for(ana.verdict);
}

struct SimArgs {
    double dt = 1e-3;
    double t_end = 10.0;
    std::string perturb;
};

int cmd_simulate(const SystemConfig& cfg, const Common& c, const SimArgs& a) {
    const auto flow = solve_config_power_flow(cfg);
    const auto sys = make_system(cfg, flow, mode_of(c));
    const auto eq = make_equilibrium(sys, flow);
    VectorXd x0 = pack_states(sys, eq.states);
    if (!a.perturb.empty()) {
        const auto eqpos = a.perturb.find('=');
        if (eqpos == std::string::npos) throw ConfigError("--perturb expects BUS=RAD");
        int id = 0;
        double rad = 0.0;
        try {
            id = std::stoi(a.perturb.substr(0, eqpos));
            rad = std::stod(a.perturb.substr(eqpos + 1));
        } catch (const std::exception&) {
            throw ConfigError("--perturb expects BUS=RAD, got '" + a.perturb + "'");
        }
        const auto idx = cfg.index_of(id);
        if (!has_angle(sys.devices[idx])) throw ConfigError("--perturb: bus " + std::to_string(id) + " has no rotor angle");
        x0(StateLayout(sys).offset[idx]) += rad;
    }
    SimulationOptions opts;
    opts.dt = a.dt;
    opts.t_end = a.t_end;
    if (!(opts.dt > 0.0) || !(opts.t_end >= 0.0)) throw ConfigError("--dt must be positive and --t-end non-negative");
    const auto traj = simulate(sys, eq, x0, opts);
    std::ostringstream os;
    os << header_line(c);
    write_trajectory_csv(os, sys, eq.setpoints, traj, cfg.ids());
    emit(c, os.str());
    if (traj.truncated) std::cerr << "trajectory truncated: " << traj.diagnostic << '\n';
    return kOk;
}

struct SweepArgs {
    std::optional<int> bus;
    std::string xd;
    std::string xq;
};

int cmd_sweep(const SystemConfig& cfg, const Common& c, const SweepArgs& a) {
    SweepConfig s = cfg.sweep.value_or(SweepConfig{});
    if (a.bus) s.bus_id = *a.bus;
    if (!a.xd.empty()) s.xd = parse_range(a.xd);
    if (!a.xq.empty()) s.xq = parse_range(a.xq);
    if (!c.load_mode.empty()) s.modes = {parse_load_mode(c.load_mode)};
    if (!a.bus && !cfg.sweep) throw ConfigError("sweep needs --sweep-bus or a 'sweep' section");
    if (a.xd.empty() && !cfg.sweep) throw ConfigError("sweep needs --xd-range");
    if (a.xq.empty() && !cfg.sweep) throw ConfigError("sweep needs --xq-range");
    (void)cfg.index_of(s.bus_id);
    const auto rows = run_sweep(cfg, s);
    std::ostringstream os;
    os << header_line(c);
    write_sweep_csv(os, rows);
    emit(c, os.str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power flow, stability certificate and simulation for lossless power systems"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "system config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "output file (default stdout)");
        sub->add_flag("--no-timestamp", common.no_timestamp, "omit the generation timestamp");
    };
    auto add_mode = [&](CLI::App* sub) {
        sub->add_option("--load-mode", common.load_mode, "device at load buses")
            ->check(CLI::IsMember({"forming", "following"}));
    };

    auto* pf = app.add_subcommand("powerflow", "solve the stationary power flow");
    add_common(pf);

    bool text = false;
    auto* cert = app.add_subcommand("certify", "closed-form small-signal certificate");
    add_common(cert);
    add_mode(cert);
    cert->add_flag("--text", text, "plain text report instead of JSON");

    auto* eig = app.add_subcommand("eigen", "spectrum of the linearized system");
    add_common(eig);
    add_mode(eig);

    SimArgs sim_args;
    auto* sim = app.add_subcommand("simulate", "time-domain simulation");
    add_common(sim);
    add_mode(sim);
    sim->add_option("--dt", sim_args.dt, "step size [s]");
    sim->add_option("--t-end", sim_args.t_end, "final time [s]");
    sim->add_option("--perturb", sim_args.perturb, "rotor angle offset BUS=RAD");

    SweepArgs sweep_args;
    auto* sw = app.add_subcommand("sweep", "reactance sweep at one bus");
    add_common(sw);
    add_mode(sw);
    sw->add_option("--sweep-bus", sweep_args.bus, "bus id whose X_d, X_q are swept");
    sw->add_option("--xd-range", sweep_args.xd, "a:b:n");
    sw->add_option("--xq-range", sweep_args.xq, "a:b:n");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    SystemConfig cfg;
    try {
        cfg = load_config(common.config);
        if (*pf) return cmd_powerflow(cfg, common);
        if (*cert) return cmd_certify(cfg, common, text);
        if (*eig) return cmd_eigen(cfg, common);
        if (*sim) return cmd_simulate(cfg, common, sim_args);
        if (*sw) return cmd_sweep(cfg, common, sweep_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const SolverError& e) {
        std::cerr << "solver failure: " << e.what() << " (residual " << e.residual() << ", iterations "
                  << e.iterations() << ")\n";
        return kSolver;
    } catch (const DomainError& e) {
        std::cerr << "capability error";
        if (e.bus()) std::cerr << " at bus " << bus_label(cfg, e.bus());
        std::cerr << ": " << e.what() << '\n';
        return kSolver;
    } catch (const DegenerateEquilibrium& e) {
        std::cerr << e.what() << '\n';
        return kSolver;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kSolver;
    }
    return kUsage;
}
