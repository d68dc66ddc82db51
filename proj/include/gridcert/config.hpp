#pragma once

// JSON system configuration.
//
// {
//   "omega0": 376.99,                              (optional, rad/s)
//   "buses": [
//     {"id": 1,
//      "device": {"kind": "two_axis", "M": .., "D": .., "tau_d": .., "tau_q": ..,
//                 "X_d": .., "X_q": .., "X_d_prime": .., "X_q_prime": ..},
//      "spec": {"type": "pv", "P": 1.0, "V": 1.0}},
//     {"id": 2,
//      "device": {"kind": "load", "grid_forming": {"kind": "vsg", ...}},
//      "spec": {"type": "pq", "P": -3.5, "Q": -0.5}},
//     {"id": 3, "device": {"kind": "vsg", ...}, "spec": {"type": "slack", "theta": 0, "V": 1}}
//   ],
//   "lines": [{"from": 1, "to": 2, "b": 40.0}],
//   "sweep": {"bus": 3, "xd_range": "0.1:12:24", "xq_range": "0.1:12:24"}   (optional)
// }
//
// Load references P_ref/Q_ref may be omitted; they are then taken from the
// solved power flow at that bus.

#include "gridcert/devices.hpp"
#include "gridcert/errors.hpp"
#include "gridcert/netmodel.hpp"
#include "gridcert/system.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gridcert {

enum class LoadMode { as_configured, forming, following };

inline const char* to_string(LoadMode m) {
    switch (m) {
        case LoadMode::as_configured: return "configured";
        case LoadMode::forming: return "forming";
        case LoadMode::following: return "following";
    }
    return "?";
}

struct GridRange {
    double lo = 0.0;
    double hi = 0.0;
    int steps = 1;

    [[nodiscard]] std::vector<double> values() const {
        std::vector<double> out;
        if (steps == 1) return {lo};
        for (int k = 0; k < steps; ++k) out.push_back(lo + (hi - lo) * k / (steps - 1));
        return out;
    }
};

/// Parses "a:b:n" (n points from a to b inclusive).
inline GridRange parse_range(const std::string& text) {
    GridRange r;
    char c1 = 0, c2 = 0;
    std::istringstream is(text);
    if (!(is >> r.lo >> c1 >> r.hi >> c2 >> r.steps) || c1 != ':' || c2 != ':' || !is.eof())
        throw ConfigError("range must look like a:b:n, got '" + text + "'");
    if (!(r.lo > 0.0) || !(r.hi > 0.0)) throw ConfigError("range bounds must be positive: '" + text + "'");
    if (r.steps < 1) throw ConfigError("range needs at least one step: '" + text + "'");
    if (r.steps == 1 && r.lo != r.hi) throw ConfigError("a single-step range needs a == b: '" + text + "'");
    return r;
}

struct SweepConfig {
    int bus_id = 0;
    GridRange xd;
    GridRange xq;
    std::vector<LoadMode> modes{LoadMode::forming, LoadMode::following};
};

struct BusConfig {
    int id = 0;
    DeviceParams device;
    std::optional<DeviceParams> grid_forming;  // alternative for a load bus
    bool load_refs_from_flow = false;
    BusSpec spec;
};

struct SystemConfig {
    double omega0 = kDefaultOmega0;
    std::vector<BusConfig> buses;
    std::vector<Line> lines;  // bus indices (not ids)
    std::optional<SweepConfig> sweep;

    [[nodiscard]] std::size_t index_of(int id) const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].id == id) return i;
        throw ConfigError("unknown bus id " + std::to_string(id));
    }
    [[nodiscard]] std::vector<int> ids() const {
        std::vector<int> out;
        for (const auto& b : buses) out.push_back(b.id);
        return out;
    }
};

namespace detail {

using nlohmann::json;

inline double number(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    if (!j.at(key).is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
    return j.at(key).get<double>();
}

inline DeviceParams parse_device(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
        throw ConfigError(where + ": device needs a string 'kind'");
    const auto kind = j.at("kind").get<std::string>();
    DeviceParams p;
    if (kind == "two_axis") {
        p = TwoAxisParams{number(j, "M", where),     number(j, "D", where),         number(j, "tau_d", where),
                          number(j, "tau_q", where), number(j, "X_d", where),       number(j, "X_q", where),
                          number(j, "X_d_prime", where), number(j, "X_q_prime", where)};
    } else if (kind == "vsg") {
        p = VsgParams{number(j, "M", where), number(j, "D", where), number(j, "X_d", where), number(j, "X_q", where)};
    } else if (kind == "fdc") {
        p = FdcParams{number(j, "D", where), number(j, "X_d", where), number(j, "X_q", where)};
    } else if (kind == "load") {
        LoadParams l;
        if (j.contains("P_ref")) l.P_ref = number(j, "P_ref", where);
        if (j.contains("Q_ref")) l.Q_ref = number(j, "Q_ref", where);
        p = l;
    } else {
        throw ConfigError(where + ": unknown device kind '" + kind + "'");
    }
    try {
        validate(p);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return p;
}

inline BusSpec parse_spec(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string())
        throw ConfigError(where + ": spec needs a string 'type'");
    const auto type = j.at("type").get<std::string>();
    if (type == "slack") {
        SlackBus s;
        if (j.contains("theta")) s.theta = number(j, "theta", where);
        s.V = number(j, "V", where);
        if (!(s.V > 0.0)) throw ConfigError(where + ": V must be positive");
        return s;
    }
    if (type == "pv") {
        PvBus s{number(j, "P", where), number(j, "V", where)};
        if (!(s.V > 0.0)) throw ConfigError(where + ": V must be positive");
        return s;
    }
    if (type == "pq") return PqBus{number(j, "P", where), number(j, "Q", where)};
    throw ConfigError(where + ": unknown spec type '" + type + "'");
}

inline GridRange parse_range_json(const json& j, const std::string& where) {
    if (j.is_string()) return parse_range(j.get<std::string>());
    if (j.is_array() && j.size() == 3) {
        std::ostringstream os;
        os << j[0].get<double>() << ':' << j[1].get<double>() << ':' << j[2].get<int>();
        return parse_range(os.str());
    }
    throw ConfigError(where + ": range must be \"a:b:n\" or [a, b, n]");
}

inline LoadMode parse_load_mode(const std::string& s) {
    if (s == "forming" || s == "grid_forming") return LoadMode::forming;
    if (s == "following" || s == "grid_following") return LoadMode::following;
    throw ConfigError("load mode must be 'forming' or 'following', got '" + s + "'");
}

}  // namespace detail

inline LoadMode parse_load_mode(const std::string& s) { return detail::parse_load_mode(s); }

inline SystemConfig parse_config(const nlohmann::json& j) {
    using detail::number;
    if (!j.is_object()) throw ConfigError("config root must be an object");
    SystemConfig cfg;
    if (j.contains("omega0")) {
        cfg.omega0 = number(j, "omega0", "config");
        if (!(cfg.omega0 > 0.0)) throw ConfigError("omega0 must be positive");
    }
    if (!j.contains("buses") || !j.at("buses").is_array() || j.at("buses").empty())
        throw ConfigError("config needs a non-empty 'buses' array");

    std::map<int, std::size_t> index;
    std::size_t slack = 0;
    for (const auto& jb : j.at("buses")) {
        if (!jb.contains("id") || !jb.at("id").is_number_integer()) throw ConfigError("bus needs an integer 'id'");
        BusConfig b;
        b.id = jb.at("id").get<int>();
        const std::string where = "bus " + std::to_string(b.id);
        if (index.count(b.id)) throw ConfigError(where + ": duplicate id");
        if (!jb.contains("device")) throw ConfigError(where + ": missing 'device'");
        if (!jb.contains("spec")) throw ConfigError(where + ": missing 'spec'");
        const auto& jd = jb.at("device");
        b.device = detail::parse_device(jd, where);
        if (std::holds_alternative<LoadParams>(b.device)) {
            b.load_refs_from_flow = !jd.contains("P_ref") && !jd.contains("Q_ref");
            if (jd.contains("P_ref") != jd.contains("Q_ref"))
                throw ConfigError(where + ": give both P_ref and Q_ref or neither");
            if (jd.contains("grid_forming")) {
                b.grid_forming = detail::parse_device(jd.at("grid_forming"), where + " grid_forming");
                if (!has_angle(*b.grid_forming)) throw ConfigError(where + ": grid_forming must be a generator kind");
            }
        }
        b.spec = detail::parse_spec(jb.at("spec"), where);
        if (std::holds_alternative<SlackBus>(b.spec)) ++slack;
        index[b.id] = cfg.buses.size();
        cfg.buses.push_back(std::move(b));
    }
    if (slack != 1) throw ConfigError("config needs exactly one slack bus, found " + std::to_string(slack));

    if (j.contains("lines")) {
        if (!j.at("lines").is_array()) throw ConfigError("'lines' must be an array");
        for (const auto& jl : j.at("lines")) {
            if (!jl.contains("from") || !jl.contains("to")) throw ConfigError("line needs 'from' and 'to'");
            const int from = jl.at("from").get<int>();
            const int to = jl.at("to").get<int>();
            if (!index.count(from) || !index.count(to))
                throw ConfigError("line " + std::to_string(from) + "-" + std::to_string(to) + " references unknown bus");
            cfg.lines.push_back({index.at(from), index.at(to), number(jl, "b", "line")});
        }
    }
    try {
        (void)build_susceptance(cfg.buses.size(), cfg.lines);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("network: ") + e.what());
    }

    if (j.contains("sweep")) {
        const auto& js = j.at("sweep");
        SweepConfig s;
        if (!js.contains("bus") || !js.at("bus").is_number_integer()) throw ConfigError("sweep needs integer 'bus'");
        s.bus_id = js.at("bus").get<int>();
        if (!index.count(s.bus_id)) throw ConfigError("sweep bus " + std::to_string(s.bus_id) + " does not exist");
        if (!js.contains("xd_range") || !js.contains("xq_range")) throw ConfigError("sweep needs xd_range and xq_range");
        s.xd = detail::parse_range_json(js.at("xd_range"), "sweep");
        s.xq = detail::parse_range_json(js.at("xq_range"), "sweep");
        if (js.contains("load_modes")) {
            s.modes.clear();
            for (const auto& m : js.at("load_modes")) s.modes.push_back(detail::parse_load_mode(m.get<std::string>()));
        }
        cfg.sweep = s;
    }
    return cfg;
}

inline SystemConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    try {
        return parse_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline SystemConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

inline Network build_network(const SystemConfig& cfg) { return make_network(cfg.buses.size(), cfg.lines); }

inline std::vector<BusSpec> bus_specs(const SystemConfig& cfg) {
    std::vector<BusSpec> out;
    for (const auto& b : cfg.buses) out.push_back(b.spec);
    return out;
}

/// Builds the system for a given load mode. Loads without explicit
/// references take them from `flow`.
inline System make_system(const SystemConfig& cfg, const PowerFlowSolution& flow,
                          LoadMode mode = LoadMode::as_configured) {
    System sys;
    sys.net = build_network(cfg);
    sys.omega0 = cfg.omega0;
    for (std::size_t i = 0; i < cfg.buses.size(); ++i) {
        const auto& b = cfg.buses[i];
        DeviceParams d = b.device;
        if (mode == LoadMode::forming && b.grid_forming) d = *b.grid_forming;
        if (auto* load = std::get_if<LoadParams>(&d); load && b.load_refs_from_flow) {
            load->P_ref = flow.P(static_cast<Index>(i));
            load->Q_ref = flow.Q(static_cast<Index>(i));
        }
        sys.devices.push_back(d);
    }
    return sys;
}

inline PowerFlowSolution solve_config_power_flow(const SystemConfig& cfg) {
    const auto specs = bus_specs(cfg);
    return solve_power_flow(build_network(cfg), specs);
}

}  // namespace gridcert
