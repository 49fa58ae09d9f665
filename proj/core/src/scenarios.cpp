#include "mgsim/scenarios.hpp"

#include "mgsim/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

namespace mgsim::scenarios {

namespace {

constexpr std::string_view kPowerTracking = R"(# Stiff grid, single frequency-shaped GFL unit, setpoint sequence.
[scenario]
name = power_tracking
kind = power_tracking
topology = stiff_grid
duration = 13
dt = 50e-6
warmup = 3
sample_period = 1e-3

[gfl]
controller = proposed
P0 = 10e3
Q0 = 0
wlpf = 20pi

[events]
1  setpoint P0=12e3
4  setpoint Q0=2e3
7  setpoint P0=8e3
10 setpoint Q0=-1e3
)";

constexpr std::string_view kLoadStep = R"(# Islanded: droop GFM holds the bus, GFL unit under test on a line.
[scenario]
name = load_step
kind = load_step
topology = microgrid
duration = 6
dt = 50e-6
warmup = 5
sample_period = 1e-3

[gfl]
controller = proposed
P0 = 10e3
Q0 = 0
wlpf = 20pi

[gfm]
P0 = 10e3
Q0 = 10e3
k_p = 2e-4
k_q = 2e-4
wlpf = 20pi

[load]
P = 20e3
Q = 10e3

[events]
1 load P=5e3 Q=5e3
)";

constexpr std::string_view kLoadRamp = R"(# Same microgrid, the extra load arrives as a 5 s ramp.
[scenario]
name = load_ramp
kind = load_ramp
topology = microgrid
duration = 8
dt = 50e-6
warmup = 5
sample_period = 1e-3

[gfl]
controller = proposed
P0 = 10e3
Q0 = 0
wlpf = 20pi

[gfm]
P0 = 10e3
Q0 = 10e3
k_p = 2e-4
k_q = 2e-4
wlpf = 20pi

[load]
P = 20e3
Q = 10e3

[events]
1 load P=5e3 Q=5e3 ramp=5
)";

constexpr std::string_view kTransition = R"(# GFL -> GFM at 2 s, back to GFL at 7 s.
[scenario]
name = transition
kind = transition
topology = microgrid
duration = 12
dt = 50e-6
warmup = 5
sample_period = 1e-3

[gfl]
controller = proposed
P0 = 10e3
Q0 = 0
wlpf = 20pi

[gfm]
P0 = 10e3
Q0 = 10e3
k_p = 2e-4
k_q = 2e-4
wlpf = 20pi

[load]
P = 25e3
Q = 15e3

[transition]
method = smooth
eps_rate = 100
eps_max = 200
shape = linear

[events]
2 transition to=gfm
7 transition to=gfl
)";

struct Builtin {
    std::string_view name;
    std::string_view text;
};

constexpr Builtin kBuiltins[] = {
    {"power_tracking", kPowerTracking},
    {"load_step", kLoadStep},
    {"load_ramp", kLoadRamp},
    {"transition", kTransition},
};

std::string where(int line) { return line > 0 ? "line " + std::to_string(line) + ": " : std::string{}; }

[[noreturn]] void bad(const config::Document& doc, std::string_view key, const std::string& msg) {
    const config::Entry* e = doc.find(key);
    const int line = e ? e->line : 0;
    throw ConfigError(where(line) + "'" + std::string(key) + "': " + msg, std::string(key), line);
}

Kind parse_kind(const config::Document& doc) {
    const std::string v = doc.text("scenario.kind", "custom");
    if (v == "power_tracking") return Kind::power_tracking;
    if (v == "load_step") return Kind::load_step;
    if (v == "load_ramp") return Kind::load_ramp;
    if (v == "transition") return Kind::transition;
    if (v == "custom") return Kind::custom;
    bad(doc, "scenario.kind", "unknown kind '" + v + "'");
}

Topology parse_topology(const config::Document& doc) {
    const std::string v = doc.text("scenario.topology", "stiff_grid");
    if (v == "stiff_grid") return Topology::stiff_grid;
    if (v == "microgrid") return Topology::microgrid;
    bad(doc, "scenario.topology", "expected stiff_grid or microgrid, got '" + v + "'");
}

plant::PlantParams parse_plant(const config::Document& doc) {
    doc.require_known("plant", {"R_i", "L_i", "C_i", "R_g", "L_g", "V_dc", "V_0", "f_0"});
    plant::PlantParams p;
    p.R_i = doc.number("plant.R_i", p.R_i);
    p.L_i = doc.number("plant.L_i", p.L_i);
    p.C_i = doc.number("plant.C_i", p.C_i);
    p.R_g = doc.number("plant.R_g", p.R_g);
    p.L_g = doc.number("plant.L_g", p.L_g);
    p.V_dc = doc.number("plant.V_dc", p.V_dc);
    p.V_0 = doc.number("plant.V_0", p.V_0);
    p.omega_0 = 2.0 * std::numbers::pi * doc.number("plant.f_0", p.omega_0 / (2.0 * std::numbers::pi));
    try {
        p.validate();
    } catch (const ContractViolation& e) {
        throw ConfigError(std::string("[plant]: ") + e.what(), "plant");
    }
    return p;
}

void check_positive(const config::Document& doc, std::string_view key, double v) {
    if (!(v > 0.0)) bad(doc, key, "must be positive");
}

sim::UnitSpec parse_gfl(const config::Document& doc, const plant::PlantParams& p) {
    doc.require_known("gfl", {"controller", "P0", "Q0", "wlpf", "kpP", "kiP", "kpQ", "kiQ", "eps0", "tau_c", "k_pV",
                              "k_iV", "pll_kp", "pll_ki", "g_damp", "omega_damp"});
    sim::UnitSpec u;
    u.name = "gfl";
    const std::string kind = doc.text("gfl.controller", "proposed");
    if (kind == "proposed") u.controller.kind = control::ControllerKind::proposed_gfl;
    else if (kind == "conventional") u.controller.kind = control::ControllerKind::conventional_gfl;
    else bad(doc, "gfl.controller", "expected proposed or conventional, got '" + kind + "'");

    u.setpoint.P_0 = doc.number("gfl.P0", 10e3);
    u.setpoint.Q_0 = doc.number("gfl.Q0", 0.0);
    u.setpoint.V_0 = p.V_0;
    u.setpoint.omega_0 = p.omega_0;

    const double w = doc.number("gfl.wlpf", 20.0 * std::numbers::pi);
    check_positive(doc, "gfl.wlpf", w);
    const double kpP = doc.number("gfl.kpP", 2e-4);
    const double kiP = doc.number("gfl.kiP", 0.1 * w * kpP);
    const double kpQ = doc.number("gfl.kpQ", 2e-4);
    const double kiQ = doc.number("gfl.kiQ", w * kpQ);
    try {
        u.controller.proposed = control::ProposedConfig(kpP, kiP, kpQ, kiQ, w);
    } catch (const ConfigError& e) {
        const std::string key = doc.has("gfl.kiP") ? "gfl.kiP" : doc.has("gfl.kiQ") ? "gfl.kiQ" : "gfl.wlpf";
        bad(doc, key, e.what());
    } catch (const ContractViolation& e) {
        bad(doc, "gfl.wlpf", e.what());
    }
    u.controller.droop.omega_lpf = w;

    u.controller.inner.tau_c = doc.number("gfl.tau_c", u.controller.inner.tau_c);
    u.controller.inner.k_pV = doc.number("gfl.k_pV", u.controller.inner.k_pV);
    u.controller.inner.k_iV = doc.number("gfl.k_iV", u.controller.inner.k_iV);
    u.controller.inner.g_damp = doc.number("gfl.g_damp", u.controller.inner.g_damp);
    u.controller.inner.omega_damp = doc.number("gfl.omega_damp", u.controller.inner.omega_damp);
    u.controller.pll.k_p = doc.number("gfl.pll_kp", u.controller.pll.k_p);
    u.controller.pll.k_i = doc.number("gfl.pll_ki", u.controller.pll.k_i);
    return u;
}

sim::UnitSpec parse_gfm(const config::Document& doc, const plant::PlantParams& p) {
    doc.require_known("gfm", {"P0", "Q0", "k_p", "k_q", "wlpf", "tau_c", "k_pV", "k_iV"});
    sim::UnitSpec u;
    u.name = "gfm";
    u.controller.kind = control::ControllerKind::gfm_droop;
    u.setpoint.P_0 = doc.number("gfm.P0", 10e3);
    u.setpoint.Q_0 = doc.number("gfm.Q0", 10e3);
    u.setpoint.V_0 = p.V_0;
    u.setpoint.omega_0 = p.omega_0;
    u.controller.droop.k_p = doc.number("gfm.k_p", u.controller.droop.k_p);
    u.controller.droop.k_q = doc.number("gfm.k_q", u.controller.droop.k_q);
    u.controller.droop.omega_lpf = doc.number("gfm.wlpf", u.controller.droop.omega_lpf);
    check_positive(doc, "gfm.k_p", u.controller.droop.k_p);
    check_positive(doc, "gfm.k_q", u.controller.droop.k_q);
    check_positive(doc, "gfm.wlpf", u.controller.droop.omega_lpf);
    u.controller.inner.tau_c = doc.number("gfm.tau_c", u.controller.inner.tau_c);
    u.controller.inner.k_pV = doc.number("gfm.k_pV", u.controller.inner.k_pV);
    u.controller.inner.k_iV = doc.number("gfm.k_iV", u.controller.inner.k_iV);
    return u;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

struct EventArgs {
    std::vector<std::pair<std::string, std::string>> kv;
    int line = 0;

    [[nodiscard]] const std::string* get(std::string_view key) const {
        for (const auto& [k, v] : kv)
            if (k == key) return &v;
        return nullptr;
    }
    [[nodiscard]] std::optional<double> number(std::string_view key) const {
        const std::string* v = get(key);
        if (!v) return std::nullopt;
        return config::parse_number(*v, "events." + std::string(key), line);
    }
    void require_known(std::initializer_list<std::string_view> known) const {
        for (const auto& [k, v] : kv) {
            if (std::find(known.begin(), known.end(), k) == known.end()) {
                throw ConfigError(where(line) + "unknown event argument '" + k + "'", "events." + k, line);
            }
        }
    }
};

struct TransitionOptions {
    TransitionMethod method = TransitionMethod::smooth;
    double rate = 100.0;
    double eps_max = 200.0;
    control::RampShape shape = control::RampShape::linear;
};

TransitionOptions parse_transition(const config::Document& doc) {
    doc.require_known("transition", {"method", "eps_rate", "eps_max", "shape"});
    TransitionOptions o;
    const std::string method = doc.text("transition.method", "smooth");
    if (method == "smooth") o.method = TransitionMethod::smooth;
    else if (method == "sudden") o.method = TransitionMethod::sudden;
    else bad(doc, "transition.method", "expected smooth or sudden, got '" + method + "'");
    o.rate = doc.number("transition.eps_rate", o.rate);
    o.eps_max = doc.number("transition.eps_max", o.eps_max);
    check_positive(doc, "transition.eps_rate", o.rate);
    if (!(o.eps_max >= 0.0)) bad(doc, "transition.eps_max", "must be non-negative");
    const std::string shape = doc.text("transition.shape", "linear");
    if (shape == "linear") o.shape = control::RampShape::linear;
    else if (shape == "smoothstep") o.shape = control::RampShape::smoothstep;
    else bad(doc, "transition.shape", "expected linear or smoothstep, got '" + shape + "'");
    if (o.method == TransitionMethod::sudden) o.shape = control::RampShape::jump;
    return o;
}

std::size_t unit_index(const sim::SimulationConfig& cfg, const std::string& name, int line) {
    for (std::size_t i = 0; i < cfg.units.size(); ++i)
        if (cfg.units[i].name == name) return i;
    throw ConfigError(where(line) + "event names unknown unit '" + name + "'", "events.unit", line);
}

/// Setpoint of `unit` in force just before `time`.
control::Setpoint setpoint_before(const sim::SimulationConfig& cfg, std::size_t unit, double time) {
    control::Setpoint sp = cfg.units[unit].setpoint;
    for (const sim::SetpointEvent& e : cfg.setpoint_events) {
        if (e.unit != unit || e.time >= time) continue;
        if (e.P_0) sp.P_0 = *e.P_0;
        if (e.Q_0) sp.Q_0 = *e.Q_0;
    }
    return sp;
}

double relative_error(double y, double r) { return std::abs(y - r) / std::max(std::abs(r), kTrackingFloor); }

std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

const char* to_string(Kind kind) noexcept {
    switch (kind) {
        case Kind::power_tracking: return "power_tracking";
        case Kind::load_step: return "load_step";
        case Kind::load_ramp: return "load_ramp";
        case Kind::transition: return "transition";
        case Kind::custom: return "custom";
    }
    return "custom";
}

const char* to_string(TransitionMethod method) noexcept {
    return method == TransitionMethod::smooth ? "smooth" : "sudden";
}

Scenario from_config(const config::Document& doc) {
    doc.require_known("scenario", {"name", "kind", "topology", "duration", "dt", "warmup", "sample_period",
                                   "island_bus"});
    doc.require_known("grid", {"V_g", "f_g"});
    doc.require_known("load", {"P", "Q", "recovery"});
    for (const config::Entry& e : doc.entries()) {
        static constexpr std::string_view known[] = {"scenario", "plant", "grid", "gfl", "gfm", "load", "transition"};
        if (std::find(std::begin(known), std::end(known), e.section) == std::end(known)) {
            throw ConfigError(where(e.line) + "unknown section [" + e.section + "]", e.section + "." + e.key, e.line);
        }
    }

    Scenario sc;
    sc.name = doc.text("scenario.name", "custom");
    sc.kind = parse_kind(doc);
    sc.topology = parse_topology(doc);

    sim::SimulationConfig& cfg = sc.simulation;
    cfg.params = parse_plant(doc);
    cfg.duration = doc.number("scenario.duration", 10.0);
    cfg.dt = doc.number("scenario.dt", 50e-6);
    cfg.warmup = doc.number("scenario.warmup", 3.0);
    cfg.sample_period = doc.number("scenario.sample_period", 1e-3);
    check_positive(doc, "scenario.duration", cfg.duration);
    check_positive(doc, "scenario.dt", cfg.dt);
    if (cfg.warmup < 0.0) bad(doc, "scenario.warmup", "must be non-negative");
    if (cfg.sample_period < cfg.dt) bad(doc, "scenario.sample_period", "must be at least dt");

    cfg.grid.V_g = doc.number("grid.V_g", cfg.params.V_0);
    cfg.grid.omega_g = 2.0 * std::numbers::pi * doc.number("grid.f_g", cfg.params.omega_0 / (2.0 * std::numbers::pi));
    check_positive(doc, "grid.V_g", cfg.grid.V_g);

    if (sc.topology == Topology::microgrid) {
        cfg.grid_connected = false;
        const std::string bus = doc.text("scenario.island_bus", "passive");
        if (bus == "passive") cfg.island_bus = plant::IslandBus::passive;
        else if (bus == "former") cfg.island_bus = plant::IslandBus::former;
        else bad(doc, "scenario.island_bus", "expected passive or former, got '" + bus + "'");
        cfg.units.push_back(parse_gfm(doc, cfg.params));
        sc.forming_unit = "gfm";
    } else {
        cfg.grid_connected = true;
        for (const config::Entry& e : doc.entries()) {
            if (e.section == "gfm") {
                throw ConfigError(where(e.line) + "[gfm] is only valid for the microgrid topology", "gfm." + e.key, e.line);
            }
        }
    }
    cfg.units.push_back(parse_gfl(doc, cfg.params));
    const std::size_t gfl = cfg.units.size() - 1;
    const double eps0 = doc.number("gfl.eps0", 0.0);
    if (eps0 < 0.0) bad(doc, "gfl.eps0", "must be non-negative");

    cfg.load_recovery_time = doc.number("load.recovery", cfg.load_recovery_time);
    if (cfg.load_recovery_time < 0.0) bad(doc, "load.recovery", "must be non-negative");
    const double P_load = doc.number("load.P", 0.0);
    const double Q_load = doc.number("load.Q", 0.0);
    if (P_load != 0.0 || Q_load != 0.0) {
        plant::LoadSpec base;
        base.P_load = P_load;
        base.Q_load = Q_load;
        cfg.loads.push_back(base);
    }

    const TransitionOptions tr = parse_transition(doc);
    std::vector<control::TransitionSchedule> schedules;
    double last_time = 0.0;
    for (const config::RawLine& raw : doc.lines("events")) {
        const auto tokens = split_ws(raw.text);
        if (tokens.size() < 2) {
            throw ConfigError(where(raw.line) + "event needs '<time> <action> [key=value...]'", "events", raw.line);
        }
        const double time = config::parse_number(tokens[0], "events.time", raw.line);
        if (time < 0.0 || time > cfg.duration) {
            throw ConfigError(where(raw.line) + "event time outside [0, duration]", "events.time", raw.line);
        }
        if (time < last_time) throw ConfigError(where(raw.line) + "events must be time-ordered", "events.time", raw.line);
        last_time = time;

        EventArgs args;
        args.line = raw.line;
        for (std::size_t i = 2; i < tokens.size(); ++i) {
            const auto eq = tokens[i].find('=');
            if (eq == std::string_view::npos || eq == 0) {
                throw ConfigError(where(raw.line) + "expected key=value, got '" + std::string(tokens[i]) + "'", "events",
                                  raw.line);
            }
            args.kv.emplace_back(std::string(tokens[i].substr(0, eq)), std::string(tokens[i].substr(eq + 1)));
        }

        const std::string_view action = tokens[1];
        if (action == "setpoint") {
            args.require_known({"unit", "P0", "Q0"});
            sim::SetpointEvent ev;
            ev.time = time;
            ev.unit = args.get("unit") ? unit_index(cfg, *args.get("unit"), raw.line) : gfl;
            ev.P_0 = args.number("P0");
            ev.Q_0 = args.number("Q0");
            if (!ev.P_0 && !ev.Q_0) throw ConfigError(where(raw.line) + "setpoint event changes nothing", "events", raw.line);
            cfg.setpoint_events.push_back(ev);
            sc.timeline.setpoint_times.push_back(time);
        } else if (action == "load") {
            args.require_known({"P", "Q", "ramp"});
            plant::LoadSpec load;
            load.P_load = args.number("P").value_or(0.0);
            load.Q_load = args.number("Q").value_or(0.0);
            load.start = time;
            if (const auto ramp = args.number("ramp")) {
                if (!(*ramp > 0.0)) throw ConfigError(where(raw.line) + "ramp must be positive", "events.ramp", raw.line);
                load.activation = plant::LoadActivation::ramp;
                load.ramp_duration = *ramp;
                sc.timeline.ramp_duration = *ramp;
            }
            cfg.loads.push_back(load);
            if (sc.timeline.load_event < 0.0) sc.timeline.load_event = time;
        } else if (action == "transition") {
            args.require_known({"to"});
            const std::string* to = args.get("to");
            if (!to) throw ConfigError(where(raw.line) + "transition needs to=gfm or to=gfl", "events.to", raw.line);
            control::TransitionSchedule s;
            s.start = time;
            s.eps_max = tr.eps_max;
            s.ramp_rate = tr.rate;
            if (*to == "gfm") {
                s.direction = control::TransitionDirection::gfl_to_gfm;
                s.shape = tr.shape;
                if (sc.timeline.to_forming < 0.0) sc.timeline.to_forming = time;
            } else if (*to == "gfl") {
                // the return leg always drops straight to zero
                s.direction = control::TransitionDirection::gfm_to_gfl;
                s.shape = control::RampShape::jump;
                if (sc.timeline.to_following < 0.0) sc.timeline.to_following = time;
            } else {
                throw ConfigError(where(raw.line) + "transition target must be gfm or gfl, got '" + *to + "'",
                                  "events.to", raw.line);
            }
            schedules.push_back(s);
        } else {
            throw ConfigError(where(raw.line) + "unknown event '" + std::string(action) + "'", "events", raw.line);
        }
    }
    for (control::TransitionSchedule& s : schedules) {
        try {
            s.validate();
        } catch (const ContractViolation& e) {
            throw ConfigError(std::string("[transition]: ") + e.what(), "transition");
        }
    }
    if (!schedules.empty() && cfg.units[gfl].controller.kind != control::ControllerKind::proposed_gfl) {
        bad(doc, "gfl.controller", "transitions need the proposed controller");
    }
    cfg.units[gfl].epsilon = control::EpsilonProgram(std::move(schedules), eps0);
    if (sc.kind == Kind::transition && (sc.timeline.to_forming < 0.0 || sc.topology != Topology::microgrid)) {
        throw ConfigError("transition scenarios need a microgrid and a 'transition to=gfm' event", "events");
    }
    if ((sc.kind == Kind::load_step || sc.kind == Kind::load_ramp) &&
        (sc.timeline.load_event < 0.0 || sc.topology != Topology::microgrid)) {
        throw ConfigError("load scenarios need a microgrid and a load event", "events");
    }
    if (sc.kind == Kind::load_ramp && sc.timeline.ramp_duration <= 0.0) {
        throw ConfigError("load_ramp scenarios need a ramp= argument on the load event", "events");
    }

    try {
        cfg.validate();
    } catch (const ContractViolation& e) {
        throw ConfigError(e.what());
    }
    return sc;
}

std::vector<std::string> builtin_names() {
    std::vector<std::string> out;
    for (const Builtin& b : kBuiltins) out.emplace_back(b.name);
    return out;
}

std::string_view builtin_text(std::string_view name) {
    for (const Builtin& b : kBuiltins)
        if (b.name == name) return b.text;
    throw ConfigError("unknown built-in scenario '" + std::string(name) + "'", "scenario");
}

Scenario builtin(std::string_view name, const std::vector<std::string>& overrides) {
    config::Document doc = config::Document::parse(builtin_text(name));
    for (const std::string& o : overrides) doc.apply_override(o);
    return from_config(doc);
}

Metrics compute_metrics(const Scenario& scenario, const trace::Trace& trace) {
    const sim::SimulationConfig& cfg = scenario.simulation;
    const std::string& uut = scenario.unit_under_test;
    const auto t = trace.times();
    const auto P = trace.column("P_" + uut);
    const auto Q = trace.column("Q_" + uut);
    const double end = t.empty() ? 0.0 : t.back() + trace.sample_period();
    const double window = 0.2;
    Metrics m;

    // power balance over every sample
    {
        std::vector<std::span<const double>> unit_P;
        for (const sim::UnitSpec& u : cfg.units) unit_P.push_back(trace.column("P_" + u.name));
        const auto load = trace.column("P_load");
        const auto grid = trace.column("P_grid");
        const auto loss = trace.column("P_line_loss");
        const auto storage = trace.column("P_line_storage");
        for (std::size_t i = 0; i < t.size(); ++i) {
            double injected = 0.0;
            for (const auto& col : unit_P) injected += col[i];
            const double residual = injected - load[i] - grid[i] - loss[i] - storage[i];
            const double scale = std::max({std::abs(load[i]), std::abs(grid[i]), 1e3});
            m.power_balance_error = std::max(m.power_balance_error, std::abs(residual) / scale);
        }
    }

    const std::string freq_unit = scenario.forming_unit.empty() ? uut : scenario.forming_unit;
    trace::RocofOptions ro;
    ro.start_time = 0.0;
    m.rocof_max = trace::compute_rocof(trace, "omega_" + freq_unit, ro);

    std::size_t uut_index = 0;
    for (std::size_t i = 0; i < cfg.units.size(); ++i)
        if (cfg.units[i].name == uut) uut_index = i;

    // tracking windows bounded by setpoint events
    auto track = [&](double a, double b) {
        const control::Setpoint sp = setpoint_before(cfg, uut_index, b);
        const double Pm = trace::window_mean(t, P, b - window, b);
        const double Qm = trace::window_mean(t, Q, b - window, b);
        m.steady_state_error_P = std::max(m.steady_state_error_P, relative_error(Pm, sp.P_0));
        m.steady_state_error_Q = std::max(m.steady_state_error_Q, relative_error(Qm, sp.Q_0));
        for (auto [y, r] : {std::pair{P, sp.P_0}, std::pair{Q, sp.Q_0}}) {
            const double ts = trace::settling_time(t, y, a, b, r, 0.01 * std::max(std::abs(r), kTrackingFloor));
            m.settling_time = std::max(m.settling_time, ts < 0.0 ? std::numeric_limits<double>::infinity() : ts);
        }
    };

    const Timeline& tl = scenario.timeline;
    switch (scenario.kind) {
        case Kind::power_tracking:
        case Kind::custom: {
            std::vector<double> edges{0.0};
            for (double e : tl.setpoint_times)
                if (e > edges.back()) edges.push_back(e);
            edges.push_back(end);
            for (std::size_t i = 0; i + 1 < edges.size(); ++i)
                if (edges[i + 1] - edges[i] > window) track(edges[i], edges[i + 1]);
            break;
        }
        case Kind::load_step:
        case Kind::load_ramp: {
            track(tl.load_event, end);
            const auto Pf = trace.column("P_" + scenario.forming_unit);
            const double before = trace::window_mean(t, Pf, tl.load_event - window, tl.load_event);
            const double after = trace::window_mean(t, Pf, end - window, end);
            m.forming_power_rise = after - before;
            if (scenario.kind == Kind::load_ramp) {
                const double P0 = cfg.units[uut_index].setpoint.P_0;
                const std::size_t i0 = trace.row_at(tl.load_event);
                const std::size_t i1 = trace.row_at(tl.load_event + tl.ramp_duration);
                for (std::size_t i = i0; i < i1; ++i)
                    m.ramp_deviation_P = std::max(m.ramp_deviation_P, std::abs(P[i] - P0) / std::abs(P0));
            }
            break;
        }
        case Kind::transition: {
            const double leg_end = tl.to_following > tl.to_forming ? tl.to_following : end;
            m.overshoot_P = trace::compute_overshoot(trace, "P_" + uut, tl.to_forming, leg_end).peak;
            m.overshoot_Q = trace::compute_overshoot(trace, "Q_" + uut, tl.to_forming, leg_end).peak;
            if (tl.to_following > tl.to_forming) {
                m.return_leg_deviation_P = trace::compute_overshoot(trace, "P_" + uut, tl.to_following, end).peak;
                track(tl.to_following, end);
            }
            break;
        }
    }
    return m;
}

Result run(const Scenario& scenario) {
    sim::Simulator simulator(scenario.simulation);
    sim::SimulationResult sr = simulator.run();
    Metrics m = compute_metrics(scenario, sr.trace);
    m.saturated = sr.saturated;
    m.wall_seconds = sr.wall_seconds;
    return Result{scenario, std::move(sr), m};
}

std::vector<Result> run_parallel(const std::vector<Scenario>& scenarios, unsigned jobs) {
    std::vector<std::optional<Result>> slots(scenarios.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < scenarios.size(); i = next++) {
            try {
                slots[i] = run(scenarios[i]);
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const std::size_t n = std::clamp<std::size_t>(jobs == 0 ? 1 : jobs, 1, std::max<std::size_t>(1, scenarios.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    if (first_error) std::rethrow_exception(first_error);
    std::vector<Result> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

std::vector<Result> run_power_tracking(std::span<const double> omega_lpf, unsigned jobs) {
    std::vector<Scenario> list;
    for (double w : omega_lpf) list.push_back(builtin("power_tracking", {"gfl.wlpf=" + format_number(w)}));
    return run_parallel(list, jobs);
}

Result run_power_tracking_conventional() {
    return run(builtin("power_tracking", {"gfl.controller=conventional"}));
}

std::vector<Result> run_fast_load_step(std::span<const double> omega_lpf, unsigned jobs) {
    std::vector<Scenario> list{builtin("load_step", {"gfl.controller=conventional"})};
    for (double w : omega_lpf) list.push_back(builtin("load_step", {"gfl.wlpf=" + format_number(w)}));
    return run_parallel(list, jobs);
}

Result run_slow_load_ramp() { return run(builtin("load_ramp")); }

Result run_transition(TransitionMethod method) {
    return run(builtin("transition", {std::string("transition.method=") + to_string(method)}));
}

std::string format_metrics(const Result& result) {
    const Metrics& m = result.metrics;
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed;
    os << "scenario = " << result.scenario.name << "\n";
    os << "kind = " << to_string(result.scenario.kind) << "\n";
    os << "rocof_max = " << m.rocof_max << "\n";
    os << "overshoot_P = " << m.overshoot_P << "\n";
    os << "overshoot_Q = " << m.overshoot_Q << "\n";
    os << "steady_state_error_P = " << m.steady_state_error_P << "\n";
    os << "steady_state_error_Q = " << m.steady_state_error_Q << "\n";
    os << "settling_time = " << m.settling_time << "\n";
    os << "return_leg_deviation_P = " << m.return_leg_deviation_P << "\n";
    os << "ramp_deviation_P = " << m.ramp_deviation_P << "\n";
    os << "forming_power_rise = " << m.forming_power_rise << "\n";
    os << "power_balance_error = " << m.power_balance_error << "\n";
    os << "saturated = " << (m.saturated ? "true" : "false") << "\n";
    if (m.saturated) os << "warning = modulation saturated; scenario results are not valid for comparison\n";
    return os.str();
}

}  // namespace mgsim::scenarios
