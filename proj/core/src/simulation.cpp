#include "mgsim/simulation.hpp"

#include "mgsim/errors.hpp"
#include "mgsim/numerics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <sstream>

namespace mgsim::sim {

namespace {

using Cplx = std::complex<double>;
using plant::DqPair;
using plant::InverterState;

constexpr double kEventTolerance = 1e-9;

InverterState unpack_plant(std::span<const double> x) {
    InverterState s;
    s.i_L = {x[0], x[1]};
    s.V_c = {x[2], x[3]};
    s.i_g = {x[4], x[5]};
    return s;
}

void pack_plant(const InverterState& s, std::span<double> out) {
    out[0] = s.i_L.d;
    out[1] = s.i_L.q;
    out[2] = s.V_c.d;
    out[3] = s.V_c.q;
    out[4] = s.i_g.d;
    out[5] = s.i_g.q;
}

plant::NetworkSpec network_spec(const SimulationConfig& c) {
    plant::NetworkSpec spec;
    spec.inverter_count = c.units.size();
    for (const UnitSpec& u : c.units) spec.forming.push_back(u.controller.forms_voltage());
    spec.grid_breaker_closed = c.grid_connected;
    spec.island_bus = c.island_bus;
    spec.grid = c.grid;
    spec.loads = c.loads;
    return spec;
}

/// Current through the line for delivered power S at the sending capacitor.
Cplx line_current_for(Cplx S, Cplx v_bus, Cplx z) {
    Cplx v = v_bus;
    Cplx i{0.0, 0.0};
    for (int it = 0; it < 200; ++it) {
        i = std::conj(S / (1.5 * v));
        const Cplx next = v_bus + z * i;
        if (std::abs(next - v) < 1e-12 * std::abs(v_bus)) {
            v = next;
            break;
        }
        v = next;
    }
    return std::conj(S / (1.5 * v));
}

}  // namespace

void SimulationConfig::validate() const {
    params.validate();
    if (units.empty()) throw ConfigError("simulation: at least one inverter is required", "units");
    if (!(dt > 0.0)) throw ConfigError("simulation: dt must be positive", "scenario.dt");
    if (!(duration > 0.0)) throw ConfigError("simulation: duration must be positive", "scenario.duration");
    if (warmup < 0.0) throw ConfigError("simulation: warmup must be non-negative", "scenario.warmup");
    if (!(sample_period >= dt)) throw ConfigError("simulation: sample period must be at least dt", "scenario.sample_period");
    if (!(load_recovery_time >= 0.0)) throw ConfigError("simulation: load recovery time must be non-negative", "load.recovery");
    for (std::size_t i = 0; i < setpoint_events.size(); ++i) {
        const SetpointEvent& e = setpoint_events[i];
        if (e.unit >= units.size()) throw ConfigError("simulation: setpoint event names an unknown unit", "events");
        if (e.time < 0.0 || e.time > duration) throw ConfigError("simulation: event time outside [0, duration]", "events");
        if (i > 0 && e.time < setpoint_events[i - 1].time) throw ConfigError("simulation: events must be time-ordered", "events");
    }
    for (std::size_t i = 0; i < units.size(); ++i) {
        units[i].setpoint.validate();
        units[i].controller.inner.validate();
        units[i].controller.pll.validate();
        units[i].controller.droop.validate();
        for (std::size_t j = i + 1; j < units.size(); ++j)
            if (units[i].name == units[j].name) throw ConfigError("simulation: duplicate unit name " + units[i].name, "units");
    }
}

Simulator::Simulator(SimulationConfig config)
    : config_((config.validate(), std::move(config))), network_(network_spec(config_), config_.params) {
    active_setpoints_.reserve(config_.units.size());
    for (const UnitSpec& u : config_.units) active_setpoints_.push_back(u.setpoint);
    events_ = config_.setpoint_events;
}

void Simulator::apply_setpoints(double t) {
    while (next_event_ < events_.size() && events_[next_event_].time <= t + kEventTolerance) {
        const SetpointEvent& e = events_[next_event_++];
        if (e.P_0) active_setpoints_[e.unit].P_0 = *e.P_0;
        if (e.Q_0) active_setpoints_[e.unit].Q_0 = *e.Q_0;
    }
}

std::vector<double> Simulator::initial_state() const {
    const plant::PlantParams& p = config_.params;
    const std::size_t n = config_.units.size();
    const Cplx z{p.R_g, p.omega_0 * p.L_g};
    const double t0 = -config_.warmup;
    const plant::Admittance y = plant::load_admittance(config_.loads, p, t0);

    std::vector<Cplx> v_c(n);
    std::vector<Cplx> i_out(n);
    double omega_ss = config_.grid.omega_g;
    Cplx v_bus = config_.grid_connected ? Cplx{config_.grid.V_g, 0.0} : Cplx{p.V_0, 0.0};

    // Islanded: the first forming unit is the reference whose droop law fixes
    // amplitude and frequency; it sits on the bus or behind its own line.
    std::optional<std::size_t> reference = network_.bus_former();
    if (network_.passive_bus()) {
        for (std::size_t k = 0; k < n && !reference; ++k)
            if (config_.units[k].controller.forms_voltage()) reference = k;
    }
    const Cplx z_ref = network_.passive_bus() ? z : Cplx{0.0, 0.0};
    // recovered loads draw nominal power whatever the bus voltage
    auto load_scale = [&](Cplx v) { return config_.load_recovery_time > 0.0 ? p.V_0 * p.V_0 / std::norm(v) : 1.0; };

    for (int iter = 0; iter < 200; ++iter) {
        for (std::size_t k = 0; k < n; ++k) {
            if (reference && *reference == k) continue;
            const control::Setpoint& sp = config_.units[k].setpoint;
            i_out[k] = line_current_for(Cplx{sp.P_0, sp.Q_0}, v_bus, z);
            v_c[k] = v_bus + z * i_out[k];
        }
        if (!reference) break;

        const std::size_t b = *reference;
        const Cplx i_load = load_scale(v_bus) * y.current(DqPair::from_complex(v_bus)).as_complex();
        Cplx line_sum{0.0, 0.0};
        for (std::size_t k = 0; k < n; ++k)
            if (k != b) line_sum += i_out[k];
        i_out[b] = i_load - line_sum;
        v_c[b] = v_bus + z_ref * i_out[b];
        const Cplx S_b = 1.5 * v_c[b] * std::conj(i_out[b]);

        const UnitSpec& u = config_.units[b];
        double kp = u.controller.droop.k_p;
        double kq = u.controller.droop.k_q;
        if (u.controller.kind == control::ControllerKind::proposed_gfl) {
            const double eps = u.epsilon.at(t0);
            const auto& cfg = u.controller.proposed;
            kp = cfg.k_pP() + (eps > 0.0 ? cfg.k_iP() / eps : 0.0);
            kq = cfg.k_pQ() + (eps > 0.0 ? cfg.k_iQ() / eps : 0.0);
        }
        const double v_target = u.setpoint.V_0 + kq * (u.setpoint.Q_0 - S_b.imag());
        omega_ss = u.setpoint.omega_0 + kp * (u.setpoint.P_0 - S_b.real());
        // rescale and rotate so the reference capacitor sits at angle 0 with the droop amplitude
        const Cplx correction = std::polar(v_target / std::abs(v_c[b]), -std::arg(v_c[b]));
        const bool done = std::abs(correction - 1.0) < 1e-12;
        v_bus *= correction;
        if (done) break;
    }

    std::vector<double> x(dimension(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const UnitSpec& u = config_.units[k];
        const Cplx i_L = i_out[k] + Cplx{0.0, p.omega_0 * p.C_i} * v_c[k];
        InverterState s;
        s.V_c = DqPair::from_complex(v_c[k]);
        s.i_L = DqPair::from_complex(i_L);
        s.i_g = DqPair::from_complex(i_out[k]);
        pack_plant(s, std::span<double>(x).subspan(k * kUnitStates, kPlantStates));

        const double angle = std::arg(v_c[k]);
        const Cplx rot = std::polar(1.0, -angle);
        const Cplx S = 1.5 * v_c[k] * std::conj(i_out[k]);
        control::ControllerState c;
        c.angle = angle;
        c.pll = {omega_ss - u.setpoint.omega_0, angle};
        c.current_integrator = DqPair::from_complex(p.R_i * i_L * rot);
        c.damping_filter = DqPair::from_complex(v_c[k] * rot);
        c.proposed.filter = {S.real(), S.imag()};
        if (u.controller.kind == control::ControllerKind::proposed_gfl) {
            const auto& cfg = u.controller.proposed;
            c.proposed.z_P = omega_ss - u.setpoint.omega_0 - cfg.k_pP() * (u.setpoint.P_0 - S.real());
            c.proposed.z_Q = std::abs(v_c[k]) - u.setpoint.V_0 - cfg.k_pQ() * (u.setpoint.Q_0 - S.imag());
        }
        c.pack(std::span<double>(x).subspan(k * kUnitStates + kPlantStates, control::ControllerState::kSize));
    }
    x[n * kUnitStates + 1] = load_scale(v_bus);
    x[n * kUnitStates + 2] = load_scale(v_bus);
    return x;
}

namespace {

struct Evaluation {
    std::vector<InverterState> plants;
    std::vector<control::ControllerState> controls;
    std::vector<control::ControllerOutput> outputs;
    std::vector<double> eps;
    plant::NetworkSolution network;
    bool saturated = false;
};

// Shared by derivative() and snapshot(); dx may be empty.
Evaluation evaluate_all(const SimulationConfig& config, const plant::Network& network,
                               std::span<const control::Setpoint> setpoints, double t, std::span<const double> x,
                               std::span<double> dx) {
    const plant::PlantParams& p = config.params;
    const std::size_t n = config.units.size();
    Evaluation ev;
    ev.plants.resize(n);
    ev.controls.resize(n);
    ev.outputs.resize(n);
    ev.eps.resize(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        ev.plants[k] = unpack_plant(x.subspan(k * kUnitStates, kPlantStates));
        ev.controls[k] = control::ControllerState::unpack(x.subspan(k * kUnitStates + kPlantStates, control::ControllerState::kSize));
    }
    const double grid_angle = x[n * kUnitStates];
    const plant::LoadScale scale{x[n * kUnitStates + 1], x[n * kUnitStates + 2]};
    ev.network = network.solve(ev.plants, grid_angle, t, scale);

    for (std::size_t k = 0; k < n; ++k) {
        const UnitSpec& u = config.units[k];
        const InverterState& s = ev.plants[k];
        const double theta = ev.controls[k].angle;
        const control::Measurements m{s.i_L.rotated(-theta), s.V_c.rotated(-theta), ev.network.i_out[k].rotated(-theta)};
        ev.eps[k] = u.controller.kind == control::ControllerKind::proposed_gfl ? u.epsilon.at(t) : 0.0;
        ev.outputs[k] = u.controller.evaluate(ev.controls[k], m, setpoints[k], ev.eps[k], ev.eps[k], p);
        ev.saturated = ev.saturated || ev.outputs[k].modulation.saturated;

        if (dx.empty()) continue;
        const DqPair m_global = ev.outputs[k].modulation.m.rotated(theta);
        const plant::FilterDerivative f =
            plant::filter_derivatives(s.i_L, s.V_c, ev.network.i_out[k], m_global, p, p.omega_0);
        InverterState rate;
        rate.i_L = f.di_L;
        rate.V_c = f.dV_c;
        if (network.role(k) == plant::NodeRole::line) {
            const Cplx ig = s.i_g.as_complex();
            const Cplx dig = (s.V_c.as_complex() - ev.network.v_bus.as_complex() - p.R_g * ig -
                              Cplx{0.0, p.omega_0 * p.L_g} * ig) / p.L_g;
            rate.i_g = DqPair::from_complex(dig);
        }
        pack_plant(rate, dx.subspan(k * kUnitStates, kPlantStates));
        ev.outputs[k].rates.pack(dx.subspan(k * kUnitStates + kPlantStates, control::ControllerState::kSize));
    }
    if (!dx.empty()) {
        dx[n * kUnitStates] = config.grid_connected ? config.grid.omega_g - p.omega_0 : 0.0;
        const double T = config.load_recovery_time;
        const double v2 = ev.network.v_bus.d * ev.network.v_bus.d + ev.network.v_bus.q * ev.network.v_bus.q;
        const double u = v2 / (p.V_0 * p.V_0);
        dx[n * kUnitStates + 1] = T > 0.0 ? (1.0 - scale.G * u) / T : 0.0;
        dx[n * kUnitStates + 2] = T > 0.0 ? (1.0 - scale.B * u) / T : 0.0;
    }
    return ev;
}

}  // namespace

bool Simulator::derivative(double t, std::span<const double> x, std::span<double> dx) const {
    if (x.size() != dimension() || dx.size() != dimension()) throw ContractViolation("Simulator: state dimension mismatch");
    return evaluate_all(config_, network_, active_setpoints_, t, x, dx).saturated;
}

Snapshot Simulator::snapshot(double t, std::span<const double> x) const {
    std::vector<double> dx(dimension(), 0.0);
    Evaluation ev = evaluate_all(config_, network_, active_setpoints_, t, x, dx);
    const plant::PlantParams& p = config_.params;
    Snapshot s;
    s.t = t;
    s.network = ev.network;
    s.grid_angle = x[config_.units.size() * kUnitStates];
    for (std::size_t k = 0; k < config_.units.size(); ++k) {
        s.units.push_back({ev.plants[k], ev.controls[k], ev.outputs[k], ev.network.i_out[k], ev.eps[k]});
        if (network_.role(k) == plant::NodeRole::line) {
            const DqPair i = ev.plants[k].i_g;
            const DqPair di{dx[k * kUnitStates + 4], dx[k * kUnitStates + 5]};
            s.line_loss += 1.5 * p.R_g * (i.d * i.d + i.q * i.q);
            s.line_storage += 1.5 * p.L_g * (i.d * di.d + i.q * di.q);
        }
    }
    return s;
}

std::vector<std::string> Simulator::trace_columns() const {
    std::vector<std::string> cols{"t"};
    for (const UnitSpec& u : config_.units) {
        for (const char* base : {"P", "Q", "Pf", "Qf", "V", "omega", "delta", "zP", "zQ", "eps_P", "eps_Q", "m"}) {
            cols.push_back(std::string(base) + "_" + u.name);
        }
    }
    for (const char* extra : {"P_load", "Q_load", "V_bus", "P_grid", "Q_grid", "P_line_loss", "P_line_storage", "saturated"}) {
        cols.emplace_back(extra);
    }
    return cols;
}

std::vector<double> Simulator::record_row(const Snapshot& s) const {
    std::vector<double> row{s.t};
    const double bus_angle = std::arg(s.network.v_bus.as_complex());
    for (const UnitSnapshot& u : s.units) {
        const plant::PowerPair pw = plant::power_from_dq(u.plant.V_c, u.i_out);
        double delta = std::remainder(u.control.angle - bus_angle, 2.0 * std::numbers::pi);
        row.insert(row.end(), {pw.P, pw.Q, u.control.proposed.filter.P, u.control.proposed.filter.Q,
                               u.plant.V_c.magnitude(), u.output.omega, delta, u.control.proposed.z_P,
                               u.control.proposed.z_Q, u.epsilon, u.epsilon, u.output.modulation.m.magnitude()});
    }
    const plant::PowerPair load = plant::power_from_dq(s.network.v_bus, s.network.i_load);
    const plant::PowerPair grid = plant::power_from_dq(s.network.v_bus, s.network.i_grid);
    row.insert(row.end(), {load.P, load.Q, s.network.v_bus.magnitude(), grid.P, grid.Q, s.line_loss, s.line_storage, 0.0});
    return row;
}

void Simulator::fail(double t, std::span<const double> x, const std::string& cause) const {
    std::string signal = "state";
    const double v_limit = 20.0 * config_.params.V_0;
    for (std::size_t k = 0; k < config_.units.size() && signal == "state"; ++k) {
        const std::span<const double> u = x.subspan(k * kUnitStates, kUnitStates);
        const std::string& name = config_.units[k].name;
        if (!std::isfinite(u[0]) || !std::isfinite(u[1]) || std::hypot(u[0], u[1]) > 1e5) signal = "i_L_" + name;
        else if (!std::isfinite(u[2]) || !std::isfinite(u[3]) || std::hypot(u[2], u[3]) > v_limit) signal = "V_c_" + name;
        else if (!std::isfinite(u[4]) || !std::isfinite(u[5]) || std::hypot(u[4], u[5]) > 1e5) signal = "i_g_" + name;
        else
            for (std::size_t i = kPlantStates; i < kUnitStates; ++i)
                if (!std::isfinite(u[i])) signal = "controller_" + name;
    }
    std::ostringstream os;
    os << "simulation diverged at t = " << t << " s in signal " << signal << " (" << cause << ")";
    throw ScenarioFailed(os.str(), signal);
}

SimulationResult Simulator::run() {
    const auto wall0 = std::chrono::steady_clock::now();
    const double dt = config_.dt;
    const auto warm_steps = static_cast<long long>(std::llround(config_.warmup / dt));
    const auto run_steps = static_cast<long long>(std::llround(config_.duration / dt));
    const auto stride = std::max<long long>(1, std::llround(config_.sample_period / dt));

    active_setpoints_.clear();
    for (const UnitSpec& u : config_.units) active_setpoints_.push_back(u.setpoint);
    next_event_ = 0;

    std::vector<double> x = initial_state();
    bool saturated_now = false;
    numerics::OdeSystem sys{dimension(), [&](double t, std::span<const double> xs, std::span<double> dx) {
        saturated_now = derivative(t, xs, dx) || saturated_now;
    }};
    numerics::Rk4Workspace ws(dimension());

    SimulationResult result{trace::Trace(static_cast<double>(stride) * dt, trace_columns()), false, 0.0, {}};
    const std::size_t sat_col = result.trace.columns().size() - 1;
    const double v_limit = 20.0 * config_.params.V_0;
    bool sample_saturated = false;

    for (long long i = -warm_steps; i <= run_steps; ++i) {
        const double t = static_cast<double>(i) * dt;
        if (i >= 0) apply_setpoints(t);
        if (i >= 0 && i % stride == 0) {
            std::vector<double> row = record_row(snapshot(t, x));
            row[sat_col] = sample_saturated ? 1.0 : 0.0;
            result.trace.append(row);
            sample_saturated = false;
        }
        if (i == run_steps) break;

        saturated_now = false;
        try {
            numerics::rk4_step(sys, t, x, dt, ws);
        } catch (const IntegrationDiverged& e) {
            fail(t, x, e.what());
        }
        for (std::size_t k = 0; k < config_.units.size(); ++k) {
            const double* u = x.data() + k * kUnitStates;
            if (std::hypot(u[2], u[3]) > v_limit || std::hypot(u[0], u[1]) > 1e5 || std::hypot(u[4], u[5]) > 1e5) {
                fail(t + dt, x, "state left the physical envelope");
            }
        }
        if (saturated_now && i >= 0) {
            sample_saturated = true;
            result.saturated = true;
        }
    }
    result.final_state = x;
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    return result;
}

}  // namespace mgsim::sim
