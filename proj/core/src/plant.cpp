#include "mgsim/plant.hpp"

#include "mgsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

namespace mgsim::plant {

using std::numbers::pi;
using Cplx = std::complex<double>;

double PlantParams::line_impedance() const noexcept { return std::hypot(R_g, omega_0 * L_g); }

double PlantParams::line_angle() const noexcept { return std::atan2(omega_0 * L_g, R_g); }

void PlantParams::validate() const {
    const double values[] = {R_i, L_i, C_i, R_g, L_g, V_dc, V_0, omega_0};
    for (double v : values) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ContractViolation("PlantParams: every electrical constant must be positive and finite");
        }
    }
}

double DqPair::magnitude() const noexcept { return std::hypot(d, q); }

DqPair DqPair::rotated(double angle) const noexcept {
    return from_complex(as_complex() * std::polar(1.0, angle));
}

double InverterState::theta_wrapped() const noexcept {
    double w = std::fmod(theta, 2.0 * pi);
    if (w < 0.0) w += 2.0 * pi;
    return w;
}

DqPair abc_to_dq(double v_a, double v_b, double v_c, double theta) noexcept {
    constexpr double shift = 2.0 * pi / 3.0;
    const double d = 2.0 / 3.0 * (v_a * std::cos(theta) + v_b * std::cos(theta - shift) + v_c * std::cos(theta + shift));
    const double q = -2.0 / 3.0 * (v_a * std::sin(theta) + v_b * std::sin(theta - shift) + v_c * std::sin(theta + shift));
    return {d, q};
}

ThreePhase dq_to_abc(DqPair p, double theta) noexcept {
    constexpr double shift = 2.0 * pi / 3.0;
    return {p.d * std::cos(theta) - p.q * std::sin(theta),
            p.d * std::cos(theta - shift) - p.q * std::sin(theta - shift),
            p.d * std::cos(theta + shift) - p.q * std::sin(theta + shift)};
}

PowerPair power_from_dq(DqPair V_c, DqPair i_g) noexcept {
    return {1.5 * (V_c.d * i_g.d + V_c.q * i_g.q), 1.5 * (V_c.q * i_g.d - V_c.d * i_g.q)};
}

Modulation limit_modulation(DqPair m) noexcept {
    const double mag = m.magnitude();
    if (mag > 1.0) return {(1.0 / mag) * m, true};
    return {m, false};
}

FilterDerivative filter_derivatives(DqPair i_L, DqPair V_c, DqPair i_out, DqPair m,
                                    const PlantParams& params, double omega) {
    const Modulation mod = limit_modulation(m);
    const Cplx iL = i_L.as_complex();
    const Cplx vc = V_c.as_complex();
    const Cplx coupling_L = Cplx{0.0, omega * params.L_i} * iL;
    const Cplx coupling_C = Cplx{0.0, omega * params.C_i} * vc;
    const Cplx v_inv = mod.m.as_complex() * (0.5 * params.V_dc);

    const Cplx diL = (v_inv - vc - params.R_i * iL - coupling_L) / params.L_i;
    const Cplx dvc = (iL - i_out.as_complex() - coupling_C) / params.C_i;
    return {DqPair::from_complex(diL), DqPair::from_complex(dvc), mod};
}

InverterDerivative inverter_derivatives(const InverterState& x, DqPair m, const PlantParams& params,
                                        double omega, DqPair v_pcc) {
    const FilterDerivative f = filter_derivatives(x.i_L, x.V_c, x.i_g, m, params, omega);
    const Cplx ig = x.i_g.as_complex();
    const Cplx dig = (x.V_c.as_complex() - v_pcc.as_complex() - params.R_g * ig -
                      Cplx{0.0, omega * params.L_g} * ig) /
                     params.L_g;
    return {f.di_L, f.dV_c, DqPair::from_complex(dig), f.modulation};
}

PowerPair linearized_power_flow(double V_c, double delta, const PlantParams& params, double V_g) {
    if (std::isnan(V_g)) V_g = params.V_0;
    const double z = params.line_impedance();
    return {params.V_0 * params.V_0 * delta / z, params.V_0 * (V_c - V_g) / z};
}

PowerPair exact_power_flow(double V_c, double delta, double V_g, const PlantParams& params) {
    const Cplx vc = std::polar(V_c, delta);
    const Cplx vg{V_g, 0.0};
    const Cplx z = std::polar(params.line_impedance(), params.line_angle());
    const Cplx s = vc * std::conj((vc - vg) / z);
    return {s.real(), s.imag()};
}

void LoadSpec::validate() const {
    if (!std::isfinite(P_load) || !std::isfinite(Q_load)) throw ContractViolation("LoadSpec: non-finite power");
    if (activation == LoadActivation::ramp && !(ramp_duration > 0.0)) {
        throw ContractViolation("LoadSpec: ramp duration must be positive");
    }
}

double LoadSpec::fraction(double t) const noexcept {
    if (t < start) return 0.0;
    if (activation == LoadActivation::step) return 1.0;
    return std::min(1.0, (t - start) / ramp_duration);
}

Admittance load_admittance(std::span<const LoadSpec> loads, const PlantParams& params, double t) noexcept {
    // P = 3/2 G V0^2, Q = 3/2 B V0^2 at nominal amplitude.
    const double k = 2.0 / (3.0 * params.V_0 * params.V_0);
    Admittance y;
    for (const LoadSpec& l : loads) {
        const double f = l.fraction(t);
        y.G += f * k * l.P_load;
        y.B += f * k * l.Q_load;
    }
    return y;
}

Network::Network(NetworkSpec spec, PlantParams params) : spec_(std::move(spec)), params_(params) {
    params_.validate();
    if (spec_.forming.size() != spec_.inverter_count) {
        throw ConfigError("network: forming flags must match inverter count", "network.forming");
    }
    for (const LoadSpec& l : spec_.loads) l.validate();

    roles_.assign(spec_.inverter_count, NodeRole::line);
    if (!spec_.grid_breaker_closed && spec_.island_bus == IslandBus::passive) {
        const Admittance y = load_admittance(spec_.loads, params_, -std::numeric_limits<double>::infinity());
        if (!(std::hypot(y.G, y.B) > 0.0)) {
            throw ConfigError("network: a passive island bus needs a load connected from the start", "load");
        }
        if (std::find(spec_.forming.begin(), spec_.forming.end(), true) == spec_.forming.end()) {
            throw ConfigError("network: islanded network has no voltage-forming element", "network.grid_breaker");
        }
        passive_bus_ = true;
    } else if (!spec_.grid_breaker_closed) {
        for (std::size_t k = 0; k < spec_.inverter_count; ++k) {
            if (spec_.forming[k]) {
                bus_former_ = k;
                roles_[k] = NodeRole::bus_former;
                break;
            }
        }
        if (!bus_former_) {
            throw ConfigError("network: islanded network has no voltage-forming element", "network.grid_breaker");
        }
    }
}

DqPair Network::grid_voltage(double grid_angle) const noexcept {
    return DqPair::from_complex(std::polar(spec_.grid.V_g, grid_angle));
}

NetworkSolution Network::solve(std::span<const InverterState> units, double grid_angle, double t,
                               LoadScale scale) const {
    if (units.size() != spec_.inverter_count) throw ContractViolation("network: unit count mismatch");
    NetworkSolution sol;
    sol.i_out.resize(units.size());

    Admittance y = load_admittance(spec_.loads, params_, t);
    y.G *= scale.G;
    y.B *= scale.B;
    DqPair line_sum;
    for (std::size_t k = 0; k < units.size(); ++k) {
        if (roles_[k] == NodeRole::line) {
            sol.i_out[k] = units[k].i_g;
            line_sum = line_sum + units[k].i_g;
        }
    }
    if (passive_bus_) {
        // i = (G - jB) v
        sol.v_bus = DqPair::from_complex(line_sum.as_complex() / std::complex<double>(y.G, -y.B));
        sol.i_load = line_sum;
        return sol;
    }

    sol.v_bus = bus_former_ ? units[*bus_former_].V_c : grid_voltage(grid_angle);
    sol.i_load = y.current(sol.v_bus);
    if (bus_former_) {
        // KCL at the bus: former supplies whatever the lines do not.
        sol.i_out[*bus_former_] = sol.i_load - line_sum;
    } else {
        sol.i_grid = line_sum - sol.i_load;
    }
    return sol;
}

}  // namespace mgsim::plant
