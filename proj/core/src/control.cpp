#include "mgsim/control.hpp"

#include "mgsim/errors.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace mgsim::control {

namespace {

using Cplx = std::complex<double>;

template <std::size_t N, class Rates>
void rk4_block(std::array<double, N>& x, Rates&& rates, double dt) {
    auto axpy = [](const std::array<double, N>& a, const std::array<double, N>& k, double h) {
        std::array<double, N> r{};
        for (std::size_t i = 0; i < N; ++i) r[i] = a[i] + h * k[i];
        return r;
    };
    const auto k1 = rates(x);
    const auto k2 = rates(axpy(x, k1, 0.5 * dt));
    const auto k3 = rates(axpy(x, k2, 0.5 * dt));
    const auto k4 = rates(axpy(x, k3, dt));
    for (std::size_t i = 0; i < N; ++i) x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

void require_positive_dt(double dt) {
    if (!(dt > 0.0)) throw ContractViolation("controller step: dt must be positive");
}

std::string gain_message(const char* channel, double ratio, double omega_lpf) {
    std::ostringstream os;
    os << "ProposedConfig: " << channel << " integral/proportional ratio " << ratio
       << " exceeds omega_lpf = " << omega_lpf << " (require k_i/k_p <= omega_lpf)";
    return os.str();
}

}  // namespace

void InnerLoopConfig::validate() const {
    if (!(tau_c > 0.0)) throw ConfigError("inner loop: tau_c must be positive", "control.tau_c");
    if (k_pV < 0.0 || k_iV < 0.0) throw ConfigError("inner loop: voltage gains must be non-negative", "control.k_pV");
    if (g_damp < 0.0 || !(omega_damp > 0.0)) {
        throw ConfigError("inner loop: damping conductance must be >= 0 with a positive corner", "control.g_damp");
    }
}

void PllConfig::validate() const {
    if (k_p < 0.0 || k_i < 0.0 || (k_p == 0.0 && k_i == 0.0)) {
        throw ConfigError("PLL: gains must be non-negative and not both zero", "control.pll_kp");
    }
}

void DroopConfig::validate() const {
    if (!(k_p > 0.0) || !(k_q > 0.0) || !(omega_lpf > 0.0)) {
        throw ConfigError("droop: k_p, k_q and omega_lpf must be positive", "gfm.k_p");
    }
}

ProposedConfig::ProposedConfig(double k_pP, double k_iP, double k_pQ, double k_iQ, double omega_lpf)
    : k_pP_(k_pP), k_iP_(k_iP), k_pQ_(k_pQ), k_iQ_(k_iQ), omega_lpf_(omega_lpf) {
    if (!(k_pP > 0.0) || !(k_iP > 0.0) || !(k_pQ > 0.0) || !(k_iQ > 0.0) || !(omega_lpf > 0.0)) {
        throw ConfigError("ProposedConfig: all gains and omega_lpf must be positive", "control.kpP");
    }
    // Allow one ulp of slack so k_iQ = omega_lpf * k_pQ is accepted.
    const double slack = 1.0 + 1e-12;
    if (k_iP / k_pP > omega_lpf * slack) throw ConfigError(gain_message("active", k_iP / k_pP, omega_lpf), "control.kiP");
    if (k_iQ / k_pQ > omega_lpf * slack) throw ConfigError(gain_message("reactive", k_iQ / k_pQ, omega_lpf), "control.kiQ");
}

ProposedConfig ProposedConfig::default_gains(double omega_lpf) {
    constexpr double k_pP = 0.2e-3;  // 0.2 rad/(s kW)
    constexpr double k_pQ = 0.2e-3;  // 0.2 V/kVAR
    return {k_pP, 0.1 * omega_lpf * k_pP, k_pQ, omega_lpf * k_pQ, omega_lpf};
}

void TransitionSchedule::validate() const {
    if (direction == TransitionDirection::gfl_to_gfm) {
        if (!(eps_max > 0.0)) throw ConfigError("transition: eps_max must be positive", "transition.eps_max");
        if (shape != RampShape::jump && !(ramp_rate > 0.0)) {
            throw ConfigError("transition: ramp rate must be positive", "transition.eps_rate");
        }
    } else if (eps_max < 0.0) {
        throw ConfigError("transition: eps_max must be non-negative", "transition.eps_max");
    }
}

double TransitionSchedule::ramp_duration() const noexcept {
    if (direction == TransitionDirection::gfm_to_gfl || shape == RampShape::jump) return 0.0;
    return eps_max / ramp_rate;
}

double epsilon_at(double t, const TransitionSchedule& s) noexcept {
    if (s.direction == TransitionDirection::gfm_to_gfl) return t < s.start ? s.eps_max : 0.0;
    if (t < s.start) return 0.0;
    const double elapsed = t - s.start;
    switch (s.shape) {
        case RampShape::jump:
            return s.eps_max;
        case RampShape::linear:
            return std::min(s.ramp_rate * elapsed, s.eps_max);
        case RampShape::smoothstep: {
            const double u = std::min(elapsed / s.ramp_duration(), 1.0);
            return s.eps_max * u * u * (3.0 - 2.0 * u);
        }
    }
    return 0.0;
}

EpsilonProgram::EpsilonProgram(std::vector<TransitionSchedule> schedules, double initial)
    : schedules_(std::move(schedules)), initial_(initial) {
    for (std::size_t i = 0; i < schedules_.size(); ++i) {
        schedules_[i].validate();
        if (i > 0 && schedules_[i].start < schedules_[i - 1].start) {
            throw ConfigError("transition schedules must be time-ordered", "events");
        }
    }
}

double EpsilonProgram::at(double t) const noexcept {
    const TransitionSchedule* active = nullptr;
    for (const auto& s : schedules_) {
        if (s.start <= t) active = &s;
    }
    return active ? epsilon_at(t, *active) : initial_;
}

void Setpoint::validate() const {
    if (!(V_0 > 0.0) || !(omega_0 > 0.0)) throw ConfigError("setpoint: V_0 and omega_0 must be positive", "setpoint.V0");
}

// --- PLL -------------------------------------------------------------------

double pll_frequency(const PllState& s, const PllConfig& cfg, double V_q, double omega_0) noexcept {
    return omega_0 + cfg.k_p * V_q + s.integrator;
}

PllOutput pll_step(PllState& state, const PllConfig& cfg, double V_q, double omega_0, double dt) {
    require_positive_dt(dt);
    std::array<double, 2> x{state.integrator, state.theta};
    rk4_block(x, [&](const std::array<double, 2>& v) {
        return std::array<double, 2>{cfg.k_i * V_q, omega_0 + cfg.k_p * V_q + v[0]};
    }, dt);
    state.integrator = x[0];
    state.theta = x[1];
    return {pll_frequency(state, cfg, V_q, omega_0), state.theta};
}

// --- Inner loops -----------------------------------------------------------

CurrentLoopOutput current_control(DqPair i_L_ref, DqPair i_L, DqPair V_c, DqPair integrator,
                                  const InnerLoopConfig& cfg, const PlantParams& params, double omega_0) noexcept {
    const DqPair err = i_L_ref - i_L;
    const Cplx u = (params.L_i / cfg.tau_c) * err.as_complex() + integrator.as_complex();
    const Cplx decouple = Cplx{0.0, omega_0 * params.L_i} * i_L.as_complex();
    const Cplx m = (u + decouple + V_c.as_complex()) / (0.5 * params.V_dc);
    return {plant::limit_modulation(DqPair::from_complex(m)), (params.R_i / cfg.tau_c) * err};
}

VoltageLoopOutput voltage_control(DqPair V_c_ref, DqPair V_c, DqPair i_g, DqPair integrator,
                                  const InnerLoopConfig& cfg, const PlantParams& params, double omega_0) noexcept {
    const DqPair err = V_c_ref - V_c;
    const Cplx decouple = Cplx{0.0, omega_0 * params.C_i} * V_c.as_complex();
    const Cplx ref = cfg.k_pV * err.as_complex() + integrator.as_complex() + decouple + i_g.as_complex();
    return {DqPair::from_complex(ref), cfg.k_iV * err};
}

// --- Power measurement -----------------------------------------------------

PowerPair power_measurement(DqPair V_c, DqPair i_g, double omega_lpf, PowerFilterState& state, double dt) {
    require_positive_dt(dt);
    const PowerPair p = plant::power_from_dq(V_c, i_g);
    // Exact zero-order-hold discretization of w/(s+w).
    const double a = -std::expm1(-omega_lpf * dt);
    state.P += a * (p.P - state.P);
    state.Q += a * (p.Q - state.Q);
    return {state.P, state.Q};
}

// --- Conventional GFL ------------------------------------------------------

DqPair gfl_current_reference(const Setpoint& sp) noexcept {
    return {2.0 * sp.P_0 / (3.0 * sp.V_0), -2.0 * sp.Q_0 / (3.0 * sp.V_0)};
}

ConventionalGflOutput gfl_conventional_step(PllState& pll, const PllConfig& cfg, const Setpoint& sp,
                                            DqPair V_c, const PlantParams& params, double dt) {
    const PllOutput f = pll_step(pll, cfg, V_c.q, sp.omega_0, dt);
    const Cplx ref = gfl_current_reference(sp).as_complex() + Cplx{0.0, sp.omega_0 * params.C_i} * V_c.as_complex();
    return {DqPair::from_complex(ref), f.omega};
}

// --- Droop and the proposed controller ---------------------------------------

FrequencyVoltageCommand gfm_droop_step(PowerFilterState& state, const DroopConfig& cfg, const Setpoint& sp,
                                       double P, double Q, double dt) {
    require_positive_dt(dt);
    const double a = -std::expm1(-cfg.omega_lpf * dt);
    state.P += a * (P - state.P);
    state.Q += a * (Q - state.Q);
    return {sp.omega_0 + cfg.k_p * (sp.P_0 - state.P), sp.V_0 + cfg.k_q * (sp.Q_0 - state.Q)};
}

FrequencyVoltageCommand proposed_command(const ProposedState& s, const ProposedConfig& cfg,
                                         const Setpoint& sp) noexcept {
    const double e_P = sp.P_0 - s.filter.P;
    const double e_Q = sp.Q_0 - s.filter.Q;
    return {sp.omega_0 + cfg.k_pP() * e_P + s.z_P, sp.V_0 + cfg.k_pQ() * e_Q + s.z_Q};
}

ProposedState proposed_rates(const ProposedState& s, const ProposedConfig& cfg, const Setpoint& sp, double P,
                             double Q, double eps_P, double eps_Q, bool freeze_integrators) noexcept {
    ProposedState r;
    r.filter.P = cfg.omega_lpf() * (P - s.filter.P);
    r.filter.Q = cfg.omega_lpf() * (Q - s.filter.Q);
    if (!freeze_integrators) {
        r.z_P = -eps_P * s.z_P + cfg.k_iP() * (sp.P_0 - s.filter.P);
        r.z_Q = -eps_Q * s.z_Q + cfg.k_iQ() * (sp.Q_0 - s.filter.Q);
    }
    return r;
}

FrequencyVoltageCommand gfl_proposed_step(ProposedState& state, const ProposedConfig& cfg, const Setpoint& sp,
                                          double P, double Q, double eps_P, double eps_Q, double dt) {
    require_positive_dt(dt);
    std::array<double, 4> x{state.filter.P, state.filter.Q, state.z_P, state.z_Q};
    rk4_block(x, [&](const std::array<double, 4>& v) {
        const ProposedState s{{v[0], v[1]}, v[2], v[3]};
        const ProposedState r = proposed_rates(s, cfg, sp, P, Q, eps_P, eps_Q);
        return std::array<double, 4>{r.filter.P, r.filter.Q, r.z_P, r.z_Q};
    }, dt);
    state = {{x[0], x[1]}, x[2], x[3]};
    return proposed_command(state, cfg, sp);
}

// --- Composite unit controller ---------------------------------------------

const char* to_string(ControllerKind kind) noexcept {
    switch (kind) {
        case ControllerKind::conventional_gfl: return "conventional";
        case ControllerKind::gfm_droop: return "gfm";
        case ControllerKind::proposed_gfl: return "proposed";
    }
    return "unknown";
}

void ControllerState::pack(std::span<double> out) const noexcept {
    out[0] = angle;
    out[1] = pll.integrator;
    out[2] = pll.theta;
    out[3] = current_integrator.d;
    out[4] = current_integrator.q;
    out[5] = voltage_integrator.d;
    out[6] = voltage_integrator.q;
    out[7] = damping_filter.d;
    out[8] = damping_filter.q;
    out[9] = proposed.filter.P;
    out[10] = proposed.filter.Q;
    out[11] = proposed.z_P;
    out[12] = proposed.z_Q;
}

ControllerState ControllerState::unpack(std::span<const double> in) noexcept {
    ControllerState s;
    s.angle = in[0];
    s.pll = {in[1], in[2]};
    s.current_integrator = {in[3], in[4]};
    s.voltage_integrator = {in[5], in[6]};
    s.damping_filter = {in[7], in[8]};
    s.proposed = {{in[9], in[10]}, in[11], in[12]};
    return s;
}

ControllerOutput UnitController::evaluate(const ControllerState& s, const Measurements& m, const Setpoint& sp,
                                          double eps_P, double eps_Q, const PlantParams& params) const {
    ControllerOutput out;
    out.power = plant::power_from_dq(m.V_c, m.i_out);
    out.filtered_power = {s.proposed.filter.P, s.proposed.filter.Q};
    const double w0 = sp.omega_0;

    DqPair i_L_ref;
    if (kind == ControllerKind::conventional_gfl) {
        out.omega = pll_frequency(s.pll, pll, m.V_c.q, w0);
        out.V_ref = m.V_c.magnitude();
        out.rates.pll.integrator = pll.k_i * m.V_c.q;
        out.rates.pll.theta = out.omega;
        const Cplx ref = gfl_current_reference(sp).as_complex() + Cplx{0.0, w0 * params.C_i} * m.V_c.as_complex();
        const DqPair v_high = m.V_c - s.damping_filter;
        i_L_ref = DqPair::from_complex(ref) - inner.g_damp * v_high;
        out.rates.damping_filter = inner.omega_damp * v_high;
        // Measurement-only filter so every unit reports filtered power.
        out.rates.proposed.filter.P = droop.omega_lpf * (out.power.P - s.proposed.filter.P);
        out.rates.proposed.filter.Q = droop.omega_lpf * (out.power.Q - s.proposed.filter.Q);
    } else {
        FrequencyVoltageCommand cmd;
        if (kind == ControllerKind::gfm_droop) {
            cmd = {w0 + droop.k_p * (sp.P_0 - s.proposed.filter.P), sp.V_0 + droop.k_q * (sp.Q_0 - s.proposed.filter.Q)};
            out.rates.proposed.filter.P = droop.omega_lpf * (out.power.P - s.proposed.filter.P);
            out.rates.proposed.filter.Q = droop.omega_lpf * (out.power.Q - s.proposed.filter.Q);
        } else {
            cmd = proposed_command(s.proposed, proposed, sp);
        }
        out.omega = cmd.omega;
        out.V_ref = cmd.V_ref;
        const VoltageLoopOutput v = voltage_control({cmd.V_ref, 0.0}, m.V_c, m.i_out, s.voltage_integrator, inner, params, w0);
        i_L_ref = v.i_L_ref;
        out.rates.voltage_integrator = v.integrator_rate;
    }

    const CurrentLoopOutput c = current_control(i_L_ref, m.i_L, m.V_c, s.current_integrator, inner, params, w0);
    out.modulation = c.modulation;
    out.rates.current_integrator = c.integrator_rate;
    out.rates.angle = out.omega - w0;

    if (kind == ControllerKind::proposed_gfl) {
        out.rates.proposed = proposed_rates(s.proposed, proposed, sp, out.power.P, out.power.Q, eps_P, eps_Q,
                                            c.modulation.saturated);
    }
    return out;
}

}  // namespace mgsim::control
