#pragma once

// Inverter controllers: PLL, inner current/voltage loops, conventional
// grid-following control, P-f / Q-V droop, the frequency-shaped
// grid-following controller, power filtering and the epsilon scheduler.
//
// Each block is written in continuous time as (state, inputs) -> (outputs,
// state rates) so the simulator can integrate plant and controllers in one
// RK4 step. The *_step helpers advance a single block with its inputs held
// over dt, which is what the unit tests exercise directly.
//
// All dq quantities here are in the controller's own rotating frame.

#include "mgsim/plant.hpp"

#include <numbers>
#include <span>
#include <vector>

namespace mgsim::control {

using plant::DqPair;
using plant::PlantParams;
using plant::PowerPair;

/// K_c = (L_i s + R_i)/(tau_c s) and K_v = k_pV + k_iV/s.
///
/// Grid-following units without a voltage loop add a virtual conductance
/// g_damp on the high-passed capacitor voltage (corner omega_damp). It has no
/// DC effect and damps the C_i - L_g resonance that the current-loop lag
/// otherwise drives unstable against a stiff grid.
struct InnerLoopConfig {
    double tau_c = 1e-4;       ///< current loop time constant [s]
    double k_pV = 0.4;         ///< [A/V]; stiff enough to damp the C_i - L_g resonance
    double k_iV = 8.0;         ///< [A/(V s)]; PI zero at 20 rad/s
    double g_damp = 0.1;       ///< [S]
    double omega_damp = 500.0; ///< [rad/s]
    void validate() const;
};

/// PI on V_c^q. Defaults give wn = 150 rad/s, zeta = 0.707 at V = 391 V:
/// well below the 10^4 rad/s current loop and above the droop filter.
struct PllConfig {
    double k_p = 0.5425;  ///< [(rad/s)/V]
    double k_i = 57.54;   ///< [(rad/s)/(V s)]
    void validate() const;
};

/// omega = omega_0 + k_p LPF (P_0 - P), V_ref = V_0 + k_q LPF (Q_0 - Q).
struct DroopConfig {
    double k_p = 2e-4;  ///< [(rad/s)/W] = 0.2 rad/(s kW)
    double k_q = 2e-4;  ///< [V/VAR] = 0.2 V/kVAR
    double omega_lpf = 20.0 * std::numbers::pi;
    void validate() const;
};

/// Gains of [k_pP + k_iP/(s+eps_P), k_pQ + k_iQ/(s+eps_Q)] * w_lpf/(s+w_lpf).
/// Construction enforces k_i/k_p <= w_lpf on both channels.
class ProposedConfig {
public:
    ProposedConfig(double k_pP, double k_iP, double k_pQ, double k_iQ, double omega_lpf);

    /// k_pP = 0.2 rad/(s kW), k_iP = 0.1 w k_pP, k_pQ = 0.2 V/kVAR, k_iQ = w k_pQ.
    static ProposedConfig default_gains(double omega_lpf);

    [[nodiscard]] double k_pP() const noexcept { return k_pP_; }
    [[nodiscard]] double k_iP() const noexcept { return k_iP_; }
    [[nodiscard]] double k_pQ() const noexcept { return k_pQ_; }
    [[nodiscard]] double k_iQ() const noexcept { return k_iQ_; }
    [[nodiscard]] double omega_lpf() const noexcept { return omega_lpf_; }

    /// w_lpf - k_iP/k_pP; positive means the eps=0 active loop is stable.
    [[nodiscard]] double active_condition_margin() const noexcept { return omega_lpf_ - k_iP_ / k_pP_; }

private:
    double k_pP_;
    double k_iP_;
    double k_pQ_;
    double k_iQ_;
    double omega_lpf_;
};

enum class TransitionDirection { gfl_to_gfm, gfm_to_gfl };
enum class RampShape { linear, smoothstep, jump };

struct TransitionSchedule {
    TransitionDirection direction = TransitionDirection::gfl_to_gfm;
    double start = 0.0;        ///< [s]
    double ramp_rate = 100.0;  ///< [1/s^2]
    double eps_max = 200.0;    ///< [1/s]
    RampShape shape = RampShape::linear;

    void validate() const;
    /// Time to reach eps_max for gfl_to_gfm ramps; 0 for jumps.
    [[nodiscard]] double ramp_duration() const noexcept;
};

/// eps(t) for one schedule: 0 before a GFL->GFM start, eps_max before a
/// GFM->GFL start (which then drops to 0).
double epsilon_at(double t, const TransitionSchedule& schedule) noexcept;

/// Ordered list of transitions; the latest one that has started wins.
class EpsilonProgram {
public:
    EpsilonProgram() = default;
    explicit EpsilonProgram(std::vector<TransitionSchedule> schedules, double initial = 0.0);

    [[nodiscard]] double at(double t) const noexcept;
    [[nodiscard]] const std::vector<TransitionSchedule>& schedules() const noexcept { return schedules_; }

private:
    std::vector<TransitionSchedule> schedules_;
    double initial_ = 0.0;
};

struct Setpoint {
    double P_0 = 10e3;
    double Q_0 = 0.0;
    double V_0 = 391.0;
    double omega_0 = 2.0 * std::numbers::pi * 60.0;
    void validate() const;
};

// --- PLL -------------------------------------------------------------------

struct PllState {
    double integrator = 0.0;  ///< [rad/s]
    double theta = 0.0;       ///< [rad]
};

struct PllOutput {
    double omega = 0.0;
    double theta = 0.0;
};

[[nodiscard]] double pll_frequency(const PllState& s, const PllConfig& cfg, double V_q, double omega_0) noexcept;

/// Advances the PLL with V_q held over dt.
PllOutput pll_step(PllState& state, const PllConfig& cfg, double V_q, double omega_0, double dt);

// --- Inner loops -----------------------------------------------------------

struct CurrentLoopOutput {
    plant::Modulation modulation;
    DqPair integrator_rate;
};

/// m = (K_c (i_ref - i_L) + j w0 L_i i_L + V_c)/(V_dc/2), magnitude-limited.
/// `integrator` is the R_i/tau_c state of K_c.
CurrentLoopOutput current_control(DqPair i_L_ref, DqPair i_L, DqPair V_c, DqPair integrator,
                                  const InnerLoopConfig& cfg, const PlantParams& params, double omega_0) noexcept;

struct VoltageLoopOutput {
    DqPair i_L_ref;
    DqPair integrator_rate;
};

/// i_L,ref = K_v (V_ref - V_c) + j w0 C_i V_c + i_g.
VoltageLoopOutput voltage_control(DqPair V_c_ref, DqPair V_c, DqPair i_g, DqPair integrator,
                                  const InnerLoopConfig& cfg, const PlantParams& params, double omega_0) noexcept;

// --- Power measurement -----------------------------------------------------

struct PowerFilterState {
    double P = 0.0;
    double Q = 0.0;
};

/// First-order low-pass of instantaneous power; advances state over dt and
/// returns the filtered pair.
PowerPair power_measurement(DqPair V_c, DqPair i_g, double omega_lpf, PowerFilterState& state, double dt);

// --- Conventional GFL ------------------------------------------------------

/// i_g,ref = (2 P_0/(3 V_0), -2 Q_0/(3 V_0)).
DqPair gfl_current_reference(const Setpoint& sp) noexcept;

struct ConventionalGflOutput {
    DqPair i_L_ref;
    double omega = 0.0;
};

/// i_L,ref = i_g,ref + j w0 C_i V_c, frequency from the PLL on V_c^q.
ConventionalGflOutput gfl_conventional_step(PllState& pll, const PllConfig& cfg, const Setpoint& sp,
                                            DqPair V_c, const PlantParams& params, double dt);

// --- Droop and the proposed controller ---------------------------------------

struct FrequencyVoltageCommand {
    double omega = 0.0;
    double V_ref = 0.0;
};

/// Filtered droop; P and Q are instantaneous and filtered inside.
FrequencyVoltageCommand gfm_droop_step(PowerFilterState& state, const DroopConfig& cfg, const Setpoint& sp,
                                       double P, double Q, double dt);

struct ProposedState {
    PowerFilterState filter;
    double z_P = 0.0;  ///< output of k_iP/(s+eps_P) [rad/s]
    double z_Q = 0.0;  ///< output of k_iQ/(s+eps_Q) [V]
};

[[nodiscard]] FrequencyVoltageCommand proposed_command(const ProposedState& s, const ProposedConfig& cfg,
                                                       const Setpoint& sp) noexcept;

/// State rates of the proposed controller. With `freeze_integrators` the
/// z states hold (anti-windup while modulation saturates).
[[nodiscard]] ProposedState proposed_rates(const ProposedState& s, const ProposedConfig& cfg, const Setpoint& sp,
                                           double P, double Q, double eps_P, double eps_Q,
                                           bool freeze_integrators = false) noexcept;

FrequencyVoltageCommand gfl_proposed_step(ProposedState& state, const ProposedConfig& cfg, const Setpoint& sp,
                                          double P, double Q, double eps_P, double eps_Q, double dt);

// --- Composite unit controller used by the simulator -------------------------

enum class ControllerKind { conventional_gfl, gfm_droop, proposed_gfl };

const char* to_string(ControllerKind kind) noexcept;

/// Flat controller state. `angle` is the frame angle relative to a frame
/// rotating at omega_0.
struct ControllerState {
    double angle = 0.0;
    PllState pll;
    DqPair current_integrator;
    DqPair voltage_integrator;
    DqPair damping_filter;   ///< low-passed V_c for the virtual conductance
    ProposedState proposed;  ///< droop units use only the filter part

    static constexpr std::size_t kSize = 13;
    void pack(std::span<double> out) const noexcept;
    static ControllerState unpack(std::span<const double> in) noexcept;
};

/// Measured quantities in the controller frame.
struct Measurements {
    DqPair i_L;
    DqPair V_c;
    DqPair i_out;
};

struct ControllerOutput {
    plant::Modulation modulation;
    double omega = 0.0;
    double V_ref = 0.0;
    PowerPair power;           ///< instantaneous
    PowerPair filtered_power;  ///< the LPF state seen by the outer loop
    ControllerState rates;
};

struct UnitController {
    ControllerKind kind = ControllerKind::proposed_gfl;
    InnerLoopConfig inner;
    PllConfig pll;
    DroopConfig droop;
    ProposedConfig proposed = ProposedConfig::default_gains(20.0 * std::numbers::pi);

    [[nodiscard]] bool forms_voltage() const noexcept { return kind != ControllerKind::conventional_gfl; }

    [[nodiscard]] ControllerOutput evaluate(const ControllerState& s, const Measurements& m, const Setpoint& sp,
                                            double eps_P, double eps_Q, const PlantParams& params) const;
};

}  // namespace mgsim::control
