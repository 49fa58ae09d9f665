#pragma once

// Electrical side of the model: dq transforms, the switch-averaged inverter
// with its LC filter and line, constant-impedance loads, instantaneous power
// and the small-signal power-flow linearization.
//
// Conventions
//   * Amplitude-invariant dq: a balanced set of amplitude V aligned with the
//     frame angle maps to (d, q) = (V, 0).
//   * A dq pair is treated as the complex number d + jq. In a frame rotating
//     at w the inductor law reads L di/dt = v - R i - j w L i, which is the
//     "+ for d, - for q" cross-coupling of the averaged model.

#include <complex>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace mgsim::plant {

/// Filter, line and nominal grid constants.
struct PlantParams {
    double R_i = 0.2;        ///< filter resistance [ohm]
    double L_i = 3.3e-3;     ///< filter inductance [H]
    double C_i = 40e-6;      ///< filter capacitance [F]
    double R_g = 0.1;        ///< line resistance [ohm]
    double L_g = 1.86e-3;    ///< line inductance [H]
    double V_dc = 1000.0;    ///< DC link voltage [V]
    double V_0 = 391.0;      ///< nominal phase amplitude [V]
    double omega_0 = 2.0 * 3.14159265358979323846 * 60.0;  ///< nominal angular frequency [rad/s]

    /// |R_g + j w0 L_g|.
    [[nodiscard]] double line_impedance() const noexcept;
    /// arg(R_g + j w0 L_g).
    [[nodiscard]] double line_angle() const noexcept;
    /// Throws ContractViolation unless every constant is positive and finite.
    void validate() const;
};

struct DqPair {
    double d = 0.0;
    double q = 0.0;

    [[nodiscard]] std::complex<double> as_complex() const noexcept { return {d, q}; }
    static DqPair from_complex(std::complex<double> z) noexcept { return {z.real(), z.imag()}; }
    [[nodiscard]] double magnitude() const noexcept;
    /// Same vector expressed in a frame rotated by -angle (i.e. multiplied by e^{j angle}).
    [[nodiscard]] DqPair rotated(double angle) const noexcept;

    friend DqPair operator+(DqPair a, DqPair b) noexcept { return {a.d + b.d, a.q + b.q}; }
    friend DqPair operator-(DqPair a, DqPair b) noexcept { return {a.d - b.d, a.q - b.q}; }
    friend DqPair operator*(double k, DqPair a) noexcept { return {k * a.d, k * a.q}; }
    friend bool operator==(DqPair, DqPair) = default;
};

/// Filter inductor current, capacitor voltage and output current of one unit.
struct InverterState {
    DqPair i_L;
    DqPair V_c;
    DqPair i_g;
    double theta = 0.0;  ///< unwrapped frame angle [rad]

    [[nodiscard]] double theta_wrapped() const noexcept;
};

struct GridState {
    double V_g = 391.0;       ///< amplitude [V]
    double omega_g = 2.0 * 3.14159265358979323846 * 60.0;
    double theta_g = 0.0;
    double delta = 0.0;       ///< theta_c - theta_g [rad]
};

struct PowerPair {
    double P = 0.0;  ///< [W]
    double Q = 0.0;  ///< [VAR]
};

struct ThreePhase {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

DqPair abc_to_dq(double v_a, double v_b, double v_c, double theta) noexcept;
ThreePhase dq_to_abc(DqPair p, double theta) noexcept;

/// P = 3/2 (Vd id + Vq iq), Q = 3/2 (Vq id - Vd iq).
PowerPair power_from_dq(DqPair V_c, DqPair i_g) noexcept;

/// Magnitude-limited modulation index.
struct Modulation {
    DqPair m;
    bool saturated = false;
};

/// Scales m onto the unit disc when |m| > 1.
Modulation limit_modulation(DqPair m) noexcept;

/// Time derivatives of the LC filter given the current drawn from the
/// capacitor node.
struct FilterDerivative {
    DqPair di_L;
    DqPair dV_c;
    Modulation modulation;
};

FilterDerivative filter_derivatives(DqPair i_L, DqPair V_c, DqPair i_out, DqPair m,
                                    const PlantParams& params, double omega);

struct InverterDerivative {
    DqPair di_L;
    DqPair dV_c;
    DqPair di_g;
    Modulation modulation;
};

/// Filter plus the R_g-L_g line to a node held at v_pcc.
InverterDerivative inverter_derivatives(const InverterState& x, DqPair m, const PlantParams& params,
                                        double omega, DqPair v_pcc);

/// Linearized (purely inductive) power flow around delta=0, V_c=V_g:
/// P = V0^2 delta / Z, Q = V0 (V_c - V_g) / Z.
PowerPair linearized_power_flow(double V_c, double delta, const PlantParams& params,
                                double V_g = std::numeric_limits<double>::quiet_NaN());

/// Exact phasor power flow S = V_c e^{j delta} conj((V_c e^{j delta} - V_g) / Z e^{j phi}).
PowerPair exact_power_flow(double V_c, double delta, double V_g, const PlantParams& params);

/// Linearization is considered valid below this angle [rad].
inline constexpr double kLinearizationDeltaLimit = 0.3;

enum class LoadActivation { step, ramp };

/// Constant-impedance load sized from (P, Q) at the nominal voltage.
struct LoadSpec {
    double P_load = 0.0;  ///< [W]
    double Q_load = 0.0;  ///< [VAR], positive inductive
    LoadActivation activation = LoadActivation::step;
    double start = -std::numeric_limits<double>::infinity();
    double ramp_duration = 0.0;

    void validate() const;
    /// Fraction of the load connected at time t, in [0, 1].
    [[nodiscard]] double fraction(double t) const noexcept;
};

/// Parallel conductance/susceptance; current i = (G - jB) v.
struct Admittance {
    double G = 0.0;
    double B = 0.0;

    [[nodiscard]] DqPair current(DqPair v) const noexcept { return {G * v.d + B * v.q, G * v.q - B * v.d}; }
};

Admittance load_admittance(std::span<const LoadSpec> loads, const PlantParams& params, double t) noexcept;

/// Multipliers on the nominal load admittance, carried by dynamic load models.
struct LoadScale {
    double G = 1.0;
    double B = 1.0;
};

enum class NodeRole {
    line,         ///< connects to the common bus through a dynamic R_g-L_g line
    bus_former,   ///< its capacitor is the common bus
};

/// How an islanded bus gets its voltage.
enum class IslandBus {
    former,   ///< capacitor of the first voltage-forming unit
    passive,  ///< every unit on a line; v_bus = sum of line currents / load admittance
};

/// Microgrid topology: every unit meets at one bus, held by the stiff grid
/// (breaker closed) or, when islanded, as selected by `island_bus`.
struct NetworkSpec {
    std::size_t inverter_count = 0;
    std::vector<bool> forming;           ///< per inverter: is a voltage-forming controller
    bool grid_breaker_closed = false;
    IslandBus island_bus = IslandBus::former;
    GridState grid;
    std::vector<LoadSpec> loads;
};

struct NetworkSolution {
    DqPair v_bus;
    std::vector<DqPair> i_out;  ///< current leaving each capacitor node
    DqPair i_load;
    DqPair i_grid;              ///< current delivered into the stiff grid (0 when islanded)
};

class Network {
public:
    /// Throws ConfigError for an islanded network with no forming element.
    Network(NetworkSpec spec, PlantParams params);

    [[nodiscard]] const NetworkSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const PlantParams& params() const noexcept { return params_; }
    [[nodiscard]] NodeRole role(std::size_t inverter) const noexcept { return roles_[inverter]; }
    [[nodiscard]] std::optional<std::size_t> bus_former() const noexcept { return bus_former_; }
    [[nodiscard]] bool passive_bus() const noexcept { return passive_bus_; }

    /// Grid voltage in the global frame for a grid angle offset.
    [[nodiscard]] DqPair grid_voltage(double grid_angle) const noexcept;

    /// Quasi-static bus solve: all states in the global frame.
    [[nodiscard]] NetworkSolution solve(std::span<const InverterState> units, double grid_angle, double t,
                                        LoadScale scale = {}) const;

private:
    NetworkSpec spec_;
    PlantParams params_;
    std::vector<NodeRole> roles_;
    std::optional<std::size_t> bus_former_;
    bool passive_bus_ = false;
};

}  // namespace mgsim::plant
