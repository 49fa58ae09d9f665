#pragma once

// Time-domain simulation of inverters meeting at one bus, held by the stiff
// grid or by the capacitor of the first voltage-forming unit. Plant states
// live in a global frame rotating at omega_0; each controller owns an angle
// relative to it. Plant and controllers advance together in one RK4 step.

#include "mgsim/control.hpp"
#include "mgsim/plant.hpp"
#include "mgsim/trace.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mgsim::sim {

struct UnitSpec {
    std::string name;
    control::UnitController controller;
    control::Setpoint setpoint;
    control::EpsilonProgram epsilon;  ///< only used by the frequency-shaped controller
};

struct SetpointEvent {
    double time = 0.0;
    std::size_t unit = 0;
    std::optional<double> P_0;
    std::optional<double> Q_0;
};

struct SimulationConfig {
    plant::PlantParams params;
    bool grid_connected = true;  ///< stiff grid holds the bus when true
    plant::IslandBus island_bus = plant::IslandBus::passive;  ///< used when islanded
    plant::GridState grid;
    std::vector<UnitSpec> units;
    std::vector<plant::LoadSpec> loads;
    std::vector<SetpointEvent> setpoint_events;
    double duration = 1.0;
    double dt = 50e-6;
    double warmup = 3.0;          ///< simulated before t = 0 with the initial setpoints
    double sample_period = 1e-3;  ///< trace decimation
    /// Exponential-recovery loads: impedance-like in transients, drawing their
    /// nominal power after this time constant. 0 keeps constant impedance.
    double load_recovery_time = 0.1;

    void validate() const;
};

/// State vector layout: kUnitStates per unit, the grid angle, then the two
/// load recovery multipliers (G, B).
inline constexpr std::size_t kPlantStates = 6;
inline constexpr std::size_t kUnitStates = kPlantStates + control::ControllerState::kSize;

struct UnitSnapshot {
    plant::InverterState plant;        ///< global frame
    control::ControllerState control;
    control::ControllerOutput output;  ///< evaluated at the snapshot
    plant::DqPair i_out;               ///< current leaving the capacitor, global frame
    double epsilon = 0.0;
};

struct Snapshot {
    double t = 0.0;
    std::vector<UnitSnapshot> units;
    plant::NetworkSolution network;
    double grid_angle = 0.0;
    double line_loss = 0.0;     ///< sum of 3/2 R_g |i_g|^2 [W]
    double line_storage = 0.0;  ///< d/dt of line inductor energy [W]
};

struct SimulationResult {
    trace::Trace trace;
    bool saturated = false;
    double wall_seconds = 0.0;
    std::vector<double> final_state;
};

class Simulator {
public:
    /// Throws ConfigError for inconsistent configurations.
    explicit Simulator(SimulationConfig config);

    [[nodiscard]] const SimulationConfig& config() const noexcept { return config_; }
    [[nodiscard]] const plant::Network& network() const noexcept { return network_; }
    [[nodiscard]] std::size_t dimension() const noexcept { return config_.units.size() * kUnitStates + 3; }

    /// Approximate load-flow equilibrium for the initial setpoints.
    [[nodiscard]] std::vector<double> initial_state() const;

    /// dx/dt at time t with setpoints as currently scheduled. Returns true if
    /// any modulation saturated.
    bool derivative(double t, std::span<const double> x, std::span<double> dx) const;

    [[nodiscard]] Snapshot snapshot(double t, std::span<const double> x) const;

    /// Warm-up, then [0, duration] recorded every sample_period. Throws
    /// ScenarioFailed naming the diverging signal.
    SimulationResult run();

    /// Column names of the trace produced by run().
    [[nodiscard]] std::vector<std::string> trace_columns() const;

private:
    void apply_setpoints(double t);
    std::vector<double> record_row(const Snapshot& s) const;
    [[noreturn]] void fail(double t, std::span<const double> x, const std::string& cause) const;

    SimulationConfig config_;
    plant::Network network_;
    std::vector<control::Setpoint> active_setpoints_;
    std::size_t next_event_ = 0;
    std::vector<SetpointEvent> events_;
};

}  // namespace mgsim::sim
