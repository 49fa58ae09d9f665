#pragma once

// Experiment harness: scenario definitions (from config text or the built-in
// set), metric extraction and the standard experiment sweeps.

#include "mgsim/config.hpp"
#include "mgsim/simulation.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace mgsim::scenarios {

enum class Kind { power_tracking, load_step, load_ramp, transition, custom };
enum class Topology { stiff_grid, microgrid };
enum class TransitionMethod { smooth, sudden };

const char* to_string(Kind kind) noexcept;
const char* to_string(TransitionMethod method) noexcept;

/// Times the metric extractors care about, in scenario time.
struct Timeline {
    std::vector<double> setpoint_times;
    double load_event = -1.0;     ///< start of the load step or ramp
    double ramp_duration = 0.0;
    double to_forming = -1.0;     ///< GFL -> GFM transition start
    double to_following = -1.0;   ///< GFM -> GFL transition start
};

struct Scenario {
    std::string name;
    Kind kind = Kind::custom;
    Topology topology = Topology::stiff_grid;
    sim::SimulationConfig simulation;
    std::string unit_under_test = "gfl";
    std::string forming_unit;  ///< empty on the stiff grid
    Timeline timeline;
};

/// Builds a scenario; throws ConfigError naming the key and line.
Scenario from_config(const config::Document& doc);

/// Names of the built-in scenarios ("power_tracking", ...).
std::vector<std::string> builtin_names();
/// Config text of a built-in scenario. Throws ConfigError for unknown names.
std::string_view builtin_text(std::string_view name);
/// Parses a built-in and applies dotted overrides.
Scenario builtin(std::string_view name, const std::vector<std::string>& overrides = {});

struct Metrics {
    double rocof_max = 0.0;               ///< [Hz/s], frequency of the grid-defining unit
    double overshoot_P = 0.0;             ///< [W]
    double overshoot_Q = 0.0;             ///< [VAR]
    double steady_state_error_P = 0.0;    ///< relative, worst event window
    double steady_state_error_Q = 0.0;
    double settling_time = 0.0;           ///< [s], worst event window, 1% band
    double return_leg_deviation_P = 0.0;  ///< [W], GFM -> GFL leg excursion
    double ramp_deviation_P = 0.0;        ///< relative |P - P_0|/P_0 of the unit under test during the ramp
    double forming_power_rise = 0.0;      ///< [W] across the load event
    double power_balance_error = 0.0;     ///< relative to the load, worst sample
    bool saturated = false;
    double wall_seconds = 0.0;
};

struct Result {
    Scenario scenario;
    sim::SimulationResult simulation;
    Metrics metrics;
};

/// Relative steady-state error with the zero-setpoint floor: |y - r| / max(|r|, floor).
inline constexpr double kTrackingFloor = 10e3;

Metrics compute_metrics(const Scenario& scenario, const trace::Trace& trace);

/// Runs one scenario. ScenarioFailed propagates.
Result run(const Scenario& scenario);

/// Runs scenarios on up to `jobs` threads; results keep input order. The
/// first failure is rethrown after all workers stop.
std::vector<Result> run_parallel(const std::vector<Scenario>& scenarios, unsigned jobs);

/// Stiff-grid tracking of the setpoint sequence for each filter bandwidth.
std::vector<Result> run_power_tracking(std::span<const double> omega_lpf, unsigned jobs = 1);
/// Conventional baseline on the same events.
Result run_power_tracking_conventional();
/// Load step in the microgrid: conventional first, then one result per bandwidth.
std::vector<Result> run_fast_load_step(std::span<const double> omega_lpf, unsigned jobs = 1);
Result run_slow_load_ramp();
Result run_transition(TransitionMethod method);

/// Formats metrics as "key = value" lines.
std::string format_metrics(const Result& result);

}  // namespace mgsim::scenarios
