#pragma once

// Uniformly sampled, column-oriented simulation record plus the metric
// extractors applied to it (RoCoF, overshoot, settling).

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mgsim::trace {

class Trace {
public:
    Trace() = default;
    /// Column 0 is always "t".
    Trace(double sample_period, std::vector<std::string> columns);

    [[nodiscard]] double sample_period() const noexcept { return sample_period_; }
    [[nodiscard]] std::size_t rows() const noexcept { return data_.empty() ? 0 : data_.front().size(); }
    [[nodiscard]] const std::vector<std::string>& columns() const noexcept { return names_; }

    [[nodiscard]] bool has(std::string_view name) const noexcept;
    /// Throws ContractViolation for unknown columns.
    [[nodiscard]] std::size_t index(std::string_view name) const;
    [[nodiscard]] std::span<const double> column(std::string_view name) const;
    [[nodiscard]] std::span<const double> column(std::size_t index) const { return data_.at(index); }
    [[nodiscard]] std::span<const double> times() const { return data_.at(0); }

    /// One value per column, in column order.
    void append(std::span<const double> row);

    /// First row with t >= time (rows() if none).
    [[nodiscard]] std::size_t row_at(double time) const;

    /// Header row then fixed-decimal rows.
    void write_csv(std::ostream& out, int decimals = 6) const;

    friend bool operator==(const Trace&, const Trace&) = default;

private:
    double sample_period_ = 0.0;
    std::vector<std::string> names_;
    std::vector<std::vector<double>> data_;
};

/// gnuplot script plotting the named columns of `csv_name` against time, one panel each.
void write_gnuplot_script(std::ostream& out, const Trace& trace, std::string_view csv_name,
                          std::span<const std::string> columns);

struct RocofOptions {
    double cutoff_hz = 10.0;  ///< first-order post-filter corner
    double start_time = -1e300;  ///< ignore samples before this time
};

/// max |d(w/2pi)/dt| [Hz/s] of an angular-frequency series sampled every h
/// seconds: first-order low-pass (exact ZOH discretization), centered
/// differences, the first 5 filter time constants discarded. Throws
/// ContractViolation when the series is shorter than that warm-up.
double compute_rocof(std::span<const double> omega, double h, const RocofOptions& options = {});
double compute_rocof(const Trace& trace, std::string_view omega_column, const RocofOptions& options = {});

struct OvershootOptions {
    double settle_window = 0.2;  ///< trailing span used for the final value [s]
    /// Allowed peak-to-peak spread inside the settle window; <= 0 selects
    /// 1% of max(|y0|, |y_final|, |y_final - y0|).
    double settle_tolerance = 0.0;
};

struct Overshoot {
    double initial = 0.0;  ///< sample just before the event
    double final = 0.0;    ///< mean over the settle window
    double peak = 0.0;     ///< excursion outside [min(initial, final), max(initial, final)]
};

/// Overshoot of column `channel` over [t_start, t_end). Throws SettlingFailure
/// when the settle window is not flat to tolerance.
Overshoot compute_overshoot(const Trace& trace, std::string_view channel, double t_start, double t_end,
                            const OvershootOptions& options = {});
Overshoot compute_overshoot(std::span<const double> t, std::span<const double> y, double t_start, double t_end,
                            const OvershootOptions& options = {});

/// Time after t_start at which y enters and stays within `band` of `target`
/// until t_end (exclusive); -1 when it never settles in the window.
double settling_time(std::span<const double> t, std::span<const double> y, double t_start, double t_end,
                     double target, double band);

/// Mean of y over [t0, t1).
double window_mean(std::span<const double> t, std::span<const double> y, double t0, double t1);

}  // namespace mgsim::trace
