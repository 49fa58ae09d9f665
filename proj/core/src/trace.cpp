#include "mgsim/trace.hpp"

#include "mgsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace mgsim::trace {

Trace::Trace(double sample_period, std::vector<std::string> columns)
    : sample_period_(sample_period), names_(std::move(columns)) {
    if (!(sample_period > 0.0)) throw ContractViolation("Trace: sample period must be positive");
    if (names_.empty() || names_.front() != "t") throw ContractViolation("Trace: first column must be \"t\"");
    for (std::size_t i = 0; i < names_.size(); ++i)
        for (std::size_t j = i + 1; j < names_.size(); ++j)
            if (names_[i] == names_[j]) throw ContractViolation("Trace: duplicate column " + names_[i]);
    data_.resize(names_.size());
}

bool Trace::has(std::string_view name) const noexcept {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t Trace::index(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ContractViolation("Trace: no column named " + std::string(name));
    return static_cast<std::size_t>(it - names_.begin());
}

std::span<const double> Trace::column(std::string_view name) const { return data_[index(name)]; }

void Trace::append(std::span<const double> row) {
    if (row.size() != names_.size()) throw ContractViolation("Trace: row width does not match the column count");
    for (std::size_t i = 0; i < row.size(); ++i) data_[i].push_back(row[i]);
}

std::size_t Trace::row_at(double time) const {
    const auto& t = data_.front();
    return static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), time - 1e-9 * sample_period_) - t.begin());
}

void Trace::write_csv(std::ostream& out, int decimals) const {
    for (std::size_t c = 0; c < names_.size(); ++c) out << (c ? "," : "") << names_[c];
    out << '\n';
    const auto flags = out.flags();
    const auto precision = out.precision();
    out.setf(std::ios::fixed, std::ios::floatfield);
    out.precision(decimals);
    for (std::size_t r = 0; r < rows(); ++r) {
        for (std::size_t c = 0; c < names_.size(); ++c) {
            const double v = data_[c][r];
            // Keep "-0.000000" out of the file so identical runs diff cleanly.
            out << (c ? "," : "") << (v == 0.0 ? 0.0 : v);
        }
        out << '\n';
    }
    out.flags(flags);
    out.precision(precision);
}

void write_gnuplot_script(std::ostream& out, const Trace& trace, std::string_view csv_name,
                          std::span<const std::string> columns) {
    out << "# gnuplot script; run with: gnuplot -p <this file>\n"
        << "set datafile separator ','\n"
        << "set key autotitle columnhead\n"
        << "set grid\n"
        << "set xlabel 't [s]'\n"
        << "set multiplot layout " << std::max<std::size_t>(1, columns.size()) << ",1\n";
    for (const std::string& name : columns) {
        const std::size_t col = trace.index(name) + 1;
        out << "set ylabel '" << name << "'\n"
            << "plot '" << csv_name << "' using 1:" << col << " with lines\n";
    }
    out << "unset multiplot\n";
}

double compute_rocof(std::span<const double> omega, double h, const RocofOptions& options) {
    if (!(h > 0.0) || !(options.cutoff_hz > 0.0)) throw ContractViolation("compute_rocof: invalid sample period or cutoff");
    const double tau = 1.0 / (2.0 * std::numbers::pi * options.cutoff_hz);
    const auto skip = static_cast<std::size_t>(std::ceil(5.0 * tau / h));
    if (omega.size() < skip + 3) throw ContractViolation("compute_rocof: trace shorter than the filter warm-up");

    const double a = -std::expm1(-h / tau);
    std::vector<double> y(omega.size());
    y[0] = omega[0];
    for (std::size_t k = 1; k < omega.size(); ++k) y[k] = y[k - 1] + a * (omega[k - 1] - y[k - 1]);

    double worst = 0.0;
    for (std::size_t k = std::max<std::size_t>(skip, 1); k + 1 < y.size(); ++k) {
        worst = std::max(worst, std::abs(y[k + 1] - y[k - 1]) / (2.0 * h));
    }
    return worst / (2.0 * std::numbers::pi);
}

double compute_rocof(const Trace& trace, std::string_view omega_column, const RocofOptions& options) {
    const auto w = trace.column(omega_column);
    const std::size_t first = trace.row_at(options.start_time);
    return compute_rocof(w.subspan(std::min(first, w.size())), trace.sample_period(), options);
}

double window_mean(std::span<const double> t, std::span<const double> y, double t0, double t1) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] >= t0 && t[k] < t1) {
            sum += y[k];
            ++n;
        }
    }
    if (n == 0) throw ContractViolation("window_mean: empty window");
    return sum / static_cast<double>(n);
}

Overshoot compute_overshoot(std::span<const double> t, std::span<const double> y, double t_start, double t_end,
                            const OvershootOptions& options) {
    if (t.size() != y.size() || t.empty()) throw ContractViolation("compute_overshoot: mismatched or empty series");
    if (!(t_end > t_start)) throw ContractViolation("compute_overshoot: empty interval");

    const auto begin = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), t_start) - t.begin());
    if (begin >= t.size()) throw ContractViolation("compute_overshoot: interval starts after the series");
    Overshoot o;
    o.initial = y[begin > 0 ? begin - 1 : 0];

    const double w0 = std::max(t_start, t_end - options.settle_window);
    double lo = 1e300;
    double hi = -1e300;
    for (std::size_t k = begin; k < t.size() && t[k] < t_end; ++k) {
        if (t[k] >= w0) {
            lo = std::min(lo, y[k]);
            hi = std::max(hi, y[k]);
        }
    }
    if (lo > hi) throw ContractViolation("compute_overshoot: settle window holds no samples");
    o.final = window_mean(t, y, w0, t_end);

    double tol = options.settle_tolerance;
    if (tol <= 0.0) tol = 0.01 * std::max({std::abs(o.initial), std::abs(o.final), std::abs(o.final - o.initial)});
    if (hi - lo > tol) {
        throw SettlingFailure("compute_overshoot: signal did not settle (spread " + std::to_string(hi - lo) +
                              " exceeds " + std::to_string(tol) + ")");
    }

    const double band_lo = std::min(o.initial, o.final);
    const double band_hi = std::max(o.initial, o.final);
    for (std::size_t k = begin; k < t.size() && t[k] < t_end; ++k) {
        o.peak = std::max({o.peak, y[k] - band_hi, band_lo - y[k]});
    }
    return o;
}

Overshoot compute_overshoot(const Trace& trace, std::string_view channel, double t_start, double t_end,
                            const OvershootOptions& options) {
    return compute_overshoot(trace.times(), trace.column(channel), t_start, t_end, options);
}

double settling_time(std::span<const double> t, std::span<const double> y, double t_start, double t_end,
                     double target, double band) {
    double entered = -1.0;
    for (std::size_t k = 0; k < t.size() && t[k] < t_end; ++k) {
        if (t[k] < t_start) continue;
        if (std::abs(y[k] - target) <= band) {
            if (entered < 0.0) entered = t[k];
        } else {
            entered = -1.0;
        }
    }
    return entered < 0.0 ? -1.0 : entered - t_start;
}

}  // namespace mgsim::trace
