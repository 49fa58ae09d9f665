#include "mgsim/analysis.hpp"

#include "mgsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mgsim::analysis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double line_gain(const plant::PlantParams& params) { return params.V_0 * params.V_0 / params.line_impedance(); }

double spectral_norm_sym(const Matrix& m) {
    const numerics::Vector e = numerics::sym_eigs(m);
    return std::max(std::abs(e.front()), std::abs(e.back()));
}

Matrix symmetrized(const Matrix& m) {
    Matrix s = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
    return s;
}

}  // namespace

// --- TransferFunction ------------------------------------------------------

TransferFunction::TransferFunction(Polynomial numerator, Polynomial denominator)
    : num_(std::move(numerator)), den_(std::move(denominator)) {
    if (den_.is_zero()) throw ContractViolation("TransferFunction: denominator is the zero polynomial");
}

Complex TransferFunction::operator()(Complex s) const { return num_(s) / den_(s); }

double TransferFunction::gain(double omega) const { return std::abs(response(omega)); }

double TransferFunction::dc_gain() const {
    // Cancel common factors of s before evaluating at the origin.
    std::size_t zn = 0;
    std::size_t zd = 0;
    while (zn < num_.coefficients().size() && num_.coefficient(zn) == 0.0) ++zn;
    while (den_.coefficient(zd) == 0.0) ++zd;
    if (num_.is_zero()) return 0.0;
    if (zn > zd) return 0.0;
    if (zn < zd) return std::copysign(kInf, num_.coefficient(zn) * den_.coefficient(zd));
    return num_.coefficient(zn) / den_.coefficient(zd);
}

std::vector<Complex> TransferFunction::poles() const {
    if (den_.degree() < 1) return {};
    return numerics::poly_roots(den_);
}

std::vector<Complex> TransferFunction::zeros() const {
    if (num_.degree() < 1) return {};
    return numerics::poly_roots(num_);
}

std::vector<double> TransferFunction::step_response(double t_end, double dt) const {
    if (!is_proper()) throw ContractViolation("step_response: transfer function is improper");
    if (!(dt > 0.0) || !(t_end > 0.0)) throw ContractViolation("step_response: t_end and dt must be positive");

    const auto n = static_cast<std::size_t>(den_.degree());
    const double lead = den_.leading();
    std::vector<double> a(n + 1);
    std::vector<double> b(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        a[k] = den_.coefficient(k) / lead;
        b[k] = num_.coefficient(k) / lead;
    }
    const double feedthrough = b[n];
    for (std::size_t k = 0; k < n; ++k) b[k] -= feedthrough * a[k];

    const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
    std::vector<double> y;
    y.reserve(steps + 1);
    if (n == 0) {
        y.assign(steps + 1, feedthrough);
        return y;
    }

    numerics::OdeSystem sys{n, [&](double, std::span<const double> x, std::span<double> dx) {
        for (std::size_t k = 0; k + 1 < n; ++k) dx[k] = x[k + 1];
        double last = 1.0;
        for (std::size_t k = 0; k < n; ++k) last -= a[k] * x[k];
        dx[n - 1] = last;
    }};
    numerics::Vector x(n, 0.0);
    numerics::Rk4Workspace ws(n);
    auto output = [&] {
        double v = feedthrough;
        for (std::size_t k = 0; k < n; ++k) v += b[k] * x[k];
        return v;
    };
    y.push_back(output());
    for (std::size_t i = 0; i < steps; ++i) {
        numerics::rk4_step(sys, static_cast<double>(i) * dt, x, dt, ws);
        y.push_back(output());
    }
    return y;
}

TransferFunction operator*(const TransferFunction& a, const TransferFunction& b) {
    return {a.num_ * b.num_, a.den_ * b.den_};
}

std::vector<double> log_frequency_grid(double lo, double hi, int points_per_decade) {
    if (!(lo > 0.0) || !(hi > lo) || points_per_decade < 1) {
        throw ContractViolation("log_frequency_grid: require 0 < lo < hi and a positive density");
    }
    const double decades = std::log10(hi / lo);
    const auto n = static_cast<std::size_t>(std::ceil(decades * points_per_decade));
    std::vector<double> grid(n + 1);
    for (std::size_t k = 0; k <= n; ++k) grid[k] = lo * std::pow(10.0, decades * static_cast<double>(k) / static_cast<double>(n));
    grid.back() = hi;
    return grid;
}

double max_relative_mismatch(const TransferFunction& a, const TransferFunction& b, std::span<const double> grid) {
    double worst = 0.0;
    for (double w : grid) worst = std::max(worst, std::abs(a.gain(w) / b.gain(w) - 1.0));
    return worst;
}

// --- Controller gains and closed loops -------------------------------------

TransferFunction droop_gain(double k, double omega_lpf) { return {Polynomial{k * omega_lpf}, Polynomial{omega_lpf, 1.0}}; }

namespace {

TransferFunction shaped_gain(double k_p, double k_i, double w, double eps) {
    // w (k_p s + k_p eps + k_i) / ((s + eps)(s + w))
    return {Polynomial{w * (k_p * eps + k_i), w * k_p}, Polynomial{eps * w, eps + w, 1.0}};
}

}  // namespace

TransferFunction proposed_active_gain(const control::ProposedConfig& cfg, double eps_P) {
    return shaped_gain(cfg.k_pP(), cfg.k_iP(), cfg.omega_lpf(), eps_P);
}

TransferFunction proposed_reactive_gain(const control::ProposedConfig& cfg, double eps_Q) {
    return shaped_gain(cfg.k_pQ(), cfg.k_iQ(), cfg.omega_lpf(), eps_Q);
}

ClosedLoop active_power_cltf(const plant::PlantParams& params, const TransferFunction& k) {
    const double z = params.line_impedance();
    const double v2 = params.V_0 * params.V_0;
    const Polynomial& n = k.numerator();
    const Polynomial& d = k.denominator();
    const Polynomial den = z * (Polynomial{0.0, 1.0} * d) + v2 * n;
    return {TransferFunction{v2 * n, den}, TransferFunction{v2 * d, den}};
}

ClosedLoop active_power_cltf(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps_P) {
    return active_power_cltf(params, proposed_active_gain(cfg, eps_P));
}

ClosedLoop reactive_power_cltf(const plant::PlantParams& params, const TransferFunction& k) {
    const double z = params.line_impedance();
    const Polynomial& n = k.numerator();
    const Polynomial& d = k.denominator();
    const Polynomial den = z * d + params.V_0 * n;
    return {TransferFunction{params.V_0 * n, den}, TransferFunction{params.V_0 * d, den}};
}

ClosedLoop reactive_power_cltf(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps_Q) {
    return reactive_power_cltf(params, proposed_reactive_gain(cfg, eps_Q));
}

Polynomial char_poly_active(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps_P) {
    const double g = line_gain(params);
    const double w = cfg.omega_lpf();
    return Polynomial{g * w * (cfg.k_pP() * eps_P + cfg.k_iP()), w * eps_P + g * w * cfg.k_pP(), w + eps_P, 1.0};
}

bool active_loop_stable(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps_P) {
    const Polynomial p = char_poly_active(params, cfg, eps_P);
    return numerics::routh_hurwitz_cubic(p.coefficient(2), p.coefficient(1), p.coefficient(0));
}

AffineStateMatrix state_matrix(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps_P,
                               Realization realization) {
    const double g = line_gain(params);
    const double w = cfg.omega_lpf();
    const double kp = cfg.k_pP();
    const double ki = cfg.k_iP();
    AffineStateMatrix m;
    if (realization == Realization::companion) {
        m.A0 = Matrix{{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {-g * w * ki, -g * w * kp, -w}};
        m.B = Matrix{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {-g * w * kp, -w, -1.0}};
    } else {
        // delta' = -k_p P_f + z, P_f' = w (g delta - P_f), z' = -k_i P_f - eps z
        m.A0 = Matrix{{0.0, -kp, 1.0}, {w * g, -w, 0.0}, {0.0, -ki, 0.0}};
        m.B = Matrix{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, -1.0}};
    }
    m.A = m.A0 + eps_P * m.B;
    return m;
}

// --- Certificate -------------------------------------------------------------

double TransitionCertificate::alpha_bound() const noexcept { return std::exp(log_alpha); }

double TransitionCertificate::state_norm_gain() const noexcept { return std::exp(log_state_norm_gain); }

bool TransitionCertificate::admits(double norm_sq, double initial_norm_sq) const noexcept {
    if (norm_sq <= 0.0) return true;
    if (initial_norm_sq <= 0.0) return false;
    return std::log(norm_sq) <= log_state_norm_gain + std::log(initial_norm_sq);
}

namespace {

Matrix lyapunov_at(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps, Realization r) {
    const Matrix a = state_matrix(params, cfg, eps, r).A;
    if (!numerics::is_hurwitz(a)) {
        std::ostringstream os;
        os << "transition certificate: A(eps) is not Hurwitz at eps = " << eps;
        throw CertificateUnavailable(os.str(), eps);
    }
    try {
        return numerics::solve_lyapunov(a);
    } catch (const NoSolution&) {
        // roots on the imaginary axis up to rounding
        std::ostringstream os;
        os << "transition certificate: A(eps) is marginally stable at eps = " << eps;
        throw CertificateUnavailable(os.str(), eps);
    }
}

}  // namespace

TransitionCertificate transition_certificate(const plant::PlantParams& params, const control::ProposedConfig& cfg,
                                             const control::TransitionSchedule& schedule,
                                             const CertificateOptions& options) {
    const double eps_max = schedule.eps_max;
    if (!(eps_max >= 0.0) || !std::isfinite(eps_max)) throw ContractViolation("transition certificate: invalid eps_max");
    if (options.grid_points < 2 && eps_max > 0.0) throw ContractViolation("transition certificate: need >= 2 grid points");

    TransitionCertificate cert;
    cert.epsilon_max = eps_max;
    cert.realization = options.realization;
    const std::size_t n = eps_max > 0.0 ? options.grid_points : 1;
    const double h = eps_max / 1000.0;

    double min_lambda = kInf;
    double max_lambda = 0.0;
    double max_dw = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double eps = n == 1 ? 0.0 : eps_max * static_cast<double>(k) / static_cast<double>(n - 1);
        const Matrix w = lyapunov_at(params, cfg, eps, options.realization);
        const numerics::Vector lam = numerics::sym_eigs(w);
        CertificateSample s{eps, lam.front(), lam.back(), 0.0};
        if (!(s.lambda_min > 0.0)) {
            throw CertificateUnavailable("transition certificate: W(eps) is not positive definite", eps);
        }
        if (eps_max > 0.0) {
            Matrix dw;
            const Matrix a_minus = state_matrix(params, cfg, eps - h, options.realization).A;
            if (numerics::is_hurwitz(a_minus)) {
                dw = (1.0 / (2.0 * h)) * (lyapunov_at(params, cfg, eps + h, options.realization) -
                                          numerics::solve_lyapunov(a_minus));
            } else {
                // Second-order one-sided difference at the edge of the Hurwitz region.
                dw = (1.0 / (2.0 * h)) * (4.0 * lyapunov_at(params, cfg, eps + h, options.realization) -
                                          lyapunov_at(params, cfg, eps + 2.0 * h, options.realization) - 3.0 * w);
            }
            s.dW_norm = spectral_norm_sym(symmetrized(dw));
        }
        min_lambda = std::min(min_lambda, s.lambda_min);
        max_lambda = std::max(max_lambda, s.lambda_max);
        max_dw = std::max(max_dw, s.dW_norm);
        cert.grid.push_back(s);
    }

    cert.log_alpha = max_dw / min_lambda * eps_max;
    cert.log_state_norm_gain = cert.log_alpha + std::log(max_lambda / min_lambda);
    cert.dwell_time = max_lambda * (max_dw / min_lambda) * eps_max;
    return cert;
}

double affine_growth(const plant::PlantParams& params, const control::ProposedConfig& cfg,
                     const control::TransitionSchedule& schedule, std::span<const double> x0, double duration,
                     double dt, Realization realization) {
    if (x0.size() != 3) throw ContractViolation("affine_growth: state must have 3 entries");
    const AffineStateMatrix base = state_matrix(params, cfg, 0.0, realization);
    numerics::OdeSystem sys{3, [&](double t, std::span<const double> x, std::span<double> dx) {
        const double eps = control::epsilon_at(schedule.start + t, schedule);
        for (std::size_t i = 0; i < 3; ++i) {
            double v = 0.0;
            for (std::size_t j = 0; j < 3; ++j) v += (base.A0(i, j) + eps * base.B(i, j)) * x[j];
            dx[i] = v;
        }
    }};
    auto norm_sq = [](std::span<const double> v) { return v[0] * v[0] + v[1] * v[1] + v[2] * v[2]; };
    const double n0 = norm_sq(x0);
    if (!(n0 > 0.0)) throw ContractViolation("affine_growth: zero initial state");

    numerics::Vector x(x0.begin(), x0.end());
    numerics::Rk4Workspace ws(3);
    double worst = 0.0;
    const auto steps = static_cast<std::size_t>(std::ceil(duration / dt));
    for (std::size_t i = 0; i < steps; ++i) {
        numerics::rk4_step(sys, static_cast<double>(i) * dt, x, dt, ws);
        worst = std::max(worst, std::log(norm_sq(x) / n0));
    }
    return worst;
}

// --- Sensitivities and VSG ---------------------------------------------------

Sensitivity conventional_gfl_sensitivity(const plant::PlantParams& params, const control::PllConfig& pll) {
    const double k = 2.0 / (3.0 * params.V_0 * params.C_i);
    return {TransferFunction{Polynomial{k}, Polynomial{0.0, 1.0}},
            TransferFunction{Polynomial{-k * pll.k_i, -k * pll.k_p}, Polynomial{0.0, 0.0, 1.0}}};
}

Sensitivity proposed_sensitivity(const control::ProposedConfig& cfg, double eps_P, double eps_Q) {
    return {proposed_reactive_gain(cfg, eps_Q), proposed_active_gain(cfg, eps_P)};
}

void VsgParams::validate() const {
    if (!(J > 0.0) || !(D > 0.0) || !(k_omega > 0.0) || !(omega_0 > 0.0)) {
        throw ConfigError("VSG parameters J, D, k_omega and omega_0 must be positive", "vsg.J");
    }
}

VsgEquivalence vsg_equivalence(const VsgParams& vsg) {
    vsg.validate();
    const double h = vsg.H();
    const double damping = vsg.k_omega + vsg.D;
    const double k_p = 1.0 / damping;
    const double w_j = damping / vsg.J;
    const double w_h = damping / h;
    VsgEquivalence eq{TransferFunction{Polynomial{1.0 / h}, Polynomial{damping / h, 1.0}}, droop_gain(k_p, w_j),
                      droop_gain(k_p, w_h), k_p, w_j, w_h, 0.0, 0.0};
    const std::vector<double> grid = log_frequency_grid(1e-2, 1e3);
    eq.mismatch_J = max_relative_mismatch(eq.droop_with_J, eq.vsg, grid);
    eq.mismatch_H = max_relative_mismatch(eq.droop_with_H, eq.vsg, grid);
    return eq;
}

}  // namespace mgsim::analysis
