#pragma once

// Frequency-domain and stability analysis of the power loops: rational
// transfer functions, the active/reactive closed loops under the linearized
// power flow, the epsilon-affine state matrix and the Lyapunov-based
// certificate for smooth GFL -> GFM transitions.

#include "mgsim/control.hpp"
#include "mgsim/numerics.hpp"
#include "mgsim/plant.hpp"

#include <vector>

namespace mgsim::analysis {

using numerics::Complex;
using numerics::Matrix;
using numerics::Polynomial;

class TransferFunction {
public:
    /// Throws ContractViolation for a zero denominator.
    TransferFunction(Polynomial numerator, Polynomial denominator);

    [[nodiscard]] const Polynomial& numerator() const noexcept { return num_; }
    [[nodiscard]] const Polynomial& denominator() const noexcept { return den_; }

    [[nodiscard]] bool is_proper() const noexcept { return num_.degree() <= den_.degree(); }
    [[nodiscard]] bool is_strictly_proper() const noexcept { return num_.degree() < den_.degree(); }

    [[nodiscard]] Complex operator()(Complex s) const;
    /// G(j w).
    [[nodiscard]] Complex response(double omega) const { return (*this)(Complex{0.0, omega}); }
    [[nodiscard]] double gain(double omega) const;

    /// G(0); +inf (signed) when a pole sits at the origin and the numerator
    /// does not cancel it.
    [[nodiscard]] double dc_gain() const;

    [[nodiscard]] std::vector<Complex> poles() const;
    [[nodiscard]] std::vector<Complex> zeros() const;

    /// Unit-step response sampled every dt on [0, t_end] through a
    /// controllable canonical realization. Requires a proper function.
    [[nodiscard]] std::vector<double> step_response(double t_end, double dt) const;

    friend TransferFunction operator*(const TransferFunction& a, const TransferFunction& b);

private:
    Polynomial num_;
    Polynomial den_;
};

/// Log-spaced angular frequencies over [lo, hi], inclusive, with the given density.
std::vector<double> log_frequency_grid(double lo, double hi, int points_per_decade = 50);

/// max over the grid of | |a(jw)| / |b(jw)| - 1 |.
double max_relative_mismatch(const TransferFunction& a, const TransferFunction& b, std::span<const double> grid);

/// k w / (s + w): filtered droop gain.
TransferFunction droop_gain(double k, double omega_lpf);

/// (k_p + k_i/(s + eps)) w/(s + w) for the active (P) channel.
TransferFunction proposed_active_gain(const control::ProposedConfig& cfg, double eps_P);
/// Same structure for the reactive (Q) channel.
TransferFunction proposed_reactive_gain(const control::ProposedConfig& cfg, double eps_Q);

struct ClosedLoop {
    TransferFunction reference;    ///< setpoint -> delivered power
    TransferFunction disturbance;  ///< grid deviation -> delivered power
};

/// P = V0^2 K/(s Z + V0^2 K) P_0 + V0^2/(s Z + V0^2 K) (w_g - w_0) for any K_P.
ClosedLoop active_power_cltf(const plant::PlantParams& params, const TransferFunction& k_p);
ClosedLoop active_power_cltf(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps_P);

/// Q = V0 K/(Z + V0 K) Q_0 + V0/(Z + V0 K) (V_g - V_0).
ClosedLoop reactive_power_cltf(const plant::PlantParams& params, const TransferFunction& k_q);
ClosedLoop reactive_power_cltf(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps_Q);

/// Monic s^3 + (w+eps)s^2 + (w eps + g w k_pP)s + g w (k_pP eps + k_iP), g = V0^2/Z.
Polynomial char_poly_active(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps_P);

/// Routh-Hurwitz verdict on char_poly_active.
bool active_loop_stable(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps_P);

enum class Realization {
    companion,  ///< [y, y', y''] of the characteristic cubic
    physical,   ///< deviations of (delta, filtered P, integrator output)
};

/// A(eps) = A0 + eps B.
struct AffineStateMatrix {
    Matrix A;
    Matrix A0;
    Matrix B;
};

AffineStateMatrix state_matrix(const plant::PlantParams& params, const control::ProposedConfig& cfg, double eps_P,
                               Realization realization = Realization::companion);

struct CertificateSample {
    double epsilon = 0.0;
    double lambda_min = 0.0;  ///< smallest eigenvalue of W(eps)
    double lambda_max = 0.0;  ///< largest eigenvalue of W(eps)
    double dW_norm = 0.0;     ///< spectral norm of dW/deps
};

struct CertificateOptions {
    std::size_t grid_points = 41;
    Realization realization = Realization::companion;
};

/// Bound on the Lyapunov function growth across one transition:
///   V(t) <= alpha V(0),      alpha = exp(max|dW/deps| / min lambda_min * eps_max)
///   |x(t)|^2 <= gain |x(0)|^2, gain = alpha max lambda_max / min lambda_min.
/// alpha is stored as its logarithm because it overflows a double at
/// realistic gains; alpha_bound() then reports +inf.
struct TransitionCertificate {
    double log_alpha = 0.0;
    double log_state_norm_gain = 0.0;
    double dwell_time = 0.0;  ///< [s]
    double epsilon_max = 0.0;
    Realization realization = Realization::companion;
    std::vector<CertificateSample> grid;

    [[nodiscard]] double alpha_bound() const noexcept;
    [[nodiscard]] double state_norm_gain() const noexcept;
    /// True when |x|^2 <= gain |x0|^2, evaluated in log space.
    [[nodiscard]] bool admits(double norm_sq, double initial_norm_sq) const noexcept;
};

/// Throws CertificateUnavailable naming the first non-Hurwitz epsilon.
TransitionCertificate transition_certificate(const plant::PlantParams& params, const control::ProposedConfig& cfg,
                                             const control::TransitionSchedule& schedule,
                                             const CertificateOptions& options = {});

/// Integrates x' = A(eps(t)) x and returns max_t ln(|x(t)|^2 / |x0|^2).
double affine_growth(const plant::PlantParams& params, const control::ProposedConfig& cfg,
                     const control::TransitionSchedule& schedule, std::span<const double> x0, double duration,
                     double dt, Realization realization = Realization::companion);

struct Sensitivity {
    TransferFunction voltage;    ///< power mismatch -> voltage amplitude [V/W]
    TransferFunction frequency;  ///< power mismatch -> angular frequency [(rad/s)/W]
};

/// V = 2/(3 V0 C s) (P_0 - P), w = -2 K_PLL/(3 V0 C s) (Q_0 - Q).
Sensitivity conventional_gfl_sensitivity(const plant::PlantParams& params, const control::PllConfig& pll);

/// V = K_Q (Q_0 - Q), w = K_P (P_0 - P) for the frequency-shaped controller.
Sensitivity proposed_sensitivity(const control::ProposedConfig& cfg, double eps_P, double eps_Q);

struct VsgParams {
    double J = 0.0;        ///< [kg m^2]
    double D = 0.0;        ///< [N m s]
    double k_omega = 0.0;  ///< [N m s]
    double omega_0 = 2.0 * std::numbers::pi * 60.0;

    [[nodiscard]] double H() const noexcept { return J / omega_0; }
    void validate() const;
};

/// The swing-equation frequency response against the droop filter it maps to,
/// with omega_lpf = (k_w + D)/J and with the H = J/w0 reading.
struct VsgEquivalence {
    TransferFunction vsg;
    TransferFunction droop_with_J;
    TransferFunction droop_with_H;
    double k_p = 0.0;
    double omega_lpf_J = 0.0;
    double omega_lpf_H = 0.0;
    double mismatch_J = 0.0;
    double mismatch_H = 0.0;
};

VsgEquivalence vsg_equivalence(const VsgParams& vsg);

}  // namespace mgsim::analysis
