#include "mgsim/analysis.hpp"
#include "mgsim/errors.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

using namespace mgsim;
using namespace mgsim::analysis;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double pi = std::numbers::pi;

double coupling(const plant::PlantParams& p) { return p.V_0 * p.V_0 / std::hypot(p.R_g, p.omega_0 * p.L_g); }

double scaled_residual(const Polynomial& p, Complex z) {
    double scale = 0.0;
    for (std::size_t k = 0; k < p.coefficients().size(); ++k) scale += std::abs(p.coefficient(k)) * std::pow(std::abs(z), k);
    return std::abs(p(z)) / scale;
}

double quad(const Matrix& w, std::span<const double> x) {
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) v += x[i] * w(i, j) * x[j];
    return v;
}

}  // namespace

TEST_CASE("active characteristic polynomial matches the hand expansion", "[analysis][poly]") {
    const plant::PlantParams p;
    const double g = coupling(p);
    for (double w : {4 * pi, 10 * pi, 20 * pi}) {
        const auto cfg = control::ProposedConfig::default_gains(w);
        for (double eps : {0.0, 3.0, 200.0}) {
            const Polynomial c = char_poly_active(p, cfg, eps);
            REQUIRE(c.degree() == 3);
            CHECK(c.coefficient(3) == 1.0);
            CHECK_THAT(c.coefficient(2), WithinRel(w + eps, 1e-14));
            CHECK_THAT(c.coefficient(1), WithinRel(w * eps + g * w * cfg.k_pP(), 1e-13));
            CHECK_THAT(c.coefficient(0), WithinRel(g * w * (cfg.k_pP() * eps + cfg.k_iP()), 1e-13));
        }
    }
}

TEST_CASE("characteristic polynomial is affine in epsilon", "[analysis][poly]") {
    const plant::PlantParams p;
    const auto cfg = control::ProposedConfig::default_gains(20 * pi);
    const Polynomial c0 = char_poly_active(p, cfg, 0.0);
    const Polynomial c1 = char_poly_active(p, cfg, 1.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 500.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double eps = u(rng);
        const Polynomial c = char_poly_active(p, cfg, eps);
        for (std::size_t k = 0; k < 4; ++k) {
            const double affine = c0.coefficient(k) + eps * (c1.coefficient(k) - c0.coefficient(k));
            // rounding bound of the affine reconstruction itself
            const double scale = std::abs(c.coefficient(k)) + std::abs(c0.coefficient(k)) +
                                 eps * (std::abs(c1.coefficient(k)) + std::abs(c0.coefficient(k)));
            CHECK(std::abs(c.coefficient(k) - affine) <= 4 * std::numeric_limits<double>::epsilon() * scale);
        }
    }
}

TEST_CASE("state matrix realizations share the characteristic polynomial", "[analysis][state]") {
    const plant::PlantParams p;
    const auto cfg = control::ProposedConfig::default_gains(20 * pi);
    for (Realization r : {Realization::companion, Realization::physical}) {
        for (double eps : {0.0, 50.0, 200.0}) {
            const AffineStateMatrix m = state_matrix(p, cfg, eps, r);
            const Matrix rebuilt = m.A0 + eps * m.B;
            CHECK((m.A - rebuilt).max_abs() <= 1e-12 * m.A.max_abs());
            const Polynomial c = char_poly_active(p, cfg, eps);
            for (const Complex lam : numerics::eigenvalues(m.A)) CHECK(scaled_residual(c, lam) < 1e-10);
        }
    }
}

TEST_CASE("closed-loop poles are the characteristic roots", "[analysis][cltf]") {
    const plant::PlantParams p;
    const auto cfg = control::ProposedConfig::default_gains(20 * pi);
    const ClosedLoop cl = active_power_cltf(p, cfg, 0.0);
    const Polynomial c = char_poly_active(p, cfg, 0.0);
    for (const Complex pole : cl.reference.poles()) {
        CHECK(pole.real() < 0.0);
        CHECK(scaled_residual(c, pole) < 1e-10);
    }
    CHECK_THAT(cl.reference.dc_gain(), WithinRel(1.0, 1e-12));
    CHECK_THAT(cl.disturbance.dc_gain(), WithinAbs(0.0, 1e-12));
    const double eps = 200.0;
    const ClosedLoop droopy = active_power_cltf(p, cfg, eps);
    CHECK_THAT(droopy.disturbance.dc_gain(), WithinRel(1.0 / (cfg.k_pP() + cfg.k_iP() / eps), 1e-10));
}

TEST_CASE("default gains give a stable loop for every epsilon", "[analysis][stability]") {
    const plant::PlantParams p;
    for (double w : {4 * pi, 10 * pi, 20 * pi}) {
        const auto cfg = control::ProposedConfig::default_gains(w);
        for (double eps = 0.0; eps <= 1000.0; eps += 25.0) CHECK(active_loop_stable(p, cfg, eps));
    }
    // k_i = w k_p puts a root pair on the imaginary axis at eps = 0
    const control::ProposedConfig edge(2e-4, 20 * pi * 2e-4, 2e-4, 20 * pi * 2e-4, 20 * pi);
    CHECK_FALSE(active_loop_stable(p, edge, 0.0));
}

TEST_CASE("frequency-shaped gain reduces to droop at large epsilon", "[analysis][tf]") {
    for (double w : {4 * pi, 10 * pi, 20 * pi}) {
        const auto cfg = control::ProposedConfig::default_gains(w);
        const TransferFunction shaped = proposed_active_gain(cfg, 200.0);
        const TransferFunction droop = droop_gain(cfg.k_pP(), w);
        const auto grid = log_frequency_grid(w, 1e4);
        CHECK(max_relative_mismatch(shaped, droop, grid) < 0.05);
        for (double om : grid) {
            // independent evaluation of the gain expression
            const Complex s{0.0, om};
            const Complex k = (cfg.k_pP() + cfg.k_iP() / (s + 200.0)) * w / (s + w);
            CHECK_THAT(shaped.gain(om), WithinRel(std::abs(k), 1e-12));
        }
    }
}

TEST_CASE("zero epsilon gives integral action", "[analysis][tf]") {
    const auto cfg = control::ProposedConfig::default_gains(20 * pi);
    const double dc_p = proposed_active_gain(cfg, 0.0).dc_gain();
    const double dc_q = proposed_reactive_gain(cfg, 0.0).dc_gain();
    CHECK(dc_p > 1e6 * cfg.k_pP());
    CHECK(dc_q > 1e6 * cfg.k_pQ());
    CHECK_THAT(proposed_active_gain(cfg, 200.0).dc_gain(), WithinRel(cfg.k_pP() + cfg.k_iP() / 200.0, 1e-12));
    CHECK_THAT(droop_gain(3.0, 7.0).dc_gain(), WithinRel(3.0, 1e-15));
}

TEST_CASE("conventional control is more sensitive to power mismatch", "[analysis][sensitivity]") {
    const plant::PlantParams p;
    const control::PllConfig pll;
    for (double w : {4 * pi, 10 * pi, 20 * pi}) {
        const auto cfg = control::ProposedConfig::default_gains(w);
        const Sensitivity conv = conventional_gfl_sensitivity(p, pll);
        const Sensitivity prop = proposed_sensitivity(cfg, 0.0, 0.0);
        const double expected_v = 2.0 / (3.0 * p.V_0 * p.C_i * w);
        CHECK_THAT(conv.voltage.gain(w), WithinRel(expected_v, 1e-12));
        CHECK(conv.voltage.gain(w) > prop.voltage.gain(w));
        CHECK(conv.frequency.gain(w) > prop.frequency.gain(w));
    }
}

TEST_CASE("step response of a second-order lag", "[analysis][tf]") {
    // zeta = 0.5: overshoot exp(-pi zeta/sqrt(1 - zeta^2))
    const TransferFunction g{Polynomial{1.0}, Polynomial{1.0, 1.0, 1.0}};
    const auto y = g.step_response(20.0, 1e-3);
    const double peak = *std::max_element(y.begin(), y.end());
    CHECK_THAT(peak - 1.0, WithinRel(std::exp(-pi * 0.5 / std::sqrt(0.75)), 1e-4));
    CHECK_THAT(y.back(), WithinAbs(1.0, 1e-3));
    CHECK_THROWS_AS(TransferFunction(Polynomial{1.0, 1.0}, Polynomial{}), ContractViolation);
}

TEST_CASE("Lyapunov function decreases on frozen-epsilon trajectories", "[analysis][lyapunov]") {
    const plant::PlantParams p;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (Realization r : {Realization::companion, Realization::physical}) {
        for (double w : {4 * pi, 20 * pi}) {
            const auto cfg = control::ProposedConfig::default_gains(w);
            for (double eps : {0.0, 20.0, 100.0, 200.0}) {
                const Matrix a = state_matrix(p, cfg, eps, r).A;
                const Matrix wm = numerics::solve_lyapunov(a);
                numerics::OdeSystem sys{3, [&](double, std::span<const double> x, std::span<double> dx) {
                    const auto v = a * x;
                    std::copy(v.begin(), v.end(), dx.begin());
                }};
                const numerics::Vector x0{n(rng), n(rng), n(rng)};
                const auto traj = numerics::rk4_integrate(sys, x0, 0.0, 1.0, 1e-4);
                double prev = quad(wm, traj.states.front());
                for (const auto& x : traj.states) {
                    const double v = quad(wm, x);
                    CHECK(v <= prev * (1.0 + 1e-9));
                    prev = v;
                }
            }
        }
    }
}

TEST_CASE("certificate without a transition is trivial", "[analysis][certificate]") {
    const plant::PlantParams p;
    const auto cfg = control::ProposedConfig::default_gains(20 * pi);
    control::TransitionSchedule s;
    s.eps_max = 0.0;
    const TransitionCertificate c = transition_certificate(p, cfg, s);
    CHECK(c.alpha_bound() == 1.0);
    CHECK(c.dwell_time == 0.0);
    CHECK(c.grid.size() == 1);
}

TEST_CASE("certificate grows with the epsilon range", "[analysis][certificate]") {
    const plant::PlantParams p;
    const auto cfg = control::ProposedConfig::default_gains(20 * pi);
    for (Realization r : {Realization::companion, Realization::physical}) {
        control::TransitionSchedule s;
        CertificateOptions opt;
        opt.realization = r;
        double prev = 0.0;
        for (double eps_max : {25.0, 50.0, 100.0, 200.0, 400.0}) {
            s.eps_max = eps_max;
            const TransitionCertificate c = transition_certificate(p, cfg, s, opt);
            CHECK(std::isfinite(c.log_alpha));
            CHECK(std::isfinite(c.log_state_norm_gain));
            CHECK(c.log_alpha >= prev);
            CHECK(c.log_state_norm_gain >= c.log_alpha);
            for (const auto& g : c.grid) CHECK(g.lambda_min > 0.0);
            prev = c.log_alpha;
        }
    }
}

TEST_CASE("simulated linear transitions stay inside the certified bound", "[analysis][certificate]") {
    const plant::PlantParams p;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (Realization r : {Realization::companion, Realization::physical}) {
        for (double w : {4 * pi, 10 * pi, 20 * pi}) {
            const auto cfg = control::ProposedConfig::default_gains(w);
            control::TransitionSchedule s;
            CertificateOptions opt;
            opt.realization = r;
            const TransitionCertificate c = transition_certificate(p, cfg, s, opt);
            for (int trial = 0; trial < 5; ++trial) {
                const double x0[] = {n(rng), n(rng), n(rng)};
                const double growth = affine_growth(p, cfg, s, x0, 4.0, 1e-4, r);
                CHECK(growth <= c.log_state_norm_gain);
            }
        }
    }
}

TEST_CASE("marginal gains leave the certificate unavailable", "[analysis][certificate]") {
    const plant::PlantParams p;
    const control::ProposedConfig edge(2e-4, 20 * pi * 2e-4, 2e-4, 20 * pi * 2e-4, 20 * pi);
    try {
        (void)transition_certificate(p, edge, control::TransitionSchedule{});
        FAIL("expected CertificateUnavailable");
    } catch (const CertificateUnavailable& e) {
        CHECK(e.epsilon() == 0.0);
    }
}

TEST_CASE("swing equation maps onto a filtered droop", "[analysis][vsg]") {
    VsgParams v;
    v.D = 2500.0;
    v.k_omega = 2500.0;
    v.J = v.omega_0 * (v.D + v.k_omega) / (20 * pi);
    const VsgEquivalence eq = vsg_equivalence(v);
    CHECK_THAT(eq.k_p, WithinRel(1.0 / 5000.0, 1e-15));
    CHECK_THAT(eq.omega_lpf_H, WithinRel(20 * pi, 1e-12));
    CHECK_THAT(eq.omega_lpf_J * v.omega_0, WithinRel(eq.omega_lpf_H, 1e-12));
    // one of the two readings reproduces the swing response exactly, the other is off by omega_0
    CHECK(std::min(eq.mismatch_J, eq.mismatch_H) < 1e-12);
    CHECK(std::max(eq.mismatch_J, eq.mismatch_H) > 0.5);
    v.J = 0.0;
    CHECK_THROWS_AS(vsg_equivalence(v), ConfigError);
}

TEST_CASE("reactive loop with k_iQ = omega_lpf k_pQ is first order", "[analysis][cltf]") {
    const plant::PlantParams p;
    for (double w : {4 * pi, 20 * pi}) {
        const auto cfg = control::ProposedConfig::default_gains(w);
        const ClosedLoop cl = reactive_power_cltf(p, cfg, 0.0);
        // the PI zero cancels the filter pole, leaving one pole at V0 k_pQ w / Z
        const double pole = p.V_0 * cfg.k_pQ() * w / p.line_impedance();
        const double dt = 1e-4;
        const auto y = cl.reference.step_response(5.0 / pole, dt);
        double worst = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k)
            worst = std::max(worst, std::abs(y[k] - (1.0 - std::exp(-pole * dt * static_cast<double>(k)))));
        CHECK(worst < 1e-6);
    }
}
