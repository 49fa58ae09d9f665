#include "mgsim/errors.hpp"
#include "mgsim/plant.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace mgsim;
using namespace mgsim::plant;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("dq transform round-trips", "[plant][dq]") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-500.0, 500.0);
    std::uniform_real_distribution<double> ang(-20.0, 20.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const DqPair p{u(rng), u(rng)};
        const double theta = ang(rng);
        const ThreePhase abc = dq_to_abc(p, theta);
        const DqPair back = abc_to_dq(abc.a, abc.b, abc.c, theta);
        CHECK(std::abs(back.d - p.d) < 1e-12 * 500.0);
        CHECK(std::abs(back.q - p.q) < 1e-12 * 500.0);
        CHECK_THAT(abc.a + abc.b + abc.c, WithinAbs(0.0, 1e-10));
    }
}

TEST_CASE("dq transform is amplitude invariant", "[plant][dq]") {
    const double V = 391.0, theta = 0.7;
    const double shift = 2.0 * std::numbers::pi / 3.0;
    const DqPair p = abc_to_dq(V * std::cos(theta), V * std::cos(theta - shift), V * std::cos(theta + shift), theta);
    CHECK_THAT(p.d, WithinRel(V, 1e-13));
    CHECK_THAT(p.q, WithinAbs(0.0, 1e-10));
}

TEST_CASE("three-phase power equals the dq expression", "[plant][power]") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int trial = 0; trial < 100; ++trial) {
        const DqPair v{u(rng), u(rng)}, i{u(rng), u(rng)};
        const double theta = u(rng);
        const ThreePhase va = dq_to_abc(v, theta), ia = dq_to_abc(i, theta);
        const double p_abc = va.a * ia.a + va.b * ia.b + va.c * ia.c;
        CHECK_THAT(power_from_dq(v, i).P, WithinAbs(p_abc, 1e-9 * (1.0 + std::abs(p_abc))));
    }
    // Q > 0 when current lags voltage
    CHECK(power_from_dq({391.0, 0.0}, {10.0, -5.0}).Q > 0.0);
}

TEST_CASE("rotation preserves magnitude and composes", "[plant][dq]") {
    const DqPair p{3.0, 4.0};
    CHECK_THAT(p.rotated(1.2).magnitude(), WithinRel(5.0, 1e-15));
    const DqPair r = p.rotated(0.4).rotated(-0.4);
    CHECK_THAT(r.d, WithinAbs(3.0, 1e-14));
    CHECK_THAT(r.q, WithinAbs(4.0, 1e-14));
}

TEST_CASE("modulation is limited to the unit disc", "[plant][modulation]") {
    const Modulation ok = limit_modulation({0.3, 0.4});
    CHECK_FALSE(ok.saturated);
    CHECK(ok.m == DqPair{0.3, 0.4});
    const Modulation sat = limit_modulation({3.0, 4.0});
    CHECK(sat.saturated);
    CHECK_THAT(sat.m.magnitude(), WithinRel(1.0, 1e-15));
    CHECK_THAT(sat.m.d / sat.m.q, WithinRel(0.75, 1e-15));
}

TEST_CASE("lossless filter conserves energy", "[plant][energy]") {
    // With R_i -> 0 the stored energy rate equals converter power minus output power.
    PlantParams p;
    p.R_i = 1e-300;
    const DqPair i_L{20.0, -7.0}, V_c{380.0, 15.0}, i_out{12.0, 3.0}, m{0.8, 0.1};
    const FilterDerivative f = filter_derivatives(i_L, V_c, i_out, m, p, p.omega_0);
    const double stored = 1.5 * (p.L_i * (i_L.d * f.di_L.d + i_L.q * f.di_L.q) + p.C_i * (V_c.d * f.dV_c.d + V_c.q * f.dV_c.q));
    const DqPair v_conv = (p.V_dc / 2.0) * m;
    const double p_in = power_from_dq(v_conv, i_L).P;
    const double p_out = power_from_dq(V_c, i_out).P;
    CHECK_THAT(stored, WithinAbs(p_in - p_out, 1e-9 * std::abs(p_in)));
}

TEST_CASE("filter dissipation matches the resistor loss", "[plant][energy]") {
    PlantParams p;
    const DqPair i_L{20.0, -7.0}, V_c{380.0, 15.0}, i_out{12.0, 3.0}, m{0.8, 0.1};
    const FilterDerivative f = filter_derivatives(i_L, V_c, i_out, m, p, p.omega_0);
    const double stored = 1.5 * (p.L_i * (i_L.d * f.di_L.d + i_L.q * f.di_L.q) + p.C_i * (V_c.d * f.dV_c.d + V_c.q * f.dV_c.q));
    const double p_in = power_from_dq((p.V_dc / 2.0) * m, i_L).P;
    const double p_out = power_from_dq(V_c, i_out).P;
    const double loss = 1.5 * p.R_i * (i_L.d * i_L.d + i_L.q * i_L.q);
    CHECK_THAT(p_in - p_out - stored, WithinRel(loss, 1e-9));
}

TEST_CASE("linearized power flow error decays quadratically", "[plant][powerflow]") {
    PlantParams p;
    p.R_g = 1e-9;  // the linearization assumes an inductive line
    auto mismatch = [&](double delta) {
        const double V_c = p.V_0 * (1.0 + delta);  // amplitude deviation of the same order
        const PowerPair lin = linearized_power_flow(V_c, delta, p);
        const PowerPair ex = exact_power_flow(V_c, delta, p.V_0, p);
        return std::hypot(lin.P - ex.P, lin.Q - ex.Q);
    };
    for (double delta : {0.2, 0.1, 0.05, 0.025}) {
        const double ratio = mismatch(delta) / mismatch(delta / 2.0);
        INFO("delta " << delta << " ratio " << ratio);
        CHECK(ratio > 3.5);
        CHECK(ratio < 4.5);
    }
    const PowerPair lin = linearized_power_flow(p.V_0, 0.01, p);
    const PowerPair ex = exact_power_flow(p.V_0, 0.01, p.V_0, p);
    CHECK_THAT(lin.P, WithinRel(ex.P, 1e-3));
}

TEST_CASE("constant impedance load draws nominal power at V_0", "[plant][load]") {
    PlantParams p;
    LoadSpec l;
    l.P_load = 20e3;
    l.Q_load = 10e3;
    const LoadSpec loads[] = {l};
    const Admittance y = load_admittance(loads, p, 0.0);
    const DqPair v{p.V_0, 0.0};
    const PowerPair s = power_from_dq(v, y.current(v));
    CHECK_THAT(s.P, WithinRel(20e3, 1e-12));
    CHECK_THAT(s.Q, WithinRel(10e3, 1e-12));
}

TEST_CASE("load activation fractions", "[plant][load]") {
    LoadSpec step;
    step.start = 1.0;
    CHECK(step.fraction(0.999) == 0.0);
    CHECK(step.fraction(1.0) == 1.0);
    LoadSpec ramp;
    ramp.activation = LoadActivation::ramp;
    ramp.start = 1.0;
    ramp.ramp_duration = 5.0;
    CHECK(ramp.fraction(1.0) == 0.0);
    CHECK_THAT(ramp.fraction(3.5), WithinAbs(0.5, 1e-15));
    CHECK(ramp.fraction(7.0) == 1.0);
    LoadSpec always;
    CHECK(always.fraction(-1e9) == 1.0);
    ramp.ramp_duration = 0.0;
    CHECK_THROWS_AS(ramp.validate(), ContractViolation);
}

TEST_CASE("network KCL with a bus-forming unit", "[plant][network]") {
    PlantParams p;
    NetworkSpec spec;
    spec.inverter_count = 2;
    spec.forming = {true, false};
    spec.island_bus = IslandBus::former;
    LoadSpec l;
    l.P_load = 20e3;
    l.Q_load = 10e3;
    spec.loads = {l};
    const Network net(spec, p);
    CHECK(net.bus_former() == std::optional<std::size_t>{0});
    CHECK(net.role(1) == NodeRole::line);
    InverterState a, b;
    a.V_c = {390.0, 5.0};
    b.i_g = {10.0, -3.0};
    const InverterState units[] = {a, b};
    const NetworkSolution s = net.solve(units, 0.0, 0.0);
    CHECK(s.v_bus == a.V_c);
    const DqPair sum = s.i_out[0] + s.i_out[1];
    CHECK_THAT(sum.d, WithinAbs(s.i_load.d, 1e-12));
    CHECK_THAT(sum.q, WithinAbs(s.i_load.q, 1e-12));
}

TEST_CASE("passive island bus satisfies the load law", "[plant][network]") {
    PlantParams p;
    NetworkSpec spec;
    spec.inverter_count = 2;
    spec.forming = {true, true};
    spec.island_bus = IslandBus::passive;
    LoadSpec l;
    l.P_load = 20e3;
    l.Q_load = 10e3;
    spec.loads = {l};
    const Network net(spec, p);
    CHECK(net.passive_bus());
    InverterState a, b;
    a.i_g = {30.0, -12.0};
    b.i_g = {10.0, -3.0};
    const InverterState units[] = {a, b};
    const NetworkSolution s = net.solve(units, 0.0, 0.0);
    const Admittance y = load_admittance(spec.loads, p, 0.0);
    const DqPair i = y.current(s.v_bus);
    CHECK_THAT(i.d, WithinAbs(40.0, 1e-10));
    CHECK_THAT(i.q, WithinAbs(-15.0, 1e-10));

    spec.loads.clear();
    CHECK_THROWS_AS(Network(spec, p), ConfigError);
}

TEST_CASE("islanded network without a forming unit is rejected", "[plant][network]") {
    NetworkSpec spec;
    spec.inverter_count = 1;
    spec.forming = {false};
    LoadSpec l;
    l.P_load = 1e3;
    spec.loads = {l};
    spec.island_bus = IslandBus::former;
    CHECK_THROWS_AS(Network(spec, PlantParams{}), ConfigError);
    spec.island_bus = IslandBus::passive;
    CHECK_THROWS_AS(Network(spec, PlantParams{}), ConfigError);
}

TEST_CASE("stiff grid bus follows the grid angle", "[plant][network]") {
    NetworkSpec spec;
    spec.inverter_count = 1;
    spec.forming = {false};
    spec.grid_breaker_closed = true;
    const Network net(spec, PlantParams{});
    const InverterState units[] = {InverterState{{}, {}, {5.0, 1.0}}};
    const NetworkSolution s = net.solve(units, std::numbers::pi / 2.0, 0.0);
    CHECK_THAT(s.v_bus.d, WithinAbs(0.0, 1e-12));
    CHECK_THAT(s.v_bus.q, WithinRel(391.0, 1e-15));
    CHECK(s.i_grid == DqPair{5.0, 1.0});
}

TEST_CASE("plant parameter validation", "[plant]") {
    PlantParams p;
    CHECK_NOTHROW(p.validate());
    p.C_i = -1.0;
    CHECK_THROWS_AS(p.validate(), ContractViolation);
    p = PlantParams{};
    CHECK_THAT(p.line_impedance(), WithinRel(std::hypot(0.1, p.omega_0 * 1.86e-3), 1e-15));
}
