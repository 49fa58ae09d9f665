#include "mgsim/config.hpp"
#include "mgsim/errors.hpp"
#include "mgsim/scenarios.hpp"

#include <catch_amalgamated.hpp>

#include <fstream>
#include <numbers>
#include <sstream>

using namespace mgsim;
using namespace mgsim::config;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinRel;

namespace {

constexpr double pi = std::numbers::pi;

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int error_line(std::string_view text) {
    try {
        (void)scenarios::from_config(Document::parse(text));
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

const std::string kMinimal = "[scenario]\nkind = power_tracking\ntopology = stiff_grid\nduration = 1\n";

}  // namespace

TEST_CASE("numbers accept a pi suffix", "[config][number]") {
    CHECK(parse_number("62.5") == 62.5);
    CHECK(parse_number("-1e3") == -1e3);
    CHECK(parse_number("+4") == 4.0);
    CHECK(parse_number("pi") == pi);
    CHECK_THAT(parse_number("20pi"), WithinRel(20 * pi, 1e-15));
    CHECK_THAT(parse_number(" 0.5 * pi "), WithinRel(0.5 * pi, 1e-15));
    CHECK_THAT(parse_number("4PI"), WithinRel(4 * pi, 1e-15));
    CHECK_THROWS_AS(parse_number("abc"), ConfigError);
    CHECK_THROWS_AS(parse_number(""), ConfigError);
    CHECK_THROWS_AS(parse_number("1.0x"), ConfigError);
    CHECK_THROWS_AS(parse_number("inf"), ConfigError);
    try {
        (void)parse_number("oops", "gfl.wlpf", 7);
        FAIL();
    } catch (const ConfigError& e) {
        CHECK(e.key() == "gfl.wlpf");
        CHECK(e.line() == 7);
        CHECK_THAT(e.what(), ContainsSubstring("line 7"));
    }
}

TEST_CASE("booleans", "[config]") {
    CHECK(parse_bool("Yes"));
    CHECK_FALSE(parse_bool("off"));
    CHECK_THROWS_AS(parse_bool("maybe"), ConfigError);
}

TEST_CASE("documents parse sections, comments and raw lines", "[config][document]") {
    const Document d = Document::parse(
        "# comment\n"
        "; another\n"
        "[plant]\n"
        "  R_i = 0.25   \n"
        "\n"
        "[gfl]\n"
        "wlpf = 10pi # trailing comment\n"
        "[events]\n"
        "1 setpoint P0=5e3\n"
        "2 setpoint Q0=1e3\n");
    CHECK(d.number("plant.R_i") == 0.25);
    CHECK_THAT(d.number("gfl.wlpf"), WithinRel(10 * pi, 1e-15));
    CHECK(d.number("gfl.missing", 3.0) == 3.0);
    CHECK_THROWS_AS(d.number("gfl.missing"), ConfigError);
    CHECK(d.find("plant.R_i")->line == 4);
    const auto ev = d.lines("events");
    REQUIRE(ev.size() == 2);
    CHECK(ev[0].text == "1 setpoint P0=5e3");
    CHECK(ev[1].line == 10);
}

TEST_CASE("malformed documents report their line", "[config][document]") {
    auto line_of = [](std::string_view text) {
        try {
            (void)Document::parse(text);
        } catch (const ConfigError& e) {
            return e.line();
        }
        return -1;
    };
    CHECK(line_of("[a]\nx = 1\n[b\n") == 3);
    CHECK(line_of("x = 1\n") == 1);
    CHECK(line_of("[a]\nnovalue\n") == 2);
    CHECK(line_of("[a]\nx = 1\nx = 2\n") == 3);
    CHECK(line_of("[a]\n = 2\n") == 2);
    CHECK(line_of("[]\n") == 1);
}

TEST_CASE("overrides replace and add entries", "[config][override]") {
    Document d = Document::parse("[gfl]\nwlpf = 20pi\n[events]\n1 setpoint P0=1\n");
    d.apply_override("gfl.wlpf=4pi");
    d.apply_override("plant.R_g = 0.2");
    CHECK_THAT(d.number("gfl.wlpf"), WithinRel(4 * pi, 1e-15));
    CHECK(d.number("plant.R_g") == 0.2);
    CHECK(d.find("plant.R_g")->line == 0);
    CHECK_THROWS_AS(d.apply_override("nodot=1"), ConfigError);
    CHECK_THROWS_AS(d.apply_override("gfl.wlpf"), ConfigError);
    CHECK_THROWS_AS(d.apply_override("events.x=1"), ConfigError);
}

TEST_CASE("unknown keys and sections are rejected", "[config][schema]") {
    CHECK(error_line(kMinimal + "[gfl]\nwlfp = 10pi\n") == 6);
    CHECK(error_line(kMinimal + "[controller]\nx = 1\n") == 6);
    CHECK(error_line(kMinimal + "warmup = -1\n") > 0);
    CHECK_NOTHROW(scenarios::from_config(Document::parse(kMinimal)));
}

TEST_CASE("events are validated with line numbers", "[config][events]") {
    const std::string ev = kMinimal + "[events]\n";
    CHECK(error_line(ev + "0.5 setpoint P0=1e3\n0.2 setpoint P0=2e3\n") == 7);
    CHECK(error_line(ev + "5 setpoint P0=1e3\n") == 6);
    CHECK(error_line(ev + "0.5 explode\n") == 6);
    CHECK(error_line(ev + "0.5 setpoint\n") == 6);
    CHECK(error_line(ev + "0.5 setpoint P0=1e3 colour=red\n") == 6);
    CHECK(error_line(ev + "0.5 setpoint unit=nobody P0=1e3\n") == 6);
    CHECK(error_line(ev + "0.5 setpoint P0\n") == 6);
}

TEST_CASE("controller gains outside the stable region name their key", "[config][gains]") {
    try {
        (void)scenarios::builtin("power_tracking", {"gfl.kiP=" + std::to_string(2 * 20 * pi * 2e-4)});
        FAIL();
    } catch (const ConfigError& e) {
        CHECK(e.key() == "gfl.kiP");
        CHECK_THAT(e.what(), ContainsSubstring("omega_lpf"));
    }
}

TEST_CASE("topology constraints", "[config][schema]") {
    CHECK_THROWS_AS(scenarios::builtin("power_tracking", {"gfm.P0=1e3"}), ConfigError);
    CHECK_THROWS_AS(scenarios::builtin("nope"), ConfigError);
    CHECK_THROWS_AS(Document::load("/nonexistent/file.ini"), ConfigError);
}

TEST_CASE("scenario files match the built-in definitions", "[config][scenarios]") {
    const std::filesystem::path dir = MGSIM_SCENARIO_DIR;
    for (const std::string& name : scenarios::builtin_names()) {
        INFO(name);
        const auto path = dir / (name + ".ini");
        REQUIRE(std::filesystem::exists(path));
        CHECK(read_file(path) == scenarios::builtin_text(name));
        const scenarios::Scenario from_file = scenarios::from_config(Document::load(path));
        const scenarios::Scenario built = scenarios::builtin(name);
        CHECK(from_file.name == built.name);
        CHECK(from_file.kind == built.kind);
        CHECK(from_file.simulation.units.size() == built.simulation.units.size());
    }
}

TEST_CASE("built-in scenarios carry their timelines", "[config][scenarios]") {
    const auto pt = scenarios::builtin("power_tracking");
    CHECK(pt.topology == scenarios::Topology::stiff_grid);
    CHECK(pt.timeline.setpoint_times == std::vector<double>{1, 4, 7, 10});
    CHECK(pt.simulation.grid_connected);

    const auto ramp = scenarios::builtin("load_ramp");
    CHECK(ramp.timeline.load_event == 1.0);
    CHECK(ramp.timeline.ramp_duration == 5.0);
    CHECK_FALSE(ramp.simulation.grid_connected);
    CHECK(ramp.forming_unit == "gfm");

    const auto tr = scenarios::builtin("transition", {"transition.eps_max=100"});
    CHECK(tr.timeline.to_forming == 2.0);
    CHECK(tr.timeline.to_following == 7.0);
    const auto& sched = tr.simulation.units.at(1).epsilon.schedules();
    REQUIRE(sched.size() == 2);
    CHECK(sched[0].eps_max == 100.0);
    CHECK(sched[1].direction == control::TransitionDirection::gfm_to_gfl);

    const auto wl = scenarios::builtin("load_step", {"gfl.wlpf=4pi"});
    CHECK_THAT(wl.simulation.units.at(1).controller.proposed.omega_lpf(), WithinRel(4 * pi, 1e-15));
}
