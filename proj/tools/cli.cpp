#include "cli.hpp"

#include "mgsim/analysis.hpp"
#include "mgsim/config.hpp"
#include "mgsim/errors.hpp"
#include "mgsim/scenarios.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

namespace mgsim::cli {

namespace {

namespace fs = std::filesystem;
using scenarios::Scenario;

std::string num(double v, int precision = 9) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(precision) << (v == 0.0 ? 0.0 : v);
    return os.str();
}

std::string complex_str(numerics::Complex z) {
    std::ostringstream os;
    os << num(z.real());
    if (z.imag() != 0.0) os << (z.imag() < 0 ? " - " : " + ") << num(std::abs(z.imag())) << "j";
    return os.str();
}

fs::path default_out() {
    if (const char* env = std::getenv("MGSIM_OUT"); env && *env) return env;
    return ".";
}

struct ScenarioArgs {
    std::string scenario;
    std::vector<std::string> overrides;
    std::optional<std::string> wlpf;
    std::optional<std::string> method;
    std::optional<std::string> controller;
};

void add_scenario_options(CLI::App& cmd, ScenarioArgs& a, const std::string& fallback) {
    a.scenario = fallback;
    cmd.add_option("--scenario,-s", a.scenario, "built-in name or path to a scenario file")->capture_default_str();
    cmd.add_option("--set", a.overrides, "override as section.key=value (repeatable)");
    cmd.add_option("--wlpf", a.wlpf, "GFL filter bandwidth [rad/s], e.g. 20pi");
}

config::Document load_document(const ScenarioArgs& a) {
    const auto names = scenarios::builtin_names();
    config::Document doc;
    if (std::find(names.begin(), names.end(), a.scenario) != names.end()) {
        doc = config::Document::parse(scenarios::builtin_text(a.scenario));
    } else if (fs::is_regular_file(a.scenario)) {
        doc = config::Document::load(a.scenario);
    } else {
        throw ConfigError("no built-in scenario or file named '" + a.scenario + "'", "scenario");
    }
    for (const std::string& o : a.overrides) doc.apply_override(o);
    if (a.wlpf) doc.set("gfl.wlpf", *a.wlpf);
    if (a.method) doc.set("transition.method", *a.method);
    if (a.controller) doc.set("gfl.controller", *a.controller);
    return doc;
}

const sim::UnitSpec& unit_named(const Scenario& sc, const std::string& name) {
    for (const sim::UnitSpec& u : sc.simulation.units)
        if (u.name == name) return u;
    throw ConfigError("scenario has no unit named '" + name + "'", name);
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path.string() + "'", "out");
    f << text;
    if (!f) throw ConfigError("failed writing '" + path.string() + "'", "out");
}

std::vector<std::string> plot_columns(const Scenario& sc, const trace::Trace& tr) {
    std::vector<std::string> cols;
    for (const sim::UnitSpec& u : sc.simulation.units) {
        cols.push_back("P_" + u.name);
        cols.push_back("Q_" + u.name);
    }
    const std::string freq = sc.forming_unit.empty() ? sc.unit_under_test : sc.forming_unit;
    cols.push_back("omega_" + freq);
    if (tr.has("eps_P_" + sc.unit_under_test)) cols.push_back("eps_P_" + sc.unit_under_test);
    return cols;
}

/// Renders all output files in memory first so failures leave nothing behind.
void write_outputs(const fs::path& dir, const scenarios::Result& r) {
    std::ostringstream csv;
    r.simulation.trace.write_csv(csv);
    std::ostringstream gp;
    const auto cols = plot_columns(r.scenario, r.simulation.trace);
    trace::write_gnuplot_script(gp, r.simulation.trace, "trace.csv", cols);
    const std::string metrics = scenarios::format_metrics(r);
    fs::create_directories(dir);
    write_file(dir / "trace.csv", csv.str());
    write_file(dir / "trace.gp", gp.str());
    write_file(dir / "metrics.txt", metrics);
}

int cmd_simulate(const ScenarioArgs& a, const fs::path& out_dir, std::ostream& out) {
    const Scenario sc = scenarios::from_config(load_document(a));
    const scenarios::Result r = scenarios::run(sc);
    write_outputs(out_dir, r);
    out << scenarios::format_metrics(r);
    out << "wrote " << (out_dir / "trace.csv").string() << ", metrics.txt, trace.gp\n";
    return kOk;
}

struct VsgArgs {
    std::optional<double> J, D, k_omega;
};

std::string analysis_report(const Scenario& sc, double eps, const VsgArgs& vsg_args) {
    const plant::PlantParams& p = sc.simulation.params;
    const control::UnitController& ctl = unit_named(sc, sc.unit_under_test).controller;
    const control::ProposedConfig& cfg = ctl.proposed;
    const double z = p.line_impedance();
    const double g = p.V_0 * p.V_0 / z;
    const double w = cfg.omega_lpf();

    std::ostringstream os;
    os << "# power-loop analysis\n";
    os << "[parameters]\n";
    os << "V_0 = " << num(p.V_0) << "\nZ = " << num(z) << "\ng = " << num(g) << "\n";
    os << "omega_lpf = " << num(w) << "\nk_pP = " << num(cfg.k_pP()) << "\nk_iP = " << num(cfg.k_iP())
       << "\nk_pQ = " << num(cfg.k_pQ()) << "\nk_iQ = " << num(cfg.k_iQ()) << "\nepsilon = " << num(eps) << "\n";

    const numerics::Polynomial cp = analysis::char_poly_active(p, cfg, eps);
    os << "\n[active loop]\n";
    os << "char_poly (ascending) =";
    for (double c : cp.coefficients()) os << " " << num(c);
    os << "\n";
    const bool stable = analysis::active_loop_stable(p, cfg, eps);
    os << "routh_hurwitz = " << (stable ? "stable" : "unstable") << "\n";
    os << "condition_margin = " << num(cfg.active_condition_margin()) << "\n";
    os << "condition_margin_over_omega_lpf = " << num(cfg.active_condition_margin() / w) << "\n";
    auto poles = numerics::poly_roots(cp);
    std::sort(poles.begin(), poles.end(), [](auto x, auto y) {
        return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
    });
    for (std::size_t i = 0; i < poles.size(); ++i) os << "pole_" << i << " = " << complex_str(poles[i]) << "\n";

    const auto kp = analysis::proposed_active_gain(cfg, eps);
    const auto kq = analysis::proposed_reactive_gain(cfg, eps);
    const auto cl_p = analysis::active_power_cltf(p, cfg, eps);
    const auto cl_q = analysis::reactive_power_cltf(p, cfg, eps);
    os << "\n[dc gains]\n";
    os << "K_P(0) = " << num(kp.dc_gain()) << "\nK_Q(0) = " << num(kq.dc_gain()) << "\n";
    os << "P_ref_to_P(0) = " << num(cl_p.reference.dc_gain()) << "\nomega_g_to_P(0) = " << num(cl_p.disturbance.dc_gain())
       << "\n";
    os << "Q_ref_to_Q(0) = " << num(cl_q.reference.dc_gain()) << "\nV_g_to_Q(0) = " << num(cl_q.disturbance.dc_gain())
       << "\n";

    const auto conv = analysis::conventional_gfl_sensitivity(p, ctl.pll);
    const auto prop = analysis::proposed_sensitivity(cfg, eps, eps);
    os << "\n[sensitivity to power mismatch]\n";
    os << "# omega  |conv V/P|  |proposed V/Q|  |conv w/Q|  |proposed w/P|\n";
    std::vector<double> freqs{0.1, 1.0, 10.0, w, 100.0, 1000.0};
    std::sort(freqs.begin(), freqs.end());
    for (double f : freqs) {
        os << num(f, 6) << "  " << num(conv.voltage.gain(f), 6) << "  " << num(prop.voltage.gain(f), 6) << "  "
           << num(conv.frequency.gain(f), 6) << "  " << num(prop.frequency.gain(f), 6) << "\n";
    }
    os << "conventional_exceeds_proposed_at_omega_lpf = "
       << (conv.voltage.gain(w) > prop.voltage.gain(w) && conv.frequency.gain(w) > prop.frequency.gain(w) ? "yes" : "no")
       << "\n";

    analysis::VsgParams vsg;
    const double damping = 1.0 / cfg.k_pP();
    vsg.omega_0 = p.omega_0;
    vsg.D = vsg_args.D.value_or(0.5 * damping);
    vsg.k_omega = vsg_args.k_omega.value_or(damping - vsg.D);
    vsg.J = vsg_args.J.value_or(p.omega_0 * (vsg.D + vsg.k_omega) / w);
    const auto eq = analysis::vsg_equivalence(vsg);
    os << "\n[vsg equivalence]\n";
    os << "J = " << num(vsg.J) << "\nH = " << num(vsg.H()) << "\nD = " << num(vsg.D) << "\nk_omega = " << num(vsg.k_omega)
       << "\n";
    os << "# reading  k_p  omega_lpf  max_mismatch\n";
    os << "J  " << num(eq.k_p) << "  " << num(eq.omega_lpf_J) << "  " << num(eq.mismatch_J) << "\n";
    os << "H  " << num(eq.k_p) << "  " << num(eq.omega_lpf_H) << "  " << num(eq.mismatch_H) << "\n";
    return os.str();
}

int cmd_analyze(const ScenarioArgs& a, double eps, const VsgArgs& vsg, const std::optional<fs::path>& out_dir,
                std::ostream& out) {
    const Scenario sc = scenarios::from_config(load_document(a));
    const std::string report = analysis_report(sc, eps, vsg);
    if (out_dir) {
        fs::create_directories(*out_dir);
        write_file(*out_dir / "analysis.txt", report);
    }
    out << report;
    return kOk;
}

struct CertifyArgs {
    std::optional<double> eps_max;
    std::optional<double> eps_rate;
    std::string realization = "companion";
    std::size_t grid_points = 41;
};

int cmd_certify(const ScenarioArgs& a, const CertifyArgs& c, const std::optional<fs::path>& out_dir,
                std::ostream& out) {
    const Scenario sc = scenarios::from_config(load_document(a));
    const sim::UnitSpec& u = unit_named(sc, sc.unit_under_test);
    control::TransitionSchedule schedule;
    for (const auto& s : u.epsilon.schedules()) {
        if (s.direction == control::TransitionDirection::gfl_to_gfm) {
            schedule = s;
            break;
        }
    }
    if (c.eps_max) schedule.eps_max = *c.eps_max;
    if (c.eps_rate) schedule.ramp_rate = *c.eps_rate;
    if (schedule.eps_max < 0.0) throw ConfigError("eps_max must be non-negative", "transition.eps_max");

    analysis::CertificateOptions opt;
    opt.grid_points = c.grid_points;
    if (c.realization == "companion") opt.realization = analysis::Realization::companion;
    else if (c.realization == "physical") opt.realization = analysis::Realization::physical;
    else throw ConfigError("realization must be companion or physical", "realization");

    const auto cert = analysis::transition_certificate(sc.simulation.params, u.controller.proposed, schedule, opt);
    std::ostringstream os;
    os << "# transition certificate\n";
    os << "realization = " << c.realization << "\n";
    os << "epsilon_max = " << num(cert.epsilon_max) << "\n";
    os << "epsilon_rate = " << num(schedule.ramp_rate) << "\n";
    os << "alpha_bound = " << num(cert.alpha_bound()) << "\n";
    os << "log_alpha_bound = " << num(cert.log_alpha) << "\n";
    os << "state_norm_gain = " << num(cert.state_norm_gain()) << "\n";
    os << "log_state_norm_gain = " << num(cert.log_state_norm_gain) << "\n";
    os << "dwell_time = " << num(cert.dwell_time) << "\n";
    os << "\n# epsilon  lambda_min(W)  lambda_max(W)  |dW/deps|\n";
    for (const auto& s : cert.grid) {
        os << num(s.epsilon, 6) << "  " << num(s.lambda_min) << "  " << num(s.lambda_max) << "  " << num(s.dW_norm) << "\n";
    }
    if (out_dir) {
        fs::create_directories(*out_dir);
        write_file(*out_dir / "certificate.txt", os.str());
    }
    out << os.str();
    return kOk;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

int cmd_sweep(const ScenarioArgs& a, const std::string& key, const std::string& values, unsigned jobs,
              const fs::path& out_dir, std::ostream& out) {
    const auto list = split_list(values);
    if (list.empty()) throw ConfigError("sweep needs at least one value", "values");
    std::vector<Scenario> runs;
    for (const std::string& v : list) {
        config::Document doc = load_document(a);
        doc.set(key, v);
        runs.push_back(scenarios::from_config(doc));
    }
    const auto results = scenarios::run_parallel(runs, jobs);

    std::ostringstream summary;
    summary << "# " << key
            << "  rocof_max  overshoot_P  overshoot_Q  steady_state_error_P  steady_state_error_Q  settling_time  "
               "saturated\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& m = results[i].metrics;
        summary << list[i] << "  " << num(m.rocof_max) << "  " << num(m.overshoot_P) << "  " << num(m.overshoot_Q)
                << "  " << num(m.steady_state_error_P) << "  " << num(m.steady_state_error_Q) << "  "
                << num(m.settling_time) << "  " << (m.saturated ? "true" : "false") << "\n";
    }
    for (std::size_t i = 0; i < results.size(); ++i) write_outputs(out_dir / ("run_" + std::to_string(i)), results[i]);
    write_file(out_dir / "sweep.txt", summary.str());
    out << summary.str();
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"mgsim: microgrid inverter control simulator"};
    app.require_subcommand(1);

    ScenarioArgs sim_args, an_args, cert_args, sweep_args;
    std::string out_dir = default_out().string();
    std::optional<std::string> report_dir;

    CLI::App* simulate = app.add_subcommand("simulate", "run a scenario, write trace.csv, metrics.txt and trace.gp");
    add_scenario_options(*simulate, sim_args, "power_tracking");
    simulate->add_option("--method", sim_args.method, "transition method: smooth or sudden");
    simulate->add_option("--controller", sim_args.controller, "GFL controller: proposed or conventional");
    simulate->add_option("--out,-o", out_dir, "output directory (default $MGSIM_OUT or .)");

    double eps = 0.0;
    VsgArgs vsg;
    CLI::App* analyze = app.add_subcommand("analyze", "transfer-function and stability report");
    add_scenario_options(*analyze, an_args, "power_tracking");
    analyze->add_option("--eps", eps, "pole shift epsilon [1/s]")->capture_default_str();
    analyze->add_option("--vsg-J", vsg.J, "VSG inertia J [kg m^2]");
    analyze->add_option("--vsg-D", vsg.D, "VSG damping D");
    analyze->add_option("--vsg-kw", vsg.k_omega, "VSG governor gain k_omega");
    analyze->add_option("--out,-o", report_dir, "also write analysis.txt here");

    CertifyArgs cargs;
    CLI::App* certify = app.add_subcommand("certify", "Lyapunov transition certificate report");
    add_scenario_options(*certify, cert_args, "transition");
    certify->add_option("--eps-max", cargs.eps_max, "final epsilon [1/s]");
    certify->add_option("--eps-rate", cargs.eps_rate, "epsilon ramp rate [1/s^2]");
    certify->add_option("--realization", cargs.realization, "companion or physical")->capture_default_str();
    certify->add_option("--grid-points", cargs.grid_points, "epsilon grid size")->capture_default_str();
    certify->add_option("--out,-o", report_dir, "also write certificate.txt here");

    std::string key = "gfl.wlpf";
    std::string values;
    unsigned jobs = 1;
    CLI::App* sweep = app.add_subcommand("sweep", "run a scenario over a list of values of one key");
    add_scenario_options(*sweep, sweep_args, "load_step");
    sweep->add_option("--key", key, "dotted key to vary")->capture_default_str();
    sweep->add_option("--values", values, "comma-separated values, e.g. 4pi,10pi,20pi")->required();
    sweep->add_option("--jobs,-j", jobs, "worker threads")->capture_default_str();
    sweep->add_option("--out,-o", out_dir, "output directory (default $MGSIM_OUT or .)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "mgsim: " << e.what() << "\n";
        return kConfig;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim_args, out_dir, out);
        if (analyze->parsed()) {
            std::optional<fs::path> dir;
            if (report_dir) dir = *report_dir;
            return cmd_analyze(an_args, eps, vsg, dir, out);
        }
        if (certify->parsed()) {
            std::optional<fs::path> dir;
            if (report_dir) dir = *report_dir;
            return cmd_certify(cert_args, cargs, dir, out);
        }
        if (sweep->parsed()) return cmd_sweep(sweep_args, key, values, jobs, out_dir, out);
    } catch (const ConfigError& e) {
        err << "mgsim: configuration error: " << e.what() << "\n";
        return kConfig;
    } catch (const ContractViolation& e) {
        err << "mgsim: invalid input: " << e.what() << "\n";
        return kConfig;
    } catch (const CertificateUnavailable& e) {
        err << "mgsim: certificate unavailable at epsilon = " << num(e.epsilon()) << ": " << e.what() << "\n";
        return kCertificate;
    } catch (const ScenarioFailed& e) {
        err << "mgsim: scenario failed (signal " << e.signal() << "): " << e.what() << "\n";
        return kNumerical;
    } catch (const Error& e) {
        err << "mgsim: numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const fs::filesystem_error& e) {
        err << "mgsim: " << e.what() << "\n";
        return kConfig;
    }
    return kConfig;
}

}  // namespace mgsim::cli
