#pragma once

// Scenario configuration, command entry points, and data export: the
// operational shell around the solver. Configs are JSON files with the
// schema documented in the README; unknown keys are errors, keys filled
// with defaults are reported.

#include "mfgb/assumptions.hpp"
#include "mfgb/field_io.hpp"
#include "mfgb/verify.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace mfgb {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FieldSpec {
    std::string type = "constant";  // constant | sine | file
    double value = 0.0;
    double amplitude = 0.0;
    double baseline = 0.0;
    std::string path;
};

struct Scenario {
    // model section
    std::string model_id = "prototype";
    ModelConstants constants;
    std::vector<double> B;                       // N rows of N*M, flattened
    std::string b0_kind = "zero";                // zero | polynomial
    std::vector<std::vector<double>> b0_coeffs;  // per spatial component
    std::string A_kind = "identity";             // identity | zero | constant
    std::vector<double> A_entries;               // N blocks of d*M when constant

    GridSpec grid;
    FieldSpec m0;
    std::vector<FieldSpec> u_T;  // one per player

    SolverConfig solver;
    int assumption_samples = 10000;
    int diagnostics_samples = 10000;
    double eps0 = 0.0;  // 0 -> 1/(4N)

    std::string out_dir = "out";
    std::vector<std::string> formats = {"csv", "bin"};

    std::vector<std::string> defaulted;  // keys filled with defaults
    GateReport gates;                    // evaluated at load time
    std::string source_path;

    std::unique_ptr<GameModel> make_model() const {
        if (model_id != "prototype")
            throw ConfigError("unknown model id '" + model_id +
                              "' (custom models are registered programmatically)");
        std::vector<double> A;
        if (A_kind == "zero") {
            A.assign(static_cast<std::size_t>(constants.N) * constants.d * constants.M, 0.0);
        } else if (A_kind == "constant") {
            A = A_entries;
        }
        return std::make_unique<PrototypeModel>(constants, B, A,
                                                b0_kind == "polynomial" ? b0_coeffs
                                                                        : std::vector<std::vector<double>>{});
    }

    ScalarField build_m0() const {
        ScalarField f = build_scalar(m0, /*default_baseline=*/1.0);
        if (f.min_value() < 0.0) throw ConfigError("initial.m0 must be nonnegative");
        return f;
    }

    MultiField build_uT() const {
        MultiField f(grid, constants.N);
        for (int i = 0; i < constants.N; ++i)
            f.comp(i) = build_scalar(u_T[static_cast<std::size_t>(i)], /*default_baseline=*/0.0);
        return f;
    }

private:
    ScalarField build_scalar(const FieldSpec& spec, double default_baseline) const {
        ScalarField f(grid, 0.0);
        if (spec.type == "constant") {
            f.fill(spec.value);
        } else if (spec.type == "sine") {
            const double base = spec.baseline == 0.0 && default_baseline != 0.0
                                    ? default_baseline
                                    : spec.baseline;
            double x[2];
            for (std::int64_t i = 0; i < grid.nodes(); ++i) {
                grid.node_coords(i, x);
                f[i] = base + spec.amplitude * std::sin(2.0 * std::numbers::pi * x[0]);
            }
        } else if (spec.type == "file") {
            const FieldFileData data = read_field_bin(spec.path);
            if (data.d != grid.d || data.n != grid.n || data.components != 1)
                throw ConfigError("field file '" + spec.path + "' does not match the grid");
            for (std::int64_t i = 0; i < grid.nodes(); ++i)
                f[i] = data.values[static_cast<std::size_t>(i)];
        } else {
            throw ConfigError("unknown field type '" + spec.type + "'");
        }
        return f;
    }
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {
using json = nlohmann::json;

inline void reject_unknown(const json& obj, const char* where,
                           std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError(std::string("unknown key '") + key + "' in " + where);
    }
}

template <class T>
inline T take(const json& obj, const char* section, const char* key, T fallback,
              std::vector<std::string>& defaulted) {
    if (obj.contains(key)) {
        try {
            return obj.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("bad value for '") + section + "." + key + "'");
        }
    }
    defaulted.push_back(std::string(section) + "." + key);
    return fallback;
}

inline FieldSpec parse_field_spec(const json& obj, const char* where) {
    if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
    reject_unknown(obj, where, {"type", "value", "amplitude", "baseline", "path"});
    FieldSpec spec;
    if (!obj.contains("type")) throw ConfigError(std::string(where) + " needs a 'type'");
    spec.type = obj.at("type").get<std::string>();
    if (obj.contains("value")) spec.value = obj.at("value").get<double>();
    if (obj.contains("amplitude")) spec.amplitude = obj.at("amplitude").get<double>();
    if (obj.contains("baseline")) spec.baseline = obj.at("baseline").get<double>();
    if (obj.contains("path")) spec.path = obj.at("path").get<std::string>();
    if (spec.type != "constant" && spec.type != "sine" && spec.type != "file")
        throw ConfigError(std::string(where) + ": unknown field type '" + spec.type + "'");
    if (spec.type == "file" && spec.path.empty())
        throw ConfigError(std::string(where) + ": file type needs a 'path'");
    return spec;
}
}  // namespace detail

inline Scenario parse_config(const std::string& path, bool strict = false) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    detail::json root;
    try {
        root = detail::json::parse(is);
    } catch (const detail::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be an object");
    detail::reject_unknown(root, "config", {"model", "grid", "initial", "solver", "output"});

    Scenario sc;
    sc.source_path = path;
    auto& def = sc.defaulted;

    const detail::json model = root.value("model", detail::json::object());
    detail::reject_unknown(model, "model",
                           {"id", "N", "M", "d", "r", "s", "s0", "alpha", "K", "C0", "C1",
                            "gamma", "B", "b0", "A"});
    sc.model_id = detail::take<std::string>(model, "model", "id", "prototype", def);
    sc.constants.N = detail::take<int>(model, "model", "N", 1, def);
    sc.constants.M = detail::take<int>(model, "model", "M", 1, def);
    sc.constants.r = detail::take<double>(model, "model", "r", 0.0, def);
    sc.constants.s = detail::take<double>(model, "model", "s", 0.0, def);
    sc.constants.s0 = detail::take<double>(model, "model", "s0", 0.0, def);
    sc.constants.alpha = detail::take<double>(model, "model", "alpha", 0.0, def);
    sc.constants.K = detail::take<double>(model, "model", "K", 1.0, def);
    sc.constants.C0 = detail::take<double>(model, "model", "C0", 0.5, def);
    sc.constants.C1 = detail::take<double>(model, "model", "C1", 1.0, def);
    sc.constants.gamma = detail::take<double>(model, "model", "gamma", 0.0, def);

    const detail::json grid = root.value("grid", detail::json::object());
    detail::reject_unknown(grid, "grid", {"d", "n", "T", "nt"});
    sc.grid.d = detail::take<int>(grid, "grid", "d", 1, def);
    sc.grid.n = detail::take<int>(grid, "grid", "n", 64, def);
    sc.grid.T = detail::take<double>(grid, "grid", "T", 1.0, def);
    sc.grid.nt = detail::take<int>(grid, "grid", "nt", 128, def);
    sc.constants.d = sc.grid.d;
    if (model.contains("d") && model.at("d").get<int>() != sc.grid.d)
        throw ConfigError("model.d and grid.d disagree");

    try {
        sc.grid.validate();
        sc.constants.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const int N = sc.constants.N, M = sc.constants.M, d = sc.constants.d;

    if (model.contains("B")) {
        const detail::json& B = model.at("B");
        if (!B.is_array() || static_cast<int>(B.size()) != N)
            throw ConfigError("model.B must be an array of N rows");
        for (const auto& row : B) {
            if (!row.is_array() || static_cast<int>(row.size()) != N * M)
                throw ConfigError("model.B rows must have N*M entries");
            for (const auto& e : row) sc.B.push_back(e.get<double>());
        }
    } else {
        def.push_back("model.B");
    }
    if (model.contains("b0")) {
        const detail::json& b0 = model.at("b0");
        if (b0.is_string()) {
            if (b0.get<std::string>() != "zero") throw ConfigError("model.b0: unknown choice");
            sc.b0_kind = "zero";
        } else if (b0.is_object()) {
            detail::reject_unknown(b0, "model.b0", {"coefficients"});
            sc.b0_kind = "polynomial";
            const detail::json& co = b0.at("coefficients");
            if (!co.is_array() || static_cast<int>(co.size()) != d)
                throw ConfigError("model.b0.coefficients must have one row per dimension");
            for (const auto& row : co)
                sc.b0_coeffs.push_back(row.get<std::vector<double>>());
        } else {
            throw ConfigError("model.b0 must be \"zero\" or an object");
        }
    } else {
        def.push_back("model.b0");
    }
    if (model.contains("A")) {
        const detail::json& A = model.at("A");
        if (A.is_string()) {
            sc.A_kind = A.get<std::string>();
            if (sc.A_kind != "identity" && sc.A_kind != "zero")
                throw ConfigError("model.A: unknown choice '" + sc.A_kind + "'");
        } else if (A.is_object()) {
            detail::reject_unknown(A, "model.A", {"entries"});
            sc.A_kind = "constant";
            const detail::json& entries = A.at("entries");
            if (!entries.is_array() || static_cast<int>(entries.size()) != N)
                throw ConfigError("model.A.entries must have one block per player");
            for (const auto& block : entries) {
                if (!block.is_array() || static_cast<int>(block.size()) != d * M)
                    throw ConfigError("model.A.entries blocks must have d*M entries");
                for (const auto& e : block) sc.A_entries.push_back(e.get<double>());
            }
        } else {
            throw ConfigError("model.A must be a string or an object");
        }
    } else {
        def.push_back("model.A");
    }

    const detail::json initial = root.value("initial", detail::json::object());
    detail::reject_unknown(initial, "initial", {"m0", "u_T"});
    if (initial.contains("m0")) {
        sc.m0 = detail::parse_field_spec(initial.at("m0"), "initial.m0");
    } else {
        sc.m0 = FieldSpec{"constant", 1.0, 0.0, 0.0, ""};
        def.push_back("initial.m0");
    }
    if (initial.contains("u_T")) {
        const detail::json& ut = initial.at("u_T");
        if (ut.is_array()) {
            if (static_cast<int>(ut.size()) != N)
                throw ConfigError("initial.u_T must have one entry per player");
            for (const auto& e : ut)
                sc.u_T.push_back(detail::parse_field_spec(e, "initial.u_T"));
        } else {
            const FieldSpec one = detail::parse_field_spec(ut, "initial.u_T");
            sc.u_T.assign(static_cast<std::size_t>(N), one);
        }
    } else {
        sc.u_T.assign(static_cast<std::size_t>(N), FieldSpec{"constant", 0.0, 0.0, 0.0, ""});
        def.push_back("initial.u_T");
    }

    const detail::json solver = root.value("solver", detail::json::object());
    detail::reject_unknown(solver, "solver",
                           {"theta", "picard_tol", "max_picard", "newton_tol", "max_newton",
                            "seed", "force_newton"});
    sc.solver.theta = detail::take<double>(solver, "solver", "theta", 0.5, def);
    sc.solver.picard_tol = detail::take<double>(solver, "solver", "picard_tol", 1e-8, def);
    sc.solver.max_picard = detail::take<int>(solver, "solver", "max_picard", 200, def);
    sc.solver.newton_tol = detail::take<double>(solver, "solver", "newton_tol", 1e-12, def);
    sc.solver.max_newton = detail::take<int>(solver, "solver", "max_newton", 50, def);
    sc.solver.seed = detail::take<std::uint64_t>(solver, "solver", "seed", 12345, def);
    if (solver.contains("force_newton")) sc.solver.force_newton = solver.at("force_newton").get<bool>();
    try {
        sc.solver.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    const detail::json output = root.value("output", detail::json::object());
    detail::reject_unknown(output, "output",
                           {"directory", "formats", "assumption_samples", "diagnostics_samples",
                            "eps0"});
    sc.out_dir = detail::take<std::string>(output, "output", "directory", "out", def);
    sc.formats = detail::take<std::vector<std::string>>(output, "output", "formats",
                                                        {"csv", "bin"}, def);
    sc.assumption_samples = detail::take<int>(output, "output", "assumption_samples", 10000, def);
    sc.diagnostics_samples = detail::take<int>(output, "output", "diagnostics_samples", 10000, def);
    sc.eps0 = detail::take<double>(output, "output", "eps0", 0.0, def);

    sc.gates = check_gates(sc.constants, sc.model_id == "prototype");
    if (strict && !sc.gates.all_pass()) {
        std::string msg = "parameter gates failed in strict mode:";
        for (const auto& gate : sc.gates.gates)
            if (!gate.pass) msg += " [" + gate.id + ": " + gate.detail + "]";
        throw ConfigError(msg);
    }
    return sc;
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

enum class Command { check, solve, verify, diagnose };

inline const char* command_name(Command c) {
    switch (c) {
        case Command::check: return "check";
        case Command::solve: return "solve";
        case Command::verify: return "verify";
        case Command::diagnose: return "diagnose";
    }
    return "?";
}

struct RunOptions {
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    bool strict = false;
};

namespace detail {
inline json scenario_to_json(const Scenario& sc) {
    json j;
    j["model"] = {{"id", sc.model_id},  {"N", sc.constants.N},     {"M", sc.constants.M},
                  {"d", sc.constants.d}, {"r", sc.constants.r},     {"s", sc.constants.s},
                  {"s0", sc.constants.s0}, {"alpha", sc.constants.alpha},
                  {"K", sc.constants.K}, {"C0", sc.constants.C0},  {"C1", sc.constants.C1},
                  {"gamma", sc.constants.gamma_effective()}, {"b0", sc.b0_kind},
                  {"A", sc.A_kind}};
    if (!sc.B.empty()) j["model"]["B"] = sc.B;
    if (!sc.A_entries.empty()) j["model"]["A_entries"] = sc.A_entries;
    if (!sc.b0_coeffs.empty()) j["model"]["b0_coefficients"] = sc.b0_coeffs;
    j["grid"] = {{"d", sc.grid.d}, {"n", sc.grid.n}, {"T", sc.grid.T}, {"nt", sc.grid.nt}};
    auto field = [](const FieldSpec& f) {
        json o = {{"type", f.type}};
        if (f.type == "constant") o["value"] = f.value;
        if (f.type == "sine") {
            o["amplitude"] = f.amplitude;
            o["baseline"] = f.baseline;
        }
        if (f.type == "file") o["path"] = f.path;
        return o;
    };
    j["initial"]["m0"] = field(sc.m0);
    j["initial"]["u_T"] = json::array();
    for (const auto& u : sc.u_T) j["initial"]["u_T"].push_back(field(u));
    j["solver"] = {{"theta", sc.solver.theta},         {"picard_tol", sc.solver.picard_tol},
                   {"max_picard", sc.solver.max_picard}, {"newton_tol", sc.solver.newton_tol},
                   {"max_newton", sc.solver.max_newton}, {"seed", sc.solver.seed}};
    j["output"] = {{"directory", sc.out_dir},
                   {"formats", sc.formats},
                   {"assumption_samples", sc.assumption_samples},
                   {"diagnostics_samples", sc.diagnostics_samples},
                   {"eps0", sc.eps0}};
    return j;
}

inline json gates_to_json(const GateReport& gates) {
    json arr = json::array();
    for (const auto& g : gates.gates)
        arr.push_back({{"id", g.id}, {"pass", g.pass}, {"value", g.value}, {"detail", g.detail}});
    return arr;
}

inline void write_manifest(const std::filesystem::path& dir, const Scenario& sc, Command cmd,
                           const RunOptions& opts) {
    json j;
    j["command"] = command_name(cmd);
    j["config_path"] = sc.source_path;
    j["strict"] = opts.strict;
    j["sigma"] = sc.gates.sigma;
    j["gates"] = gates_to_json(sc.gates);
    j["gates_pass"] = sc.gates.all_pass();
    j["defaults_applied"] = sc.defaulted;
    j["resolved"] = scenario_to_json(sc);
    std::ofstream os(dir / "manifest.json");
    os << j.dump(2) << "\n";
}

inline void write_assumptions_csv(const std::filesystem::path& path,
                                  const AssumptionReport& rep) {
    std::ofstream os(path);
    os << "kind,id,pass,value,witness_t,witness_x1,witness_x2,witness_m,witness_v_norm,note\n";
    auto num = [](double v) { return fmt_double(v); };
    for (const auto& g : rep.gates)
        os << "gate," << g.id << "," << (g.pass ? 1 : 0) << "," << num(g.value)
           << ",,,,,," << g.detail << "\n";
    for (const auto& a : rep.assumptions) {
        os << "assumption," << a.id << "," << (a.pass ? 1 : 0) << "," << num(a.fitted_constant)
           << "," << num(a.witness.t) << "," << num(a.witness.x[0]) << ","
           << num(a.witness.x[1]) << "," << num(a.witness.m) << ","
           << num(norm2(a.witness.v)) << "," << a.note << "\n";
    }
}

inline void write_diagnostics_csv(const std::filesystem::path& path,
                                  const DiagnosticsReport& rep) {
    std::ofstream os(path);
    os << "sigma,mass_drift,min_density,sup_m_sigma,sup_u_inf,grad_u_sq,weighted_grad_m_sq,"
          "density_moment,control_energy,energy,interpolation_ratio,sup_w_inf,grad_w_sq,"
          "eps0,lagrangian_lower_C,lagrangian_upper_C,lagrangian_global_C,"
          "lagrangian_lower_C_doubled,lagrangian_upper_C_doubled,lagrangian_global_C_doubled,"
          "lagrangian_stable\n";
    const auto& lb = rep.lagrangian_bounds;
    const double cells[] = {rep.sigma, rep.mass_drift, rep.min_density, rep.sup_m_sigma,
                            rep.sup_u_inf, rep.grad_u_sq, rep.weighted_grad_m_sq,
                            rep.density_moment, rep.control_energy, rep.energy,
                            rep.interpolation_ratio, rep.sup_w_inf, rep.grad_w_sq, lb.eps0,
                            lb.lower_C, lb.upper_C, lb.global_C, lb.lower_C_doubled,
                            lb.upper_C_doubled, lb.global_C_doubled};
    for (double v : cells) os << fmt_double(v) << ",";
    os << (lb.stable ? 1 : 0) << "\n";
}

inline void dump_state(const std::filesystem::path& dir, const Scenario& sc,
                       const SolutionState& state) {
    bool bin = false, csv = false;
    for (const auto& f : sc.formats) {
        bin = bin || f == "bin";
        csv = csv || f == "csv";
    }
    if (bin) {
        write_trajectory_bin((dir / "m.bin").string(), state.m);
        write_trajectory_bin((dir / "u.bin").string(), state.u);
        write_trajectory_bin((dir / "v.bin").string(), state.v);
    }
    if (csv) {
        const int nt = state.m.steps();
        MultiField m0(state.m.grid(), 1), mT(state.m.grid(), 1);
        m0.comp(0) = state.m.slice.front();
        mT.comp(0) = state.m.slice[static_cast<std::size_t>(nt)];
        write_field_csv((dir / "m_t0.csv").string(), m0);
        write_field_csv((dir / "m_tT.csv").string(), mT);
        write_field_csv((dir / "u_t0.csv").string(), state.u.slice.front());
        write_field_csv((dir / "u_tT.csv").string(), state.u.slice[static_cast<std::size_t>(nt)]);
        write_field_csv((dir / "v_t0.csv").string(), state.v.slice.front());
        write_field_csv((dir / "v_tT.csv").string(), state.v.slice[static_cast<std::size_t>(nt)]);
    }
}

// Default perturbation direction: sin(2 pi x_1) in the first control
// component, constant in time.
inline MultiTrajectory default_direction(const GridSpec& g, int controls) {
    MultiTrajectory z = zero_multi_trajectory(g, controls);
    double x[2];
    for (int k = 0; k <= g.nt; ++k)
        for (std::int64_t node = 0; node < g.nodes(); ++node) {
            z.slice[static_cast<std::size_t>(k)].comp(0).grid().node_coords(node, x);
            z.slice[static_cast<std::size_t>(k)].comp(0)[node] =
                std::sin(2.0 * std::numbers::pi * x[0]);
        }
    return z;
}
}  // namespace detail

// Runs one command on a parsed scenario. Exit status: 0 success, 1 solver
// non-convergence, 2 configuration error (thrown as ConfigError by the
// parser before this point, or mapped by the caller).
inline int run_scenario(const Scenario& scenario_in, Command cmd, const RunOptions& opts = {}) {
    Scenario sc = scenario_in;
    if (opts.out_dir) sc.out_dir = *opts.out_dir;
    if (opts.seed) sc.solver.seed = *opts.seed;
    const std::filesystem::path dir(sc.out_dir);
    std::filesystem::create_directories(dir);
    detail::write_manifest(dir, sc, cmd, opts);

    std::ofstream report(dir / "report.txt");
    report.precision(12);
    report << "command: " << command_name(cmd) << "\n";
    report << "sigma: " << sc.gates.sigma << "\n";
    for (const auto& g : sc.gates.gates)
        report << "gate " << g.id << ": " << (g.pass ? "pass" : "FAIL") << " (value "
               << g.value << ", " << g.detail << ")\n";
    if (!sc.defaulted.empty()) {
        report << "defaults applied:";
        for (const auto& k : sc.defaulted) report << " " << k;
        report << "\n";
    }

    const std::unique_ptr<GameModel> model = sc.make_model();

    if (cmd == Command::check) {
        SamplerSpec sampler;
        sampler.count = sc.assumption_samples;
        sampler.seed = sc.solver.seed;
        sampler.t_max = sc.grid.T;
        const AssumptionReport rep = sample_assumptions(*model, sampler);
        detail::write_assumptions_csv(dir / "assumptions.csv", rep);
        report << "assumption samples: " << sampler.count << " (seed " << sampler.seed << ")\n";
        for (const auto& a : rep.assumptions)
            report << "assumption " << a.id << ": " << (a.pass ? "pass" : "FAIL")
                   << " (fitted constant " << a.fitted_constant << ")\n";
        report << "all assumptions pass: " << (rep.all_pass() ? "yes" : "no") << "\n";
        return 0;
    }

    // the remaining commands need a converged state
    SolutionState state;
    StepScheme scheme;
    try {
        state = picard_solve(*model, sc.build_m0(), sc.build_uT(), sc.solver, &scheme);
    } catch (const PicardNonConvergence& e) {
        write_history_csv((dir / "history.csv").string(), e.state.history);
        report << "picard: NOT CONVERGED after " << e.state.history.size()
               << " iterations (residual " << e.state.residual_l2 << ")\n";
        std::cerr << "[mfgb] " << e.what() << "\n";
        return 1;
    }
    write_history_csv((dir / "history.csv").string(), state.history);
    report << "picard: converged in " << state.history.size() << " iterations\n";
    report << "compatibility residual: L2(Q) " << state.residual_l2 << ", max "
           << state.residual_max << "\n";
    if (scheme.cfl_max > 1.0)
        report << "warning: drift CFL reached " << scheme.cfl_max << " (> 1)\n";

    if (cmd == Command::solve) {
        detail::dump_state(dir, sc, state);
        return 0;
    }

    if (cmd == Command::verify) {
        std::vector<GateauxDirection> dirs;
        for (int i = 0; i < sc.constants.N; ++i)
            dirs.push_back({i, detail::default_direction(sc.grid, sc.constants.M)});
        const double step = 1e-3;
        const std::vector<GateauxResult> gx =
            gateaux_check(*model, state, dirs, step, sc.build_uT(), scheme);
        {
            std::ofstream os(dir / "gateaux.csv");
            os << "player,derivative,scale,normalized\n";
            for (const auto& r : gx)
                os << r.player << "," << fmt_double(r.derivative) << ","
                   << fmt_double(r.scale) << "," << fmt_double(r.normalized) << "\n";
        }
        for (const auto& r : gx)
            report << "gateaux player " << r.player << ": derivative " << r.derivative
                   << ", normalized " << r.normalized << "\n";

        // linearized-density oracle at s = 1e-2, 1e-3 for player 0
        const MultiTrajectory z = detail::default_direction(sc.grid, sc.constants.M);
        const LinearizedDensity lin = solve_linearized_fp(*model, state, 0, z, scheme);
        std::ofstream os(dir / "linearized.csv");
        os << "s,rel_err\n";
        std::vector<double> errs;
        for (const double s : {1e-2, 1e-3}) {
            MultiTrajectory v = state.v;
            for (int k = 0; k <= sc.grid.nt; ++k)
                add_scaled(v.slice[static_cast<std::size_t>(k)].comp(0), s,
                           z.slice[static_cast<std::size_t>(k)].comp(0));
            const ScalarTrajectory mp = solve_forward(*model, v, state.m.slice.front(), scheme);
            ScalarTrajectory fd = mp;
            for (int k = 0; k <= sc.grid.nt; ++k) {
                add_scaled(fd.slice[static_cast<std::size_t>(k)], -1.0,
                           state.m.slice[static_cast<std::size_t>(k)]);
                for (auto& vv : fd.slice[static_cast<std::size_t>(k)].values()) vv /= s;
            }
            const double rel = l2q_distance(fd, lin.M) / std::max(l2q_norm(fd), 1e-300);
            errs.push_back(rel);
            os << fmt_double(s) << "," << fmt_double(rel) << "\n";
        }
        const double order = std::log10(errs[0] / errs[1]);
        report << "linearized-density oracle: rel err " << errs[0] << " at s=1e-2, " << errs[1]
               << " at s=1e-3, order " << order << "\n";
        return 0;
    }

    if (cmd == Command::diagnose) {
        LagrangianBoundsConfig lag;
        lag.count = sc.diagnostics_samples;
        lag.seed = sc.solver.seed;
        lag.eps0 = sc.eps0;
        const DiagnosticsReport rep = run_diagnostics(*model, state, lag);
        detail::write_diagnostics_csv(dir / "diagnostics.csv", rep);
        report << "mass drift: " << rep.mass_drift << "\n";
        report << "min density: " << rep.min_density << "\n";
        report << "sup_t ||m||_sigma: " << rep.sup_m_sigma << "\n";
        report << "||u||_inf: " << rep.sup_u_inf << "\n";
        report << "int |grad u|^2: " << rep.grad_u_sq << "\n";
        report << "int (m+1)^{sigma-2}|grad m|^2: " << rep.weighted_grad_m_sq << "\n";
        report << "int m^{2s0+1}: " << rep.density_moment << "\n";
        report << "control energy: " << rep.control_energy << "\n";
        report << "energy E: " << rep.energy << "\n";
        report << "interpolation ratio: " << rep.interpolation_ratio << "\n";
        report << "sup |w|: " << rep.sup_w_inf << ", int |grad w|^2: " << rep.grad_w_sq << "\n";
        report << "lagrangian bounds (eps0 " << rep.lagrangian_bounds.eps0 << "): lower "
               << rep.lagrangian_bounds.lower_C << ", upper " << rep.lagrangian_bounds.upper_C
               << ", global " << rep.lagrangian_bounds.global_C << ", stable "
               << (rep.lagrangian_bounds.stable ? "yes" : "no") << "\n";
        return 0;
    }
    return 0;
}

}  // namespace mfgb
