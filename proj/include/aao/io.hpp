#pragma once

// Configuration parsing and artifact output.
//
// The config is one JSON document with sections {grid, truth, measurement,
// noise, solver, weights, baseline, output} plus a top-level seed.  Every key
// is optional (defaults apply), but unknown keys anywhere are hard errors —
// a typo in a grid-search config must fail loudly, not silently run defaults.
//
// Artifacts are written without timestamps or machine info, so the same
// config and seed produce byte-identical files run over run.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "aao/experiments.hpp"
#include "aao/grid.hpp"
#include "aao/nn.hpp"
#include "aao/solvers.hpp"

namespace aao {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Logging (AAO_LOG = quiet | info | debug; default info)
// ---------------------------------------------------------------------------

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("AAO_LOG");
        if (env == nullptr) return LogLevel::info;
        const std::string s(env);
        if (s == "quiet") return LogLevel::quiet;
        if (s == "info") return LogLevel::info;
        if (s == "debug") return LogLevel::debug;
        throw std::invalid_argument("AAO_LOG must be one of quiet, info, debug");
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::info) std::fprintf(stderr, "[aao] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::debug) std::fprintf(stderr, "[aao:debug] %s\n", msg.c_str());
}

// ---------------------------------------------------------------------------
// Strict JSON reading
// ---------------------------------------------------------------------------

namespace detail {

// Wraps one JSON object; every key must be consumed through get/require/raw
// before done() is called, otherwise the leftover key is reported as unknown.
// Holds its own copy of the section so callers may pass temporaries.
class SectionReader {
  public:
    SectionReader(ordered_json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw std::invalid_argument("config: " + path_ + " must be a JSON object");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <class T>
    T get(const std::string& key, T fallback) {
        if (!j_.contains(key)) return fallback;
        consumed_.insert(key);
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument("config: " + path_ + "." + key + " has the wrong type");
        }
    }

    // Returns the raw value (for array-or-scalar keys) and marks it consumed.
    const ordered_json* raw(const std::string& key) {
        if (!j_.contains(key)) return nullptr;
        consumed_.insert(key);
        return &j_.at(key);
    }

    void done() const {
        for (const auto& item : j_.items()) {
            if (!consumed_.contains(item.key())) {
                throw std::invalid_argument("config: unknown key '" + path_ + "." + item.key() + "'");
            }
        }
    }

  private:
    ordered_json j_;
    std::string path_;
    std::set<std::string> consumed_;
};

inline ordered_json empty_object() { return ordered_json::object(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

struct OutputOptions {
    bool fields = true;    // dump recovered/true state fields
    bool plotdata = true;  // dump plot-ready CSV curves
    bool binary = false;   // field dumps as raw binary instead of CSV
};

struct RunSpec {
    ExperimentConfig exp;
    OutputOptions out;
};

inline RunSpec parse_run_spec(const ordered_json& doc) {
    if (!doc.is_object()) throw std::invalid_argument("config: document must be a JSON object");
    RunSpec spec;
    ExperimentConfig& cfg = spec.exp;

    detail::SectionReader top(doc, "$");
    cfg.seed = top.get<std::uint64_t>("seed", 0);

    {
        const ordered_json* sec = top.raw("grid");
        detail::SectionReader r(sec ? *sec : detail::empty_object(), "grid");
        cfg.nx = r.get<int>("nx", cfg.nx);
        cfg.nt = r.get<int>("nt", cfg.nt);
        cfg.T = r.get<double>("T", cfg.T);
        r.done();
    }
    {
        const ordered_json* sec = top.raw("truth");
        detail::SectionReader r(sec ? *sec : detail::empty_object(), "truth");
        cfg.truth = parse_truth(r.get<std::string>("nonlinearity", truth_name(cfg.truth)));
        cfg.n_samples = r.get<int>("n_samples", cfg.n_samples);
        cfg.bump_amplitude = r.get<double>("bump_amplitude", cfg.bump_amplitude);
        cfg.bump_width = r.get<double>("bump_width", cfg.bump_width);
        cfg.bump_centers = r.get<std::vector<double>>("bump_centers", cfg.bump_centers);
        cfg.u0_amplitude = r.get<double>("u0_amplitude", cfg.u0_amplitude);
        r.done();
    }
    {
        const ordered_json* sec = top.raw("measurement");
        detail::SectionReader r(sec ? *sec : detail::empty_object(), "measurement");
        const std::string mode = r.get<std::string>("mode", "snapshots");
        if (mode == "snapshots") {
            cfg.meas.mode = MeasurementSpec::Mode::snapshots;
        } else if (mode == "full") {
            cfg.meas.mode = MeasurementSpec::Mode::full;
        } else {
            throw std::invalid_argument("config: measurement.mode must be 'snapshots' or 'full'");
        }
        cfg.meas.indices = r.get<std::vector<int>>("indices", {});
        cfg.meas.scale = r.get<double>("scale", cfg.meas.scale);
        r.done();
        // Convenience default: snapshot mode without explicit indices observes
        // every time step (the "full snapshot" configuration).
        if (cfg.meas.mode == MeasurementSpec::Mode::snapshots && cfg.meas.indices.empty()) {
            for (int j = 1; j <= cfg.nt; ++j) cfg.meas.indices.push_back(j);
        }
    }
    {
        const ordered_json* sec = top.raw("noise");
        detail::SectionReader r(sec ? *sec : detail::empty_object(), "noise");
        const std::string mode = r.get<std::string>("mode", "absolute");
        if (mode == "absolute") {
            cfg.noise.mode = NoiseSpec::Mode::absolute;
        } else if (mode == "percent") {
            cfg.noise.mode = NoiseSpec::Mode::percent;
        } else {
            throw std::invalid_argument("config: noise.mode must be 'absolute' or 'percent'");
        }
        cfg.noise.level = r.get<double>("level", cfg.noise.level);
        r.done();
    }
    {
        const ordered_json* sec = top.raw("solver");
        detail::SectionReader r(sec ? *sec : detail::empty_object(), "solver");
        cfg.solver = parse_solver(r.get<std::string>("kind", solver_name(cfg.solver)));
        cfg.estimate_source = r.get<bool>("estimate_source", cfg.estimate_source);
        cfg.init = parse_init_mode(r.get<std::string>("init", init_mode_name(cfg.init)));
        cfg.adam.lr = r.get<double>("lr", cfg.adam.lr);
        cfg.adam.beta1 = r.get<double>("beta1", cfg.adam.beta1);
        cfg.adam.beta2 = r.get<double>("beta2", cfg.adam.beta2);
        cfg.adam.eps = r.get<double>("eps", cfg.adam.eps);
        cfg.adam.iters = r.get<long>("iters", cfg.adam.iters);
        cfg.adam.trace_every = r.get<long>("trace_every", cfg.adam.trace_every);
        cfg.stopping.max_iters = r.get<long>("max_iters", cfg.stopping.max_iters);
        cfg.stopping.tau = r.get<double>("tau", cfg.stopping.tau);
        cfg.stopping.min_step = r.get<double>("min_step", cfg.stopping.min_step);
        cfg.landweber.mu0 = r.get<double>("mu0", cfg.landweber.mu0);
        r.done();
    }
    {
        const ordered_json* sec = top.raw("weights");
        detail::SectionReader r(sec ? *sec : detail::empty_object(), "weights");
        cfg.weights.beta_e = r.get<double>("beta_e", cfg.weights.beta_e);
        cfg.weights.beta_M = r.get<double>("beta_M", cfg.weights.beta_M);
        cfg.weights.r_u = r.get<double>("r_u", cfg.weights.r_u);
        cfg.weights.r_psi = r.get<double>("r_psi", cfg.weights.r_psi);
        cfg.weights.r_theta = r.get<double>("r_theta", cfg.weights.r_theta);
        r.done();
    }
    {
        const ordered_json* sec = top.raw("baseline");
        detail::SectionReader r(sec ? *sec : detail::empty_object(), "baseline");
        cfg.family = parse_family_kind(r.get<std::string>("family", family_kind_name(cfg.family)));
        cfg.arch = r.get<std::vector<int>>("arch", cfg.arch);
        cfg.family_dof = r.get<int>("dof", cfg.family_dof);
        r.done();
    }
    {
        const ordered_json* sec = top.raw("output");
        detail::SectionReader r(sec ? *sec : detail::empty_object(), "output");
        spec.out.fields = r.get<bool>("fields", spec.out.fields);
        spec.out.plotdata = r.get<bool>("plotdata", spec.out.plotdata);
        spec.out.binary = r.get<bool>("binary", spec.out.binary);
        r.done();
    }
    top.done();

    validate_experiment(cfg);
    return spec;
}

inline ordered_json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    ordered_json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: '" + path + "' is not valid JSON: " + e.what());
    }
    return doc;
}

// Normalized echo of the effective configuration: every key materialized, in
// a fixed order, so the report documents defaults and stays byte-stable.
inline ordered_json run_spec_to_json(const RunSpec& spec) {
    const ExperimentConfig& cfg = spec.exp;
    ordered_json j;
    j["seed"] = cfg.seed;
    j["grid"] = {{"nx", cfg.nx}, {"nt", cfg.nt}, {"T", cfg.T}};
    j["truth"] = {{"nonlinearity", truth_name(cfg.truth)},
                  {"n_samples", cfg.n_samples},
                  {"bump_amplitude", cfg.bump_amplitude},
                  {"bump_width", cfg.bump_width},
                  {"bump_centers",
                   cfg.bump_centers.empty() ? default_bump_centers(cfg.n_samples) : cfg.bump_centers},
                  {"u0_amplitude", cfg.u0_amplitude}};
    j["measurement"] = {
        {"mode", cfg.meas.mode == MeasurementSpec::Mode::snapshots ? "snapshots" : "full"},
        {"indices", cfg.meas.indices},
        {"scale", cfg.meas.scale}};
    j["noise"] = {{"mode", cfg.noise.mode == NoiseSpec::Mode::absolute ? "absolute" : "percent"},
                  {"level", cfg.noise.level}};
    j["solver"] = {{"kind", solver_name(cfg.solver)},
                   {"estimate_source", cfg.estimate_source},
                   {"init", init_mode_name(cfg.init)},
                   {"lr", cfg.adam.lr},
                   {"beta1", cfg.adam.beta1},
                   {"beta2", cfg.adam.beta2},
                   {"eps", cfg.adam.eps},
                   {"iters", cfg.adam.iters},
                   {"trace_every", cfg.adam.trace_every},
                   {"max_iters", cfg.stopping.max_iters},
                   {"tau", cfg.stopping.tau},
                   {"min_step", cfg.stopping.min_step},
                   {"mu0", cfg.landweber.mu0}};
    j["weights"] = {{"beta_e", cfg.weights.beta_e},
                    {"beta_M", cfg.weights.beta_M},
                    {"r_u", cfg.weights.r_u},
                    {"r_psi", cfg.weights.r_psi},
                    {"r_theta", cfg.weights.r_theta}};
    j["baseline"] = {{"family", family_kind_name(cfg.family)},
                     {"arch", cfg.arch},
                     {"dof", cfg.family_dof}};
    j["output"] = {{"fields", spec.out.fields},
                   {"plotdata", spec.out.plotdata},
                   {"binary", spec.out.binary}};
    return j;
}

// ---------------------------------------------------------------------------
// Field dumps
// ---------------------------------------------------------------------------

inline constexpr char kFieldMagic[8] = {'A', 'A', 'O', 'F', 'L', 'D', '0', '1'};

// Raw dump: 16-byte header (8-byte magic, uint32 nt, uint32 nx, little
// endian), then (nt+1)*nx doubles in time-slice-major order.
inline void write_field_binary(const std::string& path, const Field& f) {
    static_assert(std::endian::native == std::endian::little,
                  "binary field dumps assume a little-endian host");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_field_binary: cannot open '" + path + "'");
    out.write(kFieldMagic, 8);
    const std::uint32_t nt = static_cast<std::uint32_t>(f.nt);
    const std::uint32_t nx = static_cast<std::uint32_t>(f.nx);
    out.write(reinterpret_cast<const char*>(&nt), 4);
    out.write(reinterpret_cast<const char*>(&nx), 4);
    out.write(reinterpret_cast<const char*>(f.v.data()),
              static_cast<std::streamsize>(f.v.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write_field_binary: short write to '" + path + "'");
}

inline Field read_field_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_field_binary: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kFieldMagic, 8) != 0) {
        throw std::runtime_error("read_field_binary: '" + path + "' is not a field dump");
    }
    std::uint32_t nt = 0, nx = 0;
    in.read(reinterpret_cast<char*>(&nt), 4);
    in.read(reinterpret_cast<char*>(&nx), 4);
    if (!in || nx < 2 || nt < 1) {
        throw std::runtime_error("read_field_binary: '" + path + "' has a bad header");
    }
    Field f(static_cast<int>(nt), static_cast<int>(nx));
    in.read(reinterpret_cast<char*>(f.v.data()),
            static_cast<std::streamsize>(f.v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("read_field_binary: '" + path + "' is truncated");
    return f;
}

namespace detail {

// Shortest exact decimal for a double ("%.17g" round-trips bit-for-bit).
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Text dump: "nt,nx" on the first line, then one comma-separated row per time
// node, values printed with round-trip precision.
inline void write_field_csv(const std::string& path, const Field& f) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_field_csv: cannot open '" + path + "'");
    out << f.nt << ',' << f.nx << '\n';
    for (int j = 0; j <= f.nt; ++j) {
        const auto row = f.slice(j);
        for (int i = 0; i < f.nx; ++i) {
            if (i) out << ',';
            out << detail::fmt(row[i]);
        }
        out << '\n';
    }
}

inline Field read_field_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_field_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_field_csv: '" + path + "' is empty");
    int nt = 0, nx = 0;
    if (std::sscanf(line.c_str(), "%d,%d", &nt, &nx) != 2 || nt < 1 || nx < 2) {
        throw std::runtime_error("read_field_csv: '" + path + "' has a bad header line");
    }
    Field f(nt, nx);
    for (int j = 0; j <= nt; ++j) {
        if (!std::getline(in, line)) {
            throw std::runtime_error("read_field_csv: '" + path + "' is truncated");
        }
        auto row = f.slice(j);
        const char* p = line.c_str();
        for (int i = 0; i < nx; ++i) {
            char* end = nullptr;
            row[i] = std::strtod(p, &end);
            if (end == p) throw std::runtime_error("read_field_csv: bad number in '" + path + "'");
            p = end;
            if (*p == ',') ++p;
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Network files
// ---------------------------------------------------------------------------

inline ordered_json net_to_json(const Net& net) {
    ordered_json j;
    j["family"] = "network";
    j["arch"] = net.arch;
    j["weights"] = net.weights;
    j["biases"] = net.biases;
    return j;
}

inline Net net_from_json(const ordered_json& j) {
    detail::SectionReader r(j, "network");
    (void)r.get<std::string>("family", "network");
    const auto arch = r.get<std::vector<int>>("arch", {});
    Net net = make_net(arch);  // validates the architecture
    const auto weights = r.get<std::vector<std::vector<double>>>("weights", {});
    const auto biases = r.get<std::vector<std::vector<double>>>("biases", {});
    r.done();
    if (weights.size() != net.weights.size() || biases.size() != net.biases.size()) {
        throw std::invalid_argument("network file: layer count does not match the architecture");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].size() != net.weights[l].size() || biases[l].size() != net.biases[l].size()) {
            throw std::invalid_argument("network file: layer " + std::to_string(l) +
                                        " has the wrong parameter count");
        }
    }
    net.weights = weights;
    net.biases = biases;
    return net;
}

inline Net read_net_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("network file: cannot open '" + path + "'");
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("network file: '" + path + "' is not valid JSON: " + e.what());
    }
    return net_from_json(j);
}

// ---------------------------------------------------------------------------
// Trace and plot data
// ---------------------------------------------------------------------------

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_trace_csv: cannot open '" + path + "'");
    out << "iter,objective,pde_residual_W,data_misfit_Y,step_size\n";
    for (const TraceRow& row : trace) {
        out << row.iter << ',' << detail::fmt(row.objective) << ','
            << detail::fmt(row.pde_residual_W) << ',' << detail::fmt(row.data_misfit_Y) << ','
            << detail::fmt(row.step_size) << '\n';
    }
}

// Writes one CSV with a header row and equal-length columns.
inline void write_columns_csv(const std::string& path, const std::vector<std::string>& names,
                              const std::vector<const std::vector<double>*>& cols) {
    if (names.size() != cols.size() || cols.empty()) {
        throw std::invalid_argument("write_columns_csv: need one name per column");
    }
    const std::size_t rows = cols.front()->size();
    for (const auto* c : cols) {
        if (c->size() != rows) throw std::invalid_argument("write_columns_csv: ragged columns");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_columns_csv: cannot open '" + path + "'");
    for (std::size_t c = 0; c < names.size(); ++c) {
        if (c) out << ',';
        out << names[c];
    }
    out << '\n';
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c) out << ',';
            out << detail::fmt((*cols[c])[r]);
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Report and artifact bundle
// ---------------------------------------------------------------------------

inline ordered_json error_report_to_json(const ErrorReport& e) {
    ordered_json j;
    j["nonlinearity_error"] = e.nonlinearity_error;
    j["state_error"] = e.state_error;
    j["parameter_error"] = e.parameter_error;
    j["pde_residual"] = e.pde_residual;
    j["nonlinearity_rel_l2"] = e.nonlinearity_rel_l2;
    j["state_rel_l2"] = e.state_rel_l2;
    j["parameter_rel_l2"] = e.parameter_rel_l2;
    j["offset"] = e.offset;
    return j;
}

inline ordered_json result_to_report(const RunSpec& spec, const ExperimentResult& res,
                                     bool include_errors) {
    ordered_json j;
    j["config"] = run_spec_to_json(spec);
    j["synthesis"] = {{"max_convergence_gap", res.truth.max_convergence_gap},
                      {"max_refinement", res.truth.max_refinement}};
    j["delta"] = res.delta;
    ordered_json run;
    run["solver"] = solver_name(spec.exp.solver);
    run["stop_reason"] = res.state.stop_reason;
    run["iterations"] = res.state.iterations;
    run["mu"] = res.state.mu;
    if (!res.trace.empty()) {
        const TraceRow& last = res.trace.back();
        run["final_objective"] = last.objective;
        run["final_pde_residual"] = last.pde_residual_W;
        run["final_data_misfit"] = last.data_misfit_Y;
    }
    run["family"] = res.family_name;
    run["n_params"] = res.family_params.size();
    j["run"] = run;
    if (include_errors) j["errors"] = error_report_to_json(res.report);
    return j;
}

// Writes the full artifact bundle for one run into `dir`:
//   report.json, trace.csv, family.json, fields/*.{csv|bin}, plotdata/*.csv.
inline void write_artifacts(const std::filesystem::path& dir, const RunSpec& spec,
                            const ExperimentResult& res, bool include_errors) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    {
        std::ofstream out(dir / "report.json");
        if (!out) throw std::runtime_error("write_artifacts: cannot open report.json");
        out << result_to_report(spec, res, include_errors).dump(2) << '\n';
    }
    write_trace_csv((dir / "trace.csv").string(), res.trace);

    {
        ordered_json fam;
        if (spec.exp.family == FamilyKind::network) {
            Net net = make_net(spec.exp.arch);
            unflatten(net, res.family_params);
            fam = net_to_json(net);
        } else {
            fam["family"] = res.family_name;
            fam["params"] = res.family_params;
        }
        std::ofstream out(dir / "family.json");
        if (!out) throw std::runtime_error("write_artifacts: cannot open family.json");
        out << fam.dump(2) << '\n';
    }

    if (spec.out.fields) {
        fs::create_directories(dir / "fields");
        auto dump = [&](const std::string& stem, const Field& f) {
            const fs::path p = dir / "fields" / (stem + (spec.out.binary ? ".bin" : ".csv"));
            if (spec.out.binary) {
                write_field_binary(p.string(), f);
            } else {
                write_field_csv(p.string(), f);
            }
        };
        for (std::size_t k = 0; k < res.state.u.size(); ++k) {
            dump("state_" + std::to_string(k), res.state.u[k]);
            dump("truth_" + std::to_string(k), res.truth.states[k]);
        }
    }

    if (spec.out.plotdata) {
        fs::create_directories(dir / "plotdata");
        const Grid g(spec.exp.nx, spec.exp.nt, spec.exp.T);
        write_columns_csv((dir / "plotdata" / "nonlinearity.csv").string(),
                          {"y", "f_true", "f_recovered"},
                          {&res.sample_y, &res.f_truth, &res.f_recovered});
        std::vector<double> xcol(static_cast<std::size_t>(g.nx));
        for (int i = 0; i < g.nx; ++i) xcol[static_cast<std::size_t>(i)] = g.x(i);
        for (std::size_t k = 0; k < res.state.u.size(); ++k) {
            std::vector<double> u_rec(static_cast<std::size_t>(g.nx)),
                u_true(static_cast<std::size_t>(g.nx));
            for (int i = 0; i < g.nx; ++i) {
                u_rec[static_cast<std::size_t>(i)] = res.state.u[k].at(g.nt, i);
                u_true[static_cast<std::size_t>(i)] = res.truth.states[k].at(g.nt, i);
            }
            write_columns_csv(
                (dir / "plotdata" / ("state_final_" + std::to_string(k) + ".csv")).string(),
                {"x", "u_true", "u_recovered"}, {&xcol, &u_true, &u_rec});
            write_columns_csv((dir / "plotdata" / ("source_" + std::to_string(k) + ".csv")).string(),
                              {"x", "phi_true", "phi_recovered"},
                              {&xcol, &res.truth.sources[k], &res.sources_corrected[k]});
        }
    }
}

}  // namespace aao
