// aao — command-line driver for the all-at-once nonlinearity solver.
//
// Subcommands:
//   solve          run the inverse solve for a config and write artifacts
//   experiment     solve plus truth-comparison error scoring
//   gridsearch     expand array-valued sweep keys into cells, run them on a
//                  worker pool, and write an index over the per-cell reports
//   certify        print the certified Lipschitz constants, the sampled
//                  verification verdict, and the curvature trust radius of a
//                  stored network
//   adjoint-check  randomized pairing check of every analytic adjoint block
//
// Exit codes: 0 success, 1 configuration/usage error, 2 solver abort (partial
// artifacts are kept on disk).  AAO_LOG = quiet|info|debug controls stderr
// chatter; stdout carries only the deterministic result summary.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "aao/checks.hpp"
#include "aao/experiments.hpp"
#include "aao/io.hpp"
#include "aao/lipschitz.hpp"
#include "aao/model.hpp"
#include "aao/nn.hpp"
#include "aao/solvers.hpp"

namespace {

namespace fs = std::filesystem;

// Shared flags of the config-driven subcommands.  `seed`/`binary` only take
// effect when the flag was actually given, so the config keeps authority by
// default.
struct RunArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool binary = false;
    int jobs = 1;
};

void add_run_flags(CLI::App* sub, RunArgs& a) {
    sub->add_option("--config", a.config_path, "JSON config file")->required();
    sub->add_option("--out", a.out_dir, "output directory for the artifact bundle");
    sub->add_option("--seed", a.seed, "override the config's random seed");
    sub->add_flag("--binary", a.binary, "write field dumps as raw binary instead of CSV");
    sub->add_option("--jobs", a.jobs, "worker pool size for independent runs")
        ->check(CLI::PositiveNumber);
}

// "21x20" -> Grid(nx = 21, nt = 20) on the standard horizon.
aao::Grid parse_grid_arg(const std::string& s, double T) {
    const auto pos = s.find('x');
    if (pos == std::string::npos || pos == 0 || pos + 1 == s.size()) {
        throw std::invalid_argument("--grid expects NXxNT, e.g. 21x20 (got '" + s + "')");
    }
    int nx = 0, nt = 0;
    try {
        std::size_t used = 0;
        nx = std::stoi(s.substr(0, pos), &used);
        if (used != pos) throw std::invalid_argument("");
        nt = std::stoi(s.substr(pos + 1), &used);
        if (used != s.size() - pos - 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw std::invalid_argument("--grid expects NXxNT, e.g. 21x20 (got '" + s + "')");
    }
    return aao::Grid(nx, nt, T);
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw std::invalid_argument("output directory '" + dir + "' is not writable: " +
                                    ec.message());
    }
}

void print_run_summary(const aao::RunSpec& spec, const aao::ExperimentResult& res,
                       bool include_errors, const std::string& out_dir) {
    std::printf("solver: %s\n", aao::solver_name(spec.exp.solver).c_str());
    std::printf("stop reason: %s after %ld iterations\n", res.state.stop_reason.c_str(),
                res.state.iterations);
    if (!res.trace.empty()) {
        const aao::TraceRow& last = res.trace.back();
        std::printf("final objective: %.6g\n", last.objective);
        std::printf("final pde residual (weighted): %.6g\n", last.pde_residual_W);
        std::printf("final data misfit: %.6g\n", last.data_misfit_Y);
    }
    std::printf("noise level handed to stopping rule: %.6g\n", res.delta);
    if (include_errors) {
        const aao::ErrorReport& r = res.report;
        std::printf("nonlinearity mse (offset-corrected): %.6g\n", r.nonlinearity_error);
        std::printf("state mse: %.6g\n", r.state_error);
        std::printf("source mse: %.6g\n", r.parameter_error);
        std::printf("pde residual (space-time): %.6g\n", r.pde_residual);
    }
    std::printf("artifacts: %s\n", out_dir.c_str());
}

// solve = inverse run + artifacts; experiment additionally scores against the
// synthetic truth and adds the error block to report.json.
int run_single(const RunArgs& a, bool include_errors) {
    aao::ordered_json doc = aao::load_config_file(a.config_path);
    aao::RunSpec spec = aao::parse_run_spec(doc);
    if (a.seed_given) spec.exp.seed = a.seed;
    if (a.binary) spec.out.binary = true;
    ensure_out_dir(a.out_dir);

    aao::log_info("config " + a.config_path + " parsed; starting " +
                  aao::solver_name(spec.exp.solver) + " run");
    aao::ExperimentResult res = aao::run_experiment(spec.exp);
    aao::write_artifacts(a.out_dir, spec, res, include_errors);
    print_run_summary(spec, res, include_errors, a.out_dir);

    if (res.state.stop_reason == "nan-abort") {
        std::fprintf(stderr, "aao: solver aborted on a non-finite objective; "
                             "partial artifacts kept in %s\n", a.out_dir.c_str());
        return 2;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// gridsearch
// ---------------------------------------------------------------------------

// Only these scalar keys may carry an array in a gridsearch config; each array
// becomes a sweep axis and the run set is their Cartesian product.  Keys that
// are legitimately arrays (indices, bump_centers, arch) are never swept.
struct SweepAxis {
    std::vector<std::string> path;
    std::string label;
    std::vector<aao::ordered_json> values;
};

const std::vector<std::vector<std::string>> kSweepableKeys = {
    {"seed"},
    {"weights", "beta_e"},
    {"weights", "beta_M"},
    {"weights", "r_u"},
    {"weights", "r_psi"},
    {"weights", "r_theta"},
    {"solver", "lr"},
};

aao::ordered_json* find_node(aao::ordered_json& doc, const std::vector<std::string>& path) {
    aao::ordered_json* cur = &doc;
    for (const auto& key : path) {
        if (!cur->is_object() || !cur->contains(key)) return nullptr;
        cur = &(*cur)[key];
    }
    return cur;
}

std::string join_path(const std::vector<std::string>& path) {
    std::string s;
    for (const auto& key : path) {
        if (!s.empty()) s += '.';
        s += key;
    }
    return s;
}

struct CellOutcome {
    std::string name;
    aao::ordered_json overrides = aao::ordered_json::object();
    bool done = false;
    bool ok = false;
    std::string error;
    aao::ordered_json report;  // full per-cell report.json content
};

int run_gridsearch(const RunArgs& a) {
    aao::ordered_json doc = aao::load_config_file(a.config_path);

    // Collect the sweep axes in a fixed order so cell numbering is stable.
    std::vector<SweepAxis> axes;
    for (const auto& path : kSweepableKeys) {
        aao::ordered_json* node = find_node(doc, path);
        if (node == nullptr || !node->is_array()) continue;
        SweepAxis axis;
        axis.path = path;
        axis.label = join_path(path);
        for (const auto& v : *node) axis.values.push_back(v);
        if (axis.values.empty()) {
            throw std::invalid_argument("gridsearch: sweep key '" + axis.label +
                                        "' has an empty value list");
        }
        axes.push_back(std::move(axis));
    }

    std::size_t n_cells = 1;
    for (const auto& axis : axes) n_cells *= axis.values.size();

    // Materialize and validate every cell before any work starts, so a typo in
    // one corner of the sweep fails the whole search up front.
    std::vector<aao::RunSpec> specs(n_cells);
    std::vector<CellOutcome> outcomes(n_cells);
    int name_width = 3;
    for (std::size_t w = 1000; n_cells > w; w *= 10) ++name_width;
    for (std::size_t cell = 0; cell < n_cells; ++cell) {
        aao::ordered_json cell_doc = doc;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "cell_%0*zu", name_width, cell);
        outcomes[cell].name = buf;

        // Decode the cell number with the last axis varying fastest, but
        // record the overrides in axis order.
        std::vector<std::size_t> picks(axes.size(), 0);
        std::size_t rest = cell;
        for (std::size_t ax = axes.size(); ax-- > 0;) {
            picks[ax] = rest % axes[ax].values.size();
            rest /= axes[ax].values.size();
        }
        for (std::size_t ax = 0; ax < axes.size(); ++ax) {
            const SweepAxis& axis = axes[ax];
            *find_node(cell_doc, axis.path) = axis.values[picks[ax]];
            outcomes[cell].overrides[axis.label] = axis.values[picks[ax]];
        }
        try {
            specs[cell] = aao::parse_run_spec(cell_doc);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(outcomes[cell].name + ": " + e.what());
        }
        if (a.seed_given) specs[cell].exp.seed = a.seed;
        if (a.binary) specs[cell].out.binary = true;
    }

    ensure_out_dir(a.out_dir);
    aao::log_info("gridsearch: " + std::to_string(n_cells) + " cells over " +
                  std::to_string(axes.size()) + " axes, " + std::to_string(a.jobs) + " jobs");

    // Whole runs are the work units; each cell writes only to its own
    // directory, so workers share nothing but the claim counter.
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t cell = next.fetch_add(1);
            if (cell >= n_cells) return;
            CellOutcome& oc = outcomes[cell];
            try {
                const fs::path dir = fs::path(a.out_dir) / oc.name;
                aao::ExperimentResult res = aao::run_experiment(specs[cell].exp);
                aao::write_artifacts(dir, specs[cell], res, true);
                oc.report = aao::result_to_report(specs[cell], res, true);
                oc.ok = (res.state.stop_reason != "nan-abort");
                if (!oc.ok) oc.error = "solver aborted on a non-finite objective";
            } catch (const std::exception& e) {
                oc.ok = false;
                oc.error = e.what();
            }
            oc.done = true;
        }
    };
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(a.jobs),
                                                        std::max<std::size_t>(n_cells, 1));
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    // Deterministic index over the cells, assembled in cell order.
    aao::ordered_json index;
    index["axes"] = aao::ordered_json::array();
    for (const auto& axis : axes) {
        aao::ordered_json j;
        j["key"] = axis.label;
        j["values"] = axis.values;
        index["axes"].push_back(j);
    }
    index["cells"] = aao::ordered_json::array();
    std::size_t n_ok = 0;
    for (const auto& oc : outcomes) {
        aao::ordered_json j;
        j["name"] = oc.name;
        j["overrides"] = oc.overrides;
        j["status"] = oc.ok ? "ok" : "failed";
        if (oc.ok) {
            j["stop_reason"] = oc.report["run"]["stop_reason"];
            j["iterations"] = oc.report["run"]["iterations"];
            if (oc.report["run"].contains("final_objective")) {
                j["final_objective"] = oc.report["run"]["final_objective"];
            }
            j["errors"] = oc.report["errors"];
            ++n_ok;
        } else {
            j["error"] = oc.error;
        }
        index["cells"].push_back(j);
    }
    {
        std::ofstream out(fs::path(a.out_dir) / "index.json");
        out << index.dump(2) << '\n';
    }

    for (const auto& oc : outcomes) {
        if (oc.ok) {
            std::printf("%s  ok      nonlinearity mse %.6g\n", oc.name.c_str(),
                        oc.report["errors"]["nonlinearity_error"].get<double>());
        } else {
            std::printf("%s  failed  %s\n", oc.name.c_str(), oc.error.c_str());
        }
    }
    std::printf("gridsearch: %zu/%zu cells ok; index: %s/index.json\n", n_ok, n_cells,
                a.out_dir.c_str());
    return n_ok == n_cells ? 0 : 2;
}

// ---------------------------------------------------------------------------
// certify
// ---------------------------------------------------------------------------

struct CertifyArgs {
    std::string net_path;
    double lo = -2.0;
    double hi = 2.0;
    int samples = 100000;
    std::string grid = "51x50";
    std::uint64_t seed = 1;
};

int run_certify(const CertifyArgs& a) {
    const aao::Net net = aao::read_net_file(a.net_path);
    const aao::LipschitzReport rep = aao::certify_lipschitz(net, a.lo, a.hi, a.samples);

    std::string arch = "[";
    for (std::size_t i = 0; i < net.arch.size(); ++i) {
        if (i) arch += ',';
        arch += std::to_string(net.arch[i]);
    }
    arch += ']';
    std::printf("network: arch %s, %d parameters\n", arch.c_str(), net.n_params());
    std::printf("box: [%.6g, %.6g], sweep resolution %d\n", rep.lo, rep.hi, rep.samples);
    std::printf("per-layer spectral norms:");
    for (double w : rep.omega_norm) std::printf(" %.6g", w);
    std::printf("\nper-layer slope suprema: ");
    for (double s : rep.s) std::printf(" %.6g", s);
    std::printf("\nvalue Lipschitz bound: %.6g\n", rep.value_lip);
    std::printf("slope Lipschitz bound: %.6g\n", rep.slope_lip);

    // Sampled verification: difference quotients of the value and of the
    // slope over random pairs in the box must stay below the certificates.
    std::mt19937_64 rng(a.seed);
    std::uniform_real_distribution<double> zbox(a.lo, a.hi);
    double sup_value_q = 0.0;
    double sup_slope_q = 0.0;
    for (int k = 0; k < a.samples; ++k) {
        const double za = zbox(rng);
        const double zb = zbox(rng);
        if (za == zb) continue;
        double sa = 0.0, sb = 0.0;
        const double va = aao::forward_with_slope(net, za, sa);
        const double vb = aao::forward_with_slope(net, zb, sb);
        const double dz = std::abs(za - zb);
        sup_value_q = std::max(sup_value_q, std::abs(va - vb) / dz);
        sup_slope_q = std::max(sup_slope_q, std::abs(sa - sb) / dz);
    }
    // Tiny slack for the rounding of the quotients themselves.
    const bool value_ok = sup_value_q <= rep.value_lip * (1.0 + 1e-9) + 1e-12;
    const bool slope_ok = sup_slope_q <= rep.slope_lip * (1.0 + 1e-9) + 1e-12;
    std::printf("sampled value quotient sup (%d pairs): %.6g\n", a.samples, sup_value_q);
    std::printf("sampled slope quotient sup (%d pairs): %.6g\n", a.samples, sup_slope_q);

    const aao::Grid g = parse_grid_arg(a.grid, 0.1);
    const double embed = aao::state_sup_embedding_constant(g);
    const double radius = aao::trust_radius(rep, embed);
    std::printf("state sup embedding constant (%dx%d): %.6g\n", g.nx, g.nt, embed);
    if (std::isfinite(radius)) {
        std::printf("curvature trust radius: %.6g\n", radius);
    } else {
        std::printf("curvature trust radius: unbounded (no curvature)\n");
    }

    // Taylor-defect spot check inside the radius: at rho_max/2 the defect is
    // certified to stay below half the difference norm.
    const double rho = std::isfinite(radius) ? 0.5 * radius : 1.0;
    const aao::NetFamily fam(net);
    const aao::TaylorConeCheck cone = aao::taylor_cone_check(g, fam, rep, embed, rho, 100, a.seed);
    std::printf("taylor defect check at rho %.6g: worst ratio %.6g, %d/%d violations\n",
                cone.rho, cone.worst_ratio, cone.violations, cone.pairs);

    const bool pass = value_ok && slope_ok && cone.violations == 0;
    std::printf("verdict: %s\n", pass ? "PASS" : "FAIL");
    return pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// adjoint-check
// ---------------------------------------------------------------------------

struct AdjointCheckArgs {
    std::string grid = "21x20";
    std::uint64_t seed = 7;
    int draws = 20;
    double tol = 1e-8;
};

int run_adjoint_check(const AdjointCheckArgs& a) {
    const aao::Grid g = parse_grid_arg(a.grid, 0.1);
    if (a.draws < 1) throw std::invalid_argument("--draws must be at least 1");
    if (!(a.tol > 0.0)) throw std::invalid_argument("--tol must be positive");

    const std::vector<aao::PairingCase> cases = aao::adjoint_pairing_suite(g, a.seed, a.draws);
    double worst = 0.0;
    for (const auto& c : cases) {
        std::printf("%-22s %.3e\n", c.name.c_str(), c.defect);
        worst = std::max(worst, c.defect);
    }
    std::printf("max pairing defect (%dx%d, %d draws): %.3e\n", g.nx, g.nt, a.draws, worst);
    if (worst > a.tol) {
        std::fprintf(stderr, "aao: pairing defect exceeds tolerance %.3e\n", a.tol);
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"all-at-once learning of a pointwise PDE nonlinearity from snapshot data"};
    app.require_subcommand(1);

    RunArgs solve_args;
    CLI::App* solve_cmd =
        app.add_subcommand("solve", "run the inverse solve for a config and write artifacts");
    add_run_flags(solve_cmd, solve_args);

    RunArgs exp_args;
    CLI::App* exp_cmd = app.add_subcommand(
        "experiment", "inverse solve plus error scoring against the synthetic truth");
    add_run_flags(exp_cmd, exp_args);

    RunArgs gs_args;
    CLI::App* gs_cmd = app.add_subcommand(
        "gridsearch", "run the Cartesian product of array-valued sweep keys "
                      "(seed, weights.*, solver.lr) on a worker pool");
    add_run_flags(gs_cmd, gs_args);

    CertifyArgs cert_args;
    CLI::App* cert_cmd = app.add_subcommand(
        "certify", "certified Lipschitz constants, sampled verification, and trust radius "
                   "for a stored network");
    cert_cmd->add_option("network", cert_args.net_path, "network JSON file")->required();
    cert_cmd->add_option("--lo", cert_args.lo, "lower edge of the certification box");
    cert_cmd->add_option("--hi", cert_args.hi, "upper edge of the certification box");
    cert_cmd->add_option("--samples", cert_args.samples, "sampled verification pairs")
        ->check(CLI::PositiveNumber);
    cert_cmd->add_option("--grid", cert_args.grid, "grid NXxNT for the trust radius");
    cert_cmd->add_option("--seed", cert_args.seed, "seed for the sampled verification");

    AdjointCheckArgs ac_args;
    CLI::App* ac_cmd = app.add_subcommand(
        "adjoint-check", "randomized inner-product pairing check of the adjoint blocks");
    ac_cmd->add_option("--grid", ac_args.grid, "grid NXxNT");
    ac_cmd->add_option("--seed", ac_args.seed, "seed for the random directions");
    ac_cmd->add_option("--draws", ac_args.draws, "random draws per block");
    ac_cmd->add_option("--tol", ac_args.tol, "maximum acceptable pairing defect");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // flag misuse is a configuration error
    }

    try {
        aao::log_level();  // reject a malformed AAO_LOG before any work starts
        // The config keeps authority over the seed unless the flag was given.
        solve_args.seed_given = solve_cmd->count("--seed") > 0;
        exp_args.seed_given = exp_cmd->count("--seed") > 0;
        gs_args.seed_given = gs_cmd->count("--seed") > 0;

        if (*solve_cmd) return run_single(solve_args, false);
        if (*exp_cmd) return run_single(exp_args, true);
        if (*gs_cmd) return run_gridsearch(gs_args);
        if (*cert_cmd) return run_certify(cert_args);
        if (*ac_cmd) return run_adjoint_check(ac_args);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "aao: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "aao: %s\n", e.what());
        return 2;
    }
    return 0;
}
