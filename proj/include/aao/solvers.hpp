#pragma once
// All-at-once solvers: the regularized objective over (states, per-sample
// sources, nonlinearity parameters), its gradient in two assemblies, and the
// two iteration drivers.
//
//  - The "function-space" gradient maps residual and misfit back through the
//    closed-form adjoints of adjoint.hpp into the state metric; this is the
//    Landweber path.
//  - The "flat" gradient treats every interior grid value and every network
//    parameter as one Euclidean vector and differentiates the discretized
//    objective exactly (transposed stencils, quadrature weights explicit);
//    this is the ADAM path.
//
// Both assemblies agree with central finite differences of the objective in
// their respective pairings; the tests enforce this.
//
// Per-sample residual and adjoint evaluations are independent and could run
// in parallel; they are evaluated sequentially in sample order so results are
// bit-reproducible regardless of thread availability.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aao/adjoint.hpp"
#include "aao/grid.hpp"
#include "aao/model.hpp"

namespace aao {

// ---------------------------------------------------------------------------
// Problem and unknowns
// ---------------------------------------------------------------------------

// Fixed data of one inverse problem: grid, PDE coefficients, per-sample known
// sources (used only when the source is not estimated), and the measurement
// map.  The number of samples K is sources.size() when the source is known,
// otherwise the size of the initial guess.
struct Problem {
    Grid g;
    PdeParams params;                          // diffusion a and reaction c; params.phi unused
    std::vector<std::vector<double>> sources;  // known phi^k, one per sample (ignored if estimated)
    MeasurementSpec meas;
    bool estimate_source = false;

    Problem(Grid grid, PdeParams p, MeasurementSpec m)
        : g(grid), params(std::move(p)), meas(std::move(m)) {}
};

// The unknowns plus run metadata filled in by the drivers.
struct SolveState {
    std::vector<Field> u;                    // one space-time state per sample
    std::vector<std::vector<double>> psi;    // per-sample source estimates (empty if source known)
    std::vector<double> theta;               // nonlinearity parameters, shared across samples

    long iterations = 0;
    std::vector<double> residual_history;    // W-norm of the PDE residual at accepted iterates
    double mu = 0.0;                         // last accepted step size (Landweber)
    std::string stop_reason;
};

// Same shapes as the unknowns; holds either gradient assembly.
struct GradientState {
    std::vector<Field> u;
    std::vector<std::vector<double>> psi;
    std::vector<double> theta;
};

struct StoppingRule {
    long max_iters = 50000;
    double tau = 1.5;       // discrepancy factor
    double delta = 0.0;     // noise level estimate (realized noise norm when synthetic)
    double min_step = 1e-12;
};

inline void validate_stopping(const StoppingRule& r) {
    if (r.max_iters < 1) throw std::invalid_argument("StoppingRule: max_iters must be at least 1");
    if (!(r.tau >= 1.0)) throw std::invalid_argument("StoppingRule: tau must be at least 1");
    if (r.delta < 0.0) throw std::invalid_argument("StoppingRule: delta must be nonnegative");
    if (!(r.min_step > 0.0)) throw std::invalid_argument("StoppingRule: min_step must be positive");
}

struct TraceRow {
    long iter = 0;
    double objective = 0.0;
    double pde_residual_W = 0.0;   // sqrt of the summed squared residual W-norms
    double data_misfit_Y = 0.0;    // sqrt of the summed squared misfit Y-norms
    double step_size = 0.0;
};

inline void validate_problem(const Problem& pr, const SolveState& x, const ObservationSet& data) {
    validate_pde_params(pr.g, pr.params);
    validate_measurement(pr.g, pr.meas);
    const size_t K = x.u.size();
    if (K == 0) throw std::invalid_argument("SolveState: needs at least one sample state");
    if (data.samples.size() != K) {
        throw std::invalid_argument("ObservationSet: sample count does not match the state");
    }
    for (const auto& uk : x.u) {
        if (uk.nt != pr.g.nt || uk.nx != pr.g.nx) {
            throw std::invalid_argument("SolveState: state shape does not match the grid");
        }
    }
    if (pr.estimate_source) {
        if (x.psi.size() != K) {
            throw std::invalid_argument("SolveState: needs one source estimate per sample");
        }
        for (const auto& p : x.psi) {
            if (p.size() != static_cast<size_t>(pr.g.nx)) {
                throw std::invalid_argument("SolveState: source estimate length mismatch");
            }
        }
    } else {
        if (pr.sources.size() != K) {
            throw std::invalid_argument("Problem: needs one known source per sample");
        }
        for (const auto& s : pr.sources) {
            if (s.size() != static_cast<size_t>(pr.g.nx)) {
                throw std::invalid_argument("Problem: known source length mismatch");
            }
        }
    }
    for (const auto& sample : data.samples) {
        if (pr.meas.mode == MeasurementSpec::Mode::snapshots) {
            if (sample.snapshots.size() != pr.meas.indices.size()) {
                throw std::invalid_argument("ObservationSet: snapshot count mismatch");
            }
            for (const auto& s : sample.snapshots) {
                if (s.size() != static_cast<size_t>(pr.g.nx)) {
                    throw std::invalid_argument("ObservationSet: snapshot length mismatch");
                }
            }
        } else {
            if (sample.full.nt != pr.g.nt || sample.full.nx != pr.g.nx) {
                throw std::invalid_argument("ObservationSet: full observation shape mismatch");
            }
        }
    }
}

inline std::span<const double> sample_source(const Problem& pr, const SolveState& x, size_t k) {
    return pr.estimate_source ? std::span<const double>(x.psi[k])
                              : std::span<const double>(pr.sources[k]);
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

struct ObjectiveParts {
    double total = 0.0;
    double residual_W2 = 0.0;   // sum_k ||e^k||_W^2          (unweighted)
    double misfit_Y2 = 0.0;     // sum_k ||M u^k - y^k||_Y^2  (unweighted)
    double reg_state2 = 0.0;    // sum_k ||u^k||_V^2
    double reg_source2 = 0.0;   // sum_k ||psi^k||_L2^2
    double reg_theta2 = 0.0;    // ||theta||_2^2
};

// Residuals and misfits of one iterate, shared by the objective and both
// gradient assemblies so nothing is computed twice.
struct Evaluation {
    ObjectiveParts parts;
    std::vector<Field> residuals;
    std::vector<Misfit> misfits;
};

inline Evaluation evaluate(const Problem& pr, const PointwiseFamily& fam, const SolveState& x,
                           const ObservationSet& data, const ObjectiveWeights& w) {
    validate_weights(w);
    validate_problem(pr, x, data);
    if (fam.n_params() != x.theta.size()) {
        throw std::invalid_argument("evaluate: theta length does not match the family");
    }
    const Grid& g = pr.g;
    const size_t K = x.u.size();

    Evaluation ev;
    ev.residuals.reserve(K);
    ev.misfits.reserve(K);
    for (size_t k = 0; k < K; ++k) {
        Field e = pde_residual(g, pr.params, x.u[k], sample_source(pr, x, k), fam);
        ev.parts.residual_W2 += inner_space_time(g, e, e);
        ev.residuals.push_back(std::move(e));
        Misfit mis = measurement_misfit(g, pr.meas, x.u[k], data.samples[k]);
        ev.parts.misfit_Y2 += misfit_norm_sq(g, pr.meas, mis);
        ev.misfits.push_back(std::move(mis));
        ev.parts.reg_state2 += state_inner(g, x.u[k], x.u[k]);
        if (pr.estimate_source) ev.parts.reg_source2 += inner_l2(g, x.psi[k], x.psi[k]);
    }
    for (double t : x.theta) ev.parts.reg_theta2 += t * t;
    ev.parts.total = w.beta_e * ev.parts.residual_W2 + w.beta_M * ev.parts.misfit_Y2 +
                     w.r_u * ev.parts.reg_state2 + w.r_psi * ev.parts.reg_source2 +
                     w.r_theta * ev.parts.reg_theta2;
    return ev;
}

inline double objective(const Problem& pr, const PointwiseFamily& fam, const SolveState& x,
                        const ObservationSet& data, const ObjectiveWeights& w) {
    return evaluate(pr, fam, x, data, w).parts.total;
}

// ---------------------------------------------------------------------------
// Gradient assemblies
// ---------------------------------------------------------------------------

inline GradientState make_gradient_like(const Problem& pr, const SolveState& x) {
    GradientState grd;
    grd.u.reserve(x.u.size());
    for (size_t k = 0; k < x.u.size(); ++k) grd.u.emplace_back(pr.g.nt, pr.g.nx);
    if (pr.estimate_source) {
        grd.psi.assign(x.psi.size(), std::vector<double>(pr.g.nx, 0.0));
    }
    grd.theta.assign(x.theta.size(), 0.0);
    return grd;
}

// Gradient in the solution-space metric (state metric for u, L2 for psi,
// Euclidean for theta), assembled from the closed-form adjoints.  Pairs with
// directions through state_inner / inner_l2 / dot.
inline GradientState function_space_gradient(const Problem& pr, const PointwiseFamily& fam,
                                             const SolveState& x, const ObservationSet& data,
                                             const ObjectiveWeights& w, const ASolver& A,
                                             const Evaluation& ev) {
    const Grid& g = pr.g;
    const size_t K = x.u.size();
    GradientState grd = make_gradient_like(pr, x);

    for (size_t k = 0; k < K; ++k) {
        AdjointContext ctx(g, pr.params, x.u[k], fam, A);
        const Field& e = ev.residuals[k];

        // State block: residual backprojection + measurement backprojection
        // + metric gradient of the state regularizer (2 r_u u, since the
        // gradient is taken in the same metric that defines the penalty).
        Field gu = adjoint_transport(ctx, e);
        scale(gu, 2.0 * w.beta_e);
        if (pr.meas.mode == MeasurementSpec::Mode::snapshots) {
            for (size_t r = 0; r < pr.meas.indices.size(); ++r) {
                Field back = adjoint_M_snapshot(ctx, ev.misfits[k].snapshot_misfit[r],
                                                pr.meas.indices[r], pr.meas.scale);
                axpy(2.0 * w.beta_M, back, gu);
            }
        } else {
            Field back = adjoint_M_full(ctx, ev.misfits[k].full_misfit, pr.meas.scale);
            axpy(2.0 * w.beta_M, back, gu);
        }
        axpy(2.0 * w.r_u, x.u[k], gu);
        grd.u[k] = std::move(gu);

        // Source block: the residual depends on psi^k through -psi^k, and the
        // minus sign lives inside adjoint_param.
        if (pr.estimate_source) {
            std::vector<double> gp = adjoint_param(ctx, e, ParamBlock::phi);
            for (int i = 0; i < g.nx; ++i) {
                grd.psi[k][i] = 2.0 * w.beta_e * gp[i] + 2.0 * w.r_psi * x.psi[k][i];
            }
        }

        // Nonlinearity block accumulates across samples; the residual enters
        // with -f(u), hence the minus outside adjoint_nn.
        std::vector<double> gth(x.theta.size(), 0.0);
        adjoint_nn(ctx, e, gth);
        for (size_t l = 0; l < gth.size(); ++l) grd.theta[l] -= 2.0 * w.beta_e * gth[l];
    }
    for (size_t l = 0; l < x.theta.size(); ++l) grd.theta[l] += 2.0 * w.r_theta * x.theta[l];
    return grd;
}

// Gradient of the discretized objective with respect to the raw degrees of
// freedom (interior node values, source values, parameters).  Pairs with
// directions through plain Euclidean dots.
inline GradientState flat_gradient(const Problem& pr, const PointwiseFamily& fam,
                                   const SolveState& x, const ObservationSet& data,
                                   const ObjectiveWeights& w, const ASolver& A,
                                   const Evaluation& ev) {
    const Grid& g = pr.g;
    const size_t K = x.u.size();
    GradientState grd = make_gradient_like(pr, x);

    for (size_t k = 0; k < K; ++k) {
        AdjointContext ctx(g, pr.params, x.u[k], fam, A);
        const Field& e = ev.residuals[k];

        // d/du of beta_e ||e||_W^2: transposed time stencil (quadrature
        // weights folded in) plus the transposed spatial stencil per row.
        Field gu = time_derivative_weighted_transpose(g, e);
        Field ke = transport_spatial_transpose(ctx, e);
        for (int m = 0; m <= g.nt; ++m) {
            auto gum = gu.slice(m);
            const auto kem = ke.slice(m);
            const double wtm = g.wt(m);
            gum[0] = 0.0;
            gum[g.nx - 1] = 0.0;
            for (int i = 1; i < g.nx - 1; ++i) {
                gum[i] = 2.0 * w.beta_e * g.dx() * (gum[i] + wtm * kem[i]);
            }
        }
        // d/du of beta_M ||M u - y||_Y^2: scatter the weighted misfit.
        if (pr.meas.mode == MeasurementSpec::Mode::snapshots) {
            for (size_t r = 0; r < pr.meas.indices.size(); ++r) {
                const int tr = pr.meas.indices[r];
                auto gur = gu.slice(tr);
                const auto& z = ev.misfits[k].snapshot_misfit[r];
                for (int i = 1; i < g.nx - 1; ++i) {
                    gur[i] += 2.0 * w.beta_M * pr.meas.scale * g.wx(i) * z[i];
                }
            }
        } else {
            const Field& z = ev.misfits[k].full_misfit;
            for (int m = 0; m <= g.nt; ++m) {
                auto gum = gu.slice(m);
                const auto zm = z.slice(m);
                for (int i = 1; i < g.nx - 1; ++i) {
                    gum[i] += 2.0 * w.beta_M * pr.meas.scale * g.wt(m) * g.wx(i) * zm[i];
                }
            }
        }
        // d/du of r_u ||u||_V^2: Euclidean application of the state Gram.
        Field su = state_gram_apply(g, x.u[k]);
        axpy(2.0 * w.r_u, su, gu);
        grd.u[k] = std::move(gu);

        if (pr.estimate_source) {
            // d/dpsi_i = -2 beta_e wx_i sum_j wt_j e_ji + 2 r_psi wx_i psi_i.
            for (int i = 0; i < g.nx; ++i) {
                double s = 0.0;
                for (int j = 0; j <= g.nt; ++j) s += g.wt(j) * e.at(j, i);
                grd.psi[k][i] =
                    -2.0 * w.beta_e * g.wx(i) * s + 2.0 * w.r_psi * g.wx(i) * x.psi[k][i];
            }
        }

        // Theta degrees of freedom are already Euclidean, so this block is
        // identical to the function-space assembly.
        std::vector<double> gth(x.theta.size(), 0.0);
        adjoint_nn(ctx, e, gth);
        for (size_t l = 0; l < gth.size(); ++l) grd.theta[l] -= 2.0 * w.beta_e * gth[l];
    }
    for (size_t l = 0; l < x.theta.size(); ++l) grd.theta[l] += 2.0 * w.r_theta * x.theta[l];
    return grd;
}

// ---------------------------------------------------------------------------
// Flat packing (ADAM path)
// ---------------------------------------------------------------------------

// Degrees of freedom, in a fixed order: for each sample the interior columns
// of u (row-major over time), then (if estimated) each sample's full source
// slice, then theta.  Boundary columns of u are pinned to zero and are not
// degrees of freedom.
inline size_t flat_dof_count(const Problem& pr, const SolveState& x) {
    const size_t per_state = static_cast<size_t>(pr.g.nt + 1) * pr.g.n_interior();
    size_t n = x.u.size() * per_state;
    if (pr.estimate_source) n += x.psi.size() * static_cast<size_t>(pr.g.nx);
    return n + x.theta.size();
}

inline void pack_flat(const Problem& pr, const std::vector<Field>& u,
                      const std::vector<std::vector<double>>& psi,
                      const std::vector<double>& theta, std::vector<double>& out) {
    const Grid& g = pr.g;
    out.clear();
    for (const Field& uk : u) {
        for (int j = 0; j <= g.nt; ++j) {
            const auto s = uk.slice(j);
            out.insert(out.end(), s.begin() + 1, s.end() - 1);
        }
    }
    if (pr.estimate_source) {
        for (const auto& p : psi) out.insert(out.end(), p.begin(), p.end());
    }
    out.insert(out.end(), theta.begin(), theta.end());
}

inline void unpack_flat(const Problem& pr, std::span<const double> flat, SolveState& x) {
    const Grid& g = pr.g;
    size_t pos = 0;
    for (Field& uk : x.u) {
        for (int j = 0; j <= g.nt; ++j) {
            auto s = uk.slice(j);
            s[0] = 0.0;
            s[g.nx - 1] = 0.0;
            for (int i = 1; i < g.nx - 1; ++i) s[i] = flat[pos++];
        }
    }
    if (pr.estimate_source) {
        for (auto& p : x.psi) {
            for (int i = 0; i < g.nx; ++i) p[i] = flat[pos++];
        }
    }
    for (auto& t : x.theta) t = flat[pos++];
    if (pos != flat.size()) {
        throw std::invalid_argument("unpack_flat: length does not match the problem layout");
    }
}

// ---------------------------------------------------------------------------
// Landweber driver
// ---------------------------------------------------------------------------

struct LandweberOptions {
    double mu0 = 1.0;  // initial (and maximum) step size
};

// Gradient descent in the solution-space metric with an adaptive step: a step
// is accepted if the trial PDE residual does not exceed the current one
// (ties accept), otherwise the step is bisected; after an acceptance the step
// regrows to min(2 mu, mu0).  Stops on the discrepancy principle
// ||M u - y||_Y <= tau * delta (checked before the first iteration too), on
// max_iters, or with reason "stalled" when bisection reaches min_step.
inline SolveState landweber_run(const Problem& pr, const PointwiseFamily& fam_proto,
                                SolveState x, const ObservationSet& data,
                                const ObjectiveWeights& w, const StoppingRule& rule,
                                const LandweberOptions& opt = {},
                                std::vector<TraceRow>* trace = nullptr) {
    validate_stopping(rule);
    if (!(opt.mu0 > 0.0)) throw std::invalid_argument("landweber_run: mu0 must be positive");
    auto fam = fam_proto.clone();
    fam->set_params(x.theta);
    ASolver A(pr.g);

    Evaluation ev = evaluate(pr, *fam, x, data, w);
    double mu = opt.mu0;
    x.mu = mu;
    x.iterations = 0;
    x.residual_history.assign(1, std::sqrt(ev.parts.residual_W2));
    if (trace) {
        trace->push_back({0, ev.parts.total, std::sqrt(ev.parts.residual_W2),
                          std::sqrt(ev.parts.misfit_Y2), 0.0});
    }

    for (long iter = 1; iter <= rule.max_iters; ++iter) {
        if (std::sqrt(ev.parts.misfit_Y2) <= rule.tau * rule.delta) {
            x.stop_reason = "discrepancy";
            return x;
        }
        GradientState grd = function_space_gradient(pr, *fam, x, data, w, A, ev);

        bool accepted = false;
        SolveState trial = x;
        Evaluation trial_ev;
        while (true) {
            trial.u = x.u;
            for (size_t k = 0; k < x.u.size(); ++k) axpy(-mu, grd.u[k], trial.u[k]);
            if (pr.estimate_source) {
                trial.psi = x.psi;
                for (size_t k = 0; k < x.psi.size(); ++k) {
                    for (int i = 0; i < pr.g.nx; ++i) trial.psi[k][i] -= mu * grd.psi[k][i];
                }
            }
            trial.theta = x.theta;
            for (size_t l = 0; l < x.theta.size(); ++l) trial.theta[l] -= mu * grd.theta[l];
            fam->set_params(trial.theta);
            trial_ev = evaluate(pr, *fam, trial, data, w);
            if (trial_ev.parts.residual_W2 <= ev.parts.residual_W2) {
                accepted = true;
                break;
            }
            mu *= 0.5;
            if (mu < rule.min_step) break;
        }
        if (!accepted) {
            x.stop_reason = "stalled";
            return x;
        }

        x.u = std::move(trial.u);
        if (pr.estimate_source) x.psi = std::move(trial.psi);
        x.theta = std::move(trial.theta);
        ev = std::move(trial_ev);
        x.iterations = iter;
        x.mu = mu;
        x.residual_history.push_back(std::sqrt(ev.parts.residual_W2));
        if (trace) {
            trace->push_back({iter, ev.parts.total, std::sqrt(ev.parts.residual_W2),
                              std::sqrt(ev.parts.misfit_Y2), mu});
        }
        mu = std::min(2.0 * mu, opt.mu0);
    }
    if (std::sqrt(ev.parts.misfit_Y2) <= rule.tau * rule.delta) {
        x.stop_reason = "discrepancy";
    } else {
        x.stop_reason = "max-iterations";
    }
    return x;
}

// ---------------------------------------------------------------------------
// ADAM driver
// ---------------------------------------------------------------------------

struct AdamOptions {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long iters = 10000;
    long trace_every = 100;  // 0 disables intermediate rows; first/last always traced
};

inline void validate_adam(const AdamOptions& o) {
    if (o.lr < 0.0) throw std::invalid_argument("AdamOptions: learning rate must be nonnegative");
    if (!(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0)) {
        throw std::invalid_argument("AdamOptions: moment decays must lie in [0, 1)");
    }
    if (!(o.eps > 0.0)) throw std::invalid_argument("AdamOptions: eps must be positive");
    if (o.iters < 0) throw std::invalid_argument("AdamOptions: iteration count must be nonnegative");
    if (o.trace_every < 0) throw std::invalid_argument("AdamOptions: trace_every must be nonnegative");
}

// Plain ADAM on a vector-valued gradient callback.  Returns the final point;
// also reused directly by tests on scalar objectives.
template <class GradFn>
std::vector<double> adam_core(std::vector<double> x0, GradFn&& grad, const AdamOptions& opt,
                              const std::function<void(long, const std::vector<double>&)>& on_step = {}) {
    validate_adam(opt);
    const size_t n = x0.size();
    std::vector<double> m(n, 0.0), v(n, 0.0), gbuf;
    double b1t = 1.0, b2t = 1.0;
    for (long t = 1; t <= opt.iters; ++t) {
        gbuf = grad(t, x0);
        if (gbuf.size() != n) throw std::invalid_argument("adam_core: gradient length mismatch");
        b1t *= opt.beta1;
        b2t *= opt.beta2;
        for (size_t i = 0; i < n; ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gbuf[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gbuf[i] * gbuf[i];
            const double mhat = m[i] / (1.0 - b1t);
            const double vhat = v[i] / (1.0 - b2t);
            x0[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
        if (on_step) on_step(t, x0);
    }
    return x0;
}

// ADAM on the flattened unknowns with the flat gradient assembly.  A NaN in
// the objective or gradient aborts the run: the state carries stop_reason
// "nan-abort" and the iterate reached so far, so callers can still emit
// partial artifacts before reporting failure.
inline SolveState adam_run(const Problem& pr, const PointwiseFamily& fam_proto, SolveState x,
                           const ObservationSet& data, const ObjectiveWeights& w,
                           const AdamOptions& opt = {},
                           std::vector<TraceRow>* trace = nullptr) {
    validate_adam(opt);
    auto fam = fam_proto.clone();
    fam->set_params(x.theta);
    ASolver A(pr.g);

    std::vector<double> flat;
    pack_flat(pr, x.u, x.psi, x.theta, flat);

    Evaluation ev = evaluate(pr, *fam, x, data, w);
    if (trace) {
        trace->push_back({0, ev.parts.total, std::sqrt(ev.parts.residual_W2),
                          std::sqrt(ev.parts.misfit_Y2), opt.lr});
    }

    x.residual_history.assign(1, std::sqrt(ev.parts.residual_W2));

    bool nan_hit = false;
    long nan_iter = 0;
    std::vector<double> m(flat.size(), 0.0), v(flat.size(), 0.0), gflat;
    double b1t = 1.0, b2t = 1.0;
    long done = 0;
    for (long t = 1; t <= opt.iters; ++t) {
        // The evaluation here describes the point reached after t-1 updates.
        unpack_flat(pr, flat, x);
        fam->set_params(x.theta);
        ev = evaluate(pr, *fam, x, data, w);
        if (!std::isfinite(ev.parts.total)) {
            nan_hit = true;
            nan_iter = t - 1;
            break;
        }
        if (trace && opt.trace_every > 0 && t > 1 && (t - 1) % opt.trace_every == 0) {
            trace->push_back({t - 1, ev.parts.total, std::sqrt(ev.parts.residual_W2),
                              std::sqrt(ev.parts.misfit_Y2), opt.lr});
        }
        GradientState grd = flat_gradient(pr, *fam, x, data, w, A, ev);
        pack_flat(pr, grd.u, grd.psi, grd.theta, gflat);

        b1t *= opt.beta1;
        b2t *= opt.beta2;
        for (size_t i = 0; i < flat.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gflat[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gflat[i] * gflat[i];
            const double mhat = m[i] / (1.0 - b1t);
            const double vhat = v[i] / (1.0 - b2t);
            flat[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
        done = t;
    }

    unpack_flat(pr, flat, x);
    fam->set_params(x.theta);
    x.mu = opt.lr;
    if (nan_hit) {
        // Leave the offending iterate in place for diagnosis; no further
        // evaluation (it would only propagate NaNs into the trace).
        x.iterations = nan_iter;
        x.stop_reason = "nan-abort";
        return x;
    }
    ev = evaluate(pr, *fam, x, data, w);
    x.iterations = done;
    x.residual_history.push_back(std::sqrt(ev.parts.residual_W2));
    x.stop_reason = "max-iterations";
    if (trace && done > 0) {
        trace->push_back({done, ev.parts.total, std::sqrt(ev.parts.residual_W2),
                          std::sqrt(ev.parts.misfit_Y2), opt.lr});
    }
    return x;
}

}  // namespace aao
