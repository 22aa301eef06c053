#pragma once
// Randomized adjoint-pairing checks and a manufactured-solution helper.
//
// Each pairing case draws a random direction in the domain space and a random
// direction in the codomain space, evaluates the forward (directional) map
// against one and the adjoint against the other, and reports the mismatch of
// the two inner products scaled by the product of the direction norms.  All
// blocks here are exact discrete transposes, so the defects are pure rounding
// noise (orders of magnitude below the 1e-8 gate used by the verification
// tools).
//
// Directions are drawn with zero spatial boundary values.  Residual-space
// directions vanish there because the residual itself is only defined on
// interior nodes; state directions vanish there because the state space
// carries the homogeneous boundary condition.  The parameter blocks place no
// boundary constraint except the diffusion coefficient, whose smoothness
// metric pairs exactly only against boundary-vanishing perturbations.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "aao/adjoint.hpp"
#include "aao/grid.hpp"
#include "aao/lipschitz.hpp"
#include "aao/model.hpp"
#include "aao/nn.hpp"

namespace aao {

struct PairingCase {
    std::string name;
    double defect = 0.0;  // |forward pairing - adjoint pairing| / (direction norm product)
};

namespace detail {

inline Field random_interior_field(const Grid& g, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Field f(g.nt, g.nx);
    for (int j = 0; j <= g.nt; ++j) {
        auto fj = f.slice(j);
        for (int i = 1; i < g.nx - 1; ++i) fj[i] = dist(rng);
    }
    return f;
}

inline std::vector<double> random_slice(const Grid& g, std::mt19937_64& rng, bool zero_boundary) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(g.nx, 0.0);
    const int lo = zero_boundary ? 1 : 0;
    const int hi = zero_boundary ? g.nx - 1 : g.nx;
    for (int i = lo; i < hi; ++i) v[i] = dist(rng);
    return v;
}

inline double relative_defect(double lhs, double rhs, double scale) {
    return std::abs(lhs - rhs) / std::max(scale, 1e-300);
}

}  // namespace detail

// Runs every adjoint block through `draws` randomized pairings on the given
// grid and returns one worst-case defect per block.  Deterministic in `seed`.
inline std::vector<PairingCase> adjoint_pairing_suite(const Grid& g, unsigned long long seed,
                                                      int draws) {
    if (draws < 1) throw std::invalid_argument("adjoint_pairing_suite: needs at least one draw");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);

    // A mildly varying diffusion coefficient and reaction term so the
    // coefficient-dependent paths are exercised away from the identity case.
    PdeParams p(g);
    for (int i = 0; i < g.nx; ++i) {
        p.a[i] = 1.0 + 0.3 * std::sin(2.0 * std::acos(-1.0) * g.x(i));
        p.c[i] = 0.5 * std::cos(3.0 * g.x(i));
    }
    NetFamily fam(std::vector<int>{1, 2, 4, 2, 1});
    {
        Net net = fam.net();
        randomize_uniform(net, seed ^ 0x9e3779b97f4a7c15ull, 0.5);
        fam = NetFamily(net);
    }
    ASolver A(g);

    std::vector<PairingCase> cases = {
        {"transport", 0.0},   {"measurement-snapshot", 0.0},
        {"measurement-full", 0.0}, {"source", 0.0},
        {"reaction", 0.0},    {"diffusion", 0.0},
        {"nonlinearity", 0.0}, {"initial-trace", 0.0},
    };

    std::uniform_int_distribution<int> snap_dist(1, g.nt);
    for (int d = 0; d < draws; ++d) {
        Field u = detail::random_interior_field(g, rng);
        AdjointContext ctx(g, p, u, fam, A);

        Field du = detail::random_interior_field(g, rng);
        Field z = detail::random_interior_field(g, rng);
        const double norm_du = state_norm(g, du);
        const double norm_z = norm_space_time(g, z);

        // Transport block: time derivative plus linearized spatial operator.
        {
            std::vector<double> zs(g.nx, 0.0);
            std::vector<double> zt(fam.n_params(), 0.0);
            ResidualDirections dirs{&du, zs, zs, zs, zt};
            Field jvp = residual_jvp(g, p, u, fam, dirs);
            const double lhs = inner_space_time(g, jvp, z);
            const double rhs = state_inner(g, du, adjoint_transport(ctx, z));
            cases[0].defect = std::max(cases[0].defect,
                                       detail::relative_defect(lhs, rhs, norm_du * norm_z));
        }
        // Snapshot measurement block.
        {
            std::vector<double> h = detail::random_slice(g, rng, false);
            const int ti = snap_dist(rng);
            const double scale = 10.0;
            std::vector<double> hl(g.nx);
            for (int i = 0; i < g.nx; ++i) hl[i] = scale * du.at(ti, i);
            const double lhs = inner_l2(g, hl, h);
            const double rhs = state_inner(g, du, adjoint_M_snapshot(ctx, h, ti, scale));
            const double nh = std::sqrt(inner_l2(g, h, h));
            cases[1].defect = std::max(cases[1].defect,
                                       detail::relative_defect(lhs, rhs, norm_du * nh));
        }
        // Full measurement block.
        {
            Field h = detail::random_interior_field(g, rng);
            const double scale = 1.0;
            const double lhs = scale * inner_space_time(g, du, h);
            const double rhs = state_inner(g, du, adjoint_M_full(ctx, h, scale));
            const double nh = norm_space_time(g, h);
            cases[2].defect = std::max(cases[2].defect,
                                       detail::relative_defect(lhs, rhs, norm_du * nh));
        }
        // Source block (residual depends on it with a minus sign).
        {
            std::vector<double> dphi = detail::random_slice(g, rng, false);
            Field zero(g.nt, g.nx);
            std::vector<double> zs(g.nx, 0.0);
            std::vector<double> zt(fam.n_params(), 0.0);
            ResidualDirections dirs{&zero, dphi, zs, zs, zt};
            Field jvp = residual_jvp(g, p, u, fam, dirs);
            const double lhs = inner_space_time(g, jvp, z);
            std::vector<double> k = adjoint_param(ctx, z, ParamBlock::phi);
            const double rhs = inner_l2(g, dphi, k);
            const double nd = std::sqrt(inner_l2(g, dphi, dphi));
            cases[3].defect = std::max(cases[3].defect,
                                       detail::relative_defect(lhs, rhs, nd * norm_z));
        }
        // Reaction-coefficient block.
        {
            std::vector<double> dc = detail::random_slice(g, rng, false);
            Field zero(g.nt, g.nx);
            std::vector<double> zs(g.nx, 0.0);
            std::vector<double> zt(fam.n_params(), 0.0);
            ResidualDirections dirs{&zero, zs, dc, zs, zt};
            Field jvp = residual_jvp(g, p, u, fam, dirs);
            const double lhs = inner_space_time(g, jvp, z);
            std::vector<double> k = adjoint_param(ctx, z, ParamBlock::c);
            const double rhs = inner_l2(g, dc, k);
            const double nd = std::sqrt(inner_l2(g, dc, dc));
            cases[4].defect = std::max(cases[4].defect,
                                       detail::relative_defect(lhs, rhs, nd * norm_z));
        }
        // Diffusion-coefficient block, paired in the slice smoothness metric.
        {
            std::vector<double> da = detail::random_slice(g, rng, true);
            Field zero(g.nt, g.nx);
            std::vector<double> zs(g.nx, 0.0);
            std::vector<double> zt(fam.n_params(), 0.0);
            ResidualDirections dirs{&zero, zs, zs, da, zt};
            Field jvp = residual_jvp(g, p, u, fam, dirs);
            const double lhs = inner_space_time(g, jvp, z);
            std::vector<double> k = adjoint_param(ctx, z, ParamBlock::a);
            const double rhs = h2_inner(g, da, k);
            const double nd = h2_norm(g, da);
            cases[5].defect = std::max(cases[5].defect,
                                       detail::relative_defect(lhs, rhs, nd * norm_z));
        }
        // Nonlinearity-parameter block (adjoint accumulates the positive
        // quadrature sum; the residual carries the minus sign).
        {
            std::vector<double> dtheta(fam.n_params());
            for (auto& v : dtheta) v = dist(rng);
            Field zero(g.nt, g.nx);
            std::vector<double> zs(g.nx, 0.0);
            ResidualDirections dirs{&zero, zs, zs, zs, dtheta};
            Field jvp = residual_jvp(g, p, u, fam, dirs);
            const double lhs = inner_space_time(g, jvp, z);
            std::vector<double> gth(fam.n_params(), 0.0);
            adjoint_nn(ctx, z, gth);
            double rhs = 0.0;
            for (size_t l = 0; l < gth.size(); ++l) rhs -= dtheta[l] * gth[l];
            double nd = 0.0;
            for (double v : dtheta) nd += v * v;
            nd = std::sqrt(nd);
            cases[6].defect = std::max(cases[6].defect,
                                       detail::relative_defect(lhs, rhs, nd * norm_z));
        }
        // Initial-trace block.
        {
            std::vector<double> h = detail::random_slice(g, rng, true);
            const double lhs = h2_inner(g, std::vector<double>(du.slice(0).begin(),
                                                               du.slice(0).end()),
                                        h);
            const double rhs = state_inner(g, du, adjoint_trace(g, h));
            const double nh = h2_norm(g, h);
            cases[7].defect = std::max(cases[7].defect,
                                       detail::relative_defect(lhs, rhs, norm_du * nh));
        }
    }
    return cases;
}

// Largest defect over all blocks; convenience for gates.
inline double pairing_max_defect(const Grid& g, unsigned long long seed, int draws) {
    double worst = 0.0;
    for (const auto& c : adjoint_pairing_suite(g, seed, draws)) worst = std::max(worst, c.defect);
    return worst;
}

// ---------------------------------------------------------------------------
// Embedding constant and Taylor-cone verifier
// ---------------------------------------------------------------------------

// Exact discrete counterpart of the state-space-to-sup-norm embedding
// constant: the largest possible ratio ||d||_inf / ||d||_state over nonzero
// states.  The state metric factors as (time kernel) x (slice smoothness), so
// the sup over point-evaluation functionals has the closed form
//   sqrt((T + 1) * max_i A_ii / dx),
// attained by the metric representer of evaluation at (t = T, x_i*) with i*
// the largest diagonal entry of the slice representer A.
inline double state_sup_embedding_constant(const Grid& g) {
    ASolver A(g);
    std::vector<double> e(g.nx, 0.0), col(g.nx);
    double max_diag = 0.0;
    for (int i = 1; i < g.nx - 1; ++i) {
        e[i] = 1.0;
        A.apply(e, col);
        max_diag = std::max(max_diag, col[i]);
        e[i] = 0.0;
    }
    return std::sqrt((g.T + 1.0) * max_diag / g.dx());
}

// Sampling verifier for the curvature trust radius: draws state pairs with
// ||u - u~||_state <= rho inside the certification box and checks the
// first-order Taylor defect of the pointwise nonlinearity,
//   ||f(u) - f(u~) - f'(u)(u - u~)||_W  <=  c_tc * ||u - u~||_Y,
// with c_tc = rho / rho_max.  Both norms are the space-time trapezoid norm.
// When the radius is unbounded (no curvature), the defect must vanish to
// rounding instead.
struct TaylorConeCheck {
    double rho = 0.0;
    double rho_max = 0.0;
    double c_tc = 0.0;
    int pairs = 0;
    int violations = 0;
    double worst_ratio = 0.0;  // defect / (c_tc * difference norm), max over pairs
};

inline TaylorConeCheck taylor_cone_check(const Grid& g, const PointwiseFamily& fam,
                                         const LipschitzReport& rep, double embedding_constant,
                                         double rho, int n_pairs, unsigned long long seed) {
    if (!(embedding_constant > 0.0)) {
        throw std::invalid_argument("taylor_cone_check: embedding constant must be positive");
    }
    if (n_pairs < 1) throw std::invalid_argument("taylor_cone_check: needs at least one pair");
    const double rho_max = trust_radius(rep, embedding_constant);
    if (!(rho > 0.0) || rho > rho_max) {
        throw std::invalid_argument("taylor_cone_check: rho must lie in (0, rho_max]");
    }
    const bool unbounded = !std::isfinite(rho_max);

    TaylorConeCheck out;
    out.rho = rho;
    out.rho_max = rho_max;
    out.c_tc = unbounded ? 0.0 : rho / rho_max;
    out.pairs = n_pairs;

    std::mt19937_64 rng(seed);
    const double width = rep.hi - rep.lo;
    std::uniform_real_distribution<double> base_dist(rep.lo + 0.25 * width, rep.hi - 0.25 * width);
    std::uniform_real_distribution<double> frac_dist(0.1, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Field u(g.nt, g.nx), d(g.nt, g.nx), defect(g.nt, g.nx);
    for (int pair = 0; pair < n_pairs; ++pair) {
        for (auto& v : u.v) v = base_dist(rng);
        for (int j = 0; j <= g.nt; ++j) {
            auto dj = d.slice(j);
            dj[0] = 0.0;
            dj[g.nx - 1] = 0.0;
            for (int i = 1; i < g.nx - 1; ++i) dj[i] = gauss(rng);
        }
        const double dn = state_norm(g, d);
        if (dn == 0.0) continue;
        double s = rho * frac_dist(rng) / dn;
        // Keep both endpoints inside the certification box: the drawn base
        // leaves a quarter-width margin, so cap the sup norm of the step.
        double sup = 0.0;
        for (double v : d.v) sup = std::max(sup, std::abs(v));
        if (s * sup > 0.25 * width) s = 0.25 * width / sup;
        aao::scale(d, s);

        double slope = 0.0;
        double value_scale = 1.0;
        for (size_t k = 0; k < u.v.size(); ++k) {
            const double fu = fam.value_and_slope(u.v[k], slope);
            const double fut = fam.value(u.v[k] + d.v[k]);
            // f(u) - f(u~) - f'(u)(u - u~)  with  u - u~ = -d
            defect.v[k] = fu - fut + slope * d.v[k];
            value_scale = std::max({value_scale, std::abs(fu), std::abs(fut)});
        }
        const double defect_norm = norm_space_time(g, defect);
        const double diff_norm = norm_space_time(g, d);
        if (diff_norm == 0.0) continue;
        // With no curvature the defect is exactly zero in exact arithmetic;
        // only evaluation roundoff remains, so gate it against the magnitude
        // of the evaluations rather than the (possibly tiny) step norm.
        const double allowed =
            unbounded ? 1e-13 * value_scale : out.c_tc * diff_norm;
        const double ratio = defect_norm / std::max(allowed, 1e-300);
        out.worst_ratio = std::max(out.worst_ratio, ratio);
        if (defect_norm > allowed) ++out.violations;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manufactured stationary solution
// ---------------------------------------------------------------------------

// A problem whose exact solution is known by construction: pick a stationary
// profile U(x), then define the source so the discrete residual vanishes,
//   phi := -a lap U - grad(a) grad(U) + c U - f(U)   on interior nodes.
// The time-derivative stencils annihilate constants up to rounding, so the
// residual of the constant-in-time extension is machine-zero (not bit-zero).
struct Manufactured {
    Field u;                    // constant-in-time extension of the profile
    std::vector<double> phi;    // source that balances the stationary profile
};

inline Manufactured make_manufactured(const Grid& g, const PdeParams& p,
                                      const PointwiseFamily& fam, std::span<const double> profile) {
    if (profile.size() != static_cast<size_t>(g.nx)) {
        throw std::invalid_argument("make_manufactured: profile length mismatch");
    }
    validate_pde_params(g, p);
    std::vector<double> lap(g.nx), grad(g.nx), ga(g.nx);
    laplacian_slice(g, profile, lap);
    gradient_slice(g, profile, grad);
    gradient_slice(g, p.a, ga);
    Manufactured m{Field(g.nt, g.nx), std::vector<double>(g.nx, 0.0)};
    for (int i = 1; i < g.nx - 1; ++i) {
        m.phi[i] = -p.a[i] * lap[i] - ga[i] * grad[i] + p.c[i] * profile[i] - fam.value(profile[i]);
    }
    for (int j = 0; j <= g.nt; ++j) {
        auto uj = m.u.slice(j);
        for (int i = 0; i < g.nx; ++i) uj[i] = profile[i];
    }
    return m;
}

}  // namespace aao
