// Uniform space-time grid on (0,T) x (0,1), second-order finite-difference
// stencils, trapezoid quadrature, and the tridiagonal (Thomas) solves used
// everywhere else in the library.
//
// Conventions:
//   - Space has nx nodes x_i = i*dx, i = 0..nx-1, dx = 1/(nx-1).  The first
//     and last node are Dirichlet boundary nodes; "interior" means 1..nx-2.
//   - Time has nt+1 nodes t_j = j*dt, j = 0..nt, dt = T/nt.
//   - A Field stores one value per (time node, space node), row-major in time,
//     so slice(j) is the spatial profile at t_j.  Fields subject to the
//     homogeneous Dirichlet condition keep zeros in their boundary columns.
//   - All integrals are trapezoid sums; discrete L2 inner products carry the
//     trapezoid weights (h/2 at the ends, h inside).
//
// Two different first-difference stencils appear below, on purpose:
//   - gradient_slice / time_derivative use central differences inside and
//     one-sided second-order stencils at the ends.  These discretize the PDE
//     residual and coefficient transport terms.
//   - the smoothness metric (h2_inner / state_inner) measures first
//     derivatives by cell-edge differences with midpoint weights.  With that
//     choice the metric's Gram matrix is exactly dx*(L^2 + L) for the
//     Dirichlet Laplacian L = -lap_h, so the representer solves in
//     adjoint.hpp invert it exactly and adjoint identities hold to rounding
//     rather than to discretization accuracy.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aao {

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

struct Grid {
    int nx = 0;       // number of spatial nodes including both boundaries
    int nt = 0;       // number of time steps (nt+1 time nodes)
    double T = 0.0;   // final time

    Grid() = default;
    Grid(int nx_, int nt_, double T_) : nx(nx_), nt(nt_), T(T_) {
        if (nx < 5) {
            throw std::invalid_argument("Grid: need at least 5 spatial nodes, got " + std::to_string(nx));
        }
        if (nt < 4) {
            throw std::invalid_argument("Grid: need at least 4 time steps, got " + std::to_string(nt));
        }
        if (!(T > 0.0)) {
            throw std::invalid_argument("Grid: final time must be positive");
        }
    }

    double dx() const { return 1.0 / (nx - 1); }
    double dt() const { return T / nt; }
    double x(int i) const { return i * dx(); }
    double t(int j) const { return j * dt(); }
    int n_interior() const { return nx - 2; }

    // Trapezoid quadrature weight of space node i on (0,1).
    double wx(int i) const { return (i == 0 || i == nx - 1) ? 0.5 * dx() : dx(); }
    // Trapezoid quadrature weight of time node j on (0,T).
    double wt(int j) const { return (j == 0 || j == nt) ? 0.5 * dt() : dt(); }

    bool operator==(const Grid& o) const { return nx == o.nx && nt == o.nt && T == o.T; }
};

// ---------------------------------------------------------------------------
// Space-time field
// ---------------------------------------------------------------------------

struct Field {
    int nt = 0;              // time steps; nt+1 stored slices
    int nx = 0;              // spatial nodes per slice
    std::vector<double> v;   // (nt+1)*nx values, slice-major

    Field() = default;
    explicit Field(const Grid& g) : nt(g.nt), nx(g.nx), v(static_cast<size_t>(g.nt + 1) * g.nx, 0.0) {}
    Field(int nt_, int nx_) : nt(nt_), nx(nx_), v(static_cast<size_t>(nt_ + 1) * nx_, 0.0) {}

    double& at(int j, int i) { return v[static_cast<size_t>(j) * nx + i]; }
    double at(int j, int i) const { return v[static_cast<size_t>(j) * nx + i]; }

    std::span<double> slice(int j) { return {v.data() + static_cast<size_t>(j) * nx, static_cast<size_t>(nx)}; }
    std::span<const double> slice(int j) const {
        return {v.data() + static_cast<size_t>(j) * nx, static_cast<size_t>(nx)};
    }

    bool same_shape(const Field& o) const { return nt == o.nt && nx == o.nx; }
};

inline void check_same_shape(const Field& a, const Field& b, const char* where) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(where) + ": field shapes differ");
    }
}

// y += alpha * x
inline void axpy(double alpha, const Field& x, Field& y) {
    check_same_shape(x, y, "axpy");
    for (size_t k = 0; k < y.v.size(); ++k) y.v[k] += alpha * x.v[k];
}

inline void scale(Field& x, double alpha) {
    for (double& e : x.v) e *= alpha;
}

// ---------------------------------------------------------------------------
// Finite-difference stencils
// ---------------------------------------------------------------------------

// Second difference in space; boundary entries of the output are zero (the
// residual and all Dirichlet-space operators only live on interior nodes).
inline void laplacian_slice(const Grid& g, std::span<const double> in, std::span<double> out) {
    if (in.size() != static_cast<size_t>(g.nx) || out.size() != static_cast<size_t>(g.nx)) {
        throw std::invalid_argument("laplacian_slice: slice length mismatch");
    }
    const double idx2 = 1.0 / (g.dx() * g.dx());
    out[0] = 0.0;
    out[g.nx - 1] = 0.0;
    for (int i = 1; i < g.nx - 1; ++i) {
        out[i] = (in[i - 1] - 2.0 * in[i] + in[i + 1]) * idx2;
    }
}

// First derivative in space: central inside, second-order one-sided at the
// boundary nodes.  Used for coefficient transport terms, not for the metric.
inline void gradient_slice(const Grid& g, std::span<const double> in, std::span<double> out) {
    if (in.size() != static_cast<size_t>(g.nx) || out.size() != static_cast<size_t>(g.nx)) {
        throw std::invalid_argument("gradient_slice: slice length mismatch");
    }
    const double i2dx = 1.0 / (2.0 * g.dx());
    const int n = g.nx;
    out[0] = (-3.0 * in[0] + 4.0 * in[1] - in[2]) * i2dx;
    for (int i = 1; i < n - 1; ++i) {
        out[i] = (in[i + 1] - in[i - 1]) * i2dx;
    }
    out[n - 1] = (3.0 * in[n - 1] - 4.0 * in[n - 2] + in[n - 3]) * i2dx;
}

// Time derivative of a field: central differences inside, second-order
// one-sided three-point stencils at t = 0 and t = T.
inline Field time_derivative(const Grid& g, const Field& u) {
    if (u.nt != g.nt || u.nx != g.nx) {
        throw std::invalid_argument("time_derivative: field does not match grid");
    }
    Field d(g);
    const double i2dt = 1.0 / (2.0 * g.dt());
    const int nt = g.nt, nx = g.nx;
    for (int i = 0; i < nx; ++i) {
        d.at(0, i) = (-3.0 * u.at(0, i) + 4.0 * u.at(1, i) - u.at(2, i)) * i2dt;
        d.at(nt, i) = (3.0 * u.at(nt, i) - 4.0 * u.at(nt - 1, i) + u.at(nt - 2, i)) * i2dt;
    }
    for (int j = 1; j < nt; ++j) {
        for (int i = 0; i < nx; ++i) {
            d.at(j, i) = (u.at(j + 1, i) - u.at(j - 1, i)) * i2dt;
        }
    }
    return d;
}

// Transpose of the time-derivative stencil with trapezoid time weights:
// out = D^T (wt .* in) slice-wise, where D is the matrix applied by
// time_derivative.  Needed for exact discrete transposes of the residual.
inline Field time_derivative_weighted_transpose(const Grid& g, const Field& z) {
    if (z.nt != g.nt || z.nx != g.nx) {
        throw std::invalid_argument("time_derivative_weighted_transpose: field does not match grid");
    }
    Field out(g);
    const double i2dt = 1.0 / (2.0 * g.dt());
    const int nt = g.nt, nx = g.nx;
    // Row 0 of D: (-3, 4, -1)/(2dt) acting on time nodes 0,1,2.
    // Row nt of D: (1, -4, 3)/(2dt) acting on nodes nt-2, nt-1, nt.
    // Interior row j: (-1, 0, 1)/(2dt) on nodes j-1, j+1.
    for (int i = 0; i < nx; ++i) {
        const double z0 = g.wt(0) * z.at(0, i);
        const double zn = g.wt(nt) * z.at(nt, i);
        out.at(0, i) += -3.0 * i2dt * z0;
        out.at(1, i) += 4.0 * i2dt * z0;
        out.at(2, i) += -1.0 * i2dt * z0;
        out.at(nt - 2, i) += 1.0 * i2dt * zn;
        out.at(nt - 1, i) += -4.0 * i2dt * zn;
        out.at(nt, i) += 3.0 * i2dt * zn;
    }
    for (int j = 1; j < nt; ++j) {
        for (int i = 0; i < nx; ++i) {
            const double zj = g.wt(j) * z.at(j, i);
            out.at(j - 1, i) += -i2dt * zj;
            out.at(j + 1, i) += i2dt * zj;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Quadrature and inner products
// ---------------------------------------------------------------------------

// Trapezoid L2(0,1) inner product of two spatial slices.
inline double inner_l2(const Grid& g, std::span<const double> a, std::span<const double> b) {
    if (a.size() != static_cast<size_t>(g.nx) || b.size() != a.size()) {
        throw std::invalid_argument("inner_l2: slice length mismatch");
    }
    double s = 0.0;
    for (int i = 0; i < g.nx; ++i) s += g.wx(i) * a[i] * b[i];
    return s;
}

inline double norm_l2(const Grid& g, std::span<const double> a) { return std::sqrt(inner_l2(g, a, a)); }

// Trapezoid L2((0,T) x (0,1)) inner product of two space-time fields.
inline double inner_space_time(const Grid& g, const Field& a, const Field& b) {
    check_same_shape(a, b, "inner_space_time");
    double s = 0.0;
    for (int j = 0; j <= g.nt; ++j) s += g.wt(j) * inner_l2(g, a.slice(j), b.slice(j));
    return s;
}

inline double norm_space_time(const Grid& g, const Field& a) { return std::sqrt(inner_space_time(g, a, a)); }

// Discrete H2 inner product on Dirichlet slices:
//   (a,b)_H2 = (lap_h a, lap_h b)_L2  +  sum over cells dx * D+a * D+b,
// i.e. second derivatives at interior nodes with weight dx plus cell-edge
// first differences with midpoint weight.  Equals dx * a^T (L^2 + L) b for
// the Dirichlet second-difference matrix L = -lap_h, which is the identity
// the representer solves rely on.
inline double h2_inner(const Grid& g, std::span<const double> a, std::span<const double> b) {
    if (a.size() != static_cast<size_t>(g.nx) || b.size() != a.size()) {
        throw std::invalid_argument("h2_inner: slice length mismatch");
    }
    const double dx = g.dx();
    const double idx2 = 1.0 / (dx * dx);
    double s = 0.0;
    for (int i = 1; i < g.nx - 1; ++i) {
        const double la = (a[i - 1] - 2.0 * a[i] + a[i + 1]) * idx2;
        const double lb = (b[i - 1] - 2.0 * b[i] + b[i + 1]) * idx2;
        s += dx * la * lb;
    }
    for (int c = 0; c + 1 < g.nx; ++c) {
        s += ((a[c + 1] - a[c]) / dx) * ((b[c + 1] - b[c]) / dx) * dx;
    }
    return s;
}

inline double h2_norm(const Grid& g, std::span<const double> a) { return std::sqrt(h2_inner(g, a, a)); }

// Smoothness metric on state fields:
//   (u,v)_state = sum over time cells dt * (D+u/dt, D+v/dt)_H2 + (u(0), v(0))_H2.
// The time derivative is measured by cell-edge differences for the same
// exact-transpose reason as the H1 part of h2_inner.
inline double state_inner(const Grid& g, const Field& u, const Field& v) {
    check_same_shape(u, v, "state_inner");
    const double dt = g.dt();
    std::vector<double> du(g.nx), dv(g.nx);
    double s = h2_inner(g, u.slice(0), v.slice(0));
    for (int e = 0; e < g.nt; ++e) {
        auto u0 = u.slice(e), u1 = u.slice(e + 1);
        auto v0 = v.slice(e), v1 = v.slice(e + 1);
        for (int i = 0; i < g.nx; ++i) {
            du[i] = (u1[i] - u0[i]) / dt;
            dv[i] = (v1[i] - v0[i]) / dt;
        }
        s += dt * h2_inner(g, du, dv);
    }
    return s;
}

inline double state_norm(const Grid& g, const Field& u) { return std::sqrt(state_inner(g, u, u)); }

// Euclidean Gram application of h2_inner: writes S with
//   sum_i S[i] * b[i] = h2_inner(a, b)  for every b vanishing at the boundary.
// Used by gradient code that differentiates the metric with respect to raw
// node values.  Boundary entries of S are set to zero (those nodes are not
// degrees of freedom).
inline void h2_gram_apply(const Grid& g, std::span<const double> a, std::span<double> out) {
    if (a.size() != static_cast<size_t>(g.nx) || out.size() != a.size()) {
        throw std::invalid_argument("h2_gram_apply: slice length mismatch");
    }
    const double dx = g.dx();
    std::vector<double> lap1(g.nx), lap2(g.nx);
    laplacian_slice(g, a, lap1);
    laplacian_slice(g, lap1, lap2);
    out[0] = 0.0;
    out[g.nx - 1] = 0.0;
    for (int i = 1; i < g.nx - 1; ++i) {
        out[i] = dx * (lap2[i] - lap1[i]);
    }
}

// Euclidean Gram application of state_inner: returns S with
//   sum_{j,i} S(j,i) * v(j,i) = state_inner(u, v)  for every v vanishing at
// the spatial boundary.  Boundary columns of S are zero.
inline Field state_gram_apply(const Grid& g, const Field& u) {
    if (u.nt != g.nt || u.nx != g.nx) {
        throw std::invalid_argument("state_gram_apply: field shape mismatch");
    }
    const double dt = g.dt();
    Field s(g.nt, g.nx);
    std::vector<double> diff(g.nx), w(g.nx);
    h2_gram_apply(g, u.slice(0), w);
    for (int i = 0; i < g.nx; ++i) s.at(0, i) += w[i];
    for (int e = 0; e < g.nt; ++e) {
        auto u0 = u.slice(e), u1 = u.slice(e + 1);
        for (int i = 0; i < g.nx; ++i) diff[i] = (u1[i] - u0[i]) / dt;
        h2_gram_apply(g, diff, w);
        for (int i = 0; i < g.nx; ++i) {
            s.at(e + 1, i) += w[i];
            s.at(e, i) -= w[i];
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Tridiagonal solves
// ---------------------------------------------------------------------------

// Thomas algorithm for a general tridiagonal system.  sub[i] multiplies
// x[i-1] in row i (sub[0] unused), sup[i] multiplies x[i+1] (sup[n-1]
// unused).  No pivoting; the systems in this library are diagonally
// dominant.  Throws on a vanishing pivot.
inline std::vector<double> thomas_solve(std::span<const double> sub, std::span<const double> diag,
                                        std::span<const double> sup, std::span<const double> rhs) {
    const size_t n = diag.size();
    if (sub.size() != n || sup.size() != n || rhs.size() != n) {
        throw std::invalid_argument("thomas_solve: band length mismatch");
    }
    if (n == 0) return {};
    std::vector<double> c(n), d(n), x(n);
    double pivot = diag[0];
    if (pivot == 0.0) {
        throw std::runtime_error("thomas_solve: zero pivot in tridiagonal elimination");
    }
    c[0] = sup[0] / pivot;
    d[0] = rhs[0] / pivot;
    for (size_t i = 1; i < n; ++i) {
        pivot = diag[i] - sub[i] * c[i - 1];
        if (pivot == 0.0) {
            throw std::runtime_error("thomas_solve: zero pivot in tridiagonal elimination");
        }
        c[i] = sup[i] / pivot;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / pivot;
    }
    x[n - 1] = d[n - 1];
    for (size_t i = n - 1; i-- > 0;) {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    return x;
}

// Solve (c1 * (-lap_h) + c0 * I) u = k on the interior with u = 0 at both
// boundary nodes.  k and the returned slice are full-length (nx); boundary
// entries of k are ignored.
inline std::vector<double> dirichlet_solve(const Grid& g, double c0, double c1, std::span<const double> k) {
    if (k.size() != static_cast<size_t>(g.nx)) {
        throw std::invalid_argument("dirichlet_solve: slice length mismatch");
    }
    const int n = g.n_interior();
    const double idx2 = 1.0 / (g.dx() * g.dx());
    std::vector<double> sub(n, -c1 * idx2), diag(n, 2.0 * c1 * idx2 + c0), sup(n, -c1 * idx2), rhs(n);
    for (int i = 0; i < n; ++i) rhs[i] = k[i + 1];
    std::vector<double> xi = thomas_solve(sub, diag, sup, rhs);
    std::vector<double> out(g.nx, 0.0);
    for (int i = 0; i < n; ++i) out[i + 1] = xi[i];
    return out;
}

// Riesz representer in the discrete H2 metric of the functional
// v -> (k, v)_L2 on Dirichlet slices: two nested tridiagonal solves,
//   (-lap_h + I) z1 = k,   (-lap_h) z2 = z1,
// so z2 = (L^2 + L)^{-1} k / dx-weighting, and (z2, v)_H2 = (k, v)_L2
// exactly for every Dirichlet slice v.
inline std::vector<double> h2_representer(const Grid& g, std::span<const double> k) {
    std::vector<double> z1 = dirichlet_solve(g, 1.0, 1.0, k);
    return dirichlet_solve(g, 0.0, 1.0, z1);
}

}  // namespace aao
