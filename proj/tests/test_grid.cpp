// Grid, stencil, quadrature and tridiagonal-solve tests.
//
// The reference results here are computed independently of the library:
// dense Gaussian elimination for the tridiagonal solver, the closed-form
// eigenvalues of the Dirichlet second-difference matrix for the elliptic
// solves, and analytic integrals for the quadrature rules.

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "aao/grid.hpp"

namespace {

using aao::Field;
using aao::Grid;

constexpr double kPi = std::numbers::pi;

// Dense Gaussian elimination with partial pivoting; reference for Thomas.
std::vector<double> dense_solve(std::vector<std::vector<double>> A, std::vector<double> b) {
    const size_t n = b.size();
    for (size_t col = 0; col < n; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < n; ++r) {
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        }
        std::swap(A[col], A[piv]);
        std::swap(b[col], b[piv]);
        for (size_t r = col + 1; r < n; ++r) {
            const double f = A[r][col] / A[col][col];
            for (size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (size_t i = n; i-- > 0;) {
        double s = b[i];
        for (size_t c = i + 1; c < n; ++c) s -= A[i][c] * x[c];
        x[i] = s / A[i][i];
    }
    return x;
}

// Eigenvalue of the Dirichlet second-difference matrix -lap_h on a grid with
// spacing dx, for the mode sin(n*pi*x):  (2 - 2*cos(n*pi*dx)) / dx^2.
double discrete_eigenvalue(int n, double dx) { return (2.0 - 2.0 * std::cos(n * kPi * dx)) / (dx * dx); }

std::vector<double> sine_mode(const Grid& g, int n) {
    std::vector<double> s(g.nx);
    for (int i = 0; i < g.nx; ++i) s[i] = std::sin(n * kPi * g.x(i));
    s[0] = 0.0;
    s[g.nx - 1] = 0.0;
    return s;
}

Field random_dirichlet_field(const Grid& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Field f(g);
    for (int j = 0; j <= g.nt; ++j) {
        for (int i = 1; i < g.nx - 1; ++i) f.at(j, i) = u(rng);
    }
    return f;
}

TEST(Grid, ValidatesConstructionArguments) {
    EXPECT_NO_THROW(Grid(5, 4, 0.1));
    EXPECT_THROW(Grid(4, 10, 0.1), std::invalid_argument);
    EXPECT_THROW(Grid(21, 3, 0.1), std::invalid_argument);
    EXPECT_THROW(Grid(21, 10, 0.0), std::invalid_argument);
    EXPECT_THROW(Grid(21, 10, -1.0), std::invalid_argument);
}

TEST(Grid, SpacingAndWeights) {
    Grid g(51, 50, 0.1);
    EXPECT_DOUBLE_EQ(g.dx(), 0.02);
    EXPECT_DOUBLE_EQ(g.dt(), 0.002);
    EXPECT_DOUBLE_EQ(g.x(50), 1.0);
    EXPECT_DOUBLE_EQ(g.t(50), 0.1);
    // Weights sum to the domain lengths.
    double sx = 0.0, st = 0.0;
    for (int i = 0; i < g.nx; ++i) sx += g.wx(i);
    for (int j = 0; j <= g.nt; ++j) st += g.wt(j);
    EXPECT_NEAR(sx, 1.0, 1e-14);
    EXPECT_NEAR(st, 0.1, 1e-14);
}

TEST(Thomas, MatchesDenseSolveOnRandomSystems) {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t n = 3 + static_cast<size_t>(trial);
        std::vector<double> sub(n), diag(n), sup(n), rhs(n);
        std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
        for (size_t i = 0; i < n; ++i) {
            sub[i] = u(rng);
            sup[i] = u(rng);
            diag[i] = 4.0 + u(rng);  // diagonally dominant
            rhs[i] = u(rng);
            A[i][i] = diag[i];
            if (i > 0) A[i][i - 1] = sub[i];
            if (i + 1 < n) A[i][i + 1] = sup[i];
        }
        auto x = aao::thomas_solve(sub, diag, sup, rhs);
        auto xref = dense_solve(A, rhs);
        for (size_t i = 0; i < n; ++i) EXPECT_NEAR(x[i], xref[i], 1e-12);
    }
}

TEST(Thomas, ThrowsOnZeroPivot) {
    std::vector<double> sub{0.0, 0.0}, diag{0.0, 1.0}, sup{0.0, 0.0}, rhs{1.0, 1.0};
    EXPECT_THROW(aao::thomas_solve(sub, diag, sup, rhs), std::runtime_error);
}

TEST(Quadrature, TrapezoidIsExactOnLinearFunctions) {
    Grid g(17, 8, 1.0);
    std::vector<double> a(g.nx), one(g.nx, 1.0);
    for (int i = 0; i < g.nx; ++i) a[i] = 2.0 * g.x(i) + 1.0;
    // integral of (2x+1) over (0,1) is 2.
    EXPECT_NEAR(aao::inner_l2(g, a, one), 2.0, 1e-14);
}

TEST(Quadrature, FullPeriodIntegralOfSineSquared) {
    // sin^2(pi x) = (1 - cos(2 pi x))/2 and the trapezoid rule integrates the
    // full cosine period exactly, so the quadrature is machine accurate here.
    Grid g(51, 10, 0.1);
    auto s = sine_mode(g, 1);
    EXPECT_NEAR(aao::inner_l2(g, s, s), 0.5, 1e-14);
}

TEST(Stencils, LaplacianOfSineIsEigenmode) {
    Grid g(51, 10, 0.1);
    for (int n : {1, 2, 3}) {
        auto s = sine_mode(g, n);
        std::vector<double> lap(g.nx);
        aao::laplacian_slice(g, s, lap);
        const double lam = discrete_eigenvalue(n, g.dx());
        for (int i = 1; i < g.nx - 1; ++i) {
            EXPECT_NEAR(lap[i], -lam * s[i], 1e-10 * lam);
        }
        EXPECT_EQ(lap[0], 0.0);
        EXPECT_EQ(lap[g.nx - 1], 0.0);
    }
}

TEST(Stencils, GradientIsSecondOrder) {
    // Error against the exact derivative of exp(x) should shrink ~4x when the
    // grid is refined 2x, at interior and boundary nodes alike.
    auto max_err = [](const Grid& g) {
        std::vector<double> f(g.nx), d(g.nx);
        for (int i = 0; i < g.nx; ++i) f[i] = std::exp(g.x(i));
        aao::gradient_slice(g, f, d);
        double e = 0.0;
        for (int i = 0; i < g.nx; ++i) e = std::max(e, std::abs(d[i] - std::exp(g.x(i))));
        return e;
    };
    const double e1 = max_err(Grid(41, 4, 1.0));
    const double e2 = max_err(Grid(81, 4, 1.0));
    EXPECT_GT(e1 / e2, 3.4);
    EXPECT_LT(e1 / e2, 4.6);
}

TEST(Stencils, TimeDerivativeExactOnQuadratics) {
    // Central and one-sided three-point stencils both differentiate t^2
    // exactly, including the endpoint rows.
    Grid g(7, 12, 0.6);
    Field u(g);
    for (int j = 0; j <= g.nt; ++j) {
        for (int i = 0; i < g.nx; ++i) u.at(j, i) = (i + 1) * g.t(j) * g.t(j);
    }
    Field d = aao::time_derivative(g, u);
    for (int j = 0; j <= g.nt; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            EXPECT_NEAR(d.at(j, i), (i + 1) * 2.0 * g.t(j), 1e-11);
        }
    }
}

TEST(Stencils, TimeDerivativeTransposeIsExact) {
    // (D u, z) in the trapezoid space-time inner product must equal the plain
    // weighted-Euclidean pairing of u with D^T(wt .* z): the transpose is an
    // algebraic identity, not an approximation.
    Grid g(13, 9, 0.3);
    std::mt19937_64 rng(77);
    Field u = random_dirichlet_field(g, rng);
    Field z = random_dirichlet_field(g, rng);
    const double lhs = aao::inner_space_time(g, aao::time_derivative(g, u), z);
    Field dtz = aao::time_derivative_weighted_transpose(g, z);
    double rhs = 0.0;
    for (int j = 0; j <= g.nt; ++j) {
        for (int i = 0; i < g.nx; ++i) rhs += g.wx(i) * u.at(j, i) * dtz.at(j, i);
    }
    EXPECT_NEAR(lhs, rhs, 1e-13 * std::max(1.0, std::abs(lhs)));
}

TEST(EllipticSolves, PoissonAndHelmholtzMatchEigenFormulas) {
    Grid g(51, 10, 0.1);
    for (int n : {1, 2, 3}) {
        auto s = sine_mode(g, n);
        const double lam = discrete_eigenvalue(n, g.dx());
        auto up = aao::dirichlet_solve(g, 0.0, 1.0, s);
        auto uh = aao::dirichlet_solve(g, 1.0, 1.0, s);
        for (int i = 0; i < g.nx; ++i) {
            EXPECT_NEAR(up[i], s[i] / lam, 1e-12);
            EXPECT_NEAR(uh[i], s[i] / (lam + 1.0), 1e-12);
        }
    }
}

TEST(EllipticSolves, RepresenterMatchesEigenFormulaAndContinuumLimit) {
    // h2_representer composes the Helmholtz and Poisson solves, so the sine
    // mode is scaled by 1/(lam*(lam+1)); as dx -> 0 this converges at O(dx^2)
    // to the continuum factor 1/((n pi)^2 ((n pi)^2 + 1)).
    for (int n : {1, 2, 3}) {
        Grid g(51, 10, 0.1);
        auto s = sine_mode(g, n);
        auto r = aao::h2_representer(g, s);
        const double lam = discrete_eigenvalue(n, g.dx());
        const double factor = 1.0 / (lam * (lam + 1.0));
        for (int i = 0; i < g.nx; ++i) {
            EXPECT_NEAR(r[i], factor * s[i], 1e-12);
        }
        const double npi2 = (n * kPi) * (n * kPi);
        const double continuum = 1.0 / (npi2 * (npi2 + 1.0));
        EXPECT_NEAR(factor, continuum, 25.0 * g.dx() * g.dx() * continuum);
    }
}

TEST(EllipticSolves, RepresenterPairingIsExact) {
    // (h2_representer(k), v)_H2 == (k, v)_L2 for Dirichlet slices: this is
    // the design identity behind every adjoint in the library.
    Grid g(27, 6, 0.2);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> k(g.nx, 0.0), v(g.nx, 0.0);
        for (int i = 1; i < g.nx - 1; ++i) {
            k[i] = un(rng);
            v[i] = un(rng);
        }
        auto r = aao::h2_representer(g, k);
        const double lhs = aao::h2_inner(g, r, v);
        const double rhs = aao::inner_l2(g, k, v);
        EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
    }
}

TEST(Metric, H2InnerMatchesDenseGramMatrix) {
    // h2_inner(a,b) must equal dx * a^T (L^2 + L) b exactly, where L is the
    // dense Dirichlet second-difference matrix.  Assembled here by brute
    // force on interior nodes.
    Grid g(19, 4, 0.5);
    const int n = g.n_interior();
    const double dx = g.dx();
    std::vector<std::vector<double>> L(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        L[i][i] = 2.0 / (dx * dx);
        if (i > 0) L[i][i - 1] = -1.0 / (dx * dx);
        if (i + 1 < n) L[i][i + 1] = -1.0 / (dx * dx);
    }
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    std::vector<double> a(g.nx, 0.0), b(g.nx, 0.0);
    for (int i = 1; i < g.nx - 1; ++i) {
        a[i] = un(rng);
        b[i] = un(rng);
    }
    // dense evaluation of dx * a^T (L^2 + L) b
    std::vector<double> Lb(n, 0.0), LLb(n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) Lb[i] += L[i][j] * b[j + 1];
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) LLb[i] += L[i][j] * Lb[j];
    }
    double ref = 0.0;
    for (int i = 0; i < n; ++i) ref += dx * a[i + 1] * (LLb[i] + Lb[i]);
    EXPECT_NEAR(aao::h2_inner(g, a, b), ref, 1e-10 * std::max(1.0, std::abs(ref)));
}

TEST(Metric, StateNormOfStationarySineMatchesAnalyticValue) {
    // For u(t,x) = sin(pi x) constant in time the time-derivative part
    // vanishes and the state norm is the H2 norm of the profile,
    // sqrt(pi^4/2 + pi^2/2), up to O(dx^2).
    const double exact = std::sqrt(0.5 * kPi * kPi * kPi * kPi + 0.5 * kPi * kPi);
    auto value = [&](int nx) {
        Grid g(nx, 10, 0.1);
        Field u(g);
        auto s = sine_mode(g, 1);
        for (int j = 0; j <= g.nt; ++j) {
            for (int i = 0; i < g.nx; ++i) u.at(j, i) = s[i];
        }
        return aao::state_norm(g, u);
    };
    const double v51 = value(51);
    EXPECT_NEAR(v51, exact, 0.01 * exact);
    // refine 2x: error shrinks ~4x
    const double e1 = std::abs(v51 - exact);
    const double e2 = std::abs(value(101) - exact);
    EXPECT_GT(e1 / e2, 3.0);
}

TEST(Metric, GramApplicationsMatchInnerProducts) {
    // h2_gram_apply and state_gram_apply turn the metrics into plain
    // Euclidean pairings; the identity must hold exactly for directions that
    // vanish at the spatial boundary.
    Grid g(17, 7, 0.25);
    std::mt19937_64 rng(91);
    std::vector<double> a(g.nx, 0.0), b(g.nx, 0.0);
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    for (int i = 1; i < g.nx - 1; ++i) {
        a[i] = un(rng);
        b[i] = un(rng);
    }
    std::vector<double> s(g.nx);
    aao::h2_gram_apply(g, a, s);
    double dot = 0.0;
    for (int i = 0; i < g.nx; ++i) dot += s[i] * b[i];
    const double want = aao::h2_inner(g, a, b);
    EXPECT_NEAR(dot, want, 1e-12 * std::max(1.0, std::abs(want)));
    EXPECT_DOUBLE_EQ(s.front(), 0.0);
    EXPECT_DOUBLE_EQ(s.back(), 0.0);

    Field u = random_dirichlet_field(g, rng);
    Field v = random_dirichlet_field(g, rng);
    Field su = aao::state_gram_apply(g, u);
    double fdot = 0.0;
    for (size_t k = 0; k < su.v.size(); ++k) fdot += su.v[k] * v.v[k];
    const double fwant = aao::state_inner(g, u, v);
    EXPECT_NEAR(fdot, fwant, 1e-11 * std::max(1.0, std::abs(fwant)));
}

TEST(Field, AxpyAndScale) {
    Grid g(7, 4, 1.0);
    Field a(g), b(g);
    for (size_t k = 0; k < a.v.size(); ++k) {
        a.v[k] = static_cast<double>(k);
        b.v[k] = 1.0;
    }
    aao::axpy(2.0, a, b);
    EXPECT_DOUBLE_EQ(b.v[3], 7.0);
    aao::scale(b, 0.5);
    EXPECT_DOUBLE_EQ(b.v[3], 3.5);
    Field c(9, 4);
    EXPECT_THROW(aao::axpy(1.0, a, c), std::invalid_argument);
}

}  // namespace
