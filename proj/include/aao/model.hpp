#pragma once
// Forward model for the all-at-once formulation on (0,T) x (0,1):
//
//     residual  e(u, psi, theta) = du/dt - div(a grad u) + c u - psi - N_theta(u)
//
// with homogeneous Dirichlet boundary values on u.  The residual is evaluated
// at interior space nodes only (boundary columns are zero): the equation holds
// in the open domain while the boundary rows of the state are pinned.
//
// The nonlinearity N_theta is a pointwise scalar function from a parametric
// family.  Three families share one interface so the same solver machinery can
// train a small dense network, a polynomial, or a trigonometric expansion:
//   - NetFamily:        tanh hidden layers, affine output layer
//   - PolynomialFamily: c_0 + c_1 u + ... + c_d u^d     (Horner evaluation)
//   - TrigFamily:       a_0 + sum_k a_k cos(k w u) + b_k sin(k w u)
//
// The variable-coefficient diffusion term div(a grad u) is discretized by the
// product rule, a * lap(u) + grad(a) . grad(u), which keeps every factor a
// plain pointwise product with one of the two standard stencils; its exact
// discrete transpose is then available in closed form for the adjoints.

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aao/grid.hpp"
#include "aao/nn.hpp"

namespace aao {

// ---------------------------------------------------------------------------
// Pointwise nonlinearity families
// ---------------------------------------------------------------------------

// A parametric family of scalar functions u -> f(u).  Parameters are stored
// flat; set_params/params round-trip the whole vector.  Implementations must
// be cheap per call: value() runs once per space-time node per solver
// iteration.  clone() supports per-thread copies in multi-sample solves.
class PointwiseFamily {
  public:
    virtual ~PointwiseFamily() = default;

    virtual std::string name() const = 0;
    virtual size_t n_params() const = 0;
    virtual const std::vector<double>& params() const = 0;
    virtual void set_params(std::span<const double> p) = 0;

    // True when f depends linearly on the parameters.  Such families carry no
    // initialization symmetry to break, so solvers may start them from zero
    // coefficients instead of a random draw (a random draw would mean a
    // random initial *function*, which is far harsher for an oscillatory
    // basis than for a small random network).
    virtual bool linear_in_params() const { return false; }

    virtual double value(double z) const = 0;
    // Returns f(z) and writes df/dz into `slope`.
    virtual double value_and_slope(double z, double& slope) const = 0;
    // grad[l] += weight * d f(z) / d params[l] for every l.
    virtual void add_param_gradient(double z, double weight, std::span<double> grad) const = 0;

    // Directional derivative sum_l (d f(z)/d params[l]) * dp[l].  The default
    // routes through add_param_gradient; families with a cheap closed form
    // override it.
    virtual double param_directional(double z, std::span<const double> dp) const {
        std::vector<double> g(n_params(), 0.0);
        add_param_gradient(z, 1.0, g);
        double s = 0.0;
        for (size_t l = 0; l < g.size(); ++l) s += g[l] * dp[l];
        return s;
    }

    virtual std::unique_ptr<PointwiseFamily> clone() const = 0;

  protected:
    void check_param_count(std::span<const double> p, const char* where) const {
        if (p.size() != n_params()) {
            throw std::invalid_argument(std::string(where) + ": expected " +
                                        std::to_string(n_params()) + " parameters, got " +
                                        std::to_string(p.size()));
        }
    }
};

// Dense feed-forward network wrapper (tanh hidden layers, affine last layer).
class NetFamily final : public PointwiseFamily {
  public:
    explicit NetFamily(std::vector<int> arch) : net_(make_net(arch)), flat_(flatten(net_)) {}
    explicit NetFamily(Net net) : net_(std::move(net)), flat_(flatten(net_)) {}

    std::string name() const override { return "network"; }
    size_t n_params() const override { return net_.n_params(); }
    const std::vector<double>& params() const override { return flat_; }

    void set_params(std::span<const double> p) override {
        check_param_count(p, "NetFamily::set_params");
        flat_.assign(p.begin(), p.end());
        unflatten(net_, flat_);
    }

    double value(double z) const override { return forward(net_, z); }

    double value_and_slope(double z, double& slope) const override {
        return forward_with_slope(net_, z, slope);
    }

    void add_param_gradient(double z, double weight, std::span<double> grad) const override {
        check_param_count(grad, "NetFamily::add_param_gradient");
        accumulate_param_gradient(net_, z, weight, grad);
    }

    std::unique_ptr<PointwiseFamily> clone() const override {
        return std::make_unique<NetFamily>(*this);
    }

    const Net& net() const { return net_; }

  private:
    Net net_;
    std::vector<double> flat_;
};

// Polynomial c_0 + c_1 z + ... + c_{d} z^d with d = dof - 1, Horner scheme.
class PolynomialFamily final : public PointwiseFamily {
  public:
    explicit PolynomialFamily(size_t dof) : coeff_(dof, 0.0) {
        if (dof < 1) throw std::invalid_argument("PolynomialFamily: need at least one coefficient");
    }

    std::string name() const override { return "polynomial"; }
    size_t n_params() const override { return coeff_.size(); }
    const std::vector<double>& params() const override { return coeff_; }
    bool linear_in_params() const override { return true; }

    void set_params(std::span<const double> p) override {
        check_param_count(p, "PolynomialFamily::set_params");
        coeff_.assign(p.begin(), p.end());
    }

    double value(double z) const override {
        double acc = 0.0;
        for (size_t k = coeff_.size(); k-- > 0;) acc = acc * z + coeff_[k];
        return acc;
    }

    double value_and_slope(double z, double& slope) const override {
        // Horner on the polynomial and its derivative simultaneously.
        double acc = 0.0, dacc = 0.0;
        for (size_t k = coeff_.size(); k-- > 0;) {
            dacc = dacc * z + acc;
            acc = acc * z + coeff_[k];
        }
        slope = dacc;
        return acc;
    }

    void add_param_gradient(double z, double weight, std::span<double> grad) const override {
        check_param_count(grad, "PolynomialFamily::add_param_gradient");
        double zk = 1.0;
        for (size_t k = 0; k < coeff_.size(); ++k) {
            grad[k] += weight * zk;
            zk *= z;
        }
    }

    double param_directional(double z, std::span<const double> dp) const override {
        double acc = 0.0;
        for (size_t k = dp.size(); k-- > 0;) acc = acc * z + dp[k];
        return acc;
    }

    std::unique_ptr<PointwiseFamily> clone() const override {
        return std::make_unique<PolynomialFamily>(*this);
    }

  private:
    std::vector<double> coeff_;
};

// Truncated trigonometric expansion a_0 + sum_{k=1}^H a_k cos(k w z) + b_k sin(k w z).
// Parameters are stored as [a_0, a_1..a_H, b_1..b_H]; dof = 2H + 1.  The base
// frequency w is fixed at construction from the expected input range plus a
// 10% margin, so one period covers the range without aliasing.
class TrigFamily final : public PointwiseFamily {
  public:
    TrigFamily(size_t dof, double range_lo, double range_hi) : coeff_(dof, 0.0) {
        if (dof < 3 || dof % 2 == 0) {
            throw std::invalid_argument("TrigFamily: dof must be odd and at least 3");
        }
        if (!(range_hi > range_lo)) {
            throw std::invalid_argument("TrigFamily: empty input range");
        }
        harmonics_ = (dof - 1) / 2;
        omega_ = 2.0 * kPi / ((range_hi - range_lo) * 1.1);
    }

    std::string name() const override { return "trig"; }
    size_t n_params() const override { return coeff_.size(); }
    const std::vector<double>& params() const override { return coeff_; }
    bool linear_in_params() const override { return true; }
    double omega() const { return omega_; }

    void set_params(std::span<const double> p) override {
        check_param_count(p, "TrigFamily::set_params");
        coeff_.assign(p.begin(), p.end());
    }

    double value(double z) const override {
        double acc = coeff_[0];
        for (size_t k = 1; k <= harmonics_; ++k) {
            const double kw = static_cast<double>(k) * omega_;
            acc += coeff_[k] * std::cos(kw * z) + coeff_[harmonics_ + k] * std::sin(kw * z);
        }
        return acc;
    }

    double value_and_slope(double z, double& slope) const override {
        double acc = coeff_[0], dacc = 0.0;
        for (size_t k = 1; k <= harmonics_; ++k) {
            const double kw = static_cast<double>(k) * omega_;
            const double ck = std::cos(kw * z), sk = std::sin(kw * z);
            acc += coeff_[k] * ck + coeff_[harmonics_ + k] * sk;
            dacc += kw * (-coeff_[k] * sk + coeff_[harmonics_ + k] * ck);
        }
        slope = dacc;
        return acc;
    }

    void add_param_gradient(double z, double weight, std::span<double> grad) const override {
        check_param_count(grad, "TrigFamily::add_param_gradient");
        grad[0] += weight;
        for (size_t k = 1; k <= harmonics_; ++k) {
            const double kw = static_cast<double>(k) * omega_;
            grad[k] += weight * std::cos(kw * z);
            grad[harmonics_ + k] += weight * std::sin(kw * z);
        }
    }

    double param_directional(double z, std::span<const double> dp) const override {
        double acc = dp[0];
        for (size_t k = 1; k <= harmonics_; ++k) {
            const double kw = static_cast<double>(k) * omega_;
            acc += dp[k] * std::cos(kw * z) + dp[harmonics_ + k] * std::sin(kw * z);
        }
        return acc;
    }

    std::unique_ptr<PointwiseFamily> clone() const override {
        return std::make_unique<TrigFamily>(*this);
    }

  private:
    static constexpr double kPi = 3.14159265358979323846;
    std::vector<double> coeff_;
    size_t harmonics_ = 0;
    double omega_ = 0.0;
};

// Pointwise application of a family over a whole space-time field.
inline Field apply_pointwise(const PointwiseFamily& fam, const Field& u) {
    Field out(u.nt, u.nx);
    for (size_t k = 0; k < u.v.size(); ++k) out.v[k] = fam.value(u.v[k]);
    return out;
}

// ---------------------------------------------------------------------------
// PDE coefficients and measurement setup
// ---------------------------------------------------------------------------

// Spatial coefficients of the parabolic operator, one value per space node.
// `phi` is the source used when the source is treated as known; solvers that
// estimate the source carry their own per-sample slices instead.
struct PdeParams {
    std::vector<double> a;    // diffusion, must stay positive
    std::vector<double> c;    // reaction
    std::vector<double> phi;  // known source

    PdeParams() = default;
    explicit PdeParams(const Grid& g)
        : a(static_cast<size_t>(g.nx), 1.0),
          c(static_cast<size_t>(g.nx), 0.0),
          phi(static_cast<size_t>(g.nx), 0.0) {}
};

inline void validate_pde_params(const Grid& g, const PdeParams& p) {
    const auto n = static_cast<size_t>(g.nx);
    if (p.a.size() != n || p.c.size() != n || p.phi.size() != n) {
        throw std::invalid_argument("PdeParams: coefficient length does not match the grid");
    }
    for (double av : p.a) {
        if (!(av > 0.0)) {
            throw std::invalid_argument("PdeParams: diffusion coefficient must be strictly positive");
        }
    }
}

struct MeasurementSpec {
    enum class Mode { snapshots, full };
    Mode mode = Mode::snapshots;
    std::vector<int> indices;  // observed time indices, strictly increasing in [0, nt];
                               // index 0 observes the initial state
    double scale = 10.0;       // measurement operator is scale * u
};

inline void validate_measurement(const Grid& g, const MeasurementSpec& m) {
    if (!(m.scale > 0.0)) throw std::invalid_argument("MeasurementSpec: scale must be positive");
    if (m.mode == MeasurementSpec::Mode::snapshots) {
        if (m.indices.empty()) {
            throw std::invalid_argument("MeasurementSpec: snapshot mode needs at least one time index");
        }
        int prev = -1;
        for (int idx : m.indices) {
            if (idx <= prev || idx > g.nt) {
                throw std::invalid_argument(
                    "MeasurementSpec: snapshot indices must be strictly increasing within [0, nt]");
            }
            prev = idx;
        }
    }
}

// Observed data for one sample: either slices at the snapshot indices or a
// full space-time field, matching the MeasurementSpec mode.
struct SampleData {
    std::vector<std::vector<double>> snapshots;
    Field full;
};

struct ObservationSet {
    std::vector<SampleData> samples;
    // Measurement-space norm of the injected noise across all samples,
    // sqrt(sum_k |noise^k|_Y^2); feeds the discrepancy stopping rule.
    double delta = 0.0;
};

// ---------------------------------------------------------------------------
// Residual and measurements
// ---------------------------------------------------------------------------

// PDE residual with an arbitrary scalar nonlinearity (callable double -> double).
// `source` is the per-sample source slice (psi when estimated, params.phi when
// known).  Boundary columns of the result are zero by construction.
template <class F>
Field pde_residual_with(const Grid& g, const PdeParams& p, const Field& u,
                        std::span<const double> source, F&& nonlin) {
    validate_pde_params(g, p);
    if (u.nt != g.nt || u.nx != g.nx) {
        throw std::invalid_argument("pde_residual: state shape does not match the grid");
    }
    if (source.size() != static_cast<size_t>(g.nx)) {
        throw std::invalid_argument("pde_residual: source length does not match the grid");
    }

    Field e = time_derivative(g, u);
    std::vector<double> ga(g.nx), lap(g.nx), grad(g.nx);
    gradient_slice(g, p.a, ga);
    for (int j = 0; j <= g.nt; ++j) {
        const auto uj = u.slice(j);
        laplacian_slice(g, uj, lap);
        gradient_slice(g, uj, grad);
        auto ej = e.slice(j);
        ej[0] = 0.0;
        ej[g.nx - 1] = 0.0;
        for (int i = 1; i < g.nx - 1; ++i) {
            ej[i] += -p.a[i] * lap[i] - ga[i] * grad[i] + p.c[i] * uj[i] - source[i] - nonlin(uj[i]);
        }
    }
    return e;
}

inline Field pde_residual(const Grid& g, const PdeParams& p, const Field& u,
                          std::span<const double> source, const PointwiseFamily& fam) {
    return pde_residual_with(g, p, u, source, [&fam](double z) { return fam.value(z); });
}

// d f/du evaluated at every node of u; used by the transport linearization.
inline Field slope_field(const PointwiseFamily& fam, const Field& u) {
    Field s(u.nt, u.nx);
    for (size_t k = 0; k < u.v.size(); ++k) {
        double sl = 0.0;
        fam.value_and_slope(u.v[k], sl);
        s.v[k] = sl;
    }
    return s;
}

inline std::vector<std::vector<double>> observe_snapshots(const Grid& g, const MeasurementSpec& m,
                                                          const Field& u) {
    validate_measurement(g, m);
    std::vector<std::vector<double>> out;
    out.reserve(m.indices.size());
    for (int idx : m.indices) {
        const auto uj = u.slice(idx);
        std::vector<double> s(uj.begin(), uj.end());
        for (double& vi : s) vi *= m.scale;
        out.push_back(std::move(s));
    }
    return out;
}

inline Field observe_full(const Grid& g, const MeasurementSpec& m, const Field& u) {
    validate_measurement(g, m);
    Field out = u;
    scale(out, m.scale);
    return out;
}

// Measurement misfit M u - y for one sample.  Snapshot mode returns one slice
// per observed index; full mode returns a single space-time field in
// `full_misfit`.
struct Misfit {
    std::vector<std::vector<double>> snapshot_misfit;
    Field full_misfit;
};

inline Misfit measurement_misfit(const Grid& g, const MeasurementSpec& m, const Field& u,
                                 const SampleData& data) {
    Misfit out;
    if (m.mode == MeasurementSpec::Mode::snapshots) {
        out.snapshot_misfit = observe_snapshots(g, m, u);
        if (data.snapshots.size() != out.snapshot_misfit.size()) {
            throw std::invalid_argument("measurement_misfit: snapshot count mismatch");
        }
        for (size_t s = 0; s < out.snapshot_misfit.size(); ++s) {
            if (data.snapshots[s].size() != static_cast<size_t>(g.nx)) {
                throw std::invalid_argument("measurement_misfit: snapshot length mismatch");
            }
            for (int i = 0; i < g.nx; ++i) out.snapshot_misfit[s][i] -= data.snapshots[s][i];
        }
    } else {
        out.full_misfit = observe_full(g, m, u);
        check_same_shape(out.full_misfit, data.full, "measurement_misfit");
        axpy(-1.0, data.full, out.full_misfit);
    }
    return out;
}

// Squared measurement-space norm: sum of spatial L2 norms over snapshots, or
// the space-time L2 norm in full mode.
inline double misfit_norm_sq(const Grid& g, const MeasurementSpec& m, const Misfit& mis) {
    double acc = 0.0;
    if (m.mode == MeasurementSpec::Mode::snapshots) {
        for (const auto& s : mis.snapshot_misfit) acc += inner_l2(g, s, s);
    } else {
        acc = inner_space_time(g, mis.full_misfit, mis.full_misfit);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Directional derivative (JVP) of the residual
// ---------------------------------------------------------------------------

// Perturbation directions; any member may be left empty (treated as zero).
struct ResidualDirections {
    const Field* du = nullptr;
    std::span<const double> dsource;
    std::span<const double> dc;
    std::span<const double> da;
    std::span<const double> dtheta;
};

// Linearization of pde_residual at (u, source, theta) applied to the given
// directions.  Matches a central finite difference of pde_residual to the
// order of the difference scheme.
inline Field residual_jvp(const Grid& g, const PdeParams& p, const Field& u,
                          const PointwiseFamily& fam, const ResidualDirections& dir) {
    validate_pde_params(g, p);
    Field de(g.nt, g.nx);

    std::vector<double> lap(g.nx), grad(g.nx), ga(g.nx), gda(g.nx);
    gradient_slice(g, p.a, ga);
    if (!dir.da.empty()) gradient_slice(g, dir.da, gda);

    if (dir.du != nullptr) {
        check_same_shape(*dir.du, de, "residual_jvp");
        de = time_derivative(g, *dir.du);
        Field slope = slope_field(fam, u);
        for (int j = 0; j <= g.nt; ++j) {
            const auto duj = dir.du->slice(j);
            laplacian_slice(g, duj, lap);
            gradient_slice(g, duj, grad);
            auto dej = de.slice(j);
            for (int i = 1; i < g.nx - 1; ++i) {
                dej[i] += -p.a[i] * lap[i] - ga[i] * grad[i] +
                          (p.c[i] - slope.at(j, i)) * duj[i];
            }
        }
    }

    for (int j = 0; j <= g.nt; ++j) {
        const auto uj = u.slice(j);
        auto dej = de.slice(j);
        if (!dir.da.empty()) {
            laplacian_slice(g, uj, lap);
            gradient_slice(g, uj, grad);
            for (int i = 1; i < g.nx - 1; ++i) {
                dej[i] += -dir.da[i] * lap[i] - gda[i] * grad[i];
            }
        }
        for (int i = 1; i < g.nx - 1; ++i) {
            if (!dir.dc.empty()) dej[i] += dir.dc[i] * uj[i];
            if (!dir.dsource.empty()) dej[i] -= dir.dsource[i];
            if (!dir.dtheta.empty()) dej[i] -= fam.param_directional(uj[i], dir.dtheta);
        }
    }

    // Boundary columns stay zero, matching the masked residual.
    for (int j = 0; j <= g.nt; ++j) {
        de.at(j, 0) = 0.0;
        de.at(j, g.nx - 1) = 0.0;
    }
    return de;
}

// ---------------------------------------------------------------------------
// Objective weights
// ---------------------------------------------------------------------------

struct ObjectiveWeights {
    double beta_e = 1.0;    // PDE residual weight
    double beta_M = 1.0;    // data misfit weight
    double r_u = 1e-4;      // state regularization
    double r_psi = 1e-4;    // source regularization
    double r_theta = 1e-6;  // nonlinearity-parameter regularization
};

inline void validate_weights(const ObjectiveWeights& w) {
    if (!(w.beta_e > 0.0) || !(w.beta_M > 0.0)) {
        throw std::invalid_argument("ObjectiveWeights: beta_e and beta_M must be positive");
    }
    if (w.r_u < 0.0 || w.r_psi < 0.0 || w.r_theta < 0.0) {
        throw std::invalid_argument("ObjectiveWeights: regularization weights must be nonnegative");
    }
}

}  // namespace aao
