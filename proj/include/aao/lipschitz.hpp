// Certified Lipschitz bounds for small tanh networks on an input box.
//
// For a box [lo, hi] of admissible inputs the routines below produce
// constants that provably dominate
//   - the slope of z -> N(z)            (value_lip), and
//   - the slope of z -> N'(z)           (slope_lip),
// together with the per-layer constants they are assembled from.  The
// construction is a top-down recursion over layers: each layer contributes
// the operator norm of its weight matrix, the Lipschitz constant of its
// activation (1 for tanh, and the affine output layer contributes nothing),
// the sup of |tanh''| (4 / (3 sqrt 3)) where a second derivative enters, and
// a box supremum s_l of the activation slopes actually reached on the box.
//
// The s_l are estimated by dense sampling of the box (the input is scalar,
// so a fine 1-D sweep is cheap) and clamped to the a-priori tanh bound
// s_l <= 1; every other factor is exact, so the assembled constants are
// rigorous upper bounds up to the 1-D sampling resolution of the s_l.
//
// The same constants feed the contraction certificate: linearizing N around
// a state is trustworthy for perturbations whose smoothness norm stays below
// trust_radius(), because the Taylor remainder of a pointwise map is
// controlled by slope_lip and the embedding of the smoothness norm into the
// sup norm.

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "aao/nn.hpp"

namespace aao {

// sup |tanh''| = 4 / (3 sqrt 3), attained where tanh = 1/sqrt(3).
inline constexpr double kTanhCurvatureBound = 0.769800358919501;

// Operator (spectral) norm of a row-major rows x cols matrix by power
// iteration on G^T G.  The matrices here are at most kMaxLayerWidth wide, so
// a fixed iteration count converges far below the tolerances we certify at.
inline double spectral_norm(std::span<const double> m, int rows, int cols) {
    if (m.size() != static_cast<size_t>(rows) * cols || rows < 1 || cols < 1) {
        throw std::invalid_argument("spectral_norm: bad matrix shape");
    }
    std::vector<double> v(cols), gv(rows), gtgv(cols);
    // deterministic start with all modes excited
    for (int c = 0; c < cols; ++c) v[c] = 1.0 + 0.01 * c;
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
        for (int r = 0; r < rows; ++r) {
            double s = 0.0;
            for (int c = 0; c < cols; ++c) s += m[static_cast<size_t>(r) * cols + c] * v[c];
            gv[r] = s;
        }
        for (int c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int r = 0; r < rows; ++r) s += m[static_cast<size_t>(r) * cols + c] * gv[r];
            gtgv[c] = s;
        }
        double nrm = 0.0;
        for (double e : gtgv) nrm += e * e;
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) return 0.0;
        lambda = nrm;
        for (int c = 0; c < cols; ++c) v[c] = gtgv[c] / nrm;
    }
    return std::sqrt(lambda);
}

struct LipschitzReport {
    double lo = 0.0, hi = 0.0;       // certified input box
    int samples = 0;                 // box sweep resolution used for the s_l
    double activation_lip = 1.0;     // Lipschitz constant of tanh
    double activation_curvature = kTanhCurvatureBound;  // sup |tanh''|

    std::vector<double> omega_norm;  // per layer, spectral norm of the weight matrix
    std::vector<double> s;           // per layer, sup over the box of the activation slopes (last layer: 1)
    std::vector<double> layer_input_sup;  // per layer l (1-based l-1 index): sup over box of |a_{l-1}(z)|_2

    std::vector<double> Cz;          // recursion values, Cz[i-1] for i = 1..L; slope_lip = Cz[0]*omega_norm[0]
    std::vector<double> Cw;          // per layer: Lipschitz constant of theta->N' in the layer's weight block,
                                     // with the layer-input magnitude replaced by its box supremum
    std::vector<double> Cb;          // same for the bias block (no input-magnitude factor)

    double value_lip = 0.0;          // |N(z)-N(z~)|   <= value_lip * |z-z~| on the box
    double slope_lip = 0.0;          // |N'(z)-N'(z~)| <= slope_lip * |z-z~| on the box
};

// Assemble the certified constants for `net` on [lo, hi].  `samples` is the
// resolution of the 1-D box sweep used for the s_l and the layer-input
// suprema; at least 10^4 points are enforced.
inline LipschitzReport certify_lipschitz(const Net& net, double lo, double hi, int samples = 20000) {
    if (!(lo < hi)) {
        throw std::invalid_argument("certify_lipschitz: box must satisfy lo < hi");
    }
    if (samples < 10000) samples = 10000;
    const int L = net.n_layers();

    LipschitzReport rep;
    rep.lo = lo;
    rep.hi = hi;
    rep.samples = samples;

    rep.omega_norm.resize(L);
    for (int l = 0; l < L; ++l) {
        rep.omega_norm[l] = spectral_norm(net.weights[l], net.arch[l + 1], net.arch[l]);
    }

    // Box sweep: track, per layer, the largest activation slope and the
    // largest euclidean norm of the layer input seen anywhere on the box.
    rep.s.assign(L, 0.0);
    rep.layer_input_sup.assign(L, 0.0);
    std::array<double, kMaxLayerWidth> a{}, next{};
    for (int k = 0; k < samples; ++k) {
        const double z = lo + (hi - lo) * static_cast<double>(k) / (samples - 1);
        a[0] = z;
        for (int l = 0; l < L; ++l) {
            const int nin = net.arch[l], nout = net.arch[l + 1];
            double in_norm = 0.0;
            for (int c = 0; c < nin; ++c) in_norm += a[c] * a[c];
            rep.layer_input_sup[l] = std::max(rep.layer_input_sup[l], std::sqrt(in_norm));
            const double* W = net.weights[l].data();
            for (int r = 0; r < nout; ++r) {
                double sum = net.biases[l][r];
                for (int c = 0; c < nin; ++c) sum += W[r * nin + c] * a[c];
                if (l + 1 < L) {
                    const double t = std::tanh(sum);
                    rep.s[l] = std::max(rep.s[l], 1.0 - t * t);
                    next[r] = t;
                } else {
                    next[r] = sum;
                }
            }
            std::swap(a, next);
        }
    }
    // tanh slopes never exceed 1; the affine output layer has slope exactly 1.
    for (int l = 0; l + 1 < L; ++l) rep.s[l] = std::min(rep.s[l], 1.0);
    rep.s[L - 1] = 1.0;
    if (L == 1) rep.s[0] = 1.0;

    // Value bound: activations are 1-Lipschitz, so the chain is bounded by
    // the product of the weight norms.
    double wprod = 1.0;
    for (int l = 0; l < L; ++l) wprod *= rep.omega_norm[l];
    rep.value_lip = wprod;

    // Curvature of layer l's activation: tanh'' bound on hidden layers, 0 on
    // the affine output layer.
    auto curvature = [&](int l1based) { return (l1based < L) ? kTanhCurvatureBound : 0.0; };
    auto tail_s = [&](int from1based) {  // product of s_k for k = from..L (1-based)
        double p = 1.0;
        for (int k = from1based; k <= L; ++k) p *= rep.s[k - 1];
        return p;
    };

    // Top-down recursion for the Lipschitz constants of the per-layer slope
    // factors: C_{L+1} = 0 and
    //   C_i = curv(i) * (prod_{k>i} s_k) * (prod_k |W_k|)  +  C_{i+1} * s_i * |W_{i+1}|.
    rep.Cz.assign(L, 0.0);
    double carry = 0.0;  // C_{i+1} while sweeping i = L..1
    for (int i = L; i >= 1; --i) {
        const double first = curvature(i) * tail_s(i + 1) * wprod;
        const double second = (i < L) ? carry * rep.s[i - 1] * rep.omega_norm[i] : 0.0;
        carry = first + second;
        rep.Cz[i - 1] = carry;
    }
    rep.slope_lip = rep.Cz[0] * rep.omega_norm[0];

    // Same recursions for perturbations of one layer's weights or biases.
    // The weight-block version carries the box supremum of that layer's
    // input magnitude; the tail weight product only covers layers above l.
    rep.Cw.assign(L, 0.0);
    rep.Cb.assign(L, 0.0);
    for (int l = 1; l <= L; ++l) {
        double tail_w = 1.0;
        for (int k = l + 1; k <= L; ++k) tail_w *= rep.omega_norm[k - 1];
        double cw = 0.0, cb = 0.0;
        for (int i = L; i >= l; --i) {
            const double common = curvature(i) * tail_s(i + 1) * tail_w;
            const double sw = (i < L) ? rep.s[i - 1] * rep.omega_norm[i] : 0.0;
            cw = common * rep.layer_input_sup[l - 1] + cw * sw;
            cb = common + cb * sw;
        }
        rep.Cw[l - 1] = cw;
        rep.Cb[l - 1] = cb;
    }
    return rep;
}

// Largest smoothness-norm radius on which linearizing the pointwise map is
// certified to be contractive: 1 / (embedding_constant * slope_lip), where
// embedding_constant bounds the sup norm of a state by its smoothness norm.
// An affine network (slope_lip = 0) has no curvature at all and the radius
// is unbounded.
inline double trust_radius(const LipschitzReport& rep, double embedding_constant) {
    if (!(embedding_constant > 0.0)) {
        throw std::invalid_argument("trust_radius: embedding constant must be positive");
    }
    const double denom = embedding_constant * rep.slope_lip;
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / denom;
}

}  // namespace aao
