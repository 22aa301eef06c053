// Small dense scalar-to-scalar networks applied pointwise to PDE states.
//
// A Net is a chain of affine layers with tanh on every layer except the
// last, which stays affine so the output range is unrestricted:
//
//   a_0 = z,   a_l = tanh(W_l a_{l-1} + b_l)  (l < L),   N(z) = W_L a_{L-1} + b_L.
//
// Input and output are one-dimensional; hidden widths are small (a few
// units).  Everything here is allocation-free per evaluation because the
// forward pass, the z-derivative and the parameter gradient are evaluated
// once per space-time grid point inside optimization loops.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aao {

// Hard caps so layer buffers can live on the stack.
inline constexpr int kMaxLayerWidth = 16;
inline constexpr int kMaxLayers = 8;

struct Net {
    std::vector<int> arch;                       // layer widths, first and last must be 1
    std::vector<std::vector<double>> weights;    // weights[l]: arch[l+1] x arch[l], row-major
    std::vector<std::vector<double>> biases;     // biases[l]: length arch[l+1]

    int n_layers() const { return static_cast<int>(arch.size()) - 1; }

    int n_params() const {
        int n = 0;
        for (int l = 0; l + 1 < static_cast<int>(arch.size()); ++l) n += arch[l + 1] * (arch[l] + 1);
        return n;
    }
};

inline void validate_arch(const std::vector<int>& arch) {
    if (arch.size() < 2) {
        throw std::invalid_argument("Net: need at least one layer");
    }
    if (arch.size() > static_cast<size_t>(kMaxLayers) + 1) {
        throw std::invalid_argument("Net: at most " + std::to_string(kMaxLayers) + " layers supported");
    }
    if (arch.front() != 1 || arch.back() != 1) {
        throw std::invalid_argument("Net: input and output width must be 1 (pointwise scalar map)");
    }
    for (int w : arch) {
        if (w < 1 || w > kMaxLayerWidth) {
            throw std::invalid_argument("Net: layer widths must be in [1, " + std::to_string(kMaxLayerWidth) + "]");
        }
    }
}

// Zero-initialized network of the given architecture.
inline Net make_net(const std::vector<int>& arch) {
    validate_arch(arch);
    Net net;
    net.arch = arch;
    for (size_t l = 0; l + 1 < arch.size(); ++l) {
        net.weights.emplace_back(static_cast<size_t>(arch[l + 1]) * arch[l], 0.0);
        net.biases.emplace_back(arch[l + 1], 0.0);
    }
    return net;
}

// Fill weights and biases with independent uniform draws on
// [-half_width, half_width], reproducibly from the seed.
inline void randomize_uniform(Net& net, std::uint64_t seed, double half_width = 0.5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-half_width, half_width);
    for (auto& w : net.weights) {
        for (double& e : w) e = u(rng);
    }
    for (auto& b : net.biases) {
        for (double& e : b) e = u(rng);
    }
}

// N(z).
inline double forward(const Net& net, double z) {
    std::array<double, kMaxLayerWidth> a{}, next{};
    a[0] = z;
    const int L = net.n_layers();
    for (int l = 0; l < L; ++l) {
        const int nin = net.arch[l], nout = net.arch[l + 1];
        const double* W = net.weights[l].data();
        for (int r = 0; r < nout; ++r) {
            double s = net.biases[l][r];
            for (int c = 0; c < nin; ++c) s += W[r * nin + c] * a[c];
            next[r] = (l + 1 < L) ? std::tanh(s) : s;
        }
        std::swap(a, next);
    }
    return a[0];
}

// N(z) together with dN/dz, propagating the input sensitivity through the
// same forward pass.
inline double forward_with_slope(const Net& net, double z, double& slope) {
    std::array<double, kMaxLayerWidth> a{}, da{}, next{}, dnext{};
    a[0] = z;
    da[0] = 1.0;
    const int L = net.n_layers();
    for (int l = 0; l < L; ++l) {
        const int nin = net.arch[l], nout = net.arch[l + 1];
        const double* W = net.weights[l].data();
        for (int r = 0; r < nout; ++r) {
            double s = net.biases[l][r];
            double ds = 0.0;
            for (int c = 0; c < nin; ++c) {
                s += W[r * nin + c] * a[c];
                ds += W[r * nin + c] * da[c];
            }
            if (l + 1 < L) {
                const double t = std::tanh(s);
                next[r] = t;
                dnext[r] = (1.0 - t * t) * ds;
            } else {
                next[r] = s;
                dnext[r] = ds;
            }
        }
        std::swap(a, next);
        std::swap(da, dnext);
    }
    slope = da[0];
    return a[0];
}

// grad += weight * dN(z)/dtheta, with theta in flatten() order (per layer:
// weight matrix row-major, then biases).  Standard backpropagation with the
// scalar seed `weight` at the output.
inline void accumulate_param_gradient(const Net& net, double z, double weight, std::span<double> grad) {
    if (grad.size() != static_cast<size_t>(net.n_params())) {
        throw std::invalid_argument("accumulate_param_gradient: gradient length mismatch");
    }
    const int L = net.n_layers();
    // forward pass, keeping every layer output and hidden activation slope
    std::array<std::array<double, kMaxLayerWidth>, kMaxLayers + 1> act{};
    std::array<std::array<double, kMaxLayerWidth>, kMaxLayers> dact{};
    act[0][0] = z;
    for (int l = 0; l < L; ++l) {
        const int nin = net.arch[l], nout = net.arch[l + 1];
        const double* W = net.weights[l].data();
        for (int r = 0; r < nout; ++r) {
            double s = net.biases[l][r];
            for (int c = 0; c < nin; ++c) s += W[r * nin + c] * act[l][c];
            if (l + 1 < L) {
                const double t = std::tanh(s);
                act[l + 1][r] = t;
                dact[l][r] = 1.0 - t * t;
            } else {
                act[l + 1][r] = s;
                dact[l][r] = 1.0;
            }
        }
    }
    // backward pass
    std::array<double, kMaxLayerWidth> delta{}, prev{};
    delta[0] = weight;  // output layer is affine, so no activation factor here
    // per-layer offsets into the flat gradient
    int offset = net.n_params();
    for (int l = L - 1; l >= 0; --l) {
        const int nin = net.arch[l], nout = net.arch[l + 1];
        offset -= nout * (nin + 1);
        double* gw = grad.data() + offset;
        double* gb = gw + nout * nin;
        for (int r = 0; r < nout; ++r) {
            gb[r] += delta[r];
            for (int c = 0; c < nin; ++c) gw[r * nin + c] += delta[r] * act[l][c];
        }
        if (l > 0) {
            const double* W = net.weights[l].data();
            for (int c = 0; c < nin; ++c) {
                double s = 0.0;
                for (int r = 0; r < nout; ++r) s += W[r * nin + c] * delta[r];
                prev[c] = dact[l - 1][c] * s;
            }
            std::swap(delta, prev);
        }
    }
}

// Flat parameter vector in layer order, weights row-major then biases.
inline std::vector<double> flatten(const Net& net) {
    std::vector<double> p;
    p.reserve(net.n_params());
    for (int l = 0; l < net.n_layers(); ++l) {
        p.insert(p.end(), net.weights[l].begin(), net.weights[l].end());
        p.insert(p.end(), net.biases[l].begin(), net.biases[l].end());
    }
    return p;
}

inline void unflatten(Net& net, std::span<const double> p) {
    if (p.size() != static_cast<size_t>(net.n_params())) {
        throw std::invalid_argument("unflatten: parameter length mismatch");
    }
    size_t k = 0;
    for (int l = 0; l < net.n_layers(); ++l) {
        for (double& e : net.weights[l]) e = p[k++];
        for (double& e : net.biases[l]) e = p[k++];
    }
}

}  // namespace aao
