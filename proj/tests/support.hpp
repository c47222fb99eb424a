// Shared helpers for the test suite: brute-force reference implementations
// of every kernel, random tensor/network generators, and comparison
// utilities. The references are written independently of the library
// kernels (explicit padding buffers, scan-based pool sizing, per-element
// normalization) so agreement is evidence, not tautology.
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "fmf/fmf.hpp"

namespace testsupport {

using namespace fmf;

inline Tensor random_tensor(std::mt19937& rng, int w, int h, int c,
                            double lo = -1.0, double hi = 1.0) {
    Tensor t(w, h, c);
    for (float& v : t.data)
        v = static_cast<float>(uniform_in(rng, lo, hi));
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return 1e300;
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) -
                                 static_cast<double>(b.data[i])));
    return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

// --- reference kernels ------------------------------------------------------

/// Correlation over an explicitly zero-padded copy of the input.
inline Tensor oracle_conv(const Tensor& in, const ConvParams& p) {
    const int ph = in.height + 2 * p.padding;
    const int pw = in.width + 2 * p.padding;
    std::vector<double> padded(
        static_cast<std::size_t>(p.in_channels) * ph * pw, 0.0);
    for (int c = 0; c < p.in_channels; ++c)
        for (int y = 0; y < in.height; ++y)
            for (int x = 0; x < in.width; ++x)
                padded[(static_cast<std::size_t>(c) * ph + y + p.padding) *
                           pw +
                       x + p.padding] = in.at(c, y, x);

    const int oh = (ph - p.kernel_h) / p.stride + 1;
    const int ow = (pw - p.kernel_w) / p.stride + 1;
    Tensor out(ow, oh, p.out_channels);
    for (int oc = 0; oc < p.out_channels; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = p.biases[oc];
                for (int ic = 0; ic < p.in_channels; ++ic)
                    for (int ky = 0; ky < p.kernel_h; ++ky)
                        for (int kx = 0; kx < p.kernel_w; ++kx) {
                            const std::size_t widx =
                                ((static_cast<std::size_t>(oc) *
                                      p.in_channels +
                                  ic) *
                                     p.kernel_h +
                                 ky) *
                                    p.kernel_w +
                                kx;
                            acc += p.weights[widx] *
                                   padded[(static_cast<std::size_t>(ic) * ph +
                                           oy * p.stride + ky) *
                                              pw +
                                          ox * p.stride + kx];
                        }
                out.at(oc, oy, ox) = static_cast<float>(acc);
            }
    return out;
}

/// Window starts stepped until one covers the input's end; borders pool
/// whatever lies inside.
inline int oracle_pool_extent(int in, int kernel, int stride) {
    int count = 0;
    for (int start = 0; start < in; start += stride) {
        ++count;
        if (start + kernel >= in) break;
    }
    return count;
}

inline Tensor oracle_maxpool(const Tensor& in, const MaxPoolParams& p) {
    const int oh = oracle_pool_extent(in.height, p.kernel, p.stride);
    const int ow = oracle_pool_extent(in.width, p.kernel, p.stride);
    Tensor out(ow, oh, in.channels);
    for (int c = 0; c < in.channels; ++c)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                float m = -std::numeric_limits<float>::infinity();
                for (int dy = 0; dy < p.kernel; ++dy)
                    for (int dx = 0; dx < p.kernel; ++dx) {
                        const int y = oy * p.stride + dy;
                        const int x = ox * p.stride + dx;
                        if (y < in.height && x < in.width)
                            m = std::max(m, in.at(c, y, x));
                    }
                out.at(c, oy, ox) = m;
            }
    return out;
}

inline Tensor oracle_lrn(const Tensor& in, const LrnParams& p) {
    Tensor out(in.width, in.height, in.channels);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            for (int c = 0; c < in.channels; ++c) {
                double s = 0.0;
                for (int cc = c - p.radius; cc <= c + p.radius; ++cc)
                    if (cc >= 0 && cc < in.channels) {
                        const double v = in.at(cc, y, x);
                        s += v * v;
                    }
                out.at(c, y, x) = static_cast<float>(
                    in.at(c, y, x) /
                    std::pow(p.bias + p.alpha * s,
                             static_cast<double>(p.beta)));
            }
    return out;
}

/// Dot product walked in (channel, row, column) order with the flat index
/// recomputed explicitly, cross-checking the layout contract.
inline Tensor oracle_fc(const Tensor& in, const FullyConnectedParams& p) {
    Tensor out(1, 1, p.out_dim);
    for (int o = 0; o < p.out_dim; ++o) {
        double acc = p.biases[o];
        for (int c = 0; c < in.channels; ++c)
            for (int y = 0; y < in.height; ++y)
                for (int x = 0; x < in.width; ++x) {
                    const std::size_t flat =
                        (static_cast<std::size_t>(c) * in.height + y) *
                            in.width +
                        x;
                    acc += static_cast<double>(
                               p.weights[static_cast<std::size_t>(o) *
                                             p.in_dim +
                                         flat]) *
                           in.at(c, y, x);
                }
        out.data[o] = static_cast<float>(acc);
    }
    return out;
}

// --- random generators -------------------------------------------------------

inline ConvParams random_conv_params(std::mt19937& rng, const Shape& in) {
    ConvParams p;
    p.in_channels = in.channels;
    p.out_channels = 2 + static_cast<int>(bounded_uint(rng, 7));
    p.kernel_h = 1 + static_cast<int>(
                         bounded_uint(rng, std::min(3, in.height)));
    p.kernel_w =
        1 + static_cast<int>(bounded_uint(rng, std::min(3, in.width)));
    p.stride = 1 + static_cast<int>(bounded_uint(rng, 2));
    p.padding = static_cast<int>(bounded_uint(rng, 2));
    p.weights.resize(static_cast<std::size_t>(p.out_channels) *
                     p.in_channels * p.kernel_h * p.kernel_w);
    for (float& w : p.weights)
        w = static_cast<float>(uniform_in(rng, -1.0, 1.0));
    p.biases.resize(p.out_channels);
    for (float& b : p.biases)
        b = static_cast<float>(uniform_in(rng, -0.5, 0.5));
    return p;
}

struct RandomNet {
    NetworkSpec net;
    std::vector<std::string> conv_names;

    const std::string& last_layer() const { return net.layers.back().name; }
};

/// Small random network: leading conv, then 1..4 layers drawn from
/// {conv, relu, maxpool, lrn}. With force_lrn, at least one lrn appears.
inline RandomNet random_network(std::mt19937& rng, bool force_lrn = false) {
    RandomNet rn;
    NetworkSpec& net = rn.net;
    net.input_width = 5 + static_cast<int>(bounded_uint(rng, 12));
    net.input_height = 5 + static_cast<int>(bounded_uint(rng, 12));
    net.input_channels = 1 + static_cast<int>(bounded_uint(rng, 3));
    Shape s = net.input_shape();
    int counter = 0;
    bool has_lrn = false;

    const auto push = [&](LayerSpec layer) {
        s = layer_output_shape(layer, s);
        net.layers.push_back(std::move(layer));
    };
    const auto add_conv = [&] {
        const std::string name = "conv" + std::to_string(counter++);
        push({name, random_conv_params(rng, s)});
        rn.conv_names.push_back(name);
    };

    add_conv();
    const int extra = 1 + static_cast<int>(bounded_uint(rng, 4));
    for (int i = 0; i < extra; ++i) {
        switch (bounded_uint(rng, 4)) {
            case 0:
                add_conv();
                break;
            case 1:
                push({"relu" + std::to_string(counter++), ReluParams{}});
                break;
            case 2: {
                MaxPoolParams p;
                p.kernel = 2 + static_cast<int>(bounded_uint(rng, 2));
                p.stride = 1 + static_cast<int>(bounded_uint(rng, 2));
                push({"pool" + std::to_string(counter++), p});
                break;
            }
            default: {
                LrnParams p;
                p.radius = 1 + static_cast<int>(bounded_uint(rng, 3));
                p.alpha = static_cast<float>(uniform_in(rng, 1e-4, 0.5));
                p.beta = static_cast<float>(uniform_in(rng, 0.4, 0.9));
                p.bias = static_cast<float>(uniform_in(rng, 0.5, 2.0));
                push({"lrn" + std::to_string(counter++), p});
                has_lrn = true;
                break;
            }
        }
    }
    if (force_lrn && !has_lrn) {
        LrnParams p;
        p.radius = 2;
        p.alpha = 1e-3f;
        p.beta = 0.75f;
        p.bias = 1.0f;
        push({"lrn" + std::to_string(counter++), p});
    }
    net.validate();
    return rn;
}

/// Random mask on one of the net's conv layers, up to half its maps.
inline FilterMask random_mask_on(std::mt19937& rng, const NetworkSpec& net,
                                 const std::string& conv_name) {
    const int channels = net.conv_channels(conv_name);
    const int count =
        static_cast<int>(bounded_uint(rng, channels / 2 + 1));  // 0..C/2
    FilterMask mask{conv_name, {}};
    for (int j : sample_without_replacement(rng, channels, count))
        mask.removed.insert(j);
    return mask;
}

inline Tensor random_input_for(std::mt19937& rng, const NetworkSpec& net) {
    return random_tensor(rng, net.input_width, net.input_height,
                         net.input_channels);
}

}  // namespace testsupport
