/**
 * @file layers.hpp
 * @brief Layer descriptions and the forward kernels (conv, relu, maxpool,
 *        lrn, fully connected).
 *
 * Conventions, fixed for reproducibility:
 *  - Convolution uses zero padding. Output spatial size is
 *    floor((in + 2*pad - kernel) / stride) + 1.
 *  - Max pooling has no padding; output size is ceil((in - kernel) / stride)
 *    + 1 and windows that overhang the border pool only the valid elements.
 *    Window starts past the border are clipped off.
 *  - LRN normalizes across channels: out = in / (bias + alpha * S)^beta with
 *    S the sum of squares over channels [c - radius, c + radius], clamped.
 *  - All activations are 32-bit floats; accumulation runs in 64-bit and is
 *    rounded once at the end of each output element.
 *
 * Conv weights are laid out [out_channel][in_channel][row][col], FC weights
 * [out][in] over the channel-major flattened input.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fmf/tensor.hpp"

namespace fmf {

struct Shape {
    int width = 0;
    int height = 0;
    int channels = 0;
    bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
    return std::to_string(s.width) + "x" + std::to_string(s.height) + "x" +
           std::to_string(s.channels);
}

struct ConvParams {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int padding = 0;
    std::vector<float> weights;  // [out][in][kh][kw]
    std::vector<float> biases;   // [out]
};

struct ReluParams {};

struct MaxPoolParams {
    int kernel = 0;
    int stride = 1;
};

struct LrnParams {
    int radius = 0;
    float alpha = 0.0f;
    float beta = 0.0f;
    float bias = 1.0f;
};

struct FullyConnectedParams {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<float> weights;  // [out][in]
    std::vector<float> biases;   // [out]
};

struct LayerSpec {
    std::string name;
    std::variant<ConvParams, ReluParams, MaxPoolParams, LrnParams,
                 FullyConnectedParams>
        params;

    bool is_conv() const { return std::holds_alternative<ConvParams>(params); }
    const ConvParams& conv() const { return std::get<ConvParams>(params); }

    const char* kind_name() const {
        struct Visitor {
            const char* operator()(const ConvParams&) { return "conv"; }
            const char* operator()(const ReluParams&) { return "relu"; }
            const char* operator()(const MaxPoolParams&) { return "maxpool"; }
            const char* operator()(const LrnParams&) { return "lrn"; }
            const char* operator()(const FullyConnectedParams&) { return "fc"; }
        };
        return std::visit(Visitor{}, params);
    }
};

namespace detail {

inline int pool_extent(int in, int kernel, int stride) {
    int out = in <= kernel
                  ? 1
                  : static_cast<int>(
                        std::ceil(static_cast<double>(in - kernel) / stride)) +
                        1;
    // last window must start inside the input
    while (out > 1 && (out - 1) * stride >= in) --out;
    return out;
}

}  // namespace detail

inline Shape conv_output_shape(const ConvParams& p, const Shape& in,
                               const std::string& name) {
    if (p.in_channels != in.channels)
        throw std::runtime_error("layer '" + name + "': expects " +
                                 std::to_string(p.in_channels) +
                                 " input channels, got " +
                                 std::to_string(in.channels));
    const int ow = (in.width + 2 * p.padding - p.kernel_w) / p.stride + 1;
    const int oh = (in.height + 2 * p.padding - p.kernel_h) / p.stride + 1;
    if (in.width + 2 * p.padding < p.kernel_w ||
        in.height + 2 * p.padding < p.kernel_h || ow < 1 || oh < 1)
        throw std::runtime_error("layer '" + name +
                                 "': kernel larger than padded input");
    return {ow, oh, p.out_channels};
}

inline Shape fc_output_shape(const FullyConnectedParams& p, const Shape& in,
                             const std::string& name) {
    const int flat = in.width * in.height * in.channels;
    if (p.in_dim != flat)
        throw std::runtime_error(
            "layer '" + name + "': fc expects input dim " +
            std::to_string(p.in_dim) + ", got " + std::to_string(flat) +
            " (" + to_string(in) + " flattened)");
    return {1, 1, p.out_dim};
}

/// Output shape of one layer, given its input shape. Throws on infeasible
/// geometry or dimension mismatch.
inline Shape layer_output_shape(const LayerSpec& layer, const Shape& in) {
    if (layer.is_conv()) return conv_output_shape(layer.conv(), in, layer.name);
    if (std::holds_alternative<ReluParams>(layer.params)) return in;
    if (const auto* p = std::get_if<MaxPoolParams>(&layer.params)) {
        return {detail::pool_extent(in.width, p->kernel, p->stride),
                detail::pool_extent(in.height, p->kernel, p->stride),
                in.channels};
    }
    if (std::holds_alternative<LrnParams>(layer.params)) return in;
    return fc_output_shape(std::get<FullyConnectedParams>(layer.params), in,
                           layer.name);
}

inline Tensor conv2d(const Tensor& in, const ConvParams& p,
                     const std::string& name = "conv") {
    const Shape out_shape =
        conv_output_shape(p, {in.width, in.height, in.channels}, name);
    Tensor out(out_shape.width, out_shape.height, out_shape.channels);
    const std::size_t kernel_size =
        static_cast<std::size_t>(p.kernel_h) * p.kernel_w;
    for (int oc = 0; oc < p.out_channels; ++oc) {
        const std::size_t wbase =
            static_cast<std::size_t>(oc) * p.in_channels * kernel_size;
        for (int oy = 0; oy < out.height; ++oy) {
            for (int ox = 0; ox < out.width; ++ox) {
                double acc = p.biases[oc];
                for (int ic = 0; ic < p.in_channels; ++ic) {
                    const std::size_t wc = wbase + ic * kernel_size;
                    for (int ky = 0; ky < p.kernel_h; ++ky) {
                        const int iy = oy * p.stride - p.padding + ky;
                        if (iy < 0 || iy >= in.height) continue;
                        for (int kx = 0; kx < p.kernel_w; ++kx) {
                            const int ix = ox * p.stride - p.padding + kx;
                            if (ix < 0 || ix >= in.width) continue;
                            acc += static_cast<double>(
                                       p.weights[wc + ky * p.kernel_w + kx]) *
                                   in.at(ic, iy, ix);
                        }
                    }
                }
                out.at(oc, oy, ox) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

inline Tensor relu(const Tensor& in) {
    Tensor out = in;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

inline Tensor maxpool(const Tensor& in, const MaxPoolParams& p) {
    const int ow = detail::pool_extent(in.width, p.kernel, p.stride);
    const int oh = detail::pool_extent(in.height, p.kernel, p.stride);
    Tensor out(ow, oh, in.channels);
    for (int c = 0; c < in.channels; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
            const int y0 = oy * p.stride;
            const int y1 = std::min(y0 + p.kernel, in.height);
            for (int ox = 0; ox < ow; ++ox) {
                const int x0 = ox * p.stride;
                const int x1 = std::min(x0 + p.kernel, in.width);
                float m = in.at(c, y0, x0);
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x)
                        m = std::max(m, in.at(c, y, x));
                out.at(c, oy, ox) = m;
            }
        }
    }
    return out;
}

inline Tensor lrn(const Tensor& in, const LrnParams& p) {
    Tensor out(in.width, in.height, in.channels);
    for (int c = 0; c < in.channels; ++c) {
        const int c0 = std::max(0, c - p.radius);
        const int c1 = std::min(in.channels - 1, c + p.radius);
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) {
                double sq = 0.0;
                for (int cc = c0; cc <= c1; ++cc) {
                    const double v = in.at(cc, y, x);
                    sq += v * v;
                }
                const double denom =
                    std::pow(static_cast<double>(p.bias) + p.alpha * sq,
                             static_cast<double>(p.beta));
                out.at(c, y, x) = static_cast<float>(in.at(c, y, x) / denom);
            }
        }
    }
    return out;
}

inline Tensor fully_connected(const Tensor& in, const FullyConnectedParams& p,
                              const std::string& name = "fc") {
    fc_output_shape(p, {in.width, in.height, in.channels}, name);
    Tensor out(1, 1, p.out_dim);
    for (int o = 0; o < p.out_dim; ++o) {
        double acc = p.biases[o];
        const std::size_t wbase = static_cast<std::size_t>(o) * p.in_dim;
        for (int i = 0; i < p.in_dim; ++i)
            acc += static_cast<double>(p.weights[wbase + i]) * in.data[i];
        out.data[o] = static_cast<float>(acc);
    }
    return out;
}

/// Applies one layer. Dispatch point used by the network forward pass.
inline Tensor apply_layer(const Tensor& in, const LayerSpec& layer) {
    if (const auto* p = std::get_if<ConvParams>(&layer.params))
        return conv2d(in, *p, layer.name);
    if (std::holds_alternative<ReluParams>(layer.params)) return relu(in);
    if (const auto* p = std::get_if<MaxPoolParams>(&layer.params))
        return maxpool(in, *p);
    if (const auto* p = std::get_if<LrnParams>(&layer.params))
        return lrn(in, *p);
    return fully_connected(in, std::get<FullyConnectedParams>(layer.params),
                           layer.name);
}

/// Structural validation of a single layer: positive geometry and weight
/// array lengths that match the declared dimensions exactly.
inline void validate_layer(const LayerSpec& layer) {
    const std::string& name = layer.name;
    if (name.empty())
        throw std::runtime_error("layer with empty name");
    if (const auto* p = std::get_if<ConvParams>(&layer.params)) {
        if (p->kernel_h < 1 || p->kernel_w < 1 || p->stride < 1 ||
            p->padding < 0 || p->in_channels < 1 || p->out_channels < 1)
            throw std::runtime_error("layer '" + name +
                                     "': invalid conv geometry");
        const std::size_t want_w = static_cast<std::size_t>(p->out_channels) *
                                   p->in_channels * p->kernel_h * p->kernel_w;
        if (p->weights.size() != want_w)
            throw std::runtime_error(
                "layer '" + name + "': conv weight count " +
                std::to_string(p->weights.size()) + ", expected " +
                std::to_string(want_w));
        if (p->biases.size() != static_cast<std::size_t>(p->out_channels))
            throw std::runtime_error("layer '" + name +
                                     "': conv bias count mismatch");
    } else if (const auto* p = std::get_if<MaxPoolParams>(&layer.params)) {
        if (p->kernel < 1 || p->stride < 1)
            throw std::runtime_error("layer '" + name +
                                     "': invalid pool geometry");
    } else if (const auto* p = std::get_if<LrnParams>(&layer.params)) {
        if (p->radius < 0)
            throw std::runtime_error("layer '" + name +
                                     "': negative lrn radius");
    } else if (const auto* p =
                   std::get_if<FullyConnectedParams>(&layer.params)) {
        if (p->in_dim < 1 || p->out_dim < 1)
            throw std::runtime_error("layer '" + name +
                                     "': invalid fc dimensions");
        const std::size_t want_w =
            static_cast<std::size_t>(p->out_dim) * p->in_dim;
        if (p->weights.size() != want_w)
            throw std::runtime_error(
                "layer '" + name + "': fc weight count " +
                std::to_string(p->weights.size()) + ", expected " +
                std::to_string(want_w));
        if (p->biases.size() != static_cast<std::size_t>(p->out_dim))
            throw std::runtime_error("layer '" + name +
                                     "': fc bias count mismatch");
    }
}

}  // namespace fmf
