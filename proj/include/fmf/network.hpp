/**
 * @file network.hpp
 * @brief NetworkSpec, FilterMask and the deterministic forward pass with
 *        tap points, feature-map zeroing and resume-from-cache execution.
 *
 * Filtering is implemented by zeroing whole channels of the masked conv
 * layer's output. That is exactly equivalent to zeroing the weights and
 * biases that produce those channels (a zero-weight, zero-bias map is
 * identically zero), and it is what makes forward_cached possible: the
 * unmasked activation at the filter layer can be cached once per image and
 * re-used for every candidate mask.
 */
#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fmf/layers.hpp"
#include "fmf/tensor.hpp"

namespace fmf {

/// A calibrated filter: the conv layer to zero and the set of feature-map
/// indices within that layer's output to remove.
struct FilterMask {
    std::string layer;
    std::set<int> removed;

    bool empty() const { return removed.empty(); }
};

struct NetworkSpec {
    int input_width = 0;
    int input_height = 0;
    int input_channels = 0;
    std::vector<LayerSpec> layers;

    int layer_index(std::string_view name) const {
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].name == name) return static_cast<int>(i);
        return -1;
    }

    int require_layer(std::string_view name) const {
        const int idx = layer_index(name);
        if (idx < 0)
            throw std::runtime_error("unknown layer tap '" + std::string(name) +
                                     "'");
        return idx;
    }

    Shape input_shape() const {
        return {input_width, input_height, input_channels};
    }

    /// Output shape of layer `index`, chained from the input shape.
    Shape shape_at(int index) const {
        Shape s = input_shape();
        for (int i = 0; i <= index; ++i)
            s = layer_output_shape(layers[i], s);
        return s;
    }

    /// Output channel count of a conv layer, by tap label.
    int conv_channels(std::string_view name) const {
        const int idx = require_layer(name);
        if (!layers[idx].is_conv())
            throw std::runtime_error("layer '" + std::string(name) +
                                     "' is not a conv layer");
        return layers[idx].conv().out_channels;
    }

    /// Full structural validation: unique names, per-layer geometry and
    /// weight lengths, and a consistent shape chain end to end.
    void validate() const {
        if (input_width < 1 || input_height < 1 || input_channels < 1)
            throw std::runtime_error("invalid network input shape");
        if (layers.empty()) throw std::runtime_error("network has no layers");
        std::set<std::string> names;
        for (const auto& layer : layers) {
            validate_layer(layer);
            if (!names.insert(layer.name).second)
                throw std::runtime_error("duplicate layer name '" +
                                         layer.name + "'");
        }
        Shape s = input_shape();
        for (const auto& layer : layers) s = layer_output_shape(layer, s);
    }
};

namespace detail {

/// Validates a mask against the network: the named layer must be a conv
/// layer, indices must fit, and at most half the stack may be removed.
inline int check_mask(const NetworkSpec& net, const FilterMask& mask) {
    const int idx = net.require_layer(mask.layer);
    if (!net.layers[idx].is_conv())
        throw std::runtime_error("mask layer '" + mask.layer +
                                 "' is not a conv layer");
    const int channels = net.layers[idx].conv().out_channels;
    const int cap = channels / 2;
    if (static_cast<int>(mask.removed.size()) > cap)
        throw std::runtime_error(
            "mask removes " + std::to_string(mask.removed.size()) + " of " +
            std::to_string(channels) + " maps in '" + mask.layer +
            "'; more than half the stack is refused");
    for (int j : mask.removed) {
        if (j < 0 || j >= channels)
            throw std::runtime_error("mask index " + std::to_string(j) +
                                     " out of range for layer '" + mask.layer +
                                     "' with " + std::to_string(channels) +
                                     " maps");
    }
    return idx;
}

inline void zero_channels(Tensor& t, const std::set<int>& removed) {
    const std::size_t plane = static_cast<std::size_t>(t.width) * t.height;
    for (int c : removed) {
        float* p = t.data.data() + plane * static_cast<std::size_t>(c);
        for (std::size_t i = 0; i < plane; ++i) p[i] = 0.0f;
    }
}

}  // namespace detail

/// Runs the network up to (and including) the layer named `tap` and returns
/// its activation tensor. With a mask, the masked layer's output channels
/// are zeroed before downstream layers run — bit-identical to a network
/// whose masked maps have zero weights and biases.
inline Tensor forward(const NetworkSpec& net, const Tensor& input,
                      std::string_view tap,
                      const FilterMask* mask = nullptr) {
    const int tap_idx = net.require_layer(tap);
    int mask_idx = -1;
    if (mask != nullptr) {
        mask_idx = detail::check_mask(net, *mask);
        if (mask_idx > tap_idx)
            throw std::runtime_error("mask layer '" + mask->layer +
                                     "' comes after tap '" + std::string(tap) +
                                     "'");
    }
    if (input.width != net.input_width || input.height != net.input_height ||
        input.channels != net.input_channels)
        throw std::runtime_error("input tensor is " + shape_string(input) +
                                 ", network expects " +
                                 to_string(net.input_shape()));

    Tensor act = input;
    for (int i = 0; i <= tap_idx; ++i) {
        act = apply_layer(act, net.layers[i]);
        if (i == mask_idx) detail::zero_channels(act, mask->removed);
        require_finite(act, net.layers[i].name);
    }
    return act;
}

/// Resumes execution from a cached unmasked activation at layer `from`,
/// applying `mask` (which must live on `from`) and continuing to `tap`.
/// Equals forward(net, original input, tap, mask) exactly.
inline Tensor forward_cached(const NetworkSpec& net, const Tensor& cached,
                             std::string_view from, std::string_view tap,
                             const FilterMask& mask) {
    const int from_idx = net.require_layer(from);
    const int tap_idx = net.require_layer(tap);
    if (tap_idx < from_idx)
        throw std::runtime_error("tap '" + std::string(tap) +
                                 "' precedes cache layer '" +
                                 std::string(from) + "'");
    if (mask.layer != from)
        throw std::runtime_error("cached resume requires mask on layer '" +
                                 std::string(from) + "', mask names '" +
                                 mask.layer + "'");
    detail::check_mask(net, mask);
    const Shape want = net.shape_at(from_idx);
    if (Shape{cached.width, cached.height, cached.channels} != want)
        throw std::runtime_error("cached tensor is " + shape_string(cached) +
                                 ", layer '" + std::string(from) +
                                 "' produces " + to_string(want));

    Tensor act = cached;
    detail::zero_channels(act, mask.removed);
    for (int i = from_idx + 1; i <= tap_idx; ++i) {
        act = apply_layer(act, net.layers[i]);
        require_finite(act, net.layers[i].name);
    }
    return act;
}

/// Oracle helper: a copy of the network whose masked conv maps have their
/// weights and biases zeroed. forward() on the clone without a mask must be
/// bit-identical to forward() on the original with the mask.
inline NetworkSpec clone_with_zeroed_maps(const NetworkSpec& net,
                                          const FilterMask& mask) {
    const int idx = detail::check_mask(net, mask);
    NetworkSpec clone = net;
    auto& conv = std::get<ConvParams>(clone.layers[idx].params);
    const std::size_t per_map = static_cast<std::size_t>(conv.in_channels) *
                                conv.kernel_h * conv.kernel_w;
    for (int j : mask.removed) {
        std::fill_n(conv.weights.begin() +
                        static_cast<std::size_t>(j) * per_map,
                    per_map, 0.0f);
        conv.biases[static_cast<std::size_t>(j)] = 0.0f;
    }
    return clone;
}

}  // namespace fmf
