/**
 * @file tensor.hpp
 * @brief Dense W x H x C activation volume, the unit of all layer computation.
 *
 * Layout is channel-major: index(c, y, x) = (c * height + y) * width + x.
 * Tensors are plain value types; layer functions never mutate their inputs.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fmf {

struct Tensor {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;  // channel-major

    Tensor() = default;
    Tensor(int w, int h, int c)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, 0.0f) {
        if (w < 1 || h < 1 || c < 1)
            throw std::invalid_argument("Tensor: dimensions must be positive");
    }

    std::size_t size() const { return data.size(); }

    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height + y) * width + x;
    }

    float at(int c, int y, int x) const { return data[index(c, y, x)]; }
    float& at(int c, int y, int x) { return data[index(c, y, x)]; }

    bool same_shape(const Tensor& other) const {
        return width == other.width && height == other.height &&
               channels == other.channels;
    }
};

/// Throws if the tensor holds any NaN or infinity. `where` names the
/// producing layer in the error message.
inline void require_finite(const Tensor& t, const std::string& where) {
    for (float v : t.data) {
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite activation after layer '" +
                                     where + "'");
    }
}

inline std::string shape_string(const Tensor& t) {
    return std::to_string(t.width) + "x" + std::to_string(t.height) + "x" +
           std::to_string(t.channels);
}

}  // namespace fmf
