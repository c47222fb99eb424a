/**
 * @file descriptor.hpp
 * @brief Pyramid spatial pooling and the two descriptor distance metrics.
 *
 * Each W x H feature map collapses to 5 values: the global max plus the max
 * of each quadrant. Quadrant boundaries split at floor(H/2) and floor(W/2);
 * the bottom/right halves absorb the extra row/column when the dimension is
 * odd. A quadrant with no cells (W = 1 or H = 1) contributes 0.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fmf/fileio.hpp"
#include "fmf/tensor.hpp"

namespace fmf {

/// Pooled feature vector. Layout: for each channel c ascending,
/// [global max, top-left max, top-right max, bottom-left max,
///  bottom-right max].
struct Descriptor {
    std::vector<float> values;

    std::size_t size() const { return values.size(); }
};

namespace detail {

inline float region_max(const Tensor& t, int c, int y0, int y1, int x0,
                        int x1) {
    if (y0 >= y1 || x0 >= x1) return 0.0f;  // empty quadrant
    float m = t.at(c, y0, x0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m = std::max(m, t.at(c, y, x));
    return m;
}

}  // namespace detail

inline Descriptor pyramid_pool(const Tensor& t) {
    const int ys = t.height / 2;
    const int xs = t.width / 2;
    Descriptor d;
    d.values.reserve(static_cast<std::size_t>(t.channels) * 5);
    for (int c = 0; c < t.channels; ++c) {
        d.values.push_back(
            detail::region_max(t, c, 0, t.height, 0, t.width));
        d.values.push_back(detail::region_max(t, c, 0, ys, 0, xs));
        d.values.push_back(detail::region_max(t, c, 0, ys, xs, t.width));
        d.values.push_back(detail::region_max(t, c, ys, t.height, 0, xs));
        d.values.push_back(
            detail::region_max(t, c, ys, t.height, xs, t.width));
    }
    return d;
}

inline void require_same_length(const Descriptor& a, const Descriptor& b) {
    if (a.size() != b.size())
        throw std::invalid_argument(
            "descriptor length mismatch: " + std::to_string(a.size()) +
            " vs " + std::to_string(b.size()));
}

inline double l2_distance(const Descriptor& a, const Descriptor& b) {
    require_same_length(a, b);
    double sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d =
            static_cast<double>(a.values[k]) - static_cast<double>(b.values[k]);
        sum += d * d;
    }
    return std::sqrt(sum);
}

/// 1 - cos(a, b), in [0, 2]. A zero-norm argument (possible under heavy
/// filtering) yields the neutral value 1 instead of NaN.
inline double cosine_distance(const Descriptor& a, const Descriptor& b) {
    require_same_length(a, b);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double av = a.values[k];
        const double bv = b.values[k];
        dot += av * bv;
        na += av * av;
        nb += bv * bv;
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

/// One row per image: index,v0,v1,...  For debugging and external analysis.
inline std::string descriptors_to_csv(const std::vector<Descriptor>& descs) {
    std::ostringstream out;
    for (std::size_t i = 0; i < descs.size(); ++i) {
        out << i;
        for (float v : descs[i].values) out << "," << format_float(v);
        out << "\n";
    }
    return out.str();
}

inline void write_descriptors_csv(const std::filesystem::path& path,
                                  const std::vector<Descriptor>& descs) {
    atomic_write_file(path, descriptors_to_csv(descs));
}

}  // namespace fmf
