/**
 * @file image_io.hpp
 * @brief Netpbm image reading and writing (PGM P2/P5, PPM P3/P6).
 *
 * Images load directly into Tensors: grayscale as one channel, color as
 * three channel-major planes (R, G, B). Samples are scaled by the file's
 * maxval into [0, 1]. Maxvals up to 65535 are supported; binary rasters
 * with maxval > 255 use two bytes per sample, big-endian, per the format.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fmf/fileio.hpp"
#include "fmf/tensor.hpp"

namespace fmf {

namespace detail {

/// Tokenizer for netpbm headers and ASCII rasters. '#' starts a comment
/// that runs to end of line.
struct PnmCursor {
    const std::string& text;
    std::size_t pos = 0;
    const std::string& name;  // for error messages

    bool at_end() const { return pos >= text.size(); }

    void skip_space_and_comments() {
        while (pos < text.size()) {
            const char c = text[pos];
            if (c == '#') {
                while (pos < text.size() && text[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    std::string token() {
        skip_space_and_comments();
        if (at_end())
            throw std::runtime_error("truncated image file: " + name);
        const std::size_t start = pos;
        while (pos < text.size() && !std::isspace(
                   static_cast<unsigned char>(text[pos])) &&
               text[pos] != '#')
            ++pos;
        return text.substr(start, pos - start);
    }

    int number() {
        const std::string tok = token();
        try {
            std::size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("bad number '" + tok + "' in " + name);
        }
    }
};

}  // namespace detail

/// Reads a PGM or PPM file into a Tensor scaled to [0, 1]. Grayscale files
/// produce 1 channel, color files 3 (channel-major R, G, B planes).
inline Tensor load_image(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    const std::string name = path.string();
    detail::PnmCursor cur{raw, 0, name};

    const std::string magic = cur.token();
    int channels = 0;
    bool binary = false;
    if (magic == "P2") { channels = 1; binary = false; }
    else if (magic == "P3") { channels = 3; binary = false; }
    else if (magic == "P5") { channels = 1; binary = true; }
    else if (magic == "P6") { channels = 3; binary = true; }
    else
        throw std::runtime_error("unsupported image format '" + magic +
                                 "' in " + name);

    const int width = cur.number();
    const int height = cur.number();
    const int maxval = cur.number();
    if (width <= 0 || height <= 0)
        throw std::runtime_error("bad image dimensions in " + name);
    if (maxval <= 0 || maxval > 65535)
        throw std::runtime_error("bad maxval " + std::to_string(maxval) +
                                 " in " + name);

    Tensor img(width, height, channels);
    const std::size_t samples =
        static_cast<std::size_t>(width) * height * channels;
    const float scale = 1.0f / static_cast<float>(maxval);

    if (binary) {
        // exactly one whitespace byte separates the maxval from the raster
        if (cur.at_end() || !std::isspace(
                static_cast<unsigned char>(raw[cur.pos])))
            throw std::runtime_error("malformed raster separator in " + name);
        std::size_t p = cur.pos + 1;
        const int bytes_per = maxval > 255 ? 2 : 1;
        if (raw.size() - p < samples * bytes_per)
            throw std::runtime_error("truncated raster in " + name);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < channels; ++c) {
                    int v = static_cast<std::uint8_t>(raw[p++]);
                    if (bytes_per == 2)
                        v = (v << 8) | static_cast<std::uint8_t>(raw[p++]);
                    if (v > maxval)
                        throw std::runtime_error("sample exceeds maxval in " +
                                                 name);
                    img.at(c, y, x) = static_cast<float>(v) * scale;
                }
    } else {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < channels; ++c) {
                    const int v = cur.number();
                    if (v < 0 || v > maxval)
                        throw std::runtime_error("sample out of range in " +
                                                 name);
                    img.at(c, y, x) = static_cast<float>(v) * scale;
                }
    }
    return img;
}

namespace detail {

inline int quantize_sample(float v, int maxval) {
    const float clamped = std::min(1.0f, std::max(0.0f, v));
    return static_cast<int>(std::lround(clamped * maxval));
}

}  // namespace detail

/// Writes a 1-channel tensor as binary PGM (P5) or a 3-channel tensor as
/// binary PPM (P6), quantizing [0, 1] to maxval 255.
inline void save_image(const Tensor& img, const std::filesystem::path& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument(
            "only 1- or 3-channel tensors can be written as images, got " +
            std::to_string(img.channels));
    std::string out;
    out += img.channels == 1 ? "P5\n" : "P6\n";
    out += std::to_string(img.width) + " " + std::to_string(img.height) +
           "\n255\n";
    out.reserve(out.size() +
                static_cast<std::size_t>(img.width) * img.height *
                    img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.push_back(static_cast<char>(
                    detail::quantize_sample(img.at(c, y, x), 255)));
    atomic_write_file(path, out);
}

/// Round trip through the 8-bit quantization used by save_image. Synthetic
/// generation verifies its planted structure on quantized pixels so the
/// images on disk carry exactly what was measured.
inline Tensor quantize_image(const Tensor& img) {
    Tensor q(img.width, img.height, img.channels);
    // same scale expression as load_image so the round trip is bit-exact
    const float scale = 1.0f / 255.0f;
    for (std::size_t i = 0; i < img.data.size(); ++i)
        q.data[i] = static_cast<float>(
                        detail::quantize_sample(img.data[i], 255)) *
                    scale;
    return q;
}

/// Collapses RGB to a single luminance channel (Rec. 601 weights); returns
/// grayscale input unchanged.
inline Tensor to_grayscale(const Tensor& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3)
        throw std::invalid_argument("to_grayscale expects 1 or 3 channels");
    Tensor g(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            g.at(0, y, x) = 0.299f * img.at(0, y, x) +
                            0.587f * img.at(1, y, x) +
                            0.114f * img.at(2, y, x);
    return g;
}

}  // namespace fmf
