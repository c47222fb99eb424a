/**
 * @file netio.hpp
 * @brief FMFNET1 weight container: save_network / load_network.
 *
 * Format, bit-exact:
 *
 *   FMFNET1\n
 *   input <W> <H> <C>\n
 *   layers <count>\n
 *   conv <name> <in_ch> <out_ch> <kh> <kw> <stride> <pad>\n    (one line
 *   relu <name>\n                                               per layer,
 *   maxpool <name> <kernel> <stride>\n                          in order)
 *   lrn <name> <radius> <alpha> <beta> <bias>\n
 *   fc <name> <in_dim> <out_dim>\n
 *   data\n
 *   <blob>
 *
 * The blob is contiguous little-endian 32-bit floats: for each conv layer in
 * network order, weights in [out][in][row][col] order then biases; for each
 * fc layer, weights in [out][in] order then biases. Layer names are single
 * tokens (no whitespace). Load errors name the offending layer and the byte
 * offset where reading stopped.
 */
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "fmf/fileio.hpp"
#include "fmf/network.hpp"

namespace fmf {

namespace detail {

inline void append_f32_le(std::string& out, const std::vector<float>& vals) {
    for (float v : vals) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        out.push_back(static_cast<char>(u & 0xff));
        out.push_back(static_cast<char>((u >> 8) & 0xff));
        out.push_back(static_cast<char>((u >> 16) & 0xff));
        out.push_back(static_cast<char>((u >> 24) & 0xff));
    }
}

inline float read_f32_le(const char* p) {
    const auto b = reinterpret_cast<const unsigned char*>(p);
    const std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                            (static_cast<std::uint32_t>(b[1]) << 8) |
                            (static_cast<std::uint32_t>(b[2]) << 16) |
                            (static_cast<std::uint32_t>(b[3]) << 24);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

inline bool valid_layer_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '_' || c == '-' ||
                        c == '.';
        if (!ok) return false;
    }
    return true;
}

struct HeaderCursor {
    const std::string& text;
    std::size_t pos = 0;

    /// Next header line, without the trailing newline. Throws at EOF.
    std::string line() {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos)
            throw std::runtime_error(
                "malformed header: unterminated line at byte offset " +
                std::to_string(pos));
        std::string out = text.substr(pos, nl - pos);
        pos = nl + 1;
        return out;
    }
};

}  // namespace detail

inline std::string serialize_network(const NetworkSpec& net) {
    net.validate();
    std::ostringstream header;
    header << "FMFNET1\n";
    header << "input " << net.input_width << " " << net.input_height << " "
           << net.input_channels << "\n";
    header << "layers " << net.layers.size() << "\n";
    for (const auto& layer : net.layers) {
        if (!detail::valid_layer_name(layer.name))
            throw std::runtime_error("layer name '" + layer.name +
                                     "' is not serializable (single token of "
                                     "[A-Za-z0-9_.-] required)");
        if (const auto* p = std::get_if<ConvParams>(&layer.params)) {
            header << "conv " << layer.name << " " << p->in_channels << " "
                   << p->out_channels << " " << p->kernel_h << " "
                   << p->kernel_w << " " << p->stride << " " << p->padding
                   << "\n";
        } else if (std::holds_alternative<ReluParams>(layer.params)) {
            header << "relu " << layer.name << "\n";
        } else if (const auto* p = std::get_if<MaxPoolParams>(&layer.params)) {
            header << "maxpool " << layer.name << " " << p->kernel << " "
                   << p->stride << "\n";
        } else if (const auto* p = std::get_if<LrnParams>(&layer.params)) {
            header << "lrn " << layer.name << " " << p->radius << " "
                   << format_float(p->alpha) << " " << format_float(p->beta)
                   << " " << format_float(p->bias) << "\n";
        } else {
            const auto& fc = std::get<FullyConnectedParams>(layer.params);
            header << "fc " << layer.name << " " << fc.in_dim << " "
                   << fc.out_dim << "\n";
        }
    }
    header << "data\n";

    std::string out = header.str();
    for (const auto& layer : net.layers) {
        if (const auto* p = std::get_if<ConvParams>(&layer.params)) {
            detail::append_f32_le(out, p->weights);
            detail::append_f32_le(out, p->biases);
        } else if (const auto* p =
                       std::get_if<FullyConnectedParams>(&layer.params)) {
            detail::append_f32_le(out, p->weights);
            detail::append_f32_le(out, p->biases);
        }
    }
    return out;
}

inline void save_network(const NetworkSpec& net,
                         const std::filesystem::path& path) {
    atomic_write_file(path, serialize_network(net));
}

inline NetworkSpec parse_network(const std::string& bytes) {
    detail::HeaderCursor cur{bytes};
    if (cur.line() != "FMFNET1")
        throw std::runtime_error(
            "malformed header: missing FMFNET1 magic at byte offset 0");

    NetworkSpec net;
    {
        std::istringstream ls(cur.line());
        std::string kw;
        if (!(ls >> kw >> net.input_width >> net.input_height >>
              net.input_channels) ||
            kw != "input")
            throw std::runtime_error(
                "malformed header: expected 'input <W> <H> <C>'");
    }
    std::size_t layer_count = 0;
    {
        std::istringstream ls(cur.line());
        std::string kw;
        if (!(ls >> kw >> layer_count) || kw != "layers")
            throw std::runtime_error(
                "malformed header: expected 'layers <count>'");
    }

    for (std::size_t i = 0; i < layer_count; ++i) {
        const std::size_t line_offset = cur.pos;
        std::istringstream ls(cur.line());
        std::string kind, name;
        if (!(ls >> kind >> name))
            throw std::runtime_error(
                "malformed header: bad layer line at byte offset " +
                std::to_string(line_offset));
        LayerSpec layer;
        layer.name = name;
        auto fail = [&](const char* what) -> std::runtime_error {
            return std::runtime_error("malformed header: layer '" + name +
                                      "': " + what + " at byte offset " +
                                      std::to_string(line_offset));
        };
        if (kind == "conv") {
            ConvParams p;
            if (!(ls >> p.in_channels >> p.out_channels >> p.kernel_h >>
                  p.kernel_w >> p.stride >> p.padding) ||
                p.in_channels < 1 || p.out_channels < 1 || p.kernel_h < 1 ||
                p.kernel_w < 1 || p.stride < 1 || p.padding < 0)
                throw fail("bad conv parameters");
            layer.params = std::move(p);
        } else if (kind == "relu") {
            layer.params = ReluParams{};
        } else if (kind == "maxpool") {
            MaxPoolParams p;
            if (!(ls >> p.kernel >> p.stride) || p.kernel < 1 || p.stride < 1)
                throw fail("bad maxpool parameters");
            layer.params = p;
        } else if (kind == "lrn") {
            LrnParams p;
            if (!(ls >> p.radius >> p.alpha >> p.beta >> p.bias) ||
                p.radius < 0)
                throw fail("bad lrn parameters");
            layer.params = p;
        } else if (kind == "fc") {
            FullyConnectedParams p;
            if (!(ls >> p.in_dim >> p.out_dim) || p.in_dim < 1 ||
                p.out_dim < 1)
                throw fail("bad fc parameters");
            layer.params = std::move(p);
        } else {
            throw fail("unknown layer kind");
        }
        std::string extra;
        if (ls >> extra) throw fail("trailing tokens");
        net.layers.push_back(std::move(layer));
    }

    {
        const std::size_t line_offset = cur.pos;
        if (cur.line() != "data")
            throw std::runtime_error(
                "malformed header: expected 'data' at byte offset " +
                std::to_string(line_offset));
    }

    // weight blob
    std::size_t off = cur.pos;
    auto take = [&](std::vector<float>& dst, std::size_t count,
                    const std::string& layer_name, const char* what) {
        dst.resize(count);
        if (off + count * 4 > bytes.size())
            throw std::runtime_error(
                "truncated blob: layer '" + layer_name + "' " + what +
                " need " + std::to_string(count * 4) + " bytes at offset " +
                std::to_string(off) + ", file ends at " +
                std::to_string(bytes.size()));
        for (std::size_t i = 0; i < count; ++i, off += 4)
            dst[i] = detail::read_f32_le(bytes.data() + off);
    };
    for (auto& layer : net.layers) {
        if (auto* p = std::get_if<ConvParams>(&layer.params)) {
            take(p->weights,
                 static_cast<std::size_t>(p->out_channels) * p->in_channels *
                     p->kernel_h * p->kernel_w,
                 layer.name, "weights");
            take(p->biases, static_cast<std::size_t>(p->out_channels),
                 layer.name, "biases");
        } else if (auto* p = std::get_if<FullyConnectedParams>(&layer.params)) {
            take(p->weights, static_cast<std::size_t>(p->out_dim) * p->in_dim,
                 layer.name, "weights");
            take(p->biases, static_cast<std::size_t>(p->out_dim), layer.name,
                 "biases");
        }
    }
    if (off != bytes.size())
        throw std::runtime_error("trailing bytes after weight blob at offset " +
                                 std::to_string(off));

    net.validate();  // shape-chain mismatch and weight-length errors
    return net;
}

inline NetworkSpec load_network(const std::filesystem::path& path) {
    return parse_network(read_file(path));
}

}  // namespace fmf
