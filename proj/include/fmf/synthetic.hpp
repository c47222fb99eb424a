/**
 * @file synthetic.hpp
 * @brief Deterministic condition-shift benchmark: two aligned traverses of
 *        the same places under different imaging conditions, plus a small
 *        3-conv network whose early layer contains planted channels that
 *        respond to the condition difference rather than to place identity.
 *
 * The construction mirrors the situation filtering exploits in the wild: a
 * handful of early feature maps fire on condition-specific structure
 * (here: a high-frequency stripe pattern present only in the query
 * condition) and thereby drag matching toward perceptual aliasing, while
 * the remaining maps are low-pass and carry place identity. Removing the
 * planted maps is the recoverable optimum.
 *
 * Reference frames are clean place images. Query frames add a global
 * brightness shift and a stripe pattern whose orientation and frequency
 * are condition-level constants (with small per-frame jitter), so the
 * noise is systematic across the traverse the way a lighting change is.
 *
 * The emitted images are quantized through the same 8-bit path used when
 * saving, so in-memory data equals a save/load round trip byte for byte.
 * Generation verifies the construction by measuring per-channel activation
 * deltas between aligned frames at the first layer's output; if the
 * planted channels do not dominate by `min_delta_ratio`, the generator
 * retries with a derived seed and reports failure after `max_attempts`.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmf/calibrate.hpp"
#include "fmf/image_io.hpp"
#include "fmf/netio.hpp"
#include "fmf/network.hpp"
#include "fmf/rng.hpp"
#include "fmf/tensor.hpp"
#include "fmf/traverse.hpp"

namespace fmf {

struct SyntheticConfig {
    std::uint32_t seed = 1;
    int n_places = 48;
    int image_size = 32;
    float brightness_shift = 0.03f;  // query-condition global offset
    float noise_amplitude = 0.30f;   // stripe contrast in the query condition
    int planted_count = 3;
    std::vector<int> planted_channels;  // explicit list; empty = sampled
    int conv1_channels = 12;
    int conv2_channels = 16;
    int conv3_channels = 16;
    double min_delta_ratio = 5.0;  // planted vs non-planted activation delta
    int max_attempts = 8;

    void validate() const {
        if (n_places < 20)
            throw std::invalid_argument("n_places must be at least 20");
        if (image_size < 16)
            throw std::invalid_argument("image_size must be at least 16");
        if (planted_count < 1 || planted_count > conv1_channels / 2)
            throw std::invalid_argument(
                "planted_count must be in [1, conv1_channels/2]");
        if (conv1_channels < 4 || conv2_channels < 4 || conv3_channels < 4)
            throw std::invalid_argument("each conv needs at least 4 maps");
        for (int c : planted_channels)
            if (c < 0 || c >= conv1_channels)
                throw std::invalid_argument("planted channel out of range");
        if (!planted_channels.empty() &&
            static_cast<int>(planted_channels.size()) != planted_count)
            throw std::invalid_argument(
                "planted_channels length must equal planted_count");
        if (noise_amplitude < 0.0f || brightness_shift < 0.0f)
            throw std::invalid_argument(
                "noise parameters must be nonnegative");
        if (max_attempts < 1)
            throw std::invalid_argument("max_attempts must be at least 1");
    }
};

struct SyntheticData {
    std::vector<Tensor> reference;  // quantized grayscale frames
    std::vector<Tensor> query;
    NetworkSpec net;
    std::vector<int> planted;  // ascending conv1 channel indices
    double delta_ratio = 0.0;  // measured planted/non-planted separation
};

namespace detail {

/// Oriented stripe detector for wavelength `lambda` at angle `theta`:
/// cosine carrier under a Gaussian window, zero-meaned, then scaled so the
/// response to a matched unit-amplitude sinusoid equals `gain`.
inline std::vector<float> gabor_kernel(int k, double theta, double lambda,
                                       double phase, double gain) {
    const int r = k / 2;
    const double sigma = 1.6;
    std::vector<double> w(static_cast<std::size_t>(k) * k);
    double mean = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double along = dx * std::cos(theta) + dy * std::sin(theta);
            const double v =
                std::cos(2.0 * M_PI * along / lambda + phase) *
                std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            w[(dy + r) * k + (dx + r)] = v;
            mean += v;
        }
    mean /= static_cast<double>(w.size());
    for (double& v : w) v -= mean;

    // peak response over carrier phase = |sum w * e^{i 2 pi along / lambda}|
    std::complex<double> resp(0.0, 0.0);
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double along = dx * std::cos(theta) + dy * std::sin(theta);
            resp += w[(dy + r) * k + (dx + r)] *
                    std::exp(std::complex<double>(
                        0.0, 2.0 * M_PI * along / lambda));
        }
    const double amp = std::abs(resp);
    if (amp < 1e-9)
        throw std::runtime_error("degenerate stripe kernel");
    std::vector<float> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        out[i] = static_cast<float>(w[i] * gain / amp);
    return out;
}

/// Low-pass blob: Gaussian with per-channel width and mild shape noise,
/// normalized to unit sum so it passes place structure at unit DC gain.
inline std::vector<float> blob_kernel(int k, std::mt19937& rng) {
    const int r = k / 2;
    const double sigma = uniform_in(rng, 1.0, 2.2);
    std::vector<double> w(static_cast<std::size_t>(k) * k);
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double jitter = 1.0 + 0.2 * uniform_in(rng, -1.0, 1.0);
            const double v =
                jitter *
                std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            w[(dy + r) * k + (dx + r)] = v;
            sum += v;
        }
    std::vector<float> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        out[i] = static_cast<float>(w[i] / sum);
    return out;
}

/// Random conv weights, uniform in +-sqrt(3 / fan_in), zero biases.
inline ConvParams random_conv(int in_ch, int out_ch, int k, int pad,
                              std::mt19937& rng) {
    ConvParams p;
    p.in_channels = in_ch;
    p.out_channels = out_ch;
    p.kernel_h = k;
    p.kernel_w = k;
    p.stride = 1;
    p.padding = pad;
    const double range = std::sqrt(3.0 / (in_ch * k * k));
    p.weights.resize(static_cast<std::size_t>(out_ch) * in_ch * k * k);
    for (float& w : p.weights)
        w = static_cast<float>(uniform_in(rng, -range, range));
    p.biases.assign(out_ch, 0.0f);
    return p;
}

/// Smooth place image: four low-frequency sinusoids normalized into
/// [0.15, 0.70] so the query condition's additions stay inside [0, 1].
inline Tensor place_image(int size, std::mt19937& rng) {
    struct Component {
        double a, fx, fy, phase;
    };
    std::vector<Component> parts;
    for (int kcomp = 0; kcomp < 4; ++kcomp) {
        Component comp;
        comp.a = uniform_in(rng, 0.3, 1.0);
        do {
            comp.fx = static_cast<double>(bounded_uint(rng, 7)) - 3.0;
            comp.fy = static_cast<double>(bounded_uint(rng, 7)) - 3.0;
        } while (comp.fx == 0.0 && comp.fy == 0.0);
        comp.phase = uniform_in(rng, 0.0, 2.0 * M_PI);
        parts.push_back(comp);
    }
    Tensor img(size, size, 1);
    double lo = 1e300, hi = -1e300;
    std::vector<double> raw(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double v = 0.0;
            for (const auto& comp : parts)
                v += comp.a * std::sin(2.0 * M_PI *
                                           (comp.fx * x + comp.fy * y) /
                                           size +
                                       comp.phase);
            raw[static_cast<std::size_t>(y) * size + x] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const double span = hi > lo ? hi - lo : 1.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            img.at(0, y, x) = static_cast<float>(
                0.15 + 0.55 * (raw[static_cast<std::size_t>(y) * size + x] -
                               lo) /
                           span);
    return img;
}

struct GenerationAttempt {
    SyntheticData data;
    double ratio = 0.0;
};

inline GenerationAttempt generate_attempt(const SyntheticConfig& cfg,
                                          std::mt19937& rng) {
    GenerationAttempt out;
    SyntheticData& data = out.data;

    if (!cfg.planted_channels.empty()) {
        data.planted = cfg.planted_channels;
        std::sort(data.planted.begin(), data.planted.end());
        for (std::size_t i = 1; i < data.planted.size(); ++i)
            if (data.planted[i] == data.planted[i - 1])
                throw std::invalid_argument("duplicate planted channel");
    } else {
        data.planted = sample_without_replacement(
            rng, cfg.conv1_channels, cfg.planted_count);
    }

    // condition-level stripe parameters shared by all query frames
    const double theta_c = uniform_in(rng, 0.0, M_PI);
    const double cycles = uniform_in(rng, 10.0, 13.0);
    const double lambda = static_cast<double>(cfg.image_size) / cycles;

    // conv1: planted stripe detectors among low-pass blobs
    ConvParams conv1;
    conv1.in_channels = 1;
    conv1.out_channels = cfg.conv1_channels;
    conv1.kernel_h = 5;
    conv1.kernel_w = 5;
    conv1.stride = 1;
    conv1.padding = 2;
    conv1.biases.assign(cfg.conv1_channels, 0.0f);
    std::vector<bool> is_planted(cfg.conv1_channels, false);
    for (int c : data.planted) is_planted[c] = true;
    for (int c = 0; c < cfg.conv1_channels; ++c) {
        std::vector<float> k =
            is_planted[c]
                ? gabor_kernel(5, theta_c + uniform_in(rng, -0.15, 0.15),
                               lambda, uniform_in(rng, 0.0, 2.0 * M_PI), 5.0)
                : blob_kernel(5, rng);
        conv1.weights.insert(conv1.weights.end(), k.begin(), k.end());
    }

    data.net.input_width = cfg.image_size;
    data.net.input_height = cfg.image_size;
    data.net.input_channels = 1;
    data.net.layers.push_back({"conv1", conv1});
    data.net.layers.push_back({"relu1", ReluParams{}});
    data.net.layers.push_back({"pool1", MaxPoolParams{2, 2}});
    data.net.layers.push_back(
        {"conv2",
         random_conv(cfg.conv1_channels, cfg.conv2_channels, 3, 1, rng)});
    data.net.layers.push_back({"relu2", ReluParams{}});
    data.net.layers.push_back({"pool2", MaxPoolParams{2, 2}});
    data.net.layers.push_back(
        {"conv3",
         random_conv(cfg.conv2_channels, cfg.conv3_channels, 3, 1, rng)});
    data.net.layers.push_back({"relu3", ReluParams{}});
    data.net.validate();

    // aligned frames: clean reference, shifted-and-striped query
    for (int i = 0; i < cfg.n_places; ++i) {
        const Tensor base = place_image(cfg.image_size, rng);
        const double theta_i = theta_c + uniform_in(rng, -0.05, 0.05);
        const double phase_i = uniform_in(rng, 0.0, 2.0 * M_PI);
        Tensor q(cfg.image_size, cfg.image_size, 1);
        for (int y = 0; y < cfg.image_size; ++y)
            for (int x = 0; x < cfg.image_size; ++x) {
                const double along =
                    x * std::cos(theta_i) + y * std::sin(theta_i);
                const double stripe =
                    std::sin(2.0 * M_PI * along / lambda + phase_i);
                const double v = base.at(0, y, x) + cfg.brightness_shift +
                                 cfg.noise_amplitude * stripe;
                q.at(0, y, x) = static_cast<float>(
                    std::min(1.0, std::max(0.0, v)));
            }
        data.reference.push_back(quantize_image(base));
        data.query.push_back(quantize_image(q));
    }

    // measured separation at the first layer's rectified output
    std::vector<double> delta(cfg.conv1_channels, 0.0);
    for (int i = 0; i < cfg.n_places; ++i) {
        const Tensor ar = forward(data.net, data.reference[i], "relu1");
        const Tensor aq = forward(data.net, data.query[i], "relu1");
        for (int c = 0; c < ar.channels; ++c) {
            double acc = 0.0;
            for (int y = 0; y < ar.height; ++y)
                for (int x = 0; x < ar.width; ++x)
                    acc += std::abs(static_cast<double>(aq.at(c, y, x)) -
                                    ar.at(c, y, x));
            delta[c] += acc / (ar.height * ar.width);
        }
    }
    double planted_min = 1e300, rest_sum = 0.0;
    int rest_count = 0;
    for (int c = 0; c < cfg.conv1_channels; ++c) {
        if (is_planted[c]) {
            planted_min = std::min(planted_min, delta[c]);
        } else {
            rest_sum += delta[c];
            ++rest_count;
        }
    }
    const double rest_mean = rest_count > 0 ? rest_sum / rest_count : 0.0;
    out.ratio = rest_mean > 1e-12 ? planted_min / rest_mean
                                  : (planted_min > 0.0 ? 1e12 : 0.0);
    data.delta_ratio = out.ratio;
    return out;
}

}  // namespace detail

/// Deterministic per cfg.seed. Retries with derived seeds until the planted
/// channels dominate the cross-condition activation delta by
/// cfg.min_delta_ratio.
inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    double best_ratio = -1.0;
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        std::seed_seq seq{cfg.seed, static_cast<std::uint32_t>(attempt)};
        std::mt19937 rng(seq);
        detail::GenerationAttempt got = detail::generate_attempt(cfg, rng);
        if (got.ratio >= cfg.min_delta_ratio) return std::move(got.data);
        best_ratio = std::max(best_ratio, got.ratio);
    }
    throw std::runtime_error(
        "synthetic generation could not separate planted channels: best "
        "delta ratio " + format_double(best_ratio) + " after " +
        std::to_string(cfg.max_attempts) + " attempts (need " +
        format_double(cfg.min_delta_ratio) + ")");
}

/// Writes <out>/reference/NNN.pgm, <out>/query/NNN.pgm, <out>/net.fmfnet
/// and <out>/planted_mask.txt (the planted channels in mask format, for
/// inspection and control runs).
inline void save_synthetic(const SyntheticData& data,
                           const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "reference");
    fs::create_directories(out_dir / "query");
    char name[16];
    for (std::size_t i = 0; i < data.reference.size(); ++i) {
        std::snprintf(name, sizeof(name), "%03d.pgm", static_cast<int>(i));
        save_image(data.reference[i], out_dir / "reference" / name);
        save_image(data.query[i], out_dir / "query" / name);
    }
    save_network(data.net, out_dir / "net.fmfnet");
    FilterMask planted{"conv1", {data.planted.begin(), data.planted.end()}};
    save_mask(planted, out_dir / "planted_mask.txt");
}

}  // namespace fmf
