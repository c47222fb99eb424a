/**
 * @file config.hpp
 * @brief Plain-text key=value pipeline configuration.
 *
 * One key per line, '#' comments, unknown keys rejected so typos surface
 * instead of silently running defaults. CLI flags are applied after the
 * file, so they override it.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmf/fileio.hpp"
#include "fmf/triplet.hpp"

namespace fmf {

struct PipelineConfig {
    std::string filter_layer;   // empty = no filtering
    std::string extract_layer;  // descriptor tap
    int batch_size = 4;
    double halt_fraction = 0.5;
    double consensus_threshold = 0.66;
    int tolerance = 1;       // ground-truth tolerance, frames
    int hard_offset = 0;     // 0 = tolerance + 5
    int calib_spacing = 2;
    std::uint32_t seed = 1;
    int calib_count = 5;     // calibration sets
    int window_halfwidth = 10;
    bool exclude_calibration = true;  // drop the calibration prefix from eval
    std::vector<float> mean_subtract;  // per-channel (or single) input mean

    CalibrationConfig calibration() const {
        CalibrationConfig c;
        c.filter_layer = filter_layer;
        c.extract_layer = extract_layer;
        c.batch_size = batch_size;
        c.halt_fraction = halt_fraction;
        c.consensus_threshold = consensus_threshold;
        c.tolerance = tolerance;
        c.hard_offset = hard_offset;
        c.calib_spacing = calib_spacing;
        c.rng_seed = seed;
        return c;
    }

    /// Frames reserved for calibration at the head of both traverses.
    int evaluation_start() const {
        return exclude_calibration ? calib_count * calib_spacing : 0;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("bad integer for " + key + ": '" + value +
                                 "'");
    }
}

inline double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("bad number for " + key + ": '" + value +
                                 "'");
    }
}

inline bool parse_flag(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    throw std::runtime_error("bad boolean for " + key + ": '" + value + "'");
}

}  // namespace detail

/// Applies key=value lines onto an existing config. Every parse error is
/// reported as `source:line: reason`.
inline void apply_config_text(PipelineConfig& cfg, const std::string& text,
                              const std::string& source = "config") {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        try {
            const std::size_t eq = stripped.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("expected key=value");
            const std::string key = detail::trim(stripped.substr(0, eq));
            const std::string value = detail::trim(stripped.substr(eq + 1));

            if (key == "filter_layer") cfg.filter_layer = value;
            else if (key == "extract_layer") cfg.extract_layer = value;
            else if (key == "batch_size")
                cfg.batch_size = detail::parse_int(key, value);
            else if (key == "halt_fraction")
                cfg.halt_fraction = detail::parse_real(key, value);
            else if (key == "consensus_threshold")
                cfg.consensus_threshold = detail::parse_real(key, value);
            else if (key == "tolerance")
                cfg.tolerance = detail::parse_int(key, value);
            else if (key == "hard_offset")
                cfg.hard_offset = detail::parse_int(key, value);
            else if (key == "calib_spacing")
                cfg.calib_spacing = detail::parse_int(key, value);
            else if (key == "seed")
                cfg.seed = static_cast<std::uint32_t>(
                    detail::parse_int(key, value));
            else if (key == "calib_count")
                cfg.calib_count = detail::parse_int(key, value);
            else if (key == "window_halfwidth")
                cfg.window_halfwidth = detail::parse_int(key, value);
            else if (key == "exclude_calibration")
                cfg.exclude_calibration = detail::parse_flag(key, value);
            else if (key == "mean_subtract") {
                cfg.mean_subtract.clear();
                std::istringstream vals(value);
                std::string tok;
                while (std::getline(vals, tok, ','))
                    cfg.mean_subtract.push_back(static_cast<float>(
                        detail::parse_real(key, detail::trim(tok))));
            } else {
                throw std::runtime_error("unknown key '" + key + "'");
            }
        } catch (const std::exception& e) {
            throw std::runtime_error(source + ":" + std::to_string(lineno) +
                                     ": " + e.what());
        }
    }
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    PipelineConfig cfg;
    apply_config_text(cfg, read_file(path), path.string());
    return cfg;
}

}  // namespace fmf
