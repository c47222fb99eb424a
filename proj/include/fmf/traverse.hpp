/**
 * @file traverse.hpp
 * @brief Ordered image sequences (one pass through an environment under one
 *        condition) loaded from a directory or a manifest file.
 *
 * Ground truth between two traverses is frame-index alignment: query i
 * depicts the same place as reference i. Directory loading requires the
 * file names to carry a dense run of frame indices so an accidentally
 * missing frame cannot silently shift the alignment.
 */
#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmf/fileio.hpp"
#include "fmf/image_io.hpp"
#include "fmf/tensor.hpp"

namespace fmf {

struct Traverse {
    std::string label;
    std::vector<std::filesystem::path> paths;

    int size() const { return static_cast<int>(paths.size()); }
};

namespace detail {

/// Trailing digit run of a file stem, or -1 when there is none.
inline long long trailing_index(const std::string& stem) {
    std::size_t end = stem.size();
    std::size_t begin = end;
    while (begin > 0 &&
           std::isdigit(static_cast<unsigned char>(stem[begin - 1])))
        --begin;
    if (begin == end) return -1;
    // cap digits to avoid overflow on absurd names
    if (end - begin > 12) return -1;
    return std::stoll(stem.substr(begin, end - begin));
}

inline bool image_extension(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

}  // namespace detail

/// Loads the ordered frame list of a traverse. With a manifest, order is
/// the manifest's line order (paths relative to the manifest's directory).
/// Without one, the directory is scanned for PGM/PPM files whose names end
/// in a frame index; indices must form a dense consecutive run.
inline Traverse load_traverse(const std::filesystem::path& dir,
                              const std::filesystem::path& manifest = {}) {
    namespace fs = std::filesystem;
    Traverse t;
    t.label = dir.filename().string();
    if (t.label.empty()) t.label = dir.parent_path().filename().string();

    if (!manifest.empty()) {
        const std::string text = read_file(manifest);
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const std::size_t start = line.find_first_not_of(" \t");
            if (start == std::string::npos || line[start] == '#') continue;
            const std::size_t stop = line.find_last_not_of(" \t");
            fs::path p = line.substr(start, stop - start + 1);
            if (p.is_relative()) p = manifest.parent_path() / p;
            t.paths.push_back(p);
        }
        if (t.paths.empty())
            throw std::runtime_error("manifest lists no frames: " +
                                     manifest.string());
        return t;
    }

    if (!fs::is_directory(dir))
        throw std::runtime_error("not a directory: " + dir.string());

    std::vector<std::pair<long long, fs::path>> frames;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path& p = entry.path();
        if (!detail::image_extension(p)) continue;
        const long long idx = detail::trailing_index(p.stem().string());
        if (idx < 0)
            throw std::runtime_error("image name carries no frame index: " +
                                     p.string());
        frames.emplace_back(idx, p);
    }
    if (frames.empty())
        throw std::runtime_error("no PGM/PPM frames in " + dir.string());
    std::sort(frames.begin(), frames.end());
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].first == frames[i - 1].first)
            throw std::runtime_error("duplicate frame index " +
                                     std::to_string(frames[i].first) +
                                     " in " + dir.string());
        if (frames[i].first != frames[i - 1].first + 1)
            throw std::runtime_error(
                "frame index gap between " +
                std::to_string(frames[i - 1].first) + " and " +
                std::to_string(frames[i].first) + " in " + dir.string());
    }
    t.paths.reserve(frames.size());
    for (auto& [idx, p] : frames) t.paths.push_back(std::move(p));
    return t;
}

/// Decodes every frame. All frames must share one shape; mismatches name
/// the offending file.
inline std::vector<Tensor> load_traverse_images(const Traverse& t) {
    std::vector<Tensor> images;
    images.reserve(t.paths.size());
    for (const auto& p : t.paths) {
        images.push_back(load_image(p));
        if (images.size() > 1 && !images.front().same_shape(images.back()))
            throw std::runtime_error(
                "frame shape mismatch: " + p.string() + " is " +
                shape_string(images.back()) + ", expected " +
                shape_string(images.front()));
    }
    return images;
}

}  // namespace fmf
