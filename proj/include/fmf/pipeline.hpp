/**
 * @file pipeline.hpp
 * @brief End-to-end runs: descriptor extraction over a traverse, consensus
 *        calibration, evaluation against index-aligned ground truth, and
 *        the filter-layer x extract-layer sweep.
 *
 * Calibration images come from a held-out prefix of the traverses; by
 * default evaluation drops that prefix from both sides so no calibration
 * frame appears in the test set.
 */
#pragma once

#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmf/calibrate.hpp"
#include "fmf/config.hpp"
#include "fmf/descriptor.hpp"
#include "fmf/network.hpp"
#include "fmf/recognize.hpp"

namespace fmf {

/// Optional per-channel input normalization. One value applies to every
/// channel; otherwise the count must match the image's channels.
inline Tensor subtract_mean(const Tensor& img,
                            const std::vector<float>& means) {
    if (means.empty()) return img;
    if (means.size() != 1 &&
        static_cast<int>(means.size()) != img.channels)
        throw std::invalid_argument(
            "mean_subtract needs 1 value or one per channel (" +
            std::to_string(img.channels) + "), got " +
            std::to_string(means.size()));
    Tensor out = img;
    for (int c = 0; c < img.channels; ++c) {
        const float m = means.size() == 1 ? means[0] : means[c];
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) out.at(c, y, x) -= m;
    }
    return out;
}

/// Pyramid-pooled descriptors at `extract_layer` for every frame.
/// `mask` may be null (no filtering).
inline std::vector<Descriptor> extract_descriptors(
    const NetworkSpec& net, const std::vector<Tensor>& images,
    const std::string& extract_layer, const FilterMask* mask = nullptr,
    const std::vector<float>& mean_subtract = {}) {
    std::vector<Descriptor> descs;
    descs.reserve(images.size());
    for (const Tensor& img : images)
        descs.push_back(pyramid_pool(forward(
            net, subtract_mean(img, mean_subtract), extract_layer, mask)));
    return descs;
}

struct CalibrationResult {
    FilterMask mask;
    std::vector<CalibrationTrace> traces;  // one per calibration set
};

/// Builds cfg.calib_count triplet sets from the aligned traverses, runs the
/// greedy filtering per set, and aggregates the final masks by consensus.
inline CalibrationResult calibrate_pipeline(
    const NetworkSpec& net, const std::vector<Tensor>& query_images,
    const std::vector<Tensor>& ref_images, const PipelineConfig& cfg) {
    if (query_images.size() != ref_images.size())
        throw std::invalid_argument(
            "aligned traverses required: " +
            std::to_string(query_images.size()) + " query vs " +
            std::to_string(ref_images.size()) + " reference frames");
    if (cfg.filter_layer.empty() || cfg.extract_layer.empty())
        throw std::invalid_argument(
            "calibration needs filter_layer and extract_layer");

    const CalibrationConfig ccfg = cfg.calibration();
    const auto sets = build_triplets(static_cast<int>(ref_images.size()),
                                     cfg.calib_count, ccfg);
    CalibrationResult result;
    for (const TripletSet& set : sets) {
        const TripletTensors t =
            resolve_triplet(set, query_images, ref_images);
        TripletTensors prepared;
        prepared.query = subtract_mean(t.query, cfg.mean_subtract);
        prepared.positive = subtract_mean(t.positive, cfg.mean_subtract);
        for (const Tensor& n : t.negatives)
            prepared.negatives.push_back(subtract_mean(n, cfg.mean_subtract));
        result.traces.push_back(calibrate_image(net, prepared, ccfg));
    }
    result.mask = consensus_aggregate(result.traces, ccfg,
                                      net.conv_channels(cfg.filter_layer));
    return result;
}

/// Single-frame recognition of each query against all references, sliced
/// to frames [cfg.evaluation_start(), N) on both sides.
inline EvaluationResult evaluate_pipeline(
    const NetworkSpec& net, const std::vector<Tensor>& query_images,
    const std::vector<Tensor>& ref_images, const PipelineConfig& cfg,
    const FilterMask* mask = nullptr) {
    if (query_images.size() != ref_images.size())
        throw std::invalid_argument(
            "aligned traverses required: " +
            std::to_string(query_images.size()) + " query vs " +
            std::to_string(ref_images.size()) + " reference frames");
    if (cfg.extract_layer.empty())
        throw std::invalid_argument("evaluation needs extract_layer");
    const int start = cfg.evaluation_start();
    if (start >= static_cast<int>(ref_images.size()))
        throw std::invalid_argument(
            "calibration prefix " + std::to_string(start) +
            " leaves no evaluation frames");

    const std::vector<Tensor> q(query_images.begin() + start,
                                query_images.end());
    const std::vector<Tensor> r(ref_images.begin() + start,
                                ref_images.end());
    const auto query_descs =
        extract_descriptors(net, q, cfg.extract_layer, mask,
                            cfg.mean_subtract);
    const auto ref_descs =
        extract_descriptors(net, r, cfg.extract_layer, mask,
                            cfg.mean_subtract);
    return evaluate(query_descs, ref_descs, cfg.tolerance,
                    cfg.window_halfwidth);
}

// --- sweep -----------------------------------------------------------------

struct SweepRow {
    std::string filter_layer;
    std::string extract_layer;
    int calib_count = 0;
    double max_f1 = 0.0;
};

/// Calibrate-then-evaluate over every conv-layer pair (filter at or before
/// extract) crossed with each calibration count. Each pair/count appears
/// exactly once.
inline std::vector<SweepRow> sweep_pipeline(
    const NetworkSpec& net, const std::vector<Tensor>& query_images,
    const std::vector<Tensor>& ref_images, const PipelineConfig& base_cfg,
    const std::vector<int>& calib_counts) {
    if (calib_counts.empty())
        throw std::invalid_argument("sweep needs at least one count");
    std::vector<std::string> convs;
    for (const LayerSpec& layer : net.layers)
        if (layer.is_conv()) convs.push_back(layer.name);
    if (convs.empty())
        throw std::invalid_argument("network has no conv layers to sweep");

    std::vector<SweepRow> rows;
    for (std::size_t fi = 0; fi < convs.size(); ++fi)
        for (std::size_t ei = fi; ei < convs.size(); ++ei)
            for (int count : calib_counts) {
                PipelineConfig cfg = base_cfg;
                cfg.filter_layer = convs[fi];
                cfg.extract_layer = convs[ei];
                cfg.calib_count = count;
                const CalibrationResult calib =
                    calibrate_pipeline(net, query_images, ref_images, cfg);
                const EvaluationResult eval = evaluate_pipeline(
                    net, query_images, ref_images, cfg, &calib.mask);
                rows.push_back({convs[fi], convs[ei], count,
                                eval.curve.max_f1});
            }
    return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "filter_layer,extract_layer,calib_count,max_f1\n";
    for (const SweepRow& row : rows)
        out << row.filter_layer << "," << row.extract_layer << ","
            << row.calib_count << "," << format_double(row.max_f1) << "\n";
    return out.str();
}

inline void save_sweep_csv(const std::vector<SweepRow>& rows,
                           const std::filesystem::path& path) {
    atomic_write_file(path, sweep_to_csv(rows));
}

}  // namespace fmf
