/**
 * @file calibrate.hpp
 * @brief Greedy batch feature-map filtering with global-best search, and the
 *        consensus aggregation across calibration images.
 *
 * The per-image procedure: score every remaining feature map j of the filter
 * layer by the triplet margin obtained when j is removed on top of the
 * current mask, take the `batch_size` highest-scoring maps in one sweep,
 * accumulate them, and repeat until floor(C * halt_fraction) maps are gone.
 * Every iteration's accumulated mask and margin are recorded; the per-image
 * result is the mask at the iteration with the best margin, which includes
 * the unfiltered baseline at iteration 0, so calibration can return "no
 * filtering" when filtering never helps.
 *
 * The margin, for query q, reference r and negatives n_1..n_K (K = 5):
 *
 *     D = (sum_k L2(r, n_k)) / K  -  L2(q, r)
 *
 * on pyramid-pooled descriptors from the extract layer. Larger is better.
 * Negative distances pair the reference with the negatives, not the query.
 *
 * All candidate evaluations resume from per-image cached activations at the
 * filter layer; cache equivalence is exact, so results are bit-identical to
 * full forward passes.
 */
#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmf/descriptor.hpp"
#include "fmf/fileio.hpp"
#include "fmf/network.hpp"
#include "fmf/rng.hpp"
#include "fmf/triplet.hpp"

namespace fmf {

/// The seven images of one calibration set, resolved to tensors.
/// negatives[0] is the hard negative.
struct TripletTensors {
    Tensor query;
    Tensor positive;
    std::vector<Tensor> negatives;
};

inline TripletTensors resolve_triplet(const TripletSet& set,
                                      const std::vector<Tensor>& query_images,
                                      const std::vector<Tensor>& ref_images) {
    TripletTensors t;
    t.query = query_images.at(set.query);
    t.positive = ref_images.at(set.positive);
    for (int idx : set.negatives()) t.negatives.push_back(ref_images.at(idx));
    return t;
}

/// Unmasked activations of the seven triplet images at the filter layer;
/// computed once per calibration image and reused for every candidate mask.
struct TripletActivations {
    Tensor query;
    Tensor positive;
    std::vector<Tensor> negatives;
};

inline TripletActivations cache_triplet_activations(
    const NetworkSpec& net, const TripletTensors& t,
    const CalibrationConfig& cfg) {
    TripletActivations a;
    a.query = forward(net, t.query, cfg.filter_layer);
    a.positive = forward(net, t.positive, cfg.filter_layer);
    a.negatives.reserve(t.negatives.size());
    for (const Tensor& n : t.negatives)
        a.negatives.push_back(forward(net, n, cfg.filter_layer));
    return a;
}

namespace detail {

inline double margin_from_cache(const NetworkSpec& net,
                                const FilterMask& mask,
                                const TripletActivations& cache,
                                const CalibrationConfig& cfg) {
    const auto extract = [&](const Tensor& cached) {
        return pyramid_pool(forward_cached(net, cached, cfg.filter_layer,
                                           cfg.extract_layer, mask));
    };
    const Descriptor q = extract(cache.query);
    const Descriptor r = extract(cache.positive);
    double negative_sum = 0.0;
    for (const Tensor& n : cache.negatives)
        negative_sum += l2_distance(r, extract(n));
    return negative_sum / static_cast<double>(cache.negatives.size()) -
           l2_distance(q, r);
}

}  // namespace detail

/// Triplet margin for one mask. Descriptors are pooled at cfg.extract_layer
/// after zeroing mask channels at cfg.filter_layer.
inline double triplet_margin(const NetworkSpec& net, const FilterMask& mask,
                             const TripletTensors& t,
                             const CalibrationConfig& cfg) {
    const TripletActivations cache = cache_triplet_activations(net, t, cfg);
    return detail::margin_from_cache(net, mask, cache, cfg);
}

/// One greedy sweep: margins D(j) for every remaining map j evaluated as
/// current ∪ {j}, then the top `batch` indices by repeated argmax without
/// re-running the network. Ties break toward the lowest map index.
inline std::vector<int> greedy_batch_step_cached(
    const NetworkSpec& net, const FilterMask& current,
    const TripletActivations& cache, const CalibrationConfig& cfg,
    int batch) {
    const int channels = net.conv_channels(cfg.filter_layer);
    std::vector<int> remaining;
    for (int j = 0; j < channels; ++j)
        if (!current.removed.count(j)) remaining.push_back(j);
    if (batch < 1 || batch > static_cast<int>(remaining.size()))
        throw std::invalid_argument("greedy batch larger than remaining maps");

    std::vector<std::pair<double, int>> scored;  // (margin, map index)
    scored.reserve(remaining.size());
    for (int j : remaining) {
        FilterMask candidate = current;
        candidate.layer = cfg.filter_layer;
        candidate.removed.insert(j);
        scored.emplace_back(detail::margin_from_cache(net, candidate, cache,
                                                      cfg),
                            j);
    }
    // descending margin, ascending index on ties
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<int> picked;
    picked.reserve(batch);
    for (int i = 0; i < batch; ++i) picked.push_back(scored[i].second);
    return picked;
}

/// Convenience overload that builds the activation cache itself.
inline std::vector<int> greedy_batch_step(const NetworkSpec& net,
                                          const FilterMask& current,
                                          const TripletTensors& t,
                                          const CalibrationConfig& cfg,
                                          int batch) {
    return greedy_batch_step_cached(
        net, current, cache_triplet_activations(net, t, cfg), cfg, batch);
}

/// Per-iteration record: the accumulated removed set and its margin.
struct TraceRecord {
    std::vector<int> removed;  // ascending
    double margin = 0.0;
};

struct CalibrationTrace {
    std::string layer;
    std::vector<TraceRecord> records;  // records[0] is the empty baseline
    int best_iteration = 0;            // argmax of margin; earliest on ties

    const std::vector<int>& final_removed() const {
        return records[best_iteration].removed;
    }
};

/// Runs the full greedy filtering for one calibration image and returns the
/// trace. Halts once floor(C * halt_fraction) maps are removed; the last
/// batch is truncated to hit that count exactly.
inline CalibrationTrace calibrate_image(const NetworkSpec& net,
                                        const TripletTensors& t,
                                        const CalibrationConfig& cfg) {
    cfg.validate();
    const int channels = net.conv_channels(cfg.filter_layer);
    if (channels < 4)
        throw std::runtime_error(
            "filter layer '" + cfg.filter_layer + "' has " +
            std::to_string(channels) + " maps; at least 4 required");
    // floor(C * halt_fraction); epsilon guards products like 30 * 0.1
    const int halt = static_cast<int>(channels * cfg.halt_fraction + 1e-9);

    const TripletActivations cache = cache_triplet_activations(net, t, cfg);
    FilterMask mask{cfg.filter_layer, {}};

    CalibrationTrace trace;
    trace.layer = cfg.filter_layer;
    trace.records.push_back(
        {{}, detail::margin_from_cache(net, mask, cache, cfg)});

    while (static_cast<int>(mask.removed.size()) < halt) {
        const int batch = std::min(
            cfg.batch_size, halt - static_cast<int>(mask.removed.size()));
        const std::vector<int> picked =
            greedy_batch_step_cached(net, mask, cache, cfg, batch);
        for (int j : picked) mask.removed.insert(j);
        TraceRecord rec;
        rec.removed.assign(mask.removed.begin(), mask.removed.end());
        rec.margin = detail::margin_from_cache(net, mask, cache, cfg);
        trace.records.push_back(std::move(rec));
    }

    trace.best_iteration = 0;
    for (std::size_t i = 1; i < trace.records.size(); ++i)
        if (trace.records[i].margin >
            trace.records[trace.best_iteration].margin)
            trace.best_iteration = static_cast<int>(i);
    return trace;
}

/// Maps removed in at least `consensus_threshold` of the traces' final
/// sets. If thresholding ever admits more than floor(C * halt_fraction)
/// maps (possible when per-image sets disagree widely), the highest-count
/// maps are kept up to that bound so the mask stays usable by the engine.
inline FilterMask consensus_aggregate(
    const std::vector<CalibrationTrace>& traces,
    const CalibrationConfig& cfg, int channels) {
    if (traces.empty())
        throw std::invalid_argument("consensus requires at least one trace");
    std::map<int, int> counts;
    for (const auto& trace : traces)
        for (int j : trace.final_removed()) ++counts[j];

    const double n = static_cast<double>(traces.size());
    std::vector<std::pair<int, int>> admitted;  // (count, index)
    for (const auto& [j, count] : counts)
        if (static_cast<double>(count) / n >= cfg.consensus_threshold)
            admitted.emplace_back(count, j);

    const int cap = static_cast<int>(channels * cfg.halt_fraction + 1e-9);
    if (static_cast<int>(admitted.size()) > cap) {
        std::sort(admitted.begin(), admitted.end(),
                  [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                  });
        admitted.resize(cap);
    }

    FilterMask mask{cfg.filter_layer, {}};
    for (const auto& [count, j] : admitted) mask.removed.insert(j);
    return mask;
}

/// Uniformly random mask of `count` maps; the control arm.
inline FilterMask random_filter(const NetworkSpec& net,
                                const std::string& layer, int count,
                                std::uint32_t seed) {
    const int channels = net.conv_channels(layer);
    if (count < 0 || count > channels / 2)
        throw std::invalid_argument(
            "random filter count " + std::to_string(count) +
            " exceeds half of the " + std::to_string(channels) + " maps in '" +
            layer + "'");
    FilterMask mask{layer, {}};
    if (count == 0) return mask;
    std::mt19937 rng(seed);
    for (int j : sample_without_replacement(rng, channels, count))
        mask.removed.insert(j);
    return mask;
}

// --- serialization -------------------------------------------------------

/// Mask text format: "layer=<tap>" then one line of comma-separated indices
/// (empty line for an empty mask).
inline std::string mask_to_text(const FilterMask& mask) {
    std::ostringstream out;
    out << "layer=" << mask.layer << "\n";
    bool first = true;
    for (int j : mask.removed) {
        if (!first) out << ",";
        out << j;
        first = false;
    }
    out << "\n";
    return out.str();
}

inline FilterMask mask_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("layer=", 0) != 0)
        throw std::runtime_error("mask file must start with 'layer=<tap>'");
    FilterMask mask;
    mask.layer = line.substr(6);
    if (mask.layer.empty())
        throw std::runtime_error("mask file names no layer");
    if (!std::getline(in, line)) return mask;  // no index line: empty mask
    std::istringstream indices(line);
    std::string token;
    while (std::getline(indices, token, ',')) {
        if (token.empty()) continue;
        std::size_t used = 0;
        int j = 0;
        try {
            j = std::stoi(token, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != token.size())
            throw std::runtime_error("bad mask index '" + token + "'");
        mask.removed.insert(j);
    }
    return mask;
}

inline void save_mask(const FilterMask& mask,
                      const std::filesystem::path& path) {
    atomic_write_file(path, mask_to_text(mask));
}

inline FilterMask load_mask(const std::filesystem::path& path) {
    return mask_from_text(read_file(path));
}

/// Audit CSV: iteration, removed_count, margin.
inline std::string trace_to_csv(const CalibrationTrace& trace) {
    std::ostringstream out;
    out << "iteration,removed_count,margin\n";
    for (std::size_t i = 0; i < trace.records.size(); ++i)
        out << i << "," << trace.records[i].removed.size() << ","
            << format_double(trace.records[i].margin) << "\n";
    return out.str();
}

inline void save_trace_csv(const CalibrationTrace& trace,
                           const std::filesystem::path& path) {
    atomic_write_file(path, trace_to_csv(trace));
}

}  // namespace fmf
