/**
 * @file triplet.hpp
 * @brief Calibration configuration and triplet-set construction.
 *
 * A triplet set pairs one query image with its aligned reference (the
 * positive), one hard negative a fixed frame offset ahead of the positive,
 * and four soft negatives drawn at random from the rest of the reference
 * traverse. The fixed hard negative keeps calibration variance down; the
 * soft negatives are drawn once at build time so every greedy iteration
 * scores against the same sets.
 */
#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmf/rng.hpp"

namespace fmf {

struct TripletSet {
    int query = 0;                    // index into the query traverse
    int positive = 0;                 // index into the reference traverse
    int hard_negative = 0;            // positive + hard offset
    std::vector<int> soft_negatives;  // 4 distinct reference indices

    /// Hard negative first, then the four soft negatives. K = 5.
    std::vector<int> negatives() const {
        std::vector<int> out;
        out.reserve(5);
        out.push_back(hard_negative);
        out.insert(out.end(), soft_negatives.begin(), soft_negatives.end());
        return out;
    }
};

struct CalibrationConfig {
    std::string filter_layer;   // conv layer whose maps are zeroed
    std::string extract_layer;  // tap the descriptors are pooled from
    int batch_size = 4;
    double halt_fraction = 0.5;
    double consensus_threshold = 0.66;
    int tolerance = 3;     // ground-truth tolerance, frames
    int hard_offset = 0;   // 0 = derive as tolerance + 5
    int calib_spacing = 2; // frames between consecutive calibration queries
    std::uint32_t rng_seed = 0;

    int resolved_hard_offset() const {
        return hard_offset > 0 ? hard_offset : tolerance + 5;
    }

    /// Leading frames reserved for calibration queries; evaluation should
    /// start after this many frames.
    int calibration_prefix(int n_sets) const { return n_sets * calib_spacing; }

    void validate() const {
        if (halt_fraction <= 0.0)
            throw std::invalid_argument("halt_fraction must be positive");
        if (halt_fraction > 0.5)
            throw std::invalid_argument(
                "halt_fraction above 0.5 is refused: removing more than half "
                "of a layer's feature maps makes localization unstable");
        if (consensus_threshold <= 0.0 || consensus_threshold > 1.0)
            throw std::invalid_argument(
                "consensus_threshold must be in (0, 1]");
        if (batch_size < 1)
            throw std::invalid_argument("batch_size must be at least 1");
        if (tolerance < 0)
            throw std::invalid_argument("tolerance must be nonnegative");
        if (calib_spacing < 1)
            throw std::invalid_argument("calib_spacing must be at least 1");
        if (resolved_hard_offset() <= tolerance)
            throw std::invalid_argument(
                "hard_offset must exceed the ground-truth tolerance");
    }
};

/// Builds n_sets triplet sets over an aligned pair of traverses of length
/// n_images. Queries are spaced calib_spacing frames apart from frame 0;
/// soft negatives are seeded by cfg.rng_seed and land outside the tolerance
/// window of the positive, distinct from each other and from the hard
/// negative.
inline std::vector<TripletSet> build_triplets(int n_images, int n_sets,
                                              const CalibrationConfig& cfg) {
    cfg.validate();
    if (n_sets < 1) throw std::invalid_argument("n_sets must be at least 1");
    const int offset = cfg.resolved_hard_offset();
    const int last_query = (n_sets - 1) * cfg.calib_spacing;
    if (last_query + offset >= n_images)
        throw std::runtime_error(
            "dataset too small: " + std::to_string(n_images) +
            " frames cannot host " + std::to_string(n_sets) +
            " calibration sets with hard offset " + std::to_string(offset));

    std::mt19937 rng(cfg.rng_seed);
    std::vector<TripletSet> sets;
    sets.reserve(n_sets);
    for (int s = 0; s < n_sets; ++s) {
        TripletSet t;
        t.query = s * cfg.calib_spacing;
        t.positive = t.query;
        t.hard_negative = t.positive + offset;

        // candidates outside the tolerance window, excluding the hard negative
        int available = 0;
        for (int i = 0; i < n_images; ++i)
            if ((i < t.positive - cfg.tolerance ||
                 i > t.positive + cfg.tolerance) &&
                i != t.hard_negative)
                ++available;
        if (available < 4)
            throw std::runtime_error(
                "dataset too small: fewer than 4 soft-negative candidates "
                "for calibration set " + std::to_string(s));

        while (static_cast<int>(t.soft_negatives.size()) < 4) {
            const int cand = static_cast<int>(
                bounded_uint(rng, static_cast<std::uint32_t>(n_images)));
            if (cand >= t.positive - cfg.tolerance &&
                cand <= t.positive + cfg.tolerance)
                continue;
            if (cand == t.hard_negative) continue;
            bool dup = false;
            for (int existing : t.soft_negatives) dup |= (existing == cand);
            if (dup) continue;
            t.soft_negatives.push_back(cand);
        }
        sets.push_back(std::move(t));
    }
    return sets;
}

}  // namespace fmf
