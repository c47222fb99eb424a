/**
 * @file recognize.hpp
 * @brief Single-frame place recognition and evaluation: score normalization,
 *        log amplification, quality-score ratio, PR sweep, max F1 and
 *        activation heatmaps.
 *
 * Matching uses the cosine distance (calibration trains on L2; recognition
 * with cosine performs better). Per query, the distance vector is mapped
 * affinely onto [0.001, 0.999] with 0.999 at the best match, then passed
 * through ln() to amplify the gap between the best match and perceptually
 * aliased runners-up.
 *
 * The quality score follows the SeqSLAM ratio idea on this inverted scale:
 * q = ln(s_runnerup) / ln(s_best), where the runner-up is the best score
 * outside a window around the best match. Both logs are negative and the
 * runner-up's is more negative, so q >= 1 and larger means a more
 * distinctive match.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmf/descriptor.hpp"
#include "fmf/fileio.hpp"
#include "fmf/tensor.hpp"

namespace fmf {

/// Log scores for one query against every reference, or nullopt for the
/// degenerate case where all distances are equal (no ranking information;
/// such a query is counted as a failure at every threshold).
inline std::optional<std::vector<double>> score_vector(
    const Descriptor& query, const std::vector<Descriptor>& refs) {
    if (refs.size() < 2)
        throw std::invalid_argument("score_vector needs at least 2 references");
    std::vector<double> dist(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i)
        dist[i] = cosine_distance(query, refs[i]);
    const double dmin = *std::min_element(dist.begin(), dist.end());
    const double dmax = *std::max_element(dist.begin(), dist.end());
    if (dmax == dmin) return std::nullopt;

    std::vector<double> scores(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const double s = 0.001 + 0.998 * (dmax - dist[i]) / (dmax - dmin);
        scores[i] = std::log(s);
    }
    return scores;
}

/// Ratio of the runner-up log score (best score outside the window around
/// `best`) to the best log score. Throws if the window covers every
/// reference.
inline double quality(const std::vector<double>& log_scores, int best,
                      int window_halfwidth) {
    if (best < 0 || best >= static_cast<int>(log_scores.size()))
        throw std::invalid_argument("best index out of range");
    int runner = -1;
    for (int i = 0; i < static_cast<int>(log_scores.size()); ++i) {
        if (std::abs(i - best) <= window_halfwidth) continue;
        if (runner < 0 || log_scores[i] > log_scores[runner]) runner = i;
    }
    if (runner < 0)
        throw std::runtime_error(
            "quality window covers all references (window halfwidth " +
            std::to_string(window_halfwidth) + ", " +
            std::to_string(log_scores.size()) + " references)");
    return log_scores[runner] / log_scores[best];
}

struct MatchReport {
    int query = 0;
    int best_reference = 0;
    double quality = 0.0;  // >= 1 unless degenerate
    bool correct = false;
    bool degenerate = false;  // all distances equal; never accepted
};

struct PrRow {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct PrCurve {
    std::vector<PrRow> rows;
    double max_f1 = 0.0;
};

struct EvaluationResult {
    std::vector<MatchReport> reports;
    PrCurve curve;
};

/// Index-aligned evaluation: query i's ground-truth match is reference i,
/// correct within +-gt_tolerance frames. The PR sweep visits every distinct
/// observed quality value as a threshold; a query is accepted when its
/// quality is >= the threshold. Empty acceptance sets define precision = 1.
inline EvaluationResult evaluate(const std::vector<Descriptor>& query_descs,
                                 const std::vector<Descriptor>& ref_descs,
                                 int gt_tolerance, int window_halfwidth) {
    if (query_descs.size() != ref_descs.size())
        throw std::invalid_argument(
            "traverse length mismatch: " +
            std::to_string(query_descs.size()) + " queries vs " +
            std::to_string(ref_descs.size()) + " references");
    const int n = static_cast<int>(ref_descs.size());
    if (n < 2)
        throw std::invalid_argument("evaluation needs at least 2 frames");
    if (n <= 2 * window_halfwidth + 1)
        throw std::invalid_argument(
            "quality window halfwidth " + std::to_string(window_halfwidth) +
            " covers all " + std::to_string(n) + " references");
    if (gt_tolerance < 0)
        throw std::invalid_argument("tolerance must be nonnegative");

    EvaluationResult result;
    result.reports.reserve(query_descs.size());
    for (int qi = 0; qi < n; ++qi) {
        MatchReport report;
        report.query = qi;
        const auto scores = score_vector(query_descs[qi], ref_descs);
        if (!scores) {
            report.degenerate = true;
            result.reports.push_back(report);
            continue;
        }
        int best = 0;
        for (int i = 1; i < n; ++i)
            if ((*scores)[i] > (*scores)[best]) best = i;
        report.best_reference = best;
        report.correct = std::abs(best - qi) <= gt_tolerance;
        report.quality = quality(*scores, best, window_halfwidth);
        result.reports.push_back(report);
    }

    // threshold sweep over the distinct observed quality values
    std::vector<double> thresholds;
    for (const auto& r : result.reports)
        if (!r.degenerate) thresholds.push_back(r.quality);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                     thresholds.end());

    const double total = static_cast<double>(result.reports.size());
    for (double t : thresholds) {
        int accepted = 0, correct_accepted = 0;
        for (const auto& r : result.reports) {
            if (r.degenerate || r.quality < t) continue;
            ++accepted;
            if (r.correct) ++correct_accepted;
        }
        PrRow row;
        row.threshold = t;
        row.precision = accepted == 0
                            ? 1.0
                            : static_cast<double>(correct_accepted) / accepted;
        row.recall = static_cast<double>(correct_accepted) / total;
        row.f1 = (row.precision + row.recall) == 0.0
                     ? 0.0
                     : 2.0 * row.precision * row.recall /
                           (row.precision + row.recall);
        result.curve.rows.push_back(row);
        result.curve.max_f1 = std::max(result.curve.max_f1, row.f1);
    }
    return result;
}

// --- activation heatmap ---------------------------------------------------

/// Spatial occupancy grid of per-channel argmax coordinates.
struct HeatmapGrid {
    int width = 0;
    int height = 0;
    std::vector<int> counts;  // row-major, y * width + x

    int at(int y, int x) const { return counts[y * width + x]; }
};

/// For each channel, the spatial argmax (ties: lowest row, then column)
/// increments one grid cell.
inline HeatmapGrid activation_heatmap(const Tensor& t) {
    HeatmapGrid grid;
    grid.width = t.width;
    grid.height = t.height;
    grid.counts.assign(static_cast<std::size_t>(t.width) * t.height, 0);
    for (int c = 0; c < t.channels; ++c) {
        int by = 0, bx = 0;
        float bv = t.at(c, 0, 0);
        for (int y = 0; y < t.height; ++y)
            for (int x = 0; x < t.width; ++x)
                if (t.at(c, y, x) > bv) {
                    bv = t.at(c, y, x);
                    by = y;
                    bx = x;
                }
        ++grid.counts[by * grid.width + bx];
    }
    return grid;
}

// --- serialization --------------------------------------------------------

inline std::string pr_curve_to_csv(const PrCurve& curve) {
    std::ostringstream out;
    out << "threshold,precision,recall,f1\n";
    for (const auto& row : curve.rows)
        out << format_double(row.threshold) << ","
            << format_double(row.precision) << "," << format_double(row.recall)
            << "," << format_double(row.f1) << "\n";
    return out.str();
}

inline void save_pr_csv(const PrCurve& curve,
                        const std::filesystem::path& path) {
    atomic_write_file(path, pr_curve_to_csv(curve));
}

inline std::string match_reports_to_csv(
    const std::vector<MatchReport>& reports) {
    std::ostringstream out;
    out << "query,best_reference,quality,correct,degenerate\n";
    for (const auto& r : reports)
        out << r.query << "," << r.best_reference << ","
            << format_double(r.quality) << "," << (r.correct ? 1 : 0) << ","
            << (r.degenerate ? 1 : 0) << "\n";
    return out.str();
}

inline void save_match_csv(const std::vector<MatchReport>& reports,
                           const std::filesystem::path& path) {
    atomic_write_file(path, match_reports_to_csv(reports));
}

/// Plain PGM (P2), one sample per grid cell, maxval = largest count.
inline std::string heatmap_to_pgm(const HeatmapGrid& grid) {
    int maxval = 1;
    for (int v : grid.counts) maxval = std::max(maxval, v);
    std::ostringstream out;
    out << "P2\n" << grid.width << " " << grid.height << "\n" << maxval
        << "\n";
    for (int y = 0; y < grid.height; ++y) {
        for (int x = 0; x < grid.width; ++x) {
            if (x) out << " ";
            out << grid.at(y, x);
        }
        out << "\n";
    }
    return out.str();
}

inline std::string heatmap_to_csv(const HeatmapGrid& grid) {
    std::ostringstream out;
    for (int y = 0; y < grid.height; ++y) {
        for (int x = 0; x < grid.width; ++x) {
            if (x) out << ",";
            out << grid.at(y, x);
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace fmf
