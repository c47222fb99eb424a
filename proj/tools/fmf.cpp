// Command-line front end: calibrate -> filter -> evaluate -> report, plus
// benchmark generation, activation heatmaps, and the random-filter control.
// All file outputs are written atomically; identical flags and seeds yield
// byte-identical files.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fmf/fmf.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string net_path;
    std::string ref_dir;
    std::string query_dir;
    std::string mask_path;
    std::string config_path;
    std::string out_dir = ".";
    // flag-provided overrides; only applied when the user passed them
    std::optional<std::string> filter_layer;
    std::optional<std::string> extract_layer;
    std::optional<int> calib_count;
    std::optional<int> tolerance;
    std::optional<int> window;
    std::optional<unsigned> seed;
};

void add_config_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path,
                    "key=value config file (flags override it)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--filter-layer", args.filter_layer,
                    "conv layer whose maps are filtered");
    cmd->add_option("--extract-layer", args.extract_layer,
                    "layer the descriptors are pooled from");
    cmd->add_option("--calib-count", args.calib_count,
                    "number of calibration sets");
    cmd->add_option("--tolerance", args.tolerance,
                    "ground-truth tolerance in frames");
    cmd->add_option("--window", args.window,
                    "quality-score window halfwidth in frames");
    cmd->add_option("--seed", args.seed, "RNG seed");
}

fmf::PipelineConfig resolve_config(const CommonArgs& args) {
    fmf::PipelineConfig cfg;
    if (!args.config_path.empty()) cfg = fmf::load_config(args.config_path);
    if (args.filter_layer) cfg.filter_layer = *args.filter_layer;
    if (args.extract_layer) cfg.extract_layer = *args.extract_layer;
    if (args.calib_count) cfg.calib_count = *args.calib_count;
    if (args.tolerance) cfg.tolerance = *args.tolerance;
    if (args.window) cfg.window_halfwidth = *args.window;
    if (args.seed) cfg.seed = *args.seed;
    return cfg;
}

std::vector<fmf::Tensor> load_frames(const std::string& dir) {
    return fmf::load_traverse_images(fmf::load_traverse(dir));
}

int run_calibrate(const CommonArgs& args) {
    const fmf::PipelineConfig cfg = resolve_config(args);
    const fmf::NetworkSpec net = fmf::load_network(args.net_path);
    const auto ref = load_frames(args.ref_dir);
    const auto query = load_frames(args.query_dir);

    const fmf::CalibrationResult result =
        fmf::calibrate_pipeline(net, query, ref, cfg);

    const fs::path out(args.out_dir);
    fmf::save_mask(result.mask, out / "mask.txt");
    char name[32];
    for (std::size_t i = 0; i < result.traces.size(); ++i) {
        std::snprintf(name, sizeof(name), "trace_%03d.csv",
                      static_cast<int>(i));
        fmf::save_trace_csv(result.traces[i], out / name);
    }
    std::printf("mask=%s\n", (out / "mask.txt").string().c_str());
    std::printf("removed=%zu of %d maps in %s\n", result.mask.removed.size(),
                net.conv_channels(cfg.filter_layer),
                cfg.filter_layer.c_str());
    return 0;
}

int run_evaluate(const CommonArgs& args) {
    const fmf::PipelineConfig cfg = resolve_config(args);
    const fmf::NetworkSpec net = fmf::load_network(args.net_path);
    const auto ref = load_frames(args.ref_dir);
    const auto query = load_frames(args.query_dir);

    fmf::FilterMask mask;
    const fmf::FilterMask* mask_ptr = nullptr;
    if (!args.mask_path.empty()) {
        mask = fmf::load_mask(args.mask_path);
        mask_ptr = &mask;
    }

    const fmf::EvaluationResult result =
        fmf::evaluate_pipeline(net, query, ref, cfg, mask_ptr);
    const fs::path out(args.out_dir);
    fmf::save_pr_csv(result.curve, out / "pr.csv");
    fmf::save_match_csv(result.reports, out / "matches.csv");
    std::printf("max_f1=%s\n", fmf::format_double(result.curve.max_f1).c_str());
    return 0;
}

int run_sweep(const CommonArgs& args, std::vector<int>& counts) {
    fmf::PipelineConfig cfg = resolve_config(args);
    const fmf::NetworkSpec net = fmf::load_network(args.net_path);
    const auto ref = load_frames(args.ref_dir);
    const auto query = load_frames(args.query_dir);

    if (counts.empty()) counts.push_back(cfg.calib_count);
    const auto rows = fmf::sweep_pipeline(net, query, ref, cfg, counts);
    const fs::path out(args.out_dir);
    fmf::save_sweep_csv(rows, out / "sweep.csv");

    double best = 0.0;
    for (const auto& row : rows) best = std::max(best, row.max_f1);
    std::printf("rows=%zu\n", rows.size());
    std::printf("max_f1=%s\n", fmf::format_double(best).c_str());
    return 0;
}

int run_synth(const CommonArgs& args, fmf::SyntheticConfig& scfg) {
    if (args.seed) scfg.seed = *args.seed;
    const fmf::SyntheticData data = fmf::generate_synthetic(scfg);
    fmf::save_synthetic(data, args.out_dir);
    std::printf("frames=%d delta_ratio=%s out=%s\n",
                static_cast<int>(data.reference.size()),
                fmf::format_double(data.delta_ratio).c_str(),
                args.out_dir.c_str());
    return 0;
}

int run_heatmap(const CommonArgs& args, const std::string& image_path) {
    const fmf::PipelineConfig cfg = resolve_config(args);
    if (cfg.extract_layer.empty())
        throw std::runtime_error("heatmap needs --extract-layer");
    const fmf::NetworkSpec net = fmf::load_network(args.net_path);
    const fmf::Tensor img =
        fmf::subtract_mean(fmf::load_image(image_path), cfg.mean_subtract);

    const fs::path out(args.out_dir);
    const fmf::Tensor plain = fmf::forward(net, img, cfg.extract_layer);
    const fmf::HeatmapGrid before = fmf::activation_heatmap(plain);
    fmf::atomic_write_file(out / "heatmap_unfiltered.pgm",
                           fmf::heatmap_to_pgm(before));
    fmf::atomic_write_file(out / "heatmap_unfiltered.csv",
                           fmf::heatmap_to_csv(before));

    if (!args.mask_path.empty()) {
        const fmf::FilterMask mask = fmf::load_mask(args.mask_path);
        const fmf::Tensor masked =
            fmf::forward(net, img, cfg.extract_layer, &mask);
        const fmf::HeatmapGrid after = fmf::activation_heatmap(masked);
        fmf::atomic_write_file(out / "heatmap_filtered.pgm",
                               fmf::heatmap_to_pgm(after));
        fmf::atomic_write_file(out / "heatmap_filtered.csv",
                               fmf::heatmap_to_csv(after));
    }
    std::printf("heatmaps=%s\n", args.out_dir.c_str());
    return 0;
}

int run_randfilter(const CommonArgs& args, int count) {
    const fmf::PipelineConfig cfg = resolve_config(args);
    if (cfg.filter_layer.empty())
        throw std::runtime_error("randfilter needs --filter-layer");
    const fmf::NetworkSpec net = fmf::load_network(args.net_path);
    const fmf::FilterMask mask =
        fmf::random_filter(net, cfg.filter_layer, count, cfg.seed);
    const fs::path out(args.out_dir);
    fmf::save_mask(mask, out / "random_mask.txt");
    std::printf("mask=%s\n", (out / "random_mask.txt").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Feature-map filtering for place recognition: calibrate a filter "
        "mask from a handful of aligned image pairs, then match with "
        "pyramid-pooled CNN descriptors."};
    app.require_subcommand(1);

    CommonArgs args;
    fmf::SyntheticConfig scfg;
    std::vector<int> sweep_counts;
    std::string heatmap_image;
    int rand_count = 0;

    auto* calibrate = app.add_subcommand(
        "calibrate", "derive a consensus filter mask from triplets");
    calibrate->add_option("--net", args.net_path, "network weights file")
        ->required()->check(CLI::ExistingFile);
    calibrate->add_option("--ref", args.ref_dir, "reference traverse dir")
        ->required();
    calibrate->add_option("--query", args.query_dir, "query traverse dir")
        ->required();
    calibrate->add_option("--out-dir", args.out_dir, "output directory");
    add_config_flags(calibrate, args);

    auto* evaluate = app.add_subcommand(
        "evaluate", "match query frames against references, report max F1");
    evaluate->add_option("--net", args.net_path, "network weights file")
        ->required()->check(CLI::ExistingFile);
    evaluate->add_option("--ref", args.ref_dir, "reference traverse dir")
        ->required();
    evaluate->add_option("--query", args.query_dir, "query traverse dir")
        ->required();
    evaluate->add_option("--mask", args.mask_path, "filter mask file")
        ->check(CLI::ExistingFile);
    evaluate->add_option("--out-dir", args.out_dir, "output directory");
    add_config_flags(evaluate, args);

    auto* sweep = app.add_subcommand(
        "sweep", "calibrate and evaluate every filter/extract layer pair");
    sweep->add_option("--net", args.net_path, "network weights file")
        ->required()->check(CLI::ExistingFile);
    sweep->add_option("--ref", args.ref_dir, "reference traverse dir")
        ->required();
    sweep->add_option("--query", args.query_dir, "query traverse dir")
        ->required();
    sweep->add_option("--counts", sweep_counts,
                      "calibration-set counts to sweep (default: config)");
    sweep->add_option("--out-dir", args.out_dir, "output directory");
    add_config_flags(sweep, args);

    auto* synth = app.add_subcommand(
        "synth", "generate the synthetic condition-shift benchmark");
    synth->add_option("--out-dir", args.out_dir, "output directory")
        ->required();
    synth->add_option("--seed", args.seed, "RNG seed");
    synth->add_option("--places", scfg.n_places, "number of places");
    synth->add_option("--size", scfg.image_size, "image side length");
    synth->add_option("--noise", scfg.noise_amplitude,
                      "query-condition stripe amplitude");
    synth->add_option("--brightness", scfg.brightness_shift,
                      "query-condition brightness shift");

    auto* heatmap = app.add_subcommand(
        "heatmap", "per-channel argmax occupancy before/after filtering");
    heatmap->add_option("--net", args.net_path, "network weights file")
        ->required()->check(CLI::ExistingFile);
    heatmap->add_option("--image", heatmap_image, "input image (PGM/PPM)")
        ->required()->check(CLI::ExistingFile);
    heatmap->add_option("--mask", args.mask_path,
                        "filter mask file (adds filtered heatmaps)")
        ->check(CLI::ExistingFile);
    heatmap->add_option("--out-dir", args.out_dir, "output directory");
    add_config_flags(heatmap, args);

    auto* randfilter = app.add_subcommand(
        "randfilter", "write a uniformly random mask (control arm)");
    randfilter->add_option("--net", args.net_path, "network weights file")
        ->required()->check(CLI::ExistingFile);
    randfilter->add_option("--count", rand_count, "maps to remove")
        ->required();
    randfilter->add_option("--out-dir", args.out_dir, "output directory");
    add_config_flags(randfilter, args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (calibrate->parsed()) return run_calibrate(args);
        if (evaluate->parsed()) return run_evaluate(args);
        if (sweep->parsed()) return run_sweep(args, sweep_counts);
        if (synth->parsed()) return run_synth(args, scfg);
        if (heatmap->parsed()) return run_heatmap(args, heatmap_image);
        if (randfilter->parsed()) return run_randfilter(args, rand_count);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
