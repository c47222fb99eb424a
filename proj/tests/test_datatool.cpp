#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"

using namespace fmf;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

/// Unique scratch directory, removed on scope exit.
struct TempDir {
    fs::path path;

    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("fmf_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

void write_raw(const fs::path& p, const std::string& bytes) {
    atomic_write_file(p, bytes);
}

}  // namespace

// --- image I/O --------------------------------------------------------------

TEST_CASE("binary pgm round trip equals the quantized original") {
    std::mt19937 rng(800);
    TempDir tmp;
    Tensor img = random_tensor(rng, 9, 7, 1, -0.3, 1.3);  // clamps both ends
    const fs::path p = tmp.path / "gray.pgm";
    save_image(img, p);
    REQUIRE(bit_equal(load_image(p), quantize_image(img)));
}

TEST_CASE("binary ppm round trip equals the quantized original") {
    std::mt19937 rng(801);
    TempDir tmp;
    Tensor img = random_tensor(rng, 5, 4, 3, 0.0, 1.0);
    const fs::path p = tmp.path / "color.ppm";
    save_image(img, p);
    REQUIRE(bit_equal(load_image(p), quantize_image(img)));
}

TEST_CASE("saved pgm bytes are exactly the documented layout") {
    TempDir tmp;
    Tensor img(1, 2, 1);  // width 1, height 2
    img.at(0, 0, 0) = 0.0f;
    img.at(0, 1, 0) = 1.0f;
    const fs::path p = tmp.path / "tiny.pgm";
    save_image(img, p);
    std::string want = "P5\n1 2\n255\n";
    want.push_back('\0');
    want.push_back(static_cast<char>(255));
    REQUIRE(read_file(p) == want);
}

TEST_CASE("ascii pgm parses with comments and scales by maxval") {
    TempDir tmp;
    const fs::path p = tmp.path / "ascii.pgm";
    write_raw(p,
              "P2 # magic\n"
              "# a full-line comment\n"
              "3 1\n# dims done\n10\n"
              "0 5 10\n");
    const Tensor img = load_image(p);
    REQUIRE(img.width == 3);
    REQUIRE(img.height == 1);
    REQUIRE(img.channels == 1);
    const float scale = 1.0f / 10.0f;
    REQUIRE(img.at(0, 0, 0) == 0.0f);
    REQUIRE(img.at(0, 0, 1) == 5.0f * scale);
    REQUIRE(img.at(0, 0, 2) == 10.0f * scale);
}

TEST_CASE("ascii ppm parses into channel-major planes") {
    TempDir tmp;
    const fs::path p = tmp.path / "ascii.ppm";
    write_raw(p, "P3\n1 2\n255\n255 0 0\n0 255 0\n");
    const Tensor img = load_image(p);
    REQUIRE(img.channels == 3);
    const float one = 255.0f * (1.0f / 255.0f);
    REQUIRE(img.at(0, 0, 0) == one);  // red plane, first pixel
    REQUIRE(img.at(1, 0, 0) == 0.0f);
    REQUIRE(img.at(1, 1, 0) == one);  // green plane, second pixel
    REQUIRE(img.at(0, 1, 0) == 0.0f);
}

TEST_CASE("16-bit binary pgm reads big-endian sample pairs") {
    TempDir tmp;
    const fs::path p = tmp.path / "deep.pgm";
    std::string bytes = "P5\n3 1\n65535\n";
    const unsigned char raster[] = {0x00, 0x00, 0xFF, 0xFF, 0x01, 0x00};
    bytes.append(reinterpret_cast<const char*>(raster), sizeof(raster));
    write_raw(p, bytes);
    const Tensor img = load_image(p);
    const float scale = 1.0f / 65535.0f;
    REQUIRE(img.at(0, 0, 0) == 0.0f);
    REQUIRE(img.at(0, 0, 1) == 65535.0f * scale);
    REQUIRE(img.at(0, 0, 2) == 256.0f * scale);
}

TEST_CASE("image loading rejects malformed files") {
    TempDir tmp;
    const auto expect = [&](const std::string& name, const std::string& bytes,
                            const std::string& message) {
        const fs::path p = tmp.path / name;
        write_raw(p, bytes);
        REQUIRE_THROWS_WITH(load_image(p),
                            Catch::Matchers::ContainsSubstring(message));
    };
    expect("magic.pgm", "P7\n1 1\n255\n", "unsupported image format");
    expect("dims.pgm", "P2\n0 5\n255\n", "bad image dimensions");
    expect("maxzero.pgm", "P2\n1 1\n0\n0\n", "bad maxval");
    expect("maxbig.pgm", "P2\n1 1\n70000\n0\n", "bad maxval");
    expect("range.pgm", "P2\n1 1\n10\n11\n", "sample out of range");
    expect("negative.pgm", "P2\n1 1\n10\n-1\n", "sample out of range");
    expect("short_ascii.pgm", "P2\n2 1\n255\n7", "truncated image file");
    expect("short_binary.pgm", std::string("P5\n2 1\n255\n") + "\x01",
           "truncated raster");
    expect("separator.pgm", "P5\n1 1 255", "malformed raster separator");
    expect("nonnumeric.pgm", "P2\nx 1\n255\n0\n", "bad number");
    std::string deep = "P5\n1 1\n300\n";
    deep.push_back(static_cast<char>(0xFF));
    deep.push_back(static_cast<char>(0xFF));
    expect("over.pgm", deep, "sample exceeds maxval");
}

TEST_CASE("save_image only accepts 1- or 3-channel tensors") {
    TempDir tmp;
    REQUIRE_THROWS_AS(save_image(Tensor(2, 2, 2), tmp.path / "two.pgm"),
                      std::invalid_argument);
}

TEST_CASE("grayscale conversion uses luminance weights") {
    Tensor rgb(1, 1, 3);
    rgb.at(0, 0, 0) = 0.2f;
    rgb.at(1, 0, 0) = 0.4f;
    rgb.at(2, 0, 0) = 0.6f;
    const Tensor g = to_grayscale(rgb);
    REQUIRE(g.channels == 1);
    REQUIRE(g.at(0, 0, 0) == 0.299f * 0.2f + 0.587f * 0.4f + 0.114f * 0.6f);

    Tensor gray(2, 2, 1);
    gray.at(0, 1, 1) = 0.5f;
    REQUIRE(bit_equal(to_grayscale(gray), gray));
    REQUIRE_THROWS_AS(to_grayscale(Tensor(1, 1, 2)), std::invalid_argument);
}

// --- traverses ---------------------------------------------------------------

namespace {

void write_frame(const fs::path& p, float value, int size = 2) {
    Tensor img(size, size, 1);
    for (float& v : img.data) v = value;
    save_image(img, p);
}

}  // namespace

TEST_CASE("directory traverses sort by trailing frame index") {
    TempDir tmp;
    const fs::path dir = tmp.path / "run_a";
    fs::create_directories(dir);
    write_frame(dir / "img002.pgm", 0.2f);
    write_frame(dir / "img000.pgm", 0.0f);
    write_frame(dir / "img003.pgm", 0.3f);
    write_frame(dir / "img001.pgm", 0.1f);
    write_frame(dir / "IMG004.PGM", 0.4f);  // extension match ignores case
    write_raw(dir / "notes.txt", "not a frame\n");

    const Traverse t = load_traverse(dir);
    REQUIRE(t.label == "run_a");
    REQUIRE(t.size() == 5);
    const std::vector<Tensor> images = load_traverse_images(t);
    for (int i = 0; i < 5; ++i) {
        // frame i was written with fill value i / 10; order must follow the
        // index, not the creation or directory order
        Tensor fill(1, 1, 1);
        fill.data[0] = static_cast<float>(i) * 0.1f;
        REQUIRE(images[i].at(0, 0, 0) == quantize_image(fill).data[0]);
    }
}

TEST_CASE("directory traverse failure modes") {
    TempDir tmp;
    const fs::path gap = tmp.path / "gap";
    fs::create_directories(gap);
    write_frame(gap / "f0.pgm", 0.0f);
    write_frame(gap / "f1.pgm", 0.1f);
    write_frame(gap / "f3.pgm", 0.3f);
    REQUIRE_THROWS_WITH(load_traverse(gap),
                        Catch::Matchers::ContainsSubstring("frame index gap"));

    const fs::path dup = tmp.path / "dup";
    fs::create_directories(dup);
    write_frame(dup / "7.pgm", 0.0f);
    write_frame(dup / "007.pgm", 0.1f);
    REQUIRE_THROWS_WITH(load_traverse(dup), Catch::Matchers::ContainsSubstring(
                                                "duplicate frame index"));

    const fs::path noidx = tmp.path / "noidx";
    fs::create_directories(noidx);
    write_frame(noidx / "cover.pgm", 0.0f);
    REQUIRE_THROWS_WITH(load_traverse(noidx),
                        Catch::Matchers::ContainsSubstring(
                            "carries no frame index"));

    const fs::path empty = tmp.path / "empty";
    fs::create_directories(empty);
    write_raw(empty / "readme.md", "empty\n");
    REQUIRE_THROWS_WITH(load_traverse(empty),
                        Catch::Matchers::ContainsSubstring("no PGM/PPM"));

    REQUIRE_THROWS_WITH(load_traverse(tmp.path / "missing"),
                        Catch::Matchers::ContainsSubstring("not a directory"));
}

TEST_CASE("manifest traverses keep the listed order") {
    TempDir tmp;
    const fs::path dir = tmp.path / "walk";
    fs::create_directories(dir / "sub");
    write_frame(dir / "b.pgm", 0.1f);
    write_frame(dir / "a.pgm", 0.2f);
    write_frame(dir / "sub" / "c.pgm", 0.3f);
    write_raw(dir / "frames.txt",
              "b.pgm\n"
              "# comment line\n"
              "   a.pgm  \n"
              "\n"
              "sub/c.pgm\r\n");
    const Traverse t = load_traverse(dir, dir / "frames.txt");
    REQUIRE(t.label == "walk");
    REQUIRE(t.size() == 3);
    REQUIRE(t.paths[0].filename() == "b.pgm");
    REQUIRE(t.paths[1].filename() == "a.pgm");
    REQUIRE(t.paths[2] == dir / "sub" / "c.pgm");
    REQUIRE(load_traverse_images(t).size() == 3);

    write_raw(dir / "empty.txt", "# nothing\n");
    REQUIRE_THROWS_WITH(load_traverse(dir, dir / "empty.txt"),
                        Catch::Matchers::ContainsSubstring(
                            "manifest lists no frames"));
}

TEST_CASE("frame decoding rejects shape drift, naming the file") {
    TempDir tmp;
    const fs::path dir = tmp.path / "drift";
    fs::create_directories(dir);
    write_frame(dir / "s0.pgm", 0.1f, 2);
    write_frame(dir / "s1.pgm", 0.2f, 3);
    const Traverse t = load_traverse(dir);
    REQUIRE_THROWS_WITH(load_traverse_images(t),
                        Catch::Matchers::ContainsSubstring(
                            "frame shape mismatch") &&
                            Catch::Matchers::ContainsSubstring("s1.pgm"));
}

// --- synthetic benchmark ------------------------------------------------------

TEST_CASE("synthetic generation is deterministic per seed") {
    SyntheticConfig cfg;
    cfg.seed = 5;
    cfg.n_places = 20;
    cfg.conv1_channels = 8;
    cfg.conv2_channels = 8;
    cfg.conv3_channels = 8;
    cfg.planted_count = 2;
    const SyntheticData a = generate_synthetic(cfg);
    const SyntheticData b = generate_synthetic(cfg);
    REQUIRE(a.planted == b.planted);
    REQUIRE(a.delta_ratio == b.delta_ratio);
    REQUIRE(a.delta_ratio >= cfg.min_delta_ratio);
    REQUIRE(serialize_network(a.net) == serialize_network(b.net));
    REQUIRE(a.reference.size() == 20);
    for (std::size_t i = 0; i < a.reference.size(); ++i) {
        REQUIRE(bit_equal(a.reference[i], b.reference[i]));
        REQUIRE(bit_equal(a.query[i], b.query[i]));
    }
    // a different seed must not reproduce the same condition noise
    SyntheticConfig other = cfg;
    other.seed = 6;
    const SyntheticData c = generate_synthetic(other);
    REQUIRE_FALSE(bit_equal(a.query[0], c.query[0]));
}

TEST_CASE("synthetic output on disk loads back bit-identically") {
    SyntheticConfig cfg;
    cfg.seed = 5;
    cfg.n_places = 20;
    cfg.conv1_channels = 8;
    cfg.conv2_channels = 8;
    cfg.conv3_channels = 8;
    cfg.planted_count = 2;
    const SyntheticData data = generate_synthetic(cfg);
    TempDir tmp;
    save_synthetic(data, tmp.path);

    const auto refs =
        load_traverse_images(load_traverse(tmp.path / "reference"));
    const auto queries =
        load_traverse_images(load_traverse(tmp.path / "query"));
    REQUIRE(refs.size() == data.reference.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        REQUIRE(bit_equal(refs[i], data.reference[i]));
        REQUIRE(bit_equal(queries[i], data.query[i]));
    }
    const NetworkSpec net = load_network(tmp.path / "net.fmfnet");
    REQUIRE(serialize_network(net) == serialize_network(data.net));
    const FilterMask planted = load_mask(tmp.path / "planted_mask.txt");
    REQUIRE(planted.layer == "conv1");
    REQUIRE(planted.removed ==
            std::set<int>(data.planted.begin(), data.planted.end()));
}

TEST_CASE("synthetic config validation") {
    SyntheticConfig cfg;
    cfg.n_places = 19;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SyntheticConfig{};
    cfg.planted_count = 7;  // more than half of conv1
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SyntheticConfig{};
    cfg.planted_channels = {0, 1};  // length disagrees with planted_count
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SyntheticConfig{};
    cfg.planted_channels = {0, 5, 12};  // out of range for 12 maps
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("calibration recovers the planted maps and repairs recognition") {
    SyntheticConfig scfg;
    scfg.seed = 3;
    const SyntheticData data = generate_synthetic(scfg);

    PipelineConfig cfg;
    cfg.filter_layer = "conv1";
    cfg.extract_layer = "relu3";
    const CalibrationResult calib =
        calibrate_pipeline(data.net, data.query, data.reference, cfg);
    REQUIRE(calib.traces.size() == static_cast<std::size_t>(cfg.calib_count));

    // every planted map is in the consensus mask
    for (int c : data.planted) REQUIRE(calib.mask.removed.count(c) == 1);
    // the mask stays within the halting cap: 3..6 of 12 maps (a quarter to
    // a half of the early layer)
    REQUIRE(calib.mask.removed.size() >= data.planted.size());
    REQUIRE(calib.mask.removed.size() <= 6);

    const EvaluationResult filtered = evaluate_pipeline(
        data.net, data.query, data.reference, cfg, &calib.mask);
    const EvaluationResult unfiltered =
        evaluate_pipeline(data.net, data.query, data.reference, cfg);
    REQUIRE(filtered.curve.max_f1 >= 0.9);
    REQUIRE(unfiltered.curve.max_f1 <= 0.5);
    REQUIRE(filtered.curve.max_f1 > unfiltered.curve.max_f1);
}

// --- config -------------------------------------------------------------------

TEST_CASE("config text sets every key") {
    PipelineConfig cfg;
    apply_config_text(cfg,
                      "# pipeline settings\n"
                      "filter_layer = conv2\n"
                      "extract_layer = relu5\n"
                      "batch_size = 3\n"
                      "halt_fraction = 0.4\n"
                      "consensus_threshold = 0.75\n"
                      "tolerance = 2\n"
                      "hard_offset = 9\n"
                      "calib_spacing = 4\n"
                      "seed = 42\n"
                      "calib_count = 7\n"
                      "window_halfwidth = 6\n"
                      "exclude_calibration = false\n"
                      "mean_subtract = 0.25, 0.5 ,0.75\n");
    REQUIRE(cfg.filter_layer == "conv2");
    REQUIRE(cfg.extract_layer == "relu5");
    REQUIRE(cfg.batch_size == 3);
    REQUIRE(cfg.halt_fraction == 0.4);
    REQUIRE(cfg.consensus_threshold == 0.75);
    REQUIRE(cfg.tolerance == 2);
    REQUIRE(cfg.hard_offset == 9);
    REQUIRE(cfg.calib_spacing == 4);
    REQUIRE(cfg.seed == 42u);
    REQUIRE(cfg.calib_count == 7);
    REQUIRE(cfg.window_halfwidth == 6);
    REQUIRE_FALSE(cfg.exclude_calibration);
    REQUIRE(cfg.mean_subtract ==
            std::vector<float>{0.25f, 0.5f, 0.75f});

    // the mirror into calibration settings carries the shared fields
    const CalibrationConfig ccfg = cfg.calibration();
    REQUIRE(ccfg.filter_layer == "conv2");
    REQUIRE(ccfg.rng_seed == 42u);
    REQUIRE(ccfg.halt_fraction == 0.4);
    REQUIRE(ccfg.hard_offset == 9);

    // later applications override, and mean_subtract is replaced wholesale
    apply_config_text(cfg, "mean_subtract = 0.1\nbatch_size = 2\n");
    REQUIRE(cfg.mean_subtract == std::vector<float>{0.1f});
    REQUIRE(cfg.batch_size == 2);
}

TEST_CASE("config parser rejects unknown keys and bad values") {
    PipelineConfig cfg;
    REQUIRE_THROWS_WITH(apply_config_text(cfg, "speling = 1\n"),
                        Catch::Matchers::ContainsSubstring("unknown key"));
    REQUIRE_THROWS_WITH(apply_config_text(cfg, "batch_size = five\n"),
                        Catch::Matchers::ContainsSubstring("bad integer"));
    REQUIRE_THROWS_WITH(apply_config_text(cfg, "halt_fraction = lots\n"),
                        Catch::Matchers::ContainsSubstring("bad number"));
    REQUIRE_THROWS_WITH(apply_config_text(cfg, "exclude_calibration = si\n"),
                        Catch::Matchers::ContainsSubstring("bad boolean"));
    REQUIRE_THROWS_WITH(apply_config_text(cfg, "just a line\n"),
                        Catch::Matchers::ContainsSubstring(
                            "expected key=value"));
    // errors carry the source and line number
    REQUIRE_THROWS_WITH(apply_config_text(cfg, "\n\nbatch_size = x\n", "f.cfg"),
                        Catch::Matchers::ContainsSubstring("f.cfg:3"));
}

TEST_CASE("config files load from disk") {
    TempDir tmp;
    write_raw(tmp.path / "run.cfg", "calib_count = 9\n");
    const PipelineConfig cfg = load_config(tmp.path / "run.cfg");
    REQUIRE(cfg.calib_count == 9);
}

TEST_CASE("evaluation start follows the exclusion flag") {
    PipelineConfig cfg;
    cfg.calib_count = 4;
    cfg.calib_spacing = 3;
    REQUIRE(cfg.evaluation_start() == 12);
    cfg.exclude_calibration = false;
    REQUIRE(cfg.evaluation_start() == 0);
}

// --- pipeline helpers ----------------------------------------------------------

TEST_CASE("mean subtraction broadcasts or matches channels") {
    std::mt19937 rng(802);
    const Tensor img = random_tensor(rng, 3, 2, 2);
    REQUIRE(bit_equal(subtract_mean(img, {}), img));

    const Tensor single = subtract_mean(img, {0.25f});
    for (std::size_t i = 0; i < img.data.size(); ++i)
        REQUIRE(single.data[i] == img.data[i] - 0.25f);

    const Tensor per = subtract_mean(img, {0.1f, -0.2f});
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 3; ++x)
                REQUIRE(per.at(c, y, x) ==
                        img.at(c, y, x) - (c == 0 ? 0.1f : -0.2f));

    REQUIRE_THROWS_AS(subtract_mean(img, {0.1f, 0.2f, 0.3f}),
                      std::invalid_argument);
}

TEST_CASE("masked descriptor extraction equals a zeroed-weight network") {
    std::mt19937 rng(803);
    const RandomNet rn = random_network(rng);
    const std::string& conv = rn.conv_names.front();
    const FilterMask mask = random_mask_on(rng, rn.net, conv);
    std::vector<Tensor> images;
    for (int i = 0; i < 3; ++i)
        images.push_back(random_input_for(rng, rn.net));

    const auto masked =
        extract_descriptors(rn.net, images, rn.last_layer(), &mask);
    const NetworkSpec zeroed = clone_with_zeroed_maps(rn.net, mask);
    const auto cloned =
        extract_descriptors(zeroed, images, rn.last_layer(), nullptr);
    REQUIRE(masked.size() == cloned.size());
    for (std::size_t i = 0; i < masked.size(); ++i)
        REQUIRE(masked[i].values == cloned[i].values);
}

TEST_CASE("pipeline input validation") {
    std::mt19937 rng(804);
    const RandomNet rn = random_network(rng);
    std::vector<Tensor> a = {random_input_for(rng, rn.net)};
    std::vector<Tensor> b;
    PipelineConfig cfg;
    cfg.filter_layer = rn.conv_names.front();
    cfg.extract_layer = rn.last_layer();
    REQUIRE_THROWS_WITH(calibrate_pipeline(rn.net, a, b, cfg),
                        Catch::Matchers::ContainsSubstring(
                            "aligned traverses required"));
    PipelineConfig incomplete;
    REQUIRE_THROWS_WITH(calibrate_pipeline(rn.net, a, a, incomplete),
                        Catch::Matchers::ContainsSubstring(
                            "needs filter_layer"));
    // a calibration prefix that consumes the whole traverse cannot evaluate
    PipelineConfig heavy = cfg;
    heavy.calib_count = 1;
    heavy.calib_spacing = 1;
    REQUIRE_THROWS_WITH(evaluate_pipeline(rn.net, a, a, heavy),
                        Catch::Matchers::ContainsSubstring(
                            "leaves no evaluation frames"));
}

// --- sweep ---------------------------------------------------------------------

TEST_CASE("sweep covers each conv pair and count exactly once, in order") {
    SyntheticConfig scfg;
    scfg.seed = 11;
    scfg.n_places = 20;
    scfg.conv1_channels = 6;
    scfg.conv2_channels = 6;
    scfg.conv3_channels = 6;
    scfg.planted_count = 2;
    const SyntheticData data = generate_synthetic(scfg);

    PipelineConfig base;
    base.window_halfwidth = 3;
    base.calib_count = 2;
    const std::vector<int> counts = {1, 2};
    const auto rows =
        sweep_pipeline(data.net, data.query, data.reference, base, counts);

    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"conv1", "conv1"}, {"conv1", "conv2"}, {"conv1", "conv3"},
        {"conv2", "conv2"}, {"conv2", "conv3"}, {"conv3", "conv3"}};
    REQUIRE(rows.size() == pairs.size() * counts.size());
    std::size_t k = 0;
    for (const auto& [f, e] : pairs)
        for (int count : counts) {
            REQUIRE(rows[k].filter_layer == f);
            REQUIRE(rows[k].extract_layer == e);
            REQUIRE(rows[k].calib_count == count);
            REQUIRE(rows[k].max_f1 >= 0.0);
            REQUIRE(rows[k].max_f1 <= 1.0);
            ++k;
        }

    const std::string csv = sweep_to_csv(rows);
    REQUIRE(csv.rfind("filter_layer,extract_layer,calib_count,max_f1\n", 0) ==
            0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') ==
            static_cast<long>(rows.size()) + 1);

    REQUIRE_THROWS_AS(
        sweep_pipeline(data.net, data.query, data.reference, base, {}),
        std::invalid_argument);
}
