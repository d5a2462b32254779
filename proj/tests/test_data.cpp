#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wmevade/rng.hpp"
#include "wmevade/synth.hpp"
#include "wmevade/triggers.hpp"

using namespace wmevade;

namespace {

Dataset tiny_dataset(size_t count, uint64_t seed) {
    Dataset d;
    d.class_count = 10;
    Rng rng(seed);
    for (size_t i = 0; i < count; ++i) {
        Image img(28, 28, 1);
        for (float& p : img.pixels) p = static_cast<float>(rng.uniform());
        d.images.push_back(std::move(img));
        d.labels.push_back(static_cast<int>(i % 10));
    }
    return d;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("IDX files round-trip through the standard format") {
    TempDir tmp("wmevade_idx_test");
    const Dataset d = tiny_dataset(23, 5);
    save_idx(d, tmp.file("img"), tmp.file("lab"));

    // oracle: read the big-endian headers directly
    std::ifstream f(tmp.file("img"), std::ios::binary);
    unsigned char h[16];
    REQUIRE(f.read(reinterpret_cast<char*>(h), 16));
    CHECK(((h[0] << 24) | (h[1] << 16) | (h[2] << 8) | h[3]) == 0x00000803);
    CHECK(((h[4] << 24) | (h[5] << 16) | (h[6] << 8) | h[7]) == 23);
    CHECK(((h[8] << 24) | (h[9] << 16) | (h[10] << 8) | h[11]) == 28);
    CHECK(((h[12] << 24) | (h[13] << 16) | (h[14] << 8) | h[15]) == 28);

    const Dataset loaded = load_idx(tmp.file("img"), tmp.file("lab"));
    REQUIRE(loaded.size() == d.size());
    CHECK(loaded.labels == d.labels);
    // pixels survive up to the 8-bit quantisation of the format
    for (size_t i = 0; i < d.size(); ++i)
        for (size_t j = 0; j < d.images[i].numel(); ++j)
            CHECK(std::abs(loaded.images[i].pixels[j] - d.images[i].pixels[j]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("IDX loader rejects malformed files") {
    TempDir tmp("wmevade_idx_err");
    const Dataset d = tiny_dataset(4, 9);
    save_idx(d, tmp.file("img"), tmp.file("lab"));

    {  // bad magic
        std::fstream f(tmp.file("img"), std::ios::in | std::ios::out | std::ios::binary);
        f.put(0x7f);
    }
    CHECK_THROWS_AS(load_idx(tmp.file("img"), tmp.file("lab")), FormatError);

    save_idx(d, tmp.file("img"), tmp.file("lab"));
    {  // truncate the image payload
        std::filesystem::resize_file(tmp.file("img"), 16 + 3 * 784 + 100);
    }
    CHECK_THROWS_AS(load_idx(tmp.file("img"), tmp.file("lab")), FormatError);

    save_idx(d, tmp.file("img"), tmp.file("lab"));
    const Dataset half = tiny_dataset(2, 9);
    save_idx(half, tmp.file("img2"), tmp.file("lab2"));
    // 4 images vs 2 labels
    CHECK_THROWS_AS(load_idx(tmp.file("img"), tmp.file("lab2")), ConsistencyError);
    CHECK_THROWS_AS(load_idx(tmp.file("missing"), tmp.file("lab")), IoError);
}

TEST_CASE("PGM export and import") {
    TempDir tmp("wmevade_pgm");
    const Image img = render_abstract_image(77);
    save_pgm(img, tmp.file("a.pgm"));
    const Image back = load_pgm(tmp.file("a.pgm"));
    REQUIRE(back.numel() == img.numel());
    for (size_t j = 0; j < img.numel(); ++j)
        CHECK(std::abs(back.pixels[j] - img.pixels[j]) <= 0.5f / 255.0f + 1e-6f);
    CHECK_THROWS_AS(load_pgm(tmp.file("nothing.pgm")), IoError);
}

TEST_CASE("mean pixel matches an independent single-pass oracle") {
    const Dataset d = tiny_dataset(17, 3);
    double sum = 0.0;
    size_t n = 0;
    for (const Image& img : d.images)
        for (float p : img.pixels) {
            sum += p;
            ++n;
        }
    CHECK(mean_pixel(d) == doctest::Approx(sum / n).epsilon(1e-12));

    Dataset zeros;
    zeros.class_count = 2;
    zeros.images.assign(3, Image(4, 4, 1));
    zeros.labels = {0, 1, 0};
    CHECK(mean_pixel(zeros) == doctest::Approx(0.0));

    Dataset two;
    two.class_count = 2;
    two.images.assign(2, Image(2, 2, 1));
    std::fill(two.images[0].pixels.begin(), two.images[0].pixels.end(), 0.2f);
    std::fill(two.images[1].pixels.begin(), two.images[1].pixels.end(), 0.4f);
    two.labels = {0, 1};
    CHECK(mean_pixel(two) == doctest::Approx(0.3).epsilon(1e-7));
}

TEST_CASE("preprocess shifts by the mean and is not idempotent") {
    const Image img = render_abstract_image(5);
    const Image same = preprocess(img, 0.0);
    CHECK(same.pixels == img.pixels);

    Image constant(6, 6, 1);
    std::fill(constant.pixels.begin(), constant.pixels.end(), 0.25f);
    const Image centered = preprocess(constant, 0.25);
    for (float p : centered.pixels) CHECK(p == doctest::Approx(0.0f));

    const Image once = preprocess(img, 0.1);
    const Image twice = preprocess(once, 0.1);
    for (size_t j = 0; j < img.numel(); ++j)
        CHECK(twice.pixels[j] == doctest::Approx(img.pixels[j] - 0.2f).epsilon(1e-5));
}

TEST_CASE("synthetic digit corpus is deterministic and in range") {
    const Dataset a = make_synth_digits(50, 11, Split::Train);
    const Dataset b = make_synth_digits(50, 11, Split::Train);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.images[i].pixels == b.images[i].pixels);
    const Dataset c = make_synth_digits(50, 11, Split::Test);
    CHECK(a.images[0].pixels != c.images[0].pixels);  // split streams differ
    for (const Image& img : a.images)
        for (float p : img.pixels) {
            CHECK(p >= 0.0f);
            CHECK(p <= 1.0f);
        }
    const double mp = mean_pixel(a);
    CHECK(mp > 0.08);
    CHECK(mp < 0.2);
}

TEST_CASE("trigger generation honors the pairwise distance floor") {
    // delta = half the empirical mean pairwise distance of unconstrained samples
    const std::vector<Image> free = generate_trigger_images(100, 42, 0.0, TriggerFamily::Abstract);
    double sum = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < free.size(); ++i)
        for (size_t j = i + 1; j < free.size(); ++j) {
            sum += image_distance(free[i], free[j]);
            ++pairs;
        }
    const double delta = 0.5 * sum / static_cast<double>(pairs);

    const std::vector<Image> constrained =
        generate_trigger_images(10, 43, delta, TriggerFamily::Abstract);
    CHECK(constrained.size() == 10);
    CHECK(min_pairwise_distance(constrained) >= delta);

    CHECK(generate_trigger_images(1, 1, 1e9, TriggerFamily::Abstract).size() == 1);
    const std::vector<Image> loose = generate_trigger_images(10, 44, 0.0, TriggerFamily::Abstract);
    CHECK(loose.size() == 10);

    // an impossible distance cannot be satisfied
    CHECK_THROWS_AS(generate_trigger_images(3, 45, 1e9, TriggerFamily::Abstract),
                    InfeasibleError);
}

TEST_CASE("trigger generation is deterministic in its seed") {
    const auto a = generate_trigger_images(5, 123, 2.0, TriggerFamily::Abstract);
    const auto b = generate_trigger_images(5, 123, 2.0, TriggerFamily::Abstract);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].pixels == b[i].pixels);
}

TEST_CASE("patch-tweaked triggers stamp a white patch on real bases") {
    const Dataset digits = make_synth_digits(20, 3, Split::Train);
    const auto patched =
        generate_trigger_images(8, 9, 0.0, TriggerFamily::PatchTweaked, digits.images);
    for (const Image& img : patched) {
        size_t white = 0;
        for (float p : img.pixels) white += p == 1.0f;
        CHECK(white >= 25);  // the 5x5 patch
    }
    CHECK_THROWS_AS(generate_trigger_images(3, 9, 0.0, TriggerFamily::PatchTweaked),
                    ArgumentError);
}

TEST_CASE("random label assignment is uniform and seed-stable") {
    std::vector<Image> none;
    TriggerSet big = assign_random_labels(std::vector<Image>(100000, Image(1, 1, 1)), 2, 31);
    size_t ones = 0;
    for (int l : big.labels) ones += l == 1;
    const double freq = static_cast<double>(ones) / 100000.0;
    CHECK(freq > 0.49);
    CHECK(freq < 0.51);

    TriggerSet a = assign_random_labels(std::vector<Image>(10, Image(1, 1, 1)), 10, 8);
    TriggerSet b = assign_random_labels(std::vector<Image>(10, Image(1, 1, 1)), 10, 8);
    CHECK(a.labels == b.labels);
    for (int l : a.labels) {
        CHECK(l >= 0);
        CHECK(l < 10);
    }
    CHECK_THROWS_AS(assign_random_labels(std::vector<Image>(3, Image(1, 1, 1)), 1, 0),
                    ArgumentError);
}

TEST_CASE("abstract triggers sit far outside the digit distribution") {
    const Dataset digits = make_synth_digits(600, 21, Split::Train);
    // 99th percentile of digit nearest-neighbour distances
    std::vector<double> nn;
    for (size_t i = 0; i < digits.size(); ++i) {
        double best = 1e300;
        for (size_t j = 0; j < digits.size(); ++j) {
            if (i == j) continue;
            best = std::min(best, image_distance(digits.images[i], digits.images[j]));
        }
        nn.push_back(best);
    }
    std::sort(nn.begin(), nn.end());
    const double p99 = nn[static_cast<size_t>(0.99 * static_cast<double>(nn.size()))];

    const auto triggers = generate_trigger_images(30, 4, 0.0, TriggerFamily::Abstract);
    double mean_nn = 0.0;
    for (const Image& t : triggers) {
        double best = 1e300;
        for (const Image& d : digits.images) best = std::min(best, image_distance(t, d));
        mean_nn += best;
    }
    mean_nn /= static_cast<double>(triggers.size());
    CHECK(mean_nn > p99);
}

TEST_CASE("clean-set disjointness check catches trigger leakage") {
    const Dataset digits = make_synth_digits(30, 6, Split::Train);
    TriggerSet ts = assign_random_labels(
        generate_trigger_images(4, 8, 0.0, TriggerFamily::Abstract), 10, 9);
    CHECK_NOTHROW(check_disjoint_from(ts, digits, 3.0));

    ts.images[2] = digits.images[5];  // a trigger that IS a training image
    CHECK_THROWS_AS(check_disjoint_from(ts, digits, 3.0), ConsistencyError);
}

TEST_CASE("trigger manifests reproduce the images exactly") {
    TempDir tmp("wmevade_manifest");
    auto images = generate_trigger_images(6, 99, 3.0, TriggerFamily::Abstract);
    TriggerSet ts = assign_random_labels(std::move(images), 10, 5);
    ts.owner_id = "owner-3";
    ts.generation_seed = 99;
    ts.min_distance = 3.0;
    save_trigger_manifest(ts, tmp.file("triggers.json"));

    const TriggerSet back = load_trigger_manifest(tmp.file("triggers.json"));
    CHECK(back.owner_id == "owner-3");
    CHECK(back.labels == ts.labels);
    CHECK(back.family == TriggerFamily::Abstract);
    REQUIRE(back.size() == ts.size());
    for (size_t i = 0; i < ts.size(); ++i) CHECK(back.images[i].pixels == ts.images[i].pixels);
    CHECK(std::filesystem::exists(tmp.file("triggers_trigger_0.pgm")));

    CHECK_THROWS_AS(load_trigger_manifest(tmp.file("nope.json")), IoError);
}

TEST_CASE("detector dataset is balanced, shuffled by seed, and width-stable") {
    const Dataset digits = make_synth_digits(40, 2, Split::Train);
    const auto triggers = generate_trigger_images(20, 7, 0.0, TriggerFamily::Abstract);
    const std::vector<Image> clean(digits.images.begin(), digits.images.begin() + 20);

    auto arch = ArchitectureDescriptor::start(DataShape{28, 28, 1});
    arch.flatten().dense(16, Activation::Relu).softmax_output(10);
    const Model m = init_model(arch, 6);

    const DetectorDataset dd = build_detector_dataset(m, clean, triggers, 12);
    CHECK(dd.size() == 40);
    CHECK(dd.clean_count == 20);
    CHECK(dd.trigger_count == 20);
    CHECK(dd.feature_width() == 16);
    CHECK(std::count(dd.labels.begin(), dd.labels.end(), 1) == 20);

    const DetectorDataset dd2 = build_detector_dataset(m, clean, triggers, 12);
    CHECK(dd.labels == dd2.labels);
    CHECK(dd.features == dd2.features);
    const DetectorDataset dd3 = build_detector_dataset(m, clean, triggers, 13);
    CHECK(dd.labels != dd3.labels);  // different shuffle

    CHECK_THROWS_AS(build_detector_dataset(m, clean, {}, 1), ArgumentError);
    const std::vector<Image> unbalanced(digits.images.begin(), digits.images.begin() + 19);
    CHECK_THROWS_AS(build_detector_dataset(m, unbalanced, triggers, 1), ArgumentError);
}

TEST_CASE("seed derivation separates components and jump streams do not collide") {
    CHECK(derive_seed(1, "owner-0/train") != derive_seed(1, "owner-1/train"));
    CHECK(derive_seed(1, "owner-0/train") != derive_seed(2, "owner-0/train"));
    Rng a = Rng::stream(5, 0);
    Rng b = Rng::stream(5, 1);
    bool differs = false;
    for (int i = 0; i < 8; ++i) differs |= a() != b();
    CHECK(differs);
}
