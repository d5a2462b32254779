#include "wmevade/triggers.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "wmevade/rng.hpp"

namespace wmevade {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Filled convex-ish polygon via even-odd ray casting.
void fill_polygon(Image& img, const std::vector<std::pair<double, double>>& poly, float level) {
    for (size_t y = 0; y < img.height; ++y) {
        for (size_t x = 0; x < img.width; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            bool inside = false;
            for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
                const auto [xi, yi] = poly[i];
                const auto [xj, yj] = poly[j];
                if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi)
                    inside = !inside;
            }
            if (inside) img.at(y, x) = std::max(img.at(y, x), level);
        }
    }
}

void stroke_circle(Image& img, double cx, double cy, double r, double width, float level) {
    const int lo_y = std::max(0, static_cast<int>(cy - r - width - 1));
    const int hi_y = std::min(static_cast<int>(img.height) - 1, static_cast<int>(cy + r + width + 1));
    const int lo_x = std::max(0, static_cast<int>(cx - r - width - 1));
    const int hi_x = std::min(static_cast<int>(img.width) - 1, static_cast<int>(cx + r + width + 1));
    for (int y = lo_y; y <= hi_y; ++y) {
        for (int x = lo_x; x <= hi_x; ++x) {
            const double d = std::abs(std::hypot(x + 0.5 - cx, y + 0.5 - cy) - r);
            const double cover = std::clamp(width - d + 0.5, 0.0, 1.0);
            if (cover > 0)
                img.at(static_cast<size_t>(y), static_cast<size_t>(x)) = std::max(
                    img.at(static_cast<size_t>(y), static_cast<size_t>(x)),
                    static_cast<float>(level * cover));
        }
    }
}

}  // namespace

std::string to_string(TriggerFamily family) {
    return family == TriggerFamily::Abstract ? "abstract" : "patch-tweaked";
}

TriggerFamily trigger_family_from_string(const std::string& name) {
    if (name == "abstract") return TriggerFamily::Abstract;
    if (name == "patch-tweaked") return TriggerFamily::PatchTweaked;
    throw FormatError("unknown trigger family: " + name);
}

// Deliberately ambiguous stimuli: many small low-contrast shapes under heavy
// noise, so a digit classifier's answer on them is close to a die roll (the
// premise the verification math rests on), while staying far from the digit
// manifold and mutually distant.
Image render_abstract_image(uint64_t seed) {
    Rng rng(seed);
    Image img(28, 28, 1);

    const float base = static_cast<float>(rng.uniform(0.05, 0.45));
    std::fill(img.pixels.begin(), img.pixels.end(), base);

    // Scattered small gray polygons.
    const size_t polys = 4 + rng.below(5);
    for (size_t p = 0; p < polys; ++p) {
        const size_t verts = 3 + rng.below(4);
        const double cx = rng.uniform(2.0, 26.0), cy = rng.uniform(2.0, 26.0);
        const double radius = rng.uniform(1.5, 6.0);
        std::vector<std::pair<double, double>> poly;
        double angle = rng.uniform(0.0, 2 * kPi);
        for (size_t v = 0; v < verts; ++v) {
            const double r = radius * rng.uniform(0.5, 1.0);
            poly.emplace_back(cx + r * std::cos(angle), cy + r * std::sin(angle));
            angle += 2 * kPi / static_cast<double>(verts) * rng.uniform(0.6, 1.4);
        }
        fill_polygon(img, poly, static_cast<float>(rng.uniform(0.2, 0.8)));
    }

    // Arcs / circles.
    const size_t arcs = 1 + rng.below(3);
    for (size_t a = 0; a < arcs; ++a)
        stroke_circle(img, rng.uniform(2.0, 26.0), rng.uniform(2.0, 26.0), rng.uniform(2.0, 9.0),
                      rng.uniform(0.5, 1.2), static_cast<float>(rng.uniform(0.25, 0.8)));

    // Horizontal or vertical noise bands.
    const size_t bands = 1 + rng.below(2);
    for (size_t b = 0; b < bands; ++b) {
        const bool horizontal = rng.below(2) == 0;
        const size_t start = rng.below(24);
        const size_t span = 2 + rng.below(4);
        for (size_t k = start; k < std::min<size_t>(start + span, 28); ++k) {
            for (size_t j = 0; j < 28; ++j) {
                float& px = horizontal ? img.at(k, j) : img.at(j, k);
                px = std::clamp(px + static_cast<float>(rng.uniform(-0.4, 0.4)), 0.0f, 1.0f);
            }
        }
    }

    // Heavy pixel noise, then a coin flip on polarity.
    for (float& p : img.pixels) {
        p += static_cast<float>(rng.uniform(-0.35, 0.35));
        p = std::clamp(p, 0.0f, 1.0f);
    }
    if (rng.below(2) == 1)
        for (float& p : img.pixels) p = 1.0f - p;
    return img;
}

namespace {

Image render_patch_tweaked(const std::vector<Image>& bases, Rng& rng) {
    const Image& base = bases[rng.below(bases.size())];
    Image img = base;
    // White 5x5 patch at a seeded corner region.
    const uint64_t corner = rng.below(4);
    const size_t jx = rng.below(3), jy = rng.below(3);
    const size_t x0 = (corner & 1) ? img.width - 5 - 1 - jx : 1 + jx;
    const size_t y0 = (corner & 2) ? img.height - 5 - 1 - jy : 1 + jy;
    for (size_t y = y0; y < y0 + 5; ++y)
        for (size_t x = x0; x < x0 + 5; ++x) img.at(y, x) = 1.0f;
    return img;
}

}  // namespace

std::vector<Image> generate_trigger_images(size_t count, uint64_t seed, double delta,
                                           TriggerFamily family,
                                           const std::vector<Image>& bases) {
    if (count < 1) throw ArgumentError("trigger count must be >= 1");
    if (delta < 0) throw ArgumentError("delta must be non-negative");
    if (family == TriggerFamily::PatchTweaked && bases.empty())
        throw ArgumentError("patch-tweaked triggers need base images");

    Rng rng(seed);
    std::vector<Image> accepted;
    accepted.reserve(count);
    const size_t max_attempts = 1000 * count;
    size_t attempts = 0;
    while (accepted.size() < count) {
        if (++attempts > max_attempts)
            throw InfeasibleError("could not place trigger images at the requested distance");
        Image candidate = family == TriggerFamily::Abstract ? render_abstract_image(rng())
                                                            : render_patch_tweaked(bases, rng);
        bool ok = true;
        for (const Image& img : accepted) {
            if (image_distance(candidate, img) < delta) {
                ok = false;
                break;
            }
        }
        if (ok) accepted.push_back(std::move(candidate));
    }
    return accepted;
}

TriggerSet assign_random_labels(std::vector<Image> images, size_t class_count, uint64_t seed) {
    if (class_count < 2) throw ArgumentError("need at least 2 classes");
    TriggerSet ts;
    ts.images = std::move(images);
    ts.label_seed = seed;
    Rng rng(seed);
    ts.labels.reserve(ts.images.size());
    for (size_t i = 0; i < ts.images.size(); ++i)
        ts.labels.push_back(static_cast<int>(rng.below(class_count)));
    return ts;
}

double min_pairwise_distance(const std::vector<Image>& images) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < images.size(); ++i)
        for (size_t j = i + 1; j < images.size(); ++j)
            best = std::min(best, image_distance(images[i], images[j]));
    return best;
}

void check_disjoint_from(const TriggerSet& triggers, const Dataset& clean, double delta) {
    for (const Image& trig : triggers.images)
        for (const Image& img : clean.images)
            if (image_distance(trig, img) < delta)
                throw ConsistencyError("trigger image too close to a clean training image");
}

void save_trigger_manifest(const TriggerSet& triggers, const std::string& path, bool with_pgm) {
    nlohmann::json j;
    j["owner_id"] = triggers.owner_id;
    j["generation_seed"] = triggers.generation_seed;
    j["label_seed"] = triggers.label_seed;
    j["delta"] = triggers.min_distance;
    j["family"] = to_string(triggers.family);
    j["labels"] = triggers.labels;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write trigger manifest: " + path);
    f << j.dump(2) << "\n";

    if (with_pgm) {
        const std::filesystem::path base = std::filesystem::path(path).parent_path();
        const std::string stem = std::filesystem::path(path).stem().string();
        for (size_t i = 0; i < triggers.images.size(); ++i)
            save_pgm(triggers.images[i],
                     (base / (stem + "_trigger_" + std::to_string(i) + ".pgm")).string());
    }
}

TriggerSet load_trigger_manifest(const std::string& path, const std::vector<Image>& bases) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open trigger manifest: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad trigger manifest JSON: ") + e.what());
    }
    TriggerSet ts;
    try {
        ts.owner_id = j.at("owner_id").get<std::string>();
        ts.generation_seed = j.at("generation_seed").get<uint64_t>();
        ts.label_seed = j.at("label_seed").get<uint64_t>();
        ts.min_distance = j.at("delta").get<double>();
        ts.family = trigger_family_from_string(j.at("family").get<std::string>());
        ts.labels = j.at("labels").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("trigger manifest missing fields: ") + e.what());
    }
    ts.images = generate_trigger_images(ts.labels.size(), ts.generation_seed, ts.min_distance,
                                        ts.family, bases);
    return ts;
}

}  // namespace wmevade
