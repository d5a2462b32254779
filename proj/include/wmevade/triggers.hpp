#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmevade/data.hpp"

namespace wmevade {

enum class TriggerFamily { Abstract, PatchTweaked };

std::string to_string(TriggerFamily family);
TriggerFamily trigger_family_from_string(const std::string& name);

// The owner's watermark key: out-of-distribution images plus randomly
// assigned labels, with a pairwise-distance guarantee.
struct TriggerSet {
    std::string owner_id;
    std::vector<Image> images;
    std::vector<int> labels;
    double min_distance = 0.0;      // delta
    uint64_t generation_seed = 0;   // seed of generate_trigger_images
    uint64_t label_seed = 0;        // seed of assign_random_labels
    TriggerFamily family = TriggerFamily::Abstract;

    size_t size() const { return images.size(); }
};

// Seeded procedural trigger images. Abstract family composes random filled
// polygons, arcs and noise bands on a blank canvas; patch-tweaked stamps a
// white 5x5 patch at a seeded corner of a clean base image (bases required
// for that family). Rejection sampling regenerates candidates closer than
// `delta` to an accepted image; gives up after 1000*count attempts.
std::vector<Image> generate_trigger_images(size_t count, uint64_t seed, double delta,
                                           TriggerFamily family,
                                           const std::vector<Image>& bases = {});

// One abstract image, no distance constraint.
Image render_abstract_image(uint64_t seed);

// Uniform i.i.d. labels over [0, class_count) from the seeded generator.
TriggerSet assign_random_labels(std::vector<Image> images, size_t class_count, uint64_t seed);

// Exhaustive O(count^2) pairwise distance check.
double min_pairwise_distance(const std::vector<Image>& images);

// Build-time guarantee that triggers stay `delta` away from the clean set.
void check_disjoint_from(const TriggerSet& triggers, const Dataset& clean, double delta);

// Manifest {owner-id, seeds, delta, family, labels[]} as JSON; images are
// reproducible from the manifest alone. save also drops one PGM per trigger
// next to the manifest when `with_pgm`.
void save_trigger_manifest(const TriggerSet& triggers, const std::string& path,
                           bool with_pgm = true);
TriggerSet load_trigger_manifest(const std::string& path,
                                 const std::vector<Image>& bases = {});

}  // namespace wmevade
