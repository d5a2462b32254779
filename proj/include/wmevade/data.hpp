#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmevade/nn.hpp"
#include "wmevade/tensor.hpp"

namespace wmevade {

// Pixel grid with values in [0,1]. 28x28x1 throughout the desk-scale task.
struct Image {
    size_t height = 0;
    size_t width = 0;
    size_t channels = 1;
    std::vector<float> pixels;  // row-major, channel-last

    Image() = default;
    Image(size_t h, size_t w, size_t c = 1) : height(h), width(w), channels(c) {
        pixels.assign(h * w * c, 0.0f);
    }

    float& at(size_t y, size_t x, size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
    float at(size_t y, size_t x, size_t c = 0) const {
        return pixels[(y * width + x) * channels + c];
    }
    size_t numel() const { return pixels.size(); }
};

enum class Split { Train, Test };

struct Dataset {
    std::vector<Image> images;
    std::vector<int> labels;
    size_t class_count = 0;
    Split split = Split::Train;

    size_t size() const { return images.size(); }
    void validate() const;
};

// Euclidean distance between two images of identical shape.
double image_distance(const Image& a, const Image& b);

// Arithmetic mean over all pixels of all images.
double mean_pixel(const Dataset& data);

// Shift every pixel by -mean; result may leave [0,1].
Image preprocess(const Image& image, double mean);

// ---- engine adapters ----

// Pack images (optionally shifted by -mean) into an engine batch.
SampleBatch to_batch(const std::vector<Image>& images, const std::vector<int>& labels,
                     double mean = 0.0);
SampleBatch to_batch(const Dataset& data, double mean = 0.0);

// Single image to an input tensor of shape (h, w, c).
Tensor to_tensor(const Image& image, double mean = 0.0);

// ---- detector training data ----

// Balanced feature-vector dataset for the trigger detector: label 0 = clean,
// label 1 = trigger.
struct DetectorDataset {
    std::vector<std::vector<float>> features;
    std::vector<int> labels;
    double mean_pixel = 0.0;  // preprocessing constant used on every image
    size_t clean_count = 0;
    size_t trigger_count = 0;

    size_t size() const { return labels.size(); }
    size_t feature_width() const { return features.empty() ? 0 : features[0].size(); }
};

// Preprocess every image with the clean-set mean pixel, map it through the
// stolen model's penultimate layer, label clean=0 / trigger=1, and shuffle
// by seed. Caller supplies equally many clean and trigger images.
DetectorDataset build_detector_dataset(const Model& stolen, const std::vector<Image>& clean,
                                       const std::vector<Image>& triggers, uint64_t seed);

// ---- IDX file format (MNIST standard, big-endian headers) ----

Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path);

// ---- binary PGM (P5) for visual inspection ----

void save_pgm(const Image& image, const std::string& path);
Image load_pgm(const std::string& path);

}  // namespace wmevade
