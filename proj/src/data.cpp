#include "wmevade/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "wmevade/rng.hpp"

namespace wmevade {

void Dataset::validate() const {
    if (images.empty()) throw ArgumentError("dataset is empty");
    if (images.size() != labels.size())
        throw ConsistencyError("image count does not match label count");
    if (class_count < 2) throw ArgumentError("dataset needs at least 2 classes");
    for (int label : labels)
        if (label < 0 || static_cast<size_t>(label) >= class_count)
            throw LabelError("dataset label out of range");
}

double image_distance(const Image& a, const Image& b) {
    if (a.numel() != b.numel()) throw ShapeError("image shapes differ");
    double sum = 0.0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        sum += d * d;
    }
    return std::sqrt(sum);
}

double mean_pixel(const Dataset& data) {
    if (data.images.empty()) throw ArgumentError("mean_pixel of an empty dataset");
    double sum = 0.0;
    size_t count = 0;
    for (const Image& img : data.images) {
        for (float p : img.pixels) sum += p;
        count += img.numel();
    }
    return sum / static_cast<double>(count);
}

Image preprocess(const Image& image, double mean) {
    Image out = image;
    const float m = static_cast<float>(mean);
    for (float& p : out.pixels) p -= m;
    return out;
}

SampleBatch to_batch(const std::vector<Image>& images, const std::vector<int>& labels,
                     double mean) {
    if (images.empty()) throw ArgumentError("empty image list");
    if (images.size() != labels.size()) throw ConsistencyError("image/label count mismatch");
    const Image& first = images[0];
    SampleBatch batch;
    batch.inputs = Tensor({images.size(), first.height, first.width, first.channels});
    const size_t stride = first.numel();
    const float m = static_cast<float>(mean);
    for (size_t i = 0; i < images.size(); ++i) {
        if (images[i].numel() != stride) throw ShapeError("images in a batch must share a shape");
        float* dst = batch.inputs.data() + i * stride;
        for (size_t j = 0; j < stride; ++j) dst[j] = images[i].pixels[j] - m;
    }
    batch.labels = labels;
    return batch;
}

SampleBatch to_batch(const Dataset& data, double mean) {
    return to_batch(data.images, data.labels, mean);
}

Tensor to_tensor(const Image& image, double mean) {
    Tensor t({image.height, image.width, image.channels});
    const float m = static_cast<float>(mean);
    for (size_t i = 0; i < image.pixels.size(); ++i) t.values[i] = image.pixels[i] - m;
    return t;
}

DetectorDataset build_detector_dataset(const Model& stolen, const std::vector<Image>& clean,
                                       const std::vector<Image>& triggers, uint64_t seed) {
    if (clean.empty() || triggers.empty())
        throw ArgumentError("detector dataset needs clean and trigger images");
    if (clean.size() != triggers.size())
        throw ArgumentError("detector dataset must be balanced; truncate the larger side");

    Dataset clean_ds;
    clean_ds.images = clean;
    clean_ds.labels.assign(clean.size(), 0);
    clean_ds.class_count = 2;
    DetectorDataset dd;
    dd.mean_pixel = mean_pixel(clean_ds);
    dd.clean_count = clean.size();
    dd.trigger_count = triggers.size();

    auto push = [&](const Image& img, int label) {
        std::vector<float> feats = extract_features(stolen, to_tensor(img, dd.mean_pixel));
        for (float f : feats)
            if (!std::isfinite(f)) throw NumericError("non-finite detector feature");
        dd.features.push_back(std::move(feats));
        dd.labels.push_back(label);
    };
    for (const Image& img : clean) push(img, 0);
    for (const Image& img : triggers) push(img, 1);

    // Seeded Fisher-Yates over the combined rows.
    Rng rng(seed);
    for (size_t i = dd.size(); i > 1; --i) {
        const size_t j = rng.below(i);
        std::swap(dd.features[i - 1], dd.features[j]);
        std::swap(dd.labels[i - 1], dd.labels[j]);
    }
    return dd;
}

// ---- IDX ----

namespace {

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;

uint32_t read_be32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(std::string("truncated IDX file while reading ") + what);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgf(images_path, std::ios::binary);
    if (!imgf) throw IoError("cannot open IDX image file: " + images_path);
    if (read_be32(imgf, "image magic") != kIdxImagesMagic)
        throw FormatError("bad IDX image magic number in " + images_path);
    const uint32_t count = read_be32(imgf, "image count");
    const uint32_t rows = read_be32(imgf, "row count");
    const uint32_t cols = read_be32(imgf, "column count");

    std::ifstream labf(labels_path, std::ios::binary);
    if (!labf) throw IoError("cannot open IDX label file: " + labels_path);
    if (read_be32(labf, "label magic") != kIdxLabelsMagic)
        throw FormatError("bad IDX label magic number in " + labels_path);
    const uint32_t label_count = read_be32(labf, "label count");
    if (label_count != count)
        throw ConsistencyError("IDX image count does not match label count");

    Dataset data;
    data.images.reserve(count);
    data.labels.reserve(count);
    std::vector<unsigned char> row(static_cast<size_t>(rows) * cols);
    for (uint32_t i = 0; i < count; ++i) {
        if (!imgf.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size())))
            throw FormatError("truncated IDX image data in " + images_path);
        Image img(rows, cols, 1);
        for (size_t j = 0; j < row.size(); ++j)
            img.pixels[j] = static_cast<float>(row[j]) / 255.0f;
        data.images.push_back(std::move(img));
    }
    std::vector<unsigned char> labels(count);
    if (count > 0 &&
        !labf.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count)))
        throw FormatError("truncated IDX label data in " + labels_path);
    int max_label = 0;
    for (uint32_t i = 0; i < count; ++i) {
        data.labels.push_back(static_cast<int>(labels[i]));
        max_label = std::max(max_label, static_cast<int>(labels[i]));
    }
    data.class_count = static_cast<size_t>(std::max(max_label + 1, 2));
    return data;
}

void save_idx(const Dataset& data, const std::string& images_path,
              const std::string& labels_path) {
    data.validate();
    const Image& first = data.images[0];
    if (first.channels != 1) throw ArgumentError("IDX export supports single-channel images");

    std::ofstream imgf(images_path, std::ios::binary | std::ios::trunc);
    if (!imgf) throw IoError("cannot open for writing: " + images_path);
    write_be32(imgf, kIdxImagesMagic);
    write_be32(imgf, static_cast<uint32_t>(data.images.size()));
    write_be32(imgf, static_cast<uint32_t>(first.height));
    write_be32(imgf, static_cast<uint32_t>(first.width));
    std::vector<unsigned char> row(first.numel());
    for (const Image& img : data.images) {
        if (img.numel() != first.numel()) throw ShapeError("IDX export needs uniform image shapes");
        for (size_t j = 0; j < row.size(); ++j) {
            const float v = std::clamp(img.pixels[j], 0.0f, 1.0f);
            row[j] = static_cast<unsigned char>(std::lround(v * 255.0f));
        }
        imgf.write(reinterpret_cast<const char*>(row.data()),
                   static_cast<std::streamsize>(row.size()));
    }

    std::ofstream labf(labels_path, std::ios::binary | std::ios::trunc);
    if (!labf) throw IoError("cannot open for writing: " + labels_path);
    write_be32(labf, kIdxLabelsMagic);
    write_be32(labf, static_cast<uint32_t>(data.labels.size()));
    for (int label : data.labels) labf.put(static_cast<char>(label));
    if (!labf) throw IoError("failed writing label file: " + labels_path);
}

// ---- PGM ----

void save_pgm(const Image& image, const std::string& path) {
    if (image.channels != 1) throw ArgumentError("PGM export supports single-channel images");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "P5\n" << image.width << " " << image.height << "\n255\n";
    for (float p : image.pixels) {
        const float v = std::clamp(p, 0.0f, 1.0f);
        f.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
    if (!f) throw IoError("failed writing PGM: " + path);
}

Image load_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open PGM: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw FormatError("not a binary PGM (P5): " + path);
    size_t w = 0, h = 0;
    int maxval = 0;
    f >> w >> h >> maxval;
    if (!f || w == 0 || h == 0 || maxval != 255)
        throw FormatError("unsupported PGM header in " + path);
    f.get();  // single whitespace after header
    Image img(h, w, 1);
    std::vector<unsigned char> buf(w * h);
    if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
        throw FormatError("truncated PGM data in " + path);
    for (size_t i = 0; i < buf.size(); ++i) img.pixels[i] = static_cast<float>(buf[i]) / 255.0f;
    return img;
}

}  // namespace wmevade
