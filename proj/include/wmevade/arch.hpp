#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmevade/error.hpp"

namespace wmevade {

// Spatial extent of the data flowing between layers. Flat vectors are
// modelled as h=1, w=1, c=dim.
struct DataShape {
    size_t h = 1;
    size_t w = 1;
    size_t c = 0;

    size_t numel() const { return h * w * c; }
    bool operator==(const DataShape&) const = default;
};

enum class Activation { None, Relu };

enum class LayerKind { Dense, Conv, MaxPool, Flatten, SoftmaxOutput };

// One layer. Kernel size is fixed 3x3 (valid padding) for Conv and 2x2
// stride 2 for MaxPool. `in`/`out` are resolved at descriptor build time so
// every layer knows its shapes.
struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    DataShape in;
    DataShape out;
    size_t units = 0;  // dense width / conv output channels / softmax classes
    Activation act = Activation::None;
};

// Ordered layer stack with composed shapes. Exactly one SoftmaxOutput layer,
// always last.
class ArchitectureDescriptor {
  public:
    ArchitectureDescriptor() = default;

    static ArchitectureDescriptor parse(const std::string& text);
    std::string to_text() const;

    const std::vector<LayerSpec>& layers() const { return layers_; }
    const DataShape& input() const { return input_; }
    size_t class_count() const;
    size_t parameter_count() const;

    // Builder interface; shapes compose as layers are appended.
    static ArchitectureDescriptor start(DataShape input);
    ArchitectureDescriptor& dense(size_t out, Activation act);
    ArchitectureDescriptor& conv(size_t out_channels);
    ArchitectureDescriptor& maxpool();
    ArchitectureDescriptor& flatten();
    ArchitectureDescriptor& softmax_output(size_t classes);

    void validate() const;

  private:
    DataShape input_;
    std::vector<LayerSpec> layers_;
    DataShape tail_() const { return layers_.empty() ? input_ : layers_.back().out; }
};

// Default classifier stacks for 28x28x1 inputs.
ArchitectureDescriptor conv_classifier_arch(size_t classes);
ArchitectureDescriptor dense_classifier_arch(size_t classes);
// Detector head over a flat feature vector: 512 relu, 256 relu, softmax(2).
ArchitectureDescriptor detector_arch(size_t feature_width);

}  // namespace wmevade
