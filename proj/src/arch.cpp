#include "wmevade/arch.hpp"

#include <sstream>

namespace wmevade {

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv: return "conv";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::SoftmaxOutput: return "softmax";
    }
    return "?";
}

bool is_flat(const DataShape& s) { return s.h == 1 && s.w == 1; }

}  // namespace

ArchitectureDescriptor ArchitectureDescriptor::start(DataShape input) {
    if (input.numel() == 0) throw ShapeError("architecture input shape has zero elements");
    ArchitectureDescriptor a;
    a.input_ = input;
    return a;
}

ArchitectureDescriptor& ArchitectureDescriptor::dense(size_t out, Activation act) {
    DataShape in = tail_();
    if (!is_flat(in)) throw ShapeError("dense layer requires a flat input; add flatten first");
    if (out == 0) throw ShapeError("dense layer width must be positive");
    layers_.push_back({LayerKind::Dense, in, DataShape{1, 1, out}, out, act});
    return *this;
}

ArchitectureDescriptor& ArchitectureDescriptor::conv(size_t out_channels) {
    DataShape in = tail_();
    if (in.h < 3 || in.w < 3) throw ShapeError("conv 3x3 needs input at least 3x3");
    if (out_channels == 0) throw ShapeError("conv channel count must be positive");
    DataShape out{in.h - 2, in.w - 2, out_channels};
    layers_.push_back({LayerKind::Conv, in, out, out_channels, Activation::Relu});
    return *this;
}

ArchitectureDescriptor& ArchitectureDescriptor::maxpool() {
    DataShape in = tail_();
    if (in.h < 2 || in.w < 2) throw ShapeError("maxpool 2x2 needs input at least 2x2");
    DataShape out{in.h / 2, in.w / 2, in.c};
    layers_.push_back({LayerKind::MaxPool, in, out, 0, Activation::None});
    return *this;
}

ArchitectureDescriptor& ArchitectureDescriptor::flatten() {
    DataShape in = tail_();
    DataShape out{1, 1, in.numel()};
    layers_.push_back({LayerKind::Flatten, in, out, 0, Activation::None});
    return *this;
}

ArchitectureDescriptor& ArchitectureDescriptor::softmax_output(size_t classes) {
    DataShape in = tail_();
    if (!is_flat(in)) throw ShapeError("softmax output requires a flat input");
    if (classes < 2) throw ShapeError("softmax output needs at least 2 classes");
    layers_.push_back({LayerKind::SoftmaxOutput, in, DataShape{1, 1, classes}, classes,
                       Activation::None});
    return *this;
}

void ArchitectureDescriptor::validate() const {
    if (layers_.empty()) throw ShapeError("architecture has no layers");
    DataShape cur = input_;
    for (const LayerSpec& layer : layers_) {
        if (!(layer.in == cur)) throw ShapeError("layer shapes do not compose");
        cur = layer.out;
    }
    for (size_t i = 0; i < layers_.size(); ++i) {
        const bool last = i + 1 == layers_.size();
        if ((layers_[i].kind == LayerKind::SoftmaxOutput) != last)
            throw ShapeError("exactly one softmax output layer is required, and it must be last");
    }
}

size_t ArchitectureDescriptor::class_count() const {
    if (layers_.empty() || layers_.back().kind != LayerKind::SoftmaxOutput)
        throw ShapeError("architecture has no softmax output layer");
    return layers_.back().units;
}

size_t ArchitectureDescriptor::parameter_count() const {
    size_t n = 0;
    for (const LayerSpec& layer : layers_) {
        switch (layer.kind) {
            case LayerKind::Dense:
            case LayerKind::SoftmaxOutput:
                n += layer.units * layer.in.c + layer.units;
                break;
            case LayerKind::Conv:
                n += layer.units * layer.in.c * 9 + layer.units;
                break;
            default:
                break;
        }
    }
    return n;
}

std::string ArchitectureDescriptor::to_text() const {
    std::ostringstream os;
    if (input_.h == 1 && input_.w == 1)
        os << "input " << input_.c << "\n";
    else
        os << "input " << input_.h << " " << input_.w << " " << input_.c << "\n";
    for (const LayerSpec& layer : layers_) {
        os << kind_name(layer.kind);
        switch (layer.kind) {
            case LayerKind::Dense:
                os << " " << layer.units << " " << (layer.act == Activation::Relu ? "relu" : "none");
                break;
            case LayerKind::Conv:
                os << " " << layer.units << " relu";
                break;
            case LayerKind::SoftmaxOutput:
                os << " " << layer.units;
                break;
            default:
                break;
        }
        os << "\n";
    }
    return os.str();
}

ArchitectureDescriptor ArchitectureDescriptor::parse(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    ArchitectureDescriptor arch;
    bool have_input = false;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word) || word.empty() || word[0] == '#') continue;
        if (word == "input") {
            std::vector<size_t> dims;
            size_t d;
            while (ls >> d) dims.push_back(d);
            if (dims.size() == 1)
                arch = start(DataShape{1, 1, dims[0]});
            else if (dims.size() == 3)
                arch = start(DataShape{dims[0], dims[1], dims[2]});
            else
                throw FormatError("input line needs 1 or 3 dimensions");
            have_input = true;
            continue;
        }
        if (!have_input) throw FormatError("architecture text must begin with an input line");
        if (word == "dense") {
            size_t units;
            std::string act;
            if (!(ls >> units >> act) || (act != "relu" && act != "none"))
                throw FormatError("dense line needs: dense <units> <relu|none>");
            arch.dense(units, act == "relu" ? Activation::Relu : Activation::None);
        } else if (word == "conv") {
            size_t units;
            std::string act;
            if (!(ls >> units >> act) || act != "relu")
                throw FormatError("conv line needs: conv <channels> relu");
            arch.conv(units);
        } else if (word == "maxpool") {
            arch.maxpool();
        } else if (word == "flatten") {
            arch.flatten();
        } else if (word == "softmax") {
            size_t classes;
            if (!(ls >> classes)) throw FormatError("softmax line needs: softmax <classes>");
            arch.softmax_output(classes);
        } else {
            throw FormatError("unknown layer kind: " + word);
        }
    }
    arch.validate();
    return arch;
}

ArchitectureDescriptor conv_classifier_arch(size_t classes) {
    auto a = ArchitectureDescriptor::start(DataShape{28, 28, 1});
    a.conv(16).maxpool().conv(32).maxpool().flatten().dense(128, Activation::Relu).softmax_output(
        classes);
    return a;
}

ArchitectureDescriptor dense_classifier_arch(size_t classes) {
    auto a = ArchitectureDescriptor::start(DataShape{28, 28, 1});
    a.flatten()
        .dense(256, Activation::Relu)
        .dense(128, Activation::Relu)
        .softmax_output(classes);
    return a;
}

ArchitectureDescriptor detector_arch(size_t feature_width) {
    auto a = ArchitectureDescriptor::start(DataShape{1, 1, feature_width});
    a.dense(512, Activation::Relu).dense(256, Activation::Relu).softmax_output(2);
    return a;
}

}  // namespace wmevade
