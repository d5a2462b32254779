#include "wmevade/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wmevade/rng.hpp"

namespace wmevade {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate > 0.0f)) throw ConfigError("learning rate must be positive");
}

namespace {

// Index of the (kernel, bias) pair in Model::weights for each layer; SIZE_MAX
// for layers without parameters.
std::vector<size_t> weight_index_map(const ArchitectureDescriptor& arch) {
    std::vector<size_t> map(arch.layers().size(), SIZE_MAX);
    size_t next = 0;
    for (size_t i = 0; i < arch.layers().size(); ++i) {
        switch (arch.layers()[i].kind) {
            case LayerKind::Dense:
            case LayerKind::Conv:
            case LayerKind::SoftmaxOutput:
                map[i] = next;
                next += 2;
                break;
            default:
                break;
        }
    }
    return map;
}

std::vector<Tensor> weight_shapes(const ArchitectureDescriptor& arch) {
    std::vector<Tensor> out;
    for (const LayerSpec& layer : arch.layers()) {
        switch (layer.kind) {
            case LayerKind::Dense:
            case LayerKind::SoftmaxOutput:
                out.emplace_back(std::vector<size_t>{layer.units, layer.in.c});
                out.emplace_back(std::vector<size_t>{layer.units});
                break;
            case LayerKind::Conv:
                out.emplace_back(std::vector<size_t>{layer.units, layer.in.c, 3, 3});
                out.emplace_back(std::vector<size_t>{layer.units});
                break;
            default:
                break;
        }
    }
    return out;
}

// ---- templated engine core (float for training, double for grad checks) ----

template <typename T>
struct Params {
    std::vector<std::vector<T>> tensors;  // mirrors Model::weights

    static Params from_model(const Model& m) {
        Params p;
        p.tensors.reserve(m.weights.size());
        for (const Tensor& w : m.weights)
            p.tensors.emplace_back(w.values.begin(), w.values.end());
        return p;
    }

    void store_into(Model& m) const {
        for (size_t i = 0; i < tensors.size(); ++i) {
            auto& dst = m.weights[i].values;
            for (size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<float>(tensors[i][j]);
        }
    }
};

// Per-sample activations plus maxpool argmax positions for backward.
template <typename T>
struct Workspace {
    std::vector<std::vector<T>> acts;      // acts[0] = input, acts[i+1] = layer i output
    std::vector<std::vector<T>> grads;     // gradient wrt acts, same shapes
    std::vector<std::vector<int>> pool_ix; // per maxpool layer, else empty

    void resize(const ArchitectureDescriptor& arch) {
        const auto& layers = arch.layers();
        acts.assign(layers.size() + 1, {});
        grads.assign(layers.size() + 1, {});
        pool_ix.assign(layers.size(), {});
        acts[0].resize(arch.input().numel());
        grads[0].resize(arch.input().numel());
        for (size_t i = 0; i < layers.size(); ++i) {
            acts[i + 1].resize(layers[i].out.numel());
            grads[i + 1].resize(layers[i].out.numel());
            if (layers[i].kind == LayerKind::MaxPool) pool_ix[i].resize(layers[i].out.numel());
        }
    }
};

template <typename T>
void dense_forward(const LayerSpec& L, const std::vector<T>& W, const std::vector<T>& b,
                   const std::vector<T>& x, std::vector<T>& y, bool relu) {
    const size_t in = L.in.c, out = L.units;
    for (size_t o = 0; o < out; ++o) {
        T acc = b[o];
        const T* row = W.data() + o * in;
        for (size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = relu ? std::max(acc, T(0)) : acc;
    }
}

template <typename T>
void conv_forward(const LayerSpec& L, const std::vector<T>& K, const std::vector<T>& b,
                  const std::vector<T>& x, std::vector<T>& y) {
    const size_t iw = L.in.w, ic = L.in.c;
    const size_t oh = L.out.h, ow = L.out.w, oc = L.units;
    for (size_t oy = 0; oy < oh; ++oy) {
        for (size_t ox = 0; ox < ow; ++ox) {
            T* dst = y.data() + (oy * ow + ox) * oc;
            for (size_t o = 0; o < oc; ++o) dst[o] = b[o];
            for (size_t ky = 0; ky < 3; ++ky) {
                const T* xrow = x.data() + ((oy + ky) * iw + ox) * ic;
                for (size_t kx = 0; kx < 3; ++kx) {
                    const T* xpix = xrow + kx * ic;
                    for (size_t c = 0; c < ic; ++c) {
                        const T xv = xpix[c];
                        const T* kcol = K.data() + (c * 3 + ky) * 3 + kx;
                        for (size_t o = 0; o < oc; ++o)
                            dst[o] += xv * kcol[o * ic * 9];
                    }
                }
            }
            for (size_t o = 0; o < oc; ++o) dst[o] = std::max(dst[o], T(0));
        }
    }
}

template <typename T>
void maxpool_forward(const LayerSpec& L, const std::vector<T>& x, std::vector<T>& y,
                     std::vector<int>& argmax) {
    const size_t iw = L.in.w, ic = L.in.c;
    const size_t oh = L.out.h, ow = L.out.w;
    for (size_t oy = 0; oy < oh; ++oy) {
        for (size_t ox = 0; ox < ow; ++ox) {
            for (size_t c = 0; c < ic; ++c) {
                size_t best = ((2 * oy) * iw + 2 * ox) * ic + c;
                T bv = x[best];
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const size_t ix = ((2 * oy + dy) * iw + 2 * ox + dx) * ic + c;
                        if (x[ix] > bv) {
                            bv = x[ix];
                            best = ix;
                        }
                    }
                }
                const size_t oix = (oy * ow + ox) * ic + c;
                y[oix] = bv;
                argmax[oix] = static_cast<int>(best);
            }
        }
    }
}

template <typename T>
void softmax_inplace(std::vector<T>& v) {
    T mx = v[0];
    for (T e : v) mx = std::max(mx, e);
    T sum = 0;
    for (T& e : v) {
        e = std::exp(e - mx);
        sum += e;
    }
    for (T& e : v) e /= sum;
}

// Forward one sample already loaded into ws.acts[0]; fills all activations.
template <typename T>
void forward_sample(const ArchitectureDescriptor& arch, const Params<T>& params,
                    const std::vector<size_t>& wmap, Workspace<T>& ws) {
    const auto& layers = arch.layers();
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& L = layers[i];
        const std::vector<T>& x = ws.acts[i];
        std::vector<T>& y = ws.acts[i + 1];
        switch (L.kind) {
            case LayerKind::Dense:
                dense_forward(L, params.tensors[wmap[i]], params.tensors[wmap[i] + 1], x, y,
                              L.act == Activation::Relu);
                break;
            case LayerKind::SoftmaxOutput:
                dense_forward(L, params.tensors[wmap[i]], params.tensors[wmap[i] + 1], x, y, false);
                softmax_inplace(y);
                break;
            case LayerKind::Conv:
                conv_forward(L, params.tensors[wmap[i]], params.tensors[wmap[i] + 1], x, y);
                break;
            case LayerKind::MaxPool:
                maxpool_forward(L, x, y, ws.pool_ix[i]);
                break;
            case LayerKind::Flatten:
                y = x;
                break;
        }
    }
}

// Backward one sample; expects ws.acts filled by forward_sample. Accumulates
// parameter gradients into grads.tensors.
template <typename T>
void backward_sample(const ArchitectureDescriptor& arch, const Params<T>& params,
                     const std::vector<size_t>& wmap, int label, Workspace<T>& ws,
                     Params<T>& grads) {
    const auto& layers = arch.layers();
    const size_t last = layers.size() - 1;

    // Softmax + cross-entropy fused gradient wrt logits.
    {
        const std::vector<T>& probs = ws.acts[last + 1];
        std::vector<T>& d = ws.grads[last + 1];
        for (size_t k = 0; k < probs.size(); ++k) d[k] = probs[k];
        d[static_cast<size_t>(label)] -= T(1);
    }

    for (size_t ri = layers.size(); ri-- > 0;) {
        const LayerSpec& L = layers[ri];
        const std::vector<T>& x = ws.acts[ri];
        const std::vector<T>& y = ws.acts[ri + 1];
        std::vector<T>& dy = ws.grads[ri + 1];
        std::vector<T>& dx = ws.grads[ri];
        switch (L.kind) {
            case LayerKind::Dense:
            case LayerKind::SoftmaxOutput: {
                if (L.kind == LayerKind::Dense && L.act == Activation::Relu) {
                    for (size_t o = 0; o < dy.size(); ++o)
                        if (y[o] <= T(0)) dy[o] = T(0);
                }
                const size_t in = L.in.c, out = L.units;
                const std::vector<T>& W = params.tensors[wmap[ri]];
                std::vector<T>& dW = grads.tensors[wmap[ri]];
                std::vector<T>& db = grads.tensors[wmap[ri] + 1];
                std::fill(dx.begin(), dx.end(), T(0));
                for (size_t o = 0; o < out; ++o) {
                    const T g = dy[o];
                    db[o] += g;
                    T* dwrow = dW.data() + o * in;
                    const T* wrow = W.data() + o * in;
                    for (size_t i = 0; i < in; ++i) {
                        dwrow[i] += g * x[i];
                        dx[i] += g * wrow[i];
                    }
                }
                break;
            }
            case LayerKind::Conv: {
                for (size_t k = 0; k < dy.size(); ++k)
                    if (y[k] <= T(0)) dy[k] = T(0);
                const size_t iw = L.in.w, ic = L.in.c;
                const size_t oh = L.out.h, ow = L.out.w, oc = L.units;
                const std::vector<T>& K = params.tensors[wmap[ri]];
                std::vector<T>& dK = grads.tensors[wmap[ri]];
                std::vector<T>& db = grads.tensors[wmap[ri] + 1];
                std::fill(dx.begin(), dx.end(), T(0));
                for (size_t oy = 0; oy < oh; ++oy) {
                    for (size_t ox = 0; ox < ow; ++ox) {
                        const T* g = dy.data() + (oy * ow + ox) * oc;
                        for (size_t o = 0; o < oc; ++o) db[o] += g[o];
                        for (size_t ky = 0; ky < 3; ++ky) {
                            for (size_t kx = 0; kx < 3; ++kx) {
                                const size_t pix = ((oy + ky) * iw + ox + kx) * ic;
                                for (size_t c = 0; c < ic; ++c) {
                                    const T xv = ws.acts[ri][pix + c];
                                    const size_t kbase = (c * 3 + ky) * 3 + kx;
                                    T acc = 0;
                                    for (size_t o = 0; o < oc; ++o) {
                                        dK[o * ic * 9 + kbase] += g[o] * xv;
                                        acc += g[o] * K[o * ic * 9 + kbase];
                                    }
                                    dx[pix + c] += acc;
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::MaxPool: {
                std::fill(dx.begin(), dx.end(), T(0));
                const std::vector<int>& amax = ws.pool_ix[ri];
                for (size_t k = 0; k < dy.size(); ++k) dx[static_cast<size_t>(amax[k])] += dy[k];
                break;
            }
            case LayerKind::Flatten:
                dx = dy;
                break;
        }
    }
}

template <typename T>
double sample_loss(const Workspace<T>& ws, int label) {
    const std::vector<T>& probs = ws.acts.back();
    const double p = static_cast<double>(probs[static_cast<size_t>(label)]);
    return -std::log(std::max(p, 1e-300));
}

void check_batch_shape(const ArchitectureDescriptor& arch, const Tensor& batch) {
    const DataShape& in = arch.input();
    const auto& s = batch.shape;
    bool ok = false;
    if (in.h == 1 && in.w == 1)
        ok = (s.size() == 2 && s[1] == in.c) ||
             (s.size() == 4 && s[1] == 1 && s[2] == 1 && s[3] == in.c);
    else
        ok = s.size() == 4 && s[1] == in.h && s[2] == in.w && s[3] == in.c;
    if (!ok) throw ShapeError("batch shape does not match architecture input");
    if (s[0] == 0) throw ShapeError("batch is empty");
}

void load_sample(const Tensor& batch, size_t row, std::vector<float>& dst) {
    const size_t stride = dst.size();
    const float* src = batch.data() + row * stride;
    std::copy(src, src + stride, dst.begin());
}

template <typename T>
void load_sample_cast(const Tensor& batch, size_t row, std::vector<T>& dst) {
    const size_t stride = dst.size();
    const float* src = batch.data() + row * stride;
    for (size_t i = 0; i < stride; ++i) dst[i] = static_cast<T>(src[i]);
}

Model run_sgd(const Model& start, const SampleBatch& data, size_t epochs, float lr,
              size_t batch_size, uint64_t seed, bool shuffle, std::vector<double>* loss_history) {
    start.arch.validate();
    check_batch_shape(start.arch, data.inputs);
    if (data.count() == 0) throw ArgumentError("training data is empty");
    if (data.inputs.shape[0] != data.count())
        throw ConsistencyError("input row count does not match label count");
    const size_t classes = start.arch.class_count();
    for (int label : data.labels)
        if (label < 0 || static_cast<size_t>(label) >= classes)
            throw LabelError("label out of range [0, classes)");

    Model model = start;
    if (lr == 0.0f) return model;

    const auto wmap = weight_index_map(model.arch);
    auto params = Params<float>::from_model(model);
    Params<float> grads;
    grads.tensors.resize(params.tensors.size());
    for (size_t i = 0; i < params.tensors.size(); ++i)
        grads.tensors[i].assign(params.tensors[i].size(), 0.0f);

    Workspace<float> ws;
    ws.resize(model.arch);

    Rng rng(seed);
    std::vector<size_t> order(data.count());
    std::iota(order.begin(), order.end(), size_t{0});

    for (size_t epoch = 0; epoch < epochs; ++epoch) {
        if (shuffle) {
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.below(i)]);
        }
        double loss_sum = 0.0;
        for (size_t pos = 0; pos < order.size();) {
            const size_t n = std::min(batch_size, order.size() - pos);
            for (auto& g : grads.tensors) std::fill(g.begin(), g.end(), 0.0f);
            for (size_t k = 0; k < n; ++k) {
                const size_t row = order[pos + k];
                load_sample(data.inputs, row, ws.acts[0]);
                forward_sample(model.arch, params, wmap, ws);
                const double loss = sample_loss(ws, data.labels[row]);
                if (!std::isfinite(loss)) throw NumericError("non-finite loss during training");
                loss_sum += loss;
                backward_sample(model.arch, params, wmap, data.labels[row], ws, grads);
            }
            const float scale = lr / static_cast<float>(n);
            for (size_t t = 0; t < params.tensors.size(); ++t) {
                auto& w = params.tensors[t];
                const auto& g = grads.tensors[t];
                for (size_t j = 0; j < w.size(); ++j) w[j] -= scale * g[j];
            }
            pos += n;
        }
        if (loss_history) loss_history->push_back(loss_sum / static_cast<double>(data.count()));
    }

    params.store_into(model);
    for (const Tensor& w : model.weights)
        if (!w.all_finite()) throw NumericError("non-finite weights after training");
    return model;
}

}  // namespace

Model init_model(const ArchitectureDescriptor& arch, uint64_t seed, ModelMetadata metadata) {
    arch.validate();
    Model m;
    m.arch = arch;
    m.weights = weight_shapes(arch);
    m.metadata = std::move(metadata);
    m.metadata.class_count = arch.class_count();
    m.metadata.training_seed = seed;
    if (m.metadata.class_count < 2) throw ShapeError("model needs at least 2 classes");

    Rng rng(seed);
    size_t wi = 0;
    for (const LayerSpec& layer : arch.layers()) {
        size_t fan_in = 0;
        switch (layer.kind) {
            case LayerKind::Dense:
            case LayerKind::SoftmaxOutput:
                fan_in = layer.in.c;
                break;
            case LayerKind::Conv:
                fan_in = layer.in.c * 9;
                break;
            default:
                continue;
        }
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (float& v : m.weights[wi].values) v = static_cast<float>(rng.uniform(-limit, limit));
        // bias tensor stays zero
        wi += 2;
    }
    return m;
}

Tensor forward(const Model& model, const Tensor& batch) {
    model.arch.validate();
    check_batch_shape(model.arch, batch);
    const size_t n = batch.shape[0];
    const size_t classes = model.arch.class_count();
    const auto wmap = weight_index_map(model.arch);
    const auto params = Params<float>::from_model(model);
    Workspace<float> ws;
    ws.resize(model.arch);

    Tensor out({n, classes});
    for (size_t row = 0; row < n; ++row) {
        load_sample(batch, row, ws.acts[0]);
        forward_sample(model.arch, params, wmap, ws);
        const auto& probs = ws.acts.back();
        for (size_t k = 0; k < classes; ++k) {
            if (!std::isfinite(probs[k])) throw NumericError("non-finite output probability");
            out.values[row * classes + k] = probs[k];
        }
    }
    return out;
}

namespace {

Tensor as_batch_of_one(const Model& model, const Tensor& image) {
    const DataShape& in = model.arch.input();
    const auto& s = image.shape;
    const bool single =
        (s.size() == 3 && s[0] == in.h && s[1] == in.w && s[2] == in.c) ||
        (s.size() == 1 && in.h == 1 && in.w == 1 && s[0] == in.c);
    if (single) {
        Tensor b = image;
        b.shape.insert(b.shape.begin(), 1);
        return b;
    }
    if (!s.empty() && s[0] == 1) return image;  // already a batch of one
    throw ShapeError("image shape does not match architecture input");
}

}  // namespace

int predict(const Model& model, const Tensor& image) {
    const Tensor probs = forward(model, as_batch_of_one(model, image));
    int best = 0;
    float bv = probs.values[0];
    for (size_t k = 1; k < probs.values.size(); ++k) {
        if (probs.values[k] > bv) {
            bv = probs.values[k];
            best = static_cast<int>(k);
        }
    }
    return best;
}

std::vector<float> extract_features(const Model& model, const Tensor& image) {
    model.arch.validate();
    if (model.arch.layers().size() < 2)
        throw ArgumentError("feature extraction needs a model with at least 2 layers");
    const Tensor batch = as_batch_of_one(model, image);
    check_batch_shape(model.arch, batch);
    const auto wmap = weight_index_map(model.arch);
    const auto params = Params<float>::from_model(model);
    Workspace<float> ws;
    ws.resize(model.arch);
    load_sample(batch, 0, ws.acts[0]);
    forward_sample(model.arch, params, wmap, ws);
    return ws.acts[ws.acts.size() - 2];  // input of the softmax output layer
}

TrainResult train(const Model& model, const SampleBatch& data, const TrainConfig& cfg) {
    cfg.validate();
    TrainResult result;
    result.model = run_sgd(model, data, cfg.epochs, cfg.learning_rate, cfg.batch_size, cfg.seed,
                           cfg.shuffle, &result.loss_history);
    return result;
}

Model continue_training(const Model& model, const SampleBatch& data, size_t epochs, float lr,
                        size_t batch_size, uint64_t seed, bool shuffle) {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (lr < 0.0f) throw ConfigError("learning rate must be non-negative");
    return run_sgd(model, data, epochs, lr, batch_size, seed, shuffle, nullptr);
}

double gradient_check(const Model& model, const Tensor& image, int label) {
    model.arch.validate();
    if (model.arch.parameter_count() >= 10000)
        throw ArgumentError("gradient check is limited to models below 10^4 parameters");
    const size_t classes = model.arch.class_count();
    if (label < 0 || static_cast<size_t>(label) >= classes) throw LabelError("label out of range");

    const Tensor batch = as_batch_of_one(model, image);
    check_batch_shape(model.arch, batch);

    const auto wmap = weight_index_map(model.arch);
    auto params = Params<double>::from_model(model);
    Params<double> grads;
    grads.tensors.resize(params.tensors.size());
    for (size_t i = 0; i < params.tensors.size(); ++i)
        grads.tensors[i].assign(params.tensors[i].size(), 0.0);

    Workspace<double> ws;
    ws.resize(model.arch);
    load_sample_cast(batch, 0, ws.acts[0]);
    forward_sample(model.arch, params, wmap, ws);
    backward_sample(model.arch, params, wmap, label, ws, grads);

    const double step = 1e-3;
    double worst = 0.0;
    for (size_t t = 0; t < params.tensors.size(); ++t) {
        for (size_t j = 0; j < params.tensors[t].size(); ++j) {
            const double saved = params.tensors[t][j];
            params.tensors[t][j] = saved + step;
            forward_sample(model.arch, params, wmap, ws);
            const double lp = sample_loss(ws, label);
            params.tensors[t][j] = saved - step;
            forward_sample(model.arch, params, wmap, ws);
            const double lm = sample_loss(ws, label);
            params.tensors[t][j] = saved;
            const double fd = (lp - lm) / (2.0 * step);
            const double an = grads.tensors[t][j];
            const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
            worst = std::max(worst, std::abs(an - fd) / denom);
        }
    }
    return worst;
}

double mean_loss(const Model& model, const SampleBatch& data) {
    if (data.count() == 0) throw ArgumentError("empty batch");
    const Tensor probs = forward(model, data.inputs);
    const size_t classes = model.arch.class_count();
    double sum = 0.0;
    for (size_t row = 0; row < data.count(); ++row) {
        const double p = probs.values[row * classes + static_cast<size_t>(data.labels[row])];
        sum += -std::log(std::max(p, 1e-300));
    }
    return sum / static_cast<double>(data.count());
}

double accuracy(const Model& model, const SampleBatch& data) {
    if (data.count() == 0) throw ArgumentError("empty batch");
    const Tensor probs = forward(model, data.inputs);
    const size_t classes = model.arch.class_count();
    size_t hits = 0;
    for (size_t row = 0; row < data.count(); ++row) {
        const float* p = probs.data() + row * classes;
        int best = 0;
        for (size_t k = 1; k < classes; ++k)
            if (p[k] > p[best]) best = static_cast<int>(k);
        if (best == data.labels[row]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.count());
}

}  // namespace wmevade
