#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "wmevade/error.hpp"

namespace wmevade {

// Dense row-major value container. Holds pixels, activations and weights.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<float> values;

    Tensor() = default;
    explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
        values.assign(numel_of(shape), 0.0f);
    }
    Tensor(std::vector<size_t> s, std::vector<float> v) : shape(std::move(s)), values(std::move(v)) {
        if (values.size() != numel_of(shape))
            throw ShapeError("tensor value count does not match shape");
    }

    static size_t numel_of(const std::vector<size_t>& s) {
        size_t n = 1;
        for (size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    size_t numel() const { return values.size(); }

    float* data() { return values.data(); }
    const float* data() const { return values.data(); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (float v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline bool shape_equal(const std::vector<size_t>& a, const std::vector<size_t>& b) {
    return a == b;
}

}  // namespace wmevade
