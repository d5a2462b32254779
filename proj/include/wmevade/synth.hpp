#pragma once

#include <cstdint>

#include "wmevade/data.hpp"

namespace wmevade {

// Deterministic 28x28 digit corpus: stroke-defined glyphs rendered with
// seeded affine jitter, stroke-width/intensity variation and pixel noise.
// Stands in for MNIST where the real IDX files are not available; written
// and read through the same IDX codec.
Dataset make_synth_digits(size_t count, uint64_t seed, Split split);

// One rendered digit (label in [0,10)).
Image render_synth_digit(int digit, uint64_t seed);

}  // namespace wmevade
