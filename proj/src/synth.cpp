#include "wmevade/synth.hpp"

#include <algorithm>
#include <cmath>

#include "wmevade/rng.hpp"

namespace wmevade {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Seg {
    double x0, y0, x1, y1;
};

// Elliptical arc in the unit box, y pointing down. theta in degrees,
// point(theta) = (cx + rx cos, cy - ry sin); flattened to segments.
void arc(std::vector<Seg>& out, double cx, double cy, double rx, double ry, double deg0,
         double deg1, int steps = 20) {
    double px = 0, py = 0;
    for (int i = 0; i <= steps; ++i) {
        const double t = deg0 + (deg1 - deg0) * i / steps;
        const double a = t * kPi / 180.0;
        const double x = cx + rx * std::cos(a);
        const double y = cy - ry * std::sin(a);
        if (i > 0) out.push_back({px, py, x, y});
        px = x;
        py = y;
    }
}

void seg(std::vector<Seg>& out, double x0, double y0, double x1, double y1) {
    out.push_back({x0, y0, x1, y1});
}

// Glyph strokes in the unit box. `variant` picks small stylistic differences.
std::vector<Seg> glyph_strokes(int digit, int variant) {
    std::vector<Seg> s;
    switch (digit) {
        case 0:
            arc(s, 0.5, 0.5, 0.26, 0.37, 0, 360, 28);
            break;
        case 1:
            seg(s, 0.52, 0.12, 0.52, 0.88);
            seg(s, 0.52, 0.12, 0.36, 0.3);
            if (variant == 1) seg(s, 0.36, 0.88, 0.68, 0.88);
            break;
        case 2:
            arc(s, 0.485, 0.33, 0.235, 0.2, 160, -20);
            seg(s, 0.706, 0.4, 0.25, 0.85);
            seg(s, 0.25, 0.85, 0.76, 0.85);
            break;
        case 3:
            arc(s, 0.46, 0.31, 0.22, 0.19, 150, -80);
            arc(s, 0.46, 0.67, 0.25, 0.21, 80, -150);
            break;
        case 4:
            seg(s, 0.62, 0.12, 0.24, 0.6);
            seg(s, 0.24, 0.6, 0.8, 0.6);
            seg(s, 0.62, 0.12, 0.62, 0.88);
            break;
        case 5:
            seg(s, 0.72, 0.14, 0.31, 0.14);
            seg(s, 0.31, 0.14, 0.29, 0.46);
            arc(s, 0.47, 0.64, 0.24, 0.22, 135, -135);
            break;
        case 6:
            arc(s, 0.63, 0.47, 0.31, 0.36, 80, 195);
            arc(s, 0.49, 0.67, 0.2, 0.19, 0, 360, 24);
            break;
        case 7:
            seg(s, 0.25, 0.15, 0.76, 0.15);
            seg(s, 0.76, 0.15, 0.42, 0.88);
            if (variant == 1) seg(s, 0.36, 0.52, 0.64, 0.52);
            break;
        case 8:
            arc(s, 0.5, 0.31, 0.2, 0.17, 0, 360, 24);
            arc(s, 0.5, 0.68, 0.24, 0.2, 0, 360, 24);
            break;
        case 9:
            arc(s, 0.52, 0.34, 0.21, 0.19, 0, 360, 24);
            seg(s, 0.73, 0.36, 0.6, 0.88);
            break;
        default:
            throw ArgumentError("digit must be in [0,10)");
    }
    return s;
}

double point_segment_distance(double px, double py, const Seg& s) {
    const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
    const double wx = px - s.x0, wy = py - s.y0;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (s.x0 + t * vx), dy = py - (s.y0 + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

Image render_synth_digit(int digit, uint64_t seed) {
    if (digit < 0 || digit > 9) throw ArgumentError("digit must be in [0,10)");
    Rng rng(seed);

    const int variant = static_cast<int>(rng.below(2));
    std::vector<Seg> strokes = glyph_strokes(digit, variant);

    // Seeded affine jitter around the glyph centre.
    const double rot = rng.uniform(-0.17, 0.17);           // ~±10 degrees
    const double scale = rng.uniform(0.82, 1.04);
    const double shear = rng.uniform(-0.1, 0.1);
    const double tx = rng.uniform(-1.8, 1.8);              // pixels
    const double ty = rng.uniform(-1.8, 1.8);
    const double thickness = rng.uniform(1.15, 2.0);       // pixels (stroke radius)
    const double ink = rng.uniform(0.72, 1.0);
    const double glyph_px = 23.0;                          // glyph box inside 28px canvas

    const double ca = std::cos(rot), sa = std::sin(rot);
    auto map = [&](double x, double y, double& ox, double& oy) {
        double u = (x - 0.5) * scale + shear * (y - 0.5) * scale;
        double v = (y - 0.5) * scale;
        ox = (ca * u - sa * v) * glyph_px + 14.0 + tx;
        oy = (sa * u + ca * v) * glyph_px + 14.0 + ty;
    };
    for (Seg& s : strokes) {
        map(s.x0, s.y0, s.x0, s.y0);
        map(s.x1, s.y1, s.x1, s.y1);
    }

    Image img(28, 28, 1);
    for (const Seg& s : strokes) {
        const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(s.x0, s.x1) - thickness - 1)));
        const int x_hi = std::min(27, static_cast<int>(std::ceil(std::max(s.x0, s.x1) + thickness + 1)));
        const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(s.y0, s.y1) - thickness - 1)));
        const int y_hi = std::min(27, static_cast<int>(std::ceil(std::max(s.y0, s.y1) + thickness + 1)));
        for (int y = y_lo; y <= y_hi; ++y) {
            for (int x = x_lo; x <= x_hi; ++x) {
                const double d = point_segment_distance(x + 0.5, y + 0.5, s);
                const double cover = std::clamp(thickness + 0.5 - d, 0.0, 1.0);
                if (cover > 0) {
                    float& px = img.at(static_cast<size_t>(y), static_cast<size_t>(x));
                    px = std::max(px, static_cast<float>(ink * cover));
                }
            }
        }
    }

    // Pixel noise, clamped to [0,1].
    for (float& p : img.pixels) {
        p += static_cast<float>(rng.normal() * 0.035);
        p = std::clamp(p, 0.0f, 1.0f);
    }
    return img;
}

Dataset make_synth_digits(size_t count, uint64_t seed, Split split) {
    if (count == 0) throw ArgumentError("dataset size must be positive");
    Dataset data;
    data.class_count = 10;
    data.split = split;
    data.images.reserve(count);
    data.labels.reserve(count);
    // Distinct stream per split so train and test never share render seeds.
    Rng seeder = Rng::stream(seed, split == Split::Train ? 0 : 1);
    for (size_t i = 0; i < count; ++i) {
        const int digit = static_cast<int>(i % 10);
        data.images.push_back(render_synth_digit(digit, seeder()));
        data.labels.push_back(digit);
    }
    return data;
}

}  // namespace wmevade
