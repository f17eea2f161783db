#include "pathprof/synth.hpp"

#include <cmath>
#include <numbers>

#include "pathprof/errors.hpp"
#include "pathprof/rng.hpp"

namespace pathprof {

namespace {

constexpr int kSide = 28;

struct Point {
    double x;
    double y;
};

// Digit skeletons in unit space, x right, y down.
using Stroke = std::vector<Point>;

Stroke line(Point a, Point b) { return {a, b}; }

Stroke arc(Point center, double rx, double ry, double a0, double a1, int segments = 24) {
    Stroke s;
    for (int i = 0; i <= segments; ++i) {
        const double t = a0 + (a1 - a0) * i / segments;
        s.push_back({center.x + rx * std::cos(t), center.y + ry * std::sin(t)});
    }
    return s;
}

std::vector<Stroke> digit_strokes(int digit, int variant) {
    constexpr double pi = std::numbers::pi;
    switch (digit) {
        case 0:
            return {arc({0.5, 0.5}, 0.26, 0.36, 0.0, 2.0 * pi, 40)};
        case 1:
            if (variant == 0) {
                return {line({0.52, 0.12}, {0.52, 0.88}), line({0.36, 0.30}, {0.52, 0.12})};
            }
            return {line({0.5, 0.12}, {0.5, 0.88}), line({0.34, 0.26}, {0.5, 0.12}),
                    line({0.32, 0.88}, {0.68, 0.88})};
        case 2:
            if (variant == 0) {
                return {arc({0.5, 0.32}, 0.22, 0.2, -pi, 0.15 * pi),
                        line({0.68, 0.42}, {0.3, 0.88}), line({0.3, 0.88}, {0.72, 0.88})};
            }
            return {arc({0.48, 0.3}, 0.2, 0.18, -0.9 * pi, 0.2 * pi),
                    arc({0.9, 0.95}, 0.45, 0.42, -0.85 * pi, -0.55 * pi),
                    line({0.3, 0.88}, {0.74, 0.88})};
        case 3:
            return {arc({0.46, 0.31}, 0.2, 0.18, -0.8 * pi, 0.5 * pi),
                    arc({0.46, 0.68}, 0.23, 0.21, -0.5 * pi, 0.8 * pi)};
        case 4:
            if (variant == 0) {
                return {line({0.64, 0.12}, {0.64, 0.88}), line({0.64, 0.12}, {0.28, 0.62}),
                        line({0.28, 0.62}, {0.8, 0.62})};
            }
            return {line({0.38, 0.14}, {0.3, 0.56}), line({0.3, 0.56}, {0.76, 0.56}),
                    line({0.62, 0.3}, {0.62, 0.88})};
        case 5:
            return {line({0.7, 0.13}, {0.34, 0.13}), line({0.34, 0.13}, {0.32, 0.45}),
                    arc({0.47, 0.64}, 0.22, 0.22, -0.45 * pi, 0.75 * pi)};
        case 6:
            return {arc({0.62, 0.3}, 0.33, 0.45, 0.75 * pi, 1.2 * pi, 16),
                    arc({0.5, 0.66}, 0.18, 0.19, 0.0, 2.0 * pi, 32)};
        case 7:
            if (variant == 0) {
                return {line({0.28, 0.14}, {0.74, 0.14}), line({0.74, 0.14}, {0.42, 0.88})};
            }
            return {line({0.28, 0.14}, {0.74, 0.14}), line({0.74, 0.14}, {0.42, 0.88}),
                    line({0.36, 0.5}, {0.66, 0.5})};
        case 8:
            return {arc({0.5, 0.31}, 0.17, 0.17, 0.0, 2.0 * pi, 32),
                    arc({0.5, 0.67}, 0.21, 0.2, 0.0, 2.0 * pi, 32)};
        case 9:
            if (variant == 0) {
                return {arc({0.5, 0.34}, 0.18, 0.19, 0.0, 2.0 * pi, 32),
                        arc({0.37, 0.45}, 0.33, 0.45, -0.18 * pi, 0.28 * pi, 16)};
            }
            return {arc({0.5, 0.34}, 0.18, 0.19, 0.0, 2.0 * pi, 32),
                    line({0.67, 0.36}, {0.62, 0.88})};
        default:
            throw DomainError("digit must be 0..9");
    }
}

struct Jitter {
    double rot, sx, sy, shear, tx, ty, thickness, intensity, noise_sigma;
};

// Smooth low-frequency displacement along a stroke's arclength.
struct Wobble {
    double ax1, px1, ax2, px2, ay1, py1, ay2, py2;

    Point offset(double t) const {
        constexpr double two_pi = 2.0 * std::numbers::pi;
        return {ax1 * std::sin(two_pi * t + px1) + ax2 * std::sin(2.0 * two_pi * t + px2),
                ay1 * std::sin(two_pi * t + py1) + ay2 * std::sin(2.0 * two_pi * t + py2)};
    }
};

Point apply_jitter(const Jitter& j, Point p) {
    // Around the glyph center, then translate.
    const double cx = p.x - 0.5, cy = p.y - 0.5;
    const double xs = j.sx * cx + j.shear * cy;
    const double ys = j.sy * cy;
    const double cosr = std::cos(j.rot), sinr = std::sin(j.rot);
    return {0.5 + cosr * xs - sinr * ys + j.tx, 0.5 + sinr * xs + cosr * ys + j.ty};
}

// Gaussian splat along the stroke polylines, max-blended.
void rasterize(const std::vector<Stroke>& strokes, const std::vector<Wobble>& wobbles,
               const Jitter& j, Eigen::VectorXf& out) {
    Eigen::ArrayXXd canvas = Eigen::ArrayXXd::Zero(kSide, kSide);
    const double sigma = j.thickness;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const int radius = static_cast<int>(std::ceil(2.5 * sigma));
    for (std::size_t si = 0; si < strokes.size(); ++si) {
        const Stroke& stroke = strokes[si];
        const Wobble& wob = wobbles[si];
        double total_len = 0.0;
        for (std::size_t i = 0; i + 1 < stroke.size(); ++i) {
            total_len += std::hypot(stroke[i + 1].x - stroke[i].x, stroke[i + 1].y - stroke[i].y);
        }
        double walked = 0.0;
        for (std::size_t i = 0; i + 1 < stroke.size(); ++i) {
            const Point a = apply_jitter(j, stroke[i]);
            const Point b = apply_jitter(j, stroke[i + 1]);
            const double seg_len =
                std::hypot(stroke[i + 1].x - stroke[i].x, stroke[i + 1].y - stroke[i].y);
            const double len = std::hypot(b.x - a.x, b.y - a.y);
            const int steps = std::max(1, static_cast<int>(std::ceil(len * kSide * 2)));
            for (int s = 0; s <= steps; ++s) {
                const double t = static_cast<double>(s) / steps;
                const double arc_t =
                    total_len > 0.0 ? (walked + t * seg_len) / total_len : 0.0;
                const Point w = wob.offset(arc_t);
                const double px = (a.x + t * (b.x - a.x) + w.x) * kSide - 0.5;
                const double py = (a.y + t * (b.y - a.y) + w.y) * kSide - 0.5;
                const int x0 = std::max(0, static_cast<int>(std::floor(px)) - radius);
                const int x1 = std::min(kSide - 1, static_cast<int>(std::ceil(px)) + radius);
                const int y0 = std::max(0, static_cast<int>(std::floor(py)) - radius);
                const int y1 = std::min(kSide - 1, static_cast<int>(std::ceil(py)) + radius);
                for (int y = y0; y <= y1; ++y) {
                    for (int x = x0; x <= x1; ++x) {
                        const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
                        const double v = std::exp(-d2 * inv2s2);
                        if (v > canvas(y, x)) {
                            canvas(y, x) = v;
                        }
                    }
                }
            }
            walked += seg_len;
        }
    }
    out.resize(kSide * kSide);
    for (int y = 0; y < kSide; ++y) {
        for (int x = 0; x < kSide; ++x) {
            out[y * kSide + x] = static_cast<float>(canvas(y, x) * j.intensity);
        }
    }
}

double gaussian(std::mt19937_64& rng) {
    // Box-Muller on deterministic uniforms.
    const double u1 = std::max(uniform_unit(rng), 1e-12);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

LabeledDataset make_synthetic_digits(int count, std::uint64_t seed, const std::string& split) {
    if (count <= 0) {
        throw DomainError("synthetic digit count must be positive");
    }
    std::mt19937_64 rng(seed);
    LabeledDataset data;
    data.image_shape = {1, kSide, kSide};
    data.num_classes = 10;
    data.split = split;
    data.images.reserve(static_cast<std::size_t>(count));
    data.labels.reserve(static_cast<std::size_t>(count));

    for (int i = 0; i < count; ++i) {
        const int digit = i % 10;
        Jitter j;
        j.rot = uniform_real(rng, -0.27, 0.27);
        j.sx = uniform_real(rng, 0.75, 1.2);
        j.sy = uniform_real(rng, 0.75, 1.2);
        j.shear = uniform_real(rng, -0.22, 0.22);
        j.tx = uniform_real(rng, -0.12, 0.12);
        j.ty = uniform_real(rng, -0.12, 0.12);
        j.thickness = uniform_real(rng, 0.5, 1.2);
        j.intensity = uniform_real(rng, 0.65, 1.0);
        j.noise_sigma = uniform_real(rng, 0.02, 0.11);

        const int variant = 0;
        (void)bounded_rand(rng, 2);  // keep the draw sequence stable
        const auto strokes = digit_strokes(digit, variant);
        std::vector<Wobble> wobbles;
        for (std::size_t s = 0; s < strokes.size(); ++s) {
            Wobble w;
            const double amp = 0.0;
            w.ax1 = uniform_real(rng, -amp, amp);
            w.px1 = uniform_real(rng, 0.0, 6.283);
            w.ax2 = uniform_real(rng, -amp * 0.6, amp * 0.6);
            w.px2 = uniform_real(rng, 0.0, 6.283);
            w.ay1 = uniform_real(rng, -amp, amp);
            w.py1 = uniform_real(rng, 0.0, 6.283);
            w.ay2 = uniform_real(rng, -amp * 0.6, amp * 0.6);
            w.py2 = uniform_real(rng, 0.0, 6.283);
            wobbles.push_back(w);
        }
        Eigen::VectorXf img;
        rasterize(strokes, wobbles, j, img);
        for (Eigen::Index p = 0; p < img.size(); ++p) {
            double v = static_cast<double>(img[p]) + j.noise_sigma * gaussian(rng);
            v = std::min(1.0, std::max(0.0, v));
            // 8-bit quantization: exact IDX round-trips.
            img[p] = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
        }
        data.images.push_back(std::move(img));
        data.labels.push_back(digit);
    }
    return data;
}

}  // namespace pathprof
