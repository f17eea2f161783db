#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace pathprof {

struct PoolArgmax {
    std::int64_t input_flat = -1;
    int window_offset = -1;  // ky * kernel_w + kx
};

// Argmax over one pooling window; ties go to the lowest flat input index (the
// scan order ascends in flat index, comparison is strict). Forward evaluation,
// gradient routing, and path extraction all share this rule.
inline PoolArgmax pool_window_argmax(const Eigen::VectorXd& in, int height, int width, int channel,
                                     int oy, int ox, int kernel_h, int kernel_w, int stride) {
    PoolArgmax best;
    double best_val = 0.0;
    for (int ky = 0; ky < kernel_h; ++ky) {
        for (int kx = 0; kx < kernel_w; ++kx) {
            const int iy = oy * stride + ky;
            const int ix = ox * stride + kx;
            const std::int64_t flat = static_cast<std::int64_t>(channel) * height * width +
                                      static_cast<std::int64_t>(iy) * width + ix;
            const double v = in[flat];
            if (best.input_flat < 0 || v > best_val) {
                best.input_flat = flat;
                best.window_offset = ky * kernel_w + kx;
                best_val = v;
            }
        }
    }
    return best;
}

}  // namespace pathprof
