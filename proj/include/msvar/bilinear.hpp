#pragma once

#include <cmath>

#include "msvar/tensor.hpp"

namespace msvar {

// Bilinear resampling with half-pixel sample centers, used for both the
// up() and down() directions of the residual pyramid. Resampling at the
// native size is an exact identity.
inline Tensor resize_bilinear(const Tensor& in, int64_t oh, int64_t ow) {
    check_shape(in.rank() == 3, "resize_bilinear: expected (H,W,C) tensor, got " + shape_str(in.shape));
    const int64_t ih = in.dim(0), iw = in.dim(1), c = in.dim(2);
    check_shape(oh >= 1 && ow >= 1, "resize_bilinear: output dims must be >= 1");
    if (oh == ih && ow == iw) return in;

    Tensor out({oh, ow, c});
    const double sy = static_cast<double>(ih) / static_cast<double>(oh);
    const double sx = static_cast<double>(iw) / static_cast<double>(ow);
    for (int64_t y = 0; y < oh; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        int64_t y0 = static_cast<int64_t>(std::floor(fy));
        double wy = fy - static_cast<double>(y0);
        int64_t ya = std::clamp<int64_t>(y0, 0, ih - 1);
        int64_t yb = std::clamp<int64_t>(y0 + 1, 0, ih - 1);
        for (int64_t x = 0; x < ow; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            int64_t x0 = static_cast<int64_t>(std::floor(fx));
            double wx = fx - static_cast<double>(x0);
            int64_t xa = std::clamp<int64_t>(x0, 0, iw - 1);
            int64_t xb = std::clamp<int64_t>(x0 + 1, 0, iw - 1);
            for (int64_t k = 0; k < c; ++k) {
                double top = in.at3(ya, xa, k) * (1.0 - wx) + in.at3(ya, xb, k) * wx;
                double bot = in.at3(yb, xa, k) * (1.0 - wx) + in.at3(yb, xb, k) * wx;
                out.at3(y, x, k) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

}  // namespace msvar
