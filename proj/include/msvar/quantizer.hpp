#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "msvar/bilinear.hpp"
#include "msvar/tensor.hpp"

namespace msvar {

// Ordered coarse-to-fine list of (H_k, W_k) grids; the last entry is the
// native latent resolution.
struct ScaleSchedule {
    std::vector<std::array<int64_t, 2>> scales;

    int64_t num_scales() const { return static_cast<int64_t>(scales.size()); }
    int64_t height(int64_t k) const { return scales[static_cast<size_t>(k)][0]; }  // k is 0-based here
    int64_t width(int64_t k) const { return scales[static_cast<size_t>(k)][1]; }
    int64_t final_height() const { return scales.back()[0]; }
    int64_t final_width() const { return scales.back()[1]; }

    int64_t tokens_per_frame() const {
        int64_t n = 0;
        for (const auto& s : scales) n += s[0] * s[1];
        return n;
    }

    void validate() const {
        check_config(!scales.empty(), "ScaleSchedule: empty schedule");
        for (size_t k = 0; k < scales.size(); ++k) {
            check_config(scales[k][0] >= 1 && scales[k][1] >= 1, "ScaleSchedule: nonpositive scale");
            if (k > 0) {
                bool nondecreasing = scales[k][0] >= scales[k - 1][0] && scales[k][1] >= scales[k - 1][1];
                bool strict = scales[k][0] > scales[k - 1][0] || scales[k][1] > scales[k - 1][1];
                check_config(nondecreasing && strict, "ScaleSchedule: scales must grow in at least one axis per step");
            }
        }
    }
};

// Geometric doubling from 1x1 up to the native latent resolution.
inline ScaleSchedule make_doubling_schedule(int64_t lat_h, int64_t lat_w) {
    check_config(lat_h >= 1 && lat_w >= 1, "make_doubling_schedule: bad latent dims");
    ScaleSchedule s;
    int64_t h = 1, w = 1;
    s.scales.push_back({h, w});
    while (h < lat_h || w < lat_w) {
        h = std::min(h * 2, lat_h);
        w = std::min(w * 2, lat_w);
        s.scales.push_back({h, w});
    }
    s.validate();
    return s;
}

// One scale of the discrete code: an (H_k, W_k) grid of d-bit tokens.
struct BitGrid {
    int64_t h = 0, w = 0, d = 0;
    std::vector<uint8_t> bits;  // (h, w, d) row-major, each 0 or 1

    BitGrid() = default;
    BitGrid(int64_t h_, int64_t w_, int64_t d_) : h(h_), w(w_), d(d_), bits(static_cast<size_t>(h_ * w_ * d_), 0) {}

    uint8_t& at(int64_t y, int64_t x, int64_t j) { return bits[static_cast<size_t>((y * w + x) * d + j)]; }
    uint8_t at(int64_t y, int64_t x, int64_t j) const { return bits[static_cast<size_t>((y * w + x) * d + j)]; }

    int64_t num_bits() const { return static_cast<int64_t>(bits.size()); }

    bool operator==(const BitGrid& o) const { return h == o.h && w == o.w && d == o.d && bits == o.bits; }
};

// The K-scale discrete decomposition of one latent frame.
using ResidualStack = std::vector<BitGrid>;

inline double code_unit(int64_t d) { return 1.0 / std::sqrt(static_cast<double>(d)); }

// bit 1 -> +1/sqrt(d), bit 0 -> -1/sqrt(d)
inline Tensor dequant_bits(const BitGrid& g) {
    Tensor out({g.h, g.w, g.d});
    const double u = code_unit(g.d);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = g.bits[static_cast<size_t>(i)] ? u : -u;
    return out;
}

// bit = 1 iff value >= 0
inline BitGrid binarize(const Tensor& grid) {
    check_shape(grid.rank() == 3, "binarize: expected (H,W,d) grid");
    BitGrid g(grid.dim(0), grid.dim(1), grid.dim(2));
    for (int64_t i = 0; i < grid.numel(); ++i) g.bits[static_cast<size_t>(i)] = grid[i] >= 0.0 ? 1 : 0;
    return g;
}

// Sum of all scales of a stack, upsampled to the native resolution.
inline Tensor dequantize_frame(const ResidualStack& stack, const ScaleSchedule& schedule) {
    check_shape(static_cast<int64_t>(stack.size()) == schedule.num_scales(),
                "dequantize_frame: stack length does not match schedule");
    const int64_t fh = schedule.final_height(), fw = schedule.final_width();
    check_shape(!stack.empty(), "dequantize_frame: empty stack");
    const int64_t d = stack[0].d;
    Tensor acc({fh, fw, d});
    for (size_t k = 0; k < stack.size(); ++k) {
        check_shape(stack[k].h == schedule.height(static_cast<int64_t>(k)) &&
                        stack[k].w == schedule.width(static_cast<int64_t>(k)) && stack[k].d == d,
                    "dequantize_frame: scale " + std::to_string(k) + " shape mismatch");
        Tensor up = resize_bilinear(dequant_bits(stack[k]), fh, fw);
        for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += up[i];
    }
    return acc;
}

// Accumulated input feature for scale k (1-based): the first k-1 residuals
// summed at native resolution, then resampled to (H_k, W_k). An empty
// prefix yields the zero grid.
inline Tensor accumulate_input(const ResidualStack& stack, int64_t prefix_len, const ScaleSchedule& schedule,
                               int64_t k, int64_t d) {
    check_shape(k >= 1 && k <= schedule.num_scales(), "accumulate_input: scale index out of range");
    check_shape(prefix_len == k - 1, "accumulate_input: prefix length must be k-1");
    check_shape(prefix_len <= static_cast<int64_t>(stack.size()), "accumulate_input: prefix longer than stack");
    const int64_t fh = schedule.final_height(), fw = schedule.final_width();
    const int64_t th = schedule.height(k - 1), tw = schedule.width(k - 1);
    if (prefix_len == 0) return Tensor({th, tw, d});

    Tensor acc({fh, fw, d});
    for (int64_t i = 0; i < prefix_len; ++i) {
        Tensor up = resize_bilinear(dequant_bits(stack[static_cast<size_t>(i)]), fh, fw);
        for (int64_t j = 0; j < acc.numel(); ++j) acc[j] += up[j];
    }
    return resize_bilinear(acc, th, tw);
}

// Multi-scale residual decomposition of one latent frame. At each scale the
// remaining residual against the running accumulation is resampled to that
// scale and binarized.
inline ResidualStack quantize_frame(const Tensor& frame, const ScaleSchedule& schedule) {
    check_shape(frame.rank() == 3, "quantize_frame: expected (H,W,d) frame");
    check_shape(frame.dim(0) == schedule.final_height() && frame.dim(1) == schedule.final_width(),
                "quantize_frame: frame shape " + shape_str(frame.shape) + " does not match schedule final scale");
    const int64_t fh = frame.dim(0), fw = frame.dim(1), d = frame.dim(2);
    const int64_t K = schedule.num_scales();

    ResidualStack stack;
    stack.reserve(static_cast<size_t>(K));
    Tensor acc({fh, fw, d});  // running sum of upsampled dequantized scales
    for (int64_t k = 0; k < K; ++k) {
        Tensor residual({fh, fw, d});
        for (int64_t i = 0; i < residual.numel(); ++i) residual[i] = frame[i] - acc[i];
        Tensor down = resize_bilinear(residual, schedule.height(k), schedule.width(k));
        BitGrid g = binarize(down);
        Tensor up = resize_bilinear(dequant_bits(g), fh, fw);
        for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += up[i];
        stack.push_back(std::move(g));
    }
    return stack;
}

}  // namespace msvar
