#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "msvar/layout.hpp"
#include "msvar/tensor.hpp"

namespace msvar {

// Rotary embedding factorized into time/height/width bands of the head
// dimension. Text tokens carry (i, i, i), which makes every band rotate by
// the same index and reproduces plain one-dimensional RoPE behavior.
struct RopeBands {
    int64_t head_dim = 0;
    std::array<int64_t, 3> band_dims{};  // per axis, even, sum = head_dim
    std::vector<double> inv_freq;        // head_dim/2 entries, band-concatenated
    std::array<int64_t, 3> band_pair_off{};

    static RopeBands make(int64_t head_dim, std::array<int64_t, 3> split_weights, double theta) {
        check_config(head_dim > 0 && head_dim % 2 == 0, "RopeBands: head dim must be even");
        RopeBands r;
        r.head_dim = head_dim;
        int64_t pairs = head_dim / 2;
        int64_t total_w = split_weights[0] + split_weights[1] + split_weights[2];
        check_config(total_w > 0, "RopeBands: zero split weights");
        int64_t p0 = pairs * split_weights[0] / total_w;
        int64_t p1 = pairs * split_weights[1] / total_w;
        int64_t p2 = pairs - p0 - p1;
        check_config(p0 >= 1 && p1 >= 1 && p2 >= 1,
                     "RopeBands: band misconfiguration, each axis needs at least one rotary pair");
        r.band_dims = {2 * p0, 2 * p1, 2 * p2};
        r.band_pair_off = {0, p0, p0 + p1};
        r.inv_freq.resize(static_cast<size_t>(pairs));
        const std::array<int64_t, 3> band_pairs = {p0, p1, p2};
        for (int axis = 0; axis < 3; ++axis) {
            int64_t m = r.band_dims[static_cast<size_t>(axis)];
            for (int64_t j = 0; j < band_pairs[static_cast<size_t>(axis)]; ++j) {
                r.inv_freq[static_cast<size_t>(r.band_pair_off[static_cast<size_t>(axis)] + j)] =
                    std::pow(theta, -2.0 * static_cast<double>(j) / static_cast<double>(m));
            }
        }
        return r;
    }

    // cos/sin per rotary pair for one position triple
    void angles(const PositionTriple& pos, double* cos_out, double* sin_out) const {
        const std::array<int64_t, 3> axis_pos = {pos.t, pos.h, pos.w};
        int64_t pairs = head_dim / 2;
        for (int64_t j = 0; j < pairs; ++j) {
            int axis = j >= band_pair_off[2] ? 2 : (j >= band_pair_off[1] ? 1 : 0);
            double a = static_cast<double>(axis_pos[static_cast<size_t>(axis)]) * inv_freq[static_cast<size_t>(j)];
            cos_out[j] = std::cos(a);
            sin_out[j] = std::sin(a);
        }
    }
};

// Rotation of one head vector by its position triple; pairs are interleaved
// within each band.
inline void rope_rotate(double* vec, const double* cos_v, const double* sin_v, int64_t head_dim) {
    for (int64_t j = 0; j < head_dim / 2; ++j) {
        double x = vec[2 * j], y = vec[2 * j + 1];
        vec[2 * j] = x * cos_v[j] - y * sin_v[j];
        vec[2 * j + 1] = x * sin_v[j] + y * cos_v[j];
    }
}

// Transpose of the rotation, used in backward passes.
inline void rope_rotate_inv(double* vec, const double* cos_v, const double* sin_v, int64_t head_dim) {
    for (int64_t j = 0; j < head_dim / 2; ++j) {
        double x = vec[2 * j], y = vec[2 * j + 1];
        vec[2 * j] = x * cos_v[j] + y * sin_v[j];
        vec[2 * j + 1] = -x * sin_v[j] + y * cos_v[j];
    }
}

inline Tensor ms_temporal_rope(const Tensor& vec, const PositionTriple& pos, const RopeBands& bands) {
    check_shape(vec.rank() == 1 && vec.dim(0) == bands.head_dim, "ms_temporal_rope: vector length != head dim");
    std::vector<double> c(static_cast<size_t>(bands.head_dim / 2)), s(static_cast<size_t>(bands.head_dim / 2));
    bands.angles(pos, c.data(), s.data());
    Tensor out = vec;
    rope_rotate(out.data(), c.data(), s.data(), bands.head_dim);
    return out;
}

// Per-position angle tables for a whole layout, consumed by attention.
struct RopeTable {
    int64_t pairs = 0;
    std::vector<double> cos_v, sin_v;  // (n, pairs)

    static RopeTable build(const RopeBands& bands, const SequenceLayout& layout) {
        RopeTable t;
        t.pairs = bands.head_dim / 2;
        int64_t n = layout.total_len();
        t.cos_v.resize(static_cast<size_t>(n * t.pairs));
        t.sin_v.resize(static_cast<size_t>(n * t.pairs));
        for (int64_t p = 0; p < n; ++p)
            bands.angles(layout.position(p), t.cos_v.data() + p * t.pairs, t.sin_v.data() + p * t.pairs);
        return t;
    }

    const double* cos_at(int64_t p) const { return cos_v.data() + p * pairs; }
    const double* sin_at(int64_t p) const { return sin_v.data() + p * pairs; }
};

}  // namespace msvar
