#pragma once

#include <cstdint>
#include <vector>

#include "msvar/layout.hpp"

namespace msvar {

// Boolean attendability over (query position, key position).
struct BlockCausalMask {
    int64_t n = 0;
    std::vector<uint8_t> m;

    BlockCausalMask() = default;
    explicit BlockCausalMask(int64_t n_) : n(n_), m(static_cast<size_t>(n_ * n_), 0) {}

    bool at(int64_t q, int64_t k) const { return m[static_cast<size_t>(q * n + k)] != 0; }
    void set(int64_t q, int64_t k, bool v) { m[static_cast<size_t>(q * n + k)] = v ? 1 : 0; }
};

// Text keys are visible to every query. A video query at (t, k) sees all
// scales of earlier frames, coarser scales of its own frame, and its own
// scale block bidirectionally; never later frames or finer scales.
inline BlockCausalMask build_block_causal_mask(const SequenceLayout& layout) {
    const int64_t n = layout.total_len();
    BlockCausalMask mask(n);
    for (int64_t q = 0; q < n; ++q) {
        const TokenInfo& tq = layout.tokens[static_cast<size_t>(q)];
        for (int64_t c = 0; c < n; ++c) {
            const TokenInfo& tc = layout.tokens[static_cast<size_t>(c)];
            bool visible = false;
            if (tc.kind == TokenKind::text) {
                visible = true;
            } else if (tq.kind == TokenKind::video) {
                visible = tc.t < tq.t || (tc.t == tq.t && tc.k <= tq.k);
            }
            mask.set(q, c, visible);
        }
    }
    return mask;
}

// Random-frame-mask restriction: video keys of frame t' stay visible to
// queries of frame t only when t' is in the kept set S_t. Text keys and
// within-frame visibility are unchanged. kept[t-1] lists the kept frames
// (1-based) for frame t.
inline BlockCausalMask apply_frame_mask(const BlockCausalMask& base, const SequenceLayout& layout,
                                        const std::vector<std::vector<int64_t>>& kept) {
    check_config(static_cast<int64_t>(kept.size()) == layout.frame_count,
                 "apply_frame_mask: kept sets must cover every frame");
    const int64_t n = layout.total_len();
    std::vector<std::vector<uint8_t>> keep_flag(kept.size());
    for (size_t t = 0; t < kept.size(); ++t) {
        keep_flag[t].assign(static_cast<size_t>(layout.frame_count + 1), 0);
        for (int64_t f : kept[t]) {
            check_config(f >= 1 && f <= layout.frame_count, "apply_frame_mask: kept frame out of range");
            keep_flag[t][static_cast<size_t>(f)] = 1;
        }
    }

    BlockCausalMask out = base;
    for (int64_t q = 0; q < n; ++q) {
        const TokenInfo& tq = layout.tokens[static_cast<size_t>(q)];
        if (tq.kind != TokenKind::video) continue;
        for (int64_t c = 0; c < n; ++c) {
            const TokenInfo& tc = layout.tokens[static_cast<size_t>(c)];
            if (tc.kind != TokenKind::video || tc.t == tq.t) continue;
            if (!keep_flag[static_cast<size_t>(tq.t - 1)][static_cast<size_t>(tc.t)]) out.set(q, c, false);
        }
    }
    return out;
}

}  // namespace msvar
