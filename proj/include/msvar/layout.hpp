#pragma once

#include <cstdint>
#include <vector>

#include "msvar/quantizer.hpp"

namespace msvar {

enum class TokenKind : uint8_t { text, video };

// One flat sequence position. Video tokens carry 1-based frame/scale indices
// and 0-based in-scale coordinates; text tokens carry their block index in i.
struct TokenInfo {
    TokenKind kind = TokenKind::text;
    int64_t i = 0;  // text: index within the text block
    int64_t t = 0;  // video: frame, 1-based
    int64_t k = 0;  // video: scale, 1-based
    int64_t h = 0, w = 0;
};

struct PositionTriple {
    int64_t t = 0, h = 0, w = 0;
    bool operator==(const PositionTriple&) const = default;
};

// Flat token ordering: text block, then frames in temporal order, each
// frame's scales coarse to fine, each scale row-major.
struct SequenceLayout {
    int64_t text_len = 0;
    int64_t frame_count = 0;
    ScaleSchedule schedule;
    std::vector<TokenInfo> tokens;
    std::vector<int64_t> block_starts;  // per (t,k) block, frame-major

    int64_t total_len() const { return static_cast<int64_t>(tokens.size()); }
    int64_t num_scales() const { return schedule.num_scales(); }

    // t, k 1-based
    int64_t block_start(int64_t t, int64_t k) const {
        return block_starts[static_cast<size_t>((t - 1) * num_scales() + (k - 1))];
    }
    int64_t block_len(int64_t k) const { return schedule.height(k - 1) * schedule.width(k - 1); }

    int64_t flat_index(const TokenInfo& info) const {
        if (info.kind == TokenKind::text) return info.i;
        return block_start(info.t, info.k) + info.h * schedule.width(info.k - 1) + info.w;
    }

    PositionTriple position(int64_t flat) const {
        const TokenInfo& tok = tokens[static_cast<size_t>(flat)];
        if (tok.kind == TokenKind::text) return {tok.i, tok.i, tok.i};
        return {tok.t + text_len, tok.h + text_len, tok.w + text_len};
    }
};

inline SequenceLayout build_layout(int64_t text_len, int64_t frame_count, const ScaleSchedule& schedule) {
    check_config(text_len >= 1 && frame_count >= 1, "build_layout: counts must be >= 1");
    check_config(!schedule.scales.empty(), "build_layout: empty schedule");
    schedule.validate();

    SequenceLayout layout;
    layout.text_len = text_len;
    layout.frame_count = frame_count;
    layout.schedule = schedule;
    layout.tokens.reserve(static_cast<size_t>(text_len + frame_count * schedule.tokens_per_frame()));
    for (int64_t i = 0; i < text_len; ++i) layout.tokens.push_back({TokenKind::text, i, 0, 0, 0, 0});
    for (int64_t t = 1; t <= frame_count; ++t) {
        for (int64_t k = 1; k <= schedule.num_scales(); ++k) {
            layout.block_starts.push_back(static_cast<int64_t>(layout.tokens.size()));
            for (int64_t h = 0; h < schedule.height(k - 1); ++h)
                for (int64_t w = 0; w < schedule.width(k - 1); ++w)
                    layout.tokens.push_back({TokenKind::video, 0, t, k, h, w});
        }
    }
    return layout;
}

}  // namespace msvar
