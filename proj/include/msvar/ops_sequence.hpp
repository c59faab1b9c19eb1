#pragma once

#include <memory>
#include <vector>

#include "msvar/autograd.hpp"
#include "msvar/common.hpp"

namespace msvar {

// ---------------------------------------------------------------------------
// Sequence-model tape ops: input embedding assembly, masked multi-head
// attention with factorized rotary positions, and the bitwise objective.
// ---------------------------------------------------------------------------

// Video rows: features @ w_in + scale embedding; text rows: vocabulary table
// lookup. The input projection carries no bias.
inline int op_embed_sequence(Tape& tape, const SequenceLayout& layout, const std::vector<int64_t>& text_ids,
                             int features, int w_in, int text_table, int scale_table) {
    const int64_t n = layout.total_len();
    const int64_t d = tape.shape(features)[1];
    const int64_t dim = tape.shape(w_in)[1];
    const int64_t vocab = tape.shape(text_table)[0];
    check_shape(tape.shape(features)[0] == n, "embed_sequence: feature rows != layout length");
    check_shape(tape.shape(w_in)[0] == d, "embed_sequence: w_in rows != feature dim");
    check_shape(tape.shape(scale_table)[1] == dim && tape.shape(text_table)[1] == dim,
                "embed_sequence: table dims != hidden dim");
    check_shape(static_cast<int64_t>(text_ids.size()) == layout.text_len, "embed_sequence: text id count");
    for (int64_t id : text_ids)
        if (id < 0 || id >= vocab) throw VocabError("embed_sequence: unknown vocabulary id " + std::to_string(id));
    check_shape(tape.shape(scale_table)[0] >= layout.num_scales(), "embed_sequence: scale table too small");

    int out = tape.new_node({n, dim}, tape.any_grad({features, w_in, text_table, scale_table}));
    {
        double* vo = tape.nodes.back().val.data();
        const double* vf = tape.v(features);
        const double* vw = tape.v(w_in);
        const double* vt = tape.v(text_table);
        const double* vs = tape.v(scale_table);
        for (int64_t p = 0; p < n; ++p) {
            const TokenInfo& tok = layout.tokens[static_cast<size_t>(p)];
            double* row = vo + p * dim;
            if (tok.kind == TokenKind::text) {
                const double* src = vt + text_ids[static_cast<size_t>(tok.i)] * dim;
                for (int64_t j = 0; j < dim; ++j) row[j] = src[j];
            } else {
                const double* f = vf + p * d;
                const double* s = vs + (tok.k - 1) * dim;
                for (int64_t j = 0; j < dim; ++j) row[j] = s[j];
                for (int64_t l = 0; l < d; ++l) {
                    double fv = f[l];
                    const double* wrow = vw + l * dim;
                    for (int64_t j = 0; j < dim; ++j) row[j] += fv * wrow[j];
                }
            }
        }
    }
    if (tape.nodes.back().needs_grad) {
        auto ids = std::make_shared<std::vector<int64_t>>(text_ids);
        auto lay = std::make_shared<SequenceLayout>(layout);
        tape.nodes.back().bwd = [&tape, lay, ids, features, w_in, text_table, scale_table, out, n, d, dim]() {
            const double* go = tape.g(out);
            const double* vf = tape.v(features);
            const double* vw = tape.v(w_in);
            for (int64_t p = 0; p < n; ++p) {
                const TokenInfo& tok = lay->tokens[static_cast<size_t>(p)];
                const double* grow = go + p * dim;
                if (tok.kind == TokenKind::text) {
                    if (tape.ng(text_table)) {
                        double* dst = tape.g(text_table) + (*ids)[static_cast<size_t>(tok.i)] * dim;
                        for (int64_t j = 0; j < dim; ++j) dst[j] += grow[j];
                    }
                } else {
                    if (tape.ng(scale_table)) {
                        double* dst = tape.g(scale_table) + (tok.k - 1) * dim;
                        for (int64_t j = 0; j < dim; ++j) dst[j] += grow[j];
                    }
                    if (tape.ng(w_in)) {
                        double* gw = tape.g(w_in);
                        const double* f = vf + p * d;
                        for (int64_t l = 0; l < d; ++l) {
                            double fv = f[l];
                            double* wrow = gw + l * dim;
                            for (int64_t j = 0; j < dim; ++j) wrow[j] += fv * grow[j];
                        }
                    }
                    if (tape.ng(features)) {
                        double* gf = tape.g(features) + p * d;
                        for (int64_t l = 0; l < d; ++l) {
                            const double* wrow = vw + l * dim;
                            double s = 0.0;
                            for (int64_t j = 0; j < dim; ++j) s += wrow[j] * grow[j];
                            gf[l] += s;
                        }
                    }
                }
            }
        };
    }
    return out;
}

// Shared softmax-attention row: scores over the visible key set in ascending
// key order, max-subtracted softmax, then the value average. Both the tape
// forward and the cached decode path call this, so they agree bit for bit.
inline void attend_row(const double* q, const double* keys, const double* vals, const int64_t* key_ids,
                       int64_t num_keys, int64_t dh, double inv_sqrt_dh, double* probs, double* out_row) {
    double mx = -1e300;
    for (int64_t c = 0; c < num_keys; ++c) {
        const double* krow = keys + key_ids[c] * dh;
        double s = 0.0;
        for (int64_t j = 0; j < dh; ++j) s += q[j] * krow[j];
        probs[c] = s * inv_sqrt_dh;
        if (probs[c] > mx) mx = probs[c];
    }
    double denom = 0.0;
    for (int64_t c = 0; c < num_keys; ++c) {
        probs[c] = std::exp(probs[c] - mx);
        denom += probs[c];
    }
    double inv = 1.0 / denom;
    for (int64_t j = 0; j < dh; ++j) out_row[j] = 0.0;
    for (int64_t c = 0; c < num_keys; ++c) {
        probs[c] *= inv;
        const double* vrow = vals + key_ids[c] * dh;
        for (int64_t j = 0; j < dh; ++j) out_row[j] += probs[c] * vrow[j];
    }
}

// Masked multi-head attention over already-projected q/k/v (n, dim) inputs.
// Rotary rotation by the layout positions is applied to q and k inside the
// op. Invisible keys are skipped outright, so no gradient can leak through
// them.
inline int op_masked_attention(Tape& tape, int q_in, int k_in, int v_in, int64_t heads, const RopeTable& rope,
                               const BlockCausalMask& mask) {
    const int64_t n = tape.shape(q_in)[0];
    const int64_t dim = tape.shape(q_in)[1];
    check_shape(tape.shape(k_in) == tape.shape(q_in) && tape.shape(v_in) == tape.shape(q_in),
                "masked_attention: q/k/v shape mismatch");
    check_shape(dim % heads == 0, "masked_attention: dim not divisible by heads");
    check_shape(mask.n == n, "masked_attention: mask size mismatch");
    const int64_t dh = dim / heads;
    check_shape(rope.pairs == dh / 2, "masked_attention: rope table pair count != head_dim/2");
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    // visible key lists per query (shared across heads)
    auto visible = std::make_shared<std::vector<std::vector<int64_t>>>(static_cast<size_t>(n));
    for (int64_t p = 0; p < n; ++p) {
        auto& lst = (*visible)[static_cast<size_t>(p)];
        for (int64_t c = 0; c < n; ++c)
            if (mask.at(p, c)) lst.push_back(c);
        check_shape(!lst.empty(), "masked_attention: query with empty key set");
    }

    // rotated q/k buffers, per head layout (heads, n, dh)
    auto qr = std::make_shared<std::vector<double>>(static_cast<size_t>(heads * n * dh));
    auto kr = std::make_shared<std::vector<double>>(static_cast<size_t>(heads * n * dh));
    auto probs = std::make_shared<std::vector<std::vector<double>>>(static_cast<size_t>(heads * n));

    auto rope_copy = std::make_shared<RopeTable>(rope);

    int out = tape.new_node({n, dim}, tape.any_grad({q_in, k_in, v_in}));
    {
        const double* vq = tape.v(q_in);
        const double* vk = tape.v(k_in);
        const double* vv = tape.v(v_in);
        double* vo = tape.nodes.back().val.data();
        std::vector<double> vh(static_cast<size_t>(n * dh));
        std::vector<double> orow(static_cast<size_t>(dh));
        for (int64_t h = 0; h < heads; ++h) {
            double* qh = qr->data() + h * n * dh;
            double* kh = kr->data() + h * n * dh;
            for (int64_t p = 0; p < n; ++p) {
                for (int64_t j = 0; j < dh; ++j) {
                    qh[p * dh + j] = vq[p * dim + h * dh + j];
                    kh[p * dh + j] = vk[p * dim + h * dh + j];
                    vh[static_cast<size_t>(p * dh + j)] = vv[p * dim + h * dh + j];
                }
                rope_rotate(qh + p * dh, rope.cos_at(p), rope.sin_at(p), dh);
                rope_rotate(kh + p * dh, rope.cos_at(p), rope.sin_at(p), dh);
            }
            for (int64_t p = 0; p < n; ++p) {
                const auto& keys = (*visible)[static_cast<size_t>(p)];
                auto& pr = (*probs)[static_cast<size_t>(h * n + p)];
                pr.resize(keys.size());
                attend_row(qh + p * dh, kh, vh.data(), keys.data(), static_cast<int64_t>(keys.size()), dh,
                           inv_sqrt_dh, pr.data(), orow.data());
                for (int64_t j = 0; j < dh; ++j) vo[p * dim + h * dh + j] = orow[j];
            }
        }
    }
    if (tape.nodes.back().needs_grad) {
        tape.nodes.back().bwd = [&tape, q_in, k_in, v_in, out, heads, n, dim, dh, inv_sqrt_dh, visible, qr, kr, probs,
                                 rope_copy]() {
            const double* go = tape.g(out);
            const double* vv = tape.v(v_in);
            std::vector<double> dq(static_cast<size_t>(dh)), dkrow;
            std::vector<double> gq_h(static_cast<size_t>(n * dh)), gk_h(static_cast<size_t>(n * dh)),
                gv_h(static_cast<size_t>(n * dh));
            std::vector<double> vh(static_cast<size_t>(n * dh));
            for (int64_t h = 0; h < heads; ++h) {
                std::fill(gq_h.begin(), gq_h.end(), 0.0);
                std::fill(gk_h.begin(), gk_h.end(), 0.0);
                std::fill(gv_h.begin(), gv_h.end(), 0.0);
                for (int64_t c = 0; c < n; ++c)
                    for (int64_t j = 0; j < dh; ++j) vh[static_cast<size_t>(c * dh + j)] = vv[c * dim + h * dh + j];
                const double* qh = qr->data() + h * n * dh;
                const double* kh = kr->data() + h * n * dh;
                for (int64_t p = 0; p < n; ++p) {
                    const auto& keys = (*visible)[static_cast<size_t>(p)];
                    const auto& pr = (*probs)[static_cast<size_t>(h * n + p)];
                    const double* grow = go + p * dim + h * dh;
                    // da_c = <grow, v_c>; ds = a .* (da - sum a*da)
                    double sum_ada = 0.0;
                    std::vector<double> da(keys.size());
                    for (size_t c = 0; c < keys.size(); ++c) {
                        const double* vrow = vh.data() + keys[c] * dh;
                        double s = 0.0;
                        for (int64_t j = 0; j < dh; ++j) s += grow[j] * vrow[j];
                        da[c] = s;
                        sum_ada += pr[c] * s;
                        double* gvrow = gv_h.data() + keys[c] * dh;
                        for (int64_t j = 0; j < dh; ++j) gvrow[j] += pr[c] * grow[j];
                    }
                    std::fill(dq.begin(), dq.end(), 0.0);
                    for (size_t c = 0; c < keys.size(); ++c) {
                        double ds = pr[c] * (da[c] - sum_ada) * inv_sqrt_dh;
                        const double* krow = kh + keys[c] * dh;
                        const double* qrow = qh + p * dh;
                        double* gkrow = gk_h.data() + keys[c] * dh;
                        for (int64_t j = 0; j < dh; ++j) {
                            dq[static_cast<size_t>(j)] += ds * krow[j];
                            gkrow[j] += ds * qrow[j];
                        }
                    }
                    for (int64_t j = 0; j < dh; ++j) gq_h[static_cast<size_t>(p * dh + j)] += dq[static_cast<size_t>(j)];
                }
                // unrotate and scatter into input grads
                for (int64_t p = 0; p < n; ++p) {
                    rope_rotate_inv(gq_h.data() + p * dh, rope_copy->cos_at(p), rope_copy->sin_at(p), dh);
                    rope_rotate_inv(gk_h.data() + p * dh, rope_copy->cos_at(p), rope_copy->sin_at(p), dh);
                    if (tape.ng(q_in)) {
                        double* gq = tape.g(q_in);
                        for (int64_t j = 0; j < dh; ++j) gq[p * dim + h * dh + j] += gq_h[static_cast<size_t>(p * dh + j)];
                    }
                    if (tape.ng(k_in)) {
                        double* gk = tape.g(k_in);
                        for (int64_t j = 0; j < dh; ++j) gk[p * dim + h * dh + j] += gk_h[static_cast<size_t>(p * dh + j)];
                    }
                    if (tape.ng(v_in)) {
                        double* gv = tape.g(v_in);
                        for (int64_t j = 0; j < dh; ++j) gv[p * dim + h * dh + j] += gv_h[static_cast<size_t>(p * dh + j)];
                    }
                }
            }
        };
    }
    return out;
}

// Mean binary cross-entropy over the valid (position, bit) cells of the
// logit matrix, against constant 0/1 targets.
inline int op_bce_masked_mean(Tape& tape, int logits, const Tensor& targets, const std::vector<uint8_t>& valid_rows) {
    check_shape(tape.shape(logits) == targets.shape, "bce_masked_mean: target shape mismatch");
    const int64_t n = targets.dim(0), d = targets.dim(1);
    check_shape(static_cast<int64_t>(valid_rows.size()) == n, "bce_masked_mean: valid mask length");
    if (!tape.finite(logits)) throw DivergenceError("bce_masked_mean: nonfinite logits");

    int64_t count = 0;
    for (uint8_t r : valid_rows) count += r ? d : 0;
    check_shape(count > 0, "bce_masked_mean: no valid positions");

    int out = tape.new_node({1}, tape.ng(logits));
    const double* vl = tape.v(logits);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        if (!valid_rows[static_cast<size_t>(i)]) continue;
        for (int64_t j = 0; j < d; ++j) {
            double l = vl[i * d + j];
            double y = targets[i * d + j];
            // max(l,0) - l*y + log(1 + exp(-|l|))
            total += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
        }
    }
    tape.nodes.back().val[0] = total / static_cast<double>(count);
    if (tape.nodes.back().needs_grad) {
        auto tg = std::make_shared<Tensor>(targets);
        auto vr = std::make_shared<std::vector<uint8_t>>(valid_rows);
        tape.nodes.back().bwd = [&tape, logits, out, tg, vr, n, d, count]() {
            double go = tape.g(out)[0] / static_cast<double>(count);
            double* gl = tape.g(logits);
            const double* vl2 = tape.v(logits);
            for (int64_t i = 0; i < n; ++i) {
                if (!(*vr)[static_cast<size_t>(i)]) continue;
                for (int64_t j = 0; j < d; ++j)
                    gl[i * d + j] += go * (sigmoid(vl2[i * d + j]) - (*tg)[i * d + j]);
            }
        };
    }
    return out;
}

}  // namespace msvar
