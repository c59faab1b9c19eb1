#pragma once

#include <memory>
#include <vector>

#include "msvar/autograd.hpp"

namespace msvar {

// ---------------------------------------------------------------------------
// Convolution kernels on (N, C, H, W) buffers plus tape wrappers. The same
// forward kernels drive the inference-only encode/decode paths.
// ---------------------------------------------------------------------------

struct Conv2dShape {
    int64_t n, ci, h, w, co, kh, kw, stride, pad, oh, ow;
};

inline Conv2dShape conv2d_shape(const std::vector<int64_t>& x, const std::vector<int64_t>& wt, int64_t stride,
                                int64_t pad) {
    check_shape(x.size() == 4 && wt.size() == 4, "conv2d: rank mismatch");
    check_shape(x[1] == wt[1], "conv2d: channel mismatch");
    Conv2dShape s{x[0], x[1], x[2], x[3], wt[0], wt[2], wt[3], stride, pad, 0, 0};
    s.oh = (s.h + 2 * pad - s.kh) / stride + 1;
    s.ow = (s.w + 2 * pad - s.kw) / stride + 1;
    check_shape(s.oh >= 1 && s.ow >= 1, "conv2d: empty output");
    return s;
}

inline void conv2d_fwd(const double* x, const double* w, const double* b, double* y, const Conv2dShape& s) {
    for (int64_t img = 0; img < s.n; ++img) {
        const double* xi = x + img * s.ci * s.h * s.w;
        double* yi = y + img * s.co * s.oh * s.ow;
        for (int64_t co = 0; co < s.co; ++co) {
            double* yc = yi + co * s.oh * s.ow;
            for (int64_t oy = 0; oy < s.oh; ++oy)
                for (int64_t ox = 0; ox < s.ow; ++ox) {
                    double acc = b ? b[co] : 0.0;
                    int64_t iy0 = oy * s.stride - s.pad;
                    int64_t ix0 = ox * s.stride - s.pad;
                    for (int64_t ci = 0; ci < s.ci; ++ci) {
                        const double* xc = xi + ci * s.h * s.w;
                        const double* wc = w + (co * s.ci + ci) * s.kh * s.kw;
                        for (int64_t ky = 0; ky < s.kh; ++ky) {
                            int64_t iy = iy0 + ky;
                            if (iy < 0 || iy >= s.h) continue;
                            for (int64_t kx = 0; kx < s.kw; ++kx) {
                                int64_t ix = ix0 + kx;
                                if (ix < 0 || ix >= s.w) continue;
                                acc += wc[ky * s.kw + kx] * xc[iy * s.w + ix];
                            }
                        }
                    }
                    yc[oy * s.ow + ox] = acc;
                }
        }
    }
}

inline void conv2d_bwd(const double* x, const double* w, const double* gy, double* gx, double* gw, double* gb,
                       const Conv2dShape& s) {
    for (int64_t img = 0; img < s.n; ++img) {
        const double* xi = x + img * s.ci * s.h * s.w;
        const double* gyi = gy + img * s.co * s.oh * s.ow;
        double* gxi = gx ? gx + img * s.ci * s.h * s.w : nullptr;
        for (int64_t co = 0; co < s.co; ++co) {
            const double* gyc = gyi + co * s.oh * s.ow;
            for (int64_t oy = 0; oy < s.oh; ++oy)
                for (int64_t ox = 0; ox < s.ow; ++ox) {
                    double gout = gyc[oy * s.ow + ox];
                    if (gout == 0.0) continue;
                    if (gb) gb[co] += gout;
                    int64_t iy0 = oy * s.stride - s.pad;
                    int64_t ix0 = ox * s.stride - s.pad;
                    for (int64_t ci = 0; ci < s.ci; ++ci) {
                        const double* xc = xi + ci * s.h * s.w;
                        const double* wc = w + (co * s.ci + ci) * s.kh * s.kw;
                        double* gwc = gw ? gw + (co * s.ci + ci) * s.kh * s.kw : nullptr;
                        double* gxc = gxi ? gxi + ci * s.h * s.w : nullptr;
                        for (int64_t ky = 0; ky < s.kh; ++ky) {
                            int64_t iy = iy0 + ky;
                            if (iy < 0 || iy >= s.h) continue;
                            for (int64_t kx = 0; kx < s.kw; ++kx) {
                                int64_t ix = ix0 + kx;
                                if (ix < 0 || ix >= s.w) continue;
                                if (gwc) gwc[ky * s.kw + kx] += gout * xc[iy * s.w + ix];
                                if (gxc) gxc[iy * s.w + ix] += gout * wc[ky * s.kw + kx];
                            }
                        }
                    }
                }
        }
    }
}

inline int op_conv2d(Tape& tape, int x, int w, int b, int64_t stride, int64_t pad) {
    Conv2dShape s = conv2d_shape(tape.shape(x), tape.shape(w), stride, pad);
    check_shape(tape.shape(b) == std::vector<int64_t>{s.co}, "conv2d: bias shape");
    int out = tape.new_node({s.n, s.co, s.oh, s.ow}, tape.any_grad({x, w, b}));
    conv2d_fwd(tape.v(x), tape.v(w), tape.v(b), tape.nodes.back().val.data(), s);
    if (tape.nodes.back().needs_grad)
        tape.nodes.back().bwd = [&tape, x, w, b, out, s]() {
            conv2d_bwd(tape.v(x), tape.v(w), tape.g(out), tape.ng(x) ? tape.g(x) : nullptr,
                       tape.ng(w) ? tape.g(w) : nullptr, tape.ng(b) ? tape.g(b) : nullptr, s);
        };
    return out;
}

// (N, C, H, W) -> (N, C, 2H, 2W)
inline void upsample2_fwd(const double* x, double* y, int64_t n, int64_t c, int64_t h, int64_t w) {
    for (int64_t i = 0; i < n * c; ++i) {
        const double* xc = x + i * h * w;
        double* yc = y + i * 4 * h * w;
        for (int64_t yy = 0; yy < 2 * h; ++yy)
            for (int64_t xx = 0; xx < 2 * w; ++xx) yc[yy * 2 * w + xx] = xc[(yy / 2) * w + (xx / 2)];
    }
}

inline int op_upsample_nearest2(Tape& tape, int x) {
    const auto& xs = tape.shape(x);
    check_shape(xs.size() == 4, "upsample2: expected (N,C,H,W)");
    int64_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    int out = tape.new_node({n, c, 2 * h, 2 * w}, tape.ng(x));
    upsample2_fwd(tape.v(x), tape.nodes.back().val.data(), n, c, h, w);
    if (tape.nodes.back().needs_grad)
        tape.nodes.back().bwd = [&tape, x, out, n, c, h, w]() {
            const double* go = tape.g(out);
            double* gx = tape.g(x);
            for (int64_t i = 0; i < n * c; ++i) {
                const double* gc = go + i * 4 * h * w;
                double* gxc = gx + i * h * w;
                for (int64_t yy = 0; yy < 2 * h; ++yy)
                    for (int64_t xx = 0; xx < 2 * w; ++xx) gxc[(yy / 2) * w + (xx / 2)] += gc[yy * 2 * w + xx];
            }
        };
    return out;
}

// Causal mixing along the latent-time axis: out[l] = b + sum_dt W[.,.,dt] x[l-dt],
// with zeros (or a carried chunk state) to the left of l = 0.
// x: (L, C, H, W), w: (Co, Ci, Kt), carry: (Kt-1, Ci, H, W) oldest first.
inline void tconv_fwd(const double* x, const double* w, const double* b, double* y, int64_t L, int64_t ci, int64_t hw,
                      int64_t co, int64_t kt, const double* carry) {
    for (int64_t l = 0; l < L; ++l)
        for (int64_t o = 0; o < co; ++o) {
            double* yo = y + (l * co + o) * hw;
            for (int64_t s = 0; s < hw; ++s) yo[s] = b[o];
            for (int64_t dt = 0; dt < kt; ++dt) {
                int64_t src = l - dt;
                const double* xi = nullptr;
                if (src >= 0) {
                    xi = x + src * ci * hw;
                } else if (carry) {
                    int64_t cidx = (kt - 1) + src;  // src in [-(kt-1), -1] -> [0, kt-2]
                    xi = carry + cidx * ci * hw;
                } else {
                    continue;
                }
                for (int64_t i = 0; i < ci; ++i) {
                    double wv = w[(o * ci + i) * kt + dt];
                    if (wv == 0.0) continue;
                    const double* xc = xi + i * hw;
                    for (int64_t s = 0; s < hw; ++s) yo[s] += wv * xc[s];
                }
            }
        }
}

inline int op_causal_tconv(Tape& tape, int x, int w, int b) {
    const auto& xs = tape.shape(x);
    const auto& ws = tape.shape(w);
    check_shape(xs.size() == 4 && ws.size() == 3 && ws[1] == xs[1], "causal_tconv: shape mismatch");
    int64_t L = xs[0], ci = xs[1], hw = xs[2] * xs[3], co = ws[0], kt = ws[2];
    int out = tape.new_node({L, co, xs[2], xs[3]}, tape.any_grad({x, w, b}));
    tconv_fwd(tape.v(x), tape.v(w), tape.v(b), tape.nodes.back().val.data(), L, ci, hw, co, kt, nullptr);
    if (tape.nodes.back().needs_grad)
        tape.nodes.back().bwd = [&tape, x, w, b, out, L, ci, hw, co, kt]() {
            const double* go = tape.g(out);
            const double* vx = tape.v(x);
            const double* vw = tape.v(w);
            for (int64_t l = 0; l < L; ++l)
                for (int64_t o = 0; o < co; ++o) {
                    const double* gyo = go + (l * co + o) * hw;
                    if (tape.ng(b)) {
                        double s = 0.0;
                        for (int64_t i = 0; i < hw; ++i) s += gyo[i];
                        tape.g(b)[o] += s;
                    }
                    for (int64_t dt = 0; dt < kt; ++dt) {
                        int64_t src = l - dt;
                        if (src < 0) continue;
                        for (int64_t i = 0; i < ci; ++i) {
                            const double* xc = vx + (src * ci + i) * hw;
                            if (tape.ng(w)) {
                                double s = 0.0;
                                for (int64_t k2 = 0; k2 < hw; ++k2) s += gyo[k2] * xc[k2];
                                tape.g(w)[(o * ci + i) * kt + dt] += s;
                            }
                            if (tape.ng(x)) {
                                double wv = vw[(o * ci + i) * kt + dt];
                                double* gxc = tape.g(x) + (src * ci + i) * hw;
                                for (int64_t k2 = 0; k2 < hw; ++k2) gxc[k2] += gyo[k2] * wv;
                            }
                        }
                    }
                }
        };
    return out;
}

// Temporal grouping: frame 0 becomes latent 0 through w0; each subsequent
// group of tau frames becomes one latent step through wg over concatenated
// channels. x: (T, C, H, W) with T = 1 + (L-1) tau.
inline void group_fwd(const double* x, const double* w0, const double* b0, const double* wg, const double* bg,
                      double* y, int64_t T, int64_t c, int64_t hw, int64_t ct, int64_t tau) {
    int64_t L = 1 + (T - 1) / tau;
    for (int64_t l = 0; l < L; ++l)
        for (int64_t o = 0; o < ct; ++o) {
            double* yo = y + (l * ct + o) * hw;
            if (l == 0) {
                for (int64_t s = 0; s < hw; ++s) yo[s] = b0[o];
                for (int64_t i = 0; i < c; ++i) {
                    double wv = w0[o * c + i];
                    const double* xc = x + i * hw;
                    for (int64_t s = 0; s < hw; ++s) yo[s] += wv * xc[s];
                }
            } else {
                for (int64_t s = 0; s < hw; ++s) yo[s] = bg[o];
                for (int64_t u = 0; u < tau; ++u) {
                    int64_t frame = 1 + (l - 1) * tau + u;
                    for (int64_t i = 0; i < c; ++i) {
                        double wv = wg[o * (tau * c) + u * c + i];
                        const double* xc = x + (frame * c + i) * hw;
                        for (int64_t s = 0; s < hw; ++s) yo[s] += wv * xc[s];
                    }
                }
            }
        }
}

inline int op_temporal_group(Tape& tape, int x, int w0, int b0, int wg, int bg, int64_t tau) {
    const auto& xs = tape.shape(x);
    check_shape(xs.size() == 4 && (xs[0] - 1) % tau == 0, "temporal_group: frames != 1 mod tau");
    int64_t T = xs[0], c = xs[1], hw = xs[2] * xs[3];
    int64_t ct = tape.shape(w0)[0];
    check_shape(tape.shape(w0) == std::vector<int64_t>{ct, c}, "temporal_group: w0 shape");
    check_shape(tape.shape(wg) == std::vector<int64_t>{ct, tau * c}, "temporal_group: wg shape");
    int64_t L = 1 + (T - 1) / tau;
    int out = tape.new_node({L, ct, xs[2], xs[3]}, tape.any_grad({x, w0, b0, wg, bg}));
    group_fwd(tape.v(x), tape.v(w0), tape.v(b0), tape.v(wg), tape.v(bg), tape.nodes.back().val.data(), T, c, hw, ct,
              tau);
    if (tape.nodes.back().needs_grad)
        tape.nodes.back().bwd = [&tape, x, w0, b0, wg, bg, out, T, c, hw, ct, tau, L]() {
            const double* go = tape.g(out);
            const double* vx = tape.v(x);
            for (int64_t l = 0; l < L; ++l)
                for (int64_t o = 0; o < ct; ++o) {
                    const double* gyo = go + (l * ct + o) * hw;
                    double gsum = 0.0;
                    for (int64_t s = 0; s < hw; ++s) gsum += gyo[s];
                    if (l == 0) {
                        if (tape.ng(b0)) tape.g(b0)[o] += gsum;
                        for (int64_t i = 0; i < c; ++i) {
                            const double* xc = vx + i * hw;
                            if (tape.ng(w0)) {
                                double s = 0.0;
                                for (int64_t k2 = 0; k2 < hw; ++k2) s += gyo[k2] * xc[k2];
                                tape.g(w0)[o * c + i] += s;
                            }
                            if (tape.ng(x)) {
                                double wv = tape.v(w0)[o * c + i];
                                double* gxc = tape.g(x) + i * hw;
                                for (int64_t k2 = 0; k2 < hw; ++k2) gxc[k2] += gyo[k2] * wv;
                            }
                        }
                    } else {
                        if (tape.ng(bg)) tape.g(bg)[o] += gsum;
                        for (int64_t u = 0; u < tau; ++u) {
                            int64_t frame = 1 + (l - 1) * tau + u;
                            for (int64_t i = 0; i < c; ++i) {
                                const double* xc = vx + (frame * c + i) * hw;
                                if (tape.ng(wg)) {
                                    double s = 0.0;
                                    for (int64_t k2 = 0; k2 < hw; ++k2) s += gyo[k2] * xc[k2];
                                    tape.g(wg)[o * (tau * c) + u * c + i] += s;
                                }
                                if (tape.ng(x)) {
                                    double wv = tape.v(wg)[o * (tau * c) + u * c + i];
                                    double* gxc = tape.g(x) + (frame * c + i) * hw;
                                    for (int64_t k2 = 0; k2 < hw; ++k2) gxc[k2] += gyo[k2] * wv;
                                }
                            }
                        }
                    }
                }
        };
    return out;
}

// Inverse mapping: latent 0 emits frame 0 through v0; latent i >= 1 emits tau
// frames through vg. y: (L, Ct, H, W) -> (T, C, H, W).
inline void ungroup_fwd(const double* y, const double* v0, const double* c0, const double* vg, const double* cg,
                        double* x, int64_t L, int64_t ct, int64_t hw, int64_t c, int64_t tau) {
    for (int64_t l = 0; l < L; ++l) {
        const double* yl = y + l * ct * hw;
        if (l == 0) {
            for (int64_t o = 0; o < c; ++o) {
                double* xo = x + o * hw;
                for (int64_t s = 0; s < hw; ++s) xo[s] = c0[o];
                for (int64_t i = 0; i < ct; ++i) {
                    double wv = v0[o * ct + i];
                    const double* yc = yl + i * hw;
                    for (int64_t s = 0; s < hw; ++s) xo[s] += wv * yc[s];
                }
            }
        } else {
            for (int64_t u = 0; u < tau; ++u) {
                int64_t frame = 1 + (l - 1) * tau + u;
                for (int64_t o = 0; o < c; ++o) {
                    double* xo = x + (frame * c + o) * hw;
                    for (int64_t s = 0; s < hw; ++s) xo[s] = cg[u * c + o];
                    for (int64_t i = 0; i < ct; ++i) {
                        double wv = vg[(u * c + o) * ct + i];
                        const double* yc = yl + i * hw;
                        for (int64_t s = 0; s < hw; ++s) xo[s] += wv * yc[s];
                    }
                }
            }
        }
    }
}

inline int op_temporal_ungroup(Tape& tape, int y, int v0, int c0, int vg, int cg, int64_t tau) {
    const auto& ys = tape.shape(y);
    check_shape(ys.size() == 4, "temporal_ungroup: rank");
    int64_t L = ys[0], ct = ys[1], hw = ys[2] * ys[3];
    int64_t c = tape.shape(v0)[0];
    check_shape(tape.shape(v0) == std::vector<int64_t>{c, ct}, "temporal_ungroup: v0 shape");
    check_shape(tape.shape(vg) == std::vector<int64_t>{tau * c, ct}, "temporal_ungroup: vg shape");
    check_shape(tape.shape(cg) == std::vector<int64_t>{tau * c}, "temporal_ungroup: cg shape");
    int64_t T = 1 + (L - 1) * tau;
    int out = tape.new_node({T, c, ys[2], ys[3]}, tape.any_grad({y, v0, c0, vg, cg}));
    ungroup_fwd(tape.v(y), tape.v(v0), tape.v(c0), tape.v(vg), tape.v(cg), tape.nodes.back().val.data(), L, ct, hw, c,
                tau);
    if (tape.nodes.back().needs_grad)
        tape.nodes.back().bwd = [&tape, y, v0, c0, vg, cg, out, L, ct, hw, c, tau]() {
            const double* go = tape.g(out);
            const double* vy = tape.v(y);
            for (int64_t l = 0; l < L; ++l) {
                const double* yl = vy + l * ct * hw;
                double* gyl = tape.ng(y) ? tape.g(y) + l * ct * hw : nullptr;
                if (l == 0) {
                    for (int64_t o = 0; o < c; ++o) {
                        const double* gxo = go + o * hw;
                        if (tape.ng(c0)) {
                            double s = 0.0;
                            for (int64_t k2 = 0; k2 < hw; ++k2) s += gxo[k2];
                            tape.g(c0)[o] += s;
                        }
                        for (int64_t i = 0; i < ct; ++i) {
                            if (tape.ng(v0)) {
                                const double* yc = yl + i * hw;
                                double s = 0.0;
                                for (int64_t k2 = 0; k2 < hw; ++k2) s += gxo[k2] * yc[k2];
                                tape.g(v0)[o * ct + i] += s;
                            }
                            if (gyl) {
                                double wv = tape.v(v0)[o * ct + i];
                                double* gyc = gyl + i * hw;
                                for (int64_t k2 = 0; k2 < hw; ++k2) gyc[k2] += gxo[k2] * wv;
                            }
                        }
                    }
                } else {
                    for (int64_t u = 0; u < tau; ++u) {
                        int64_t frame = 1 + (l - 1) * tau + u;
                        for (int64_t o = 0; o < c; ++o) {
                            const double* gxo = go + (frame * c + o) * hw;
                            if (tape.ng(cg)) {
                                double s = 0.0;
                                for (int64_t k2 = 0; k2 < hw; ++k2) s += gxo[k2];
                                tape.g(cg)[u * c + o] += s;
                            }
                            for (int64_t i = 0; i < ct; ++i) {
                                if (tape.ng(vg)) {
                                    const double* yc = yl + i * hw;
                                    double s = 0.0;
                                    for (int64_t k2 = 0; k2 < hw; ++k2) s += gxo[k2] * yc[k2];
                                    tape.g(vg)[(u * c + o) * ct + i] += s;
                                }
                                if (gyl) {
                                    double wv = tape.v(vg)[(u * c + o) * ct + i];
                                    double* gyc = gyl + i * hw;
                                    for (int64_t k2 = 0; k2 < hw; ++k2) gyc[k2] += gxo[k2] * wv;
                                }
                            }
                        }
                    }
                }
            }
        };
    return out;
}

// Soft code-usage penalty: p_j = mean sigmoid over all positions of bit
// channel j, loss = mean_j (ln 2 - H(p_j)). Zero when every channel's soft
// marginal sits at 1/2.
inline int op_entropy_penalty(Tape& tape, int x, int64_t d) {
    const auto& xs = tape.shape(x);
    int64_t total = 1;
    for (int64_t s : xs) total *= s;
    check_shape(total % d == 0 && xs.back() == d, "entropy_penalty: last dim must be bit channel");
    int64_t rows = total / d;
    int out = tape.new_node({1}, tape.ng(x));

    auto marg = std::make_shared<std::vector<double>>(static_cast<size_t>(d), 0.0);
    const double* vx = tape.v(x);
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < d; ++j) (*marg)[static_cast<size_t>(j)] += sigmoid(vx[i * d + j]);
    const double ln2 = 0.6931471805599453;
    double loss = 0.0;
    for (int64_t j = 0; j < d; ++j) {
        double p = std::clamp((*marg)[static_cast<size_t>(j)] / static_cast<double>(rows), 1e-9, 1.0 - 1e-9);
        (*marg)[static_cast<size_t>(j)] = p;
        loss += ln2 + p * std::log(p) + (1.0 - p) * std::log(1.0 - p);
    }
    tape.nodes.back().val[0] = loss / static_cast<double>(d);
    if (tape.nodes.back().needs_grad)
        tape.nodes.back().bwd = [&tape, x, out, marg, rows, d]() {
            double go = tape.g(out)[0] / (static_cast<double>(d) * static_cast<double>(rows));
            const double* vx2 = tape.v(x);
            double* gx = tape.g(x);
            for (int64_t j = 0; j < d; ++j) {
                double p = (*marg)[static_cast<size_t>(j)];
                double dp = std::log(p / (1.0 - p));  // d(ln2 - H)/dp
                for (int64_t i = 0; i < rows; ++i) {
                    double sg = sigmoid(vx2[i * d + j]);
                    gx[i * d + j] += go * dp * sg * (1.0 - sg);
                }
            }
        };
    return out;
}

}  // namespace msvar
