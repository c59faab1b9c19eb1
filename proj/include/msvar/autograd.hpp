#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "msvar/layout.hpp"
#include "msvar/mask.hpp"
#include "msvar/rope.hpp"
#include "msvar/tensor.hpp"

namespace msvar {

// ---------------------------------------------------------------------------
// Dense kernels shared by the tape ops and the inference-only paths, so the
// two compute bit-identical values.
// ---------------------------------------------------------------------------

// C(n,m) += A(n,k) B(k,m)
inline void matmul_acc(const double* A, const double* B, double* C, int64_t n, int64_t k, int64_t m) {
    for (int64_t i = 0; i < n; ++i) {
        const double* a = A + i * k;
        double* c = C + i * m;
        for (int64_t l = 0; l < k; ++l) {
            double av = a[l];
            const double* b = B + l * m;
            for (int64_t j = 0; j < m; ++j) c[j] += av * b[j];
        }
    }
}

// dA(n,k) += dC(n,m) B(k,m)^T
inline void matmul_acc_bt(const double* dC, const double* B, double* dA, int64_t n, int64_t k, int64_t m) {
    for (int64_t i = 0; i < n; ++i) {
        const double* dc = dC + i * m;
        double* da = dA + i * k;
        for (int64_t l = 0; l < k; ++l) {
            const double* b = B + l * m;
            double s = 0.0;
            for (int64_t j = 0; j < m; ++j) s += dc[j] * b[j];
            da[l] += s;
        }
    }
}

// dB(k,m) += A(n,k)^T dC(n,m)
inline void matmul_acc_at(const double* A, const double* dC, double* dB, int64_t n, int64_t k, int64_t m) {
    for (int64_t i = 0; i < n; ++i) {
        const double* a = A + i * k;
        const double* dc = dC + i * m;
        for (int64_t l = 0; l < k; ++l) {
            double av = a[l];
            double* db = dB + l * m;
            for (int64_t j = 0; j < m; ++j) db[j] += av * dc[j];
        }
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Reverse-mode tape. Nodes are created in topological order; backward walks
// the tape in reverse. Values and gradients are flat double buffers.
// ---------------------------------------------------------------------------

class Tape {
public:
    struct Node {
        std::vector<int64_t> shape;
        std::vector<double> val;
        std::vector<double> grad;
        std::function<void()> bwd;
        bool needs_grad = false;
    };

    std::vector<Node> nodes;

    int64_t size() const { return static_cast<int64_t>(nodes.size()); }

    int new_node(std::vector<int64_t> shape, bool needs_grad) {
        Node n;
        n.shape = std::move(shape);
        n.val.assign(static_cast<size_t>(Tensor::numel_of(n.shape)), 0.0);
        n.needs_grad = needs_grad;
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }

    int leaf(const Tensor& t, bool needs_grad) {
        int id = new_node(t.shape, needs_grad);
        nodes[static_cast<size_t>(id)].val = t.v;
        return id;
    }

    const std::vector<double>& val(int id) const { return nodes[static_cast<size_t>(id)].val; }
    std::vector<double>& val(int id) { return nodes[static_cast<size_t>(id)].val; }
    const std::vector<double>& grad(int id) const { return nodes[static_cast<size_t>(id)].grad; }
    const std::vector<int64_t>& shape(int id) const { return nodes[static_cast<size_t>(id)].shape; }

    Tensor value_tensor(int id) const {
        Tensor t;
        t.shape = nodes[static_cast<size_t>(id)].shape;
        t.v = nodes[static_cast<size_t>(id)].val;
        return t;
    }

    Tensor grad_tensor(int id) const {
        Tensor t;
        t.shape = nodes[static_cast<size_t>(id)].shape;
        t.v = nodes[static_cast<size_t>(id)].grad;
        if (t.v.empty()) t.v.assign(static_cast<size_t>(Tensor::numel_of(t.shape)), 0.0);
        return t;
    }

    void backward(int loss_id) {
        check_shape(nodes[static_cast<size_t>(loss_id)].val.size() == 1, "backward: loss must be scalar");
        for (auto& n : nodes) n.grad.assign(n.val.size(), 0.0);
        nodes[static_cast<size_t>(loss_id)].grad[0] = 1.0;
        for (int id = loss_id; id >= 0; --id) {
            Node& n = nodes[static_cast<size_t>(id)];
            if (n.bwd && n.needs_grad) n.bwd();
        }
    }

    bool finite(int id) const {
        for (double x : nodes[static_cast<size_t>(id)].val)
            if (!std::isfinite(x)) return false;
        return true;
    }

    bool any_grad(std::initializer_list<int> ids) const {
        for (int id : ids)
            if (nodes[static_cast<size_t>(id)].needs_grad) return true;
        return false;
    }

    double* g(int id) { return nodes[static_cast<size_t>(id)].grad.data(); }
    const double* v(int id) const { return nodes[static_cast<size_t>(id)].val.data(); }
    bool ng(int id) const { return nodes[static_cast<size_t>(id)].needs_grad; }

    // ---- elementwise and linear algebra ----

    int add(int a, int b) {
        check_shape(shape(a) == shape(b), "tape add: shape mismatch");
        int out = new_node(shape(a), any_grad({a, b}));
        auto& o = nodes.back();
        const auto& va = val(a);
        const auto& vb = val(b);
        for (size_t i = 0; i < o.val.size(); ++i) o.val[i] = va[i] + vb[i];
        if (o.needs_grad)
            o.bwd = [this, a, b, out]() {
                const double* go = g(out);
                size_t n = nodes[static_cast<size_t>(out)].val.size();
                if (ng(a)) {
                    double* ga = g(a);
                    for (size_t i = 0; i < n; ++i) ga[i] += go[i];
                }
                if (ng(b)) {
                    double* gb = g(b);
                    for (size_t i = 0; i < n; ++i) gb[i] += go[i];
                }
            };
        return out;
    }

    int scale(int a, double c) {
        int out = new_node(shape(a), ng(a));
        auto& o = nodes.back();
        const auto& va = val(a);
        for (size_t i = 0; i < o.val.size(); ++i) o.val[i] = va[i] * c;
        if (o.needs_grad)
            o.bwd = [this, a, out, c]() {
                const double* go = g(out);
                double* ga = g(a);
                for (size_t i = 0; i < nodes[static_cast<size_t>(out)].val.size(); ++i) ga[i] += go[i] * c;
            };
        return out;
    }

    // Scalar combination sum_i coeff_i * node_i of scalar nodes.
    int lincomb(const std::vector<std::pair<double, int>>& terms) {
        bool needs = false;
        double total = 0.0;
        for (const auto& [c, id] : terms) {
            check_shape(val(id).size() == 1, "lincomb: inputs must be scalars");
            total += c * val(id)[0];
            needs = needs || ng(id);
        }
        int out = new_node({1}, needs);
        nodes.back().val[0] = total;
        if (needs) {
            auto ts = terms;
            nodes.back().bwd = [this, ts, out]() {
                double go = g(out)[0];
                for (const auto& [c, id] : ts)
                    if (ng(id)) g(id)[0] += c * go;
            };
        }
        return out;
    }

    // X(n,in) @ W(in,out)
    int linear(int x, int w) {
        check_shape(shape(x).size() == 2 && shape(w).size() == 2 && shape(x)[1] == shape(w)[0],
                    "tape linear: shape mismatch");
        int64_t n = shape(x)[0], in = shape(x)[1], out_dim = shape(w)[1];
        int out = new_node({n, out_dim}, any_grad({x, w}));
        matmul_acc(v(x), v(w), nodes.back().val.data(), n, in, out_dim);
        if (nodes.back().needs_grad)
            nodes.back().bwd = [this, x, w, out, n, in, out_dim]() {
                const double* go = g(out);
                if (ng(x)) matmul_acc_bt(go, v(w), g(x), n, in, out_dim);
                if (ng(w)) matmul_acc_at(v(x), go, g(w), n, in, out_dim);
            };
        return out;
    }

    int linear_bias(int x, int w, int b) {
        int y = linear(x, w);
        check_shape(shape(b).size() == 1 && shape(b)[0] == shape(y)[1], "tape linear_bias: bias shape");
        int64_t n = shape(y)[0], m = shape(y)[1];
        int out = new_node(shape(y), any_grad({y, b}));
        auto& o = nodes.back();
        const auto& vy = val(y);
        const auto& vb = val(b);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < m; ++j)
                o.val[static_cast<size_t>(i * m + j)] = vy[static_cast<size_t>(i * m + j)] + vb[static_cast<size_t>(j)];
        if (o.needs_grad)
            o.bwd = [this, y, b, out, n, m]() {
                const double* go = g(out);
                if (ng(y)) {
                    double* gy = g(y);
                    for (int64_t i = 0; i < n * m; ++i) gy[i] += go[i];
                }
                if (ng(b)) {
                    double* gb = g(b);
                    for (int64_t i = 0; i < n; ++i)
                        for (int64_t j = 0; j < m; ++j) gb[j] += go[i * m + j];
                }
            };
        return out;
    }

    // Row-wise RMS normalization with learned gain.
    int rmsnorm(int x, int gain, double eps = 1e-6) {
        check_shape(shape(x).size() == 2 && shape(gain).size() == 1 && shape(gain)[0] == shape(x)[1],
                    "tape rmsnorm: shape mismatch");
        int64_t n = shape(x)[0], m = shape(x)[1];
        int out = new_node({n, m}, any_grad({x, gain}));
        auto inv_rms = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
        {
            const double* vx = v(x);
            const double* vg = v(gain);
            double* vo = nodes.back().val.data();
            for (int64_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (int64_t j = 0; j < m; ++j) s += vx[i * m + j] * vx[i * m + j];
                double r = 1.0 / std::sqrt(s / static_cast<double>(m) + eps);
                (*inv_rms)[static_cast<size_t>(i)] = r;
                for (int64_t j = 0; j < m; ++j) vo[i * m + j] = vx[i * m + j] * r * vg[j];
            }
        }
        if (nodes.back().needs_grad)
            nodes.back().bwd = [this, x, gain, out, n, m, inv_rms]() {
                const double* go = g(out);
                const double* vx = v(x);
                const double* vg = v(gain);
                for (int64_t i = 0; i < n; ++i) {
                    double r = (*inv_rms)[static_cast<size_t>(i)];
                    if (ng(gain)) {
                        double* gg = g(gain);
                        for (int64_t j = 0; j < m; ++j) gg[j] += go[i * m + j] * vx[i * m + j] * r;
                    }
                    if (ng(x)) {
                        double dot = 0.0;
                        for (int64_t j = 0; j < m; ++j) dot += go[i * m + j] * vg[j] * vx[i * m + j];
                        double coef = r * r * r * dot / static_cast<double>(m);
                        double* gx = g(x);
                        for (int64_t j = 0; j < m; ++j) gx[i * m + j] += go[i * m + j] * vg[j] * r - coef * vx[i * m + j];
                    }
                }
            };
        return out;
    }

    int silu(int x) {
        int out = new_node(shape(x), ng(x));
        auto& o = nodes.back();
        const auto& vx = val(x);
        for (size_t i = 0; i < o.val.size(); ++i) o.val[i] = vx[i] * sigmoid(vx[i]);
        if (o.needs_grad)
            o.bwd = [this, x, out]() {
                const double* go = g(out);
                const double* vx = v(x);
                double* gx = g(x);
                for (size_t i = 0; i < nodes[static_cast<size_t>(out)].val.size(); ++i) {
                    double s = sigmoid(vx[i]);
                    gx[i] += go[i] * s * (1.0 + vx[i] * (1.0 - s));
                }
            };
        return out;
    }

    int tanh_op(int x) {
        int out = new_node(shape(x), ng(x));
        auto& o = nodes.back();
        const auto& vx = val(x);
        for (size_t i = 0; i < o.val.size(); ++i) o.val[i] = std::tanh(vx[i]);
        if (o.needs_grad)
            o.bwd = [this, x, out]() {
                const double* go = g(out);
                const double* vo = v(out);
                double* gx = g(x);
                for (size_t i = 0; i < nodes[static_cast<size_t>(out)].val.size(); ++i)
                    gx[i] += go[i] * (1.0 - vo[i] * vo[i]);
            };
        return out;
    }

    // silu(gate) * up
    int swiglu(int gate, int up) {
        check_shape(shape(gate) == shape(up), "tape swiglu: shape mismatch");
        int out = new_node(shape(gate), any_grad({gate, up}));
        auto& o = nodes.back();
        const auto& vg_ = val(gate);
        const auto& vu = val(up);
        for (size_t i = 0; i < o.val.size(); ++i) o.val[i] = vg_[i] * sigmoid(vg_[i]) * vu[i];
        if (o.needs_grad)
            o.bwd = [this, gate, up, out]() {
                const double* go = g(out);
                const double* vgt = v(gate);
                const double* vup = v(up);
                size_t n = nodes[static_cast<size_t>(out)].val.size();
                for (size_t i = 0; i < n; ++i) {
                    double s = sigmoid(vgt[i]);
                    double act = vgt[i] * s;
                    if (ng(gate)) g(gate)[i] += go[i] * vup[i] * s * (1.0 + vgt[i] * (1.0 - s));
                    if (ng(up)) g(up)[i] += go[i] * act;
                }
            };
        return out;
    }

    // sum(x * w) with constant weights
    int weighted_sum(int x, const Tensor& w) {
        check_shape(shape(x) == w.shape, "tape weighted_sum: shape mismatch");
        int out = new_node({1}, ng(x));
        double s = 0.0;
        const double* vx = v(x);
        for (int64_t i = 0; i < w.numel(); ++i) s += vx[i] * w[i];
        nodes.back().val[0] = s;
        if (nodes.back().needs_grad) {
            auto wt = std::make_shared<Tensor>(w);
            nodes.back().bwd = [this, x, out, wt]() {
                double go = g(out)[0];
                double* gx = g(x);
                for (int64_t i = 0; i < wt->numel(); ++i) gx[i] += go * (*wt)[i];
            };
        }
        return out;
    }

    // mean((x - target)^2) against a constant target
    int mse(int x, const Tensor& target) {
        check_shape(shape(x) == target.shape, "tape mse: shape mismatch");
        int out = new_node({1}, ng(x));
        const double* vx = v(x);
        double s = 0.0;
        int64_t n = target.numel();
        for (int64_t i = 0; i < n; ++i) {
            double d = vx[i] - target[i];
            s += d * d;
        }
        nodes.back().val[0] = s / static_cast<double>(n);
        if (nodes.back().needs_grad) {
            auto tg = std::make_shared<Tensor>(target);
            nodes.back().bwd = [this, x, out, tg]() {
                double go = g(out)[0];
                double* gx = g(x);
                const double* vx2 = v(x);
                int64_t n2 = tg->numel();
                double c = 2.0 * go / static_cast<double>(n2);
                for (int64_t i = 0; i < n2; ++i) gx[i] += c * (vx2[i] - (*tg)[i]);
            };
        }
        return out;
    }

    // Value is replaced by a constant; gradient passes through unchanged.
    int straight_through(int x, const Tensor& replaced) {
        check_shape(shape(x) == replaced.shape, "tape straight_through: shape mismatch");
        int out = new_node(shape(x), ng(x));
        nodes.back().val = replaced.v;
        if (nodes.back().needs_grad)
            nodes.back().bwd = [this, x, out]() {
                const double* go = g(out);
                double* gx = g(x);
                for (size_t i = 0; i < nodes[static_cast<size_t>(out)].val.size(); ++i) gx[i] += go[i];
            };
        return out;
    }
};

}  // namespace msvar
