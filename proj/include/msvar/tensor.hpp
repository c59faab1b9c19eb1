#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "msvar/common.hpp"
#include "msvar/rng.hpp"

namespace msvar {

// Dense row-major array of doubles. Everything in this project is small
// enough that one flat buffer per array is the right representation.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), v(numel_of(shape), 0.0) {}

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

    // (a, b, c) into a rank-3 tensor
    double& at3(int64_t a, int64_t b, int64_t c) {
        return v[static_cast<size_t>((a * shape[1] + b) * shape[2] + c)];
    }
    double at3(int64_t a, int64_t b, int64_t c) const {
        return v[static_cast<size_t>((a * shape[1] + b) * shape[2] + c)];
    }

    double& at4(int64_t a, int64_t b, int64_t c, int64_t d) {
        return v[static_cast<size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
    }
    double at4(int64_t a, int64_t b, int64_t c, int64_t d) const {
        return v[static_cast<size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    void fill_normal(Rng& rng, double stddev = 1.0) {
        for (double& x : v) x = rng.normal() * stddev;
    }

    void fill_uniform(Rng& rng, double lo, double hi) {
        for (double& x : v) x = rng.uniform(lo, hi);
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    check_shape(a.same_shape(b), "max_abs_diff: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double x : a.v) s += x * x;
    return std::sqrt(s);
}

inline double l2_dist(const Tensor& a, const Tensor& b) {
    check_shape(a.same_shape(b), "l2_dist: shape mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double mean_abs_diff(const Tensor& a, const Tensor& b) {
    check_shape(a.same_shape(b), "mean_abs_diff: shape mismatch");
    if (a.numel() == 0) return 0.0;
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.numel());
}

}  // namespace msvar
