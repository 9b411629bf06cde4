#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace found {

/// Dense row-major (batch, channel, height, width) tensor of doubles.
/// All numerics in this library run in double precision; artifacts on disk
/// store float32 payloads (see container.hpp).
struct Tensor {
    int b = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int b_, int c_, int h_, int w_)
        : b(b_), c(c_), h(h_), w(w_), v(static_cast<size_t>(b_) * c_ * h_ * w_, 0.0) {}

    static Tensor zeros(int b, int c, int h, int w) { return Tensor(b, c, h, w); }
    static Tensor full(int b, int c, int h, int w, double value);

    size_t numel() const { return v.size(); }
    bool empty() const { return v.empty(); }

    size_t index(int bi, int ci, int y, int x) const {
        return ((static_cast<size_t>(bi) * c + ci) * h + y) * w + x;
    }
    double& at(int bi, int ci, int y, int x) { return v[index(bi, ci, y, x)]; }
    double at(int bi, int ci, int y, int x) const { return v[index(bi, ci, y, x)]; }

    double* plane(int bi, int ci) { return v.data() + (static_cast<size_t>(bi) * c + ci) * h * w; }
    const double* plane(int bi, int ci) const {
        return v.data() + (static_cast<size_t>(bi) * c + ci) * h * w;
    }

    bool same_shape(const Tensor& o) const {
        return b == o.b && c == o.c && h == o.h && w == o.w;
    }
    std::string shape_str() const;
};

double linf_norm(const Tensor& t);
double l1_norm(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

/// Element-wise clamp into [lo, hi].
Tensor clamped(const Tensor& t, double lo, double hi);

}  // namespace found
