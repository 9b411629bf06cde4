#include "found/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace found {

Tensor Tensor::full(int b, int c, int h, int w, double value) {
    Tensor t(b, c, h, w);
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(" << b << "," << c << "," << h << "," << w << ")";
    return os.str();
}

double linf_norm(const Tensor& t) {
    double m = 0.0;
    for (double x : t.v) m = std::max(m, std::fabs(x));
    return m;
}

double l1_norm(const Tensor& t) {
    double s = 0.0;
    for (double x : t.v) s += std::fabs(x);
    return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
    return m;
}

bool all_finite(const Tensor& t) {
    for (double x : t.v)
        if (!std::isfinite(x)) return false;
    return true;
}

Tensor clamped(const Tensor& t, double lo, double hi) {
    Tensor out = t;
    for (double& x : out.v) x = std::min(hi, std::max(lo, x));
    return out;
}

}  // namespace found
