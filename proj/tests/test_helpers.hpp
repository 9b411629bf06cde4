#pragma once

#include <functional>
#include <vector>

#include "found/autodiff.hpp"
#include "found/rng.hpp"
#include "found/tensor.hpp"

namespace found::testing {

inline Tensor random_tensor(Rng& rng, int b, int c, int h, int w, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(b, c, h, w);
    for (double& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

/// Central-difference check of d(scalar_fn)/d(input) at `probe_coords` random
/// coordinates. scalar_fn must rebuild its graph from the given leaf each call.
struct FdCheck {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
};

inline FdCheck finite_difference_check(const std::function<double(const Tensor&)>& scalar_fn,
                                       const Tensor& input, const Tensor& analytic_grad,
                                       Rng& rng, int probe_coords, double step = 1e-4) {
    FdCheck out;
    for (int p = 0; p < probe_coords; ++p) {
        const size_t idx = rng.next_u64() % input.v.size();
        Tensor plus = input;
        Tensor minus = input;
        plus.v[idx] += step;
        minus.v[idx] -= step;
        const double fd = (scalar_fn(plus) - scalar_fn(minus)) / (2.0 * step);
        const double an = analytic_grad.v[idx];
        const double abs_err = std::fabs(fd - an);
        const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
        out.max_abs_err = std::max(out.max_abs_err, abs_err);
        out.max_rel_err = std::max(out.max_rel_err, abs_err / denom);
    }
    return out;
}

}  // namespace found::testing
