#include "found/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "found/errors.hpp"

namespace found::ad {

namespace {

NodePtr make_node(Tensor value, std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

void accumulate(Node& dst, const Tensor& g) {
    Tensor& acc = dst.ensure_grad();
    for (size_t i = 0; i < g.v.size(); ++i) acc.v[i] += g.v[i];
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                         " vs " + b.value().shape_str());
}

}  // namespace

Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return Var(n);
}

Var leaf(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = true;
    return Var(n);
}

void backward(const Var& root) {
    if (root.value().numel() != 1)
        throw ShapeError("backward: root must be scalar, got " + root.value().shape_str());
    // Iterative post-order DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node.get(), 0);
    visited.insert(root.node.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            Node* p = node->parents[next_child++].get();
            if (!visited.count(p) && p->requires_grad) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node->ensure_grad().v[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->requires_grad && !n->grad.empty()) n->backprop(*n);
    }
}

// -- elementwise / structural ------------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.value().v[i];
    auto n = make_node(std::move(out), {a.node, b.node});
    n->backprop = [](Node& self) {
        if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) accumulate(*self.parents[1], self.grad);
    };
    return Var(n);
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.value().v[i];
    auto n = make_node(std::move(out), {a.node, b.node});
    n->backprop = [](Node& self) {
        if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor& acc = self.parents[1]->ensure_grad();
            for (size_t i = 0; i < self.grad.v.size(); ++i) acc.v[i] -= self.grad.v[i];
        }
    };
    return Var(n);
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.value().v[i];
    auto n = make_node(std::move(out), {a.node, b.node});
    n->backprop = [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor& acc = self.parents[0]->ensure_grad();
            for (size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += self.grad.v[i] * bv.v[i];
        }
        if (self.parents[1]->requires_grad) {
            Tensor& acc = self.parents[1]->ensure_grad();
            for (size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += self.grad.v[i] * av.v[i];
        }
    };
    return Var(n);
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (double& x : out.v) x *= s;
    auto n = make_node(std::move(out), {a.node});
    n->backprop = [s](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        for (size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += s * self.grad.v[i];
    };
    return Var(n);
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a.value();
    for (double& x : out.v) x += s;
    auto n = make_node(std::move(out), {a.node});
    n->backprop = [](Node& self) {
        if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad);
    };
    return Var(n);
}

Var add_broadcast_batch(const Var& x, const Var& d) {
    const Tensor& xv = x.value();
    const Tensor& dv = d.value();
    if (dv.b != 1 || dv.c != xv.c || dv.h != xv.h || dv.w != xv.w)
        throw ShapeError("add_broadcast_batch: " + xv.shape_str() + " vs " + dv.shape_str());
    Tensor out = xv;
    const size_t plane = dv.v.size();
    for (int bi = 0; bi < xv.b; ++bi)
        for (size_t i = 0; i < plane; ++i) out.v[bi * plane + i] += dv.v[i];
    auto n = make_node(std::move(out), {x.node, d.node});
    n->backprop = [plane](Node& self) {
        if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor& acc = self.parents[1]->ensure_grad();
            const int batch = self.value.b;
            for (int bi = 0; bi < batch; ++bi)
                for (size_t i = 0; i < plane; ++i) acc.v[i] += self.grad.v[bi * plane + i];
        }
    };
    return Var(n);
}

Var clamp(const Var& a, double lo, double hi) {
    Tensor out = a.value();
    for (double& x : out.v) x = std::min(hi, std::max(lo, x));
    auto n = make_node(std::move(out), {a.node});
    n->backprop = [lo, hi](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& in = self.parents[0]->value;
        Tensor& acc = self.parents[0]->ensure_grad();
        for (size_t i = 0; i < acc.v.size(); ++i)
            if (in.v[i] >= lo && in.v[i] <= hi) acc.v[i] += self.grad.v[i];
    };
    return Var(n);
}

Var leaky_relu(const Var& a, double slope) {
    Tensor out = a.value();
    for (double& x : out.v)
        if (x < 0.0) x *= slope;
    auto n = make_node(std::move(out), {a.node});
    n->backprop = [slope](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        const Tensor& in = self.parents[0]->value;
        Tensor& acc = self.parents[0]->ensure_grad();
        for (size_t i = 0; i < acc.v.size(); ++i)
            acc.v[i] += self.grad.v[i] * (in.v[i] >= 0.0 ? 1.0 : slope);
    };
    return Var(n);
}

Var tanh_op(const Var& a) {
    Tensor out = a.value();
    for (double& x : out.v) x = std::tanh(x);
    auto n = make_node(std::move(out), {a.node});
    n->backprop = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        for (size_t i = 0; i < acc.v.size(); ++i) {
            const double y = self.value.v[i];
            acc.v[i] += self.grad.v[i] * (1.0 - y * y);
        }
    };
    return Var(n);
}

Var sigmoid(const Var& a) {
    Tensor out = a.value();
    for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    auto n = make_node(std::move(out), {a.node});
    n->backprop = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        for (size_t i = 0; i < acc.v.size(); ++i) {
            const double y = self.value.v[i];
            acc.v[i] += self.grad.v[i] * y * (1.0 - y);
        }
    };
    return Var(n);
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: empty list");
    const Tensor& first = xs[0].value();
    int total_c = 0;
    for (const auto& x : xs) {
        const Tensor& t = x.value();
        if (t.b != first.b || t.h != first.h || t.w != first.w)
            throw ShapeError("concat_channels: incompatible " + t.shape_str());
        total_c += t.c;
    }
    Tensor out(first.b, total_c, first.h, first.w);
    std::vector<NodePtr> parents;
    int c_off = 0;
    for (const auto& x : xs) {
        const Tensor& t = x.value();
        for (int bi = 0; bi < t.b; ++bi)
            for (int ci = 0; ci < t.c; ++ci)
                std::copy_n(t.plane(bi, ci), static_cast<size_t>(t.h) * t.w,
                            out.plane(bi, c_off + ci));
        c_off += t.c;
        parents.push_back(x.node);
    }
    auto n = make_node(std::move(out), std::move(parents));
    n->backprop = [](Node& self) {
        int c_off = 0;
        for (auto& p : self.parents) {
            const int pc = p->value.c;
            if (p->requires_grad) {
                Tensor& acc = p->ensure_grad();
                const size_t plane = static_cast<size_t>(p->value.h) * p->value.w;
                for (int bi = 0; bi < p->value.b; ++bi)
                    for (int ci = 0; ci < pc; ++ci) {
                        const double* src = self.grad.plane(bi, c_off + ci);
                        double* dst = acc.plane(bi, ci);
                        for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
                    }
            }
            c_off += pc;
        }
    };
    return Var(n);
}

Var slice_channels(const Var& x, int c0, int c1) {
    const Tensor& t = x.value();
    if (c0 < 0 || c1 > t.c || c0 >= c1)
        throw ShapeError("slice_channels: bad range for " + t.shape_str());
    Tensor out(t.b, c1 - c0, t.h, t.w);
    const size_t plane = static_cast<size_t>(t.h) * t.w;
    for (int bi = 0; bi < t.b; ++bi)
        for (int ci = c0; ci < c1; ++ci)
            std::copy_n(t.plane(bi, ci), plane, out.plane(bi, ci - c0));
    auto n = make_node(std::move(out), {x.node});
    n->backprop = [c0](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        const size_t plane = static_cast<size_t>(self.value.h) * self.value.w;
        for (int bi = 0; bi < self.value.b; ++bi)
            for (int ci = 0; ci < self.value.c; ++ci) {
                const double* src = self.grad.plane(bi, ci);
                double* dst = acc.plane(bi, c0 + ci);
                for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
            }
    };
    return Var(n);
}

Var tile_spatial(const Var& x, int h, int w) {
    const Tensor& t = x.value();
    if (t.h != 1 || t.w != 1) throw ShapeError("tile_spatial: input must be (B,C,1,1)");
    Tensor out(t.b, t.c, h, w);
    for (int bi = 0; bi < t.b; ++bi)
        for (int ci = 0; ci < t.c; ++ci) {
            const double val = t.at(bi, ci, 0, 0);
            double* dst = out.plane(bi, ci);
            std::fill_n(dst, static_cast<size_t>(h) * w, val);
        }
    auto n = make_node(std::move(out), {x.node});
    n->backprop = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        const size_t plane = static_cast<size_t>(self.value.h) * self.value.w;
        for (int bi = 0; bi < self.value.b; ++bi)
            for (int ci = 0; ci < self.value.c; ++ci) {
                const double* src = self.grad.plane(bi, ci);
                double s = 0.0;
                for (size_t i = 0; i < plane; ++i) s += src[i];
                acc.at(bi, ci, 0, 0) += s;
            }
    };
    return Var(n);
}

Var global_avg_pool(const Var& x) {
    const Tensor& t = x.value();
    Tensor out(t.b, t.c, 1, 1);
    const size_t plane = static_cast<size_t>(t.h) * t.w;
    for (int bi = 0; bi < t.b; ++bi)
        for (int ci = 0; ci < t.c; ++ci) {
            const double* src = t.plane(bi, ci);
            double s = 0.0;
            for (size_t i = 0; i < plane; ++i) s += src[i];
            out.at(bi, ci, 0, 0) = s / static_cast<double>(plane);
        }
    auto n = make_node(std::move(out), {x.node});
    n->backprop = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        const size_t plane = static_cast<size_t>(acc.h) * acc.w;
        const double inv = 1.0 / static_cast<double>(plane);
        for (int bi = 0; bi < acc.b; ++bi)
            for (int ci = 0; ci < acc.c; ++ci) {
                const double g = self.grad.at(bi, ci, 0, 0) * inv;
                double* dst = acc.plane(bi, ci);
                for (size_t i = 0; i < plane; ++i) dst[i] += g;
            }
    };
    return Var(n);
}

Var space_to_depth(const Var& x, int r) {
    const Tensor& t = x.value();
    if (t.h % r != 0 || t.w % r != 0) throw ShapeError("space_to_depth: size not divisible");
    Tensor out(t.b, t.c * r * r, t.h / r, t.w / r);
    for (int bi = 0; bi < t.b; ++bi)
        for (int ci = 0; ci < t.c; ++ci)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx)
                    for (int dy = 0; dy < r; ++dy)
                        for (int dx = 0; dx < r; ++dx)
                            out.at(bi, ci * r * r + dy * r + dx, y, xx) =
                                t.at(bi, ci, y * r + dy, xx * r + dx);
    auto n = make_node(std::move(out), {x.node});
    n->backprop = [r](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        const int cin = acc.c;
        for (int bi = 0; bi < acc.b; ++bi)
            for (int ci = 0; ci < cin; ++ci)
                for (int y = 0; y < g.h; ++y)
                    for (int xx = 0; xx < g.w; ++xx)
                        for (int dy = 0; dy < r; ++dy)
                            for (int dx = 0; dx < r; ++dx)
                                acc.at(bi, ci, y * r + dy, xx * r + dx) +=
                                    g.at(bi, ci * r * r + dy * r + dx, y, xx);
    };
    return Var(n);
}

Var depth_to_space(const Var& x, int r) {
    const Tensor& t = x.value();
    if (t.c % (r * r) != 0) throw ShapeError("depth_to_space: channels not divisible");
    Tensor out(t.b, t.c / (r * r), t.h * r, t.w * r);
    for (int bi = 0; bi < t.b; ++bi)
        for (int ci = 0; ci < out.c; ++ci)
            for (int y = 0; y < t.h; ++y)
                for (int xx = 0; xx < t.w; ++xx)
                    for (int dy = 0; dy < r; ++dy)
                        for (int dx = 0; dx < r; ++dx)
                            out.at(bi, ci, y * r + dy, xx * r + dx) =
                                t.at(bi, ci * r * r + dy * r + dx, y, xx);
    auto n = make_node(std::move(out), {x.node});
    n->backprop = [r](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        for (int bi = 0; bi < g.b; ++bi)
            for (int ci = 0; ci < g.c; ++ci)
                for (int y = 0; y < acc.h; ++y)
                    for (int xx = 0; xx < acc.w; ++xx)
                        for (int dy = 0; dy < r; ++dy)
                            for (int dx = 0; dx < r; ++dx)
                                acc.at(bi, ci * r * r + dy * r + dx, y, xx) +=
                                    g.at(bi, ci, y * r + dy, xx * r + dx);
    };
    return Var(n);
}

// -- conv / resize -----------------------------------------------------------

namespace {

// Output-index range [lo, hi) for which o*stride - pad + k_off lands inside
// [0, size_in).
inline void conv_range(int size_in, int size_out, int stride, int pad, int k_off, int& lo,
                       int& hi) {
    int num = pad - k_off;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    hi = std::min(size_out, (size_in - 1 - k_off + pad) / stride + 1);
    if (hi < lo) hi = lo;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    if (xv.c != wv.c)
        throw ShapeError("conv2d: input channels " + xv.shape_str() + " vs weight " +
                         wv.shape_str());
    const int k = wv.h;
    const int out_h = (xv.h + 2 * pad - k) / stride + 1;
    const int out_w = (xv.w + 2 * pad - k) / stride + 1;
    if (out_h <= 0 || out_w <= 0) throw ShapeError("conv2d: empty output");
    Tensor out(xv.b, wv.b, out_h, out_w);
    const bool has_bias = bias.valid();
    if (has_bias) {
        const Tensor& bv = bias.value();
        for (int bi = 0; bi < out.b; ++bi)
            for (int co = 0; co < out.c; ++co)
                std::fill_n(out.plane(bi, co), static_cast<size_t>(out_h) * out_w,
                            bv.at(0, co, 0, 0));
    }
    for (int bi = 0; bi < xv.b; ++bi)
        for (int co = 0; co < wv.b; ++co) {
            double* out_base = out.plane(bi, co);
            for (int ci = 0; ci < xv.c; ++ci) {
                const double* in_base = xv.plane(bi, ci);
                for (int ky = 0; ky < k; ++ky) {
                    int oy_lo, oy_hi;
                    conv_range(xv.h, out_h, stride, pad, ky, oy_lo, oy_hi);
                    for (int kx = 0; kx < k; ++kx) {
                        const double wvv = wv.at(co, ci, ky, kx);
                        int ox_lo, ox_hi;
                        conv_range(xv.w, out_w, stride, pad, kx, ox_lo, ox_hi);
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            const double* in_row = in_base + static_cast<size_t>(iy) * xv.w +
                                                   (ox_lo * stride - pad + kx);
                            double* out_row =
                                out_base + static_cast<size_t>(oy) * out_w + ox_lo;
                            const int span = ox_hi - ox_lo;
                            if (stride == 1)
                                for (int i = 0; i < span; ++i) out_row[i] += wvv * in_row[i];
                            else
                                for (int i = 0; i < span; ++i)
                                    out_row[i] += wvv * in_row[i * stride];
                        }
                    }
                }
            }
        }

    std::vector<NodePtr> parents{x.node, weight.node};
    if (has_bias) parents.push_back(bias.node);
    auto n = make_node(std::move(out), std::move(parents));
    n->backprop = [stride, pad, has_bias](Node& self) {
        Node& xn = *self.parents[0];
        Node& wn = *self.parents[1];
        const Tensor& xv = xn.value;
        const Tensor& wv = wn.value;
        const Tensor& g = self.grad;
        const int k = wv.h;
        if (xn.requires_grad) {
            Tensor& dx = xn.ensure_grad();
            for (int bi = 0; bi < xv.b; ++bi)
                for (int co = 0; co < wv.b; ++co) {
                    const double* g_base = g.plane(bi, co);
                    for (int ci = 0; ci < xv.c; ++ci) {
                        double* dx_base = dx.plane(bi, ci);
                        for (int ky = 0; ky < k; ++ky) {
                            int oy_lo, oy_hi;
                            conv_range(xv.h, g.h, stride, pad, ky, oy_lo, oy_hi);
                            for (int kx = 0; kx < k; ++kx) {
                                const double wvv = wv.at(co, ci, ky, kx);
                                int ox_lo, ox_hi;
                                conv_range(xv.w, g.w, stride, pad, kx, ox_lo, ox_hi);
                                for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                    const int iy = oy * stride - pad + ky;
                                    const double* g_row =
                                        g_base + static_cast<size_t>(oy) * g.w + ox_lo;
                                    double* dx_row = dx_base + static_cast<size_t>(iy) * xv.w +
                                                     (ox_lo * stride - pad + kx);
                                    const int span = ox_hi - ox_lo;
                                    if (stride == 1)
                                        for (int i = 0; i < span; ++i)
                                            dx_row[i] += wvv * g_row[i];
                                    else
                                        for (int i = 0; i < span; ++i)
                                            dx_row[i * stride] += wvv * g_row[i];
                                }
                            }
                        }
                    }
                }
        }
        if (wn.requires_grad) {
            Tensor& dw = wn.ensure_grad();
            for (int co = 0; co < wv.b; ++co)
                for (int ci = 0; ci < xv.c; ++ci)
                    for (int ky = 0; ky < k; ++ky) {
                        int oy_lo, oy_hi;
                        conv_range(xv.h, g.h, stride, pad, ky, oy_lo, oy_hi);
                        for (int kx = 0; kx < k; ++kx) {
                            int ox_lo, ox_hi;
                            conv_range(xv.w, g.w, stride, pad, kx, ox_lo, ox_hi);
                            double s = 0.0;
                            for (int bi = 0; bi < xv.b; ++bi) {
                                const double* g_base = g.plane(bi, co);
                                const double* in_base = xv.plane(bi, ci);
                                for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                    const int iy = oy * stride - pad + ky;
                                    const double* g_row =
                                        g_base + static_cast<size_t>(oy) * g.w + ox_lo;
                                    const double* in_row = in_base +
                                                           static_cast<size_t>(iy) * xv.w +
                                                           (ox_lo * stride - pad + kx);
                                    const int span = ox_hi - ox_lo;
                                    if (stride == 1)
                                        for (int i = 0; i < span; ++i) s += g_row[i] * in_row[i];
                                    else
                                        for (int i = 0; i < span; ++i)
                                            s += g_row[i] * in_row[i * stride];
                                }
                            }
                            dw.at(co, ci, ky, kx) += s;
                        }
                    }
        }
        if (has_bias && self.parents[2]->requires_grad) {
            Tensor& db = self.parents[2]->ensure_grad();
            for (int co = 0; co < g.c; ++co) {
                double s = 0.0;
                for (int bi = 0; bi < g.b; ++bi) {
                    const double* g_base = g.plane(bi, co);
                    const size_t plane = static_cast<size_t>(g.h) * g.w;
                    for (size_t i = 0; i < plane; ++i) s += g_base[i];
                }
                db.at(0, co, 0, 0) += s;
            }
        }
    };
    return Var(n);
}

Var upsample_nearest2(const Var& x) {
    const Tensor& t = x.value();
    Tensor out(t.b, t.c, t.h * 2, t.w * 2);
    for (int bi = 0; bi < t.b; ++bi)
        for (int ci = 0; ci < t.c; ++ci) {
            const double* src = t.plane(bi, ci);
            double* dst = out.plane(bi, ci);
            for (int y = 0; y < out.h; ++y) {
                const double* src_row = src + static_cast<size_t>(y / 2) * t.w;
                double* dst_row = dst + static_cast<size_t>(y) * out.w;
                for (int xx = 0; xx < out.w; ++xx) dst_row[xx] = src_row[xx / 2];
            }
        }
    auto n = make_node(std::move(out), {x.node});
    n->backprop = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        for (int bi = 0; bi < acc.b; ++bi)
            for (int ci = 0; ci < acc.c; ++ci) {
                double* dst = acc.plane(bi, ci);
                const double* src = g.plane(bi, ci);
                for (int y = 0; y < g.h; ++y)
                    for (int xx = 0; xx < g.w; ++xx)
                        dst[static_cast<size_t>(y / 2) * acc.w + xx / 2] +=
                            src[static_cast<size_t>(y) * g.w + xx];
            }
    };
    return Var(n);
}

namespace {

struct BilinearAxis {
    int lo, hi;
    double frac;
};

// Align-corners source coordinate for output index i.
BilinearAxis bilinear_axis(int i, int in_size, int out_size) {
    if (out_size == 1 || in_size == 1) return {0, std::min(in_size - 1, 0), 0.0};
    const double src = static_cast<double>(i) * (in_size - 1) / (out_size - 1);
    int lo = static_cast<int>(std::floor(src));
    if (lo > in_size - 2) lo = in_size - 2;
    return {lo, lo + 1, src - lo};
}

}  // namespace

Var resize_bilinear(const Var& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: nonpositive target size");
    const Tensor& t = x.value();
    Tensor out(t.b, t.c, out_h, out_w);
    std::vector<BilinearAxis> ys(out_h), xs(out_w);
    for (int y = 0; y < out_h; ++y) ys[y] = bilinear_axis(y, t.h, out_h);
    for (int xx = 0; xx < out_w; ++xx) xs[xx] = bilinear_axis(xx, t.w, out_w);
    for (int bi = 0; bi < t.b; ++bi)
        for (int ci = 0; ci < t.c; ++ci) {
            const double* src = t.plane(bi, ci);
            double* dst = out.plane(bi, ci);
            for (int y = 0; y < out_h; ++y) {
                const auto& ay = ys[y];
                const double* row_lo = src + static_cast<size_t>(ay.lo) * t.w;
                const double* row_hi = src + static_cast<size_t>(ay.hi) * t.w;
                for (int xx = 0; xx < out_w; ++xx) {
                    const auto& ax = xs[xx];
                    // Lerp form: exact for constant maps.
                    const double top = row_lo[ax.lo] + ax.frac * (row_lo[ax.hi] - row_lo[ax.lo]);
                    const double bot = row_hi[ax.lo] + ax.frac * (row_hi[ax.hi] - row_hi[ax.lo]);
                    dst[static_cast<size_t>(y) * out_w + xx] = top + ay.frac * (bot - top);
                }
            }
        }
    auto n = make_node(std::move(out), {x.node});
    n->backprop = [out_h, out_w](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        const Tensor& g = self.grad;
        std::vector<BilinearAxis> ys(out_h), xs(out_w);
        for (int y = 0; y < out_h; ++y) ys[y] = bilinear_axis(y, acc.h, out_h);
        for (int xx = 0; xx < out_w; ++xx) xs[xx] = bilinear_axis(xx, acc.w, out_w);
        for (int bi = 0; bi < acc.b; ++bi)
            for (int ci = 0; ci < acc.c; ++ci) {
                double* dst = acc.plane(bi, ci);
                const double* src = g.plane(bi, ci);
                for (int y = 0; y < out_h; ++y) {
                    const auto& ay = ys[y];
                    for (int xx = 0; xx < out_w; ++xx) {
                        const auto& ax = xs[xx];
                        const double gv = src[static_cast<size_t>(y) * out_w + xx];
                        dst[static_cast<size_t>(ay.lo) * acc.w + ax.lo] +=
                            gv * (1.0 - ay.frac) * (1.0 - ax.frac);
                        dst[static_cast<size_t>(ay.lo) * acc.w + ax.hi] +=
                            gv * (1.0 - ay.frac) * ax.frac;
                        dst[static_cast<size_t>(ay.hi) * acc.w + ax.lo] +=
                            gv * ay.frac * (1.0 - ax.frac);
                        dst[static_cast<size_t>(ay.hi) * acc.w + ax.hi] += gv * ay.frac * ax.frac;
                    }
                }
            }
    };
    return Var(n);
}

// -- reductions --------------------------------------------------------------

Var sum_channels(const Var& x) {
    const Tensor& t = x.value();
    Tensor out(t.b, 1, t.h, t.w);
    const size_t plane = static_cast<size_t>(t.h) * t.w;
    for (int bi = 0; bi < t.b; ++bi) {
        double* dst = out.plane(bi, 0);
        for (int ci = 0; ci < t.c; ++ci) {
            const double* src = t.plane(bi, ci);
            for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    }
    auto n = make_node(std::move(out), {x.node});
    n->backprop = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        const size_t plane = static_cast<size_t>(acc.h) * acc.w;
        for (int bi = 0; bi < acc.b; ++bi) {
            const double* src = self.grad.plane(bi, 0);
            for (int ci = 0; ci < acc.c; ++ci) {
                double* dst = acc.plane(bi, ci);
                for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
            }
        }
    };
    return Var(n);
}

Var softmax_spatial(const Var& x) {
    const Tensor& t = x.value();
    Tensor out = t;
    const size_t plane = static_cast<size_t>(t.h) * t.w;
    for (int bi = 0; bi < t.b; ++bi)
        for (int ci = 0; ci < t.c; ++ci) {
            double* p = out.plane(bi, ci);
            double mx = p[0];
            for (size_t i = 1; i < plane; ++i) mx = std::max(mx, p[i]);
            double sum = 0.0;
            for (size_t i = 0; i < plane; ++i) {
                p[i] = std::exp(p[i] - mx);
                sum += p[i];
            }
            for (size_t i = 0; i < plane; ++i) p[i] /= sum;
        }
    auto n = make_node(std::move(out), {x.node});
    n->backprop = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        const size_t plane = static_cast<size_t>(acc.h) * acc.w;
        for (int bi = 0; bi < acc.b; ++bi)
            for (int ci = 0; ci < acc.c; ++ci) {
                const double* p = self.value.plane(bi, ci);
                const double* g = self.grad.plane(bi, ci);
                double dot = 0.0;
                for (size_t i = 0; i < plane; ++i) dot += p[i] * g[i];
                double* dst = acc.plane(bi, ci);
                for (size_t i = 0; i < plane; ++i) dst[i] += p[i] * (g[i] - dot);
            }
    };
    return Var(n);
}

Var mse(const Var& a, const Var& b) {
    require_same_shape(a, b, "mse");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    double s = 0.0;
    for (size_t i = 0; i < av.v.size(); ++i) {
        const double d = av.v[i] - bv.v[i];
        s += d * d;
    }
    Tensor out(1, 1, 1, 1);
    out.v[0] = s / static_cast<double>(av.v.size());
    auto n = make_node(std::move(out), {a.node, b.node});
    n->backprop = [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        const double g = self.grad.v[0] * 2.0 / static_cast<double>(av.v.size());
        if (self.parents[0]->requires_grad) {
            Tensor& acc = self.parents[0]->ensure_grad();
            for (size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += g * (av.v[i] - bv.v[i]);
        }
        if (self.parents[1]->requires_grad) {
            Tensor& acc = self.parents[1]->ensure_grad();
            for (size_t i = 0; i < acc.v.size(); ++i) acc.v[i] -= g * (av.v[i] - bv.v[i]);
        }
    };
    return Var(n);
}

namespace {
// Probabilities from softmax can underflow to 0 for extreme logits; floor
// keeps log() finite while leaving ordinary values untouched.
constexpr double kProbFloor = 1e-300;
}  // namespace

Var kl_mean(const Var& p, const Var& q) {
    require_same_shape(p, q, "kl_mean");
    const Tensor& pv = p.value();
    const Tensor& qv = q.value();
    double s = 0.0;
    for (size_t i = 0; i < pv.v.size(); ++i) {
        const double pi = std::max(pv.v[i], kProbFloor);
        const double qi = std::max(qv.v[i], kProbFloor);
        s += pv.v[i] * (std::log(pi) - std::log(qi));
    }
    Tensor out(1, 1, 1, 1);
    out.v[0] = s / static_cast<double>(pv.b);
    auto n = make_node(std::move(out), {p.node, q.node});
    n->backprop = [](Node& self) {
        const Tensor& pv = self.parents[0]->value;
        const Tensor& qv = self.parents[1]->value;
        const double g = self.grad.v[0] / static_cast<double>(pv.b);
        if (self.parents[0]->requires_grad) {
            Tensor& acc = self.parents[0]->ensure_grad();
            for (size_t i = 0; i < acc.v.size(); ++i) {
                const double pi = std::max(pv.v[i], kProbFloor);
                const double qi = std::max(qv.v[i], kProbFloor);
                acc.v[i] += g * (std::log(pi) - std::log(qi) + 1.0);
            }
        }
        if (self.parents[1]->requires_grad) {
            Tensor& acc = self.parents[1]->ensure_grad();
            for (size_t i = 0; i < acc.v.size(); ++i) {
                const double qi = std::max(qv.v[i], kProbFloor);
                acc.v[i] -= g * pv.v[i] / qi;
            }
        }
    };
    return Var(n);
}

Var sum_all(const Var& x) {
    const Tensor& t = x.value();
    double s = 0.0;
    for (double v : t.v) s += v;
    Tensor out(1, 1, 1, 1);
    out.v[0] = s;
    auto n = make_node(std::move(out), {x.node});
    n->backprop = [](Node& self) {
        if (!self.parents[0]->requires_grad) return;
        Tensor& acc = self.parents[0]->ensure_grad();
        const double g = self.grad.v[0];
        for (double& v : acc.v) v += g;
    };
    return Var(n);
}

Var mean_all(const Var& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x.value().numel()));
}

}  // namespace found::ad
