#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "found/tensor.hpp"

namespace found::ad {

class Node;
using NodePtr = std::shared_ptr<Node>;

/// One node of the dynamically built computation graph. Gradients are
/// accumulated into `grad` during backward(); `backprop` pushes this node's
/// gradient into its parents.
class Node {
public:
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor::zeros(value.b, value.c, value.h, value.w);
        return grad;
    }
};

/// Value-semantic handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node(std::move(n)) {}

    bool valid() const { return node != nullptr; }
    const Tensor& value() const { return node->value; }
    const Tensor& grad() const { return node->grad; }
    bool requires_grad() const { return node && node->requires_grad; }
    double scalar() const { return node->value.v[0]; }

    NodePtr node;
};

Var constant(Tensor t);
Var leaf(Tensor t);

/// Reverse pass from a scalar root (shape must be (1,1,1,1)). Seeds the root
/// gradient with 1 and runs every reachable node's backprop in reverse
/// topological order. Leaf gradients are read via Var::grad().
void backward(const Var& root);

// -- elementwise / structural ------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// x has batch B, d has batch 1; d is broadcast over the batch dimension.
Var add_broadcast_batch(const Var& x, const Var& d);
/// Exact clamp; gradient passes where lo <= value <= hi (inclusive).
Var clamp(const Var& a, double lo, double hi);
Var leaky_relu(const Var& a, double slope);
Var tanh_op(const Var& a);
Var sigmoid(const Var& a);
Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int c0, int c1);
/// (B,C,1,1) -> (B,C,H,W), value repeated over the spatial grid.
Var tile_spatial(const Var& x, int h, int w);
Var global_avg_pool(const Var& x);
Var space_to_depth(const Var& x, int r);
Var depth_to_space(const Var& x, int r);

// -- conv / resize -----------------------------------------------------------

/// weight (Cout,Cin,K,K), bias (1,Cout,1,1) or invalid Var for none.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var upsample_nearest2(const Var& x);
/// Align-corners bilinear resize (corner pixels map to corner pixels).
/// Constant maps are preserved exactly.
Var resize_bilinear(const Var& x, int out_h, int out_w);

// -- reductions --------------------------------------------------------------

/// (B,C,H,W) -> (B,1,H,W)
Var sum_channels(const Var& x);
/// Softmax over the flattened spatial grid, per (batch, channel) slice.
Var softmax_spatial(const Var& x);
/// Mean over all elements of (a-b)^2 -> scalar.
Var mse(const Var& a, const Var& b);
/// KL(P||Q) summed over each sample's elements, averaged over the batch.
/// Inputs are probability tensors of identical shape.
Var kl_mean(const Var& p, const Var& q);
Var sum_all(const Var& x);
Var mean_all(const Var& x);

}  // namespace found::ad
