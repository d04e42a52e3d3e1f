#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "endora/tensor.hpp"

namespace endora::ag {

/// Dynamic-tape reverse-mode autodiff over Tensor. The graph is rebuilt on
/// every forward pass; parameter nodes outlive the graph and keep their
/// accumulated gradients until zero_grad().
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    explicit Node(Tensor v, bool rg = false) : value(std::move(v)), requires_grad(rg) {
        if (requires_grad) grad = Tensor(value.shape);
    }

    void ensure_grad() {
        if (grad.data.empty() && !value.data.empty()) grad = Tensor(value.shape);
        if (grad.shape != value.shape) grad = Tensor(value.shape);
    }

    void zero_grad() {
        ensure_grad();
        std::fill(grad.data.begin(), grad.data.end(), 0.0);
    }
};

Var param(Tensor value);     // requires_grad = true
Var constant(Tensor value);  // leaf without gradient

/// Backpropagate from a scalar (numel == 1) root. Accumulates into the
/// grad of every reachable node that requires one.
void backward(const Var& root);

// Elementwise / broadcast arithmetic.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var sqrt_v(const Var& a);
Var gelu(const Var& a);
Var silu(const Var& a);

/// x: [..., D] plus v: [D], broadcast over leading axes.
Var add_rowvec(const Var& x, const Var& v);
Var mul_rowvec(const Var& x, const Var& v);

/// Broadcast a scalar ([1]) variable to an arbitrary shape.
Var broadcast_scalar(const Var& s, Shape shape);

// Linear algebra.
/// x: [..., K] times weight [K, N] -> [..., N].
Var matmul(const Var& x, const Var& w);
/// Batched product, a: [B, M, K], b: [B, K, N] (trans_b: b is [B, N, K]).
Var bmm(const Var& a, const Var& b, bool trans_b = false);

// Shape manipulation.
Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<int>& perm);
Var slice_lastdim(const Var& x, long start, long len);

// Normalization / attention pieces.
Var softmax_lastdim(const Var& x);
Var layernorm_lastdim(const Var& x, double eps = 1e-6);

// Reductions.
Var sum_all(const Var& x);
Var mean_all(const Var& x);
/// Mean over one axis, removing it.
Var mean_axis(const Var& x, int axis);

// Spatial ops (maps and adapters).
/// x: [B, C, H, W], w: [Cout, C, 3, 3], bias: [Cout]; stride 2, padding 1.
Var conv3x3_s2(const Var& x, const Var& w, const Var& bias);
/// x: [B, H, W], non-overlapping k x k average pooling.
Var avgpool2d(const Var& x, long k);

/// out[i] = x[src[i]]; src must be a bijection (pure data movement).
Var index_map(const Var& x, Shape out_shape, std::shared_ptr<std::vector<long>> src);

}  // namespace endora::ag
