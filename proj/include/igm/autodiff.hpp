#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "igm/tensor.hpp"

namespace igm::ad {

// Reverse-mode autodiff over Tensor values. Graphs are built eagerly per
// forward pass; parameter nodes are long-lived and accumulate gradients across
// backward() calls until the optimizer zeroes them.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.numel() == 0) grad = Tensor::zeros(value.shape);
        return grad;
    }
};

class Var {
  public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node(std::move(n)) {}

    bool defined() const { return node != nullptr; }
    const Tensor& val() const { return node->value; }
    Tensor& grad() const { return node->ensure_grad(); }
    bool requires_grad() const { return node->requires_grad; }

    std::shared_ptr<Node> node;
};

Var constant(Tensor t);
Var param(Tensor t);  // leaf with requires_grad

// elementwise, shapes must match
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
Var exp_(Var a);
Var log_(Var a);
Var clamp_min(Var a, double lo);  // zero gradient below lo

// (N,M) x (M,P) -> (N,P)
Var matmul(Var a, Var b);
// (N,D) + row vector (1,D) or (D)
Var add_rowvec(Var m, Var b);
// row-wise stable softmax on (N,K)
Var softmax_rows(Var a);

// (N,K) -> (N,K,h,w), each map constant at the label weight; gradient sums
// over the spatial extent. Used to condition conv nets on (possibly soft)
// one-hot labels.
Var broadcast_channels(Var y, std::size_t h, std::size_t w);

Var sum(Var a);       // scalar
Var mean_all(Var a);  // scalar
Var sum_rows_to_row(Var a);  // (N,K) -> (1,K) column sums
Var reshape(Var a, std::vector<std::size_t> shape);
Var concat_cols(Var a, Var b);                      // (N,A)+(N,B) -> (N,A+B)
Var slice_cols(Var a, std::size_t c0, std::size_t c1);  // [c0, c1)

struct ConvSpec {
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t pad = 0;
};

// x: (N,C,H,W), w: (OC,C,K,K), b: (OC)
Var conv2d(Var x, Var w, Var b, const ConvSpec& cs);
// x: (N,C,H,W), w: (C,OC,K,K), b: (OC); output spatial (H-1)*s + K - 2p
Var conv_transpose2d(Var x, Var w, Var b, const ConvSpec& cs);

// Sum over all elements of log p_CB(x | lam) with the exact normalizer;
// custom primitive so the gradient uses the analytic d/dlam of log C.
// x entries in [0,1], lam entries in (0,1), same shape.
Var cb_log_prob_sum(const Tensor& x, Var lam);

// Runs reverse-mode accumulation from a scalar root.
void backward(Var root);

}  // namespace igm::ad
