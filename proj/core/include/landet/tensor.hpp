#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "landet/common.hpp"

namespace landet {

// Dense n-dimensional float32 tensor, row-major.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> s, float fill = 0.0f);
    Tensor(std::vector<int> s, std::vector<float> d);

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;

    static size_t numel(const std::vector<int>& shape);
};

enum class OpKind {
    leaf,
    affine,
    conv2d,
    relu,
    maxpool,
    sigmoid,
    softmax_ce,
    reshape,
    mean,
    add_scaled,
    mask_corrupt,
    tanh_unit,
    sq_dist,
    cw_margin,
};

// Define-by-run compute graph. Every op runs its forward pass at insertion
// time and records a backward closure; node order is therefore topological
// by construction. One graph per forward pass, confined to one thread.
class Graph {
public:
    struct Node {
        OpKind op;
        std::vector<int> inputs;
        Tensor value;
        Tensor grad;  // allocated lazily at backward time
        std::function<void(Graph&, int)> backward;  // may be empty (leaf)
    };

    // Leaf holding a copy of t (an input image, a parameter, C&W's w).
    int leaf(const Tensor& t);

    // out[j] = sum_i W[j,i] * in[i] + b[j].  W shape [n_out, n_in].
    int affine(int input, int weights, int bias);

    // Cross-correlation. input [C,H,W], kernels [K,C,kh,kw], bias [K].
    int conv2d(int input, int kernels, int bias, int stride, int padding);

    int relu(int input);

    // Per-window max over [C,H,W]; windows must tile exactly.
    // Backward routes to the argmax, ties to the lowest flat index.
    int maxpool(int input, int window, int stride);

    int sigmoid(int input);

    // Scalar loss: -log softmax(logits)[label], max-subtracted.
    int softmax_ce(int logits, int label);

    // Metadata-only shape change; numel must match.
    int reshape(int input, std::vector<int> shape);

    // Scalar mean of all elements.
    int mean(int input);

    // Scalar: value(a) + alpha * value(b).
    int add_scaled(int a, int b, float alpha);

    // x_tilde = m*x + (1-m)*eta with x, eta constant. Gradient flows to m.
    int mask_corrupt(int mask, const Tensor& x, const Tensor& eta);

    // Elementwise 0.5 * (tanh(w) + 1): maps R^d into (0,1)^d.
    int tanh_unit(int input);

    // Scalar squared L2 distance to a constant reference.
    int sq_dist(int input, const Tensor& reference);

    // Scalar max(Z[y] - max_{j != y} Z[j], -kappa) over logits Z.
    int cw_margin(int logits, int label, float kappa);

    // Reverse accumulation from a scalar loss node. Gradients of all
    // reachable nodes (leaves included) are available via grad() after.
    void backward(int loss_node);

    // Backward seeded with one-hot on logits[j]; used for Jacobian rows.
    void backward_logit(int logits_node, int j);

    const Tensor& value(int node) const { return nodes_[node].value; }
    const Tensor& grad(int node) const { return nodes_[node].grad; }
    size_t node_count() const { return nodes_.size(); }

private:
    int push(Node n);
    void run_backward(int from);
    void check_finite(const Tensor& t, const char* op_name);
    Tensor& grad_buf(int node);

    std::vector<Node> nodes_;
};

}  // namespace landet
