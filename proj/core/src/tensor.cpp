#include "landet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace landet {

size_t Tensor::numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) fail(Error::Kind::invalid_argument, "non-positive dimension");
        n *= size_t(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> s, float fill)
    : shape(std::move(s)), data(numel(shape), fill) {}

Tensor::Tensor(std::vector<int> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size())
        fail(Error::Kind::shape_mismatch, "shape/data length mismatch");
}

bool Tensor::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

void Graph::check_finite(const Tensor& t, const char* op_name) {
    if (!t.all_finite())
        fail(Error::Kind::numeric, std::string("non-finite value in ") + op_name);
}

Tensor& Graph::grad_buf(int node) {
    Node& n = nodes_[node];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape, 0.0f);
    return n.grad;
}

int Graph::leaf(const Tensor& t) {
    check_finite(t, "leaf");
    Node n;
    n.op = OpKind::leaf;
    n.value = t;
    return push(std::move(n));
}

int Graph::affine(int input, int weights, int bias) {
    const Tensor& x = nodes_[input].value;
    const Tensor& w = nodes_[weights].value;
    const Tensor& b = nodes_[bias].value;
    if (w.shape.size() != 2)
        fail(Error::Kind::shape_mismatch, "affine: weights must be 2-d");
    const int n_out = w.shape[0];
    const int n_in = w.shape[1];
    if (int(x.size()) != n_in || int(b.size()) != n_out)
        fail(Error::Kind::shape_mismatch, "affine: shapes do not conform");

    Tensor out({n_out});
    for (int j = 0; j < n_out; ++j) {
        const float* wr = &w.data[size_t(j) * n_in];
        float acc = b.data[j];
        for (int i = 0; i < n_in; ++i) acc += wr[i] * x.data[i];
        out.data[j] = acc;
    }
    check_finite(out, "affine");

    Node n;
    n.op = OpKind::affine;
    n.inputs = {input, weights, bias};
    n.value = std::move(out);
    n.backward = [n_out, n_in](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        const Tensor& go = me.grad;
        const Tensor& x = g.nodes_[me.inputs[0]].value;
        const Tensor& w = g.nodes_[me.inputs[1]].value;
        Tensor& gx = g.grad_buf(me.inputs[0]);
        Tensor& gw = g.grad_buf(me.inputs[1]);
        Tensor& gb = g.grad_buf(me.inputs[2]);
        for (int j = 0; j < n_out; ++j) {
            const float gj = go.data[j];
            if (gj == 0.0f) continue;
            const float* wr = &w.data[size_t(j) * n_in];
            float* gwr = &gw.data[size_t(j) * n_in];
            for (int i = 0; i < n_in; ++i) {
                gx.data[i] += gj * wr[i];
                gwr[i] += gj * x.data[i];
            }
            gb.data[j] += gj;
        }
    };
    return push(std::move(n));
}

int Graph::conv2d(int input, int kernels, int bias, int stride, int padding) {
    const Tensor& x = nodes_[input].value;
    const Tensor& k = nodes_[kernels].value;
    const Tensor& b = nodes_[bias].value;
    if (x.shape.size() != 3 || k.shape.size() != 4)
        fail(Error::Kind::shape_mismatch, "conv2d: need [C,H,W] input and [K,C,kh,kw] kernels");
    if (stride < 1 || padding < 0)
        fail(Error::Kind::invalid_argument, "conv2d: bad stride/padding");
    const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    const int K = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    if (k.shape[1] != C || int(b.size()) != K)
        fail(Error::Kind::shape_mismatch, "conv2d: channel mismatch");
    const int Ho = (H + 2 * padding - kh) / stride + 1;
    const int Wo = (W + 2 * padding - kw) / stride + 1;
    if (H + 2 * padding < kh || W + 2 * padding < kw || Ho < 1 || Wo < 1)
        fail(Error::Kind::invalid_argument, "conv2d: non-positive output dims");

    Tensor out({K, Ho, Wo});
    for (int kc = 0; kc < K; ++kc) {
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                float acc = b.data[kc];
                const int iy0 = oy * stride - padding;
                const int ix0 = ox * stride - padding;
                for (int c = 0; c < C; ++c) {
                    const float* xc = &x.data[size_t(c) * H * W];
                    const float* kk = &k.data[((size_t(kc) * C + c) * kh) * kw];
                    for (int dy = 0; dy < kh; ++dy) {
                        const int iy = iy0 + dy;
                        if (iy < 0 || iy >= H) continue;
                        const float* xr = &xc[size_t(iy) * W];
                        const float* kr = &kk[size_t(dy) * kw];
                        for (int dx = 0; dx < kw; ++dx) {
                            const int ix = ix0 + dx;
                            if (ix < 0 || ix >= W) continue;
                            acc += xr[ix] * kr[dx];
                        }
                    }
                }
                out.data[(size_t(kc) * Ho + oy) * Wo + ox] = acc;
            }
        }
    }
    check_finite(out, "conv2d");

    Node n;
    n.op = OpKind::conv2d;
    n.inputs = {input, kernels, bias};
    n.value = std::move(out);
    n.backward = [C, H, W, K, kh, kw, Ho, Wo, stride, padding](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        const Tensor& go = me.grad;
        const Tensor& x = g.nodes_[me.inputs[0]].value;
        const Tensor& k = g.nodes_[me.inputs[1]].value;
        Tensor& gx = g.grad_buf(me.inputs[0]);
        Tensor& gk = g.grad_buf(me.inputs[1]);
        Tensor& gb = g.grad_buf(me.inputs[2]);
        for (int kc = 0; kc < K; ++kc) {
            for (int oy = 0; oy < Ho; ++oy) {
                for (int ox = 0; ox < Wo; ++ox) {
                    const float gv = go.data[(size_t(kc) * Ho + oy) * Wo + ox];
                    if (gv == 0.0f) continue;
                    gb.data[kc] += gv;
                    const int iy0 = oy * stride - padding;
                    const int ix0 = ox * stride - padding;
                    for (int c = 0; c < C; ++c) {
                        const float* xc = &x.data[size_t(c) * H * W];
                        float* gxc = &gx.data[size_t(c) * H * W];
                        const float* kk = &k.data[((size_t(kc) * C + c) * kh) * kw];
                        float* gkk = &gk.data[((size_t(kc) * C + c) * kh) * kw];
                        for (int dy = 0; dy < kh; ++dy) {
                            const int iy = iy0 + dy;
                            if (iy < 0 || iy >= H) continue;
                            for (int dx = 0; dx < kw; ++dx) {
                                const int ix = ix0 + dx;
                                if (ix < 0 || ix >= W) continue;
                                gxc[size_t(iy) * W + ix] += gv * kk[size_t(dy) * kw + dx];
                                gkk[size_t(dy) * kw + dx] += gv * xc[size_t(iy) * W + ix];
                            }
                        }
                    }
                }
            }
        }
    };
    return push(std::move(n));
}

int Graph::relu(int input) {
    const Tensor& x = nodes_[input].value;
    Tensor out(x.shape);
    for (size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > 0.0f ? x.data[i] : 0.0f;

    Node n;
    n.op = OpKind::relu;
    n.inputs = {input};
    n.value = std::move(out);
    n.backward = [](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        const Tensor& x = g.nodes_[me.inputs[0]].value;
        Tensor& gx = g.grad_buf(me.inputs[0]);
        // subgradient at 0 is 0
        for (size_t i = 0; i < x.size(); ++i)
            if (x.data[i] > 0.0f) gx.data[i] += me.grad.data[i];
    };
    return push(std::move(n));
}

int Graph::maxpool(int input, int window, int stride) {
    const Tensor& x = nodes_[input].value;
    if (x.shape.size() != 3)
        fail(Error::Kind::shape_mismatch, "maxpool: need [C,H,W] input");
    if (window < 1 || stride < 1)
        fail(Error::Kind::invalid_argument, "maxpool: bad window/stride");
    const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    if ((H - window) % stride != 0 || (W - window) % stride != 0 || H < window || W < window)
        fail(Error::Kind::invalid_argument, "maxpool: windows do not tile input");
    const int Ho = (H - window) / stride + 1;
    const int Wo = (W - window) / stride + 1;

    Tensor out({C, Ho, Wo});
    std::vector<int> argmax(out.size());
    for (int c = 0; c < C; ++c) {
        const float* xc = &x.data[size_t(c) * H * W];
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                int best = -1;
                float bv = -std::numeric_limits<float>::infinity();
                for (int dy = 0; dy < window; ++dy) {
                    for (int dx = 0; dx < window; ++dx) {
                        const int idx = (oy * stride + dy) * W + (ox * stride + dx);
                        if (xc[idx] > bv) {  // strict: ties keep lowest flat index
                            bv = xc[idx];
                            best = idx;
                        }
                    }
                }
                const size_t o = (size_t(c) * Ho + oy) * Wo + ox;
                out.data[o] = bv;
                argmax[o] = int(size_t(c) * H * W) + best;
            }
        }
    }

    Node n;
    n.op = OpKind::maxpool;
    n.inputs = {input};
    n.value = std::move(out);
    n.backward = [argmax = std::move(argmax)](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        Tensor& gx = g.grad_buf(me.inputs[0]);
        for (size_t o = 0; o < me.grad.size(); ++o)
            gx.data[argmax[o]] += me.grad.data[o];
    };
    return push(std::move(n));
}

int Graph::sigmoid(int input) {
    const Tensor& x = nodes_[input].value;
    Tensor out(x.shape);
    for (size_t i = 0; i < x.size(); ++i) {
        const float v = x.data[i];
        // split form avoids exp overflow for large |v|
        out.data[i] = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v))
                                : std::exp(v) / (1.0f + std::exp(v));
    }
    check_finite(out, "sigmoid");

    Node n;
    n.op = OpKind::sigmoid;
    n.inputs = {input};
    n.value = std::move(out);
    n.backward = [](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        Tensor& gx = g.grad_buf(me.inputs[0]);
        for (size_t i = 0; i < me.value.size(); ++i) {
            const float s = me.value.data[i];
            gx.data[i] += me.grad.data[i] * s * (1.0f - s);
        }
    };
    return push(std::move(n));
}

int Graph::softmax_ce(int logits, int label) {
    const Tensor& z = nodes_[logits].value;
    const int l = int(z.size());
    if (label < 0 || label >= l)
        fail(Error::Kind::invalid_argument, "softmax_ce: label out of range");

    float zmax = z.data[0];
    for (float v : z.data) zmax = std::max(zmax, v);
    float sum = 0.0f;
    std::vector<float> p(l);
    for (int i = 0; i < l; ++i) {
        p[i] = std::exp(z.data[i] - zmax);
        sum += p[i];
    }
    for (int i = 0; i < l; ++i) p[i] /= sum;
    const float loss = -(z.data[label] - zmax - std::log(sum));

    Tensor out({1}, std::vector<float>{loss});
    check_finite(out, "softmax_ce");

    Node n;
    n.op = OpKind::softmax_ce;
    n.inputs = {logits};
    n.value = std::move(out);
    n.backward = [p = std::move(p), label](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        const float gv = me.grad.data[0];
        Tensor& gz = g.grad_buf(me.inputs[0]);
        for (size_t i = 0; i < p.size(); ++i)
            gz.data[i] += gv * (p[i] - (int(i) == label ? 1.0f : 0.0f));
    };
    return push(std::move(n));
}

int Graph::reshape(int input, std::vector<int> shape) {
    const Tensor& x = nodes_[input].value;
    if (Tensor::numel(shape) != x.size())
        fail(Error::Kind::shape_mismatch, "reshape: numel mismatch");

    Node n;
    n.op = OpKind::reshape;
    n.inputs = {input};
    n.value = Tensor(std::move(shape), x.data);
    n.backward = [](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        Tensor& gx = g.grad_buf(me.inputs[0]);
        for (size_t i = 0; i < me.grad.size(); ++i) gx.data[i] += me.grad.data[i];
    };
    return push(std::move(n));
}

int Graph::mean(int input) {
    const Tensor& x = nodes_[input].value;
    float acc = 0.0f;
    for (float v : x.data) acc += v;
    const float inv_n = 1.0f / float(x.size());

    Node n;
    n.op = OpKind::mean;
    n.inputs = {input};
    n.value = Tensor({1}, std::vector<float>{acc * inv_n});
    n.backward = [inv_n](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        const float gv = me.grad.data[0] * inv_n;
        Tensor& gx = g.grad_buf(me.inputs[0]);
        for (float& gi : gx.data) gi += gv;
    };
    return push(std::move(n));
}

int Graph::add_scaled(int a, int b, float alpha) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    if (va.size() != 1 || vb.size() != 1)
        fail(Error::Kind::shape_mismatch, "add_scaled: scalar inputs required");

    Node n;
    n.op = OpKind::add_scaled;
    n.inputs = {a, b};
    n.value = Tensor({1}, std::vector<float>{va.data[0] + alpha * vb.data[0]});
    check_finite(n.value, "add_scaled");
    n.backward = [alpha](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        const float gv = me.grad.data[0];
        g.grad_buf(me.inputs[0]).data[0] += gv;
        g.grad_buf(me.inputs[1]).data[0] += gv * alpha;
    };
    return push(std::move(n));
}

int Graph::mask_corrupt(int mask, const Tensor& x, const Tensor& eta) {
    const Tensor& m = nodes_[mask].value;
    if (!m.same_shape(x) || !m.same_shape(eta))
        fail(Error::Kind::shape_mismatch, "mask_corrupt: shape mismatch");
    for (float v : m.data)
        if (v < 0.0f || v > 1.0f)
            fail(Error::Kind::invalid_argument, "mask_corrupt: mask outside [0,1]");

    Tensor out(m.shape);
    for (size_t i = 0; i < m.size(); ++i)
        out.data[i] = m.data[i] * x.data[i] + (1.0f - m.data[i]) * eta.data[i];

    Node n;
    n.op = OpKind::mask_corrupt;
    n.inputs = {mask};
    n.value = std::move(out);
    // d out / d m = x - eta
    std::vector<float> dm(m.size());
    for (size_t i = 0; i < m.size(); ++i) dm[i] = x.data[i] - eta.data[i];
    n.backward = [dm = std::move(dm)](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        Tensor& gm = g.grad_buf(me.inputs[0]);
        for (size_t i = 0; i < dm.size(); ++i) gm.data[i] += me.grad.data[i] * dm[i];
    };
    return push(std::move(n));
}

int Graph::tanh_unit(int input) {
    const Tensor& x = nodes_[input].value;
    Tensor out(x.shape);
    for (size_t i = 0; i < x.size(); ++i)
        out.data[i] = 0.5f * (std::tanh(x.data[i]) + 1.0f);
    check_finite(out, "tanh_unit");

    Node n;
    n.op = OpKind::tanh_unit;
    n.inputs = {input};
    n.value = std::move(out);
    n.backward = [](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        Tensor& gx = g.grad_buf(me.inputs[0]);
        for (size_t i = 0; i < me.value.size(); ++i) {
            const float t = 2.0f * me.value.data[i] - 1.0f;  // tanh(x)
            gx.data[i] += me.grad.data[i] * 0.5f * (1.0f - t * t);
        }
    };
    return push(std::move(n));
}

int Graph::sq_dist(int input, const Tensor& reference) {
    const Tensor& x = nodes_[input].value;
    if (!x.same_shape(reference))
        fail(Error::Kind::shape_mismatch, "sq_dist: shape mismatch");
    float acc = 0.0f;
    for (size_t i = 0; i < x.size(); ++i) {
        const float d = x.data[i] - reference.data[i];
        acc += d * d;
    }

    Node n;
    n.op = OpKind::sq_dist;
    n.inputs = {input};
    n.value = Tensor({1}, std::vector<float>{acc});
    n.backward = [ref = reference](Graph& g, int self) {
        const Node& me = g.nodes_[self];
        const float gv = me.grad.data[0];
        const Tensor& x = g.nodes_[me.inputs[0]].value;
        Tensor& gx = g.grad_buf(me.inputs[0]);
        for (size_t i = 0; i < x.size(); ++i)
            gx.data[i] += gv * 2.0f * (x.data[i] - ref.data[i]);
    };
    return push(std::move(n));
}

int Graph::cw_margin(int logits, int label, float kappa) {
    const Tensor& z = nodes_[logits].value;
    const int l = int(z.size());
    if (label < 0 || label >= l)
        fail(Error::Kind::invalid_argument, "cw_margin: label out of range");
    if (l < 2) fail(Error::Kind::invalid_argument, "cw_margin: need >= 2 classes");

    int other = label == 0 ? 1 : 0;
    for (int j = 0; j < l; ++j)
        if (j != label && z.data[j] > z.data[other]) other = j;
    const float raw = z.data[label] - z.data[other];
    const bool active = raw > -kappa;

    Node n;
    n.op = OpKind::cw_margin;
    n.inputs = {logits};
    n.value = Tensor({1}, std::vector<float>{active ? raw : -kappa});
    n.backward = [label, other, active](Graph& g, int self) {
        if (!active) return;
        const Node& me = g.nodes_[self];
        const float gv = me.grad.data[0];
        Tensor& gz = g.grad_buf(me.inputs[0]);
        gz.data[label] += gv;
        gz.data[other] -= gv;
    };
    return push(std::move(n));
}

void Graph::run_backward(int from) {
    for (int i = from; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.data.empty()) continue;
        n.backward(*this, i);
    }
    for (int i = from; i >= 0; --i)
        if (!nodes_[i].grad.data.empty() && !nodes_[i].grad.all_finite())
            fail(Error::Kind::numeric, "non-finite gradient during backward");
}

void Graph::backward(int loss_node) {
    if (nodes_[loss_node].value.size() != 1)
        fail(Error::Kind::invalid_argument, "backward: loss node must be scalar");
    grad_buf(loss_node).data[0] = 1.0f;
    run_backward(loss_node);
}

void Graph::backward_logit(int logits_node, int j) {
    Tensor& g = grad_buf(logits_node);
    if (j < 0 || j >= int(g.size()))
        fail(Error::Kind::invalid_argument, "backward_logit: index out of range");
    // clear any grads from a previous backward over this graph
    for (Node& n : nodes_)
        if (!n.grad.data.empty()) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0f);
    g.data[j] = 1.0f;
    run_backward(logits_node);
}

}  // namespace landet
