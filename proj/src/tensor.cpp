#include "uaf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace uaf {

namespace {

Dtype g_dtype = Dtype::f32;
bool g_grad_enabled = true;

int64_t numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor: nonpositive extent");
        n *= d;
    }
    return n;
}

void finalize(std::vector<double>& vals, const char* op) {
    if (g_dtype == Dtype::f32) {
        for (double& v : vals) v = static_cast<double>(static_cast<float>(v));
    }
    for (double v : vals) {
        if (!std::isfinite(v))
            throw std::runtime_error(std::string(op) + ": non-finite value produced");
    }
}

void check_finite_input(const Tensor& t, const char* op) {
    for (double v : t.data()) {
        if (!std::isfinite(v))
            throw std::runtime_error(std::string(op) + ": non-finite input");
    }
}

bool any_tracked(std::initializer_list<Tensor> ts) {
    if (!g_grad_enabled) return false;
    for (const auto& t : ts)
        if (t.tracked()) return true;
    return false;
}

// Build the result tensor and, when needed, the graph node.
Tensor make_result(std::vector<int> shape, std::vector<double> vals, const char* op,
                   std::vector<Tensor> inputs,
                   std::function<void(const std::vector<double>&)> bw) {
    finalize(vals, op);
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(vals);
    bool track = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs)
            if (in.tracked()) track = true;
    }
    if (track) {
        auto node = std::make_shared<Node>();
        node->op = op;
        node->inputs = std::move(inputs);
        node->output = impl;
        node->backward = std::move(bw);
        impl->node = std::move(node);
    }
    return Tensor(std::move(impl));
}

std::vector<double>& grad_buf(Tensor& t) { return t.grad(); }

}  // namespace

Dtype default_dtype() { return g_dtype; }
void set_default_dtype(Dtype d) { g_dtype = d; }
bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    int64_t n = numel(shape);
    impl->shape = std::move(shape);
    impl->data.assign(static_cast<size_t>(n), 0.0);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.data().begin(), t.data().end(),
              g_dtype == Dtype::f32 ? static_cast<double>(static_cast<float>(v)) : v);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> vals,
                         bool requires_grad) {
    if (numel(shape) != static_cast<int64_t>(vals.size()))
        throw std::invalid_argument("from_data: shape/data length mismatch");
    finalize(vals, "from_data");
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(vals);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::normal_distribution<double> nd(0.0, stddev);
    for (double& v : t.data()) {
        double x = nd(rng);
        while (std::fabs(x) > 2.0 * stddev) x = nd(rng);
        v = g_dtype == Dtype::f32 ? static_cast<double>(static_cast<float>(x)) : x;
    }
    return t;
}

double Tensor::value() const {
    if (impl_->data.size() != 1) throw std::runtime_error("value: tensor is not scalar");
    return impl_->data[0];
}

double Tensor::at(int i, int j) const {
    return impl_->data[static_cast<size_t>(i) * impl_->shape[1] + j];
}

std::vector<double>& Tensor::grad() {
    if (impl_->grad.size() != impl_->data.size())
        impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

Tensor Tensor::clone() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    impl->requires_grad = impl_->requires_grad;
    return Tensor(std::move(impl));
}

void backward(const Tensor& root) {
    if (root.size() != 1) throw std::runtime_error("backward: root must be scalar");
    if (!root.tracked()) throw std::runtime_error("backward: root does not require grad");
    auto root_node = root.impl()->node;
    if (root_node && root_node->consumed)
        throw std::runtime_error("backward: graph already consumed");

    // Post-order DFS from the root; reversed, consumers run before producers.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    if (root_node) {
        stack.push_back({root_node.get(), 0});
        seen.insert(root_node.get());
    }
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* child = node->inputs[idx].impl()->node.get();
            ++idx;
            if (child && !seen.count(child)) {
                seen.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.impl()->grad.assign(1, 0.0);
    root.impl()->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        auto out = node->output.lock();
        if (!out) continue;
        if (out->grad.size() != out->data.size()) out->grad.assign(out->data.size(), 0.0);
        node->backward(out->grad);
        node->consumed = true;
    }
}

// --- elementwise ---

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(static_cast<int>(i)) + b.data()[i];
    Tensor ac = a, bc = b;
    return make_result(a.shape(), std::move(out), "add", {a, b},
                       [ac, bc](const std::vector<double>& g) mutable {
                           if (ac.tracked()) {
                               auto& ga = grad_buf(ac);
                               for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (bc.tracked()) {
                               auto& gb = grad_buf(bc);
                               for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                           }
                       });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    Tensor ac = a, bc = b;
    return make_result(a.shape(), std::move(out), "sub", {a, b},
                       [ac, bc](const std::vector<double>& g) mutable {
                           if (ac.tracked()) {
                               auto& ga = grad_buf(ac);
                               for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (bc.tracked()) {
                               auto& gb = grad_buf(bc);
                               for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                           }
                       });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    Tensor ac = a, bc = b;
    return make_result(a.shape(), std::move(out), "mul", {a, b},
                       [ac, bc](const std::vector<double>& g) mutable {
                           if (ac.tracked()) {
                               auto& ga = grad_buf(ac);
                               for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bc.data()[i];
                           }
                           if (bc.tracked()) {
                               auto& gb = grad_buf(bc);
                               for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ac.data()[i];
                           }
                       });
}

Tensor affine(const Tensor& x, double scale, double shift) {
    std::vector<double> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = scale * x.data()[i] + shift;
    Tensor xc = x;
    return make_result(x.shape(), std::move(out), "affine", {x},
                       [xc, scale](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
                       });
}

Tensor neg(const Tensor& x) { return affine(x, -1.0, 0.0); }

// --- linear algebra ---

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: shape mismatch");
    const int m = a.dim(0), p = a.dim(1), q = b.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * q, 0.0);
    for (int i = 0; i < m; ++i)
        for (int k = 0; k < p; ++k) {
            const double av = a.data()[static_cast<size_t>(i) * p + k];
            const double* brow = &b.data()[static_cast<size_t>(k) * q];
            double* orow = &out[static_cast<size_t>(i) * q];
            for (int j = 0; j < q; ++j) orow[j] += av * brow[j];
        }
    Tensor ac = a, bc = b;
    return make_result({m, q}, std::move(out), "matmul", {a, b},
                       [ac, bc, m, p, q](const std::vector<double>& g) mutable {
                           if (ac.tracked()) {
                               auto& ga = grad_buf(ac);
                               for (int i = 0; i < m; ++i)
                                   for (int k = 0; k < p; ++k) {
                                       double s = 0;
                                       const double* brow = &bc.data()[static_cast<size_t>(k) * q];
                                       const double* grow = &g[static_cast<size_t>(i) * q];
                                       for (int j = 0; j < q; ++j) s += grow[j] * brow[j];
                                       ga[static_cast<size_t>(i) * p + k] += s;
                                   }
                           }
                           if (bc.tracked()) {
                               auto& gb = grad_buf(bc);
                               for (int i = 0; i < m; ++i)
                                   for (int k = 0; k < p; ++k) {
                                       const double av = ac.data()[static_cast<size_t>(i) * p + k];
                                       const double* grow = &g[static_cast<size_t>(i) * q];
                                       double* gbrow = &gb[static_cast<size_t>(k) * q];
                                       for (int j = 0; j < q; ++j) gbrow[j] += av * grow[j];
                                   }
                           }
                       });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape().size() != 1 || w.shape().size() != 2 || x.dim(0) != w.dim(0) ||
        b.dim(0) != w.dim(1))
        throw std::invalid_argument("linear: shape mismatch");
    const int k = w.dim(0), m = w.dim(1);
    std::vector<double> out(b.data());
    for (int i = 0; i < k; ++i) {
        const double xv = x.data()[static_cast<size_t>(i)];
        const double* wrow = &w.data()[static_cast<size_t>(i) * m];
        for (int j = 0; j < m; ++j) out[static_cast<size_t>(j)] += xv * wrow[j];
    }
    Tensor xc = x, wc = w, bc = b;
    return make_result({m}, std::move(out), "linear", {x, w, b},
                       [xc, wc, bc, k, m](const std::vector<double>& g) mutable {
                           if (xc.tracked()) {
                               auto& gx = grad_buf(xc);
                               for (int i = 0; i < k; ++i) {
                                   const double* wrow = &wc.data()[static_cast<size_t>(i) * m];
                                   double s = 0;
                                   for (int j = 0; j < m; ++j) s += wrow[j] * g[static_cast<size_t>(j)];
                                   gx[static_cast<size_t>(i)] += s;
                               }
                           }
                           if (wc.tracked()) {
                               auto& gw = grad_buf(wc);
                               for (int i = 0; i < k; ++i) {
                                   const double xv = xc.data()[static_cast<size_t>(i)];
                                   double* gwrow = &gw[static_cast<size_t>(i) * m];
                                   for (int j = 0; j < m; ++j) gwrow[j] += xv * g[static_cast<size_t>(j)];
                               }
                           }
                           if (bc.tracked()) {
                               auto& gb = grad_buf(bc);
                               for (int j = 0; j < m; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(j)];
                           }
                       });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    if (x.shape().size() != 2 || v.shape().size() != 1 || x.dim(1) != v.dim(0))
        throw std::invalid_argument("add_rowvec: shape mismatch");
    const int n = x.dim(0), k = x.dim(1);
    std::vector<double> out(x.data());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) out[static_cast<size_t>(i) * k + j] += v.data()[static_cast<size_t>(j)];
    Tensor xc = x, vc = v;
    return make_result(x.shape(), std::move(out), "add_rowvec", {x, v},
                       [xc, vc, n, k](const std::vector<double>& g) mutable {
                           if (xc.tracked()) {
                               auto& gx = grad_buf(xc);
                               for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           }
                           if (vc.tracked()) {
                               auto& gv = grad_buf(vc);
                               for (int i = 0; i < n; ++i)
                                   for (int j = 0; j < k; ++j) gv[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * k + j];
                           }
                       });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    if (table.shape().size() != 2) throw std::invalid_argument("embedding: table must be 2-D");
    const int vocab = table.dim(0), k = table.dim(1);
    const int n = static_cast<int>(ids.size());
    std::vector<double> out(static_cast<size_t>(n) * k);
    for (int i = 0; i < n; ++i) {
        if (ids[static_cast<size_t>(i)] < 0 || ids[static_cast<size_t>(i)] >= vocab)
            throw std::out_of_range("embedding: id out of range");
        const double* src = &table.data()[static_cast<size_t>(ids[static_cast<size_t>(i)]) * k];
        std::copy(src, src + k, &out[static_cast<size_t>(i) * k]);
    }
    Tensor tc = table;
    std::vector<int> idc = ids;
    return make_result({n, k}, std::move(out), "embedding", {table},
                       [tc, idc, k](const std::vector<double>& g) mutable {
                           if (!tc.tracked()) return;
                           auto& gt = grad_buf(tc);
                           for (size_t i = 0; i < idc.size(); ++i) {
                               double* dst = &gt[static_cast<size_t>(idc[i]) * k];
                               const double* src = &g[i * k];
                               for (int j = 0; j < k; ++j) dst[j] += src[j];
                           }
                       });
}

Tensor causal_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int dilation) {
    if (x.shape().size() != 2 || w.shape().size() != 3 || w.dim(1) != x.dim(1) ||
        w.dim(2) != b.dim(0))
        throw std::invalid_argument("causal_conv1d: shape mismatch");
    if (dilation < 1) throw std::invalid_argument("causal_conv1d: dilation must be >= 1");
    const int n = x.dim(0), k = x.dim(1), K = w.dim(0), ko = w.dim(2);
    std::vector<double> out(static_cast<size_t>(n) * ko);
    for (int t = 0; t < n; ++t) {
        double* orow = &out[static_cast<size_t>(t) * ko];
        for (int j = 0; j < ko; ++j) orow[j] = b.data()[static_cast<size_t>(j)];
        for (int tap = 0; tap < K; ++tap) {
            const int ts = t - (K - 1 - tap) * dilation;  // tap K-1 reads position t
            if (ts < 0) continue;
            const double* xrow = &x.data()[static_cast<size_t>(ts) * k];
            const double* wtap = &w.data()[static_cast<size_t>(tap) * k * ko];
            for (int ci = 0; ci < k; ++ci) {
                const double xv = xrow[ci];
                if (xv == 0.0) continue;
                const double* wrow = &wtap[static_cast<size_t>(ci) * ko];
                for (int j = 0; j < ko; ++j) orow[j] += xv * wrow[j];
            }
        }
    }
    Tensor xc = x, wc = w, bc = b;
    return make_result({n, ko}, std::move(out), "causal_conv1d", {x, w, b},
                       [xc, wc, bc, dilation, n, k, K, ko](const std::vector<double>& g) mutable {
                           if (bc.tracked()) {
                               auto& gb = grad_buf(bc);
                               for (int t = 0; t < n; ++t)
                                   for (int j = 0; j < ko; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(t) * ko + j];
                           }
                           const bool gx = xc.tracked(), gw = wc.tracked();
                           if (!gx && !gw) return;
                           auto* gxb = gx ? &grad_buf(xc) : nullptr;
                           auto* gwb = gw ? &grad_buf(wc) : nullptr;
                           for (int t = 0; t < n; ++t) {
                               const double* grow = &g[static_cast<size_t>(t) * ko];
                               for (int tap = 0; tap < K; ++tap) {
                                   const int ts = t - (K - 1 - tap) * dilation;
                                   if (ts < 0) continue;
                                   const double* xrow = &xc.data()[static_cast<size_t>(ts) * k];
                                   const double* wtap = &wc.data()[static_cast<size_t>(tap) * k * ko];
                                   for (int ci = 0; ci < k; ++ci) {
                                       const double* wrow = &wtap[static_cast<size_t>(ci) * ko];
                                       if (gx) {
                                           double s = 0;
                                           for (int j = 0; j < ko; ++j) s += grow[j] * wrow[j];
                                           (*gxb)[static_cast<size_t>(ts) * k + ci] += s;
                                       }
                                       if (gw) {
                                           const double xv = xrow[ci];
                                           if (xv == 0.0) continue;
                                           double* gwrow = &(*gwb)[static_cast<size_t>(tap) * k * ko +
                                                                   static_cast<size_t>(ci) * ko];
                                           for (int j = 0; j < ko; ++j) gwrow[j] += xv * grow[j];
                                       }
                                   }
                               }
                           }
                       });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.shape().size() != 2 || gain.dim(0) != x.dim(1) || bias.dim(0) != x.dim(1))
        throw std::invalid_argument("layer_norm: shape mismatch");
    const int n = x.dim(0), k = x.dim(1);
    std::vector<double> out(static_cast<size_t>(n) * k);
    std::vector<double> mu(static_cast<size_t>(n)), istd(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* xrow = &x.data()[static_cast<size_t>(i) * k];
        double m = 0;
        for (int j = 0; j < k; ++j) m += xrow[j];
        m /= k;
        double var = 0;
        for (int j = 0; j < k; ++j) var += (xrow[j] - m) * (xrow[j] - m);
        var /= k;
        mu[static_cast<size_t>(i)] = m;
        istd[static_cast<size_t>(i)] = 1.0 / std::sqrt(var + eps);
        double* orow = &out[static_cast<size_t>(i) * k];
        for (int j = 0; j < k; ++j)
            orow[j] = gain.data()[static_cast<size_t>(j)] * (xrow[j] - m) * istd[static_cast<size_t>(i)] +
                      bias.data()[static_cast<size_t>(j)];
    }
    Tensor xc = x, gc = gain, bc = bias;
    return make_result(x.shape(), std::move(out), "layer_norm", {x, gain, bias},
                       [xc, gc, bc, mu, istd, n, k](const std::vector<double>& g) mutable {
                           auto* gxb = xc.tracked() ? &grad_buf(xc) : nullptr;
                           auto* ggb = gc.tracked() ? &grad_buf(gc) : nullptr;
                           auto* gbb = bc.tracked() ? &grad_buf(bc) : nullptr;
                           for (int i = 0; i < n; ++i) {
                               const double* xrow = &xc.data()[static_cast<size_t>(i) * k];
                               const double* grow = &g[static_cast<size_t>(i) * k];
                               const double m = mu[static_cast<size_t>(i)], is = istd[static_cast<size_t>(i)];
                               if (ggb || gbb) {
                                   for (int j = 0; j < k; ++j) {
                                       if (ggb) (*ggb)[static_cast<size_t>(j)] += grow[j] * (xrow[j] - m) * is;
                                       if (gbb) (*gbb)[static_cast<size_t>(j)] += grow[j];
                                   }
                               }
                               if (gxb) {
                                   // dxhat = g * gain; standard layer-norm backward
                                   double sum_dxhat = 0, sum_dxhat_xhat = 0;
                                   for (int j = 0; j < k; ++j) {
                                       const double dxh = grow[j] * gc.data()[static_cast<size_t>(j)];
                                       const double xh = (xrow[j] - m) * is;
                                       sum_dxhat += dxh;
                                       sum_dxhat_xhat += dxh * xh;
                                   }
                                   for (int j = 0; j < k; ++j) {
                                       const double dxh = grow[j] * gc.data()[static_cast<size_t>(j)];
                                       const double xh = (xrow[j] - m) * is;
                                       (*gxb)[static_cast<size_t>(i) * k + j] +=
                                           is * (dxh - sum_dxhat / k - xh * sum_dxhat_xhat / k);
                                   }
                               }
                           }
                       });
}

// --- activations ---

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > 0 ? x.data()[i] : 0.0;
    Tensor xc = x;
    return make_result(x.shape(), std::move(out), "relu", {x},
                       [xc](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (size_t i = 0; i < g.size(); ++i)
                               if (xc.data()[i] > 0) gx[i] += g[i];
                       });
}

Tensor sigmoid(const Tensor& x) {
    check_finite_input(x, "sigmoid");
    std::vector<double> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double v = x.data()[i];
        out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    Tensor xc = x;
    std::vector<double> saved = out;
    return make_result(x.shape(), std::move(out), "sigmoid", {x},
                       [xc, saved](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (size_t i = 0; i < g.size(); ++i)
                               gx[i] += g[i] * saved[i] * (1.0 - saved[i]);
                       });
}

Tensor log_sigmoid(const Tensor& x) {
    check_finite_input(x, "log_sigmoid");
    std::vector<double> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double v = x.data()[i];
        out[i] = v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
    }
    Tensor xc = x;
    return make_result(x.shape(), std::move(out), "log_sigmoid", {x},
                       [xc](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (size_t i = 0; i < g.size(); ++i) {
                               const double v = xc.data()[i];
                               const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                                       : std::exp(v) / (1.0 + std::exp(v));
                               gx[i] += g[i] * (1.0 - s);
                           }
                       });
}

static std::vector<double> softmax_vals(const Tensor& x, bool log_form) {
    const int n = x.shape().size() == 2 ? x.dim(0) : 1;
    const int k = x.shape().size() == 2 ? x.dim(1) : x.dim(0);
    std::vector<double> out(x.data().size());
    for (int i = 0; i < n; ++i) {
        const double* xrow = &x.data()[static_cast<size_t>(i) * k];
        double* orow = &out[static_cast<size_t>(i) * k];
        double mx = xrow[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, xrow[j]);
        double z = 0;
        for (int j = 0; j < k; ++j) z += std::exp(xrow[j] - mx);
        const double lz = std::log(z) + mx;
        for (int j = 0; j < k; ++j) orow[j] = log_form ? xrow[j] - lz : std::exp(xrow[j] - lz);
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    check_finite_input(x, "softmax");
    std::vector<double> out = softmax_vals(x, false);
    Tensor xc = x;
    std::vector<double> saved = out;
    const int n = x.shape().size() == 2 ? x.dim(0) : 1;
    const int k = x.shape().size() == 2 ? x.dim(1) : x.dim(0);
    return make_result(x.shape(), std::move(out), "softmax", {x},
                       [xc, saved, n, k](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (int i = 0; i < n; ++i) {
                               const double* s = &saved[static_cast<size_t>(i) * k];
                               const double* grow = &g[static_cast<size_t>(i) * k];
                               double sg = 0;
                               for (int j = 0; j < k; ++j) sg += s[j] * grow[j];
                               for (int j = 0; j < k; ++j)
                                   gx[static_cast<size_t>(i) * k + j] += s[j] * (grow[j] - sg);
                           }
                       });
}

Tensor log_softmax_rows(const Tensor& x) {
    check_finite_input(x, "log_softmax");
    std::vector<double> out = softmax_vals(x, true);
    Tensor xc = x;
    std::vector<double> saved = out;
    const int n = x.shape().size() == 2 ? x.dim(0) : 1;
    const int k = x.shape().size() == 2 ? x.dim(1) : x.dim(0);
    return make_result(x.shape(), std::move(out), "log_softmax", {x},
                       [xc, saved, n, k](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (int i = 0; i < n; ++i) {
                               const double* lrow = &saved[static_cast<size_t>(i) * k];
                               const double* grow = &g[static_cast<size_t>(i) * k];
                               double sg = 0;
                               for (int j = 0; j < k; ++j) sg += grow[j];
                               for (int j = 0; j < k; ++j)
                                   gx[static_cast<size_t>(i) * k + j] += grow[j] - std::exp(lrow[j]) * sg;
                           }
                       });
}

// --- reductions and views ---

Tensor sum(const Tensor& x) {
    double s = 0;
    for (double v : x.data()) s += v;
    Tensor xc = x;
    return make_result({1}, {s}, "sum", {x}, [xc](const std::vector<double>& g) mutable {
        if (!xc.tracked()) return;
        auto& gx = grad_buf(xc);
        for (double& v : gx) v += g[0];
    });
}

Tensor mean(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.size());
    double s = 0;
    for (double v : x.data()) s += v;
    Tensor xc = x;
    return make_result({1}, {s * inv}, "mean", {x}, [xc, inv](const std::vector<double>& g) mutable {
        if (!xc.tracked()) return;
        auto& gx = grad_buf(xc);
        for (double& v : gx) v += g[0] * inv;
    });
}

Tensor row(const Tensor& x, int i) {
    if (x.shape().size() != 2 || i < 0 || i >= x.dim(0))
        throw std::invalid_argument("row: index out of range");
    const int k = x.dim(1);
    std::vector<double> out(x.data().begin() + static_cast<size_t>(i) * k,
                            x.data().begin() + static_cast<size_t>(i + 1) * k);
    Tensor xc = x;
    return make_result({k}, std::move(out), "row", {x},
                       [xc, i, k](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (int j = 0; j < k; ++j) gx[static_cast<size_t>(i) * k + j] += g[static_cast<size_t>(j)];
                       });
}

Tensor column(const Tensor& x, int j) {
    if (x.shape().size() != 2 || j < 0 || j >= x.dim(1))
        throw std::invalid_argument("column: index out of range");
    const int n = x.dim(0), k = x.dim(1);
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = x.data()[static_cast<size_t>(i) * k + j];
    Tensor xc = x;
    return make_result({n}, std::move(out), "column", {x},
                       [xc, j, n, k](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (int i = 0; i < n; ++i) gx[static_cast<size_t>(i) * k + j] += g[static_cast<size_t>(i)];
                       });
}

Tensor index(const Tensor& x, int flat) {
    if (flat < 0 || flat >= x.size()) throw std::invalid_argument("index: out of range");
    Tensor xc = x;
    return make_result({1}, {x.data()[static_cast<size_t>(flat)]}, "index", {x},
                       [xc, flat](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           grad_buf(xc)[static_cast<size_t>(flat)] += g[0];
                       });
}

Tensor dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0;
    for (size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
    Tensor ac = a, bc = b;
    return make_result({1}, {s}, "dot", {a, b}, [ac, bc](const std::vector<double>& g) mutable {
        if (ac.tracked()) {
            auto& ga = grad_buf(ac);
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * bc.data()[i];
        }
        if (bc.tracked()) {
            auto& gb = grad_buf(bc);
            for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * ac.data()[i];
        }
    });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw std::invalid_argument("mul_scalar: s must be scalar");
    const double sv = s.data()[0];
    std::vector<double> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = sv * x.data()[i];
    Tensor xc = x, sc = s;
    return make_result(x.shape(), std::move(out), "mul_scalar", {x, s},
                       [xc, sc, sv](const std::vector<double>& g) mutable {
                           if (xc.tracked()) {
                               auto& gx = grad_buf(xc);
                               for (size_t i = 0; i < g.size(); ++i) gx[i] += sv * g[i];
                           }
                           if (sc.tracked()) {
                               double acc = 0;
                               for (size_t i = 0; i < g.size(); ++i) acc += g[i] * xc.data()[i];
                               grad_buf(sc)[0] += acc;
                           }
                       });
}

Tensor nll_masked(const Tensor& log_probs, const std::vector<int>& targets, int pad_id) {
    if (log_probs.shape().size() != 2 ||
        static_cast<int>(targets.size()) != log_probs.dim(0))
        throw std::invalid_argument("nll_masked: shape mismatch");
    const int n = log_probs.dim(0), V = log_probs.dim(1);
    double loss = 0;
    int valid = 0;
    for (int t = 0; t < n; ++t) {
        const int y = targets[static_cast<size_t>(t)];
        if (y == pad_id) continue;
        if (y < 0 || y >= V) throw std::out_of_range("nll_masked: target out of range");
        loss -= log_probs.data()[static_cast<size_t>(t) * V + y];
        ++valid;
    }
    if (valid == 0) throw std::runtime_error("nll_masked: all targets are padding");
    Tensor lc = log_probs;
    std::vector<int> tc = targets;
    return make_result({1}, {loss}, "nll_masked", {log_probs},
                       [lc, tc, pad_id, V](const std::vector<double>& g) mutable {
                           if (!lc.tracked()) return;
                           auto& gl = grad_buf(lc);
                           for (size_t t = 0; t < tc.size(); ++t) {
                               if (tc[t] == pad_id) continue;
                               gl[t * static_cast<size_t>(V) + static_cast<size_t>(tc[t])] -= g[0];
                           }
                       });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
    if (x.shape().size() != 2 || static_cast<int>(idx.size()) != x.dim(0))
        throw std::invalid_argument("gather_rows: shape mismatch");
    const int n = x.dim(0), c = x.dim(1);
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (idx[static_cast<size_t>(i)] < 0 || idx[static_cast<size_t>(i)] >= c)
            throw std::out_of_range("gather_rows: index out of range");
        out[static_cast<size_t>(i)] = x.data()[static_cast<size_t>(i) * c + idx[static_cast<size_t>(i)]];
    }
    Tensor xc = x;
    std::vector<int> ic = idx;
    return make_result({n}, std::move(out), "gather_rows", {x},
                       [xc, ic, c](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (size_t i = 0; i < ic.size(); ++i)
                               gx[i * static_cast<size_t>(c) + static_cast<size_t>(ic[i])] += g[i];
                       });
}

Tensor weighted_sum(const Tensor& x, const std::vector<double>& w) {
    if (static_cast<int64_t>(w.size()) != x.size())
        throw std::invalid_argument("weighted_sum: length mismatch");
    double s = 0;
    for (size_t i = 0; i < w.size(); ++i) s += w[i] * x.data()[i];
    Tensor xc = x;
    std::vector<double> wc = w;
    return make_result({1}, {s}, "weighted_sum", {x},
                       [xc, wc](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (size_t i = 0; i < wc.size(); ++i) gx[i] += g[0] * wc[i];
                       });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    if (numel(shape) != x.size()) throw std::invalid_argument("reshape: element count mismatch");
    Tensor xc = x;
    return make_result(std::move(shape), x.data(), "reshape", {x},
                       [xc](const std::vector<double>& g) mutable {
                           if (!xc.tracked()) return;
                           auto& gx = grad_buf(xc);
                           for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       });
}

Tensor detach(const Tensor& x) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = x.shape();
    impl->data = x.data();
    return Tensor(std::move(impl));
}

// --- Adam ---

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    slots_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        slots_[i].m.assign(params_[i].data().size(), 0.0);
        slots_[i].v.assign(params_[i].data().size(), 0.0);
    }
}

void Adam::step() {
    for (auto& p : params_)
        if (!p.has_grad()) throw std::runtime_error("adam: parameter missing grad");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const bool round32 = default_dtype() == Dtype::f32;
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& data = params_[i].data();
        const auto& g = params_[i].grad();
        auto& m = slots_[i].m;
        auto& v = slots_[i].v;
        for (size_t j = 0; j < data.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            double upd = data[j] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            data[j] = round32 ? static_cast<double>(static_cast<float>(upd)) : upd;
        }
        params_[i].clear_grad();
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.clear_grad();
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
    DtypeGuard guard(Dtype::f64);
    Tensor xv = x.clone();
    xv.set_requires_grad(true);
    Tensor y = f(xv);
    backward(y);
    std::vector<double> analytic = xv.grad();

    double max_err = 0;
    for (size_t i = 0; i < xv.data().size(); ++i) {
        Tensor xp = x.clone();
        xp.data()[i] += h;
        Tensor xm = x.clone();
        xm.data()[i] -= h;
        NoGradGuard ng;
        const double num = (f(xp).value() - f(xm).value()) / (2 * h);
        const double err = std::fabs(analytic[i] - num) / std::max(1.0, std::fabs(analytic[i]));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace uaf
