#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace uaf {

// Numeric mode: f32 rounds every op result to binary32 (training mode),
// f64 keeps full precision (gradient-check mode).
enum class Dtype { f32, f64 };

Dtype default_dtype();
void set_default_dtype(Dtype d);

struct DtypeGuard {
    explicit DtypeGuard(Dtype d) : prev_(default_dtype()) { set_default_dtype(d); }
    ~DtypeGuard() { set_default_dtype(prev_); }
  private:
    Dtype prev_;
};

bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }
  private:
    bool prev_;
};

class Tensor;

struct Node {
    const char* op = "";
    std::vector<Tensor> inputs;
    std::weak_ptr<struct TensorImpl> output;
    std::function<void(const std::vector<double>& grad_out)> backward;
    bool consumed = false;
};

struct TensorImpl {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // allocated lazily, same size as data
    std::shared_ptr<Node> node;
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> vals,
                            bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    // Truncated normal (resampled beyond 2 stddev), the init used everywhere.
    static Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double stddev,
                        bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int64_t size() const { return static_cast<int64_t>(impl_->data.size()); }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }
    double value() const;  // scalar tensors only
    double at(int i) const { return impl_->data[static_cast<size_t>(i)]; }
    double at(int i, int j) const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool b) { impl_->requires_grad = b; }
    bool tracked() const { return impl_ && (impl_->requires_grad || impl_->node != nullptr); }

    std::vector<double>& grad();
    const std::vector<double>& grad() const { return impl_->grad; }
    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }
    void clear_grad() { impl_->grad.clear(); }

    Tensor clone() const;  // deep copy, detached from any graph

    std::shared_ptr<TensorImpl> impl() const { return impl_; }
    TensorImpl* raw() const { return impl_.get(); }

    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  private:
    std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode sweep from a scalar root. Grads accumulate into every
// tracked tensor reachable from root; call zero_grad/clear_grad to reset.
void backward(const Tensor& root);

// --- op set ---

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor affine(const Tensor& x, double scale, double shift);  // scale*x + shift
Tensor neg(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);              // [m,p] x [p,q]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x[k], w[k,m], b[m] -> [m]
Tensor add_rowvec(const Tensor& x, const Tensor& v);          // x[n,k] + v[k] per row

Tensor embedding(const Tensor& table, const std::vector<int>& ids);  // -> [n,k]

// 1-D dilated causal convolution over x[n,k]; w[kernel,k,k], b[k].
// out[t] depends on x[t], x[t-d], ..., x[t-(kernel-1)d] with zero left pad.
Tensor causal_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int dilation);

// Layer normalization over the feature axis of x[n,k], per position.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log_sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor row(const Tensor& x, int i);        // x[n,k] -> [k]
Tensor column(const Tensor& x, int j);     // x[n,k] -> [n]
Tensor index(const Tensor& x, int flat);   // -> scalar
Tensor dot(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& x, const Tensor& s);  // s scalar tensor

// Negative log-likelihood summed over positions whose target != pad_id.
// log_probs[n,V] are log-softmax rows; targets has length n.
Tensor nll_masked(const Tensor& log_probs, const std::vector<int>& targets, int pad_id);

// picks[l] = x[l, idx[l]] for x[N,C].
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);

// sum_l w[l] * x[l] with constant weights (no grad into w).
Tensor weighted_sum(const Tensor& x, const std::vector<double>& w);

Tensor detach(const Tensor& x);
Tensor reshape(const Tensor& x, std::vector<int> shape);

// --- optimizer ---

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
  public:
    Adam(std::vector<Tensor> params, AdamConfig cfg = {});
    // One update with bias correction; requires every param to carry a grad
    // buffer, and clears grads afterwards.
    void step();
    void zero_grad();
    int64_t step_count() const { return step_; }
    const std::vector<Tensor>& params() const { return params_; }

  private:
    struct Slot {
        std::vector<double> m, v;
    };
    std::vector<Tensor> params_;
    std::vector<Slot> slots_;
    AdamConfig cfg_;
    int64_t step_ = 0;
};

// Central-difference check of a scalar-valued function at x.
// Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
// Runs in f64 regardless of the ambient mode.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double h = 1e-4);

}  // namespace uaf
