#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hierflow/errors.hpp"

namespace hierflow {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct TensorData {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily, empty means "all zero / untracked"
    bool needs_grad = false;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Dense 64-bit tensor handle with value semantics on the handle and shared
// storage underneath. Gradients are populated by Tape::backward.
class Tensor {
public:
    Tensor() = default;

    // A constant never accumulates gradient.
    static Tensor constant(Shape shape, std::vector<double> value);
    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    // A leaf that participates in differentiation (model parameter).
    static Tensor parameter(Shape shape, std::vector<double> value);

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const { return d_->shape; }
    std::size_t numel() const { return d_->value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    const std::vector<double>& value() const { return d_->value; }
    std::vector<double>& value_mut() { return d_->value; }
    const std::vector<double>& grad() const { return d_->grad; }
    bool has_grad() const { return !d_->grad.empty(); }
    bool needs_grad() const { return d_->needs_grad; }
    void zero_grad() { d_->grad.clear(); }

    double item() const;

    std::shared_ptr<detail::TensorData> data() const { return d_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
    std::shared_ptr<detail::TensorData> d_;

    friend Tensor make_op_result(Shape, std::vector<double>, bool);
};

Tensor make_op_result(Shape shape, std::vector<double> value, bool needs_grad);

// Reverse-mode tape. The most recently constructed Tape on the thread is the
// active one; ops record onto it when an input needs gradient. Ops invoked
// with no active tape run forward-only.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current();

    void record(std::function<void()> backward_fn);

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. A second
    // call on the same tape is an error.
    void backward(const Tensor& loss);

    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<std::function<void()>> nodes_;
    bool used_ = false;
    Tape* prev_ = nullptr;
};

// ---- differentiable operations ------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise; shapes must match exactly or one operand must be a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor flatten(const Tensor& x);  // to [1 x numel]
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);
Tensor gather_rows(const Tensor& x, std::vector<std::size_t> idx);

Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar

// y[m x n] = x[m x n] + b (b is [n] or [1 x n]); grad of b is the column sum.
Tensor add_bias(const Tensor& x, const Tensor& b);

// y = x * w + b for row-stacked inputs.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Rows of x are length-L series; emits floor((L-W)/S)+1 patches per row,
// stacked: out[(r*N + i), w] = x[r, i*S + w].
Tensor patchify(const Tensor& x, std::size_t W, std::size_t S);

// 1-D convolution along each row with a shared kernel, "same" zero padding.
Tensor depthwise_conv(const Tensor& x, const Tensor& kernel);

// Pointwise (1x1) mixing across the patch axis. x is [R*N x D] with N rows
// per item, k is [A x N]; out[(r*A + a), d] = sum_n k[a,n] * x[(r*N + n), d].
Tensor patch_mix(const Tensor& x, const Tensor& k, std::size_t N);

// Compressed adjacency used by graph ops; immutable once built.
struct Csr {
    std::vector<std::size_t> offsets;  // size V+1
    std::vector<std::size_t> nbrs;
    std::size_t num_nodes() const { return offsets.empty() ? 0 : offsets.size() - 1; }
    std::size_t degree(std::size_t v) const { return offsets[v + 1] - offsets[v]; }
};

// out[v] = sum or mean of x[u] over u in N(v); isolated nodes get zeros.
Tensor neighbor_aggregate(const Tensor& x, std::shared_ptr<const Csr> adj, bool mean);

// out[b*P + p] = sum over v in desc[p] of x[b*V + v]; desc is a CSR over the
// P output rows listing source rows within a block of V.
Tensor row_group_sum(const Tensor& x, std::shared_ptr<const Csr> desc,
                     std::size_t blocks, std::size_t block_rows);

}  // namespace hierflow
