#include "hierflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "hierflow/kernels.hpp"

namespace hierflow {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

// ---- Tensor --------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> value) {
    if (shape_numel(shape) != value.size())
        throw DimensionError("tensor data length " + std::to_string(value.size()) +
                             " does not match shape " + shape_str(shape));
    auto d = std::make_shared<detail::TensorData>();
    d->shape = std::move(shape);
    d->value = std::move(value);
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

Tensor Tensor::zeros(Shape shape) {
    return constant(std::move(shape), std::vector<double>(shape_numel(shape), 0.0));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> value) {
    Tensor t = constant(std::move(shape), std::move(value));
    t.d_->needs_grad = true;
    return t;
}

std::size_t Tensor::rows() const {
    if (d_->shape.size() != 2)
        throw DimensionError("expected 2-D tensor, got " + shape_str(d_->shape));
    return d_->shape[0];
}

std::size_t Tensor::cols() const {
    if (d_->shape.size() != 2)
        throw DimensionError("expected 2-D tensor, got " + shape_str(d_->shape));
    return d_->shape[1];
}

double Tensor::item() const {
    if (numel() != 1)
        throw ContractError("item() requires a scalar tensor, got " + shape_str(d_->shape));
    return d_->value[0];
}

Tensor make_op_result(Shape shape, std::vector<double> value, bool needs_grad) {
    Tensor t = Tensor::constant(std::move(shape), std::move(value));
    t.data()->needs_grad = needs_grad && Tape::current() != nullptr;
    return t;
}

// ---- Tape ----------------------------------------------------------------

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tape::Tape() {
    prev_ = g_current_tape;
    g_current_tape = this;
}

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
    if (used_) throw ContractError("backward called twice on the same tape");
    if (loss.numel() != 1)
        throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    if (nodes_.empty()) throw ContractError("backward on an empty tape");
    used_ = true;
    loss.data()->ensure_grad();
    loss.data()->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ---- op helpers ----------------------------------------------------------

namespace {

using DataPtr = std::shared_ptr<detail::TensorData>;

bool tracked(const Tensor& t) { return t.needs_grad(); }

bool recording(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::current()) return false;
    for (const Tensor* t : inputs)
        if (t->needs_grad()) return true;
    return false;
}

// True when an upstream gradient exists for the node.
bool has_out_grad(const DataPtr& od) { return !od->grad.empty(); }

void require_2d(const Tensor& t, const char* what) {
    if (t.shape().size() != 2)
        throw DimensionError(std::string(what) + " requires a 2-D tensor, got " +
                             shape_str(t.shape()));
}

}  // namespace

// ---- matmul --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    kernels::matmul_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
    Tensor y = make_op_result({m, n}, std::move(out), tracked(a) || tracked(b));
    if (recording({&a, &b})) {
        Tape::current()->record([ad = a.data(), bd = b.data(), od = y.data(), m, k, n] {
            if (!has_out_grad(od)) return;
            if (ad->needs_grad) {
                ad->ensure_grad();
                kernels::matmul_nt(od->grad.data(), bd->value.data(), ad->grad.data(), m, n, k);
            }
            if (bd->needs_grad) {
                bd->ensure_grad();
                kernels::matmul_tn(ad->value.data(), od->grad.data(), bd->grad.data(), k, m, n);
            }
        });
    }
    return y;
}

// ---- elementwise binary --------------------------------------------------

namespace {

enum class Bin { Add, Sub, Mul, Div };

Tensor binary_op(const Tensor& a, const Tensor& b, Bin op) {
    const bool a_scalar = a.numel() == 1, b_scalar = b.numel() == 1;
    if (!a_scalar && !b_scalar && a.shape() != b.shape())
        throw DimensionError("elementwise shapes incompatible: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    const Shape& out_shape = a_scalar && !b_scalar ? b.shape() : a.shape();
    const std::size_t n = shape_numel(out_shape);
    std::vector<double> out(n);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = av[a_scalar ? 0 : i];
        const double y = bv[b_scalar ? 0 : i];
        switch (op) {
            case Bin::Add: out[i] = x + y; break;
            case Bin::Sub: out[i] = x - y; break;
            case Bin::Mul: out[i] = x * y; break;
            case Bin::Div: out[i] = x / y; break;
        }
    }
    Tensor r = make_op_result(out_shape, std::move(out), tracked(a) || tracked(b));
    if (recording({&a, &b})) {
        Tape::current()->record(
            [ad = a.data(), bd = b.data(), od = r.data(), op, a_scalar, b_scalar, n] {
                if (!has_out_grad(od)) return;
                const auto& g = od->grad;
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = ad->value[a_scalar ? 0 : i];
                    const double y = bd->value[b_scalar ? 0 : i];
                    double da = 0.0, db = 0.0;
                    switch (op) {
                        case Bin::Add: da = g[i]; db = g[i]; break;
                        case Bin::Sub: da = g[i]; db = -g[i]; break;
                        case Bin::Mul: da = g[i] * y; db = g[i] * x; break;
                        case Bin::Div:
                            da = g[i] / y;
                            db = -g[i] * x / (y * y);
                            break;
                    }
                    if (ad->needs_grad) {
                        ad->ensure_grad();
                        ad->grad[a_scalar ? 0 : i] += da;
                    }
                    if (bd->needs_grad) {
                        bd->ensure_grad();
                        bd->grad[b_scalar ? 0 : i] += db;
                    }
                }
            });
    }
    return r;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Mul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Div); }
Tensor add_scalar(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
Tensor mul_scalar(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }

// ---- elementwise unary ---------------------------------------------------

namespace {

enum class Un { Sigmoid, Tanh, Relu, Square };

Tensor unary_op(const Tensor& x, Un op) {
    const std::size_t n = x.numel();
    std::vector<double> out(n);
    const auto& xv = x.value();
    for (std::size_t i = 0; i < n; ++i) {
        switch (op) {
            case Un::Sigmoid: out[i] = 1.0 / (1.0 + std::exp(-xv[i])); break;
            case Un::Tanh: out[i] = std::tanh(xv[i]); break;
            case Un::Relu: out[i] = xv[i] > 0.0 ? xv[i] : 0.0; break;
            case Un::Square: out[i] = xv[i] * xv[i]; break;
        }
    }
    Tensor r = make_op_result(x.shape(), std::move(out), tracked(x));
    if (recording({&x})) {
        Tape::current()->record([xd = x.data(), od = r.data(), op, n] {
            if (!has_out_grad(od) || !xd->needs_grad) return;
            xd->ensure_grad();
            const auto& g = od->grad;
            for (std::size_t i = 0; i < n; ++i) {
                double d = 0.0;
                switch (op) {
                    case Un::Sigmoid: {
                        const double s = od->value[i];
                        d = s * (1.0 - s);
                        break;
                    }
                    case Un::Tanh: {
                        const double t = od->value[i];
                        d = 1.0 - t * t;
                        break;
                    }
                    case Un::Relu: d = xd->value[i] > 0.0 ? 1.0 : 0.0; break;
                    case Un::Square: d = 2.0 * xd->value[i]; break;
                }
                xd->grad[i] += g[i] * d;
            }
        });
    }
    return r;
}

}  // namespace

Tensor sigmoid(const Tensor& x) { return unary_op(x, Un::Sigmoid); }
Tensor tanh(const Tensor& x) { return unary_op(x, Un::Tanh); }
Tensor relu(const Tensor& x) { return unary_op(x, Un::Relu); }
Tensor square(const Tensor& x) { return unary_op(x, Un::Square); }

// ---- shape ops -----------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw DimensionError("reshape element count mismatch: " + shape_str(x.shape()) +
                             " to " + shape_str(shape));
    Tensor r = make_op_result(std::move(shape), x.value(), tracked(x));
    if (recording({&x})) {
        Tape::current()->record([xd = x.data(), od = r.data()] {
            if (!has_out_grad(od) || !xd->needs_grad) return;
            xd->ensure_grad();
            for (std::size_t i = 0; i < od->grad.size(); ++i) xd->grad[i] += od->grad[i];
        });
    }
    return r;
}

Tensor flatten(const Tensor& x) { return reshape(x, {1, x.numel()}); }

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_2d(a, "concat_cols");
    require_2d(b, "concat_cols");
    if (a.rows() != b.rows())
        throw DimensionError("concat_cols row mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const std::size_t m = a.rows(), na = a.cols(), nb = b.cols();
    std::vector<double> out(m * (na + nb));
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(a.value().data() + i * na, na, out.data() + i * (na + nb));
        std::copy_n(b.value().data() + i * nb, nb, out.data() + i * (na + nb) + na);
    }
    Tensor r = make_op_result({m, na + nb}, std::move(out), tracked(a) || tracked(b));
    if (recording({&a, &b})) {
        Tape::current()->record([ad = a.data(), bd = b.data(), od = r.data(), m, na, nb] {
            if (!has_out_grad(od)) return;
            for (std::size_t i = 0; i < m; ++i) {
                if (ad->needs_grad) {
                    ad->ensure_grad();
                    for (std::size_t j = 0; j < na; ++j)
                        ad->grad[i * na + j] += od->grad[i * (na + nb) + j];
                }
                if (bd->needs_grad) {
                    bd->ensure_grad();
                    for (std::size_t j = 0; j < nb; ++j)
                        bd->grad[i * nb + j] += od->grad[i * (na + nb) + na + j];
                }
            }
        });
    }
    return r;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows on empty list");
    const std::size_t c = parts[0].cols();
    std::size_t total = 0;
    bool ng = false;
    for (const auto& p : parts) {
        require_2d(p, "concat_rows");
        if (p.cols() != c)
            throw DimensionError("concat_rows column mismatch: " + shape_str(parts[0].shape()) +
                                 " vs " + shape_str(p.shape()));
        total += p.rows();
        ng = ng || tracked(p);
    }
    std::vector<double> out;
    out.reserve(total * c);
    for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
    Tensor r = make_op_result({total, c}, std::move(out), ng);
    if (ng && Tape::current()) {
        std::vector<DataPtr> pd;
        pd.reserve(parts.size());
        for (const auto& p : parts) pd.push_back(p.data());
        Tape::current()->record([pd = std::move(pd), od = r.data()] {
            if (!has_out_grad(od)) return;
            std::size_t off = 0;
            for (const auto& d : pd) {
                const std::size_t n = d->value.size();
                if (d->needs_grad) {
                    d->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) d->grad[i] += od->grad[off + i];
                }
                off += n;
            }
        });
    }
    return r;
}

Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
    require_2d(x, "slice_rows");
    const std::size_t m = x.rows(), c = x.cols();
    if (r0 > r1 || r1 > m)
        throw DimensionError("slice_rows range [" + std::to_string(r0) + "," +
                             std::to_string(r1) + ") out of bounds for " + shape_str(x.shape()));
    std::vector<double> out(x.value().begin() + r0 * c, x.value().begin() + r1 * c);
    Tensor r = make_op_result({r1 - r0, c}, std::move(out), tracked(x));
    if (recording({&x})) {
        Tape::current()->record([xd = x.data(), od = r.data(), r0, c] {
            if (!has_out_grad(od) || !xd->needs_grad) return;
            xd->ensure_grad();
            for (std::size_t i = 0; i < od->grad.size(); ++i) xd->grad[r0 * c + i] += od->grad[i];
        });
    }
    return r;
}

Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
    require_2d(x, "slice_cols");
    const std::size_t m = x.rows(), c = x.cols();
    if (c0 > c1 || c1 > c)
        throw DimensionError("slice_cols range [" + std::to_string(c0) + "," +
                             std::to_string(c1) + ") out of bounds for " + shape_str(x.shape()));
    const std::size_t w = c1 - c0;
    std::vector<double> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(x.value().data() + i * c + c0, w, out.data() + i * w);
    Tensor r = make_op_result({m, w}, std::move(out), tracked(x));
    if (recording({&x})) {
        Tape::current()->record([xd = x.data(), od = r.data(), m, c, c0, w] {
            if (!has_out_grad(od) || !xd->needs_grad) return;
            xd->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    xd->grad[i * c + c0 + j] += od->grad[i * w + j];
        });
    }
    return r;
}

Tensor gather_rows(const Tensor& x, std::vector<std::size_t> idx) {
    require_2d(x, "gather_rows");
    const std::size_t m = x.rows(), c = x.cols();
    std::vector<double> out(idx.size() * c);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= m)
            throw DimensionError("gather_rows index " + std::to_string(idx[i]) +
                                 " out of bounds for " + shape_str(x.shape()));
        std::copy_n(x.value().data() + idx[i] * c, c, out.data() + i * c);
    }
    Tensor r = make_op_result({idx.size(), c}, std::move(out), tracked(x));
    if (recording({&x})) {
        Tape::current()->record([xd = x.data(), od = r.data(), idx = std::move(idx), c] {
            if (!has_out_grad(od) || !xd->needs_grad) return;
            xd->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < c; ++j)
                    xd->grad[idx[i] * c + j] += od->grad[i * c + j];
        });
    }
    return r;
}

// ---- reductions ----------------------------------------------------------

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.value()) acc += v;
    Tensor r = make_op_result({1}, {acc}, tracked(x));
    if (recording({&x})) {
        Tape::current()->record([xd = x.data(), od = r.data()] {
            if (!has_out_grad(od) || !xd->needs_grad) return;
            xd->ensure_grad();
            for (double& g : xd->grad) g += od->grad[0];
        });
    }
    return r;
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

// ---- linear layer --------------------------------------------------------

Tensor add_bias(const Tensor& x, const Tensor& b) {
    require_2d(x, "add_bias");
    const std::size_t m = x.rows(), n = x.cols();
    if (b.numel() != n)
        throw DimensionError("add_bias length mismatch: " + shape_str(x.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.value()[i * n + j] + b.value()[j];
    Tensor r = make_op_result({m, n}, std::move(out), tracked(x) || tracked(b));
    if (recording({&x, &b})) {
        Tape::current()->record([xd = x.data(), bd = b.data(), od = r.data(), m, n] {
            if (!has_out_grad(od)) return;
            if (xd->needs_grad) {
                xd->ensure_grad();
                for (std::size_t i = 0; i < m * n; ++i) xd->grad[i] += od->grad[i];
            }
            if (bd->needs_grad) {
                bd->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) bd->grad[j] += od->grad[i * n + j];
            }
        });
    }
    return r;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_bias(matmul(x, w), b);
}

// ---- patch ops -----------------------------------------------------------

Tensor patchify(const Tensor& x, std::size_t W, std::size_t S) {
    require_2d(x, "patchify");
    const std::size_t R = x.rows(), L = x.cols();
    if (W == 0 || S == 0 || L < W)
        throw ConfigError("patchify needs 0 < W <= L and S >= 1 (L=" + std::to_string(L) +
                          ", W=" + std::to_string(W) + ", S=" + std::to_string(S) + ")");
    const std::size_t N = (L - W) / S + 1;
    std::vector<double> out(R * N * W);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t i = 0; i < N; ++i)
            std::copy_n(x.value().data() + r * L + i * S, W, out.data() + (r * N + i) * W);
    Tensor y = make_op_result({R * N, W}, std::move(out), tracked(x));
    if (recording({&x})) {
        Tape::current()->record([xd = x.data(), od = y.data(), R, L, N, W, S] {
            if (!has_out_grad(od) || !xd->needs_grad) return;
            xd->ensure_grad();
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t w = 0; w < W; ++w)
                        xd->grad[r * L + i * S + w] += od->grad[(r * N + i) * W + w];
        });
    }
    return y;
}

Tensor depthwise_conv(const Tensor& x, const Tensor& kernel) {
    require_2d(x, "depthwise_conv");
    const std::size_t M = x.rows(), D = x.cols();
    const std::size_t Q = kernel.numel();
    if (Q > D)
        throw ConfigError("depthwise kernel width " + std::to_string(Q) +
                          " exceeds embedding width " + std::to_string(D));
    const std::size_t pad = (Q - 1) / 2;
    std::vector<double> out(M * D, 0.0);
    for (std::size_t i = 0; i < M; ++i) {
        const double* row = x.value().data() + i * D;
        double* orow = out.data() + i * D;
        for (std::size_t d = 0; d < D; ++d) {
            double acc = 0.0;
            for (std::size_t q = 0; q < Q; ++q) {
                const long long src = static_cast<long long>(d) + static_cast<long long>(q) -
                                      static_cast<long long>(pad);
                if (src >= 0 && src < static_cast<long long>(D))
                    acc += kernel.value()[q] * row[src];
            }
            orow[d] = acc;
        }
    }
    Tensor y = make_op_result({M, D}, std::move(out), tracked(x) || tracked(kernel));
    if (recording({&x, &kernel})) {
        Tape::current()->record([xd = x.data(), kd = kernel.data(), od = y.data(), M, D, Q, pad] {
            if (!has_out_grad(od)) return;
            if (xd->needs_grad) xd->ensure_grad();
            if (kd->needs_grad) kd->ensure_grad();
            for (std::size_t i = 0; i < M; ++i) {
                for (std::size_t d = 0; d < D; ++d) {
                    const double g = od->grad[i * D + d];
                    if (g == 0.0) continue;
                    for (std::size_t q = 0; q < Q; ++q) {
                        const long long src = static_cast<long long>(d) +
                                              static_cast<long long>(q) -
                                              static_cast<long long>(pad);
                        if (src < 0 || src >= static_cast<long long>(D)) continue;
                        if (xd->needs_grad)
                            xd->grad[i * D + src] += g * kd->value[q];
                        if (kd->needs_grad)
                            kd->grad[q] += g * xd->value[i * D + src];
                    }
                }
            }
        });
    }
    return y;
}

Tensor patch_mix(const Tensor& x, const Tensor& k, std::size_t N) {
    require_2d(x, "patch_mix");
    require_2d(k, "patch_mix");
    const std::size_t M = x.rows(), D = x.cols();
    if (N == 0 || M % N != 0)
        throw DimensionError("patch_mix rows " + std::to_string(M) +
                             " not divisible by patch count " + std::to_string(N));
    const std::size_t A = k.rows();
    if (k.cols() != N)
        throw DimensionError("patch_mix kernel " + shape_str(k.shape()) +
                             " does not match patch count " + std::to_string(N));
    const std::size_t R = M / N;
    std::vector<double> out(R * A * D, 0.0);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t a = 0; a < A; ++a) {
            double* orow = out.data() + (r * A + a) * D;
            for (std::size_t n = 0; n < N; ++n) {
                const double kv = k.value()[a * N + n];
                const double* xrow = x.value().data() + (r * N + n) * D;
                for (std::size_t d = 0; d < D; ++d) orow[d] += kv * xrow[d];
            }
        }
    Tensor y = make_op_result({R * A, D}, std::move(out), tracked(x) || tracked(k));
    if (recording({&x, &k})) {
        Tape::current()->record([xd = x.data(), kd = k.data(), od = y.data(), R, A, N, D] {
            if (!has_out_grad(od)) return;
            if (xd->needs_grad) xd->ensure_grad();
            if (kd->needs_grad) kd->ensure_grad();
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t a = 0; a < A; ++a) {
                    const double* grow = od->grad.data() + (r * A + a) * D;
                    for (std::size_t n = 0; n < N; ++n) {
                        const double kv = kd->value[a * N + n];
                        const double* xrow = xd->value.data() + (r * N + n) * D;
                        double kacc = 0.0;
                        for (std::size_t d = 0; d < D; ++d) {
                            if (xd->needs_grad) xd->grad[(r * N + n) * D + d] += kv * grow[d];
                            kacc += grow[d] * xrow[d];
                        }
                        if (kd->needs_grad) kd->grad[a * N + n] += kacc;
                    }
                }
        });
    }
    return y;
}

// ---- graph ops -----------------------------------------------------------

Tensor neighbor_aggregate(const Tensor& x, std::shared_ptr<const Csr> adj, bool mean_agg) {
    require_2d(x, "neighbor_aggregate");
    const std::size_t V = x.rows(), F = x.cols();
    if (adj->num_nodes() != V)
        throw DimensionError("adjacency has " + std::to_string(adj->num_nodes()) +
                             " nodes but features have " + std::to_string(V) + " rows");
    std::vector<double> out(V * F, 0.0);
    for (std::size_t v = 0; v < V; ++v) {
        const std::size_t deg = adj->degree(v);
        if (deg == 0) continue;  // isolated node keeps a zero message
        double* orow = out.data() + v * F;
        for (std::size_t e = adj->offsets[v]; e < adj->offsets[v + 1]; ++e) {
            const double* xrow = x.value().data() + adj->nbrs[e] * F;
            for (std::size_t f = 0; f < F; ++f) orow[f] += xrow[f];
        }
        if (mean_agg) {
            const double inv = 1.0 / static_cast<double>(deg);
            for (std::size_t f = 0; f < F; ++f) orow[f] *= inv;
        }
    }
    Tensor y = make_op_result({V, F}, std::move(out), tracked(x));
    if (recording({&x})) {
        Tape::current()->record([xd = x.data(), od = y.data(), adj, V, F, mean_agg] {
            if (!has_out_grad(od) || !xd->needs_grad) return;
            xd->ensure_grad();
            for (std::size_t v = 0; v < V; ++v) {
                const std::size_t deg = adj->degree(v);
                if (deg == 0) continue;
                const double w = mean_agg ? 1.0 / static_cast<double>(deg) : 1.0;
                const double* grow = od->grad.data() + v * F;
                for (std::size_t e = adj->offsets[v]; e < adj->offsets[v + 1]; ++e) {
                    double* xg = xd->grad.data() + adj->nbrs[e] * F;
                    for (std::size_t f = 0; f < F; ++f) xg[f] += w * grow[f];
                }
            }
        });
    }
    return y;
}

Tensor row_group_sum(const Tensor& x, std::shared_ptr<const Csr> desc,
                     std::size_t blocks, std::size_t block_rows) {
    require_2d(x, "row_group_sum");
    const std::size_t C = x.cols();
    if (x.rows() != blocks * block_rows)
        throw DimensionError("row_group_sum expected " + std::to_string(blocks * block_rows) +
                             " rows, got " + std::to_string(x.rows()));
    const std::size_t P = desc->num_nodes();
    std::vector<double> out(blocks * P * C, 0.0);
    for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t p = 0; p < P; ++p) {
            double* orow = out.data() + (b * P + p) * C;
            for (std::size_t e = desc->offsets[p]; e < desc->offsets[p + 1]; ++e) {
                const double* xrow = x.value().data() + (b * block_rows + desc->nbrs[e]) * C;
                for (std::size_t c = 0; c < C; ++c) orow[c] += xrow[c];
            }
        }
    Tensor y = make_op_result({blocks * P, C}, std::move(out), tracked(x));
    if (recording({&x})) {
        Tape::current()->record([xd = x.data(), od = y.data(), desc, blocks, block_rows, P, C] {
            if (!has_out_grad(od) || !xd->needs_grad) return;
            xd->ensure_grad();
            for (std::size_t b = 0; b < blocks; ++b)
                for (std::size_t p = 0; p < P; ++p) {
                    const double* grow = od->grad.data() + (b * P + p) * C;
                    for (std::size_t e = desc->offsets[p]; e < desc->offsets[p + 1]; ++e) {
                        double* xg = xd->grad.data() + (b * block_rows + desc->nbrs[e]) * C;
                        for (std::size_t c = 0; c < C; ++c) xg[c] += grow[c];
                    }
                }
        });
    }
    return y;
}

}  // namespace hierflow
