#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "predann/tensor.hpp"

namespace predann {

template <class T>
struct NamedParam {
    std::string name;
    Tensor<T>* tensor;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

template <class T>
inline void add_param(ParamList<T>& out, const std::string& name, Tensor<T>& t) {
    t.ensure_grad();
    out.push_back({name, &t});
}

// ---------------------------------------------------------------------------
// elementwise activations
// ---------------------------------------------------------------------------

template <class T>
struct Gelu {
    Tensor<T> x_;

    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double v = static_cast<double>(x.data[i]);
            y.data[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)));
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.shape);
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < dy.size(); ++i) {
            const double v = static_cast<double>(x_.data[i]);
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            dx.data[i] = dy.data[i] * static_cast<T>(cdf + v * pdf);
        }
        return dx;
    }
};

template <class T>
struct Relu {
    Tensor<T> x_;

    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > T{0} ? x.data[i] : T{0};
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.shape);
        for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] = x_.data[i] > T{0} ? dy.data[i] : T{0};
        return dx;
    }
};

// ---------------------------------------------------------------------------
// linear / conv / embedding
// ---------------------------------------------------------------------------

template <class T>
struct Linear {
    Tensor<T> weight;  // (out, in)
    Tensor<T> bias;    // (out)
    Tensor<T> x_;

    Linear() = default;

    Linear(int in, int out, Rng& rng) {
        const T std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(in)));
        weight = Tensor<T>::randn({out, in}, rng, std);
        bias = Tensor<T>::zeros({out});
        weight.ensure_grad();
        bias.ensure_grad();
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        add_param(out, prefix + ".weight", weight);
        add_param(out, prefix + ".bias", bias);
    }

    // x: (..., in) -> (..., out); leading dimensions pass through
    Tensor<T> forward(const Tensor<T>& x) {
        if (x.shape.back() != weight.dim(1)) throw std::invalid_argument("Linear: input dim mismatch");
        x_ = x;
        const int n = static_cast<int>(x.size()) / weight.dim(1);
        std::vector<int> out_shape = x.shape;
        out_shape.back() = weight.dim(0);
        Tensor<T> y(std::move(out_shape));
        matmul_nt(x.data.data(), weight.data.data(), y.data.data(), n, weight.dim(0), weight.dim(1));
        for (int i = 0; i < n; ++i) {
            T* yi = y.row(i);
            for (int j = 0; j < weight.dim(0); ++j) yi[j] += bias(j);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int in = weight.dim(1);
        const int out = weight.dim(0);
        const int n = static_cast<int>(dy.size()) / out;
        // dW += dy^T x, db += colsum(dy), dx = dy W
        matmul_tn_acc(dy.data.data(), x_.data.data(), weight.grad.data(), out, in, n);
        for (int i = 0; i < n; ++i) {
            const T* di = dy.data.data() + static_cast<std::size_t>(i) * out;
            for (int j = 0; j < out; ++j) bias.grad[static_cast<std::size_t>(j)] += di[j];
        }
        Tensor<T> dx(x_.shape);
        matmul_nn_acc(dy.data.data(), weight.data.data(), dx.data.data(), n, in, out);
        return dx;
    }
};

template <class T>
struct Conv1d {
    Tensor<T> weight;  // (out_ch, in_ch, kernel)
    Tensor<T> bias;    // (out_ch)
    int stride = 1;
    Tensor<T> x_;

    Conv1d() = default;

    Conv1d(int in_ch, int out_ch, int kernel, int stride_, Rng& rng) : stride(stride_) {
        const T std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(in_ch * kernel)));
        weight = Tensor<T>::randn({out_ch, in_ch, kernel}, rng, std);
        bias = Tensor<T>::zeros({out_ch});
        weight.ensure_grad();
        bias.ensure_grad();
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        add_param(out, prefix + ".weight", weight);
        add_param(out, prefix + ".bias", bias);
    }

    static int out_len(int in_len, int kernel, int stride) {
        if (in_len < kernel) throw std::invalid_argument("Conv1d: input shorter than kernel");
        return (in_len - kernel) / stride + 1;
    }

    // x: (batch, in_ch, len) -> (batch, out_ch, out_len)
    Tensor<T> forward(const Tensor<T>& x) {
        if (x.ndim() != 3 || x.dim(1) != weight.dim(1)) throw std::invalid_argument("Conv1d: shape mismatch");
        x_ = x;
        const int batch = x.dim(0), in_ch = x.dim(1), len = x.dim(2);
        const int out_ch = weight.dim(0), kernel = weight.dim(2);
        const int lo = out_len(len, kernel, stride);
        Tensor<T> y({batch, out_ch, lo});
        for (int b = 0; b < batch; ++b)
            for (int co = 0; co < out_ch; ++co)
                for (int p = 0; p < lo; ++p) {
                    T acc = bias(co);
                    for (int ci = 0; ci < in_ch; ++ci) {
                        const T* xr = &x(b, ci, p * stride);
                        const T* wr = &weight(co, ci, 0);
                        for (int t = 0; t < kernel; ++t) acc += wr[t] * xr[t];
                    }
                    y(b, co, p) = acc;
                }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int batch = x_.dim(0), in_ch = x_.dim(1), len = x_.dim(2);
        const int out_ch = weight.dim(0), kernel = weight.dim(2);
        const int lo = dy.dim(2);
        Tensor<T> dx({batch, in_ch, len});
        for (int b = 0; b < batch; ++b)
            for (int co = 0; co < out_ch; ++co)
                for (int p = 0; p < lo; ++p) {
                    const T g = dy(b, co, p);
                    bias.grad[static_cast<std::size_t>(co)] += g;
                    for (int ci = 0; ci < in_ch; ++ci) {
                        const T* xr = &x_(b, ci, p * stride);
                        T* dxr = &dx(b, ci, p * stride);
                        const T* wr = &weight(co, ci, 0);
                        T* dwr = &weight.grad[(static_cast<std::size_t>(co) * in_ch + ci) * kernel];
                        for (int t = 0; t < kernel; ++t) {
                            dwr[t] += g * xr[t];
                            dxr[t] += g * wr[t];
                        }
                    }
                }
        return dx;
    }
};

template <class T>
struct Embedding {
    Tensor<T> table;  // (vocab, dim)
    std::vector<int> idx_;

    Embedding() = default;

    Embedding(int vocab, int dim, Rng& rng, T std = static_cast<T>(0.02)) {
        table = Tensor<T>::randn({vocab, dim}, rng, std);
        table.ensure_grad();
    }

    void collect(ParamList<T>& out, const std::string& prefix) { add_param(out, prefix + ".table", table); }

    Tensor<T> forward(const std::vector<int>& idx) {
        idx_ = idx;
        const int dim = table.dim(1);
        Tensor<T> y({static_cast<int>(idx.size()), dim});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= table.dim(0)) throw std::out_of_range("Embedding: index out of range");
            const T* src = table.row(idx[i]);
            std::copy(src, src + dim, y.row(static_cast<int>(i)));
        }
        return y;
    }

    void backward(const Tensor<T>& dy) {
        const int dim = table.dim(1);
        for (std::size_t i = 0; i < idx_.size(); ++i) {
            const T* g = dy.row(static_cast<int>(i));
            T* dst = table.grad.data() + static_cast<std::size_t>(idx_[i]) * dim;
            for (int j = 0; j < dim; ++j) dst[j] += g[j];
        }
    }
};

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

// Shared core: normalize `m` contiguous values, backward through mean/var.
template <class T>
inline void norm_group_forward(const T* x, T* xhat, int m, T eps, T& rstd_out) {
    T mean{0};
    for (int i = 0; i < m; ++i) mean += x[i];
    mean /= static_cast<T>(m);
    T var{0};
    for (int i = 0; i < m; ++i) {
        const T d = x[i] - mean;
        var += d * d;
    }
    var /= static_cast<T>(m);
    const T rstd = T{1} / std::sqrt(var + eps);
    for (int i = 0; i < m; ++i) xhat[i] = (x[i] - mean) * rstd;
    rstd_out = rstd;
}

template <class T>
inline void norm_group_backward(const T* dxhat, const T* xhat, T* dx, int m, T rstd) {
    T sum_d{0}, sum_dx{0};
    for (int i = 0; i < m; ++i) {
        sum_d += dxhat[i];
        sum_dx += dxhat[i] * xhat[i];
    }
    const T inv_m = T{1} / static_cast<T>(m);
    for (int i = 0; i < m; ++i) dx[i] = rstd * (dxhat[i] - sum_d * inv_m - xhat[i] * sum_dx * inv_m);
}

template <class T>
struct LayerNorm {
    Tensor<T> gamma, beta;
    T eps = static_cast<T>(1e-5);
    Tensor<T> xhat_;
    std::vector<T> rstd_;

    LayerNorm() = default;

    explicit LayerNorm(int dim) {
        gamma = Tensor<T>::full({dim}, T{1});
        beta = Tensor<T>::zeros({dim});
        gamma.ensure_grad();
        beta.ensure_grad();
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        add_param(out, prefix + ".gamma", gamma);
        add_param(out, prefix + ".beta", beta);
    }

    // normalizes the trailing dimension of (n, dim)
    Tensor<T> forward(const Tensor<T>& x) {
        const int dim = gamma.dim(0);
        if (x.shape.back() != dim) throw std::invalid_argument("LayerNorm: dim mismatch");
        const int n = static_cast<int>(x.size()) / dim;
        xhat_ = Tensor<T>({n, dim});
        rstd_.assign(static_cast<std::size_t>(n), T{0});
        Tensor<T> y(x.shape);
        for (int i = 0; i < n; ++i) {
            norm_group_forward(x.data.data() + static_cast<std::size_t>(i) * dim, xhat_.row(i), dim, eps,
                               rstd_[static_cast<std::size_t>(i)]);
            T* yi = y.data.data() + static_cast<std::size_t>(i) * dim;
            const T* xh = xhat_.row(i);
            for (int j = 0; j < dim; ++j) yi[j] = gamma(j) * xh[j] + beta(j);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int dim = gamma.dim(0);
        const int n = static_cast<int>(dy.size()) / dim;
        Tensor<T> dx(dy.shape);
        std::vector<T> dxhat(static_cast<std::size_t>(dim));
        for (int i = 0; i < n; ++i) {
            const T* di = dy.data.data() + static_cast<std::size_t>(i) * dim;
            const T* xh = xhat_.row(i);
            for (int j = 0; j < dim; ++j) {
                dxhat[static_cast<std::size_t>(j)] = di[j] * gamma(j);
                gamma.grad[static_cast<std::size_t>(j)] += di[j] * xh[j];
                beta.grad[static_cast<std::size_t>(j)] += di[j];
            }
            norm_group_backward(dxhat.data(), xh, dx.data.data() + static_cast<std::size_t>(i) * dim, dim,
                                rstd_[static_cast<std::size_t>(i)]);
        }
        return dx;
    }
};

template <class T>
struct GroupNorm {
    int groups = 1;
    Tensor<T> gamma, beta;  // per channel
    T eps = static_cast<T>(1e-5);
    Tensor<T> xhat_;
    std::vector<T> rstd_;
    std::vector<int> dims_;

    GroupNorm() = default;

    GroupNorm(int channels, int groups_) : groups(groups_) {
        if (channels % groups != 0) throw std::invalid_argument("GroupNorm: channels % groups != 0");
        gamma = Tensor<T>::full({channels}, T{1});
        beta = Tensor<T>::zeros({channels});
        gamma.ensure_grad();
        beta.ensure_grad();
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        add_param(out, prefix + ".gamma", gamma);
        add_param(out, prefix + ".beta", beta);
    }

    // x: (batch, channels, len), statistics per (batch, group)
    Tensor<T> forward(const Tensor<T>& x) {
        if (x.ndim() != 3 || x.dim(1) != gamma.dim(0)) throw std::invalid_argument("GroupNorm: shape mismatch");
        const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
        const int cg = ch / groups, m = cg * len;
        dims_ = x.shape;
        xhat_ = Tensor<T>(x.shape);
        rstd_.assign(static_cast<std::size_t>(batch) * groups, T{0});
        Tensor<T> y(x.shape);
        for (int b = 0; b < batch; ++b)
            for (int g = 0; g < groups; ++g) {
                const std::size_t off = (static_cast<std::size_t>(b) * ch + static_cast<std::size_t>(g) * cg) * len;
                norm_group_forward(x.data.data() + off, xhat_.data.data() + off, m, eps,
                                   rstd_[static_cast<std::size_t>(b) * groups + g]);
            }
        for (int b = 0; b < batch; ++b)
            for (int c = 0; c < ch; ++c) {
                const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * len;
                for (int l = 0; l < len; ++l)
                    y.data[off + l] = gamma(c) * xhat_.data[off + l] + beta(c);
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int batch = dims_[0], ch = dims_[1], len = dims_[2];
        const int cg = ch / groups, m = cg * len;
        Tensor<T> dx(dims_);
        std::vector<T> dxhat(static_cast<std::size_t>(m));
        for (int b = 0; b < batch; ++b)
            for (int g = 0; g < groups; ++g) {
                const std::size_t off = (static_cast<std::size_t>(b) * ch + static_cast<std::size_t>(g) * cg) * len;
                for (int i = 0; i < cg; ++i) {
                    const int c = g * cg + i;
                    for (int l = 0; l < len; ++l) {
                        const std::size_t p = off + static_cast<std::size_t>(i) * len + l;
                        dxhat[static_cast<std::size_t>(i) * len + l] = dy.data[p] * gamma(c);
                        gamma.grad[static_cast<std::size_t>(c)] += dy.data[p] * xhat_.data[p];
                        beta.grad[static_cast<std::size_t>(c)] += dy.data[p];
                    }
                }
                norm_group_backward(dxhat.data(), xhat_.data.data() + off, dx.data.data() + off, m,
                                    rstd_[static_cast<std::size_t>(b) * groups + g]);
            }
        return dx;
    }
};

template <class T>
struct BatchNorm1d {
    Tensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;  // buffers, not trained
    T eps = static_cast<T>(1e-5);
    T momentum = static_cast<T>(0.1);
    bool training = true;
    Tensor<T> xhat_;
    std::vector<T> rstd_;
    int batch_ = 0;

    BatchNorm1d() = default;

    explicit BatchNorm1d(int features) {
        gamma = Tensor<T>::full({features}, T{1});
        beta = Tensor<T>::zeros({features});
        running_mean = Tensor<T>::zeros({features});
        running_var = Tensor<T>::full({features}, T{1});
        gamma.ensure_grad();
        beta.ensure_grad();
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        add_param(out, prefix + ".gamma", gamma);
        add_param(out, prefix + ".beta", beta);
    }

    void collect_buffers(ParamList<T>& out, const std::string& prefix) {
        out.push_back({prefix + ".running_mean", &running_mean});
        out.push_back({prefix + ".running_var", &running_var});
    }

    // x: (batch, features); batch statistics in training mode
    Tensor<T> forward(const Tensor<T>& x) {
        const int f = gamma.dim(0);
        if (x.ndim() != 2 || x.dim(1) != f) throw std::invalid_argument("BatchNorm1d: shape mismatch");
        const int batch = x.dim(0);
        batch_ = batch;
        Tensor<T> y(x.shape);
        if (training) {
            if (batch < 2) throw std::invalid_argument("BatchNorm1d: training batch must be >= 2");
            xhat_ = Tensor<T>(x.shape);
            rstd_.assign(static_cast<std::size_t>(f), T{0});
            for (int j = 0; j < f; ++j) {
                T mean{0};
                for (int b = 0; b < batch; ++b) mean += x(b, j);
                mean /= static_cast<T>(batch);
                T var{0};
                for (int b = 0; b < batch; ++b) {
                    const T d = x(b, j) - mean;
                    var += d * d;
                }
                var /= static_cast<T>(batch);
                const T rstd = T{1} / std::sqrt(var + eps);
                rstd_[static_cast<std::size_t>(j)] = rstd;
                for (int b = 0; b < batch; ++b) {
                    xhat_(b, j) = (x(b, j) - mean) * rstd;
                    y(b, j) = gamma(j) * xhat_(b, j) + beta(j);
                }
                const T unbiased = var * static_cast<T>(batch) / static_cast<T>(batch - 1);
                running_mean(j) = (T{1} - momentum) * running_mean(j) + momentum * mean;
                running_var(j) = (T{1} - momentum) * running_var(j) + momentum * unbiased;
            }
        } else {
            xhat_ = Tensor<T>(x.shape);
            for (int j = 0; j < f; ++j) {
                const T rstd = T{1} / std::sqrt(running_var(j) + eps);
                for (int b = 0; b < batch; ++b) {
                    xhat_(b, j) = (x(b, j) - running_mean(j)) * rstd;
                    y(b, j) = gamma(j) * xhat_(b, j) + beta(j);
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int f = gamma.dim(0);
        const int batch = batch_;
        Tensor<T> dx(dy.shape);
        if (training) {
            for (int j = 0; j < f; ++j) {
                T sum_d{0}, sum_dx{0};
                for (int b = 0; b < batch; ++b) {
                    const T dxh = dy(b, j) * gamma(j);
                    sum_d += dxh;
                    sum_dx += dxh * xhat_(b, j);
                    gamma.grad[static_cast<std::size_t>(j)] += dy(b, j) * xhat_(b, j);
                    beta.grad[static_cast<std::size_t>(j)] += dy(b, j);
                }
                const T inv_b = T{1} / static_cast<T>(batch);
                for (int b = 0; b < batch; ++b) {
                    const T dxh = dy(b, j) * gamma(j);
                    dx(b, j) = rstd_[static_cast<std::size_t>(j)] *
                               (dxh - sum_d * inv_b - xhat_(b, j) * sum_dx * inv_b);
                }
            }
        } else {
            for (int j = 0; j < f; ++j) {
                const T rstd = T{1} / std::sqrt(running_var(j) + eps);
                for (int b = 0; b < batch; ++b) {
                    gamma.grad[static_cast<std::size_t>(j)] += dy(b, j) * xhat_(b, j);
                    beta.grad[static_cast<std::size_t>(j)] += dy(b, j);
                    dx(b, j) = dy(b, j) * gamma(j) * rstd;
                }
            }
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

template <class T>
struct Dropout {
    T rate{0};
    bool training = true;
    std::vector<T> mask_;

    Dropout() = default;
    explicit Dropout(T rate_) : rate(rate_) {}

    Tensor<T> forward(const Tensor<T>& x, Rng& rng) {
        if (!training || rate <= T{0}) {
            mask_.clear();
            return x;
        }
        const T keep = T{1} - rate;
        mask_.assign(x.size(), T{0});
        Tensor<T> y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (rng.uniform() >= static_cast<double>(rate)) {
                mask_[i] = T{1} / keep;
                y.data[i] = x.data[i] * mask_[i];
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        if (mask_.empty()) return dy;
        Tensor<T> dx(dy.shape);
        for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] = dy.data[i] * mask_[i];
        return dx;
    }
};

// ---------------------------------------------------------------------------
// softmax / cross-entropy
// ---------------------------------------------------------------------------

// In-place row softmax with max subtraction. -inf entries are legal and map
// to probability zero; NaN or +inf entries are rejected.
template <class T>
inline void softmax_row(T* x, int n) {
    T max = -std::numeric_limits<T>::infinity();
    for (int i = 0; i < n; ++i) {
        const double v = static_cast<double>(x[i]);
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
            throw std::invalid_argument("softmax: NaN or +inf logit");
        if (x[i] > max) max = x[i];
    }
    if (max == -std::numeric_limits<T>::infinity())
        throw std::invalid_argument("softmax: all logits are -inf");
    T sum{0};
    for (int i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - max);
        sum += x[i];
    }
    for (int i = 0; i < n; ++i) x[i] /= sum;
}

template <class T>
struct Softmax {
    Tensor<T> p_;

    Tensor<T> forward(const Tensor<T>& x) {
        p_ = x;
        const int n = x.shape.back();
        const int rows = static_cast<int>(x.size()) / n;
        for (int i = 0; i < rows; ++i) softmax_row(p_.data.data() + static_cast<std::size_t>(i) * n, n);
        return p_;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int n = dy.shape.back();
        const int rows = static_cast<int>(dy.size()) / n;
        Tensor<T> dx(dy.shape);
        for (int i = 0; i < rows; ++i) {
            const T* p = p_.data.data() + static_cast<std::size_t>(i) * n;
            const T* d = dy.data.data() + static_cast<std::size_t>(i) * n;
            T acc{0};
            for (int j = 0; j < n; ++j) acc += d[j] * p[j];
            T* o = dx.data.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) o[j] = p[j] * (d[j] - acc);
        }
        return dx;
    }
};

// Mean cross-entropy over rows: -log softmax(logits)[target].
template <class T>
struct CrossEntropy {
    Tensor<T> probs_;
    std::vector<int> targets_;

    T forward(const Tensor<T>& logits, const std::vector<int>& targets) {
        const int classes = logits.shape.back();
        const int rows = static_cast<int>(logits.size()) / classes;
        if (static_cast<int>(targets.size()) != rows) throw std::invalid_argument("CrossEntropy: target count mismatch");
        probs_ = logits;
        targets_ = targets;
        T loss{0};
        for (int i = 0; i < rows; ++i) {
            if (targets[static_cast<std::size_t>(i)] < 0 || targets[static_cast<std::size_t>(i)] >= classes)
                throw std::out_of_range("CrossEntropy: target out of range");
            T* row = probs_.data.data() + static_cast<std::size_t>(i) * classes;
            softmax_row(row, classes);
            loss -= std::log(row[targets[static_cast<std::size_t>(i)]]);
        }
        return loss / static_cast<T>(rows);
    }

    // d loss / d logits = (softmax - onehot) / rows
    Tensor<T> backward(T dloss = T{1}) {
        const int classes = probs_.shape.back();
        const int rows = static_cast<int>(probs_.size()) / classes;
        Tensor<T> dx(probs_.shape);
        const T scale = dloss / static_cast<T>(rows);
        for (int i = 0; i < rows; ++i) {
            const T* p = probs_.data.data() + static_cast<std::size_t>(i) * classes;
            T* d = dx.data.data() + static_cast<std::size_t>(i) * classes;
            for (int j = 0; j < classes; ++j) d[j] = p[j] * scale;
            d[targets_[static_cast<std::size_t>(i)]] -= scale;
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

template <class T>
struct Adam {
    T lr = static_cast<T>(0.003);
    T beta1 = static_cast<T>(0.9);
    T beta2 = static_cast<T>(0.999);
    T eps = static_cast<T>(1e-8);
    std::int64_t step_count = 0;
    std::vector<std::vector<T>> m_, v_;

    void init(const ParamList<T>& params) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.emplace_back(p.tensor->size(), T{0});
            v_.emplace_back(p.tensor->size(), T{0});
        }
        step_count = 0;
    }

    void step(const ParamList<T>& params) {
        if (m_.size() != params.size()) throw std::logic_error("Adam: init() not called");
        ++step_count;
        const T bc1 = T{1} - static_cast<T>(std::pow(static_cast<double>(beta1), static_cast<double>(step_count)));
        const T bc2 = T{1} - static_cast<T>(std::pow(static_cast<double>(beta2), static_cast<double>(step_count)));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor<T>& t = *params[k].tensor;
            if (t.grad.size() != t.data.size()) throw std::logic_error("Adam: parameter has no gradient");
            T* m = m_[k].data();
            T* v = v_[k].data();
            for (std::size_t i = 0; i < t.size(); ++i) {
                const T g = t.grad[i];
                if (!std::isfinite(static_cast<double>(g)))
                    throw std::runtime_error("Adam: non-finite gradient in " + params[k].name);
                m[i] = beta1 * m[i] + (T{1} - beta1) * g;
                v[i] = beta2 * v[i] + (T{1} - beta2) * g * g;
                const T mhat = m[i] / bc1;
                const T vhat = v[i] / bc2;
                t.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

template <class T>
inline void zero_grads(const ParamList<T>& params) {
    for (const auto& p : params) p.tensor->zero_grad();
}

}  // namespace predann
