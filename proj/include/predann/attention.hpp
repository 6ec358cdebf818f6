#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "predann/nn.hpp"

namespace predann {

// Multi-head self-attention, pre-norm variant:
//   Attention(Q, K, V) = softmax(LN(Q) LN(K)^T / sqrt(d_head)) V
// The layer norms act on the per-head dimension and are shared across heads.
template <class T>
struct MultiHeadSelfAttention {
    int dim = 0, heads = 0, d_head = 0;
    Linear<T> wq, wk, wv, wo;
    LayerNorm<T> ln_q, ln_k;

    // caches
    Tensor<T> qn_, kn_, v_;
    std::vector<Tensor<T>> attn_;  // per head (n, n)

    MultiHeadSelfAttention() = default;

    MultiHeadSelfAttention(int dim_, int heads_, Rng& rng)
        : dim(dim_),
          heads(heads_),
          d_head(dim_ / heads_),
          wq(dim_, dim_, rng),
          wk(dim_, dim_, rng),
          wv(dim_, dim_, rng),
          wo(dim_, dim_, rng),
          ln_q(dim_ / heads_),
          ln_k(dim_ / heads_) {
        if (dim_ % heads_ != 0) throw std::invalid_argument("attention: dim % heads != 0");
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        wq.collect(out, prefix + ".wq");
        wk.collect(out, prefix + ".wk");
        wv.collect(out, prefix + ".wv");
        wo.collect(out, prefix + ".wo");
        ln_q.collect(out, prefix + ".ln_q");
        ln_k.collect(out, prefix + ".ln_k");
    }

    // x: (batch, n, dim) or (n, dim) -> same shape
    Tensor<T> forward(const Tensor<T>& x) {
        const int batch = x.ndim() == 3 ? x.dim(0) : 1;
        const int n = x.ndim() == 3 ? x.dim(1) : x.dim(0);
        Tensor<T> q = wq.forward(x);
        Tensor<T> k = wk.forward(x);
        v_ = wv.forward(x);
        // rows of a (batch*n*heads, d_head) view are exactly the per-head slices
        q.shape = {batch * n * heads, d_head};
        k.shape = {batch * n * heads, d_head};
        qn_ = ln_q.forward(q);
        kn_ = ln_k.forward(k);

        const T scale = T{1} / std::sqrt(static_cast<T>(d_head));
        attn_.assign(static_cast<std::size_t>(batch) * heads, Tensor<T>());
        Tensor<T> ctx(x.shape);
        for (int b = 0; b < batch; ++b)
            for (int h = 0; h < heads; ++h) {
                const std::size_t base = static_cast<std::size_t>(b) * n;
                Tensor<T>& a = attn_[static_cast<std::size_t>(b) * heads + h];
                a = Tensor<T>({n, n});
                for (int i = 0; i < n; ++i) {
                    const T* qi = qn_.data.data() + ((base + i) * heads + h) * d_head;
                    T* ai = a.row(i);
                    for (int j = 0; j < n; ++j)
                        ai[j] = dot(qi, kn_.data.data() + ((base + j) * heads + h) * d_head, d_head) * scale;
                    softmax_row(ai, n);
                }
                for (int i = 0; i < n; ++i) {
                    const T* ai = a.row(i);
                    T* ci = ctx.data.data() + ((base + i) * heads + h) * d_head;
                    for (int j = 0; j < n; ++j) {
                        const T w = ai[j];
                        const T* vj = v_.data.data() + ((base + j) * heads + h) * d_head;
                        for (int t = 0; t < d_head; ++t) ci[t] += w * vj[t];
                    }
                }
            }
        return wo.forward(ctx);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int batch = dy.ndim() == 3 ? dy.dim(0) : 1;
        const int n = dy.ndim() == 3 ? dy.dim(1) : dy.dim(0);
        Tensor<T> dctx = wo.backward(dy);
        Tensor<T> dqn({batch * n * heads, d_head});
        Tensor<T> dkn({batch * n * heads, d_head});
        Tensor<T> dv(dy.shape);
        const T scale = T{1} / std::sqrt(static_cast<T>(d_head));
        std::vector<T> dscore(static_cast<std::size_t>(n));
        for (int b = 0; b < batch; ++b)
            for (int h = 0; h < heads; ++h) {
                const std::size_t base = static_cast<std::size_t>(b) * n;
                const Tensor<T>& a = attn_[static_cast<std::size_t>(b) * heads + h];
                for (int i = 0; i < n; ++i) {
                    const T* dci = dctx.data.data() + ((base + i) * heads + h) * d_head;
                    const T* ai = a.row(i);
                    // dA_ij = dctx_i . v_j ; then softmax backward per row
                    T acc{0};
                    for (int j = 0; j < n; ++j) {
                        const T* vj = v_.data.data() + ((base + j) * heads + h) * d_head;
                        dscore[static_cast<std::size_t>(j)] = dot(dci, vj, d_head);
                        acc += dscore[static_cast<std::size_t>(j)] * ai[j];
                    }
                    for (int j = 0; j < n; ++j) {
                        const T da = ai[j] * (dscore[static_cast<std::size_t>(j)] - acc);
                        T* dvj = dv.data.data() + ((base + j) * heads + h) * d_head;
                        const T aij = ai[j];
                        const T* qi = qn_.data.data() + ((base + i) * heads + h) * d_head;
                        const T* kj = kn_.data.data() + ((base + j) * heads + h) * d_head;
                        T* dqi = dqn.data.data() + ((base + i) * heads + h) * d_head;
                        T* dkj = dkn.data.data() + ((base + j) * heads + h) * d_head;
                        const T das = da * scale;
                        for (int t = 0; t < d_head; ++t) {
                            dvj[t] += aij * dci[t];
                            dqi[t] += das * kj[t];
                            dkj[t] += das * qi[t];
                        }
                    }
                }
            }
        Tensor<T> dq = ln_q.backward(dqn);
        Tensor<T> dk = ln_k.backward(dkn);
        dq.shape = dy.shape;
        dk.shape = dy.shape;
        Tensor<T> dx = wq.backward(dq);
        Tensor<T> dxk = wk.backward(dk);
        Tensor<T> dxv = wv.backward(dv);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dxk.data[i] + dxv.data[i];
        return dx;
    }
};

// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
template <class T>
struct TransformerBlock {
    LayerNorm<T> ln1, ln2;
    MultiHeadSelfAttention<T> attn;
    Linear<T> fc1, fc2;
    Gelu<T> act;
    Dropout<T> drop1, drop2;

    TransformerBlock() = default;

    TransformerBlock(int dim, int heads, int mlp_hidden, T dropout, Rng& rng)
        : ln1(dim),
          ln2(dim),
          attn(dim, heads, rng),
          fc1(dim, mlp_hidden, rng),
          fc2(mlp_hidden, dim, rng),
          drop1(dropout),
          drop2(dropout) {}

    void set_training(bool training) {
        drop1.training = training;
        drop2.training = training;
    }

    void collect(ParamList<T>& out, const std::string& prefix) {
        ln1.collect(out, prefix + ".ln1");
        attn.collect(out, prefix + ".attn");
        ln2.collect(out, prefix + ".ln2");
        fc1.collect(out, prefix + ".mlp.fc1");
        fc2.collect(out, prefix + ".mlp.fc2");
    }

    Tensor<T> forward(const Tensor<T>& x, Rng& rng) {
        Tensor<T> a = drop1.forward(attn.forward(ln1.forward(x)), rng);
        Tensor<T> h = x;
        for (std::size_t i = 0; i < h.size(); ++i) h.data[i] += a.data[i];
        Tensor<T> f = drop2.forward(fc2.forward(act.forward(fc1.forward(ln2.forward(h)))), rng);
        Tensor<T> y = h;
        for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += f.data[i];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> df = drop2.backward(dy);
        Tensor<T> dh = ln2.backward(fc1.backward(act.backward(fc2.backward(df))));
        for (std::size_t i = 0; i < dh.size(); ++i) dh.data[i] += dy.data[i];
        Tensor<T> da = drop1.backward(dh);
        Tensor<T> dx = ln1.backward(attn.backward(da));
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dh.data[i];
        return dx;
    }
};

}  // namespace predann
