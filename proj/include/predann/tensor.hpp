#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "predann/rng.hpp"

namespace predann {

// Dense row-major tensor with an optional gradient buffer of the same shape.
// T is the storage/compute type: float for production runs, double for
// finite-difference shadow checks.
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;

    Tensor() = default;

    explicit Tensor(std::vector<int> dims) : shape(std::move(dims)) {
        data.assign(count(shape), T{0});
    }

    static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }

    static Tensor full(std::vector<int> dims, T value) {
        Tensor t(std::move(dims));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    static Tensor randn(std::vector<int> dims, Rng& rng, T stddev = T{1}) {
        Tensor t(std::move(dims));
        for (auto& v : t.data) v = static_cast<T>(rng.normal()) * stddev;
        return t;
    }

    static std::size_t count(const std::vector<int>& dims) {
        std::size_t n = 1;
        for (int d : dims) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t size() const { return data.size(); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(shape.size()); }

    T& operator()(int i) { return data[static_cast<std::size_t>(i)]; }
    const T& operator()(int i) const { return data[static_cast<std::size_t>(i)]; }
    T& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    const T& operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    T& operator()(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    const T& operator()(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }

    T* row(int i) { return data.data() + static_cast<std::size_t>(i) * shape.back(); }
    const T* row(int i) const { return data.data() + static_cast<std::size_t>(i) * shape.back(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T{0});
    }

    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T{0});
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <class T>
inline T dot(const T* a, const T* b, int n) {
    T acc{0};
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// C(m x n) = A(m x k) * B(n x k)^T ; rows of both operands are contiguous.
template <class T>
inline void matmul_nt(const T* a, const T* b, T* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<std::size_t>(i) * k;
        T* ci = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] = dot(ai, b + static_cast<std::size_t>(j) * k, k);
    }
}

// C(m x n) += A(m x k) * B(k x n)
template <class T>
inline void matmul_nn_acc(const T* a, const T* b, T* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + static_cast<std::size_t>(i) * k;
        T* ci = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = ai[p];
            if (av == T{0}) continue;
            const T* bp = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C(m x n) += A(k x m)^T * B(k x n)
template <class T>
inline void matmul_tn_acc(const T* a, const T* b, T* c, int m, int n, int k) {
    for (int p = 0; p < k; ++p) {
        const T* ap = a + static_cast<std::size_t>(p) * m;
        const T* bp = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const T av = ap[i];
            if (av == T{0}) continue;
            T* ci = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

}  // namespace predann
