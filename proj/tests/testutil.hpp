#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "predann/tensor.hpp"

namespace testutil {

// Central-difference gradient check. `fwd` recomputes the scalar loss from
// current tensor contents; `bwd` runs one forward+backward and accumulates
// gradients into each tensor's grad buffer. Run with T=double (shadow mode).
// Returns the worst relative error over all checked coordinates.
struct GradCheck {
    double h = 1e-3;
    std::size_t max_coords_per_tensor = 64;  // deterministic stride subsample

    double run(const std::function<double()>& fwd, const std::function<void()>& bwd,
               const std::vector<predann::Tensor<double>*>& tensors) const {
        for (auto* t : tensors) {
            t->ensure_grad();
            t->zero_grad();
        }
        bwd();
        std::vector<std::vector<double>> analytic;
        analytic.reserve(tensors.size());
        for (auto* t : tensors) analytic.push_back(t->grad);

        double worst = 0.0;
        for (std::size_t k = 0; k < tensors.size(); ++k) {
            predann::Tensor<double>& t = *tensors[k];
            const std::size_t n = t.size();
            const std::size_t stride = n <= max_coords_per_tensor ? 1 : (n + max_coords_per_tensor - 1) / max_coords_per_tensor;
            std::vector<double> num, ana;
            for (std::size_t i = 0; i < n; i += stride) {
                const double orig = t.data[i];
                t.data[i] = orig + h;
                const double lp = fwd();
                t.data[i] = orig - h;
                const double lm = fwd();
                t.data[i] = orig;
                num.push_back((lp - lm) / (2.0 * h));
                ana.push_back(analytic[k][i]);
            }
            // error relative to the gradient's scale: strict on structural
            // mistakes, tolerant of truncation noise in near-zero coordinates
            double scale = 1.0;
            for (std::size_t i = 0; i < num.size(); ++i)
                scale = std::max({scale, std::fabs(num[i]), std::fabs(ana[i])});
            for (std::size_t i = 0; i < num.size(); ++i)
                worst = std::max(worst, std::fabs(ana[i] - num[i]) / scale);
        }
        return worst;
    }
};

// fixed pseudo-random projection so every output element affects the loss
inline std::vector<double> loss_weights(std::size_t n, std::uint64_t seed = 7) {
    predann::Rng rng(seed);
    std::vector<double> w(n);
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    return w;
}

inline double weighted_sum(const std::vector<double>& x, const std::vector<double>& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * w[i];
    return acc;
}

}  // namespace testutil
