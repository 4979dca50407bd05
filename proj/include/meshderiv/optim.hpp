/**
 * @file optim.hpp
 * @brief AdamW with a cosine-annealed learning rate.
 */
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace meshderiv {

struct AdamWConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    /// eta_min = min_lr_ratio * lr
    double min_lr_ratio = 0.01;
    /// Schedule length T in optimizer steps.
    std::size_t total_steps = 1;
};

struct OptimizerState {
    AdamWConfig config;
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;

    OptimizerState() = default;
    OptimizerState(const AdamWConfig& cfg, std::size_t n_params);
};

/// eta(t) = eta_min + 0.5 (eta_0 - eta_min)(1 + cos(pi t / T)), t clamped to [0, T].
double cosine_lr(const AdamWConfig& cfg, std::size_t t);

/// Decoupled weight decay then the bias-corrected Adam update, at eta(step).
void adamw_step(OptimizerState& opt, std::span<double> params, std::span<const double> grads);

}  // namespace meshderiv
