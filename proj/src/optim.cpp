#include "meshderiv/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "meshderiv/errors.hpp"

namespace meshderiv {

OptimizerState::OptimizerState(const AdamWConfig& cfg, std::size_t n_params)
    : config(cfg), m(n_params, 0.0), v(n_params, 0.0) {}

double cosine_lr(const AdamWConfig& cfg, std::size_t t) {
    const double T = static_cast<double>(std::max<std::size_t>(cfg.total_steps, 1));
    const double tt = std::min(static_cast<double>(t), T);
    const double eta_min = cfg.lr * cfg.min_lr_ratio;
    return eta_min + 0.5 * (cfg.lr - eta_min) * (1.0 + std::cos(std::numbers::pi * tt / T));
}

void adamw_step(OptimizerState& opt, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || params.size() != opt.m.size()) {
        throw InvalidArgument("optimizer shape mismatch");
    }
    const AdamWConfig& c = opt.config;
    const double lr = cosine_lr(c, opt.step);
    ++opt.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grads[k];
        opt.m[k] = c.beta1 * opt.m[k] + (1.0 - c.beta1) * g;
        opt.v[k] = c.beta2 * opt.v[k] + (1.0 - c.beta2) * g * g;
        params[k] -= lr * c.weight_decay * params[k];
        params[k] -= lr * (opt.m[k] / bc1) / (std::sqrt(opt.v[k] / bc2) + c.eps);
    }
}

}  // namespace meshderiv
