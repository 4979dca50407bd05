/**
 * @file train.hpp
 * @brief Free-running multi-step training with exact reverse-mode gradients.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "meshderiv/model.hpp"
#include "meshderiv/optim.hpp"

namespace meshderiv {

/// Fits all Normalization statistics on the given training cases.
Normalization fit_normalization(const ModelConfig& cfg, std::span<const TrajectoryCase* const> train,
                                std::span<const CaseGraph* const> graphs);

/// Per-channel loss weights 1 / std^2, i.e. the loss on z-scored states.
std::vector<double> normalized_loss_weights(const ModelParams& m);

/// Rolls K = truth.size() - 1 steps from truth[0], feeding predictions back in,
/// and returns the multi-step loss. When `grad` is non-null it receives the
/// exact gradient w.r.t. m.theta (overwritten, not accumulated).
double window_loss(const ModelParams& m, const CaseGraph& g, std::span<const StateField> truth,
                   std::span<const double> globals_norm, double dt, std::span<const double> channel_weights,
                   std::vector<double>* grad);

struct GradientCheckOptions {
    std::size_t samples = 50;
    double eps = 1e-5;  // central-difference step, absolute
    std::uint64_t seed = 0;
};

struct GradientCheckReport {
    std::size_t checked = 0;
    /// max |g - fd| / max(|g|, |fd|, 1e-6 * max_k |g_k|) over the sampled parameters
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares window_loss's reverse-mode gradient with central differences on
/// distinct parameters sampled uniformly from `seed`.
GradientCheckReport gradient_check(const ModelParams& m, const CaseGraph& g, std::span<const StateField> truth,
                                   std::span<const double> globals_norm, double dt,
                                   std::span<const double> channel_weights, const GradientCheckOptions& opt = {});

struct TrainConfig {
    int epochs = 200;
    int window = 4;  // K
    AdamWConfig adam;
    std::uint64_t seed = 0;
    /// Loss on z-scored states (weights 1/std^2); plain physical-unit loss otherwise.
    bool normalized_loss = true;
    /// Refit normalization from the training split before training.
    bool fit_norm = true;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN without a validation split
    double lr = 0.0;
};

struct TrainResult {
    ModelParams best;
    OptimizerState optimizer;
    std::vector<EpochLog> history;
    int best_epoch = 0;
};

/// Non-overlapping windows of K steps over every case of a split.
struct Window {
    std::size_t case_index = 0;
    std::size_t start = 0;
};
std::vector<Window> make_windows(const TrajectoryDataset& ds, Split split, int K);

/// Throws InvalidArgument when the training split is empty or K < 1.
/// `on_epoch` (optional) is called after every epoch.
TrainResult train(ModelParams m, const TrajectoryDataset& ds, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace meshderiv
