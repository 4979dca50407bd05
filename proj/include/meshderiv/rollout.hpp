/**
 * @file rollout.hpp
 * @brief Autoregressive rollout of the learned operator and the rollout loss.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "meshderiv/model.hpp"

namespace meshderiv {

enum class OperatorPolicy {
    /// Stencils of the reference positions for the whole rollout.
    Frozen,
    /// Stencils rebuilt from displaced positions before every step (never between stages).
    RebuildEveryStep,
};

const char* policy_name(OperatorPolicy p);
OperatorPolicy parse_policy(const std::string& s);

struct RolloutOptions {
    std::size_t n_steps = 1;
    OperatorPolicy policy = OperatorPolicy::Frozen;
    /// (x, y) channel pairs holding nodal displacements from the reference positions.
    std::vector<std::pair<int, int>> lagrangian_channels;
};

struct RolloutResult {
    /// Initial state plus one frame per completed step.
    std::vector<StateField> frames;
    std::vector<double> step_seconds;
    std::vector<std::uint8_t> rebuilt;
    /// Regularized gradient + Laplacian nodes in the operators used for each step.
    std::vector<std::size_t> regularized_nodes;
    /// Set when a step produced non-finite values; frames hold the partial trajectory.
    std::optional<std::size_t> diverged_at;
    std::string message;

    bool ok() const { return !diverged_at; }
};

/// Feeds each prediction back as the next input. dt comes from the "dt" global.
RolloutResult rollout(const ModelParams& m, const CaseGraph& reference, const StateField& s0, const GlobalParams& c,
                      const RolloutOptions& opt);

/// Rollout of an arbitrary derivative with a fixed integrator.
RolloutResult rollout(IntegratorKind integ, const Derivative& f, const StateField& s0, double dt,
                      std::size_t n_steps);

/// (1 / (N T)) sum_t sum_i ||pred_i^t - truth_i^t||^2 over frames 1..T; frame 0
/// (the shared initial state) is excluded. Optional per-channel weights.
double multi_step_loss(std::span<const StateField> pred, std::span<const StateField> truth,
                       std::span<const double> channel_weights = {});

}  // namespace meshderiv
