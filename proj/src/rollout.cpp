#include "meshderiv/rollout.hpp"

#include <chrono>

#include "meshderiv/errors.hpp"

namespace meshderiv {

const char* policy_name(OperatorPolicy p) { return p == OperatorPolicy::Frozen ? "frozen" : "rebuild"; }

OperatorPolicy parse_policy(const std::string& s) {
    if (s == "frozen") return OperatorPolicy::Frozen;
    if (s == "rebuild") return OperatorPolicy::RebuildEveryStep;
    throw InvalidArgument("unknown operator policy '" + s + "'");
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<Vec2> displaced_positions(const Neighborhood& ref, const Field& s,
                                      const std::vector<std::pair<int, int>>& channels) {
    std::vector<Vec2> p = ref.positions();
    for (const auto& [cx, cy] : channels) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            p[i].x += s(r, cx);
            p[i].y += s(r, cy);
        }
    }
    return p;
}

}  // namespace

RolloutResult rollout(const ModelParams& m, const CaseGraph& reference, const StateField& s0, const GlobalParams& c,
                      const RolloutOptions& opt) {
    if (opt.n_steps < 1) throw InvalidArgument("rollout needs at least one step");
    if (static_cast<std::size_t>(s0.values.rows()) != reference.neighborhood.n_nodes()) {
        throw InvalidArgument("initial state does not match the mesh");
    }
    for (const auto& [cx, cy] : opt.lagrangian_channels) {
        if (cx < 0 || cy < 0 || cx >= s0.values.cols() || cy >= s0.values.cols()) {
            throw InvalidArgument("lagrangian channel out of range");
        }
    }
    const double dt = c.at("dt");
    const auto gn = normalized_globals(m, c);

    RolloutResult res;
    res.frames.push_back(s0);
    CaseGraph moved;
    for (std::size_t k = 0; k < opt.n_steps; ++k) {
        const auto t0 = Clock::now();
        const CaseGraph* g = &reference;
        bool rebuilt = false;
        if (opt.policy == OperatorPolicy::RebuildEveryStep && !opt.lagrangian_channels.empty()) {
            const auto pos = displaced_positions(reference.neighborhood, res.frames.back().values,
                                                 opt.lagrangian_channels);
            auto mo = rebuild_for_positions(reference.operators, reference.neighborhood, pos);
            moved.neighborhood = std::move(mo.neighborhood);
            moved.operators = std::move(mo.operators);
            g = &moved;
            rebuilt = true;
        }
        Derivative f = [&](const Field& s) { return model_forward(m, *g, s, gn, nullptr); };
        try {
            Field next = step(m.config.integrator, f, res.frames.back().values, dt, k);
            res.frames.push_back({std::move(next), s0.time + static_cast<double>(k + 1) * dt});
        } catch (const DivergenceError& e) {
            res.diverged_at = k;
            res.message = e.what();
        } catch (const NumericOverflowError& e) {
            res.diverged_at = k;
            res.message = e.what();
        }
        res.step_seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
        res.rebuilt.push_back(rebuilt ? 1 : 0);
        res.regularized_nodes.push_back(g->operators.gradient.n_regularized() +
                                        g->operators.laplacian.n_regularized());
        if (res.diverged_at) break;
    }
    return res;
}

RolloutResult rollout(IntegratorKind integ, const Derivative& f, const StateField& s0, double dt,
                      std::size_t n_steps) {
    if (n_steps < 1) throw InvalidArgument("rollout needs at least one step");
    RolloutResult res;
    res.frames.push_back(s0);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const auto t0 = Clock::now();
        try {
            Field next = step(integ, f, res.frames.back().values, dt, k);
            res.frames.push_back({std::move(next), s0.time + static_cast<double>(k + 1) * dt});
        } catch (const DivergenceError& e) {
            res.diverged_at = k;
            res.message = e.what();
        }
        res.step_seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
        res.rebuilt.push_back(0);
        res.regularized_nodes.push_back(0);
        if (res.diverged_at) break;
    }
    return res;
}

double multi_step_loss(std::span<const StateField> pred, std::span<const StateField> truth,
                       std::span<const double> channel_weights) {
    if (pred.size() != truth.size()) {
        throw InvalidArgument("loss: " + std::to_string(pred.size()) + " predicted frames vs " +
                              std::to_string(truth.size()) + " true frames");
    }
    if (pred.size() < 2) throw InvalidArgument("loss needs an initial frame and at least one step");
    const Eigen::Index n = truth[0].values.rows();
    const Eigen::Index nc = truth[0].values.cols();
    if (!channel_weights.empty() && static_cast<Eigen::Index>(channel_weights.size()) != nc) {
        throw InvalidArgument("loss: channel weight count mismatch");
    }
    double sum = 0.0;
    for (std::size_t t = 1; t < pred.size(); ++t) {
        if (pred[t].values.rows() != n || pred[t].values.cols() != nc || truth[t].values.rows() != n ||
            truth[t].values.cols() != nc) {
            throw InvalidArgument("loss: frame shape mismatch at " + std::to_string(t));
        }
        for (Eigen::Index c = 0; c < nc; ++c) {
            const double w = channel_weights.empty() ? 1.0 : channel_weights[c];
            sum += w * (pred[t].values.col(c) - truth[t].values.col(c)).squaredNorm();
        }
    }
    return sum / (static_cast<double>(n) * static_cast<double>(pred.size() - 1));
}

}  // namespace meshderiv
