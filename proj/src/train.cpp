/**
 * @file train.cpp
 * @brief Normalization fitting, window loss/adjoint, and the training loop.
 */

#include "meshderiv/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "meshderiv/errors.hpp"
#include "meshderiv/rollout.hpp"

namespace meshderiv {

namespace {

double safe_scale(double rms) { return rms > 1e-300 && std::isfinite(rms) ? rms : 1.0; }

}  // namespace

Normalization fit_normalization(const ModelConfig& cfg, std::span<const TrajectoryCase* const> train,
                                std::span<const CaseGraph* const> graphs) {
    if (train.empty()) throw InvalidArgument("normalization needs at least one training case");
    const int nc = cfg.n_channels;
    const int ng = cfg.n_globals;
    Normalization nz = Normalization::identity(nc, ng);

    std::vector<double> sum(nc, 0.0), sq(nc, 0.0);
    double count = 0.0;
    for (const TrajectoryCase* c : train) {
        if (static_cast<int>(c->n_channels()) != nc) throw InvalidArgument("channel count mismatch in " + c->id);
        for (const StateField& f : c->frames) {
            for (int ch = 0; ch < nc; ++ch) {
                sum[ch] += f.values.col(ch).sum();
                sq[ch] += f.values.col(ch).squaredNorm();
            }
            count += static_cast<double>(f.values.rows());
        }
    }
    for (int ch = 0; ch < nc; ++ch) {
        const double mean = sum[ch] / count;
        const double var = std::max(0.0, sq[ch] / count - mean * mean);
        nz.state_mean[ch] = mean;
        const double sd = std::sqrt(var);
        nz.state_std[ch] = sd > 1e-12 * (std::abs(mean) + 1e-300) && sd > 0.0 ? sd : 1.0;
    }

    if (ng > 0) {
        std::vector<double> gs(ng, 0.0), gq(ng, 0.0);
        for (const TrajectoryCase* c : train) {
            if (static_cast<int>(c->globals.size()) != ng) throw InvalidArgument("global count mismatch in " + c->id);
            const auto v = c->globals.values();
            for (int g = 0; g < ng; ++g) {
                gs[g] += v[g];
                gq[g] += v[g] * v[g];
            }
        }
        const double nt = static_cast<double>(train.size());
        for (int g = 0; g < ng; ++g) {
            const double mean = gs[g] / nt;
            const double sd = std::sqrt(std::max(0.0, gq[g] / nt - mean * mean));
            nz.global_mean[g] = mean;
            nz.global_std[g] = sd > 1e-9 * std::abs(mean) && sd > 0.0 ? sd : (mean != 0.0 ? std::abs(mean) : 1.0);
        }
    }

    std::vector<double> g2(nc, 0.0), l2(nc, 0.0), o2(nc, 0.0);
    double gcount = 0.0, ocount = 0.0, len = 0.0, nedges = 0.0;
    for (std::size_t ci = 0; ci < train.size(); ++ci) {
        const TrajectoryCase& c = *train[ci];
        const CaseGraph& g = *graphs[ci];
        for (const Vec2& d : g.neighborhood.displacements()) len += norm(d);
        nedges += static_cast<double>(g.neighborhood.n_edges());
        const double dt = c.dt();
        for (std::size_t k = 0; k < c.frames.size(); ++k) {
            Field sn = c.frames[k].values;
            for (int ch = 0; ch < nc; ++ch) {
                sn.col(ch) = (sn.col(ch).array() - nz.state_mean[ch]) / nz.state_std[ch];
            }
            const Field gr = apply_gradient(g.operators.gradient, g.neighborhood, sn);
            const Field lp = apply_laplacian(g.operators.laplacian, g.neighborhood, sn);
            for (int ch = 0; ch < nc; ++ch) {
                g2[ch] += gr.col(2 * ch).squaredNorm() + gr.col(2 * ch + 1).squaredNorm();
                l2[ch] += lp.col(ch).squaredNorm();
            }
            gcount += static_cast<double>(sn.rows());
            if (k + 1 < c.frames.size()) {
                const Field rate = (c.frames[k + 1].values - c.frames[k].values) / dt;
                for (int ch = 0; ch < nc; ++ch) o2[ch] += rate.col(ch).squaredNorm();
                ocount += static_cast<double>(rate.rows());
            }
        }
    }
    for (int ch = 0; ch < nc; ++ch) {
        nz.grad_scale[ch] = 1.0 / safe_scale(std::sqrt(g2[ch] / (2.0 * gcount)));
        nz.lap_scale[ch] = 1.0 / safe_scale(std::sqrt(l2[ch] / gcount));
        nz.out_scale[ch] = ocount > 0 ? safe_scale(std::sqrt(o2[ch] / ocount)) : 1.0;
    }
    nz.length_scale = nedges > 0 ? safe_scale(len / nedges) : 1.0;
    return nz;
}

std::vector<double> normalized_loss_weights(const ModelParams& m) {
    std::vector<double> w(m.config.n_channels);
    for (int c = 0; c < m.config.n_channels; ++c) w[c] = 1.0 / (m.norm.state_std[c] * m.norm.state_std[c]);
    return w;
}

double window_loss(const ModelParams& m, const CaseGraph& g, std::span<const StateField> truth,
                   std::span<const double> globals_norm, double dt, std::span<const double> channel_weights,
                   std::vector<double>* grad) {
    if (truth.size() < 2) throw InvalidArgument("window needs at least two frames");
    const ButcherTableau& tab = tableau(m.config.integrator);
    const std::size_t K = truth.size() - 1;
    const std::size_t S = tab.stages();
    const Eigen::Index n = truth[0].values.rows();
    const Eigen::Index nc = truth[0].values.cols();
    const bool want_grad = grad != nullptr;

    std::vector<StateField> pred;
    pred.reserve(K + 1);
    pred.push_back(truth[0]);
    std::vector<std::vector<ModelTape>> tapes(want_grad ? K : 0, std::vector<ModelTape>(S));
    for (std::size_t k = 0; k < K; ++k) {
        const Field& s = pred.back().values;
        std::vector<Field> stage(S);
        Field next = s;
        for (std::size_t i = 0; i < S; ++i) {
            Field u = s;
            for (std::size_t j = 0; j < tab.a[i].size(); ++j) {
                if (tab.a[i][j] != 0.0) u += (dt * tab.a[i][j]) * stage[j];
            }
            stage[i] = model_forward(m, g, u, globals_norm, want_grad ? &tapes[k][i] : nullptr);
            next += (dt * tab.b[i]) * stage[i];
        }
        if (!next.allFinite()) throw DivergenceError(k);
        pred.push_back({std::move(next), truth[k + 1].time});
    }
    const double loss = multi_step_loss(pred, truth, channel_weights);
    if (!want_grad) return loss;

    grad->assign(m.theta.size(), 0.0);
    const double scale = 2.0 / (static_cast<double>(n) * static_cast<double>(K));
    Field ds = Field::Zero(n, nc);
    for (std::size_t k = K; k >= 1; --k) {
        Field resid = pred[k].values - truth[k].values;
        for (Eigen::Index c = 0; c < nc; ++c) {
            resid.col(c) *= scale * (channel_weights.empty() ? 1.0 : channel_weights[c]);
        }
        ds += resid;

        std::vector<Field> gk(S);
        for (std::size_t i = 0; i < S; ++i) gk[i] = (dt * tab.b[i]) * ds;
        Field gs = ds;
        for (std::size_t i = S; i-- > 0;) {
            const Field gu = model_backward(m, g, tapes[k - 1][i], gk[i], *grad);
            gs += gu;
            for (std::size_t j = 0; j < tab.a[i].size(); ++j) {
                if (tab.a[i][j] != 0.0) gk[j] += (dt * tab.a[i][j]) * gu;
            }
        }
        ds = std::move(gs);
    }
    return loss;
}

GradientCheckReport gradient_check(const ModelParams& m, const CaseGraph& g, std::span<const StateField> truth,
                                   std::span<const double> globals_norm, double dt,
                                   std::span<const double> channel_weights, const GradientCheckOptions& opt) {
    std::vector<double> grad;
    window_loss(m, g, truth, globals_norm, dt, channel_weights, &grad);
    double gmax = 0.0;
    for (double v : grad) gmax = std::max(gmax, std::abs(v));

    std::vector<std::size_t> idx(m.theta.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    std::mt19937_64 rng(opt.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(opt.samples, idx.size()));

    GradientCheckReport rep;
    ModelParams probe = m;
    for (std::size_t k : idx) {
        const double orig = probe.theta[k];
        probe.theta[k] = orig + opt.eps;
        const double up = window_loss(probe, g, truth, globals_norm, dt, channel_weights, nullptr);
        probe.theta[k] = orig - opt.eps;
        const double down = window_loss(probe, g, truth, globals_norm, dt, channel_weights, nullptr);
        probe.theta[k] = orig;
        const double fd = (up - down) / (2.0 * opt.eps);
        const double denom = std::max({std::abs(grad[k]), std::abs(fd), 1e-6 * gmax, 1e-300});
        const double rel = std::abs(grad[k] - fd) / denom;
        ++rep.checked;
        if (rel >= rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_index = k;
            rep.worst_analytic = grad[k];
            rep.worst_numeric = fd;
        }
    }
    return rep;
}

std::vector<Window> make_windows(const TrajectoryDataset& ds, Split split, int K) {
    if (K < 1) throw InvalidArgument("window length K must be at least 1");
    std::vector<Window> w;
    for (std::size_t ci = 0; ci < ds.cases.size(); ++ci) {
        const TrajectoryCase& c = ds.cases[ci];
        if (c.split != split) continue;
        for (std::size_t s = 0; s + static_cast<std::size_t>(K) < c.frames.size(); s += static_cast<std::size_t>(K)) {
            w.push_back({ci, s});
        }
    }
    return w;
}

TrainResult train(ModelParams m, const TrajectoryDataset& ds, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    if (cfg.window < 1) throw InvalidArgument("window length K must be at least 1");
    if (cfg.epochs < 1) throw InvalidArgument("epochs must be at least 1");
    const auto train_windows = make_windows(ds, Split::Train, cfg.window);
    if (train_windows.empty()) throw InvalidArgument("training split is empty");
    const auto val_windows = make_windows(ds, Split::Val, cfg.window);

    std::vector<CaseGraph> graphs;
    graphs.reserve(ds.cases.size());
    for (const auto& c : ds.cases) {
        if (static_cast<int>(c.n_channels()) != m.config.n_channels ||
            static_cast<int>(c.globals.size()) != m.config.n_globals) {
            throw InvalidArgument("case " + c.id + " does not match the model's channel/global layout");
        }
        graphs.push_back(CaseGraph::build(c.graph));
    }
    if (cfg.fit_norm) {
        std::vector<const TrajectoryCase*> tc;
        std::vector<const CaseGraph*> tg;
        for (std::size_t ci = 0; ci < ds.cases.size(); ++ci) {
            if (ds.cases[ci].split == Split::Train) {
                tc.push_back(&ds.cases[ci]);
                tg.push_back(&graphs[ci]);
            }
        }
        m.norm = fit_normalization(m.config, tc, tg);
    }
    std::vector<std::vector<double>> gnorm;
    for (const auto& c : ds.cases) gnorm.push_back(normalized_globals(m, c.globals));
    const std::vector<double> weights =
        cfg.normalized_loss ? normalized_loss_weights(m) : std::vector<double>(m.config.n_channels, 1.0);

    AdamWConfig adam = cfg.adam;
    adam.total_steps = static_cast<std::size_t>(cfg.epochs) * train_windows.size();
    TrainResult res;
    res.optimizer = OptimizerState(adam, m.theta.size());
    double best = std::numeric_limits<double>::infinity();
    res.best = m;

    auto eval = [&](const Window& w, std::vector<double>* grad) {
        const TrajectoryCase& c = ds.cases[w.case_index];
        std::span<const StateField> frames(c.frames.data() + w.start, static_cast<std::size_t>(cfg.window) + 1);
        return window_loss(m, graphs[w.case_index], frames, gnorm[w.case_index], c.dt(), weights, grad);
    };

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_windows.size());
    std::vector<double> grad;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::shuffle(order.begin(), order.end(), rng);
        EpochLog log;
        log.epoch = epoch + 1;
        log.lr = cosine_lr(adam, res.optimizer.step);
        double total = 0.0;
        for (std::size_t idx : order) {
            total += eval(train_windows[idx], &grad);
            adamw_step(res.optimizer, m.theta, grad);
        }
        log.train_loss = total / static_cast<double>(order.size());
        if (!std::isfinite(log.train_loss)) throw NumericOverflowError("training loss", -1);

        double score = log.train_loss;
        if (!val_windows.empty()) {
            double v = 0.0;
            for (const Window& w : val_windows) {
                try {
                    v += eval(w, nullptr);
                } catch (const DivergenceError&) {
                    v = std::numeric_limits<double>::infinity();
                }
            }
            log.val_loss = v / static_cast<double>(val_windows.size());
            score = log.val_loss;
        } else {
            log.val_loss = std::numeric_limits<double>::quiet_NaN();
        }
        // the train loss is measured during the epoch; with no validation split the
        // last epoch is kept
        if (val_windows.empty() || score < best) {
            best = score;
            res.best = m;
            res.best_epoch = log.epoch;
        }
        res.history.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    return res;
}

}  // namespace meshderiv
