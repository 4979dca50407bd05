/**
 * @file test_neural.cpp
 * @brief Source term, fusion model, reverse-mode gradients, AdamW and training.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "meshderiv/checkpoint.hpp"
#include "meshderiv/diffusion.hpp"
#include "meshderiv/errors.hpp"
#include "meshderiv/model.hpp"
#include "meshderiv/optim.hpp"
#include "meshderiv/rollout.hpp"
#include "meshderiv/train.hpp"

using namespace meshderiv;

namespace {

ModelConfig small_config(bool use_mls = true) {
    ModelConfig c;
    c.n_channels = 2;
    c.n_globals = 2;
    c.use_mls = use_mls;
    c.mp_rounds = 2;
    c.mp_hidden = 6;
    c.message_width = 4;
    c.source_width = 3;
    c.fusion_hidden = 8;
    c.fusion_depth = 2;
    return c;
}

Field random_field(Eigen::Index n, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N;
    Field f(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) f(i, j) = N(rng);
    }
    return f;
}

struct Fixture {
    MeshGraph mesh = make_perturbed_mesh(7, 7, 1.0, 0.3, 3, 8);
    CaseGraph graph = CaseGraph::build(mesh);
    std::vector<double> globals{0.3, -0.8};
};

// Trajectory of a smooth two-channel field; only the loss pathway matters.
std::vector<StateField> truth_frames(const Mesh& m, int K, double dt) {
    std::vector<StateField> out;
    for (int k = 0; k <= K; ++k) {
        StateField f;
        f.time = k * dt;
        f.values.resize(static_cast<Eigen::Index>(m.n_nodes()), 2);
        for (std::size_t i = 0; i < m.n_nodes(); ++i) {
            const double x = m.positions[i].x, y = m.positions[i].y;
            f.values(static_cast<Eigen::Index>(i), 0) = std::sin(3 * x + 0.5 * k * dt) * std::cos(2 * y);
            f.values(static_cast<Eigen::Index>(i), 1) = 0.5 * x * y - 0.1 * k * dt;
        }
        out.push_back(f);
    }
    return out;
}

TrajectoryDataset tiny_diffusion() {
    DiffusionSpec spec;
    spec.n_train = 2;
    spec.n_val = 1;
    spec.n_test = 1;
    spec.nx = spec.ny = 8;
    spec.n_steps = 8;
    return generate_diffusion_dataset(spec);
}

ModelConfig diffusion_config(bool use_mls = true) {
    ModelConfig c;
    c.n_channels = 1;
    c.n_globals = 4;
    c.use_mls = use_mls;
    c.mp_rounds = 1;
    c.mp_hidden = 6;
    c.message_width = 4;
    c.source_width = 3;
    c.fusion_hidden = 8;
    return c;
}

}  // namespace

TEST_CASE("MLP with zero weights outputs zero") {
    const Mlp mlp({3, 5, 2}, 0);
    std::vector<double> theta(mlp.n_params(), 0.0);
    const Matrix out = mlp.forward(theta, random_field(4, 3, 1), nullptr, "mlp");
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(mlp.forward(theta, random_field(4, 2, 1), nullptr, "mlp"), InvalidArgument);
}

TEST_CASE("MLP overflow names the layer") {
    const Mlp mlp({1, 2, 1}, 0);
    std::vector<double> theta(mlp.n_params(), 0.0);
    // Saturated hidden units feed huge output weights: the sum overflows.
    theta[2] = theta[3] = 10.0;
    theta[4] = theta[5] = 1e308;
    try {
        mlp.forward(theta, Matrix::Ones(1, 1), nullptr, "probe");
        FAIL("expected overflow");
    } catch (const NumericOverflowError& e) {
        CHECK(e.layer == 1);
        CHECK(std::string(e.what()).find("probe") != std::string::npos);
    }
}

TEST_CASE("source term: zero weights give zero output") {
    Fixture fx;
    ModelParams m = layout_model(small_config());
    const auto n = static_cast<Eigen::Index>(fx.graph.neighborhood.n_nodes());
    const Matrix out =
        source_term_forward(m.source, m.theta, fx.graph.neighborhood, random_field(n, 2, 4), fx.globals, 1.0, true,
                            nullptr);
    CHECK(out.rows() == n);
    CHECK(out.cols() == 3);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("source term and model are permutation equivariant") {
    Fixture fx;
    const std::size_t n = fx.mesh.mesh.n_nodes();
    std::vector<std::uint32_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
    std::mt19937_64 rng(17);
    std::shuffle(perm.begin(), perm.end(), rng);

    MeshGraph pg;
    pg.mesh.positions.resize(n);
    for (std::size_t i = 0; i < n; ++i) pg.mesh.positions[perm[i]] = fx.mesh.mesh.positions[i];
    for (auto [i, j] : fx.mesh.edges.edges) pg.edges.edges.emplace_back(perm[i], perm[j]);
    std::reverse(pg.edges.edges.begin(), pg.edges.edges.end());
    const CaseGraph pgraph = CaseGraph::build(pg);

    const ModelParams m = make_model(small_config(), 5);
    const Field s = random_field(static_cast<Eigen::Index>(n), 2, 6);
    Field ps(s.rows(), s.cols());
    for (std::size_t i = 0; i < n; ++i) ps.row(perm[i]) = s.row(static_cast<Eigen::Index>(i));

    const Matrix a = source_term_forward(m.source, m.theta, fx.graph.neighborhood, s, fx.globals, 1.0, true, nullptr);
    const Matrix b = source_term_forward(m.source, m.theta, pgraph.neighborhood, ps, fx.globals, 1.0, true, nullptr);
    const Field fa = model_forward(m, fx.graph, s, fx.globals);
    const Field fb = model_forward(m, pgraph, ps, fx.globals);
    for (std::size_t i = 0; i < n; ++i) {
        const auto I = static_cast<Eigen::Index>(i);
        CHECK((a.row(I) - b.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((fa.row(I) - fb.row(perm[i])).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("mean aggregation ignores duplicated identical neighbors") {
    // Node 0 sees nodes 1 and 2, which carry identical states and identical
    // displacements when node 2 sits on top of node 1's offset.
    Mesh m1;
    m1.positions = {{0, 0}, {1, 0}, {0, 1}};
    EdgeSet e1;
    e1.edges = {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {0, 2}, {2, 0}};
    const Neighborhood n1(m1, e1);

    const ModelConfig cfg = [] {
        ModelConfig c = small_config();
        c.mp_rounds = 1;
        return c;
    }();
    const ModelParams m = make_model(cfg, 8);
    Field s(3, 2);
    s << 0.1, 0.2, 0.7, -0.3, 0.7, -0.3;
    // Without edge geometry the messages from 1 and 2 into 0 coincide.
    const Matrix both = source_term_forward(m.source, m.theta, n1, s, std::vector<double>{0.0, 0.0}, 1.0, false,
                                            nullptr);
    EdgeSet e2;
    e2.edges = {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 0}};
    const Neighborhood n2(m1, e2);
    const Matrix one = source_term_forward(m.source, m.theta, n2, s, std::vector<double>{0.0, 0.0}, 1.0, false,
                                           nullptr);
    CHECK((both.row(0) - one.row(0)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("model: zero fusion weights give the bias everywhere") {
    Fixture fx;
    ModelParams m = make_model(small_config(), 2);
    const DenseLayer& last = m.fusion.layers().back();
    for (std::size_t k = m.fusion.offset(); k < m.fusion.offset() + m.fusion.n_params(); ++k) m.theta[k] = 0.0;
    const std::size_t bias = last.offset + static_cast<std::size_t>(last.in) * last.out;
    m.theta[bias] = 0.25;
    m.theta[bias + 1] = -1.5;
    const Field out = model_forward(m, fx.graph, random_field(49, 2, 3), fx.globals);
    CHECK((out.col(0).array() - 0.25).abs().maxCoeff() == 0.0);
    CHECK((out.col(1).array() + 1.5).abs().maxCoeff() == 0.0);
}

TEST_CASE("model: constant state feeds exact zero derivative blocks") {
    Fixture fx;
    ModelParams m = make_model(small_config(), 4);
    const Field s = Field::Constant(49, 2, 0.8);
    ModelTape tape;
    model_forward(m, fx.graph, s, fx.globals, &tape);
    const Matrix& fin = tape.fusion.input;
    REQUIRE(fin.cols() == 2 * 4 + 3);
    CHECK(fin.middleCols(2, 6).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model: fusion width invariant and config errors") {
    const ModelParams a = layout_model(small_config(true));
    const ModelParams b = layout_model(small_config(false));
    CHECK(a.fusion.in_width() == 2 * 4 + 3);
    CHECK(b.fusion.in_width() == 2 + 3);
    CHECK(a.fusion.out_width() == 2);
    ModelConfig bad = small_config();
    bad.mp_rounds = 0;
    CHECK_THROWS_AS(layout_model(bad), ConfigError);
    bad = small_config();
    bad.fusion_hidden = 0;
    CHECK_THROWS_AS(layout_model(bad), ConfigError);
}

TEST_CASE("ablation isolation: without MLS and edge geometry the output ignores positions") {
    Fixture fx;
    ModelConfig cfg = small_config(false);
    cfg.edge_geometry = false;
    const ModelParams m = make_model(cfg, 10);
    std::vector<Vec2> moved = fx.mesh.mesh.positions;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-0.02, 0.02);
    for (Vec2& p : moved) p = p + Vec2{U(rng), U(rng)};
    MeshGraph mg = fx.mesh;
    mg.mesh.positions = moved;
    const CaseGraph moved_graph = CaseGraph::build(mg);
    const Field s = random_field(49, 2, 12);
    const Field a = model_forward(m, fx.graph, s, fx.globals);
    const Field b = model_forward(m, moved_graph, s, fx.globals);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

    // With MLS features the same perturbation changes the output.
    const ModelParams mm = make_model(small_config(true), 10);
    const Field c = model_forward(mm, fx.graph, s, fx.globals);
    const Field d = model_forward(mm, moved_graph, s, fx.globals);
    CHECK((c - d).cwiseAbs().maxCoeff() > 1e-6);

    // Without MLS but with edge geometry only the messages see positions.
    ModelConfig geo = small_config(false);
    const ModelParams mg2 = make_model(geo, 10);
    const Field e = model_forward(mg2, fx.graph, s, fx.globals);
    const Field f = model_forward(mg2, moved_graph, s, fx.globals);
    CHECK((e - f).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("gradient check: K in {1, 4}, with and without MLS, all integrators") {
    Fixture fx;
    const double dt = 0.05;
    for (bool use_mls : {true, false}) {
        for (IntegratorKind integ : {IntegratorKind::Euler, IntegratorKind::Heun, IntegratorKind::RK4}) {
            ModelConfig cfg = small_config(use_mls);
            cfg.integrator = integ;
            const ModelParams m = make_model(cfg, 21);
            for (int K : {1, 4}) {
                const auto truth = truth_frames(fx.mesh.mesh, K, dt);
                GradientCheckOptions opt;
                opt.samples = 60;
                opt.seed = static_cast<std::uint64_t>(K);
                const auto rep = gradient_check(m, fx.graph, truth, fx.globals, dt, {}, opt);
                INFO("mls=" << use_mls << " integrator=" << integrator_name(integ) << " K=" << K
                            << " worst=" << rep.worst_index << " g=" << rep.worst_analytic
                            << " fd=" << rep.worst_numeric);
                CHECK(rep.checked == 60);
                CHECK(rep.max_rel_error < 1e-4);
            }
        }
    }
}

TEST_CASE("gradient: zero loss gives zero gradient, scaling the loss scales the gradient") {
    Fixture fx;
    const ModelParams m = make_model(small_config(), 6);
    const double dt = 0.05;
    StateField s0;
    s0.values = random_field(49, 2, 1);
    // Truth produced by the model itself: loss and gradient vanish.
    std::vector<StateField> self{s0};
    for (int k = 0; k < 3; ++k) {
        StateField nx;
        nx.values = self.back().values + dt * model_forward(m, fx.graph, self.back().values, fx.globals);
        nx.time = (k + 1) * dt;
        self.push_back(nx);
    }
    std::vector<double> grad;
    CHECK(window_loss(m, fx.graph, self, fx.globals, dt, {}, &grad) == 0.0);
    for (double g : grad) CHECK(g == 0.0);

    const auto truth = truth_frames(fx.mesh.mesh, 3, dt);
    std::vector<double> g1, g2;
    const std::vector<double> w1{1.0, 1.0}, w2{2.0, 2.0};
    const double l1 = window_loss(m, fx.graph, truth, fx.globals, dt, w1, &g1);
    const double l2 = window_loss(m, fx.graph, truth, fx.globals, dt, w2, &g2);
    CHECK(l2 == doctest::Approx(2 * l1).epsilon(1e-14));
    for (std::size_t k = 0; k < g1.size(); ++k) CHECK(g2[k] == doctest::Approx(2 * g1[k]).epsilon(1e-12));
}

TEST_CASE("window loss equals the rollout multi-step loss") {
    Fixture fx;
    const ModelParams m = make_model(small_config(), 7);
    const double dt = 0.05;
    const auto truth = truth_frames(fx.mesh.mesh, 4, dt);
    GlobalParams c;
    c.set("a", fx.globals[0]);
    c.set("b", fx.globals[1]);
    c.set("dt", dt);
    ModelConfig cfg3 = small_config();
    cfg3.n_globals = 3;
    const ModelParams m3 = make_model(cfg3, 7);
    RolloutOptions o;
    o.n_steps = 4;
    const RolloutResult r = rollout(m3, fx.graph, truth[0], c, o);
    const auto gn = normalized_globals(m3, c);
    const double wl = window_loss(m3, fx.graph, truth, gn, dt, {}, nullptr);
    CHECK(wl == doctest::Approx(multi_step_loss(r.frames, truth)).epsilon(1e-13));
    // K = 1 is the single-step loss.
    const double l1 = window_loss(m, fx.graph, std::span(truth).first(2), fx.globals, dt, {}, nullptr);
    StateField p;
    p.values = truth[0].values + dt * model_forward(m, fx.graph, truth[0].values, fx.globals);
    const Field d = p.values - truth[1].values;
    CHECK(l1 == doctest::Approx(d.squaredNorm() / 49.0).epsilon(1e-13));
}

TEST_CASE("AdamW: zero gradient and no decay leaves parameters unchanged") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    cfg.total_steps = 10;
    OptimizerState opt(cfg, 4);
    std::vector<double> p{1.0, -2.0, 0.5, 3.0};
    const std::vector<double> before = p;
    const std::vector<double> g(4, 0.0);
    for (int i = 0; i < 5; ++i) adamw_step(opt, p, g);
    CHECK(p == before);
    CHECK(opt.step == 5);
}

TEST_CASE("AdamW: one step against a hand-computed update") {
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.total_steps = 100;
    OptimizerState opt(cfg, 2);
    std::vector<double> p{1.0, -1.0};
    adamw_step(opt, p, std::vector<double>{0.5, -2.0});
    // t = 0 uses eta0; bias-corrected first step moves each parameter by
    // eta * g / (|g| + eps) after decoupled decay.
    const double eta = 0.1;
    for (int k = 0; k < 2; ++k) {
        const double p0 = k == 0 ? 1.0 : -1.0;
        const double g = k == 0 ? 0.5 : -2.0;
        const double want = p0 * (1 - eta * 0.01) - eta * g / (std::abs(g) + 1e-8);
        CHECK(p[k] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    AdamWConfig cfg;
    cfg.lr = 3e-4;
    cfg.total_steps = 1000;
    CHECK(cosine_lr(cfg, 0) == doctest::Approx(3e-4).epsilon(1e-15));
    CHECK(cosine_lr(cfg, 1000) == doctest::Approx(3e-6).epsilon(1e-12));
    CHECK(cosine_lr(cfg, 500) == doctest::Approx((3e-4 + 3e-6) / 2).epsilon(1e-12));
    CHECK(cosine_lr(cfg, 5000) == doctest::Approx(3e-6).epsilon(1e-12));
}

TEST_CASE("training: determinism, windows and errors") {
    const TrajectoryDataset ds = tiny_diffusion();
    const auto w = make_windows(ds, Split::Train, 4);
    CHECK(w.size() == 4);  // 2 cases x 8 steps / K
    CHECK(make_windows(ds, Split::Train, 3).size() == 4);
    CHECK_THROWS_AS(make_windows(ds, Split::Train, 0), InvalidArgument);

    TrainConfig tc;
    tc.epochs = 3;
    tc.adam.lr = 3e-3;
    tc.seed = 5;
    const ModelParams m0 = make_model(diffusion_config(), 5);
    const TrainResult a = train(m0, ds, tc);
    const TrainResult b = train(m0, ds, tc);
    REQUIRE(a.history.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a.history[e].train_loss == b.history[e].train_loss);
        CHECK(a.history[e].val_loss == b.history[e].val_loss);
    }
    CHECK(a.best.theta == b.best.theta);
    CHECK(a.best_epoch >= 1);
    CHECK(a.history.front().lr == doctest::Approx(3e-3));

    TrajectoryDataset empty = ds;
    for (auto& c : empty.cases) c.split = Split::Test;
    CHECK_THROWS_AS(train(m0, empty, tc), InvalidArgument);
    TrainConfig bad = tc;
    bad.window = 0;
    CHECK_THROWS_AS(train(m0, ds, bad), InvalidArgument);
    CHECK_THROWS_AS(train(make_model(small_config(), 1), ds, tc), InvalidArgument);
}

TEST_CASE("training keeps the best validation checkpoint") {
    const TrajectoryDataset ds = tiny_diffusion();
    TrainConfig tc;
    tc.epochs = 4;
    tc.adam.lr = 1e-2;
    const TrainResult r = train(make_model(diffusion_config(), 2), ds, tc);
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    for (const EpochLog& e : r.history) {
        if (e.val_loss < best) best = e.val_loss, best_epoch = e.epoch;
    }
    CHECK(r.best_epoch == best_epoch);
}

TEST_CASE("normalization fit") {
    const TrajectoryDataset ds = tiny_diffusion();
    std::vector<CaseGraph> graphs;
    std::vector<const TrajectoryCase*> tc;
    for (const auto& c : ds.cases) graphs.push_back(CaseGraph::build(c.graph));
    std::vector<const CaseGraph*> tg;
    for (std::size_t i = 0; i < ds.cases.size(); ++i) {
        if (ds.cases[i].split == Split::Train) tc.push_back(&ds.cases[i]), tg.push_back(&graphs[i]);
    }
    const Normalization nz = fit_normalization(diffusion_config(), tc, tg);
    double sum = 0, sq = 0, count = 0;
    for (const auto* c : tc) {
        for (const auto& f : c->frames) sum += f.values.sum(), sq += f.values.squaredNorm(), count += f.values.rows();
    }
    const double mean = sum / count;
    CHECK(nz.state_mean[0] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(nz.state_std[0] == doctest::Approx(std::sqrt(sq / count - mean * mean)).epsilon(1e-9));
    // dt is the same for every case: its scale falls back to |mean| so the
    // normalized value is exactly 0.
    CHECK(nz.global_std[3] == doctest::Approx(ds.cases[0].dt()));
    CHECK(nz.length_scale > 0.0);
    CHECK_THROWS_AS(fit_normalization(diffusion_config(), {}, {}), InvalidArgument);
}

TEST_CASE("checkpoint round trip is bit exact") {
    const TrajectoryDataset ds = tiny_diffusion();
    TrainConfig tc;
    tc.epochs = 1;
    const TrainResult r = train(make_model(diffusion_config(false), 3), ds, tc);
    std::ostringstream os;
    write_checkpoint(os, r.best, &r.optimizer);
    std::istringstream is(os.str());
    const Checkpoint c = read_checkpoint(is);
    CHECK(c.model.theta == r.best.theta);
    CHECK(c.model.config.use_mls == false);
    CHECK(c.model.config.mp_hidden == 6);
    CHECK(c.model.norm.state_mean == r.best.norm.state_mean);
    CHECK(c.model.norm.lap_scale == r.best.norm.lap_scale);
    CHECK(c.model.norm.length_scale == r.best.norm.length_scale);
    REQUIRE(c.optimizer.has_value());
    CHECK(c.optimizer->m == r.optimizer.m);
    CHECK(c.optimizer->v == r.optimizer.v);
    CHECK(c.optimizer->step == r.optimizer.step);
    std::ostringstream again;
    write_checkpoint(again, c.model, &*c.optimizer);
    CHECK(again.str() == os.str());

    std::istringstream junk("garbage");
    CHECK_THROWS_AS(read_checkpoint(junk), IoError);
}
