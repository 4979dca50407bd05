#include "meshderiv/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "meshderiv/checkpoint.hpp"
#include "meshderiv/errors.hpp"
#include "meshderiv/metrics.hpp"
#include "meshderiv/rollout.hpp"
#include "meshderiv/shock.hpp"

namespace meshderiv {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

fs::path output_dir(const RunConfig& cfg, const std::string& fallback) {
    const fs::path dir = cfg.get_string("out", fallback);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
    return dir;
}

fs::path required_path(const RunConfig& cfg, const std::string& key) {
    const auto v = cfg.get(key);
    if (!v || v->empty()) throw ConfigError("missing required setting '" + key + "'");
    return *v;
}

std::vector<std::string> dataset_files(const TrajectoryDataset& ds) {
    std::vector<std::string> out{"cases.csv"};
    for (const auto& c : ds.cases) out.push_back(c.id + ".mdtraj");
    return out;
}

}  // namespace

double StencilSuiteReport::flagged_fraction() const {
    if (nodes == 0) return 0.0;
    std::set<std::pair<int, std::size_t>> u;
    for (const auto& r : flagged_gradient) u.insert({r.mesh, r.node});
    for (const auto& r : flagged_laplacian) u.insert({r.mesh, r.node});
    return static_cast<double>(u.size()) / static_cast<double>(nodes);
}

StencilSuiteReport stencil_property_suite(const StencilSuiteOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    StencilSuiteReport rep;
    std::vector<MeshGraph> meshes;
    for (int m = 0; m < opt.meshes; ++m) {
        meshes.push_back(make_perturbed_mesh(opt.nx, opt.ny, 1.0, opt.jitter, opt.seed + static_cast<std::uint64_t>(m), opt.k));
    }
    if (opt.inject_collinear) {
        MeshGraph g;
        for (int i = 0; i < 6; ++i) g.mesh.positions.push_back({0.1 * i, 0.25});
        g.edges = knn_edges(g.mesh, 3);
        meshes.push_back(std::move(g));
    }
    std::mt19937_64 rng(opt.seed ^ 0xA5A5A5A5ull);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (std::size_t m = 0; m < meshes.size(); ++m) {
        const Neighborhood nbr(meshes[m].mesh, meshes[m].edges);
        const MlsOperatorSet ops = build_mls_operators(nbr, opt.mls);
        const auto n = static_cast<Eigen::Index>(nbr.n_nodes());
        const double a0 = U(rng), ax = U(rng), ay = U(rng);
        const double q0 = U(rng), qx = U(rng), qy = U(rng), qxx = U(rng), qyy = U(rng), qxy = U(rng);
        Field lin(n, 1), quad(n, 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vec2 p = nbr.positions()[static_cast<std::size_t>(i)];
            lin(i, 0) = a0 + ax * p.x + ay * p.y;
            quad(i, 0) = q0 + qx * p.x + qy * p.y + qxx * p.x * p.x + qyy * p.y * p.y + qxy * p.x * p.y;
        }
        const Field g = apply_gradient(ops.gradient, nbr, lin);
        const Field l = apply_laplacian(ops.laplacian, nbr, quad);
        const double lap_exact = 2.0 * (qxx + qyy);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto node = static_cast<std::size_t>(i);
            const NodeRef ref{static_cast<int>(m), node};
            if (ops.gradient.regularized[node]) {
                rep.flagged_gradient.push_back(ref);
            } else {
                const double e = std::max(std::abs(g(i, 0) - ax), std::abs(g(i, 1) - ay));
                if (rep.worst_gradient.mesh < 0 || e > rep.max_gradient_error) {
                    rep.max_gradient_error = e;
                    rep.worst_gradient = ref;
                }
            }
            if (ops.laplacian.regularized[node]) {
                rep.flagged_laplacian.push_back(ref);
            } else {
                const double e = std::abs(l(i, 0) - lap_exact);
                if (rep.worst_laplacian.mesh < 0 || e > rep.max_laplacian_error) {
                    rep.max_laplacian_error = e;
                    rep.worst_laplacian = ref;
                }
            }
        }
        rep.nodes += nbr.n_nodes();
        ++rep.meshes;
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

ModelConfig model_config_from(const RunConfig& cfg, const TrajectoryDataset& ds) {
    if (ds.cases.empty()) throw InvalidArgument("dataset has no cases");
    ModelConfig mc;
    mc.n_channels = static_cast<int>(ds.cases[0].n_channels());
    mc.n_globals = static_cast<int>(ds.cases[0].globals.size());
    for (const auto& c : ds.cases) {
        if (static_cast<int>(c.n_channels()) != mc.n_channels || c.globals.names() != ds.cases[0].globals.names()) {
            throw InvalidArgument("case " + c.id + " has a different channel or global layout than " + ds.cases[0].id);
        }
    }
    mc.use_mls = !cfg.get_bool("ablate_mls", false);
    mc.edge_geometry = cfg.get_bool("edge_geometry", true);
    mc.integrator = parse_integrator(cfg.get_string("integrator", "euler"));
    mc.mp_rounds = cfg.get_int("mp_rounds", mc.mp_rounds);
    mc.mp_hidden = cfg.get_int("mp_hidden", mc.mp_hidden);
    mc.message_width = cfg.get_int("message_width", mc.message_width);
    mc.source_width = cfg.get_int("source_width", mc.source_width);
    mc.fusion_hidden = cfg.get_int("fusion_hidden", mc.fusion_hidden);
    mc.fusion_depth = cfg.get_int("fusion_depth", mc.fusion_depth);
    return mc;
}

TrainConfig train_config_from(const RunConfig& cfg) {
    TrainConfig tc;
    tc.epochs = cfg.get_int("epochs", tc.epochs);
    tc.window = cfg.get_int("k", tc.window);
    tc.seed = cfg.get_u64("seed", 0);
    tc.adam.lr = cfg.get_double("lr", tc.adam.lr);
    tc.adam.weight_decay = cfg.get_double("weight_decay", tc.adam.weight_decay);
    tc.normalized_loss = cfg.get_bool("normalized_loss", tc.normalized_loss);
    return tc;
}

DiffusionSpec diffusion_spec_from(const RunConfig& cfg) {
    DiffusionSpec s;
    s.n_train = cfg.get_int("n_train", s.n_train);
    s.n_val = cfg.get_int("n_val", s.n_val);
    s.n_test = cfg.get_int("n_test", s.n_test);
    s.nx = cfg.get_int("nx", s.nx);
    s.ny = cfg.get_int("ny", s.ny);
    s.jitter = cfg.get_double("jitter", s.jitter);
    s.k_neighbors = cfg.get_int("neighbors", s.k_neighbors);
    s.k_min = cfg.get_double("k_min", s.k_min);
    s.k_max = cfg.get_double("k_max", s.k_max);
    s.u_max = cfg.get_double("u_max", s.u_max);
    s.dt = cfg.get_double("dt", s.dt);
    s.n_steps = cfg.get_int("steps", s.n_steps);
    s.substeps = cfg.get_int("substeps", s.substeps);
    s.seed = cfg.get_u64("seed", s.seed);
    return s;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first) first = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    for (std::size_t i = 0; i < t; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first) std::rethrow_exception(first);
}

std::string pgm_bytes(const Eigen::MatrixXd& img, double lo, double hi) {
    std::ostringstream os(std::ios::binary);
    os << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
    const double span = hi > lo ? hi - lo : 1.0;
    for (Eigen::Index r = img.rows() - 1; r >= 0; --r) {
        for (Eigen::Index c = 0; c < img.cols(); ++c) {
            const double v = std::clamp((img(r, c) - lo) / span, 0.0, 1.0);
            os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    }
    return os.str();
}

int cmd_gen(const RunConfig& cfg, std::ostream& log) {
    const std::string family = cfg.get_string("family", "shock");
    const fs::path dir = output_dir(cfg, "data");
    const int jobs = cfg.get_int("jobs", 1);
    TrajectoryDataset ds;

    if (family == "shock") {
        ShockCase base;
        base.nx = cfg.get_int("nx", base.nx);
        base.ny = cfg.get_int("ny", base.ny);
        base.extent = cfg.get_double("extent", base.extent);
        base.x_diaphragm = cfg.get_double("x_diaphragm", base.x_diaphragm);
        base.n_frames = cfg.get_int("frames", base.n_frames);
        base.substeps = cfg.get_int("substeps", base.substeps);
        base.rule = parse_wave_speed_rule(cfg.get_string("wave_speed", wave_speed_rule_name(base.rule)));
        const bool full = cfg.get_bool("full_grid", false);
        const auto grid = shock_parameter_grid();
        const auto labels = make_split(grid);

        std::vector<std::size_t> picked;
        if (full) {
            for (std::size_t i = 0; i < grid.size(); ++i) picked.push_back(i);
        } else {
            const int n = cfg.get_int("cases", 8);
            if (n < 1 || n > 500) throw ConfigError("'cases' must be between 1 and 500");
            std::mt19937_64 rng(cfg.get_u64("seed", 1));
            std::vector<std::size_t> by[3];
            for (std::size_t i = 0; i < grid.size(); ++i) by[static_cast<int>(labels[i])].push_back(i);
            for (auto& v : by) std::shuffle(v.begin(), v.end(), rng);
            const int n_test = std::max(1, static_cast<int>(std::lround(0.25 * n)));
            const int n_val = n >= 3 ? 1 : 0;
            const int n_train = std::max(0, n - n_test - n_val);
            const int take[3] = {n_train, n_val, n - n_train - n_val};
            for (int s = 0; s < 3; ++s) {
                for (int k = 0; k < take[s] && k < static_cast<int>(by[s].size()); ++k) picked.push_back(by[s][static_cast<std::size_t>(k)]);
            }
            std::sort(picked.begin(), picked.end());
        }
        ds.cases.resize(picked.size());
        std::vector<std::string> errors(picked.size());
        parallel_for(picked.size(), jobs, [&](std::size_t k) {
            const GridPoint& g = grid[picked[k]];
            ShockCase c = base;
            c.p_left = g.p_left;
            c.rho_left = g.rho_left;
            ShockRun run = generate_shock_case(c);
            run.trajectory.split = labels[picked[k]];
            if (run.error) errors[k] = *run.error;
            ds.cases[k] = std::move(run.trajectory);
        });
        for (std::size_t k = 0; k < picked.size(); ++k) {
            if (!errors[k].empty()) log << "warning: " << ds.cases[k].id << " stopped early: " << errors[k] << '\n';
        }
    } else if (family == "diffusion") {
        const DiffusionSpec spec = diffusion_spec_from(cfg);
        ds.cases.resize(static_cast<std::size_t>(spec.n_cases()));
        parallel_for(ds.cases.size(), jobs, [&](std::size_t i) {
            const int idx = static_cast<int>(i);
            char id[32];
            std::snprintf(id, sizeof(id), "diff_%03d", idx);
            TrajectoryCase tc = generate_diffusion_case(spec, sample_diffusion_case(spec, idx), id);
            tc.split = idx < spec.n_train ? Split::Train : idx < spec.n_train + spec.n_val ? Split::Val : Split::Test;
            ds.cases[i] = std::move(tc);
        });
    } else {
        throw ConfigError("unknown family '" + family + "' (expected shock or diffusion)");
    }

    save_dataset(dir, ds);
    std::size_t n[4] = {0, 0, 0, 0};
    for (const auto& c : ds.cases) ++n[static_cast<int>(c.split)];
    log << "wrote " << ds.cases.size() << " " << family << " cases to " << dir.string() << " (train " << n[0]
        << ", val " << n[1] << ", test " << n[2] << ")\n";
    write_manifest(dir, "gen", cfg, dataset_files(ds));
    return 0;
}

int cmd_stencil_check(const RunConfig& cfg, std::ostream& log) {
    StencilSuiteOptions opt;
    opt.meshes = cfg.get_int("meshes", opt.meshes);
    opt.nx = cfg.get_int("nx", opt.nx);
    opt.ny = cfg.get_int("ny", opt.ny);
    opt.jitter = cfg.get_double("jitter", opt.jitter);
    opt.k = cfg.get_int("neighbors", opt.k);
    opt.seed = cfg.get_u64("seed", opt.seed);
    opt.inject_collinear = cfg.get_bool("inject_collinear", false);
    const bool strict = cfg.get_bool("strict", false);
    const StencilSuiteReport r = stencil_property_suite(opt);

    std::ostringstream os;
    os << "meshes " << r.meshes << ", nodes " << r.nodes << '\n';
    os << "max gradient error " << fmt(r.max_gradient_error) << " (mesh " << r.worst_gradient.mesh << ", node "
       << r.worst_gradient.node << ")\n";
    os << "max laplacian error " << fmt(r.max_laplacian_error) << " (mesh " << r.worst_laplacian.mesh << ", node "
       << r.worst_laplacian.node << ")\n";
    os << "flagged gradient nodes " << r.flagged_gradient.size() << ", flagged laplacian nodes "
       << r.flagged_laplacian.size() << ", flagged fraction " << fmt(r.flagged_fraction()) << '\n';
    for (const auto& f : r.flagged_gradient) os << "flagged gradient mesh " << f.mesh << " node " << f.node << '\n';
    for (const auto& f : r.flagged_laplacian) os << "flagged laplacian mesh " << f.mesh << " node " << f.node << '\n';
    const bool exact = r.exact();
    const bool flagged = !r.flagged_gradient.empty() || !r.flagged_laplacian.empty();
    const int code = !exact || (strict && flagged) ? 1 : 0;
    os << (exact ? "exactness ok" : "exactness FAILED") << (strict && flagged ? ", strict mode: flagged nodes present" : "")
       << '\n';
    log << os.str();
    if (cfg.has("out")) {
        const fs::path dir = output_dir(cfg, ".");
        write_file_atomic(dir / "stencil_report.txt", os.str());
        write_manifest(dir, "stencil-check", cfg, {"stencil_report.txt"});
    }
    return code;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
    const TrajectoryDataset ds = load_dataset(required_path(cfg, "dataset"));
    const fs::path dir = output_dir(cfg, "run");
    const ModelConfig mc = model_config_from(cfg, ds);
    const TrainConfig tc = train_config_from(cfg);
    const int every = std::max(1, cfg.get_int("log_every", 10));
    ModelParams m = make_model(mc, tc.seed);
    log << "training " << m.n_params() << " parameters on " << ds.by_split(Split::Train).size() << " cases, "
        << tc.epochs << " epochs, K = " << tc.window << (mc.use_mls ? "" : ", without MLS features") << '\n';

    std::ostringstream csv;
    csv << "epoch,train_loss,val_loss,lr\n";
    const TrainResult res = train(std::move(m), ds, tc, [&](const EpochLog& e) {
        csv << e.epoch << ',' << fmt(e.train_loss) << ',' << (std::isnan(e.val_loss) ? "nan" : fmt(e.val_loss)) << ','
            << fmt(e.lr) << '\n';
        if (e.epoch == 1 || e.epoch % every == 0 || e.epoch == tc.epochs) {
            log << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " lr " << e.lr << '\n';
        }
    });
    std::ostringstream ck(std::ios::binary);
    write_checkpoint(ck, res.best, &res.optimizer);
    write_file_atomic(dir / "model.ckpt", ck.str());
    write_file_atomic(dir / "loss.csv", csv.str());
    log << "best epoch " << res.best_epoch << ", checkpoint " << (dir / "model.ckpt").string() << '\n';
    write_manifest(dir, "train", cfg, {"model.ckpt", "loss.csv"});
    return 0;
}

int cmd_rollout(const RunConfig& cfg, std::ostream& log) {
    const Checkpoint ck = load_checkpoint(required_path(cfg, "checkpoint"));
    const TrajectoryDataset ds = load_dataset(required_path(cfg, "dataset"));
    const fs::path dir = output_dir(cfg, "pred");
    const std::string split = cfg.get_string("split", "test");
    const int steps = cfg.get_int("steps", 0);
    RolloutOptions ro;
    ro.policy = parse_policy(cfg.get_string("policy", "frozen"));
    const int jobs = cfg.get_int("jobs", 1);

    std::vector<const TrajectoryCase*> cases;
    for (const auto& c : ds.cases) {
        if (split == "all" || split_name(c.split) == split) cases.push_back(&c);
    }
    if (cases.empty()) throw InvalidArgument("no cases in split '" + split + "'");
    const ModelConfig& mc = ck.model.config;
    for (const auto* c : cases) {
        if (static_cast<int>(c->n_channels()) != mc.n_channels || static_cast<int>(c->globals.size()) != mc.n_globals) {
            throw InvalidArgument("case " + c->id + " has " + std::to_string(c->n_channels()) + " channels and " +
                                  std::to_string(c->globals.size()) + " globals; the checkpoint expects " +
                                  std::to_string(mc.n_channels) + " and " + std::to_string(mc.n_globals));
        }
    }

    TrajectoryDataset out;
    out.cases.resize(cases.size());
    std::vector<std::string> notes(cases.size());
    parallel_for(cases.size(), jobs, [&](std::size_t i) {
        const TrajectoryCase& c = *cases[i];
        RolloutOptions o = ro;
        o.n_steps = steps > 0 ? static_cast<std::size_t>(steps) : c.frames.size() - 1;
        const CaseGraph g = CaseGraph::build(c.graph);
        const RolloutResult r = rollout(ck.model, g, c.frames.front(), c.globals, o);
        TrajectoryCase p;
        p.id = c.id;
        p.graph = c.graph;
        p.channels = c.channels;
        p.globals = c.globals;
        p.split = c.split;
        p.frames = r.frames;
        double total = 0.0;
        for (double s : r.step_seconds) total += s;
        std::ostringstream os;
        os << c.id << ": " << r.frames.size() - 1 << " steps, mean step " << (r.step_seconds.empty() ? 0.0 : total / static_cast<double>(r.step_seconds.size())) * 1e3 << " ms";
        if (!r.ok()) os << ", diverged at step " << *r.diverged_at << " (" << r.message << ")";
        notes[i] = os.str();
        out.cases[i] = std::move(p);
    });
    for (const auto& n : notes) log << n << '\n';
    save_dataset(dir, out);
    write_manifest(dir, "rollout", cfg, dataset_files(out));
    return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& log) {
    const fs::path truth_dir = required_path(cfg, "dataset");
    const TrajectoryDataset truth = load_dataset(truth_dir);
    const TrajectoryDataset pred = load_dataset(cfg.get_string("predictions", truth_dir.string()));
    const fs::path dir = output_dir(cfg, "eval");
    EvalOptions eo;
    eo.raster_resolution = cfg.get_int("raster_resolution", eo.raster_resolution);
    eo.important_threshold = cfg.get_double("important_nodes", -1.0);
    const bool raster = cfg.get_bool("raster", false);
    const int jobs = cfg.get_int("jobs", 1);

    std::vector<std::pair<const TrajectoryCase*, const TrajectoryCase*>> pairs;
    for (const auto& p : pred.cases) {
        const auto it = std::find_if(truth.cases.begin(), truth.cases.end(), [&](const auto& t) { return t.id == p.id; });
        if (it == truth.cases.end()) throw InvalidArgument("prediction " + p.id + " has no ground-truth case");
        if (it->n_channels() != p.n_channels() || it->graph.mesh.n_nodes() != p.graph.mesh.n_nodes()) {
            throw InvalidArgument("prediction " + p.id + " does not match its ground truth in channels or nodes");
        }
        pairs.push_back({&p, &*it});
    }

    std::vector<MetricReport> reports(pairs.size());
    std::vector<std::vector<std::pair<std::string, std::string>>> images(pairs.size());
    parallel_for(pairs.size(), jobs, [&](std::size_t i) {
        const auto& [p, t] = pairs[i];
        evaluate_rollout(reports[i], p->id, p->channels, t->graph.mesh.positions, p->frames, t->frames, eo);
        if (!raster) return;
        const RasterMap map = build_raster_map(t->graph.mesh.positions, eo.raster_resolution);
        const std::size_t T = std::min(p->frames.size(), t->frames.size());
        for (std::size_t c = 0; c < p->n_channels(); ++c) {
            double lo = t->frames[0].values.col(static_cast<Eigen::Index>(c)).minCoeff(), hi = lo;
            for (std::size_t k = 0; k < T; ++k) {
                lo = std::min(lo, t->frames[k].values.col(static_cast<Eigen::Index>(c)).minCoeff());
                hi = std::max(hi, t->frames[k].values.col(static_cast<Eigen::Index>(c)).maxCoeff());
            }
            for (std::size_t k = 0; k < T; ++k) {
                char name[256];
                for (const char* which : {"pred", "truth"}) {
                    const auto& f = std::string(which) == "pred" ? p->frames[k] : t->frames[k];
                    std::snprintf(name, sizeof(name), "%s_%s_%s_t%03zu.pgm", p->id.c_str(), p->channels[c].c_str(), which, k);
                    const Eigen::VectorXd v = f.values.col(static_cast<Eigen::Index>(c));
                    images[i].push_back({name, pgm_bytes(rasterize(map, v), lo, hi)});
                }
            }
        }
    });

    MetricReport all;
    for (const auto& r : reports) all.rows.insert(all.rows.end(), r.rows.begin(), r.rows.end());
    std::ostringstream csv;
    all.write_csv(csv);
    write_file_atomic(dir / "metrics.csv", csv.str());
    std::vector<std::string> outputs{"metrics.csv"};
    if (raster) {
        fs::create_directories(dir / "raster");
        for (const auto& imgs : images) {
            for (const auto& [name, bytes] : imgs) {
                write_file_atomic(dir / "raster" / name, bytes);
                outputs.push_back("raster/" + name);
            }
        }
    }

    double fin = 0.0, area = 0.0;
    int n = 0;
    for (const auto& [p, t] : pairs) {
        const MetricRow* a = all.find(p->id, "all", "RRMSE_final");
        const MetricRow* b = all.find(p->id, "all", "RRMSE_AUC");
        if (a && b && a->value.defined && b->value.defined) {
            fin += a->value.value;
            area += b->value.value;
            ++n;
        }
    }
    log << "evaluated " << pairs.size() << " cases";
    if (n > 0) log << ", mean RRMSE_final " << fin / n << ", mean RRMSE_AUC " << area / n;
    log << '\n';
    write_manifest(dir, "eval", cfg, outputs);
    return 0;
}

}  // namespace meshderiv
