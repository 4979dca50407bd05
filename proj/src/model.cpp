/**
 * @file model.cpp
 * @brief Source-term message passing, fusion MLP, and their adjoints.
 */

#include "meshderiv/model.hpp"

#include <random>

#include "meshderiv/errors.hpp"

namespace meshderiv {

Normalization Normalization::identity(int n_channels, int n_globals) {
    Normalization n;
    n.state_mean.assign(n_channels, 0.0);
    n.state_std.assign(n_channels, 1.0);
    n.global_mean.assign(n_globals, 0.0);
    n.global_std.assign(n_globals, 1.0);
    n.grad_scale.assign(n_channels, 1.0);
    n.lap_scale.assign(n_channels, 1.0);
    n.out_scale.assign(n_channels, 1.0);
    n.length_scale = 1.0;
    return n;
}

ModelParams layout_model(const ModelConfig& cfg) {
    if (cfg.n_channels < 1) throw ConfigError("model needs at least one channel");
    if (cfg.n_globals < 0) throw ConfigError("negative global count");
    if (cfg.mp_rounds < 1) throw ConfigError("message passing needs at least one round");
    if (cfg.mp_hidden < 1 || cfg.message_width < 1 || cfg.source_width < 1 || cfg.fusion_hidden < 1 ||
        cfg.fusion_depth < 0) {
        throw ConfigError("layer widths must be positive");
    }
    ModelParams m;
    m.config = cfg;
    m.norm = Normalization::identity(cfg.n_channels, cfg.n_globals);
    m.source.rounds = cfg.mp_rounds;
    std::size_t offset = 0;
    int d = cfg.n_channels + cfg.n_globals;
    for (int r = 0; r < cfg.mp_rounds; ++r) {
        const int out = r + 1 == cfg.mp_rounds ? cfg.source_width : cfg.mp_hidden;
        Mlp edge({2 * d + 2, cfg.mp_hidden, cfg.message_width}, offset);
        offset += edge.n_params();
        Mlp node({d + cfg.message_width, cfg.mp_hidden, out}, offset);
        offset += node.n_params();
        m.source.edge_mlps.push_back(edge);
        m.source.node_mlps.push_back(node);
        d = out;
    }
    std::vector<int> widths{cfg.fusion_input_width()};
    for (int l = 0; l < cfg.fusion_depth; ++l) widths.push_back(cfg.fusion_hidden);
    widths.push_back(cfg.n_channels);
    m.fusion = Mlp(widths, offset);
    offset += m.fusion.n_params();
    if (m.fusion.in_width() != cfg.n_channels * (1 + (cfg.use_mls ? 3 : 0)) + m.source.node_mlps.back().out_width()) {
        throw ConfigError("fusion input width does not match feature blocks");
    }
    m.theta.assign(offset, 0.0);
    return m;
}

ModelParams make_model(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams m = layout_model(cfg);
    std::mt19937_64 rng(seed);
    for (int r = 0; r < m.source.rounds; ++r) {
        m.source.edge_mlps[r].init(m.theta, rng);
        m.source.node_mlps[r].init(m.theta, rng);
    }
    m.fusion.init(m.theta, rng);
    return m;
}

CaseGraph CaseGraph::build(const MeshGraph& g, const MlsOptions& opt) {
    CaseGraph cg;
    cg.neighborhood = build_neighborhoods(g.mesh, g.edges);
    cg.operators = build_mls_operators(cg.neighborhood, opt);
    return cg;
}

namespace {

// The first edge layer acts on [x_src, x_tgt, geo]; its weight splits into
// three column blocks so the product is taken per node instead of per edge.
struct FirstEdgeLayer {
    Eigen::Map<const Matrix> w;
    Eigen::Map<const Eigen::RowVectorXd> b;
};

FirstEdgeLayer first_edge_layer(const Mlp& mlp, std::span<const double> theta) {
    const DenseLayer& L = mlp.layers().front();
    return {Eigen::Map<const Matrix>(theta.data() + L.offset, L.out, L.in),
            Eigen::Map<const Eigen::RowVectorXd>(theta.data() + L.offset + static_cast<std::size_t>(L.in) * L.out,
                                                 L.out)};
}

}  // namespace

Matrix source_term_forward(const MessagePassingParams& p, std::span<const double> theta, const Neighborhood& nbr,
                           const Matrix& node_inputs, std::span<const double> globals, double length_scale,
                           bool edge_geometry, SourceTape* tape) {
    const auto n = static_cast<Eigen::Index>(nbr.n_nodes());
    const auto m = static_cast<Eigen::Index>(nbr.n_edges());
    const auto ng = static_cast<Eigen::Index>(globals.size());
    if (node_inputs.rows() != n) throw InvalidArgument("source term: node count mismatch");

    Matrix x(n, node_inputs.cols() + ng);
    x.leftCols(node_inputs.cols()) = node_inputs;
    for (Eigen::Index g = 0; g < ng; ++g) x.col(node_inputs.cols() + g).setConstant(globals[g]);

    const auto src = nbr.sources();
    const auto tgt = nbr.targets();
    const auto disp = nbr.displacements();
    const double inv_len = 1.0 / length_scale;
    Matrix geo = Matrix::Zero(m, 2);
    if (edge_geometry) {
        for (Eigen::Index e = 0; e < m; ++e) {
            geo(e, 0) = disp[e].x * inv_len;
            geo(e, 1) = disp[e].y * inv_len;
        }
    }
    if (tape) {
        tape->node_in.clear();
        tape->edge.assign(p.rounds, {});
        tape->node.assign(p.rounds, {});
        tape->edge_geo = geo;
    }
    for (int r = 0; r < p.rounds; ++r) {
        if (tape) tape->node_in.push_back(x);
        const Eigen::Index d = x.cols();
        const Mlp& edge = p.edge_mlps[r];
        if (edge.in_width() != 2 * d + 2) throw InvalidArgument("source term: edge MLP width mismatch");
        const FirstEdgeLayer L = first_edge_layer(edge, theta);
        const Matrix a = x * L.w.leftCols(d).transpose();
        const Matrix bt = x * L.w.middleCols(d, d).transpose();
        Matrix z0 = geo * L.w.rightCols(2).transpose();
        for (Eigen::Index e = 0; e < m; ++e) z0.row(e) += a.row(src[e]) + bt.row(tgt[e]) + L.b;
        const std::string tag = "source round " + std::to_string(r);
        Matrix msg = edge.forward_from_preactivation(theta, std::move(z0), tape ? &tape->edge[r] : nullptr,
                                                     tag + " edge MLP");
        Matrix n_in(n, d + msg.cols());
        n_in.leftCols(d) = x;
        n_in.rightCols(msg.cols()).setZero();
        for (Eigen::Index i = 0; i < n; ++i) {
            const std::size_t b = nbr.begin(i);
            const std::size_t en = nbr.end(i);
            auto agg = n_in.row(i).tail(msg.cols());
            for (std::size_t e = b; e < en; ++e) agg += msg.row(static_cast<Eigen::Index>(e));
            agg /= static_cast<double>(en - b);
        }
        x = p.node_mlps[r].forward(theta, n_in, tape ? &tape->node[r] : nullptr, tag + " node MLP");
    }
    return x;
}

Matrix source_term_backward(const MessagePassingParams& p, std::span<const double> theta, const Neighborhood& nbr,
                            const SourceTape& tape, const Matrix& d_out, int n_node_inputs,
                            std::span<double> grad) {
    const auto src = nbr.sources();
    const auto tgt = nbr.targets();
    const auto n = static_cast<Eigen::Index>(nbr.n_nodes());
    const auto m = static_cast<Eigen::Index>(nbr.n_edges());
    Matrix dx = d_out;
    for (int r = p.rounds; r-- > 0;) {
        const Matrix& x = tape.node_in[r];
        const Eigen::Index d = x.cols();
        const Matrix dn_in = p.node_mlps[r].backward(theta, tape.node[r], dx, grad);
        const Eigen::Index mw = dn_in.cols() - d;
        Matrix dx_prev = dn_in.leftCols(d);
        Matrix dmsg(m, mw);
        for (std::size_t i = 0; i < nbr.n_nodes(); ++i) {
            const double inv_deg = 1.0 / static_cast<double>(nbr.degree(i));
            for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
                dmsg.row(static_cast<Eigen::Index>(e)) = dn_in.row(static_cast<Eigen::Index>(i)).tail(mw) * inv_deg;
            }
        }
        const Mlp& edge = p.edge_mlps[r];
        const Matrix dz0 = edge.backward_to_preactivation(theta, tape.edge[r], dmsg, grad);
        const Eigen::Index h = dz0.cols();
        Matrix d_src = Matrix::Zero(n, h);
        Matrix d_tgt = Matrix::Zero(n, h);
        for (Eigen::Index e = 0; e < m; ++e) {
            d_src.row(src[e]) += dz0.row(e);
            d_tgt.row(tgt[e]) += dz0.row(e);
        }
        const DenseLayer& L0 = edge.layers().front();
        Eigen::Map<Matrix> dW(grad.data() + L0.offset, L0.out, L0.in);
        Eigen::Map<Eigen::RowVectorXd> db(grad.data() + L0.offset + static_cast<std::size_t>(L0.in) * L0.out,
                                          L0.out);
        dW.leftCols(d).noalias() += d_src.transpose() * x;
        dW.middleCols(d, d).noalias() += d_tgt.transpose() * x;
        dW.rightCols(2).noalias() += dz0.transpose() * tape.edge_geo;
        db += dz0.colwise().sum();
        const FirstEdgeLayer W = first_edge_layer(edge, theta);
        dx_prev.noalias() += d_src * W.w.leftCols(d);
        dx_prev.noalias() += d_tgt * W.w.middleCols(d, d);
        dx = std::move(dx_prev);
    }
    return dx.leftCols(n_node_inputs);
}

std::vector<double> normalized_globals(const ModelParams& m, const GlobalParams& c) {
    if (static_cast<int>(c.size()) != m.config.n_globals) {
        throw InvalidArgument("model expects " + std::to_string(m.config.n_globals) + " globals, got " +
                              std::to_string(c.size()));
    }
    std::vector<double> out(c.size());
    const auto v = c.values();
    for (std::size_t g = 0; g < v.size(); ++g) out[g] = (v[g] - m.norm.global_mean[g]) / m.norm.global_std[g];
    return out;
}

Field model_forward(const ModelParams& m, const CaseGraph& g, const Field& s, std::span<const double> globals_norm,
                    ModelTape* tape) {
    const ModelConfig& cfg = m.config;
    const Eigen::Index nc = cfg.n_channels;
    if (s.cols() != nc) {
        throw InvalidArgument("state has " + std::to_string(s.cols()) + " channels, model expects " +
                              std::to_string(nc));
    }
    const Eigen::Index n = s.rows();
    Field sn(n, nc);
    for (Eigen::Index c = 0; c < nc; ++c) {
        sn.col(c) = (s.col(c).array() - m.norm.state_mean[c]) / m.norm.state_std[c];
    }

    const Matrix src = source_term_forward(m.source, m.theta, g.neighborhood, sn, globals_norm, m.norm.length_scale,
                                           cfg.edge_geometry, tape ? &tape->source : nullptr);

    Matrix fin(n, cfg.fusion_input_width());
    fin.leftCols(nc) = sn;
    Eigen::Index col = nc;
    if (cfg.use_mls) {
        Field gr = apply_gradient(g.operators.gradient, g.neighborhood, sn);
        Field lp = apply_laplacian(g.operators.laplacian, g.neighborhood, sn);
        for (Eigen::Index c = 0; c < nc; ++c) {
            gr.col(2 * c) *= m.norm.grad_scale[c];
            gr.col(2 * c + 1) *= m.norm.grad_scale[c];
            lp.col(c) *= m.norm.lap_scale[c];
        }
        fin.middleCols(col, 2 * nc) = gr;
        col += 2 * nc;
        fin.middleCols(col, nc) = lp;
        col += nc;
    }
    fin.rightCols(src.cols()) = src;

    Field out = m.fusion.forward(m.theta, fin, tape ? &tape->fusion : nullptr, "fusion MLP");
    for (Eigen::Index c = 0; c < nc; ++c) out.col(c) *= m.norm.out_scale[c];
    return out;
}

Field model_forward(const ModelParams& m, const CaseGraph& g, const Field& s, const GlobalParams& c) {
    const auto gn = normalized_globals(m, c);
    return model_forward(m, g, s, gn, nullptr);
}

Field model_backward(const ModelParams& m, const CaseGraph& g, const ModelTape& tape, const Field& d_dsdt,
                     std::span<double> grad) {
    const ModelConfig& cfg = m.config;
    const Eigen::Index nc = cfg.n_channels;
    Matrix dy = d_dsdt;
    for (Eigen::Index c = 0; c < nc; ++c) dy.col(c) *= m.norm.out_scale[c];
    const Matrix dfin = m.fusion.backward(m.theta, tape.fusion, dy, grad);

    Field dsn = dfin.leftCols(nc);
    Eigen::Index col = nc;
    if (cfg.use_mls) {
        Field dgr = dfin.middleCols(col, 2 * nc);
        col += 2 * nc;
        Field dlp = dfin.middleCols(col, nc);
        for (Eigen::Index c = 0; c < nc; ++c) {
            dgr.col(2 * c) *= m.norm.grad_scale[c];
            dgr.col(2 * c + 1) *= m.norm.grad_scale[c];
            dlp.col(c) *= m.norm.lap_scale[c];
        }
        dsn += apply_gradient_adjoint(g.operators.gradient, g.neighborhood, dgr);
        dsn += apply_laplacian_adjoint(g.operators.laplacian, g.neighborhood, dlp);
    }
    const Matrix dsrc = dfin.rightCols(cfg.source_width);
    dsn += source_term_backward(m.source, m.theta, g.neighborhood, tape.source, dsrc, static_cast<int>(nc), grad);

    for (Eigen::Index c = 0; c < nc; ++c) dsn.col(c) /= m.norm.state_std[c];
    return dsn;
}

}  // namespace meshderiv
