/**
 * @file mls.cpp
 * @brief Assembly and application of the least-squares gradient/Laplacian stencils.
 */

#include "meshderiv/mls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "meshderiv/errors.hpp"

namespace meshderiv {

namespace {

double mean_distance(const Neighborhood& nbr, std::size_t i) {
    double h = 0.0;
    for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) h += norm(nbr.displacements()[e]);
    return h / static_cast<double>(nbr.degree(i));
}

double edge_weight(const MlsOptions& opt, Vec2 d, double h) {
    if (!opt.gaussian_weight) return 1.0;
    const double r = norm(d) / (opt.weight_width * h);
    return std::exp(-r * r);
}

void check_fresh(std::uint64_t stencil_fp, const Neighborhood& nbr, const char* what) {
    if (stencil_fp != nbr.fingerprint()) {
        throw StaleOperatorError(std::string(what) + " stencil was assembled for different node positions");
    }
}

void check_shape(const Neighborhood& nbr, const Field& s) {
    if (static_cast<std::size_t>(s.rows()) != nbr.n_nodes()) {
        throw InvalidArgument("field has " + std::to_string(s.rows()) + " rows, mesh has " +
                              std::to_string(nbr.n_nodes()) + " nodes");
    }
}

}  // namespace

std::size_t GradientStencil::n_regularized() const {
    return static_cast<std::size_t>(std::count(regularized.begin(), regularized.end(), 1));
}

std::size_t LaplacianStencil::n_regularized() const {
    return static_cast<std::size_t>(std::count(regularized.begin(), regularized.end(), 1));
}

GradientStencil assemble_gradient(const Neighborhood& nbr, const MlsOptions& opt) {
    const std::size_t n = nbr.n_nodes();
    GradientStencil st;
    st.inv_moment.resize(n);
    st.condition.resize(n);
    st.regularized.assign(n, 0);
    st.coeff.resize(nbr.n_edges());
    st.fingerprint = nbr.fingerprint();

    const auto disp = nbr.displacements();
    for (std::size_t i = 0; i < n; ++i) {
        if (nbr.degree(i) < kMinGradientNeighbors) {
            throw UnderdeterminedError("gradient", i, nbr.degree(i), kMinGradientNeighbors);
        }
        const double h = opt.gaussian_weight ? mean_distance(nbr, i) : 1.0;
        double a = 0.0, b = 0.0, d = 0.0;  // M = [a b; b d]
        for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
            const Vec2 r = disp[e];
            const double w = edge_weight(opt, r, h);
            a += w * r.x * r.x;
            b += w * r.x * r.y;
            d += w * r.y * r.y;
        }
        const double tr = a + d;
        const double disc = std::sqrt(std::max(0.0, 0.25 * (a - d) * (a - d) + b * b));
        const double lmax = 0.5 * tr + disc;
        const double lmin = 0.5 * tr - disc;
        const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
        st.condition[i] = cond;
        if (!(cond <= opt.condition_limit)) {
            const double eps = opt.tikhonov * tr;
            a += eps;
            d += eps;
            st.regularized[i] = 1;
        }
        const double det = a * d - b * b;
        st.inv_moment[i] = {d / det, -b / det, -b / det, a / det};
        const auto& m = st.inv_moment[i];
        for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
            const Vec2 r = disp[e];
            const double w = edge_weight(opt, r, h);
            st.coeff[e] = {w * (m[0] * r.x + m[1] * r.y), w * (m[2] * r.x + m[3] * r.y)};
        }
    }
    return st;
}

LaplacianStencil assemble_laplacian(const Neighborhood& nbr, const MlsOptions& opt) {
    using Mat5 = Eigen::Matrix<double, 5, 5>;
    using Vec5 = Eigen::Matrix<double, 5, 1>;
    const std::size_t n = nbr.n_nodes();
    LaplacianStencil st;
    st.weights.resize(nbr.n_edges());
    st.condition.resize(n);
    st.regularized.assign(n, 0);
    st.fingerprint = nbr.fingerprint();

    const Vec5 L(kLaplacianOfBasis.data());
    const auto disp = nbr.displacements();
    for (std::size_t i = 0; i < n; ++i) {
        if (nbr.degree(i) < kMinLaplacianNeighbors) {
            throw UnderdeterminedError("laplacian", i, nbr.degree(i), kMinLaplacianNeighbors);
        }
        // Fit in coordinates scaled by the mean neighbor distance so the moment
        // matrix is O(1) regardless of mesh size; w_ij picks up 1/h^2.
        const double h = mean_distance(nbr, i);
        auto basis = [h](Vec2 r) {
            const double x = r.x / h;
            const double y = r.y / h;
            Vec5 b;
            b << x, y, x * x, y * y, x * y;
            return b;
        };
        Mat5 M = Mat5::Zero();
        for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
            const Vec5 b = basis(disp[e]);
            M.noalias() += edge_weight(opt, disp[e], h) * b * b.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat5> eig(M, Eigen::EigenvaluesOnly);
        const double lmin = eig.eigenvalues()(0);
        const double lmax = eig.eigenvalues()(4);
        const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
        st.condition[i] = cond;
        if (!(cond <= opt.condition_limit)) {
            M.diagonal().array() += opt.tikhonov * M.trace();
            st.regularized[i] = 1;
        }
        const Vec5 a = M.ldlt().solve(L);
        const double inv_h2 = 1.0 / (h * h);
        for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
            st.weights[e] = edge_weight(opt, disp[e], h) * a.dot(basis(disp[e])) * inv_h2;
        }
    }
    return st;
}

MlsOperatorSet build_mls_operators(const Neighborhood& nbr, const MlsOptions& opt) {
    MlsOperatorSet ops;
    ops.gradient = assemble_gradient(nbr, opt);
    ops.laplacian = assemble_laplacian(nbr, opt);
    ops.options = opt;
    ops.fingerprint = nbr.fingerprint();
    return ops;
}

Field apply_gradient(const GradientStencil& st, const Neighborhood& nbr, const Field& s) {
    check_fresh(st.fingerprint, nbr, "gradient");
    check_shape(nbr, s);
    const Eigen::Index nc = s.cols();
    Field out = Field::Zero(s.rows(), 2 * nc);
    const auto tgt = nbr.targets();
    for (std::size_t i = 0; i < nbr.n_nodes(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
            const Vec2 c = st.coeff[e];
            const auto j = static_cast<Eigen::Index>(tgt[e]);
            for (Eigen::Index ch = 0; ch < nc; ++ch) {
                const double ds = s(j, ch) - s(row, ch);
                out(row, 2 * ch) += c.x * ds;
                out(row, 2 * ch + 1) += c.y * ds;
            }
        }
    }
    return out;
}

Field apply_gradient_adjoint(const GradientStencil& st, const Neighborhood& nbr, const Field& d_grad) {
    check_fresh(st.fingerprint, nbr, "gradient");
    check_shape(nbr, d_grad);
    const Eigen::Index nc = d_grad.cols() / 2;
    Field out = Field::Zero(d_grad.rows(), nc);
    const auto tgt = nbr.targets();
    for (std::size_t i = 0; i < nbr.n_nodes(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
            const Vec2 c = st.coeff[e];
            const auto j = static_cast<Eigen::Index>(tgt[e]);
            for (Eigen::Index ch = 0; ch < nc; ++ch) {
                const double g = c.x * d_grad(row, 2 * ch) + c.y * d_grad(row, 2 * ch + 1);
                out(j, ch) += g;
                out(row, ch) -= g;
            }
        }
    }
    return out;
}

Field apply_laplacian(const LaplacianStencil& st, const Neighborhood& nbr, const Field& s) {
    check_fresh(st.fingerprint, nbr, "laplacian");
    check_shape(nbr, s);
    const Eigen::Index nc = s.cols();
    Field out = Field::Zero(s.rows(), nc);
    const auto tgt = nbr.targets();
    for (std::size_t i = 0; i < nbr.n_nodes(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
            const double w = st.weights[e];
            const auto j = static_cast<Eigen::Index>(tgt[e]);
            for (Eigen::Index ch = 0; ch < nc; ++ch) out(row, ch) += w * (s(j, ch) - s(row, ch));
        }
    }
    return out;
}

Field apply_laplacian_adjoint(const LaplacianStencil& st, const Neighborhood& nbr, const Field& d_lap) {
    check_fresh(st.fingerprint, nbr, "laplacian");
    check_shape(nbr, d_lap);
    const Eigen::Index nc = d_lap.cols();
    Field out = Field::Zero(d_lap.rows(), nc);
    const auto tgt = nbr.targets();
    for (std::size_t i = 0; i < nbr.n_nodes(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
            const double w = st.weights[e];
            const auto j = static_cast<Eigen::Index>(tgt[e]);
            for (Eigen::Index ch = 0; ch < nc; ++ch) {
                const double g = w * d_lap(row, ch);
                out(j, ch) += g;
                out(row, ch) -= g;
            }
        }
    }
    return out;
}

MovedOperators rebuild_for_positions(const MlsOperatorSet& ops, const Neighborhood& nbr,
                                     std::span<const Vec2> new_positions) {
    if (ops.fingerprint != nbr.fingerprint()) {
        throw StaleOperatorError("operator set does not belong to the given neighborhood");
    }
    MovedOperators out{nbr.with_positions(new_positions), {}};
    out.operators = build_mls_operators(out.neighborhood, ops.options);
    return out;
}

void write_stencil_dump(std::ostream& os, const MlsOperatorSet& ops, const Neighborhood& nbr) {
    check_fresh(ops.fingerprint, nbr, "operator set");
    std::ostringstream buf;
    buf.precision(17);
    const auto tgt = nbr.targets();
    for (std::size_t i = 0; i < nbr.n_nodes(); ++i) {
        const auto& m = ops.gradient.inv_moment[i];
        buf << "node " << i << " minv " << m[0] << ' ' << m[1] << ' ' << m[2] << ' ' << m[3] << " flags "
            << int(ops.gradient.regularized[i]) << ' ' << int(ops.laplacian.regularized[i]) << '\n';
        for (std::size_t e = nbr.begin(i); e < nbr.end(i); ++e) {
            buf << "  " << tgt[e] << ' ' << ops.laplacian.weights[e] << ' ' << ops.gradient.coeff[e].x << ' '
                << ops.gradient.coeff[e].y << '\n';
        }
    }
    os << buf.str();
}

}  // namespace meshderiv
