/**
 * @file mls.hpp
 * @brief Least-squares gradient and Laplacian stencils on graph neighborhoods.
 *
 * Gradient: a linear fit per node. With dr_ij = p_j - p_i and
 * M_i = sum_j dr_ij dr_ij^T, the gradient is M_i^{-1} sum_j dr_ij (s_j - s_i).
 *
 * Laplacian: a quadratic fit per node with basis
 * H_ij = [dx, dy, dx^2, dy^2, dx*dy]. With M~_i = sum_j H_ij H_ij^T and
 * L = [0, 0, 2, 2, 0] (the Laplacian of each basis function), the Laplacian is
 * sum_j w_ij (s_j - s_i) with w_ij = L^T M~_i^{-1} H_ij.
 *
 * Both stencils depend on geometry only and are stored per directed edge in
 * Neighborhood order, so application is a single sparse pass.
 */
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "meshderiv/mesh.hpp"

namespace meshderiv {

struct MlsOptions {
    /// Gaussian distance weight exp(-(|dr| / (weight_width * h_i))^2), where h_i
    /// is the mean neighbor distance. Off by default: plain normal equations.
    bool gaussian_weight = false;
    double weight_width = 1.0;
    /// Moment matrices with a larger eigenvalue ratio are inverted with
    /// Tikhonov regularization and flagged.
    double condition_limit = 1e12;
    /// Regularization epsilon as a fraction of trace(M).
    double tikhonov = 1e-12;
};

inline constexpr std::array<double, 5> kLaplacianOfBasis = {0.0, 0.0, 2.0, 2.0, 0.0};

/// Minimum neighbor counts; below these the assembly throws.
inline constexpr std::size_t kMinGradientNeighbors = 2;
inline constexpr std::size_t kMinLaplacianNeighbors = 3;

struct GradientStencil {
    /// Row-major (a, b; c, d) inverse moment matrix per node, units m^-2.
    std::vector<std::array<double, 4>> inv_moment;
    /// Eigenvalue ratio of M_i (infinity when singular).
    std::vector<double> condition;
    std::vector<std::uint8_t> regularized;
    /// Per-edge coefficient M_i^{-1} dr_ij (times the optional weight).
    std::vector<Vec2> coeff;
    std::uint64_t fingerprint = 0;

    std::size_t n_regularized() const;
};

struct LaplacianStencil {
    std::vector<double> weights;
    /// Eigenvalue ratio of the scaled 5x5 moment matrix.
    std::vector<double> condition;
    std::vector<std::uint8_t> regularized;
    std::uint64_t fingerprint = 0;

    std::size_t n_regularized() const;
};

struct MlsOperatorSet {
    GradientStencil gradient;
    LaplacianStencil laplacian;
    MlsOptions options;
    std::uint64_t fingerprint = 0;
};

GradientStencil assemble_gradient(const Neighborhood& nbr, const MlsOptions& opt = {});
LaplacianStencil assemble_laplacian(const Neighborhood& nbr, const MlsOptions& opt = {});
MlsOperatorSet build_mls_operators(const Neighborhood& nbr, const MlsOptions& opt = {});

/// Output is n x (2 * channels); column 2c holds d/dx and 2c+1 d/dy of channel c.
Field apply_gradient(const GradientStencil& st, const Neighborhood& nbr, const Field& s);
/// Output is n x channels.
Field apply_laplacian(const LaplacianStencil& st, const Neighborhood& nbr, const Field& s);

/// Transposed applications: given d(loss)/d(output) return d(loss)/d(s).
Field apply_gradient_adjoint(const GradientStencil& st, const Neighborhood& nbr, const Field& d_grad);
Field apply_laplacian_adjoint(const LaplacianStencil& st, const Neighborhood& nbr, const Field& d_lap);

struct MovedOperators {
    Neighborhood neighborhood;
    MlsOperatorSet operators;
};

/// Reassembles both stencils for new node positions on the same topology.
MovedOperators rebuild_for_positions(const MlsOperatorSet& ops, const Neighborhood& nbr,
                                     std::span<const Vec2> new_positions);

/// Text dump: one line per node with M_i^{-1}, flags, then "j w_ij gx gy" per edge.
void write_stencil_dump(std::ostream& os, const MlsOperatorSet& ops, const Neighborhood& nbr);

}  // namespace meshderiv
