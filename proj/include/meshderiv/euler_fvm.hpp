/**
 * @file euler_fvm.hpp
 * @brief Finite-volume solver for the 2D compressible Euler equations on a
 *        uniform Cartesian grid.
 *
 * Conserved state is a Field with one row per cell (index iy*nx + ix) and
 * columns [rho, rho*u, rho*v, E]. Face values of the primitives come from the
 * centered 4-point stencil (-1, 7, 7, -1)/12; where a smoothness sensor trips
 * the face falls back to a van Leer limited MUSCL pair. Fluxes are local
 * Lax-Friedrichs. Boundaries are transmissive in x (or periodic) and periodic
 * in y.
 */
#pragma once

#include <Eigen/Core>

#include "meshderiv/mesh.hpp"

namespace meshderiv {

struct EulerGrid {
    int nx = 64;
    int ny = 64;
    double dx = 0.5 / 64;
    double dy = 0.5 / 64;
    bool periodic_x = false;
    std::size_t n_cells() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
};

struct FvmOptions {
    double gamma = 1.4;
    bool limiter = true;
    /// Relative jump in density or pressure between adjacent cells that
    /// counts as a discontinuity.
    double jump_threshold = 0.2;
};

using Vector4 = Eigen::Vector4d;

/// dU/dt per cell. When `boundary_rate` is given it receives the rate of
/// change of the domain totals (sum U dx dy) due to flux through the x-ends.
/// Throws PositivityError for non-positive density or pressure.
Field fvm_rhs(const Field& U, const EulerGrid& grid, const FvmOptions& opts, Vector4* boundary_rate = nullptr);

/// Classical RK4 step of fvm_rhs in place. `budget` accumulates the
/// boundary contribution to the domain totals over the step.
void fvm_rk4_step(Field& U, double dt, const EulerGrid& grid, const FvmOptions& opts, Vector4* budget = nullptr);

/// Domain totals sum(U) * dx * dy per conserved component.
Vector4 conserved_totals(const Field& U, const EulerGrid& grid);

/// Conserved vector of a primitive state (rho, u, v, p).
Vector4 to_conserved(double rho, double u, double v, double p, double gamma = 1.4);

/// Pressure of a conserved vector.
double pressure(const Vector4& U, double gamma = 1.4);

}  // namespace meshderiv
