#include "meshderiv/euler_fvm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "meshderiv/errors.hpp"

namespace meshderiv {

namespace {

// Primitive state in a sweep-local frame: normal and tangential velocity.
using Prim = std::array<double, 4>;  // rho, un, ut, p

constexpr int kGhost = 2;

double van_leer(double a, double b) {
    return a * b > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
}

bool big_jump(const Prim& a, const Prim& b, double thr) {
    const double jr = std::abs(a[0] - b[0]) / std::min(a[0], b[0]);
    const double jp = std::abs(a[3] - b[3]) / std::min(a[3], b[3]);
    return jr > thr || jp > thr;
}

Vector4 physical_flux(const Prim& w, double gamma) {
    const double E = w[3] / (gamma - 1.0) + 0.5 * w[0] * (w[1] * w[1] + w[2] * w[2]);
    return {w[0] * w[1], w[0] * w[1] * w[1] + w[3], w[0] * w[1] * w[2], w[1] * (E + w[3])};
}

Vector4 prim_to_cons(const Prim& w, double gamma) {
    const double E = w[3] / (gamma - 1.0) + 0.5 * w[0] * (w[1] * w[1] + w[2] * w[2]);
    return {w[0], w[0] * w[1], w[0] * w[2], E};
}

Vector4 llf_flux(const Prim& l, const Prim& r, double gamma) {
    if (l == r) return physical_flux(l, gamma);
    const double al = std::sqrt(gamma * l[3] / l[0]);
    const double ar = std::sqrt(gamma * r[3] / r[0]);
    const double lam = std::max(std::abs(l[1]) + al, std::abs(r[1]) + ar);
    return 0.5 * (physical_flux(l, gamma) + physical_flux(r, gamma)) -
           0.5 * lam * (prim_to_cons(r, gamma) - prim_to_cons(l, gamma));
}

// Face fluxes along one grid line. `w` holds n cells plus kGhost ghosts on
// each side; face f sits between cells f-1 and f, so the result has n+1 rows.
void line_fluxes(const std::vector<Prim>& w, int n, const FvmOptions& opts, std::vector<Vector4>& out) {
    out.resize(static_cast<std::size_t>(n) + 1);
    for (int f = 0; f <= n; ++f) {
        const int a = f - 1 + kGhost;  // left cell in padded indexing
        const int b = a + 1;
        const Prim& wm = w[a - 1];
        const Prim& wa = w[a];
        const Prim& wb = w[b];
        const Prim& wp = w[b + 1];
        Prim face;
        bool rough = false;
        for (int k = 0; k < 4; ++k) {
            face[k] = (-wm[k] + 7.0 * wa[k] + 7.0 * wb[k] - wp[k]) / 12.0;
            if (opts.limiter) {
                const double lo = std::min(wa[k], wb[k]);
                const double hi = std::max(wa[k], wb[k]);
                const double tol = 1e-12 * std::max({std::abs(lo), std::abs(hi), 1e-300});
                if (face[k] < lo - tol || face[k] > hi + tol) rough = true;
            }
        }
        if (opts.limiter && !rough) {
            const double t = opts.jump_threshold;
            rough = big_jump(wm, wa, t) || big_jump(wa, wb, t) || big_jump(wb, wp, t);
        }
        if (!rough) {
            if (!(face[0] > 0.0) || !(face[3] > 0.0)) throw PositivityError("face state", static_cast<std::size_t>(f));
            out[static_cast<std::size_t>(f)] = physical_flux(face, opts.gamma);
            continue;
        }
        Prim l, r;
        for (int k = 0; k < 4; ++k) {
            l[k] = wa[k] + 0.5 * van_leer(wa[k] - wm[k], wb[k] - wa[k]);
            r[k] = wb[k] - 0.5 * van_leer(wb[k] - wa[k], wp[k] - wb[k]);
        }
        out[static_cast<std::size_t>(f)] = llf_flux(l, r, opts.gamma);
    }
}

}  // namespace

Vector4 to_conserved(double rho, double u, double v, double p, double gamma) {
    return prim_to_cons({rho, u, v, p}, gamma);
}

double pressure(const Vector4& U, double gamma) {
    return (gamma - 1.0) * (U[3] - 0.5 * (U[1] * U[1] + U[2] * U[2]) / U[0]);
}

Field fvm_rhs(const Field& U, const EulerGrid& grid, const FvmOptions& opts, Vector4* boundary_rate) {
    const int nx = grid.nx, ny = grid.ny;
    if (nx < 4 || ny < 1 || U.rows() != static_cast<Eigen::Index>(grid.n_cells()) || U.cols() != 4) {
        throw InvalidArgument("fvm_rhs: state shape does not match the grid");
    }
    const double g = opts.gamma;
    std::vector<Prim> W(grid.n_cells());
    for (std::size_t c = 0; c < W.size(); ++c) {
        const Eigen::Index i = static_cast<Eigen::Index>(c);
        const double rho = U(i, 0);
        if (!(rho > 0.0)) throw PositivityError("density", c);
        const double u = U(i, 1) / rho, v = U(i, 2) / rho;
        const double p = (g - 1.0) * (U(i, 3) - 0.5 * rho * (u * u + v * v));
        if (!(p > 0.0)) throw PositivityError("pressure", c);
        W[c] = {rho, u, v, p};
    }

    Field dU = Field::Zero(U.rows(), 4);
    Vector4 rate = Vector4::Zero();
    std::vector<Prim> line;
    std::vector<Vector4> flux;

    // x sweeps: normal = u, tangential = v
    line.resize(static_cast<std::size_t>(nx + 2 * kGhost));
    for (int iy = 0; iy < ny; ++iy) {
        const std::size_t row = static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx);
        for (int k = -kGhost; k < nx + kGhost; ++k) {
            int src = k;
            if (grid.periodic_x) {
                src = ((k % nx) + nx) % nx;
            } else {
                src = std::clamp(k, 0, nx - 1);
            }
            line[static_cast<std::size_t>(k + kGhost)] = W[row + static_cast<std::size_t>(src)];
        }
        line_fluxes(line, nx, opts, flux);
        for (int ix = 0; ix < nx; ++ix) {
            const Vector4 d = (flux[static_cast<std::size_t>(ix) + 1] - flux[static_cast<std::size_t>(ix)]) / grid.dx;
            const Eigen::Index c = static_cast<Eigen::Index>(row + static_cast<std::size_t>(ix));
            dU(c, 0) -= d[0];
            dU(c, 1) -= d[1];
            dU(c, 2) -= d[2];
            dU(c, 3) -= d[3];
        }
        rate -= (flux[static_cast<std::size_t>(nx)] - flux[0]) * grid.dy;
    }

    // y sweeps: normal = v, tangential = u
    line.resize(static_cast<std::size_t>(ny + 2 * kGhost));
    for (int ix = 0; ix < nx; ++ix) {
        for (int k = -kGhost; k < ny + kGhost; ++k) {
            const int src = ((k % ny) + ny) % ny;
            const Prim& w = W[static_cast<std::size_t>(src) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ix)];
            line[static_cast<std::size_t>(k + kGhost)] = {w[0], w[2], w[1], w[3]};
        }
        line_fluxes(line, ny, opts, flux);
        for (int iy = 0; iy < ny; ++iy) {
            const Vector4 d = (flux[static_cast<std::size_t>(iy) + 1] - flux[static_cast<std::size_t>(iy)]) / grid.dy;
            const Eigen::Index c = static_cast<Eigen::Index>(iy) * nx + ix;
            dU(c, 0) -= d[0];
            dU(c, 1) -= d[2];
            dU(c, 2) -= d[1];
            dU(c, 3) -= d[3];
        }
    }
    if (boundary_rate) *boundary_rate = rate;
    return dU;
}

void fvm_rk4_step(Field& U, double dt, const EulerGrid& grid, const FvmOptions& opts, Vector4* budget) {
    if (!(dt > 0.0)) throw InvalidArgument("fvm_rk4_step: dt must be positive");
    Vector4 r1, r2, r3, r4;
    const Field k1 = fvm_rhs(U, grid, opts, &r1);
    const Field k2 = fvm_rhs(U + 0.5 * dt * k1, grid, opts, &r2);
    const Field k3 = fvm_rhs(U + 0.5 * dt * k2, grid, opts, &r3);
    const Field k4 = fvm_rhs(U + dt * k3, grid, opts, &r4);
    U += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (budget) *budget += (dt / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
}

Vector4 conserved_totals(const Field& U, const EulerGrid& grid) {
    Vector4 t = Vector4::Zero();
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
        for (int k = 0; k < 4; ++k) t[k] += U(i, k);
    }
    return t * (grid.dx * grid.dy);
}

}  // namespace meshderiv
