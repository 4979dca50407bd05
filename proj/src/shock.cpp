#include "meshderiv/shock.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "meshderiv/errors.hpp"

namespace meshderiv {

const char* wave_speed_rule_name(WaveSpeedRule r) {
    return r == WaveSpeedRule::ExactRiemann ? "exact-riemann" : "initial-characteristic";
}

WaveSpeedRule parse_wave_speed_rule(const std::string& s) {
    if (s == "exact-riemann") return WaveSpeedRule::ExactRiemann;
    if (s == "initial-characteristic") return WaveSpeedRule::InitialCharacteristic;
    throw InvalidArgument("unknown wave speed rule '" + s + "'");
}

EulerGrid ShockCase::grid() const {
    EulerGrid g;
    g.nx = nx;
    g.ny = ny;
    g.dx = extent / nx;
    g.dy = extent / ny;
    return g;
}

std::string ShockCase::id() const {
    std::ostringstream os;
    os.precision(10);
    os << "shock_p" << p_left << "_r" << rho_left;
    return os.str();
}

void ShockCase::validate() const {
    if (!(p_left > 0 && rho_left > 0 && pressure_ratio > 0 && density_ratio > 0 && extent > 0 && gamma > 1.0)) {
        throw InvalidArgument("shock case parameters must be positive");
    }
    if (nx < 4 || ny < 1 || n_frames < 1 || substeps < 1 || dt < 0.0) {
        throw InvalidArgument("shock case grid/time settings out of range");
    }
    if (!(x_diaphragm > 0.0 && x_diaphragm < extent)) throw InvalidArgument("diaphragm must lie inside the domain");
}

double wave_speed(const ShockCase& c) {
    if (c.rule == WaveSpeedRule::InitialCharacteristic) {
        const Primitive1D l = c.left(), r = c.right();
        return std::max(std::abs(l.u) + std::sqrt(c.gamma * l.p / l.rho), std::abs(r.u) + std::sqrt(c.gamma * r.p / r.rho));
    }
    return SodSolution(c.left(), c.right(), c.gamma, c.x_diaphragm).max_wave_speed();
}

double cfl_timestep(double p_left, double rho_left, double dx, WaveSpeedRule rule, double gamma, double pressure_ratio,
                    double density_ratio) {
    if (!(p_left > 0 && rho_left > 0 && dx > 0)) throw InvalidArgument("cfl_timestep needs positive inputs");
    ShockCase c;
    c.p_left = p_left;
    c.rho_left = rho_left;
    c.gamma = gamma;
    c.pressure_ratio = pressure_ratio;
    c.density_ratio = density_ratio;
    c.rule = rule;
    return 0.5 * dx / wave_speed(c);
}

Vector4 ShockRun::conservation_error() const {
    Vector4 e;
    for (int k = 0; k < 4; ++k) {
        const double scale =
            std::max({std::abs(initial_totals[k]), std::abs(final_totals[k]), std::abs(boundary_budget[k]), 1e-300});
        e[k] = std::abs(final_totals[k] - initial_totals[k] - boundary_budget[k]) / scale;
    }
    return e;
}

Field shock_initial_state(const ShockCase& c) {
    const EulerGrid g = c.grid();
    const Primitive1D l = c.left(), r = c.right();
    const Vector4 ul = to_conserved(l.rho, l.u, 0.0, l.p, c.gamma);
    const Vector4 ur = to_conserved(r.rho, r.u, 0.0, r.p, c.gamma);
    Field U(static_cast<Eigen::Index>(g.n_cells()), 4);
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const double x = (ix + 0.5) * g.dx;
            U.row(static_cast<Eigen::Index>(iy) * g.nx + ix) = (x < c.x_diaphragm ? ul : ur).transpose();
        }
    }
    return U;
}

namespace {

StateField export_frame(const Field& U, double t) {
    StateField f;
    f.time = t;
    f.values.resize(U.rows(), 3);
    f.values.col(0) = U.col(0);
    f.values.col(1) = U.col(1);
    f.values.col(2) = U.col(3);
    return f;
}

double y_variation(const Field& U, const EulerGrid& g) {
    double worst = 0.0;
    for (int k = 0; k < 4; ++k) {
        const double scale = std::max(U.col(k).cwiseAbs().maxCoeff(), 1e-300);
        for (int iy = 1; iy < g.ny; ++iy) {
            for (int ix = 0; ix < g.nx; ++ix) {
                const double d = std::abs(U(static_cast<Eigen::Index>(iy) * g.nx + ix, k) - U(ix, k));
                worst = std::max(worst, d / scale);
            }
        }
    }
    return worst;
}

}  // namespace

ShockRun generate_shock_case(const ShockCase& c) {
    c.validate();
    const EulerGrid g = c.grid();
    const double dt = c.dt > 0.0 ? c.dt : cfl_timestep(c.p_left, c.rho_left, g.dx, c.rule, c.gamma, c.pressure_ratio,
                                                       c.density_ratio);
    ShockRun run;
    TrajectoryCase& tc = run.trajectory;
    tc.id = c.id();
    tc.graph = make_regular_grid(c.nx, c.ny, c.extent, true);
    tc.channels = {"rho", "rho_u", "E"};
    tc.globals.set("p_L", c.p_left);
    tc.globals.set("rho_L", c.rho_left);
    tc.globals.set("dt", dt);

    Field U = shock_initial_state(c);
    run.initial_totals = conserved_totals(U, g);
    tc.frames.push_back(export_frame(U, 0.0));
    const double h = dt / c.substeps;
    try {
        for (int f = 1; f < c.n_frames; ++f) {
            for (int s = 0; s < c.substeps; ++s) fvm_rk4_step(U, h, g, c.fvm, &run.boundary_budget);
            tc.frames.push_back(export_frame(U, f * dt));
            run.max_y_momentum = std::max(run.max_y_momentum, U.col(2).cwiseAbs().maxCoeff());
            run.max_y_variation = std::max(run.max_y_variation, y_variation(U, g));
        }
    } catch (const PositivityError& e) {
        run.error = e.what();
    }
    run.final_totals = conserved_totals(U, g);
    return run;
}

SodSolution sod_analytic(const ShockCase& c) {
    return SodSolution(c.left(), c.right(), c.gamma, c.x_diaphragm);
}

std::vector<GridPoint> shock_parameter_grid() {
    std::vector<GridPoint> g;
    g.reserve(500);
    for (int ip = 0; ip < 20; ++ip) {
        for (int ir = 0; ir < 25; ++ir) g.push_back({50000.0 + 6250.0 * ip, 0.5 + 0.0625 * ir, ip, ir});
    }
    return g;
}

std::vector<Split> make_split(const std::vector<GridPoint>& grid) {
    const auto full = shock_parameter_grid();
    if (grid.size() != full.size()) throw SplitConstructionError("split needs the full 500-case grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i].ip != full[i].ip || grid[i].ir != full[i].ir || grid[i].p_left != full[i].p_left ||
            grid[i].rho_left != full[i].rho_left) {
            throw SplitConstructionError("grid point " + std::to_string(i) + " is not on the canonical grid");
        }
    }

    std::vector<Split> labels(grid.size(), Split::Train);
    // mid-band validation: alternating density rows over two pressures plus the
    // median density at 112500 Pa
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& g = grid[i];
        if ((g.ip == 8 && g.ir % 2 == 0 && g.ir != 12) || (g.ip == 9 && g.ir % 2 == 1) || (g.ip == 10 && g.ir == 12)) {
            labels[i] = Split::Val;
        }
    }

    // corner candidates, ranked by distance to the nearest corner of the
    // normalized index box; the farthest ones go back to training
    const int test_p[] = {0, 1, 15, 16, 17, 18, 19};
    std::vector<std::tuple<double, double, double, std::size_t>> cand;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& g = grid[i];
        const bool p_ok = std::find(std::begin(test_p), std::end(test_p), g.ip) != std::end(test_p);
        const bool r_ok = g.ir <= 5 || g.ir >= 19;
        if (!p_ok || !r_ok) continue;
        const double u = g.ip / 19.0, v = g.ir / 24.0;
        const double du = std::min(u, 1.0 - u), dv = std::min(v, 1.0 - v);
        cand.emplace_back(std::hypot(du, dv), g.p_left, g.rho_left, i);
    }
    std::sort(cand.begin(), cand.end());
    for (std::size_t k = 0; k < cand.size() && k < 75; ++k) labels[std::get<3>(cand[k])] = Split::Test;

    std::size_t n[3] = {0, 0, 0};
    for (Split s : labels) ++n[static_cast<int>(s)];
    if (n[0] != 400 || n[1] != 25 || n[2] != 75) {
        throw SplitConstructionError("split counts " + std::to_string(n[0]) + "/" + std::to_string(n[1]) + "/" +
                                     std::to_string(n[2]) + " differ from 400/25/75");
    }
    return labels;
}

}  // namespace meshderiv
