/**
 * @file shock.hpp
 * @brief Quasi-1D shock-tube cases: timestep rule, trajectory generation,
 *        the 20 x 25 parameter grid, and its train/val/test split.
 */
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meshderiv/dataset.hpp"
#include "meshderiv/euler_fvm.hpp"
#include "meshderiv/riemann.hpp"

namespace meshderiv {

/// How the wave speed C in dt = 0.5 dx / C is measured.
enum class WaveSpeedRule {
    ExactRiemann,          ///< fastest wave of the exact Riemann solution (the shock)
    InitialCharacteristic  ///< max(|u| + a) over the two initial states
};

const char* wave_speed_rule_name(WaveSpeedRule r);
WaveSpeedRule parse_wave_speed_rule(const std::string& s);

struct ShockCase {
    double p_left = 100000.0;  // Pa
    double rho_left = 1.0;     // kg/m^3
    double pressure_ratio = 10.0;
    double density_ratio = 8.0;
    double x_diaphragm = 0.25;  // m
    double extent = 0.5;        // m, square domain
    int nx = 64;
    int ny = 64;
    int n_frames = 43;
    int substeps = 1;  // solver steps per exported frame
    double dt = 0.0;   // s per frame; 0 means use the CFL rule
    double gamma = 1.4;
    WaveSpeedRule rule = WaveSpeedRule::ExactRiemann;
    FvmOptions fvm;

    Primitive1D left() const { return {rho_left, 0.0, p_left}; }
    Primitive1D right() const { return {rho_left / density_ratio, 0.0, p_left / pressure_ratio}; }
    EulerGrid grid() const;
    /// Canonical id such as "shock_p143750_r0.5625".
    std::string id() const;
    /// Throws InvalidArgument on non-positive parameters.
    void validate() const;
};

/// Wave speed C of a case under the given rule.
double wave_speed(const ShockCase& c);

/// 0.5 * dx / C for the case's initial Riemann problem.
double cfl_timestep(double p_left, double rho_left, double dx, WaveSpeedRule rule = WaveSpeedRule::ExactRiemann,
                    double gamma = 1.4, double pressure_ratio = 10.0, double density_ratio = 8.0);

struct ShockRun {
    TrajectoryCase trajectory;  // frames of [rho, rho_u, E]
    Vector4 initial_totals = Vector4::Zero();
    Vector4 final_totals = Vector4::Zero();
    Vector4 boundary_budget = Vector4::Zero();  // net inflow through the x-ends
    double max_y_momentum = 0.0;                // max |rho v| seen in any frame
    double max_y_variation = 0.0;               // max column non-uniformity along y
    std::optional<std::string> error;           // set when the run aborted early

    /// Relative conservation error per component, budget included.
    Vector4 conservation_error() const;
};

/// Diaphragm initial condition on the case grid, columns [rho, rho u, rho v, E].
Field shock_initial_state(const ShockCase& c);

/// RK4 time advance from the diaphragm state. A positivity failure stops the
/// run and returns the frames produced so far with `error` set.
ShockRun generate_shock_case(const ShockCase& c);

/// Exact solution of the case's Riemann problem.
SodSolution sod_analytic(const ShockCase& c);

struct GridPoint {
    double p_left;
    double rho_left;
    int ip;  // pressure index 0..19
    int ir;  // density index 0..24
};

/// p_left in [50000, 168750] step 6250 (outer), rho_left in [0.5, 2.0] step 0.0625.
std::vector<GridPoint> shock_parameter_grid();

/// Labels aligned with `grid`; throws SplitConstructionError unless the grid is
/// the full 500-point grid and the result has exactly 400/25/75 cases.
std::vector<Split> make_split(const std::vector<GridPoint>& grid);

}  // namespace meshderiv
