/**
 * @file riemann.hpp
 * @brief Exact solution of the 1D Riemann problem for an ideal gas.
 *
 * Follows the classical construction: a Newton iteration on the pressure
 * function f_L(p) + f_R(p) + (u_R - u_L) = 0 gives the star-region pressure,
 * then the self-similar solution is sampled along x/t.
 */
#pragma once

namespace meshderiv {

struct Primitive1D {
    double rho = 1.0;
    double u = 0.0;
    double p = 1.0;
};

struct WaveSpeeds {
    double left_head = 0.0;   // shock speed when the left wave is a shock
    double left_tail = 0.0;
    double contact = 0.0;
    double right_tail = 0.0;
    double right_head = 0.0;  // shock speed when the right wave is a shock
    bool left_shock = false;
    bool right_shock = false;
};

class SodSolution {
public:
    /// Throws OracleError if the star pressure does not converge within
    /// 100 iterations to a relative change below 1e-12, or vacuum forms.
    SodSolution(Primitive1D left, Primitive1D right, double gamma = 1.4, double x_diaphragm = 0.0);

    /// State at position x and time t >= 0; t == 0 returns the initial data
    /// (the right state at x == x_diaphragm).
    Primitive1D sample(double x, double t) const;

    double p_star() const { return p_star_; }
    double u_star() const { return u_star_; }
    double rho_star_left() const { return rho_star_l_; }
    double rho_star_right() const { return rho_star_r_; }
    const WaveSpeeds& waves() const { return waves_; }
    int newton_iterations() const { return iterations_; }

    /// Largest |speed| of any wave front (shock, contact, or fan edge).
    double max_wave_speed() const;

    /// Max relative violation of the mass/momentum/energy jump conditions
    /// across any shock in the solution (0 when there is none).
    double rankine_hugoniot_residual() const;

private:
    Primitive1D sample_xi(double xi) const;

    Primitive1D left_, right_;
    double gamma_;
    double x0_;
    double a_l_, a_r_;
    double p_star_ = 0.0, u_star_ = 0.0;
    double rho_star_l_ = 0.0, rho_star_r_ = 0.0;
    WaveSpeeds waves_;
    int iterations_ = 0;
};

}  // namespace meshderiv
