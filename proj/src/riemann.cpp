/**
 * @file riemann.cpp
 * @brief Exact Riemann solver (ideal gas) used as the shock-tube oracle.
 */

#include "meshderiv/riemann.hpp"

#include <algorithm>
#include <cmath>

#include "meshderiv/errors.hpp"

namespace meshderiv {

namespace {

struct PressureFn {
    double f;
    double df;
};

// f_K(p) and its derivative for one side of the star region.
PressureFn side_function(double p, const Primitive1D& s, double a, double g) {
    if (p > s.p) {
        const double A = 2.0 / ((g + 1.0) * s.rho);
        const double B = (g - 1.0) / (g + 1.0) * s.p;
        const double q = std::sqrt(A / (B + p));
        return {(p - s.p) * q, q * (1.0 - 0.5 * (p - s.p) / (B + p))};
    }
    const double r = p / s.p;
    const double e = (g - 1.0) / (2.0 * g);
    return {2.0 * a / (g - 1.0) * (std::pow(r, e) - 1.0), std::pow(r, -(g + 1.0) / (2.0 * g)) / (s.rho * a)};
}

}  // namespace

SodSolution::SodSolution(Primitive1D left, Primitive1D right, double gamma, double x_diaphragm)
    : left_(left), right_(right), gamma_(gamma), x0_(x_diaphragm) {
    if (!(left.rho > 0 && right.rho > 0 && left.p > 0 && right.p > 0 && gamma > 1.0)) {
        throw OracleError("Riemann data must have positive density and pressure");
    }
    const double g = gamma_;
    a_l_ = std::sqrt(g * left.p / left.rho);
    a_r_ = std::sqrt(g * right.p / right.rho);
    const double du = right.u - left.u;
    if (2.0 * (a_l_ + a_r_) / (g - 1.0) <= du) throw OracleError("Riemann data generates vacuum");

    // two-rarefaction guess, always positive
    const double e = (g - 1.0) / (2.0 * g);
    double p = std::pow((a_l_ + a_r_ - 0.5 * (g - 1.0) * du) / (a_l_ / std::pow(left.p, e) + a_r_ / std::pow(right.p, e)),
                        1.0 / e);
    bool converged = false;
    for (iterations_ = 1; iterations_ <= 100; ++iterations_) {
        const PressureFn fl = side_function(p, left, a_l_, g);
        const PressureFn fr = side_function(p, right, a_r_, g);
        double next = p - (fl.f + fr.f + du) / (fl.df + fr.df);
        if (next <= 0.0) next = 1e-8 * p;
        const double change = 2.0 * std::abs(next - p) / (next + p);
        p = next;
        if (change < 1e-12) {
            converged = true;
            break;
        }
    }
    if (!converged) throw OracleError("star pressure did not converge in 100 Newton iterations");
    p_star_ = p;
    const PressureFn fl = side_function(p, left, a_l_, g);
    const PressureFn fr = side_function(p, right, a_r_, g);
    u_star_ = 0.5 * (left.u + right.u) + 0.5 * (fr.f - fl.f);

    const double gm = (g - 1.0) / (g + 1.0);
    if (p_star_ > left.p) {
        const double r = p_star_ / left.p;
        rho_star_l_ = left.rho * (r + gm) / (gm * r + 1.0);
        const double S = left.u - a_l_ * std::sqrt((g + 1.0) / (2.0 * g) * r + (g - 1.0) / (2.0 * g));
        waves_.left_shock = true;
        waves_.left_head = waves_.left_tail = S;
    } else {
        rho_star_l_ = left.rho * std::pow(p_star_ / left.p, 1.0 / g);
        const double a_star = a_l_ * std::pow(p_star_ / left.p, e);
        waves_.left_head = left.u - a_l_;
        waves_.left_tail = u_star_ - a_star;
    }
    if (p_star_ > right.p) {
        const double r = p_star_ / right.p;
        rho_star_r_ = right.rho * (r + gm) / (gm * r + 1.0);
        const double S = right.u + a_r_ * std::sqrt((g + 1.0) / (2.0 * g) * r + (g - 1.0) / (2.0 * g));
        waves_.right_shock = true;
        waves_.right_head = waves_.right_tail = S;
    } else {
        rho_star_r_ = right.rho * std::pow(p_star_ / right.p, 1.0 / g);
        const double a_star = a_r_ * std::pow(p_star_ / right.p, e);
        waves_.right_head = right.u + a_r_;
        waves_.right_tail = u_star_ + a_star;
    }
    waves_.contact = u_star_;
}

double SodSolution::max_wave_speed() const {
    return std::max({std::abs(waves_.left_head), std::abs(waves_.left_tail), std::abs(waves_.contact),
                     std::abs(waves_.right_tail), std::abs(waves_.right_head)});
}

Primitive1D SodSolution::sample(double x, double t) const {
    if (t < 0.0) throw InvalidArgument("sample time must be non-negative");
    if (t == 0.0) return x < x0_ ? left_ : right_;
    return sample_xi((x - x0_) / t);
}

Primitive1D SodSolution::sample_xi(double xi) const {
    const double g = gamma_;
    if (xi <= u_star_) {
        if (waves_.left_shock) {
            return xi < waves_.left_head ? left_ : Primitive1D{rho_star_l_, u_star_, p_star_};
        }
        if (xi <= waves_.left_head) return left_;
        if (xi >= waves_.left_tail) return {rho_star_l_, u_star_, p_star_};
        const double c = 2.0 / (g + 1.0) + (g - 1.0) / ((g + 1.0) * a_l_) * (left_.u - xi);
        return {left_.rho * std::pow(c, 2.0 / (g - 1.0)),
                2.0 / (g + 1.0) * (a_l_ + 0.5 * (g - 1.0) * left_.u + xi), left_.p * std::pow(c, 2.0 * g / (g - 1.0))};
    }
    if (waves_.right_shock) {
        return xi > waves_.right_head ? right_ : Primitive1D{rho_star_r_, u_star_, p_star_};
    }
    if (xi >= waves_.right_head) return right_;
    if (xi <= waves_.right_tail) return {rho_star_r_, u_star_, p_star_};
    const double c = 2.0 / (g + 1.0) - (g - 1.0) / ((g + 1.0) * a_r_) * (right_.u - xi);
    return {right_.rho * std::pow(c, 2.0 / (g - 1.0)),
            2.0 / (g + 1.0) * (-a_r_ + 0.5 * (g - 1.0) * right_.u + xi), right_.p * std::pow(c, 2.0 * g / (g - 1.0))};
}

double SodSolution::rankine_hugoniot_residual() const {
    const double g = gamma_;
    auto residual = [g](const Primitive1D& a, const Primitive1D& b, double S) {
        auto energy = [g](const Primitive1D& w) { return w.p / (g - 1.0) + 0.5 * w.rho * w.u * w.u; };
        const double ea = energy(a), eb = energy(b);
        // F(b) - F(a) = S (U(b) - U(a)) for each conserved component
        const double mass = (b.rho * b.u - a.rho * a.u) - S * (b.rho - a.rho);
        const double mom = (b.rho * b.u * b.u + b.p - a.rho * a.u * a.u - a.p) - S * (b.rho * b.u - a.rho * a.u);
        const double en = (b.u * (eb + b.p) - a.u * (ea + a.p)) - S * (eb - ea);
        const double c = std::sqrt(g * std::max(a.p, b.p) / std::min(a.rho, b.rho));
        const double sm = std::max(a.rho, b.rho) * c;
        const double sp = std::max(a.p, b.p);
        const double se = (std::max(ea, eb) + sp) * c;
        return std::max({std::abs(mass) / sm, std::abs(mom) / sp, std::abs(en) / se});
    };
    double r = 0.0;
    if (waves_.left_shock) r = std::max(r, residual(left_, {rho_star_l_, u_star_, p_star_}, waves_.left_head));
    if (waves_.right_shock) r = std::max(r, residual({rho_star_r_, u_star_, p_star_}, right_, waves_.right_head));
    return r;
}

}  // namespace meshderiv
