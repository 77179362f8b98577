#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "covertqcd/scenario.hpp"

namespace covertqcd {

/// Closed-form curves evaluated at one grid point.
struct BoundsReport {
    double add_upper = 0.0;                    // renewal-theory delay bound at beta_star
    double add_relaxed = 0.0;                  // beta-free relaxation of add_upper
    double m_over = 0.0;                       // universal overshoot constant
    double ecb_upper = 0.0;                    // budget bound at beta_star
    double beta_star = 0.0;                    // proposed sensing probability
    double converse_lower_second_order = 0.0;  // two-term converse expansion
    double first_order = 0.0;                  // |ln alpha| / d, the no-probing scaling
    double second_order_achievable = 0.0;      // achievable two-term expansion
    double k_const = 0.0;                      // K = D sqrt(delta / chi2_post)
};

/// Exact ADD of the deterministic stop-at-n policy under the geometric prior:
/// E[(n - Gamma)^+] = sum_{m=1}^{n-1} (1 - (1-rho)^m).
inline double innocent_add_exact(const Prior& prior, std::int64_t n_stop) {
    if (n_stop < 1) throw std::invalid_argument("innocent_add_exact: n_stop < 1");
    double s = 0.0;
    for (std::int64_t m = 1; m < n_stop; ++m) s += 1.0 - prior.tail(m);
    return s;
}

/// Exact PFA of the deterministic stop-at-n policy: P{Gamma > n} = (1-rho)^n.
inline double innocent_pfa_exact(const Prior& prior, std::int64_t n_stop) {
    return prior.tail(n_stop);
}

/// Universal overshoot constant (V + 2dD + d^2) / d^2, from bounding the
/// random-walk excess uniformly over beta in [0,1].
inline double m_over(double kl, double llr_var, double d) {
    return (llr_var + 2.0 * d * kl + d * d) / (d * d);
}

inline double m_over(const ChannelSpec& channel, const Prior& prior) {
    return m_over(channel.kl(), channel.llr_var(), prior.d);
}

namespace detail {

// Range checks work on |ln alpha|, which never underflows on deep grids:
// alpha < c iff |ln alpha| > -ln c.
inline void check_alpha_beta(const Scenario& s, double beta, const char* fn) {
    if (!(s.abs_ln_alpha > std::log(2.0)))
        throw std::invalid_argument(std::string(fn) + ": alpha outside ]0,1/2[");
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::invalid_argument(std::string(fn) + ": beta outside [0,1]");
}

inline void check_relaxed_range(const Scenario& s, const char* fn) {
    if (!(s.abs_ln_alpha > std::max(std::log(2.0), s.prior.d)))
        throw std::invalid_argument(
            std::string(fn) + ": alpha outside ]0, min(1/2, 1-rho)[");
}

}  // namespace detail

/// Non-asymptotic delay bound of the constant-sensing-probability posterior
/// threshold rule:
///   (|ln a| - |ln(1-a)| + C_rho)/(bD + d) + (bV + 2 d bD + d^2)/(bD + d)^2.
inline double add_upper(const Scenario& s, double beta) {
    detail::check_alpha_beta(s, beta, "add_upper");
    const double d = s.prior.d;
    const double drift = beta * s.channel.kl() + d;
    const double num = s.b_alpha + s.prior.c_rho;
    const double over =
        beta * s.channel.llr_var() + 2.0 * d * beta * s.channel.kl() + d * d;
    return num / drift + over / (drift * drift);
}

/// Relaxation of add_upper: drop the probing drift from the denominator and
/// bound the overshoot by m_over. Valid for alpha in ]0, min(1/2, 1-rho)[.
inline double add_relaxed(const Scenario& s) {
    detail::check_relaxed_range(s, "add_relaxed");
    return (s.b_alpha + s.prior.c_rho) / s.prior.d +
           m_over(s.channel, s.prior);
}

/// Budget bound beta^2 (chi2_pre/rho + chi2_post * add_relaxed). Increasing
/// in beta; its inverse at value delta defines the proposed sensing rate.
inline double ecb_upper(const Scenario& s, double beta) {
    detail::check_alpha_beta(s, beta, "ecb_upper");
    return beta * beta *
           (s.channel.chi2_pre() / s.prior.rho +
            s.channel.chi2_post() * add_relaxed(s));
}

/// Unclipped sensing rate equating ecb_upper to delta.
inline double unconstrained_sensing_rate(const Scenario& s) {
    detail::check_relaxed_range(s, "unconstrained_sensing_rate");
    double denom = s.channel.chi2_pre() / s.prior.rho +
                   s.channel.chi2_post() * add_relaxed(s);
    return std::sqrt(s.delta / denom);
}

inline double first_order(const Scenario& s) { return s.abs_ln_alpha / s.prior.d; }

/// K = D sqrt(delta / chi2_post).
inline double k_const(const Scenario& s) {
    return s.channel.kl() * std::sqrt(s.delta / s.channel.chi2_post());
}

/// Coefficient of the sqrt(|ln alpha|) term shared by the converse and the
/// achievable expansion: D sqrt(delta) / (d^{3/2} sqrt(chi2_post)).
inline double second_order_coefficient(const Scenario& s) {
    const double d = s.prior.d;
    return s.channel.kl() * std::sqrt(s.delta) /
           (std::pow(d, 1.5) * std::sqrt(s.channel.chi2_post()));
}

/// Two leading terms of the converse. The O(1) term has no computable
/// constant and is not folded in.
inline double converse_lower(const Scenario& s) {
    return s.abs_ln_alpha / s.prior.d -
           k_const(s) / std::pow(s.prior.d, 1.5) * std::sqrt(s.abs_ln_alpha);
}

/// Achievable two-term expansion; shares its coefficient with converse_lower.
inline double second_order_achievable(const Scenario& s) {
    return first_order(s) - second_order_coefficient(s) * std::sqrt(s.abs_ln_alpha);
}

/// Fully rigorous non-asymptotic converse, before any Taylor expansion:
/// the positive root of d x^2 + K x - (|ln a| - C1) = 0, squared.
/// Defined only when |ln alpha| > C1 = d/rho; vacuous otherwise.
inline double exact_quadratic_root_lower(const Scenario& s) {
    const double d = s.prior.d;
    const double c1 = d / s.prior.rho;
    if (!(s.abs_ln_alpha > c1))
        throw std::invalid_argument(
            "exact_quadratic_root_lower: bound vacuous, |ln alpha| <= d/rho");
    const double k = k_const(s);
    const double root =
        (-k + std::sqrt(k * k + 4.0 * d * (s.abs_ln_alpha - c1))) / (2.0 * d);
    return root * root;
}

/// Quadratic lower bound on sqrt(1+x): 1 + x/2 - A_r x^2 with
/// A_r = (1/8)(1-r)^{-3/2}, valid for |x| <= r, r in ]0,1[.
inline double sqrt_taylor_lower(double x, double r) {
    if (!(r > 0.0 && r < 1.0))
        throw std::invalid_argument("sqrt_taylor_lower: r outside ]0,1[");
    if (!(std::abs(x) <= r))
        throw std::invalid_argument("sqrt_taylor_lower: |x| > r");
    const double a_r = 0.125 * std::pow(1.0 - r, -1.5);
    return 1.0 + 0.5 * x - a_r * x * x;
}

}  // namespace covertqcd
