#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "covertqcd/belief_policy.hpp"
#include "covertqcd/bounds.hpp"
#include "covertqcd/scenario.hpp"

namespace covertqcd {

namespace detail {

inline double log_add_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    if (a < b) std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
}

}  // namespace detail

/// Posterior-odds state of the sequential test. Before any observation the
/// posterior odds of a change are exactly zero; that is represented by the
/// `empty` flag rather than log(0), so no -inf arithmetic is needed.
struct ShiryaevState {
    double log_odds = 0.0;  // ln Lambda_t, meaningful only when !empty
    std::int64_t t = 0;     // number of observations folded in
    bool stopped = false;
    bool empty = true;

    /// Posterior probability of the change, Lambda/(1+Lambda).
    double belief() const {
        if (empty) return 0.0;
        if (log_odds > 0.0) return 1.0 / (1.0 + std::exp(-log_odds));
        double e = std::exp(log_odds);
        return e / (1.0 + e);
    }
};

/// One step of the posterior-odds recursion
///   Lambda_{t+1} = (exp(L) Lambda_t + rho) / (1 - rho),   L = x * l(y),
/// carried in the log domain. The first observation contributes no change
/// evidence: Lambda_1 = rho/(1-rho) regardless of (x, y).
inline ShiryaevState shiryaev_update(const ShiryaevState& state, int x,
                                     std::size_t y, const Prior& prior,
                                     const ChannelSpec& channel) {
    if (state.stopped)
        throw std::logic_error("shiryaev_update: state already stopped");
    if (y >= channel.y_size())
        throw std::invalid_argument("shiryaev_update: invalid symbol index");
    const double L = channel.modulated_llr(x, y);
    ShiryaevState next;
    next.t = state.t + 1;
    next.stopped = false;
    next.empty = false;
    if (state.empty) {
        next.log_odds = prior.ln_rho + prior.d;  // ln(rho/(1-rho))
    } else {
        next.log_odds =
            detail::log_add_exp(L + state.log_odds, prior.ln_rho) + prior.d;
    }
    return next;
}

/// Threshold test: true iff ln Lambda >= b_alpha (boundary inclusive).
inline bool shiryaev_should_stop(const ShiryaevState& state, double b_alpha) {
    return !state.empty && state.log_odds >= b_alpha;
}

/// Budgeted sensing probability beta*_alpha = min(1, beta~_alpha), where
/// beta~ equates the closed-form budget bound to delta. Requires
/// alpha < min(1/2, 1-rho); returns 0 when delta = 0.
inline double proposed_sensing_rate(const Scenario& s) {
    return std::min(1.0, unconstrained_sensing_rate(s));
}

/// A causal policy: the innocent fixed-stop baseline, the constant-sensing
/// probability posterior-threshold rule, or a solved belief-grid policy.
struct Policy {
    enum class Kind { innocent, constant_beta, dp };

    Kind kind = Kind::innocent;
    std::int64_t stop_at = 1;                 // innocent
    double beta = 0.0;                        // constant_beta
    const BeliefGridPolicy* grid = nullptr;   // dp, not owned

    static Policy innocent(std::int64_t stop_at) {
        if (stop_at < 1) throw std::invalid_argument("Policy: stop_at must be >= 1");
        Policy p;
        p.kind = Kind::innocent;
        p.stop_at = stop_at;
        return p;
    }

    // beta = 0 is the degenerate budget case; the rule then stops on prior
    // drift alone.
    static Policy constant_beta(double beta) {
        if (!(beta >= 0.0 && beta <= 1.0))
            throw std::invalid_argument("Policy: beta outside [0,1]");
        Policy p;
        p.kind = Kind::constant_beta;
        p.beta = beta;
        return p;
    }

    static Policy dp(const BeliefGridPolicy* grid) {
        if (grid == nullptr) throw std::invalid_argument("Policy: null grid");
        Policy p;
        p.kind = Kind::dp;
        p.grid = grid;
        return p;
    }
};

/// Sensing probability the policy would use at the current state.
inline double sensing_probability(const Policy& policy, const ShiryaevState& state) {
    if (state.stopped) return 0.0;
    switch (policy.kind) {
        case Policy::Kind::innocent: return 0.0;
        case Policy::Kind::constant_beta: return policy.beta;
        case Policy::Kind::dp: return policy.grid->beta_at(state.belief());
    }
    return 0.0;
}

/// Draw the probing action; always 0 for the innocent policy and after
/// stopping.
inline int act(const Policy& policy, const ShiryaevState& state, Rng& rng) {
    double b = sensing_probability(policy, state);
    return rng.bernoulli(b) ? 1 : 0;
}

/// Threshold test of the sequential rules on the current posterior. The rule
/// stops at the index of the observation whose update crosses; before any
/// observation the posterior is empty and never crosses.
inline bool posterior_crossed(const Policy& policy, const ShiryaevState& state,
                              const Scenario& s) {
    switch (policy.kind) {
        case Policy::Kind::innocent: return false;
        case Policy::Kind::constant_beta:
            return shiryaev_should_stop(state, s.b_alpha);
        case Policy::Kind::dp: return policy.grid->should_stop(state.belief());
    }
    return false;
}

/// The stop decision evaluated on the state available before acting at time
/// t; identically 0 at t = 1 for the threshold rules, which never stop
/// without data.
inline bool policy_should_stop(const Policy& policy, const ShiryaevState& state,
                               std::int64_t t, const Scenario& s) {
    if (policy.kind == Policy::Kind::innocent) return t >= policy.stop_at;
    return posterior_crossed(policy, state, s);
}

}  // namespace covertqcd
