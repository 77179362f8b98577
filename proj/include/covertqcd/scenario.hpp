#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "covertqcd/channel.hpp"
#include "covertqcd/prior.hpp"

namespace covertqcd {

/// A complete experiment instance: channel, prior, covertness budget delta,
/// false-alarm target alpha, and the constants derived from them.
struct Scenario {
    ChannelSpec channel;
    Prior prior;
    double delta;         // covertness budget, >= 0
    double alpha;         // PFA target, in ]0, 1/2[
    double abs_ln_alpha;  // |ln alpha|; the experiment grids are integer here
    std::int64_t n_alpha; // ceil(|ln alpha| / d), the innocent stopping epoch
    double b_alpha;       // ln((1-alpha)/alpha), posterior-odds threshold
};

/// Build a scenario from |ln alpha| directly. Grid points are exact integers
/// in |ln alpha|, so this is the primary constructor; alpha is derived.
inline Scenario make_scenario(ChannelSpec channel, Prior prior, double delta,
                              double abs_ln_alpha) {
    if (!(delta >= 0.0))
        throw std::invalid_argument("make_scenario: delta must be >= 0");
    // alpha < 1/2 iff |ln alpha| > ln 2; alpha itself may underflow to 0 on
    // very deep grids, which only the Monte-Carlo side would ever notice.
    if (!(abs_ln_alpha > std::log(2.0)) || !std::isfinite(abs_ln_alpha))
        throw std::invalid_argument("make_scenario: alpha must lie in ]0, 1/2[");
    double alpha = std::exp(-abs_ln_alpha);
    Scenario s{std::move(channel), prior, delta, alpha, abs_ln_alpha, 0, 0.0};
    s.n_alpha = static_cast<std::int64_t>(std::ceil(abs_ln_alpha / prior.d));
    if (s.n_alpha < 1) s.n_alpha = 1;
    // b_alpha = |ln alpha| - |ln(1-alpha)|
    s.b_alpha = abs_ln_alpha + std::log1p(-alpha);
    return s;
}

inline Scenario make_scenario_from_alpha(ChannelSpec channel, Prior prior,
                                         double delta, double alpha) {
    if (!(alpha > 0.0 && alpha < 0.5))
        throw std::invalid_argument(
            "make_scenario_from_alpha: alpha must lie in ]0, 1/2[");
    return make_scenario(std::move(channel), prior, delta, -std::log(alpha));
}

/// Same channel/prior/budget at a different grid point.
inline Scenario with_log_alpha(const Scenario& s, double abs_ln_alpha) {
    return make_scenario(s.channel, s.prior, s.delta, abs_ln_alpha);
}

}  // namespace covertqcd
