#pragma once

#include <cmath>
#include <vector>

#include "covertqcd/rng.hpp"
#include "covertqcd/scenario.hpp"

namespace covertqcd::test {

// The binary reference channel used throughout: Alice sees Ber(0.2)/Ber(0.8)
// under active probing, Ber(0.5) regardless of state under innocent actions;
// Eve sees Ber(0.6) vs Ber(0.4) pre-change and Ber(0.7) vs Ber(0.3)
// post-change.
inline ChannelSpec reference_channel() {
    return make_product_channel(
        /*p00=*/Pmf::bernoulli(0.5), /*p01=*/Pmf::bernoulli(0.5),
        /*p10=*/Pmf::bernoulli(0.2), /*p11=*/Pmf::bernoulli(0.8),
        /*q00=*/Pmf::bernoulli(0.4), /*q01=*/Pmf::bernoulli(0.3),
        /*q10=*/Pmf::bernoulli(0.6), /*q11=*/Pmf::bernoulli(0.7));
}

inline Prior reference_prior() { return Prior(1.0 / 20.0); }

inline constexpr double kReferenceDelta = 1.0 / 24.0;

inline Scenario reference_scenario(double abs_ln_alpha) {
    return make_scenario(reference_channel(), reference_prior(),
                         kReferenceDelta, abs_ln_alpha);
}

// Random PMF with strictly positive entries.
inline Pmf random_pmf(std::size_t n, Rng& rng, double floor = 1e-3) {
    std::vector<double> m(n);
    double sum = 0.0;
    for (auto& v : m) {
        v = floor + rng.next_double();
        sum += v;
    }
    for (auto& v : m) v /= sum;
    return Pmf(std::move(m));
}

}  // namespace covertqcd::test
