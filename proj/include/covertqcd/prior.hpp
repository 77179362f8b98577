#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "covertqcd/rng.hpp"

namespace covertqcd {

/// Geometric changepoint prior on {1, 2, ...}: P{Gamma = k} = rho(1-rho)^(k-1).
struct Prior {
    double rho;     // success parameter, in ]0,1[
    double d;       // |ln(1-rho)|, exponent of the tail
    double c_rho;   // ln((1-rho)/rho)
    double mean;    // 1/rho
    double ln_rho;  // cached for posterior updates

    explicit Prior(double rho_) : rho(rho_) {
        if (!(rho > 0.0 && rho < 1.0))
            throw std::invalid_argument("Prior: rho must lie in ]0,1[");
        d = -std::log1p(-rho);
        ln_rho = std::log(rho);
        c_rho = -ln_rho - d;  // ln((1-rho)/rho)
        mean = 1.0 / rho;
    }

    /// P{Gamma > n} = (1-rho)^n = exp(-d n).
    double tail(std::int64_t n) const { return std::exp(-d * static_cast<double>(n)); }

    /// P{Gamma = k}.
    double pmf(std::int64_t k) const {
        return k >= 1 ? rho * std::exp(-d * static_cast<double>(k - 1)) : 0.0;
    }
};

/// Draw a changepoint from the geometric prior, support {1, 2, ...}.
inline std::int64_t sample_changepoint(const Prior& prior, Rng& rng) {
    // Inverse transform on (0,1]: u=1 maps to k=1.
    double u = rng.next_double_open_low();
    double k = 1.0 + std::floor(std::log(u) / -prior.d);
    if (k < 1.0) k = 1.0;
    return static_cast<std::int64_t>(k);
}

}  // namespace covertqcd
