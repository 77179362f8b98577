#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace covertqcd {

// Normalization slack accepted when constructing a Pmf; anything closer than
// this to 1 is silently renormalized so long products of floating-point
// updates stay stable.
inline constexpr double kPmfNormTol = 1e-12;

/// Finite probability mass function over symbols {0, ..., size-1}.
class Pmf {
public:
    explicit Pmf(std::vector<double> mass, double norm_tol = kPmfNormTol)
        : mass_(std::move(mass)) {
        if (mass_.empty())
            throw std::invalid_argument("Pmf: empty support");
        double sum = 0.0;
        for (double m : mass_) {
            if (!(m >= 0.0))
                throw std::invalid_argument("Pmf: negative or NaN mass entry");
            sum += m;
        }
        if (std::abs(sum - 1.0) > norm_tol)
            throw std::invalid_argument(
                "Pmf: mass sums to " + std::to_string(sum) + ", not 1 within tolerance");
        for (double& m : mass_) m /= sum;
    }

    /// Bernoulli over {0,1} with P{X=1} = p1.
    static Pmf bernoulli(double p1) {
        if (!(p1 >= 0.0 && p1 <= 1.0))
            throw std::invalid_argument("Pmf::bernoulli: p outside [0,1]");
        return Pmf({1.0 - p1, p1});
    }

    std::size_t size() const { return mass_.size(); }
    double operator[](std::size_t i) const { return mass_[i]; }
    const std::vector<double>& mass() const { return mass_; }

    bool operator==(const Pmf& other) const { return mass_ == other.mass_; }

private:
    std::vector<double> mass_;
};

/// The three divergence functionals of a distribution pair, in nats.
struct DivergencePair {
    double kl = 0.0;             // D(P||Q)
    double second_moment = 0.0;  // E_P[(ln P/Q)^2]
    double chi2 = 0.0;           // sum (P-Q)^2 / Q
};

namespace detail {

inline void check_pair(const Pmf& p, const Pmf& q, const char* fn) {
    if (p.size() != q.size())
        throw std::invalid_argument(std::string(fn) + ": support size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0 && q[i] == 0.0)
            throw std::invalid_argument(
                std::string(fn) + ": absolute continuity violated at symbol " +
                std::to_string(i));
    }
}

}  // namespace detail

/// Relative entropy sum_i p_i ln(p_i/q_i), with 0 ln 0 := 0.
inline double kl_divergence(const Pmf& p, const Pmf& q) {
    detail::check_pair(p, q, "kl_divergence");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
    }
    return s;
}

/// Uncentered second moment of the log-likelihood ratio under p.
inline double llr_second_moment(const Pmf& p, const Pmf& q) {
    detail::check_pair(p, q, "llr_second_moment");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            double l = std::log(p[i] / q[i]);
            s += p[i] * l * l;
        }
    }
    return s;
}

/// chi-squared divergence sum_i (p_i - q_i)^2 / q_i.
inline double chi2_divergence(const Pmf& p, const Pmf& q) {
    detail::check_pair(p, q, "chi2_divergence");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double d = p[i] - q[i];
        if (d != 0.0) s += d * d / q[i];
    }
    return s;
}

inline DivergencePair divergence_pair(const Pmf& p, const Pmf& q) {
    return DivergencePair{kl_divergence(p, q), llr_second_moment(p, q),
                          chi2_divergence(p, q)};
}

}  // namespace covertqcd
