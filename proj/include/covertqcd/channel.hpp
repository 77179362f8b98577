#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "covertqcd/pmf.hpp"
#include "covertqcd/rng.hpp"

namespace covertqcd {

// Exact enumeration downstream needs small alphabets; anything the reference
// scenarios use is binary.
inline constexpr std::size_t kMaxAlphabet = 16;

/// One slice W(y,z | x,theta) of the joint channel: |Y| x |Z| probabilities.
struct JointTable {
    std::size_t ny = 0;
    std::size_t nz = 0;
    std::vector<double> w;  // row-major, w[y*nz + z]

    JointTable() = default;
    JointTable(std::size_t ny_, std::size_t nz_, std::vector<double> w_)
        : ny(ny_), nz(nz_), w(std::move(w_)) {
        if (w.size() != ny * nz)
            throw std::invalid_argument("JointTable: size mismatch");
    }

    double at(std::size_t y, std::size_t z) const { return w[y * nz + z]; }
    double& at(std::size_t y, std::size_t z) { return w[y * nz + z]; }
};

/// Input to build_channel: the four joint slices indexed by (x, theta).
struct ChannelTables {
    // joint[x][theta]
    std::array<std::array<JointTable, 2>, 2> joint;
};

/// Build a product slice P(y) * Q(z), the uncorrelated special case.
inline JointTable product_slice(const Pmf& py, const Pmf& qz) {
    JointTable t;
    t.ny = py.size();
    t.nz = qz.size();
    t.w.resize(t.ny * t.nz);
    for (std::size_t y = 0; y < t.ny; ++y)
        for (std::size_t z = 0; z < t.nz; ++z) t.w[y * t.nz + z] = py[y] * qz[z];
    return t;
}

/// The memoryless channel with both parties' marginals and every divergence
/// constant derived from it. Immutable after construction; shareable across
/// threads.
class ChannelSpec {
public:
    std::size_t y_size() const { return ny_; }
    std::size_t z_size() const { return nz_; }

    const JointTable& joint(int x, int theta) const { return joint_[x][theta]; }
    /// Alice's marginal P^x_theta over Y.
    const Pmf& alice_marginal(int x, int theta) const { return alice_[x][theta]; }
    /// Eve's marginal Q^x_theta over Z.
    const Pmf& eve_marginal(int x, int theta) const { return eve_[x][theta]; }

    double kl() const { return d_; }              // D = D(P^1_1 || P^1_0)
    double llr_var() const { return v_; }         // V = E[(ln P^1_1/P^1_0)^2]
    double chi2_pre() const { return chi2_pre_; }   // chi2(Q^1_0 || Q^0_0)
    double chi2_post() const { return chi2_post_; } // chi2(Q^1_1 || Q^0_1)
    double chi2(int theta) const { return theta ? chi2_post_ : chi2_pre_; }

    /// Unmodulated LLR l(y) = ln(P^1_1(y) / P^1_0(y)); -inf where P^1_1(y)=0.
    double llr(std::size_t y) const { return llr_[y]; }

    /// Modulated LLR L(x,y) = x * l(y); identically zero under innocent actions.
    double modulated_llr(int x, std::size_t y) const { return x ? llr_[y] : 0.0; }

    /// Draw (y, z) jointly from the slice for action x in state theta.
    std::pair<std::size_t, std::size_t> sample_observation(int x, int theta,
                                                           Rng& rng) const {
        const std::vector<double>& cum = cum_[x][theta];
        double u = rng.next_double();
        std::size_t lo = 0, hi = cum.size() - 1;
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (u < cum[mid]) hi = mid; else lo = mid + 1;
        }
        return {lo / nz_, lo % nz_};
    }

    friend ChannelSpec build_channel(const ChannelTables& tables);

private:
    ChannelSpec() = default;

    std::size_t ny_ = 0, nz_ = 0;
    std::array<std::array<JointTable, 2>, 2> joint_;
    std::array<std::array<Pmf, 2>, 2> alice_{{{Pmf({1.0}), Pmf({1.0})},
                                              {Pmf({1.0}), Pmf({1.0})}}};
    std::array<std::array<Pmf, 2>, 2> eve_{{{Pmf({1.0}), Pmf({1.0})},
                                            {Pmf({1.0}), Pmf({1.0})}}};
    std::array<std::array<std::vector<double>, 2>, 2> cum_;  // per-slice CDF over (y,z)
    std::vector<double> llr_;
    double d_ = 0.0, v_ = 0.0, chi2_pre_ = 0.0, chi2_post_ = 0.0;
};

/// Validate the four joint tables and derive marginals and constants.
/// Rejects channels that break any modeling assumption, naming the violated
/// assumption in the diagnostic.
inline ChannelSpec build_channel(const ChannelTables& tables) {
    const std::size_t ny = tables.joint[0][0].ny;
    const std::size_t nz = tables.joint[0][0].nz;
    if (ny < 1 || nz < 1 || ny > kMaxAlphabet || nz > kMaxAlphabet)
        throw std::invalid_argument(
            "build_channel: alphabet sizes must lie in [1," +
            std::to_string(kMaxAlphabet) + "] to keep exact enumeration tractable");

    ChannelSpec c;
    c.ny_ = ny;
    c.nz_ = nz;

    for (int x = 0; x < 2; ++x) {
        for (int theta = 0; theta < 2; ++theta) {
            const JointTable& t = tables.joint[x][theta];
            if (t.ny != ny || t.nz != nz)
                throw std::invalid_argument("build_channel: slice shape mismatch");
            double sum = 0.0;
            for (double v : t.w) {
                if (!(v >= 0.0))
                    throw std::invalid_argument(
                        "build_channel: negative entry in joint slice");
                sum += v;
            }
            if (std::abs(sum - 1.0) > kPmfNormTol)
                throw std::invalid_argument(
                    "build_channel: joint slice (x=" + std::to_string(x) +
                    ",theta=" + std::to_string(theta) + ") sums to " +
                    std::to_string(sum) + ", not 1");
            c.joint_[x][theta] = t;
            for (double& v : c.joint_[x][theta].w) v /= sum;

            // Marginals are the row/column sums of the slice.
            std::vector<double> py(ny, 0.0), qz(nz, 0.0);
            for (std::size_t y = 0; y < ny; ++y)
                for (std::size_t z = 0; z < nz; ++z) {
                    double v = c.joint_[x][theta].at(y, z);
                    py[y] += v;
                    qz[z] += v;
                }
            c.alice_[x][theta] = Pmf(std::move(py), 1e-9);
            c.eve_[x][theta] = Pmf(std::move(qz), 1e-9);

            std::vector<double> cum(ny * nz);
            double acc = 0.0;
            for (std::size_t i = 0; i < ny * nz; ++i) {
                acc += c.joint_[x][theta].w[i];
                cum[i] = acc;
            }
            cum.back() = 1.0;
            c.cum_[x][theta] = std::move(cum);
        }
    }

    // "No free passive sensing": the innocent action must carry no change
    // information, P^0_1 = P^0_0.
    for (std::size_t y = 0; y < ny; ++y) {
        if (std::abs(c.alice_[0][1][y] - c.alice_[0][0][y]) > 1e-12)
            throw std::invalid_argument(
                "build_channel: 'no free passive sensing' violated, P^0_1 != P^0_0 at y=" +
                std::to_string(y));
    }

    // "Active sensing has non-zero but finite gain": 0 < D < inf, V < inf.
    bool probe_informative = false;
    for (std::size_t y = 0; y < ny; ++y)
        probe_informative |= std::abs(c.alice_[1][1][y] - c.alice_[1][0][y]) > 1e-12;
    if (!probe_informative)
        throw std::invalid_argument(
            "build_channel: 'active sensing has non-zero gain' violated, D = 0 "
            "(P^1_1 = P^1_0)");
    try {
        c.d_ = kl_divergence(c.alice_[1][1], c.alice_[1][0]);
        c.v_ = llr_second_moment(c.alice_[1][1], c.alice_[1][0]);
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument(
            "build_channel: P^1_1 not absolutely continuous w.r.t. P^1_0, "
            "active sensing gain would be infinite");
    }
    if (!std::isfinite(c.d_) || !std::isfinite(c.v_))
        throw std::invalid_argument("build_channel: D or V not finite");

    // Probes must be able to hide as noise (Q^1 << Q^0) yet remain detectable
    // in principle (Q^1 != Q^0), in both channel states.
    for (int theta = 0; theta < 2; ++theta) {
        bool distinct = false;
        for (std::size_t z = 0; z < nz; ++z)
            distinct |= std::abs(c.eve_[1][theta][z] - c.eve_[0][theta][z]) > 1e-12;
        if (!distinct)
            throw std::invalid_argument(
                "build_channel: degenerate covertness, Q^1_" + std::to_string(theta) +
                " = Q^0_" + std::to_string(theta) + " (chi2 = 0)");
        double chi2;
        try {
            chi2 = chi2_divergence(c.eve_[1][theta], c.eve_[0][theta]);
        } catch (const std::invalid_argument&) {
            throw std::invalid_argument(
                "build_channel: Q^1_" + std::to_string(theta) +
                " not absolutely continuous w.r.t. Q^0_" + std::to_string(theta));
        }
        (theta ? c.chi2_post_ : c.chi2_pre_) = chi2;
    }

    c.llr_.resize(ny);
    for (std::size_t y = 0; y < ny; ++y) {
        double p1 = c.alice_[1][1][y], p0 = c.alice_[1][0][y];
        c.llr_[y] = p1 > 0.0 ? std::log(p1 / p0)
                             : -std::numeric_limits<double>::infinity();
    }
    return c;
}

/// Convenience builder for channels whose (Y,Z) outputs are independent given
/// (x, theta).
inline ChannelSpec make_product_channel(const Pmf& p00, const Pmf& p01,
                                        const Pmf& p10, const Pmf& p11,
                                        const Pmf& q00, const Pmf& q01,
                                        const Pmf& q10, const Pmf& q11) {
    ChannelTables t;
    t.joint[0][0] = product_slice(p00, q00);
    t.joint[0][1] = product_slice(p01, q01);
    t.joint[1][0] = product_slice(p10, q10);
    t.joint[1][1] = product_slice(p11, q11);
    return build_channel(t);
}

}  // namespace covertqcd
