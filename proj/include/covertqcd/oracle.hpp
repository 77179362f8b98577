#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "covertqcd/pmf.hpp"
#include "covertqcd/policy.hpp"
#include "covertqcd/scenario.hpp"

namespace covertqcd {

inline constexpr int kMaxOracleHorizon = 8;
// Upper limit on (|X||Y||Z|)^N * (N+1) leaf visits.
inline constexpr double kMaxOracleWork = 3.0e8;

/// Exact adversary-side distributions on a truncated observation window.
struct TruncatedDistributions {
    int horizon = 0;
    Pmf p_active;    // law of Z^N under the active policy
    Pmf p_innocent;  // law of Z^N under the never-probe policy
    double true_kl = 0.0;
    double ecb_truncated = 0.0;  // E[sum_{i<=min(tau,N)} chi2_{theta_i} beta_i^2]

    TruncatedDistributions() : p_active({1.0}), p_innocent({1.0}) {}
};

/// Conditional-on-changepoint diagnostics. k = horizon+1 encodes the lumped
/// tail state {Gamma > horizon}, under which the whole window is pre-change.
struct ChangepointSlice {
    std::int64_t k = 0;
    double weight = 0.0;          // pi_k, or the tail mass for the lump
    std::vector<double> eve_pmf;  // exact law of Z^N given Gamma = k
    double kl = 0.0;              // conditional relative entropy vs innocent
    double ecb = 0.0;             // conditional truncated budget
};

namespace detail {

/// Per-cell compensated accumulation over enumeration paths.
struct KahanVector {
    std::vector<double> sum, c;
    explicit KahanVector(std::size_t n) : sum(n, 0.0), c(n, 0.0) {}
    void add(std::size_t i, double v) {
        double y = v - c[i];
        double t = sum[i] + y;
        c[i] = (t - sum[i]) - y;
        sum[i] = t;
    }
};

struct OracleContext {
    const Scenario* s = nullptr;
    const Policy* policy = nullptr;
    int horizon = 0;
    std::int64_t k = 0;  // changepoint; theta_t = (t > k)
};

inline void check_oracle_policy(const Policy& policy) {
    if (policy.kind == Policy::Kind::dp)
        throw std::invalid_argument(
            "oracle: only the innocent and constant-beta policies enumerate "
            "deterministically");
}

inline void check_feasible(const Scenario& s, int horizon) {
    if (horizon < 1 || horizon > kMaxOracleHorizon)
        throw std::invalid_argument("oracle: horizon must lie in [1," +
                                    std::to_string(kMaxOracleHorizon) + "]");
    double work = static_cast<double>(horizon + 1);
    double per_step =
        2.0 * static_cast<double>(s.channel.y_size() * s.channel.z_size());
    for (int t = 0; t < horizon; ++t) work *= per_step;
    if (work > kMaxOracleWork)
        throw std::invalid_argument("oracle: enumeration size infeasible");
}

/// Walk all (x, y, z) paths for a fixed changepoint, accumulating the exact
/// probability of every z^N cell. Once the rule has stopped the action is 0
/// and future y's never influence anything, so y is marginalized out.
inline void walk_eve(const OracleContext& ctx, int t, const ShiryaevState& state,
                     bool stopped, double weight, std::size_t z_prefix,
                     KahanVector& acc) {
    if (t > ctx.horizon) {
        acc.add(z_prefix, weight);
        return;
    }
    const ChannelSpec& ch = ctx.s->channel;
    const std::size_t nz = ch.z_size();
    const int theta = t > ctx.k ? 1 : 0;

    bool stopped_now = stopped;
    if (!stopped_now && ctx.policy->kind == Policy::Kind::constant_beta)
        stopped_now = shiryaev_should_stop(state, ctx.s->b_alpha);
    if (!stopped_now && ctx.policy->kind == Policy::Kind::innocent)
        stopped_now = t >= ctx.policy->stop_at;

    const double beta =
        (!stopped_now && ctx.policy->kind == Policy::Kind::constant_beta)
            ? ctx.policy->beta
            : 0.0;

    if (beta == 0.0) {
        // Pure innocent step: z ~ Q^0_theta, posterior moves by prior drift
        // only (and is irrelevant once stopped).
        ShiryaevState next = state;
        if (!stopped_now)
            next = shiryaev_update(state, 0, 0, ctx.s->prior, ch);  // L = 0 for any y
        const Pmf& q0 = ch.eve_marginal(0, theta);
        for (std::size_t z = 0; z < nz; ++z) {
            double w = weight * q0[z];
            if (w == 0.0) continue;
            walk_eve(ctx, t + 1, next, stopped_now, w, z_prefix * nz + z, acc);
        }
        return;
    }

    for (int x = 0; x < 2; ++x) {
        const double px = x ? beta : 1.0 - beta;
        if (px == 0.0) continue;
        const JointTable& slice = ch.joint(x, theta);
        for (std::size_t y = 0; y < ch.y_size(); ++y) {
            for (std::size_t z = 0; z < nz; ++z) {
                double w = weight * px * slice.at(y, z);
                if (w == 0.0) continue;
                ShiryaevState next =
                    shiryaev_update(state, x, y, ctx.s->prior, ch);
                walk_eve(ctx, t + 1, next, false, w, z_prefix * nz + z, acc);
            }
        }
    }
}

/// Conditional truncated budget E_k[sum_{i=1}^{min(tau,N)} chi2 beta_i^2],
/// walking (x, y) paths only. Exactly the steps at which the rule is still
/// running are charged; these are the steps whose probing the divergence
/// chain pays for.
inline double walk_ecb(const OracleContext& ctx, int t, const ShiryaevState& state,
                       double weight) {
    if (t > ctx.horizon) return 0.0;
    const ChannelSpec& ch = ctx.s->channel;
    const int theta = t > ctx.k ? 1 : 0;

    if (ctx.policy->kind == Policy::Kind::innocent) return 0.0;  // beta = 0 throughout
    if (shiryaev_should_stop(state, ctx.s->b_alpha)) return 0.0;  // tau < t

    const double beta = ctx.policy->beta;
    double cost = weight * ch.chi2(theta) * beta * beta;

    for (int x = 0; x < 2; ++x) {
        const double px = x ? beta : 1.0 - beta;
        if (px == 0.0) continue;
        const Pmf& py = ch.alice_marginal(x, theta);
        for (std::size_t y = 0; y < ch.y_size(); ++y) {
            double w = weight * px * py[y];
            if (w == 0.0) continue;
            ShiryaevState next = shiryaev_update(state, x, y, ctx.s->prior, ch);
            cost += walk_ecb(ctx, t + 1, next, w);
        }
    }
    return cost;
}

/// Innocent law of Z^N given Gamma = k: a product of Q^0 marginals.
inline std::vector<double> innocent_slice(const Scenario& s, int horizon,
                                          std::int64_t k) {
    const ChannelSpec& ch = s.channel;
    const std::size_t nz = ch.z_size();
    std::vector<double> pmf{1.0};
    for (int t = 1; t <= horizon; ++t) {
        const Pmf& q0 = ch.eve_marginal(0, t > k ? 1 : 0);
        std::vector<double> next(pmf.size() * nz);
        for (std::size_t i = 0; i < pmf.size(); ++i)
            for (std::size_t z = 0; z < nz; ++z) next[i * nz + z] = pmf[i] * q0[z];
        pmf = std::move(next);
    }
    return pmf;
}

inline double kl_raw(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            if (q[i] == 0.0)
                throw std::logic_error("oracle: active law not absolutely "
                                       "continuous w.r.t. innocent law");
            s += p[i] * std::log(p[i] / q[i]);
        }
    }
    return s;
}

}  // namespace detail

/// Exact per-changepoint decomposition: the conditional Eve laws, conditional
/// relative entropies against the innocent laws, and conditional truncated
/// budgets, for k = 1..N plus the lumped tail {Gamma > N}. Slices are
/// independent, so workers enumerate disjoint changepoints concurrently and
/// the results are merged by slice index.
inline std::vector<ChangepointSlice> per_changepoint_slices(const Scenario& s,
                                                            const Policy& policy,
                                                            int horizon) {
    detail::check_oracle_policy(policy);
    detail::check_feasible(s, horizon);
    const std::size_t n_cells = [&] {
        std::size_t n = 1;
        for (int t = 0; t < horizon; ++t) n *= s.channel.z_size();
        return n;
    }();

    const std::size_t n_slices = static_cast<std::size_t>(horizon) + 1;
    std::vector<ChangepointSlice> slices(n_slices);

    auto fill_slice = [&](std::size_t idx) {
        const std::int64_t k = static_cast<std::int64_t>(idx) + 1;
        ChangepointSlice& slice = slices[idx];
        slice.k = k;
        // theta_t = (t > k) makes every k >= horizon identical on the window,
        // so the lump at k = horizon+1 carries the whole tail mass exactly.
        slice.weight = k <= horizon ? s.prior.pmf(k) : s.prior.tail(horizon);

        detail::OracleContext ctx{&s, &policy, horizon, k};
        detail::KahanVector acc(n_cells);
        detail::walk_eve(ctx, 1, ShiryaevState{}, false, 1.0, 0, acc);
        slice.eve_pmf = std::move(acc.sum);

        double mass = 0.0;
        for (double v : slice.eve_pmf) mass += v;
        if (std::abs(mass - 1.0) > 1e-10)
            throw std::logic_error(
                "oracle: conditional law mass off by more than 1e-10");

        slice.kl =
            detail::kl_raw(slice.eve_pmf, detail::innocent_slice(s, horizon, k));
        slice.ecb = detail::walk_ecb(ctx, 1, ShiryaevState{}, 1.0);
    };

    unsigned hw = std::thread::hardware_concurrency();
    if (hw >= 2 && n_slices >= 4) {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        auto worker = [&] {
            try {
                for (;;) {
                    std::size_t idx = next.fetch_add(1);
                    if (idx >= n_slices) return;
                    fill_slice(idx);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < std::min<std::size_t>(hw, n_slices); ++i)
            pool.emplace_back(worker);
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    } else {
        for (std::size_t idx = 0; idx < n_slices; ++idx) fill_slice(idx);
    }
    return slices;
}

/// Exact marginal of Z^N under the overall changepoint prior.
inline Pmf enumerate_eve_distribution(const Scenario& s, const Policy& policy,
                                      int horizon) {
    auto slices = per_changepoint_slices(s, policy, horizon);
    std::vector<double> pmf(slices.front().eve_pmf.size(), 0.0);
    for (const auto& slice : slices)
        for (std::size_t i = 0; i < pmf.size(); ++i)
            pmf[i] += slice.weight * slice.eve_pmf[i];
    return Pmf(std::move(pmf), 1e-10);
}

/// Compare the true truncated relative entropy at Eve against the truncated
/// accumulated-budget surrogate, both computed exactly on the same
/// enumeration. The surrogate must dominate.
inline TruncatedDistributions truncated_kl_vs_ecb(const Scenario& s,
                                                  const Policy& policy,
                                                  int horizon) {
    auto slices = per_changepoint_slices(s, policy, horizon);
    const std::size_t n_cells = slices.front().eve_pmf.size();

    std::vector<double> active(n_cells, 0.0), innocent(n_cells, 0.0);
    double ecb = 0.0;
    for (const auto& slice : slices) {
        auto inn = detail::innocent_slice(s, horizon, slice.k);
        for (std::size_t i = 0; i < n_cells; ++i) {
            active[i] += slice.weight * slice.eve_pmf[i];
            innocent[i] += slice.weight * inn[i];
        }
        ecb += slice.weight * slice.ecb;
    }

    TruncatedDistributions out;
    out.horizon = horizon;
    out.true_kl = detail::kl_raw(active, innocent);
    out.ecb_truncated = ecb;
    out.p_active = Pmf(std::move(active), 1e-10);
    out.p_innocent = Pmf(std::move(innocent), 1e-10);
    if (out.true_kl > out.ecb_truncated + 1e-9)
        throw std::logic_error(
            "oracle: truncated relative entropy exceeds the budget surrogate");
    return out;
}

}  // namespace covertqcd
