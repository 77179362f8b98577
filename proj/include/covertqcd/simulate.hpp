#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "covertqcd/policy.hpp"
#include "covertqcd/scenario.hpp"

namespace covertqcd {

inline constexpr std::int64_t kDefaultTmax = 1'000'000;

/// One simulated run of a policy against a sampled changepoint.
struct PolicyTrace {
    std::int64_t gamma = 0;       // changepoint
    std::int64_t tau = 0;         // stopping time
    std::int64_t delay = 0;       // (tau - gamma)^+
    bool false_alarm = false;     // tau < gamma
    double ecb_cost = 0.0;        // sum_{i<=tau} chi2_{theta_i} beta_i^2
    std::int64_t actions_taken = 0;  // count of active probes
    bool capped = false;          // hit t_max without stopping
};

/// Aggregate Monte-Carlo estimates with standard errors. All statistical
/// fields are bit-identical across runs with the same inputs; wall_time_s is
/// the only nondeterministic field.
struct McSummary {
    std::int64_t n_runs = 0;
    double add_mean = 0.0, add_stderr = 0.0;
    double pfa_mean = 0.0, pfa_stderr = 0.0;
    double ecb_mean = 0.0, ecb_stderr = 0.0;
    double tau_mean = 0.0;            // E[tau]
    double min_tau_gamma_mean = 0.0;  // E[min(tau, Gamma)]
    double actions_mean = 0.0;
    std::int64_t n_capped = 0;        // runs excluded from the means
    std::uint64_t seed = 0;
    double wall_time_s = 0.0;
};

/// Simulate one run. Protocol per step t = 1, 2, ...: the fixed-epoch rule
/// exits at its epoch before acting; otherwise accrue the covertness cost,
/// draw the probing action and the channel output pair, fold (x, y) into the
/// posterior, and stop at the index of the observation whose update crosses
/// the threshold. The cost sum therefore runs over steps 1..tau inclusive,
/// every one of them at the sensing probability actually in force.
inline PolicyTrace run_one(const Scenario& s, const Policy& policy, Rng& rng,
                           std::int64_t t_max = kDefaultTmax,
                           std::optional<std::int64_t> fixed_gamma = {}) {
    PolicyTrace trace;
    trace.gamma = fixed_gamma ? *fixed_gamma : sample_changepoint(s.prior, rng);
    if (trace.gamma < 1)
        throw std::invalid_argument("run_one: changepoint must be >= 1");

    ShiryaevState state;
    // The fixed-epoch innocent rule never consults the posterior, so its runs
    // skip the odds update.
    const bool track_posterior = policy.kind != Policy::Kind::innocent;

    for (std::int64_t t = 1; t <= t_max; ++t) {
        if (policy.kind == Policy::Kind::innocent && t >= policy.stop_at) {
            trace.tau = t;
            trace.delay = std::max<std::int64_t>(trace.tau - trace.gamma, 0);
            trace.false_alarm = trace.tau < trace.gamma;
            return trace;
        }
        const int theta = t > trace.gamma ? 1 : 0;
        const double beta_t = sensing_probability(policy, state);
        trace.ecb_cost += s.channel.chi2(theta) * beta_t * beta_t;
        const int x = act(policy, state, rng);
        auto [y, z] = s.channel.sample_observation(x, theta, rng);
        (void)z;  // Eve's output does not enter Alice's trace
        trace.actions_taken += x;
        if (track_posterior) {
            state = shiryaev_update(state, x, y, s.prior, s.channel);
            if (posterior_crossed(policy, state, s)) {
                trace.tau = t;
                trace.delay = std::max<std::int64_t>(trace.tau - trace.gamma, 0);
                trace.false_alarm = trace.tau < trace.gamma;
                return trace;
            }
        } else {
            state.t = t;
        }
    }

    trace.capped = true;
    trace.tau = t_max;
    trace.delay = std::max<std::int64_t>(trace.tau - trace.gamma, 0);
    trace.false_alarm = false;
    return trace;
}

struct SimOptions {
    std::int64_t t_max = kDefaultTmax;
    int n_threads = 0;  // 0: COVERT_QCD_THREADS env var, else hardware
    std::optional<std::int64_t> fixed_gamma;  // conditional per-k diagnostics
};

namespace detail {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("COVERT_QCD_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

struct BlockSums {
    double delay = 0, delay_sq = 0;
    double fa = 0;
    double ecb = 0, ecb_sq = 0;
    double tau = 0, min_tau_gamma = 0, actions = 0;
    std::int64_t n = 0, capped = 0;
};

struct Kahan {
    double sum = 0.0, c = 0.0;
    void add(double v) {
        double y = v - c;
        double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

}  // namespace detail

/// Estimate ADD/PFA/ECB over n_runs independent replications. Replication i
/// always uses substream (seed, i), and block partials are reduced in index
/// order, so the summary does not depend on thread scheduling. Capped runs
/// are counted in n_capped and excluded from the means.
inline McSummary estimate(const Scenario& s, const Policy& policy,
                          std::int64_t n_runs, std::uint64_t seed,
                          const SimOptions& opts = {}) {
    if (n_runs < 1) throw std::invalid_argument("estimate: n_runs must be >= 1");
    const auto t0 = std::chrono::steady_clock::now();

    const std::int64_t block_size = 2048;
    const std::int64_t n_blocks = (n_runs + block_size - 1) / block_size;
    std::vector<detail::BlockSums> blocks(static_cast<std::size_t>(n_blocks));

    const int n_threads =
        static_cast<int>(std::min<std::int64_t>(detail::resolve_threads(opts.n_threads), n_blocks));
    std::atomic<std::int64_t> next_block{0};

    auto worker = [&]() {
        for (;;) {
            std::int64_t b = next_block.fetch_add(1);
            if (b >= n_blocks) return;
            detail::BlockSums bs;
            const std::int64_t lo = b * block_size;
            const std::int64_t hi = std::min(n_runs, lo + block_size);
            for (std::int64_t i = lo; i < hi; ++i) {
                Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
                PolicyTrace tr = run_one(s, policy, rng, opts.t_max, opts.fixed_gamma);
                if (tr.capped) {
                    ++bs.capped;
                    continue;
                }
                ++bs.n;
                const double delay = static_cast<double>(tr.delay);
                bs.delay += delay;
                bs.delay_sq += delay * delay;
                bs.fa += tr.false_alarm ? 1.0 : 0.0;
                bs.ecb += tr.ecb_cost;
                bs.ecb_sq += tr.ecb_cost * tr.ecb_cost;
                bs.tau += static_cast<double>(tr.tau);
                bs.min_tau_gamma += static_cast<double>(std::min(tr.tau, tr.gamma));
                bs.actions += static_cast<double>(tr.actions_taken);
            }
            blocks[static_cast<std::size_t>(b)] = bs;
        }
    };

    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // Ordered compensated reduction: identical result for any thread count.
    detail::Kahan delay, delay_sq, fa, ecb, ecb_sq, tau, min_tg, actions;
    std::int64_t n = 0, capped = 0;
    for (const auto& bs : blocks) {
        delay.add(bs.delay);
        delay_sq.add(bs.delay_sq);
        fa.add(bs.fa);
        ecb.add(bs.ecb);
        ecb_sq.add(bs.ecb_sq);
        tau.add(bs.tau);
        min_tg.add(bs.min_tau_gamma);
        actions.add(bs.actions);
        n += bs.n;
        capped += bs.capped;
    }

    McSummary out;
    out.n_runs = n_runs;
    out.n_capped = capped;
    out.seed = seed;
    if (n > 0) {
        const double dn = static_cast<double>(n);
        auto stderr_of = [&](double sum, double sum_sq) {
            if (n < 2) return 0.0;
            double mean = sum / dn;
            double var = (sum_sq - dn * mean * mean) / (dn - 1.0);
            return std::sqrt(std::max(var, 0.0) / dn);
        };
        out.add_mean = delay.sum / dn;
        out.add_stderr = stderr_of(delay.sum, delay_sq.sum);
        out.pfa_mean = fa.sum / dn;
        out.pfa_stderr = stderr_of(fa.sum, fa.sum);  // indicator: x^2 = x
        out.ecb_mean = ecb.sum / dn;
        out.ecb_stderr = stderr_of(ecb.sum, ecb_sq.sum);
        out.tau_mean = tau.sum / dn;
        out.min_tau_gamma_mean = min_tg.sum / dn;
        out.actions_mean = actions.sum / dn;
    }
    out.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace covertqcd
