// Acceptance suite: one line per criterion, nonzero exit if any fails.
// Every tolerance is pinned in code next to the check it guards.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "covertqcd/bounds.hpp"
#include "covertqcd/dp.hpp"
#include "covertqcd/io.hpp"
#include "covertqcd/oracle.hpp"
#include "covertqcd/policy.hpp"
#include "covertqcd/simulate.hpp"

using namespace covertqcd;

namespace {

int g_failures = 0;

void criterion(int id, bool ok, const std::string& what) {
    std::printf("[%s] C%d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
    if (!ok) ++g_failures;
}

void note(const std::string& what) { std::printf("       %s\n", what.c_str()); }

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

struct GridPoint {
    Scenario s;
    double beta_star;
    McSummary mc;
};

}  // namespace

int main() {
    const std::string config_path =
        std::string(COVERTQCD_SOURCE_DIR) + "/scenarios/paper_scenario.json";
    ExperimentConfig cfg = load_config(config_path);
    const ChannelSpec& ch = cfg.channel;
    const Prior prior(cfg.rho);

    // ---- C1: divergence constants ------------------------------------------
    {
        bool ok = std::abs(ch.kl() - 0.831776617) <= 1e-9 &&
                  std::abs(ch.llr_var() - 1.921812056) <= 1e-9 &&
                  std::abs(ch.chi2_post() - 16.0 / 21.0) <= 1e-12 &&
                  std::abs(ch.chi2_pre() - 1.0 / 6.0) <= 1e-12;
        criterion(1, ok,
                  fmt("divergence constants D=%.9f V=%.9f chi2=(%.12f, %.12f)",
                      ch.kl(), ch.llr_var(), ch.chi2_post(), ch.chi2_pre()));
    }

    // ---- C2: posterior recursion vs mixture sum form -----------------------
    {
        Scenario s = cfg.scenario_at(6.0);
        Rng rng(0xACCE5501);
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            double beta = rng.next_double();
            std::size_t len = 1 + rng.next_u64() % 50;
            ShiryaevState st;
            std::vector<std::pair<int, std::size_t>> trace;
            for (std::size_t t = 0; t < len; ++t) {
                int x = rng.bernoulli(beta) ? 1 : 0;
                auto [y, z] =
                    s.channel.sample_observation(x, rng.bernoulli(0.5) ? 1 : 0, rng);
                trace.emplace_back(x, y);
                st = shiryaev_update(st, x, y, s.prior, s.channel);
            }
            std::vector<double> suffix(len + 1, 0.0);
            for (std::size_t m = len; m-- > 0;)
                suffix[m] = suffix[m + 1] +
                            s.channel.modulated_llr(trace[m].first, trace[m].second);
            double lse = -std::numeric_limits<double>::infinity();
            for (std::size_t m = 1; m <= len; ++m)
                lse = detail::log_add_exp(
                    lse,
                    std::log(s.prior.pmf(static_cast<std::int64_t>(m))) + suffix[m]);
            double ref =
                lse - std::log(s.prior.tail(static_cast<std::int64_t>(len)));
            worst = std::max(worst,
                             std::abs(st.log_odds - ref) / (1.0 + std::abs(ref)));
        }
        criterion(2, worst <= 1e-9,
                  fmt("recursion vs sum form, 1000 traces, worst rel err %.2e "
                      "(tol 1e-9)",
                      worst));
    }

    // ---- C3: exact covertness chain ----------------------------------------
    {
        Scenario s = cfg.scenario_at(1.0);  // low threshold so stopping engages
        bool ok = true;
        double min_margin = 1e300;
        for (double beta : {0.1, 0.5, 1.0}) {
            double prev = -1.0;
            for (int n = 1; n <= 6; ++n) {
                TruncatedDistributions td =
                    truncated_kl_vs_ecb(s, Policy::constant_beta(beta), n);
                double margin = td.ecb_truncated - td.true_kl;
                min_margin = std::min(min_margin, margin);
                ok = ok && margin >= 0.0 && td.true_kl >= prev - 1e-12;
                prev = td.true_kl;
            }
        }
        criterion(3, ok,
                  fmt("exact truncated divergence <= budget surrogate for "
                      "beta in {0.1,0.5,1}, N in {1..6}; min margin %.3e, "
                      "divergence monotone in N",
                      min_margin));
    }

    // ---- shared Monte-Carlo sweep (1e5 runs per grid point) ----------------
    std::vector<GridPoint> sweep;
    const std::int64_t n_runs = 100000;
    const std::uint64_t seed = 0xC0FFEE42;
    for (double l = 1; l <= 14; ++l) {
        GridPoint gp{cfg.scenario_at(l), 0.0, {}};
        gp.beta_star = proposed_sensing_rate(gp.s);
        gp.mc = estimate(gp.s, Policy::constant_beta(gp.beta_star), n_runs, seed);
        sweep.push_back(std::move(gp));
    }

    // ---- C4: constraint satisfaction by Monte Carlo ------------------------
    {
        bool ok = true;
        double worst_ecb = -1e300, worst_pfa = -1e300;
        for (const GridPoint& gp : sweep) {
            ok = ok && gp.mc.n_capped == 0;
            double ecb_slack =
                gp.mc.ecb_mean - (gp.s.delta + 3.0 * gp.mc.ecb_stderr);
            worst_ecb = std::max(worst_ecb, ecb_slack);
            ok = ok && ecb_slack <= 0.0;
            if (gp.s.abs_ln_alpha <= 6.0) {
                double pfa_slack =
                    gp.mc.pfa_mean - (gp.s.alpha + 3.0 * gp.mc.pfa_stderr);
                worst_pfa = std::max(worst_pfa, pfa_slack);
                ok = ok && pfa_slack <= 0.0;
            }
        }
        criterion(4, ok,
                  fmt("budget <= delta + 3se on |ln a| in {1..14} (worst slack "
                      "%.2e), false alarm <= alpha + 3se on {1..6} (worst slack "
                      "%.2e), 1e5 runs, no capped runs",
                      worst_ecb, worst_pfa));
    }

    // ---- C5: delay against the bound and the baseline ----------------------
    {
        bool ok = true;
        for (const GridPoint& gp : sweep) {
            ok = ok &&
                 gp.mc.add_mean <=
                     add_upper(gp.s, gp.beta_star) + 3.0 * gp.mc.add_stderr;
            if (gp.s.abs_ln_alpha >= 2.0)
                ok = ok && gp.mc.add_mean <=
                               innocent_add_exact(prior, gp.s.n_alpha);
        }
        // probing gain against the no-probing first-order scaling at the
        // simulated endpoints: about 10 at |ln a| = 1 and 50 at |ln a| = 14,
        // within +-30%
        double red1 = first_order(sweep.front().s) - sweep.front().mc.add_mean;
        double red14 = first_order(sweep.back().s) - sweep.back().mc.add_mean;
        bool ends_ok = red1 >= 7.0 && red1 <= 13.0 && red14 >= 35.0 && red14 <= 65.0;
        criterion(5, ok && ends_ok,
                  fmt("delay <= bound + 3se everywhere; <= exact innocent delay "
                      "for |ln a| >= 2; endpoint reductions %.2f (target 10 "
                      "+-30%%) and %.2f (target 50 +-30%%)",
                      red1, red14));
    }

    // ---- C6: second-order coefficient at desk scale -------------------------
    {
        const double coeff = second_order_coefficient(sweep.front().s);
        bool monotone = true;
        double prev_gap = 1e300, final_gap = 0.0, final_seq = 0.0;
        for (double l = 6; l <= 14; ++l) {
            Scenario s = cfg.scenario_at(l);
            double seq = (first_order(s) - add_upper(s, proposed_sensing_rate(s))) /
                         std::sqrt(l);
            double gap = std::abs(seq - coeff);
            monotone = monotone && gap < prev_gap;
            prev_gap = gap;
            final_gap = gap;
            final_seq = seq;
        }
        bool ok = monotone && final_gap < 0.25 * coeff;
        criterion(6, ok,
                  fmt("normalized gain (first order - bound)/sqrt|ln a| vs "
                      "coefficient %.4f: gap shrinks monotonically (%s), final "
                      "value %.4f, final gap %.4f (required < %.4f)",
                      coeff, monotone ? "yes" : "no", final_seq, final_gap,
                      0.25 * coeff));
        if (!ok) {
            note("the relaxation behind beta* keeps the bound far from its "
                 "asymptote on this grid; the same sequence does converge:");
            for (double l : {1e3, 2e4}) {
                Scenario s = cfg.scenario_at(l);
                double seq =
                    (first_order(s) - add_upper(s, proposed_sensing_rate(s))) /
                    std::sqrt(l);
                note(fmt("  at |ln a| = %g: value %.4f, gap %.1f%% of the "
                         "coefficient",
                         l, seq, 100.0 * std::abs(seq - coeff) / coeff));
            }
        }
    }

    // ---- C7: property suites and the timed figure reproduction -------------
    {
        bool ok = true;
        // randomized divergence properties
        {
            Rng rng(0x9E37);
            for (int trial = 0; trial < 1000 && ok; ++trial) {
                std::size_t n = 2 + rng.next_u64() % 7;
                std::vector<double> pm(n), qm(n);
                double ps = 0, qs = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    pm[i] = 1e-4 + rng.next_double();
                    qm[i] = 1e-4 + rng.next_double();
                    ps += pm[i];
                    qs += qm[i];
                }
                for (std::size_t i = 0; i < n; ++i) {
                    pm[i] /= ps;
                    qm[i] /= qs;
                }
                DivergencePair dv = divergence_pair(Pmf(pm), Pmf(qm));
                ok = ok && dv.kl >= 0 && dv.chi2 >= 0 &&
                     dv.second_moment >= dv.kl * dv.kl - 1e-10;
            }
            if (!ok) note("divergence property batch failed");
        }
        // sqrt lower bound property
        {
            Rng rng(0x51C6);
            bool sq = true;
            for (int i = 0; i < 10000; ++i) {
                double r = 0.01 + 0.98 * rng.next_double();
                double x = (2 * rng.next_double() - 1) * r;
                sq = sq && sqrt_taylor_lower(x, r) <= std::sqrt(1 + x) + 1e-15;
            }
            ok = ok && sq;
            if (!sq) note("sqrt taylor lower bound property failed");
        }
        // determinism of the estimator
        {
            Scenario s = cfg.scenario_at(2.0);
            SimOptions st1, st8;
            st1.n_threads = 1;
            st8.n_threads = 8;
            McSummary a = estimate(s, Policy::constant_beta(0.01), 20000, 5, st1);
            McSummary b = estimate(s, Policy::constant_beta(0.01), 20000, 5, st8);
            bool det = a.add_mean == b.add_mean && a.ecb_mean == b.ecb_mean &&
                       a.pfa_mean == b.pfa_mean;
            ok = ok && det;
            if (!det) note("seeded estimator is not scheduling-invariant");
        }
        // accounting identity on the shared sweep
        for (const GridPoint& gp : sweep) {
            double lhs = gp.mc.add_mean + gp.mc.min_tau_gamma_mean;
            ok = ok && std::abs(lhs - gp.mc.tau_mean) <=
                           1e-9 * std::max(1.0, std::abs(gp.mc.tau_mean));
        }
        // the analytic false-alarm guarantee engages where MC cannot resolve:
        // at |ln a| = 14 every stopped run must have crossed the posterior
        // threshold
        {
            Scenario s = cfg.scenario_at(14.0);
            Policy pol = Policy::constant_beta(proposed_sensing_rate(s));
            Rng rng(0xFA1A);
            ShiryaevState st;
            bool crossed_ok = true;
            for (int i = 0; i < 200; ++i) {
                PolicyTrace tr = run_one(s, pol, rng);
                crossed_ok = crossed_ok && !tr.capped;
            }
            // the rule stops only on log_odds >= b_alpha by construction;
            // confirm the threshold itself matches ln((1-a)/a)
            crossed_ok =
                crossed_ok &&
                std::abs(s.b_alpha - std::log((1 - s.alpha) / s.alpha)) < 1e-12;
            ok = ok && crossed_ok;
            if (!crossed_ok) note("threshold guarantee check failed");
        }
        // timed full reproduction at 1e4 runs per grid point
        auto t0 = std::chrono::steady_clock::now();
        {
            std::map<std::string, std::vector<CsvRow>> rows;
            for (double l = 1; l <= 14; ++l) {
                Scenario s = cfg.scenario_at(l);
                double bs = proposed_sensing_rate(s);
                for (const std::string& name : {std::string("innocent"),
                                                std::string("constant_beta")}) {
                    McSummary mc =
                        name == "innocent"
                            ? estimate(s, Policy::innocent(s.n_alpha), 10000, seed)
                            : estimate(s, Policy::constant_beta(bs), 10000, seed);
                    CsvRow row;
                    row.policy = name;
                    row.abs_ln_alpha = l;
                    row.alpha = s.alpha;
                    row.beta_star = bs;
                    row.n_runs = 10000;
                    row.mc = mc;
                    row.add_upper = add_upper(s, bs);
                    row.add_relaxed = add_relaxed(s);
                    row.converse_two_term = converse_lower(s);
                    row.first_order = first_order(s);
                    row.seed = seed;
                    rows[name].push_back(row);
                }
            }
            auto dir = std::filesystem::temp_directory_path() / "covertqcd_accept";
            std::filesystem::create_directories(dir);
            for (bool normalized : {false, true}) {
                std::ofstream csv(dir / (normalized ? "fig2.csv" : "fig1.csv"),
                                  std::ios::binary);
                csv << csv_header(normalized);
                for (const auto& [name, list] : rows)
                    for (const CsvRow& r : list) csv << csv_line(r, normalized);
            }
            ok = ok && rows["innocent"].size() == 14 &&
                 rows["constant_beta"].size() == 14;
        }
        double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        ok = ok && secs < 600.0;
        criterion(7, ok,
                  fmt("property suites pass; figure reproduction at 1e4 runs "
                      "per point took %.1f s (limit 600); deep-alpha false "
                      "alarms covered by the threshold guarantee",
                      secs));
    }

    // ---- C8: belief-grid baseline ------------------------------------------
    {
        bool ok = true;
        for (double l : {4.0, 6.0}) {
            Scenario s = cfg.scenario_at(l);
            DpOptions opts;
            opts.grid_size = cfg.dp_grid_size;
            opts.mc_runs = cfg.dp_mc_runs;
            DpSolveInfo info;
            BeliefGridPolicy gp = solve(s, opts, &info);
            McSummary m = estimate(s, Policy::dp(&gp), 100000, seed);
            double inn = innocent_add_exact(prior, s.n_alpha);
            double lo_band = second_order_achievable(s) - 15.0;
            double hi_band = add_upper(s, proposed_sensing_rate(s)) + 15.0;
            bool point_ok = m.n_capped == 0 &&
                            m.ecb_mean <= s.delta + 3.0 * m.ecb_stderr &&
                            m.pfa_mean <= s.alpha + 3.0 * m.pfa_stderr &&
                            m.add_mean <= inn && m.add_mean >= lo_band &&
                            m.add_mean <= hi_band;
            note(fmt("dp at |ln a| = %g: budget %.5f <= %.5f, delay %.2f in "
                     "[%.2f, %.2f], innocent %.2f, lambda %.4g",
                     l, m.ecb_mean, s.delta, m.add_mean, lo_band, hi_band, inn,
                     gp.lambda));
            ok = ok && point_ok;
        }
        criterion(8, ok,
                  "dp baseline: budget within delta, delay below the innocent "
                  "baseline and inside the second-order band at |ln a| in {4,6}");
    }

    std::printf("%s: %d criterion(s) failed\n",
                g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
                g_failures);
    return g_failures == 0 ? 0 : 1;
}
