// covert-qcd: experiment runner for covert Bayesian quickest change
// detection. Subcommands: reproduce (sweep + CSV/SVG), verify (oracle and
// bound battery), dp-solve (belief-grid policy), oracle (exact truncated
// divergence report).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "covertqcd/bounds.hpp"
#include "covertqcd/dp.hpp"
#include "covertqcd/io.hpp"
#include "covertqcd/oracle.hpp"
#include "covertqcd/policy.hpp"
#include "covertqcd/simulate.hpp"

namespace {

using namespace covertqcd;

struct CheckReport {
    int passed = 0;
    int failed = 0;
    void check(bool ok, const std::string& what) {
        (ok ? passed : failed)++;
        std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what.c_str());
    }
};

double resolve_log_alpha(const ExperimentConfig& cfg) {
    if (cfg.log_alpha) return *cfg.log_alpha;
    if (!cfg.grid.empty()) return cfg.grid.front();
    throw std::runtime_error(
        "config: need scenario.log_alpha (or a grid) for this command");
}

CsvRow make_row(const ExperimentConfig& cfg, const Scenario& s,
                const std::string& policy_name, double beta_star,
                const McSummary& mc) {
    CsvRow row;
    row.policy = policy_name;
    row.abs_ln_alpha = s.abs_ln_alpha;
    row.alpha = s.alpha;
    row.beta_star = beta_star;
    row.n_runs = cfg.n_runs;
    row.mc = mc;
    row.add_upper = add_upper(s, beta_star);
    row.add_relaxed = add_relaxed(s);
    row.converse_two_term = converse_lower(s);
    row.first_order = first_order(s);
    row.seed = cfg.seed;
    return row;
}

int cmd_reproduce(const std::string& config_path, const std::string& out_dir) {
    ExperimentConfig cfg = load_config(config_path);
    if (cfg.grid.empty())
        throw std::runtime_error("config: reproduce needs a non-empty grid");
    std::filesystem::create_directories(out_dir);

    std::map<std::string, std::vector<CsvRow>> rows;
    BeliefGridPolicy dp_policy;  // reused across grid points when requested

    for (double labs : cfg.grid) {
        Scenario s = cfg.scenario_at(labs);
        double beta_star = proposed_sensing_rate(s);
        for (const std::string& name : cfg.policies) {
            McSummary mc;
            if (name == "innocent") {
                mc = estimate(s, Policy::innocent(s.n_alpha), cfg.n_runs, cfg.seed);
            } else if (name == "constant_beta") {
                mc = estimate(s, Policy::constant_beta(beta_star), cfg.n_runs,
                              cfg.seed);
            } else {
                DpOptions opts;
                opts.grid_size = cfg.dp_grid_size;
                opts.mc_runs = cfg.dp_mc_runs;
                dp_policy = solve(s, opts);
                mc = estimate(s, Policy::dp(&dp_policy), cfg.n_runs, cfg.seed);
            }
            if (mc.n_capped > 0)
                std::fprintf(stderr,
                             "warning: %lld capped runs at |ln alpha| = %g (%s)\n",
                             static_cast<long long>(mc.n_capped), labs,
                             name.c_str());
            rows[name].push_back(make_row(cfg, s, name, beta_star, mc));
        }
        std::fprintf(stderr, "done |ln alpha| = %g\n", labs);
    }

    // fig1: raw curves; fig2: the same rows with delay normalized by |ln alpha|
    for (bool normalized : {false, true}) {
        std::ofstream csv(std::filesystem::path(out_dir) /
                              (normalized ? "fig2.csv" : "fig1.csv"),
                          std::ios::binary);
        csv << csv_header(normalized);
        for (const auto& [name, list] : rows)
            for (const CsvRow& r : list) csv << csv_line(r, normalized);
    }

    auto curve = [&](const std::string& name, auto get) {
        SvgSeries srs;
        if (rows.count(name))
            for (const CsvRow& r : rows[name]) {
                srs.x.push_back(r.abs_ln_alpha);
                srs.y.push_back(get(r));
            }
        return srs;
    };
    std::vector<SvgSeries> fig1;
    if (rows.count("constant_beta")) {
        SvgSeries mc = curve("constant_beta",
                             [](const CsvRow& r) { return r.mc.add_mean; });
        mc.label = "constant-beta (MC)";
        mc.color = "#1f6fb4";
        fig1.push_back(mc);
    }
    if (rows.count("dp")) {
        SvgSeries dp = curve("dp", [](const CsvRow& r) { return r.mc.add_mean; });
        dp.label = "dp policy (MC)";
        dp.color = "#b03a2e";
        fig1.push_back(dp);
    }
    {
        const auto& any = rows.begin()->second;
        SvgSeries ub, fo, so;
        for (const CsvRow& r : any) {
            ub.x.push_back(r.abs_ln_alpha);
            ub.y.push_back(r.add_upper);
            fo.x.push_back(r.abs_ln_alpha);
            fo.y.push_back(r.first_order);
            so.x.push_back(r.abs_ln_alpha);
            so.y.push_back(r.converse_two_term);
        }
        ub.label = "delay upper bound";
        ub.color = "#7d3c98";
        fo.label = "first order";
        fo.color = "#1e8449";
        so.label = "second order";
        so.color = "#b7950b";
        fig1.push_back(ub);
        fig1.push_back(fo);
        fig1.push_back(so);
    }
    {
        std::ofstream svg(std::filesystem::path(out_dir) / "fig1.svg",
                          std::ios::binary);
        svg << render_svg("Detection delay vs |ln alpha|", "|ln alpha|",
                          "average detection delay", fig1);
    }
    std::vector<SvgSeries> fig2 = fig1;
    for (auto& srs : fig2)
        for (std::size_t i = 0; i < srs.x.size(); ++i) srs.y[i] /= srs.x[i];
    {
        std::ofstream svg(std::filesystem::path(out_dir) / "fig2.svg",
                          std::ios::binary);
        svg << render_svg("Normalized delay vs |ln alpha|", "|ln alpha|",
                          "delay / |ln alpha|", fig2);
    }
    std::printf("wrote %s/fig1.csv, fig2.csv, fig1.svg, fig2.svg\n",
                out_dir.c_str());
    return 0;
}

int cmd_verify(const std::string& config_path) {
    ExperimentConfig cfg = load_config(config_path);
    CheckReport rep;
    char buf[256];

    // channel constants vs reference values when the config pins them
    const ChannelSpec& ch = cfg.channel;
    if (cfg.expected_kl)
        rep.check(std::abs(ch.kl() - *cfg.expected_kl) < 1e-9,
                  "channel constant D matches expected_constants.kl");
    if (cfg.expected_llr_second_moment)
        rep.check(std::abs(ch.llr_var() - *cfg.expected_llr_second_moment) < 1e-9,
                  "channel constant V matches expected_constants.llr_second_moment");
    if (cfg.expected_chi2_pre)
        rep.check(std::abs(ch.chi2_pre() - *cfg.expected_chi2_pre) < 1e-12,
                  "chi2 (pre-change) matches expected_constants.chi2_pre");
    if (cfg.expected_chi2_post)
        rep.check(std::abs(ch.chi2_post() - *cfg.expected_chi2_post) < 1e-12,
                  "chi2 (post-change) matches expected_constants.chi2_post");

    double labs = cfg.log_alpha ? *cfg.log_alpha
                                : (cfg.grid.empty() ? 6.0 : cfg.grid.back());
    labs = std::min(labs, 6.0);  // keep the Monte-Carlo side resolvable
    Scenario s = cfg.scenario_at(std::max(labs, 1.0));

    // posterior recursion vs the mixture sum form
    {
        Rng rng(2024);
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            double beta = rng.next_double();
            std::size_t len = 1 + rng.next_u64() % 50;
            ShiryaevState st;
            std::vector<std::pair<int, std::size_t>> trace;
            for (std::size_t t = 0; t < len; ++t) {
                int x = rng.bernoulli(beta) ? 1 : 0;
                auto [y, z] = s.channel.sample_observation(
                    x, rng.bernoulli(0.5) ? 1 : 0, rng);
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
                    lse, std::log(s.prior.pmf(static_cast<std::int64_t>(m))) +
                             suffix[m]);
            double ref = lse - std::log(s.prior.tail(static_cast<std::int64_t>(len)));
            worst = std::max(worst,
                             std::abs(st.log_odds - ref) / (1.0 + std::abs(ref)));
        }
        std::snprintf(buf, sizeof(buf),
                      "posterior recursion matches mixture sum form "
                      "(worst rel err %.2e)",
                      worst);
        rep.check(worst <= 1e-9, buf);
    }

    // truncated divergence chain at small horizons
    {
        bool ok = true;
        double prev = -1.0;
        for (int n = 1; n <= 5; ++n) {
            TruncatedDistributions td =
                truncated_kl_vs_ecb(s, Policy::constant_beta(0.5), n);
            ok = ok && td.true_kl <= td.ecb_truncated + 1e-12 &&
                 td.true_kl >= prev - 1e-12;
            prev = td.true_kl;
        }
        rep.check(ok, "truncated divergence below budget surrogate, monotone in N");
    }

    // bound sandwich across the grid
    {
        bool ok = true;
        std::vector<double> grid = cfg.grid.empty()
                                       ? std::vector<double>{2, 4, 6, 8, 10, 12, 14}
                                       : cfg.grid;
        for (double l : grid) {
            Scenario sl = cfg.scenario_at(l);
            double bs = proposed_sensing_rate(sl);
            double ub = add_upper(sl, bs);
            ok = ok && add_relaxed(sl) >= ub - 1e-9;
            if (l > sl.prior.d / sl.prior.rho)
                ok = ok && exact_quadratic_root_lower(sl) <= ub;
        }
        rep.check(ok, "bound sandwich: converse root <= delay bound <= relaxation");
    }

    // Monte-Carlo constraint checks at a resolvable alpha
    {
        double beta_star = proposed_sensing_rate(s);
        McSummary m =
            estimate(s, Policy::constant_beta(beta_star), cfg.n_runs, cfg.seed);
        std::snprintf(buf, sizeof(buf),
                      "MC budget %.5f <= delta + 3se (delta %.5f)", m.ecb_mean,
                      cfg.delta);
        rep.check(m.ecb_mean <= cfg.delta + 3 * m.ecb_stderr && m.n_capped == 0,
                  buf);
        std::snprintf(buf, sizeof(buf),
                      "MC false-alarm %.5f <= alpha + 3se (alpha %.5f)",
                      m.pfa_mean, s.alpha);
        rep.check(m.pfa_mean <= s.alpha + 3 * m.pfa_stderr, buf);
        rep.check(m.add_mean <= add_upper(s, beta_star) + 3 * m.add_stderr,
                  "MC delay below the closed-form bound");
        if (cfg.delta == 0.0)
            rep.check(beta_star == 0.0 && m.ecb_mean == 0.0,
                      "zero budget clamps the sensing rate to 0");
    }

    std::printf("%d/%d checks passed\n", rep.passed, rep.passed + rep.failed);
    return rep.failed == 0 ? 0 : 1;
}

int cmd_dp_solve(const std::string& config_path, const std::string& out_path) {
    ExperimentConfig cfg = load_config(config_path);
    Scenario s = cfg.scenario_at(resolve_log_alpha(cfg));
    DpOptions opts;
    opts.grid_size = cfg.dp_grid_size;
    opts.mc_runs = cfg.dp_mc_runs;
    DpSolveInfo info;
    BeliefGridPolicy gp = solve(s, opts, &info);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + out_path);
    out << belief_policy_to_json(gp).dump(2) << "\n";
    std::printf(
        "dp policy: lambda %.6g, lambda_f %.6g, residual %.2e, sweeps %lld\n"
        "MC budget %.6f (delta %.6f, window hit %s), MC delay %.3f\n"
        "written to %s\n",
        gp.lambda, gp.lambda_f, gp.residual, static_cast<long long>(gp.sweeps),
        info.ecb_mc, s.delta, info.ecb_window_hit ? "yes" : "no", info.add_mc,
        out_path.c_str());
    return 0;
}

int cmd_oracle(const std::string& config_path, int horizon, double beta) {
    ExperimentConfig cfg = load_config(config_path);
    Scenario s = cfg.scenario_at(resolve_log_alpha(cfg));
    TruncatedDistributions td =
        truncated_kl_vs_ecb(s, Policy::constant_beta(beta), horizon);
    // 1 - sqrt(KL/2): lower bound on the adversary's total error probability
    double eve_error_lb = 1.0 - std::sqrt(std::max(td.true_kl, 0.0) / 2.0);
    std::printf("horizon N = %d, beta = %g\n", horizon, beta);
    std::printf("true divergence      : %.12g\n", td.true_kl);
    std::printf("truncated budget     : %.12g\n", td.ecb_truncated);
    std::printf("margin (budget - kl) : %.12g\n", td.ecb_truncated - td.true_kl);
    std::printf("adversary error lb   : %.12g\n", eve_error_lb);
    auto slices = per_changepoint_slices(s, Policy::constant_beta(beta), horizon);
    for (const auto& sl : slices)
        std::printf("  k=%lld%s weight %.6g kl %.6g budget %.6g\n",
                    static_cast<long long>(sl.k),
                    sl.k > horizon ? " (tail)" : "       ", sl.weight, sl.kl,
                    sl.ecb);
    return td.true_kl <= td.ecb_truncated ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"covert Bayesian quickest change detection toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", out_path = "dp_policy.json";
    int horizon = 4;
    double beta = 0.5;

    CLI::App* reproduce =
        app.add_subcommand("reproduce", "run the sweep and write CSV/SVG");
    reproduce->add_option("--config", config_path, "config JSON")->required();
    reproduce->add_option("--out", out_dir, "output directory");

    CLI::App* verify =
        app.add_subcommand("verify", "run the oracle and bound battery");
    verify->add_option("--config", config_path, "config JSON")->required();

    CLI::App* dp_solve =
        app.add_subcommand("dp-solve", "solve the belief-grid policy");
    dp_solve->add_option("--config", config_path, "config JSON")->required();
    dp_solve->add_option("--out", out_path, "output policy JSON");

    CLI::App* oracle = app.add_subcommand(
        "oracle", "exact truncated divergence vs budget surrogate");
    oracle->add_option("--config", config_path, "config JSON")->required();
    oracle->add_option("--horizon", horizon, "window length N (<= 8)");
    oracle->add_option("--beta", beta, "constant sensing probability");

    CLI11_PARSE(app, argc, argv);

    try {
        if (reproduce->parsed()) return cmd_reproduce(config_path, out_dir);
        if (verify->parsed()) return cmd_verify(config_path);
        if (dp_solve->parsed()) return cmd_dp_solve(config_path, out_path);
        if (oracle->parsed()) return cmd_oracle(config_path, horizon, beta);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
