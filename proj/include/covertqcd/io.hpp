#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "covertqcd/belief_policy.hpp"
#include "covertqcd/bounds.hpp"
#include "covertqcd/scenario.hpp"
#include "covertqcd/simulate.hpp"

namespace covertqcd {

inline constexpr const char* kConfigSchema = "covert-qcd/1";

/// Scenario inputs plus the experiment sweep read from a config document.
struct ExperimentConfig {
    ChannelSpec channel;
    double rho = 0.0;
    double delta = 0.0;
    std::optional<double> log_alpha;  // single-point commands
    std::vector<double> grid;         // |ln alpha| sweep, strictly increasing
    std::int64_t n_runs = 10000;
    std::uint64_t seed = 1;
    std::vector<std::string> policies;  // subset of {innocent, constant_beta, dp}
    // dp sub-options
    std::size_t dp_grid_size = 1024;
    std::int64_t dp_mc_runs = 20000;
    // optional reference constants checked by the verify command
    std::optional<double> expected_kl, expected_llr_second_moment;
    std::optional<double> expected_chi2_pre, expected_chi2_post;

    Scenario scenario_at(double abs_ln_alpha) const {
        return make_scenario(channel, Prior(rho), delta, abs_ln_alpha);
    }
};

namespace detail {

inline std::string offset_to_line(const std::string& text, std::size_t byte) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return std::to_string(line);
}

inline JointTable parse_table(const nlohmann::json& j, const char* name) {
    if (!j.is_array() || j.empty())
        throw std::runtime_error(std::string("config: joint table '") + name +
                                 "' must be a non-empty array of rows");
    std::size_t ny = j.size();
    std::size_t nz = j[0].size();
    std::vector<double> w;
    w.reserve(ny * nz);
    for (const auto& row : j) {
        if (row.size() != nz)
            throw std::runtime_error(std::string("config: ragged joint table '") +
                                     name + "'");
        for (const auto& v : row) w.push_back(v.get<double>());
    }
    return JointTable(ny, nz, std::move(w));
}

}  // namespace detail

/// Parse a config document. Throws std::runtime_error with a line-numbered
/// message on malformed JSON.
inline ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("config: parse error at line " +
                                 detail::offset_to_line(text, e.byte) + ": " +
                                 e.what());
    }

    if (!j.contains("schema") || j["schema"] != kConfigSchema)
        throw std::runtime_error(std::string("config: missing or unsupported schema, expected \"") +
                                 kConfigSchema + "\"");
    if (!j.contains("scenario"))
        throw std::runtime_error("config: missing \"scenario\"");
    const auto& sc = j["scenario"];

    ChannelTables tables;
    const auto& joint = sc.at("channel").at("joint");
    tables.joint[0][0] = detail::parse_table(joint.at("x0_theta0"), "x0_theta0");
    tables.joint[0][1] = detail::parse_table(joint.at("x0_theta1"), "x0_theta1");
    tables.joint[1][0] = detail::parse_table(joint.at("x1_theta0"), "x1_theta0");
    tables.joint[1][1] = detail::parse_table(joint.at("x1_theta1"), "x1_theta1");

    ExperimentConfig cfg{build_channel(tables)};
    cfg.rho = sc.at("rho").get<double>();
    cfg.delta = sc.at("delta").get<double>();
    if (sc.contains("log_alpha")) cfg.log_alpha = sc["log_alpha"].get<double>();

    if (j.contains("grid")) {
        cfg.grid = j["grid"].get<std::vector<double>>();
        if (cfg.grid.empty())
            throw std::runtime_error("config: grid must be non-empty");
        for (std::size_t i = 1; i < cfg.grid.size(); ++i)
            if (!(cfg.grid[i] > cfg.grid[i - 1]))
                throw std::runtime_error("config: grid must be strictly increasing");
    }
    if (j.contains("n_runs")) cfg.n_runs = j["n_runs"].get<std::int64_t>();
    if (cfg.n_runs < 100)
        throw std::runtime_error("config: n_runs must be >= 100");
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("policies"))
        cfg.policies = j["policies"].get<std::vector<std::string>>();
    else
        cfg.policies = {"innocent", "constant_beta"};
    for (const auto& p : cfg.policies)
        if (p != "innocent" && p != "constant_beta" && p != "dp")
            throw std::runtime_error("config: unknown policy \"" + p + "\"");

    if (j.contains("dp")) {
        const auto& dp = j["dp"];
        if (dp.contains("grid_size"))
            cfg.dp_grid_size = dp["grid_size"].get<std::size_t>();
        if (dp.contains("mc_runs"))
            cfg.dp_mc_runs = dp["mc_runs"].get<std::int64_t>();
    }
    if (j.contains("expected_constants")) {
        const auto& e = j["expected_constants"];
        if (e.contains("kl")) cfg.expected_kl = e["kl"].get<double>();
        if (e.contains("llr_second_moment"))
            cfg.expected_llr_second_moment = e["llr_second_moment"].get<double>();
        if (e.contains("chi2_pre")) cfg.expected_chi2_pre = e["chi2_pre"].get<double>();
        if (e.contains("chi2_post")) cfg.expected_chi2_post = e["chi2_post"].get<double>();
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180: CRLF line endings, header row, '.' decimal separator)
// ---------------------------------------------------------------------------

/// Format with 12 significant digits.
inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

struct CsvRow {
    std::string policy;
    double abs_ln_alpha = 0.0;
    double alpha = 0.0;
    double beta_star = 0.0;
    std::int64_t n_runs = 0;
    McSummary mc;
    double add_upper = 0.0;
    double add_relaxed = 0.0;
    double converse_two_term = 0.0;
    double first_order = 0.0;
    std::uint64_t seed = 0;
};

inline std::string csv_header(bool normalized) {
    std::string h =
        "policy,|ln_alpha|,alpha,beta_star,n_runs,add_mean,add_stderr,"
        "pfa_mean,pfa_stderr,ecb_mean,ecb_stderr,add_upper,add_relaxed,"
        "converse_two_term,first_order,seed";
    if (normalized) h += ",add_norm,first_order_norm";
    return h + "\r\n";
}

inline std::string csv_line(const CsvRow& r, bool normalized) {
    std::ostringstream os;
    os << r.policy << ',' << csv_num(r.abs_ln_alpha) << ',' << csv_num(r.alpha)
       << ',' << csv_num(r.beta_star) << ',' << r.n_runs << ','
       << csv_num(r.mc.add_mean) << ',' << csv_num(r.mc.add_stderr) << ','
       << csv_num(r.mc.pfa_mean) << ',' << csv_num(r.mc.pfa_stderr) << ','
       << csv_num(r.mc.ecb_mean) << ',' << csv_num(r.mc.ecb_stderr) << ','
       << csv_num(r.add_upper) << ',' << csv_num(r.add_relaxed) << ','
       << csv_num(r.converse_two_term) << ',' << csv_num(r.first_order) << ','
       << r.seed;
    if (normalized)
        os << ',' << csv_num(r.mc.add_mean / r.abs_ln_alpha) << ','
           << csv_num(r.first_order / r.abs_ln_alpha);
    os << "\r\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Minimal self-contained SVG line charts
// ---------------------------------------------------------------------------

struct SvgSeries {
    std::string label;
    std::string color;
    std::vector<double> x, y;
};

/// A single-file line chart, no external assets.
inline std::string render_svg(const std::string& title,
                              const std::string& x_label,
                              const std::string& y_label,
                              const std::vector<SvgSeries>& series) {
    const double w = 800, h = 560, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& srs : series)
        for (std::size_t i = 0; i < srs.x.size(); ++i) {
            xmin = std::min(xmin, srs.x[i]);
            xmax = std::max(xmax, srs.x[i]);
            ymin = std::min(ymin, srs.y[i]);
            ymax = std::max(ymax, srs.y[i]);
        }
    if (!(xmax > xmin)) xmax = xmin + 1;
    if (!(ymax > ymin)) ymax = ymin + 1;
    double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;
    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
       << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
       << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
       << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        double fx = xmin + (xmax - xmin) * i / 5.0;
        double fy = ymin + (ymax - ymin) * i / 5.0;
        os << "<text x=\"" << sx(fx) << "\" y=\"" << h - mb + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
              "font-size=\"11\">" << csv_num(fx) << "</text>\n"
           << "<text x=\"" << ml - 8 << "\" y=\"" << sy(fy) + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
              "font-size=\"11\">" << csv_num(fy) << "</text>\n";
    }
    os << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
       << x_label << "</text>\n"
       << "<text x=\"16\" y=\"" << (mt + h - mb) / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
          "transform=\"rotate(-90 16 " << (mt + h - mb) / 2 << ")\">" << y_label
       << "</text>\n";
    double ly = mt + 10;
    for (const auto& srs : series) {
        os << "<polyline fill=\"none\" stroke=\"" << srs.color
           << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < srs.x.size(); ++i)
            os << sx(srs.x[i]) << ',' << sy(srs.y[i]) << ' ';
        os << "\"/>\n";
        os << "<line x1=\"" << w - mr - 170 << "\" y1=\"" << ly << "\" x2=\""
           << w - mr - 150 << "\" y2=\"" << ly << "\" stroke=\"" << srs.color
           << "\" stroke-width=\"2\"/>\n"
           << "<text x=\"" << w - mr - 144 << "\" y=\"" << ly + 4
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << srs.label
           << "</text>\n";
        ly += 18;
    }
    os << "</svg>\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Belief-grid policy serialization
// ---------------------------------------------------------------------------

inline nlohmann::json belief_policy_to_json(const BeliefGridPolicy& gp) {
    nlohmann::json j;
    j["schema"] = "covert-qcd/dp-policy/1";
    j["grid"] = gp.grid;
    j["stop"] = gp.stop;
    j["beta"] = gp.beta;
    j["value"] = gp.value;
    j["action_set"] = gp.action_set;
    j["lambda"] = gp.lambda;
    j["lambda_f"] = gp.lambda_f;
    j["stop_threshold"] = gp.stop_threshold;
    j["residual"] = gp.residual;
    j["sweeps"] = gp.sweeps;
    return j;
}

inline BeliefGridPolicy belief_policy_from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j["schema"] != "covert-qcd/dp-policy/1")
        throw std::runtime_error("dp policy: missing or unsupported schema");
    BeliefGridPolicy gp;
    gp.grid = j.at("grid").get<std::vector<double>>();
    gp.stop = j.at("stop").get<std::vector<std::uint8_t>>();
    gp.beta = j.at("beta").get<std::vector<double>>();
    gp.value = j.at("value").get<std::vector<double>>();
    gp.action_set = j.at("action_set").get<std::vector<double>>();
    gp.lambda = j.at("lambda").get<double>();
    gp.lambda_f = j.at("lambda_f").get<double>();
    gp.stop_threshold = j.at("stop_threshold").get<double>();
    gp.residual = j.at("residual").get<double>();
    gp.sweeps = j.at("sweeps").get<std::int64_t>();
    return gp;
}

}  // namespace covertqcd
