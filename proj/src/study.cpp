#include "gridloss/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "gridloss/errors.hpp"

namespace gridloss::study {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kPlacementsFile = "placements.json";

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string join_ints(const std::vector<int>& vals) {
    std::string out;
    for (size_t i = 0; i < vals.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(vals[i]);
    }
    return out;
}

std::string join_doubles(const std::vector<double>& vals) {
    std::string out;
    for (size_t i = 0; i < vals.size(); ++i) {
        if (i) out += ';';
        out += fmt(vals[i]);
    }
    return out;
}

double json_number(const json& j, const std::string& where, const std::string& key,
                   double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number())
        throw ConfigError(where + "." + key + " must be a number");
    return j.at(key).get<double>();
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

// --- result serialization ---------------------------------------------------

void write_report_csv(const fs::path& dir, const std::vector<ScenarioRow>& rows) {
    auto out = open_out(dir / "report.csv");
    out << "scenario,n_dg,dg_buses,p_supply_kw,q_supply_kvar,losses_stage1_kw,"
           "losses_stage2_kw,sweep_losses_kw,min_voltage_pu,max_tightness_gap\n";
    for (const auto& r : rows) {
        out << r.scenario << ',' << r.n_dg << ',' << join_ints(r.dg_buses) << ','
            << join_doubles(r.p_supply_kw) << ',' << join_doubles(r.q_supply_kvar) << ','
            << (r.losses_stage1_kw ? fmt(*r.losses_stage1_kw) : std::string()) << ','
            << (r.losses_stage2_kw ? fmt(*r.losses_stage2_kw) : std::string()) << ','
            << fmt(r.sweep_losses_kw) << ',' << fmt(r.min_voltage_pu) << ','
            << fmt(r.max_tightness_gap, "%.6e") << '\n';
    }
}

void write_profile_csvs(const fs::path& dir, const std::string& scenario,
                        const model::FeederNetwork& net, const acpf::PowerFlowResult& flow) {
    {
        auto out = open_out(dir / ("voltages_" + scenario + ".csv"));
        out << "bus,v_mag_pu,v_ang_deg\n";
        for (int i = 0; i < net.n_bus(); ++i) {
            const auto v = flow.v[i];
            out << net.buses[i].id << ',' << fmt(std::abs(v)) << ','
                << fmt(std::arg(v) * 180.0 / M_PI) << '\n';
        }
    }
    {
        auto out = open_out(dir / ("branches_" + scenario + ".csv"));
        out << "from,to,i_pu,p_kw_loss\n";
        for (int b = 0; b < net.n_branch(); ++b) {
            const auto& br = net.branches[b];
            const double i_mag = std::abs(flow.branch_current[b]);
            out << br.from_bus << ',' << br.to_bus << ',' << fmt(i_mag) << ','
                << fmt(i_mag * i_mag * br.r * net.base.base_mva * 1e3) << '\n';
        }
    }
}

void write_summary_json(const fs::path& dir,
                        const std::vector<std::pair<std::string, json>>& scenarios) {
    json doc = json::object();
    for (const auto& [name, entry] : scenarios) doc[name] = entry;
    open_out(dir / "summary.json") << doc.dump(2) << '\n';
}

json summary_entry(const acpf::PowerFlowResult& flow, double max_gap) {
    return json{{"losses_kw", flow.total_losses_kw},
                {"iterations", flow.iterations},
                {"converged", flow.converged},
                {"max_tightness_gap", max_gap}};
}

// --- tiny SVG line charts ----------------------------------------------------

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

void write_svg_chart(const fs::path& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series) {
    constexpr int w = 640, h = 400, ml = 64, mr = 24, mt = 40, mb = 48;
    static const char* colors[] = {"#1f6fb2", "#c24f30", "#3a8f4d", "#7a4fb2"};

    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool first = true;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            if (first) {
                x0 = x1 = x;
                y0 = y1 = y;
                first = false;
            }
            x0 = std::min(x0, x); x1 = std::max(x1, x);
            y0 = std::min(y0, y); y1 = std::max(y1, y);
        }
    if (x1 - x0 < 1e-12) x1 = x0 + 1;
    if (y1 - y0 < 1e-12) y1 = y0 + 1;
    y0 -= 0.05 * (y1 - y0); y1 += 0.05 * (y1 - y0);

    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); };

    auto out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
           "font-family=\"sans-serif\">" << title << "</text>\n";

    // axes with five ticks each
    out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
        << h - mb << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = x0 + (x1 - x0) * t / 4.0;
        const double yv = y0 + (y1 - y0) * t / 4.0;
        out << "<line x1=\"" << px(xv) << "\" y1=\"" << h - mb << "\" x2=\"" << px(xv)
            << "\" y2=\"" << h - mb + 4 << "\" stroke=\"black\"/>\n"
            << "<text x=\"" << px(xv) << "\" y=\"" << h - mb + 18
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">"
            << fmt(xv, "%.4g") << "</text>\n"
            << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(yv) << "\" x2=\"" << ml << "\" y2=\""
            << py(yv) << "\" stroke=\"black\"/>\n"
            << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
            << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">"
            << fmt(yv, "%.4g") << "</text>\n";
    }
    out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 10
        << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << x_label
        << "</text>\n"
        << "<text x=\"16\" y=\"" << (mt + h - mb) / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
           "transform=\"rotate(-90 16 " << (mt + h - mb) / 2 << ")\">" << y_label
        << "</text>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 4];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (auto [x, y] : series[s].points) out << px(x) << ',' << py(y) << ' ';
        out << "\"/>\n"
            << "<text x=\"" << w - mr - 6 << "\" y=\"" << mt + 16 + 16 * s
            << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\" fill=\""
            << color << "\">" << series[s].name << "</text>\n";
    }
    out << "</svg>\n";
}

Series profile_series(const model::FeederNetwork& net, const acpf::PowerFlowResult& flow,
                      const std::string& name) {
    Series s{name, {}};
    for (int i = 0; i < net.n_bus(); ++i)
        s.points.emplace_back(net.buses[i].id, std::abs(flow.v[i]));
    return s;
}

// --- shared scenario machinery ----------------------------------------------

// Single solve with the study's tolerance gate applied.
conic::ConicSolution solve_checked(const conic::ConicProblem& prob,
                                   const conic::SocpSettings& settings) {
    conic::ConicSolution sol = solve_continuous(prob, settings);
    if (!sol.ok()) throw SolveError("scenario solve failed: " + sol.message);
    return sol;
}

void gate_verification(const StudyConfig& cfg, const std::string& scenario,
                       const acpf::VerificationRecord& rec) {
    if (rec.rel_error > cfg.verify_max_rel_error)
        throw VerifyError(scenario + ": SOCP losses " + fmt(rec.socp_losses_kw) +
                          " kW vs swept " + fmt(rec.sweep_losses_kw) + " kW differ by " +
                          fmt(rec.rel_error * 100.0, "%.2f") +
                          "%, above the configured tolerance");
}

double min_voltage(const acpf::PowerFlowResult& flow) {
    double vmin = conic::kInf;
    for (const auto& v : flow.v) vmin = std::min(vmin, std::abs(v));
    return vmin;
}

struct BaseSolve {
    conic::ConicProblem problem;
    conic::ConicSolution solution;
    acpf::TightnessReport tightness;
    acpf::PowerFlowResult flow;
};

BaseSolve solve_base_case(const StudyConfig& cfg) {
    BaseSolve bs;
    distflow::Limits wide = cfg.limits;
    wide.enforce_band = false;  // the no-DG feeder may legitimately sag below v_min
    bs.problem = distflow::build_base(cfg.network, cfg.zip, wide);
    bs.solution = solve_checked(bs.problem, cfg.solver);
    bs.tightness = acpf::tightness_report(bs.problem, bs.solution, cfg.network);
    acpf::SweepOptions sweep_opts;
    sweep_opts.slack_v_pu = cfg.limits.slack_v_pu;
    bs.flow = acpf::backward_forward_sweep(cfg.network, cfg.zip, {}, sweep_opts);
    if (!bs.flow.converged) throw VerifyError("base-case power-flow sweep did not converge");
    return bs;
}

Stage1Result solve_stage1_case(const StudyConfig& cfg, int n_dg) {
    distflow::DgConfig dg = cfg.dg;
    dg.n_dg = n_dg;
    conic::ConicProblem prob = distflow::build_stage1(cfg.network, cfg.zip, dg, cfg.limits);

    Stage1Result res;
    res.search = conic::solve_mixed(prob, cfg.bnb, cfg.solver);
    res.placement = distflow::extract_placement(prob, res.search.solution, cfg.network, dg);

    const auto tightness = acpf::tightness_report(prob, res.search.solution, cfg.network);
    acpf::SweepOptions sweep_opts;
    sweep_opts.slack_v_pu = cfg.limits.slack_v_pu;
    const auto rec = acpf::verify_solution(cfg.network, cfg.zip, prob, res.placement, sweep_opts);
    const std::string scenario = "stage1_n" + std::to_string(n_dg);
    gate_verification(cfg, scenario, rec);
    res.flow = rec.flow;

    res.row.scenario = scenario;
    res.row.n_dg = n_dg;
    res.row.dg_buses = res.placement.dg_buses;
    res.row.p_supply_kw = res.placement.p_supply_kw;
    res.row.q_supply_kvar = res.placement.q_supply_kvar;
    res.row.losses_stage1_kw = res.placement.predicted_losses_kw;
    res.row.sweep_losses_kw = rec.sweep_losses_kw;
    res.row.min_voltage_pu = min_voltage(rec.flow);
    res.row.max_tightness_gap = tightness.max_gap;
    return res;
}

Stage2Result solve_stage2_case(const StudyConfig& cfg,
                               const distflow::PlacementSolution& placement, int n_dg) {
    distflow::DgConfig dg = cfg.dg;
    dg.n_dg = n_dg;
    conic::ConicProblem prob =
        distflow::build_stage2(cfg.network, cfg.zip, placement, dg, cfg.limits);

    Stage2Result res;
    res.placement = placement;
    conic::ConicSolution sol = solve_checked(prob, cfg.solver);
    res.dispatch = distflow::extract_dispatch(prob, sol, cfg.network, placement, dg);

    const auto tightness = acpf::tightness_report(prob, sol, cfg.network);
    acpf::SweepOptions sweep_opts;
    sweep_opts.slack_v_pu = cfg.limits.slack_v_pu;
    const auto rec = acpf::verify_solution(cfg.network, cfg.zip, prob, res.dispatch, sweep_opts);
    const std::string scenario = "stage2_n" + std::to_string(n_dg);
    gate_verification(cfg, scenario, rec);
    res.flow = rec.flow;

    res.row.scenario = scenario;
    res.row.n_dg = n_dg;
    res.row.dg_buses = res.dispatch.dg_buses;
    res.row.p_supply_kw = res.dispatch.p_supply_kw;
    res.row.q_supply_kvar = res.dispatch.q_supply_kvar;
    res.row.losses_stage1_kw = placement.predicted_losses_kw;
    res.row.losses_stage2_kw = res.dispatch.predicted_losses_kw;
    res.row.sweep_losses_kw = rec.sweep_losses_kw;
    res.row.min_voltage_pu = min_voltage(rec.flow);
    res.row.max_tightness_gap = tightness.max_gap;
    return res;
}

// --- placements.json --------------------------------------------------------

json placement_to_json(const Stage1Result& res) {
    json entry{{"n_dg", static_cast<int>(res.placement.dg_buses.size())},
               {"dg_buses", res.placement.dg_buses},
               {"p_supply_kw", res.placement.p_supply_kw},
               {"q_supply_kvar", res.placement.q_supply_kvar},
               {"losses_kw", res.placement.predicted_losses_kw},
               {"tightness_max", res.row.max_tightness_gap}};
    entry["bnb"] = json{{"nodes_explored", res.search.nodes_explored},
                        {"rel_gap", res.search.rel_gap},
                        {"budget_exhausted", res.search.budget_exhausted}};
    return entry;
}

void write_placements_json(const fs::path& dir, const StudyConfig& cfg,
                           const std::map<int, json>& entries) {
    json doc;
    doc["network_fingerprint"] = model::feeder_fingerprint(cfg.network);
    doc["placements"] = json::array();
    for (const auto& [n, entry] : entries) doc["placements"].push_back(entry);
    open_out(dir / kPlacementsFile) << doc.dump(2) << '\n';
}

// Loads previously saved stage-1 results, keyed by n_dg. A fingerprint
// mismatch means the feeder data changed since they were computed.
std::map<int, json> read_placements_json(const fs::path& file, const StudyConfig& cfg) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read " + file.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
    if (doc.value("network_fingerprint", std::string()) !=
        model::feeder_fingerprint(cfg.network))
        throw ConfigError(file.string() +
                          " was computed for a different network; rerun the stage1 command");
    std::map<int, json> out;
    for (const auto& entry : doc.at("placements")) out[entry.at("n_dg").get<int>()] = entry;
    return out;
}

distflow::PlacementSolution placement_from_json(const json& entry, const StudyConfig& cfg) {
    distflow::PlacementSolution p;
    const double to_kw = cfg.network.base.base_mva * 1e3;
    entry.at("dg_buses").get_to(p.dg_buses);
    entry.at("p_supply_kw").get_to(p.p_supply_kw);
    entry.at("q_supply_kvar").get_to(p.q_supply_kvar);
    p.predicted_losses_kw = entry.at("losses_kw").get<double>();
    for (double kw : p.p_supply_kw) p.p_supply_pu.push_back(kw / to_kw);
    for (double kvar : p.q_supply_kvar) p.q_supply_pu.push_back(kvar / to_kw);
    return p;
}

}  // namespace

// --- config loading -----------------------------------------------------------

StudyConfig load_study_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read study config " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(path + ": expected a JSON object");

    const fs::path base_dir = fs::path(path).parent_path();
    auto feeder_path = [&](const std::string& key) {
        if (!doc.contains("feeder") || !doc["feeder"].contains(key))
            throw ConfigError(path + ": missing feeder." + key);
        return (base_dir / doc["feeder"][key].get<std::string>()).string();
    };

    StudyConfig cfg;
    model::FeederNetwork physical =
        model::parse_feeder(feeder_path("buses"), feeder_path("branches"), feeder_path("config"));
    cfg.network = model::to_per_unit(physical);

    // repository default mix unless the study says otherwise
    cfg.zip = loads::ZipCoefficients{0.4, 0.3, 0.3, 0.4, 0.3, 0.3};
    if (doc.contains("zip")) {
        const json& z = doc["zip"];
        cfg.zip.z_p = json_number(z, "zip", "z_p", cfg.zip.z_p);
        cfg.zip.i_p = json_number(z, "zip", "i_p", cfg.zip.i_p);
        cfg.zip.p_p = json_number(z, "zip", "p_p", cfg.zip.p_p);
        cfg.zip.z_q = json_number(z, "zip", "z_q", cfg.zip.z_q);
        cfg.zip.i_q = json_number(z, "zip", "i_q", cfg.zip.i_q);
        cfg.zip.p_q = json_number(z, "zip", "p_q", cfg.zip.p_q);
    }
    try {
        cfg.zip.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": zip: " + e.what());
    }

    if (doc.contains("dg")) {
        const json& d = doc["dg"];
        if (d.contains("n_dg")) {
            if (!d["n_dg"].is_number_integer())
                throw ConfigError(path + ": dg.n_dg must be an integer");
            cfg.dg.n_dg = d["n_dg"].get<int>();
        }
        const double kva = json_number(d, "dg", "s_dg_max_kva", 0.0);
        cfg.dg.s_dg_max = kva / (cfg.network.base.base_mva * 1e3);
        if (d.contains("candidate_buses"))
            d["candidate_buses"].get_to(cfg.dg.candidate_buses);
    }
    if (doc.contains("stage1"))
        cfg.dg.allow_q = doc["stage1"].value("allow_q", false);

    if (doc.contains("limits")) {
        const json& l = doc["limits"];
        cfg.limits.v_min_pu = json_number(l, "limits", "v_min_pu", cfg.limits.v_min_pu);
        cfg.limits.v_max_pu = json_number(l, "limits", "v_max_pu", cfg.limits.v_max_pu);
        cfg.limits.slack_v_pu = json_number(l, "limits", "slack_v_pu", cfg.limits.slack_v_pu);
        cfg.limits.fallback_v_min_pu =
            json_number(l, "limits", "fallback_v_min_pu", cfg.limits.fallback_v_min_pu);
        cfg.limits.fallback_v_max_pu =
            json_number(l, "limits", "fallback_v_max_pu", cfg.limits.fallback_v_max_pu);
    }

    if (doc.contains("solver")) {
        const json& s = doc["solver"];
        cfg.solver.tol_feas = json_number(s, "solver", "tol_feas", cfg.solver.tol_feas);
        const double gap = json_number(s, "solver", "tol_gap", cfg.solver.tol_gap_abs);
        cfg.solver.tol_gap_abs = gap;
        cfg.solver.tol_gap_rel = gap;
    }
    if (doc.contains("bnb")) {
        const json& b = doc["bnb"];
        cfg.bnb.rel_gap = json_number(b, "bnb", "rel_gap", cfg.bnb.rel_gap);
        if (b.contains("max_nodes")) cfg.bnb.max_nodes = b["max_nodes"].get<int>();
    }
    if (doc.contains("loadstudy")) {
        const json& l = doc["loadstudy"];
        cfg.load_increase_factor =
            json_number(l, "loadstudy", "load_increase_factor", cfg.load_increase_factor);
        cfg.freeze_q = l.value("freeze_q", false);
    }
    if (doc.contains("verify"))
        cfg.verify_max_rel_error = json_number(doc["verify"], "verify", "max_rel_error",
                                               cfg.verify_max_rel_error);

    if (cfg.load_increase_factor <= 0.0)
        throw ConfigError(path + ": loadstudy.load_increase_factor must be positive");
    cfg.dg.resolved_candidates(cfg.network);  // surface dg config mistakes here
    return cfg;
}

// --- commands -----------------------------------------------------------------

BaseResult run_base(const StudyConfig& cfg, const std::string& out_dir, bool with_svg) {
    BaseSolve bs = solve_base_case(cfg);

    acpf::VerificationRecord rec;
    rec.socp_losses_kw = bs.solution.objective * cfg.network.base.base_mva * 1e3;
    rec.sweep_losses_kw = bs.flow.total_losses_kw;
    rec.rel_error = std::fabs(rec.socp_losses_kw - rec.sweep_losses_kw) /
                    std::max(rec.sweep_losses_kw, 1e-12);
    gate_verification(cfg, "base", rec);

    BaseResult res;
    res.flow = bs.flow;
    res.row.scenario = "base";
    res.row.n_dg = 0;
    res.row.losses_stage1_kw = rec.socp_losses_kw;
    res.row.sweep_losses_kw = rec.sweep_losses_kw;
    res.row.min_voltage_pu = min_voltage(bs.flow);
    res.row.max_tightness_gap = bs.tightness.max_gap;
    for (int i = 0; i < cfg.network.n_bus(); ++i)
        if (std::abs(bs.flow.v[i]) < cfg.network.buses[i].v_min &&
            cfg.network.buses[i].id != cfg.network.slack_bus)
            res.buses_below_vmin.push_back(cfg.network.buses[i].id);
    std::sort(res.buses_below_vmin.begin(), res.buses_below_vmin.end());

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_report_csv(out_dir, {res.row});
        write_profile_csvs(out_dir, "base", cfg.network, bs.flow);
        write_summary_json(out_dir, {{"base", summary_entry(bs.flow, bs.tightness.max_gap)}});
        if (with_svg)
            write_svg_chart(fs::path(out_dir) / "fig_voltage_base.svg",
                            "Base-case voltage profile", "bus", "|V| (p.u.)",
                            {profile_series(cfg.network, bs.flow, "base")});
    }
    return res;
}

std::vector<Stage1Result> run_stage1(const StudyConfig& cfg, const std::vector<int>& n_dg_list,
                                     const std::string& out_dir, bool with_svg) {
    std::vector<Stage1Result> results;
    std::vector<ScenarioRow> rows;
    std::map<int, json> placement_entries;
    std::vector<std::pair<std::string, json>> summaries;

    auto flush = [&]() {
        if (out_dir.empty()) return;
        fs::create_directories(out_dir);
        write_report_csv(out_dir, rows);
        write_placements_json(out_dir, cfg, placement_entries);
        write_summary_json(out_dir, summaries);
    };

    for (int n : n_dg_list) {
        try {
            if (n == 0) {
                // cardinality zero is exactly the base case
                BaseResult base = run_base(cfg, "", false);
                Stage1Result res;
                res.row = base.row;
                res.row.scenario = "stage1_n0";
                res.flow = base.flow;
                results.push_back(std::move(res));
                rows.push_back(results.back().row);
                summaries.emplace_back("stage1_n0",
                                       summary_entry(results.back().flow,
                                                     results.back().row.max_tightness_gap));
                continue;
            }
            Stage1Result res = solve_stage1_case(cfg, n);
            rows.push_back(res.row);
            placement_entries[n] = placement_to_json(res);
            summaries.emplace_back(res.row.scenario,
                                   summary_entry(res.flow, res.row.max_tightness_gap));
            results.push_back(std::move(res));
        } catch (...) {
            flush();  // keep what finished
            throw;
        }
    }

    if (!out_dir.empty()) {
        flush();
        for (const auto& res : results)
            write_profile_csvs(out_dir, res.row.scenario, cfg.network, res.flow);
        if (with_svg) {
            Series losses{"stage 1 losses", {}};
            for (const auto& res : results)
                if (res.row.losses_stage1_kw)
                    losses.points.emplace_back(res.row.n_dg, *res.row.losses_stage1_kw);
            write_svg_chart(fs::path(out_dir) / "fig_losses_stage1.svg",
                            "Losses vs number of DG units", "n_dg", "losses (kW)", {losses});
            for (const auto& res : results)
                write_svg_chart(fs::path(out_dir) / ("fig_voltage_" + res.row.scenario + ".svg"),
                                "Voltage profile, " + res.row.scenario, "bus", "|V| (p.u.)",
                                {profile_series(cfg.network, res.flow, res.row.scenario)});
        }
    }
    return results;
}

std::vector<Stage2Result> run_stage2(const StudyConfig& cfg, const std::vector<int>& n_dg_list,
                                     const std::string& out_dir, bool with_svg) {
    // take stage-1 results from a saved placements.json when it is fresh,
    // computing any missing entries in place
    std::map<int, json> entries;
    const fs::path placements_file = fs::path(out_dir.empty() ? "." : out_dir) / kPlacementsFile;
    if (!out_dir.empty() && fs::exists(placements_file))
        entries = read_placements_json(placements_file, cfg);

    std::vector<Stage2Result> results;
    std::vector<ScenarioRow> rows;
    std::vector<std::pair<std::string, json>> summaries;
    bool entries_dirty = false;

    for (int n : n_dg_list) {
        distflow::PlacementSolution placement;
        if (auto it = entries.find(n); it != entries.end()) {
            placement = placement_from_json(it->second, cfg);
        } else {
            Stage1Result s1 = solve_stage1_case(cfg, n);
            entries[n] = placement_to_json(s1);
            placement = std::move(s1.placement);
            entries_dirty = true;
        }
        Stage2Result res = solve_stage2_case(cfg, placement, n);
        rows.push_back(res.row);
        summaries.emplace_back(res.row.scenario,
                               summary_entry(res.flow, res.row.max_tightness_gap));
        results.push_back(std::move(res));
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_report_csv(out_dir, rows);
        if (entries_dirty) write_placements_json(out_dir, cfg, entries);
        write_summary_json(out_dir, summaries);
        for (const auto& res : results) {
            write_profile_csvs(out_dir, res.row.scenario, cfg.network, res.flow);
            if (with_svg)
                write_svg_chart(fs::path(out_dir) / ("fig_voltage_" + res.row.scenario + ".svg"),
                                "Voltage profile, " + res.row.scenario, "bus", "|V| (p.u.)",
                                {profile_series(cfg.network, res.flow, res.row.scenario)});
        }
    }
    return results;
}

LoadStudyResult run_load_study(const StudyConfig& cfg, double factor,
                               const std::string& out_dir, bool with_svg) {
    if (factor <= 0.0) throw ConfigError("load factor must be positive");

    LoadStudyResult res;

    // unperturbed reference points: plain feeder and optimized feeder
    BaseResult base = run_base(cfg, "", false);
    res.base_row = base.row;
    const double l0_no_dg = base.flow.total_losses_kw;

    Stage1Result s1 = solve_stage1_case(cfg, cfg.dg.n_dg);
    Stage2Result s2 = solve_stage2_case(cfg, s1.placement, cfg.dg.n_dg);
    res.optimized_row = s2.row;
    const double l0_opt = s2.flow.total_losses_kw;

    acpf::SweepOptions sweep_opts;
    sweep_opts.slack_v_pu = cfg.limits.slack_v_pu;

    // frozen-Q injections reuse the unperturbed dispatch verbatim
    std::vector<std::pair<int, std::complex<double>>> frozen_inj;
    for (size_t k = 0; k < s2.dispatch.dg_buses.size(); ++k)
        frozen_inj.emplace_back(
            s2.dispatch.dg_buses[k],
            std::complex<double>(s2.dispatch.p_supply_pu[k], s2.dispatch.q_supply_pu[k]));

    double worst_delta = -conic::kInf;

    auto flush = [&]() {
        if (out_dir.empty()) return;
        fs::create_directories(out_dir);
        auto out = open_out(fs::path(out_dir) / "loadstudy.csv");
        out << "bus,delta_l_no_dg_kw,delta_l_optimized_kw\n";
        for (const auto& r : res.rows)
            out << r.bus << ',' << fmt(r.delta_l_no_dg_kw) << ','
                << fmt(r.delta_l_optimized_kw) << '\n';
    };

    for (int i = 0; i < cfg.network.n_bus(); ++i) {
        const auto& bus = cfg.network.buses[i];
        if (bus.id == cfg.network.slack_bus) continue;
        if (bus.p_load == 0.0 && bus.q_load == 0.0) continue;

        try {
            StudyConfig perturbed = cfg;
            perturbed.network.buses[i].p_load *= factor;
            perturbed.network.buses[i].q_load *= factor;

            const auto flow_no_dg =
                acpf::backward_forward_sweep(perturbed.network, cfg.zip, {}, sweep_opts);
            if (!flow_no_dg.converged)
                throw VerifyError("load study sweep did not converge at bus " +
                                  std::to_string(bus.id));

            acpf::PowerFlowResult flow_opt;
            if (cfg.freeze_q) {
                flow_opt = acpf::backward_forward_sweep(perturbed.network, cfg.zip, frozen_inj,
                                                        sweep_opts);
                if (!flow_opt.converged)
                    throw VerifyError("frozen-Q sweep did not converge at bus " +
                                      std::to_string(bus.id));
            } else {
                // operational response: placement and P stay, Q re-dispatches
                Stage2Result re = solve_stage2_case(perturbed, s1.placement, cfg.dg.n_dg);
                flow_opt = re.flow;
            }

            LoadStudyRow row;
            row.bus = bus.id;
            row.delta_l_no_dg_kw = flow_no_dg.total_losses_kw - l0_no_dg;
            row.delta_l_optimized_kw = flow_opt.total_losses_kw - l0_opt;
            res.rows.push_back(row);

            if (row.delta_l_no_dg_kw > worst_delta) {
                worst_delta = row.delta_l_no_dg_kw;
                res.worst_bus = bus.id;
                res.worst_no_dg = flow_no_dg;
                res.worst_optimized = flow_opt;
            }
        } catch (...) {
            flush();  // partial table is still useful
            throw;
        }
    }

    if (!out_dir.empty()) {
        flush();
        const std::string tag = "loadstudy_worst_bus" + std::to_string(res.worst_bus);
        write_profile_csvs(out_dir, tag + "_nodg", cfg.network, res.worst_no_dg);
        write_profile_csvs(out_dir, tag + "_optimized", cfg.network, res.worst_optimized);
        write_summary_json(
            out_dir,
            {{"loadstudy_worst_nodg", summary_entry(res.worst_no_dg, 0.0)},
             {"loadstudy_worst_optimized", summary_entry(res.worst_optimized, 0.0)}});
        if (with_svg) {
            Series no_dg{"no DG", {}}, opt{"optimized", {}};
            for (const auto& r : res.rows) {
                no_dg.points.emplace_back(r.bus, r.delta_l_no_dg_kw);
                opt.points.emplace_back(r.bus, r.delta_l_optimized_kw);
            }
            write_svg_chart(fs::path(out_dir) / "fig_loadstudy.svg",
                            "Loss increase when one bus load grows by the factor", "bus",
                            "delta losses (kW)", {no_dg, opt});
        }
    }
    return res;
}

}  // namespace gridloss::study
