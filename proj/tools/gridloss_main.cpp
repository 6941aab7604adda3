#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridloss/errors.hpp"
#include "gridloss/study.hpp"

namespace {

using namespace gridloss;

void print_rows(const std::vector<study::ScenarioRow>& rows) {
    for (const auto& r : rows) {
        std::printf("%-12s n_dg=%d", r.scenario.c_str(), r.n_dg);
        if (!r.dg_buses.empty()) {
            std::printf("  buses=");
            for (size_t i = 0; i < r.dg_buses.size(); ++i)
                std::printf("%s%d", i ? "," : "", r.dg_buses[i]);
        }
        if (r.losses_stage1_kw) std::printf("  stage1=%.3f kW", *r.losses_stage1_kw);
        if (r.losses_stage2_kw) std::printf("  stage2=%.3f kW", *r.losses_stage2_kw);
        std::printf("  swept=%.3f kW  minV=%.4f  gap=%.2e\n", r.sweep_losses_kw,
                    r.min_voltage_pu, r.max_tightness_gap);
    }
}

int run(int argc, char** argv) {
    CLI::App app{"loss-minimizing DG placement and dispatch on radial feeders"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::vector<int> n_dg_list;
    double factor = 0.0;
    bool with_svg = false;

    auto add_common = [&](CLI::App* cmd, bool with_ndg) {
        cmd->add_option("--config", config_path, "study configuration JSON")->required();
        cmd->add_option("--out", out_dir, "output directory for reports");
        cmd->add_flag("--svg", with_svg, "also write SVG charts");
        if (with_ndg)
            cmd->add_option("--n-dg", n_dg_list, "DG counts to run (default: config value)")
                ->delimiter(',');
    };

    CLI::App* cmd_base = app.add_subcommand("base", "solve the feeder without DG");
    add_common(cmd_base, false);
    CLI::App* cmd_s1 = app.add_subcommand("stage1", "optimize DG placement and active power");
    add_common(cmd_s1, true);
    CLI::App* cmd_s2 = app.add_subcommand("stage2", "re-dispatch reactive power at fixed placement");
    add_common(cmd_s2, true);
    CLI::App* cmd_ls = app.add_subcommand("loadstudy", "single-bus load growth sensitivity");
    add_common(cmd_ls, false);
    cmd_ls->add_option("--factor", factor, "load multiplier at the perturbed bus");

    CLI11_PARSE(app, argc, argv);

    study::StudyConfig cfg = study::load_study_config(config_path);
    if (n_dg_list.empty()) n_dg_list = {cfg.dg.n_dg};

    if (cmd_base->parsed()) {
        auto res = study::run_base(cfg, out_dir, with_svg);
        print_rows({res.row});
        if (!res.buses_below_vmin.empty()) {
            std::printf("buses below v_min:");
            for (int b : res.buses_below_vmin) std::printf(" %d", b);
            std::printf("\n");
        }
    } else if (cmd_s1->parsed()) {
        auto res = study::run_stage1(cfg, n_dg_list, out_dir, with_svg);
        std::vector<study::ScenarioRow> rows;
        for (const auto& r : res) rows.push_back(r.row);
        print_rows(rows);
        for (const auto& r : res)
            if (r.search.budget_exhausted)
                std::printf("note: %s hit the node budget, gap %.2e\n", r.row.scenario.c_str(),
                            r.search.rel_gap);
    } else if (cmd_s2->parsed()) {
        auto res = study::run_stage2(cfg, n_dg_list, out_dir, with_svg);
        std::vector<study::ScenarioRow> rows;
        for (const auto& r : res) rows.push_back(r.row);
        print_rows(rows);
    } else {
        auto res = study::run_load_study(cfg, factor > 0.0 ? factor : cfg.load_increase_factor,
                                         out_dir, with_svg);
        double worst_no_dg = 0.0, worst_opt = 0.0;
        for (const auto& r : res.rows)
            if (r.bus == res.worst_bus) {
                worst_no_dg = r.delta_l_no_dg_kw;
                worst_opt = r.delta_l_optimized_kw;
            }
        std::printf("worst bus %d: delta losses %.3f kW without DG, %.3f kW optimized\n",
                    res.worst_bus, worst_no_dg, worst_opt);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const gridloss::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const gridloss::SolveError& e) {
        std::fprintf(stderr, "solve error: %s\n", e.what());
        return 3;
    } catch (const gridloss::VerifyError& e) {
        std::fprintf(stderr, "verification error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
