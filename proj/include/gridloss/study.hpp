#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridloss/branch_bound.hpp"
#include "gridloss/distflow.hpp"
#include "gridloss/feeder.hpp"
#include "gridloss/socp.hpp"
#include "gridloss/sweep.hpp"
#include "gridloss/zip.hpp"

namespace gridloss::study {

// One JSON document drives every command: feeder file paths (relative to the
// config file), the load mix, DG setup, limits, and solver knobs.
struct StudyConfig {
    model::FeederNetwork network;     // per-unit, topology resolved
    loads::ZipCoefficients zip;
    distflow::DgConfig dg;            // s_dg_max already per-unit
    distflow::Limits limits;
    conic::SocpSettings solver;
    conic::BnbOptions bnb;
    double load_increase_factor = 1.5;
    bool freeze_q = false;            // load study: keep Q from the unperturbed dispatch
    double verify_max_rel_error = 0.02;
};

StudyConfig load_study_config(const std::string& path);

// One line of report.csv. Fields that do not apply to a scenario stay unset.
struct ScenarioRow {
    std::string scenario;
    int n_dg = 0;
    std::vector<int> dg_buses;
    std::vector<double> p_supply_kw;
    std::vector<double> q_supply_kvar;
    std::optional<double> losses_stage1_kw;
    std::optional<double> losses_stage2_kw;
    double sweep_losses_kw = 0.0;
    double min_voltage_pu = 0.0;
    double max_tightness_gap = 0.0;
};

struct BaseResult {
    ScenarioRow row;
    std::vector<int> buses_below_vmin;  // ids, ascending
    acpf::PowerFlowResult flow;
};

struct Stage1Result {
    ScenarioRow row;
    distflow::PlacementSolution placement;
    conic::MixedResult search;          // nodes, bound, gap, budget flag
    acpf::PowerFlowResult flow;
};

struct Stage2Result {
    ScenarioRow row;
    distflow::PlacementSolution placement;
    distflow::DispatchSolution dispatch;
    acpf::PowerFlowResult flow;
};

struct LoadStudyRow {
    int bus = 0;
    double delta_l_no_dg_kw = 0.0;
    double delta_l_optimized_kw = 0.0;
};

struct LoadStudyResult {
    std::vector<LoadStudyRow> rows;     // ascending bus id, load buses only
    int worst_bus = 0;                  // argmax of delta_l_no_dg_kw
    acpf::PowerFlowResult worst_no_dg;  // perturbed profiles at the worst bus
    acpf::PowerFlowResult worst_optimized;
    ScenarioRow base_row, optimized_row;  // unperturbed reference points
};

// The four experiments. Each returns its data and, when out_dir is
// non-empty, writes report.csv, voltages_<scenario>.csv, summary.json and
// friends there (creating the directory). with_svg adds simple line charts.
BaseResult run_base(const StudyConfig& cfg, const std::string& out_dir = "",
                    bool with_svg = false);
std::vector<Stage1Result> run_stage1(const StudyConfig& cfg, const std::vector<int>& n_dg_list,
                                     const std::string& out_dir = "", bool with_svg = false);
std::vector<Stage2Result> run_stage2(const StudyConfig& cfg, const std::vector<int>& n_dg_list,
                                     const std::string& out_dir = "", bool with_svg = false);
LoadStudyResult run_load_study(const StudyConfig& cfg, double factor,
                               const std::string& out_dir = "", bool with_svg = false);

}  // namespace gridloss::study
