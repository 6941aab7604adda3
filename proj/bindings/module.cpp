#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>

#include "gridloss/errors.hpp"
#include "gridloss/study.hpp"
#include "gridloss/sweep.hpp"

namespace py = pybind11;
using namespace gridloss;

namespace {

double min_voltage(const acpf::PowerFlowResult& flow) {
    double vmin = 2.0;
    for (const auto& v : flow.v) vmin = std::min(vmin, std::abs(v));
    return vmin;
}

py::dict row_to_dict(const study::ScenarioRow& row) {
    py::dict d;
    d["scenario"] = row.scenario;
    d["n_dg"] = row.n_dg;
    d["dg_buses"] = row.dg_buses;
    d["p_supply_kw"] = row.p_supply_kw;
    d["q_supply_kvar"] = row.q_supply_kvar;
    if (row.losses_stage1_kw) d["losses_stage1_kw"] = *row.losses_stage1_kw;
    if (row.losses_stage2_kw) d["losses_stage2_kw"] = *row.losses_stage2_kw;
    d["sweep_losses_kw"] = row.sweep_losses_kw;
    d["min_voltage_pu"] = row.min_voltage_pu;
    d["max_tightness_gap"] = row.max_tightness_gap;
    return d;
}

py::dict flow_to_dict(const model::FeederNetwork& net, const acpf::PowerFlowResult& flow) {
    py::dict d;
    py::dict v;
    for (int i = 0; i < net.n_bus(); ++i)
        v[py::int_(net.buses[i].id)] = std::abs(flow.v[i]);
    d["v_mag_pu"] = v;
    d["losses_kw"] = flow.total_losses_kw;
    d["iterations"] = flow.iterations;
    d["converged"] = flow.converged;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Loss-minimizing DG placement and dispatch on radial feeders";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<SolveError>(m, "SolveError", PyExc_RuntimeError);
    py::register_exception<VerifyError>(m, "VerifyError", PyExc_RuntimeError);

    py::class_<study::StudyConfig>(m, "StudyConfig")
        .def_property_readonly("n_bus",
                               [](const study::StudyConfig& c) { return c.network.n_bus(); })
        .def_property_readonly("n_branch",
                               [](const study::StudyConfig& c) { return c.network.n_branch(); })
        .def_property_readonly("n_dg", [](const study::StudyConfig& c) { return c.dg.n_dg; })
        .def_property_readonly(
            "s_dg_max_kva",
            [](const study::StudyConfig& c) {
                return c.dg.s_dg_max * c.network.base.base_mva * 1e3;
            })
        .def_property_readonly(
            "base_mva", [](const study::StudyConfig& c) { return c.network.base.base_mva; })
        .def("__repr__", [](const study::StudyConfig& c) {
            return "<StudyConfig: " + std::to_string(c.network.n_bus()) + " buses, n_dg=" +
                   std::to_string(c.dg.n_dg) + ">";
        });

    m.def("load_config", &study::load_study_config, py::arg("path"),
          "Parse a study JSON document and the feeder files it references.");

    m.def(
        "run_base",
        [](const study::StudyConfig& cfg, const std::string& out_dir, bool with_svg) {
            const study::BaseResult res = study::run_base(cfg, out_dir, with_svg);
            py::dict d = row_to_dict(res.row);
            d["buses_below_vmin"] = res.buses_below_vmin;
            d["flow"] = flow_to_dict(cfg.network, res.flow);
            return d;
        },
        py::arg("config"), py::arg("out_dir") = "", py::arg("with_svg") = false,
        "Solve and verify the no-DG case; returns the report row as a dict.");

    m.def(
        "run_stage1",
        [](const study::StudyConfig& cfg, const std::vector<int>& n_dg_list,
           const std::string& out_dir, bool with_svg) {
            py::list rows;
            for (const auto& res : study::run_stage1(cfg, n_dg_list, out_dir, with_svg)) {
                py::dict d = row_to_dict(res.row);
                d["nodes_explored"] = res.search.nodes_explored;
                d["rel_gap"] = res.search.rel_gap;
                d["budget_exhausted"] = res.search.budget_exhausted;
                rows.append(d);
            }
            return rows;
        },
        py::arg("config"), py::arg("n_dg_list"), py::arg("out_dir") = "",
        py::arg("with_svg") = false,
        "Optimal siting and active-power sizing for each requested unit count.");

    m.def(
        "run_stage2",
        [](const study::StudyConfig& cfg, const std::vector<int>& n_dg_list,
           const std::string& out_dir, bool with_svg) {
            py::list rows;
            for (const auto& res : study::run_stage2(cfg, n_dg_list, out_dir, with_svg))
                rows.append(row_to_dict(res.row));
            return rows;
        },
        py::arg("config"), py::arg("n_dg_list"), py::arg("out_dir") = "",
        py::arg("with_svg") = false,
        "Reactive re-dispatch on top of the stage-1 placements.");

    m.def(
        "run_load_study",
        [](const study::StudyConfig& cfg, double factor, const std::string& out_dir,
           bool with_svg) {
            const study::LoadStudyResult res =
                study::run_load_study(cfg, factor, out_dir, with_svg);
            py::list rows;
            for (const auto& r : res.rows) {
                py::dict d;
                d["bus"] = r.bus;
                d["delta_l_no_dg_kw"] = r.delta_l_no_dg_kw;
                d["delta_l_optimized_kw"] = r.delta_l_optimized_kw;
                rows.append(d);
            }
            py::dict d;
            d["rows"] = rows;
            d["worst_bus"] = res.worst_bus;
            d["base_losses_kw"] = res.base_row.sweep_losses_kw;
            d["optimized_losses_kw"] = res.optimized_row.sweep_losses_kw;
            return d;
        },
        py::arg("config"), py::arg("factor"), py::arg("out_dir") = "",
        py::arg("with_svg") = false,
        "Per-bus load-growth stress test of the optimized feeder.");

    m.def(
        "sweep",
        [](const study::StudyConfig& cfg,
           const std::vector<std::pair<int, std::complex<double>>>& injections) {
            return flow_to_dict(cfg.network,
                                acpf::backward_forward_sweep(cfg.network, cfg.zip, injections));
        },
        py::arg("config"), py::arg("injections") = std::vector<std::pair<int, std::complex<double>>>{},
        "Exact backward/forward power flow; injections are (bus, p + jq) in p.u.");
}
