#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridloss/branch_bound.hpp"
#include "gridloss/distflow.hpp"
#include "gridloss/errors.hpp"
#include "gridloss/feeder.hpp"
#include "gridloss/socp.hpp"
#include "gridloss/zip.hpp"

using namespace gridloss;
using namespace gridloss::conic;
using namespace gridloss::distflow;

namespace {

const std::string kData33 = std::string(GRIDLOSS_SOURCE_DIR) + "/data/ieee33";
const std::string kData15 = std::string(GRIDLOSS_SOURCE_DIR) + "/data/ieee15";

model::FeederNetwork load_pu(const std::string& dir) {
    return model::to_per_unit(model::parse_feeder(
        dir + "/buses.csv", dir + "/branches.csv", dir + "/feeder.json"));
}

// the calibration used by the shipped configs
loads::ZipCoefficients study_zip() { return loads::ZipCoefficients::uniform(0.2, 0.15, 0.65); }

Limits wide_limits() {
    Limits lim;
    lim.enforce_band = false;  // the bare feeders sag below 0.95
    return lim;
}

double to_kw(const model::FeederNetwork& net, double obj_pu) {
    return obj_pu * net.base.base_mva * 1e3;
}

}  // namespace

TEST_CASE("base losses on the 33-bus feeder hit the reference value") {
    const model::FeederNetwork net = load_pu(kData33);
    const ConicProblem prob = build_base(net, study_zip(), wide_limits());
    const ConicSolution sol = solve_continuous(prob, {});
    REQUIRE(sol.ok());
    CHECK(to_kw(net, sol.objective) == doctest::Approx(188.119).epsilon(2e-4));
    CHECK(sol.residuals.max_equality < 1e-7);
    CHECK(sol.residuals.max_cone < 1e-7);

    // slack voltage pinned, every other squared magnitude strictly below it
    // on this purely inductive load profile
    const double v0 = sol.values[prob.index_of(var_v_sq(net.slack_bus))];
    CHECK(v0 == doctest::Approx(1.0).epsilon(1e-9));
    for (const auto& bus : net.buses) {
        if (bus.id == net.slack_bus) continue;
        CHECK(sol.values[prob.index_of(var_v_sq(bus.id))] < v0 + 1e-9);
    }
}

TEST_CASE("energy balance holds at the solved optimum") {
    const model::FeederNetwork net = load_pu(kData15);
    const loads::ZipCoefficients zip = study_zip();
    const ConicProblem prob = build_base(net, zip, wide_limits());
    const ConicSolution sol = solve_continuous(prob, {});
    REQUIRE(sol.ok());

    // root injection = voltage-dependent demand + resistive losses
    double injected = 0.0;
    for (int child : net.topology.children[net.slack_index()])
        injected += sol.values[prob.index_of(var_fp(net.id_of(child)))];

    double demand = 0.0;
    for (const auto& bus : net.buses) {
        if (bus.id == net.slack_bus) continue;
        loads::ZipCoefficients c = zip;
        if (bus.zip_override) c = loads::ZipCoefficients::from_array(*bus.zip_override);
        const loads::ZpCoefficients zp = loads::linearize_to_zp(c);
        const double v_sq = sol.values[prob.index_of(var_v_sq(bus.id))];
        demand += loads::zp_power_p(bus.p_load, zp, v_sq);
    }

    double losses = 0.0;
    for (size_t b = 0; b < net.branches.size(); ++b) {
        const int t = net.branches[b].to_bus;
        losses += net.branches[b].r * sol.values[prob.index_of(var_l(t))];
    }

    CHECK(std::fabs(injected - demand - losses) < 1e-8);
    CHECK(losses == doctest::Approx(sol.objective).epsilon(1e-9));
}

TEST_CASE("builders reject unprepared networks") {
    const model::FeederNetwork physical = model::parse_feeder(
        kData15 + "/buses.csv", kData15 + "/branches.csv", kData15 + "/feeder.json");
    CHECK_THROWS_AS(build_base(physical, study_zip(), wide_limits()),
                    std::invalid_argument);
}

TEST_CASE("an empty voltage window is refused") {
    model::FeederNetwork net = load_pu(kData15);
    Limits lim;
    lim.v_min_pu = 1.02;  // feeder caps at 1.05, bus floor 0.95: window inverts
    lim.v_max_pu = 1.01;
    CHECK_THROWS_AS(build_base(net, study_zip(), lim), ConfigError);
}

TEST_CASE("candidate set resolution catches config mistakes") {
    const model::FeederNetwork net = load_pu(kData15);
    DgConfig dg;
    dg.n_dg = 1;
    dg.s_dg_max = 2.1;

    SUBCASE("default set is every non-slack bus, ascending") {
        const std::vector<int> ids = dg.resolved_candidates(net);
        CHECK(static_cast<int>(ids.size()) == net.n_bus() - 1);
        for (int id : ids) CHECK(id != net.slack_bus);
        CHECK(std::is_sorted(ids.begin(), ids.end()));
    }
    SUBCASE("unknown bus") {
        dg.candidate_buses = {99};
        CHECK_THROWS_AS(dg.resolved_candidates(net), ConfigError);
    }
    SUBCASE("slack bus") {
        dg.candidate_buses = {net.slack_bus};
        CHECK_THROWS_AS(dg.resolved_candidates(net), ConfigError);
    }
    SUBCASE("duplicate bus") {
        dg.candidate_buses = {3, 3};
        CHECK_THROWS_AS(dg.resolved_candidates(net), ConfigError);
    }
    SUBCASE("more units than candidates") {
        dg.candidate_buses = {3, 4};
        dg.n_dg = 3;
        CHECK_THROWS_AS(dg.resolved_candidates(net), ConfigError);
    }
    SUBCASE("zero cap with units requested") {
        dg.s_dg_max = 0.0;
        CHECK_THROWS_AS(dg.resolved_candidates(net), ConfigError);
    }
}

TEST_CASE("stage 1 with no units degenerates to the base problem") {
    const model::FeederNetwork net = load_pu(kData15);
    DgConfig dg;  // n_dg = 0
    const ConicProblem base = build_base(net, study_zip(), wide_limits());
    const ConicProblem s1 = build_stage1(net, study_zip(), dg, wide_limits());
    const ConicSolution a = solve_continuous(base, {});
    const ConicSolution b = solve_continuous(s1, {});
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    CHECK(std::fabs(a.objective - b.objective) < 1e-10);
}

TEST_CASE("single unit on the 15-bus feeder lands on bus 3") {
    const model::FeederNetwork net = load_pu(kData15);
    DgConfig dg;
    dg.n_dg = 1;
    dg.s_dg_max = 2.1;  // 2100 kVA at the 1 MVA base
    const ConicProblem prob = build_stage1(net, study_zip(), dg, Limits{});
    const MixedResult res = solve_mixed(prob);
    const PlacementSolution placement = extract_placement(prob, res.solution, net, dg);

    CHECK(placement.dg_buses == std::vector<int>{3});
    CHECK(placement.predicted_losses_kw == doctest::Approx(36.688).epsilon(1e-3));
    CHECK(placement.q_supply_pu[0] == 0.0);  // stage 1 places active power only

    SUBCASE("capacity and band hold at the optimum") {
        for (int id : dg.resolved_candidates(net)) {
            const double a = res.solution.values[prob.index_of(var_a(id))];
            const double p = res.solution.values[prob.index_of(var_p_dg(id))];
            CHECK(p <= dg.s_dg_max * a + 1e-8);
            CHECK(p >= -1e-8);
        }
        for (const auto& bus : net.buses) {
            if (bus.id == net.slack_bus) continue;
            const double v_sq = res.solution.values[prob.index_of(var_v_sq(bus.id))];
            CHECK(v_sq >= 0.95 * 0.95 - 1e-7);
            CHECK(v_sq <= 1.05 * 1.05 + 1e-7);
        }
    }

    SUBCASE("extraction refuses doctored solutions") {
        ConicSolution tampered = res.solution;
        tampered.values[prob.index_of(var_a(3))] = 0.5;
        CHECK_THROWS_AS(extract_placement(prob, tampered, net, dg), SolveError);

        ConicSolution none = res.solution;
        for (int id : dg.resolved_candidates(net))
            none.values[prob.index_of(var_a(id))] = 0.0;
        CHECK_THROWS_AS(extract_placement(prob, none, net, dg), SolveError);

        ConicSolution failed = res.solution;
        failed.status = SolveStatus::tolerance_not_met;
        CHECK_THROWS_AS(extract_placement(prob, failed, net, dg), SolveError);
    }
}

TEST_CASE("stage 2 validates the placement it is given") {
    const model::FeederNetwork net = load_pu(kData15);
    DgConfig dg;
    dg.n_dg = 1;
    dg.s_dg_max = 2.1;

    PlacementSolution placement;
    placement.dg_buses = {3};
    placement.p_supply_pu = {1.0};

    SUBCASE("a valid placement builds and re-dispatches q") {
        const ConicProblem prob = build_stage2(net, study_zip(), placement, dg, Limits{});
        const ConicSolution sol = solve_continuous(prob, {});
        REQUIRE(sol.ok());
        const DispatchSolution dispatch = extract_dispatch(prob, sol, net, placement, dg);
        CHECK(dispatch.dg_buses == std::vector<int>{3});
        CHECK(std::fabs(dispatch.q_supply_pu[0]) <=
              std::sqrt(dg.s_dg_max * dg.s_dg_max - 1.0) + 1e-9);
        CHECK(dispatch.q_supply_pu[0] > 0.0);  // inductive feeder wants support
    }
    SUBCASE("bus outside the candidate set") {
        dg.candidate_buses = {4, 6};
        CHECK_THROWS_AS(build_stage2(net, study_zip(), placement, dg, Limits{}),
                        ConfigError);
    }
    SUBCASE("active supply above the unit rating") {
        placement.p_supply_pu = {2.5};
        CHECK_THROWS_AS(build_stage2(net, study_zip(), placement, dg, Limits{}),
                        ConfigError);
    }
}
