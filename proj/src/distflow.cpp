#include "gridloss/distflow.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "gridloss/errors.hpp"

namespace gridloss::distflow {

using conic::ConicProblem;
using conic::ConicSolution;
using conic::LinearExpr;
using conic::SocConstraint;
using model::FeederNetwork;

std::string var_v_sq(int bus) { return "v_sq[" + std::to_string(bus) + "]"; }
std::string var_l(int bus) { return "l[" + std::to_string(bus) + "]"; }
std::string var_fp(int bus) { return "fp[" + std::to_string(bus) + "]"; }
std::string var_fq(int bus) { return "fq[" + std::to_string(bus) + "]"; }
std::string var_a(int bus) { return "a[" + std::to_string(bus) + "]"; }
std::string var_p_dg(int bus) { return "p_dg[" + std::to_string(bus) + "]"; }
std::string var_q_dg(int bus) { return "q_dg[" + std::to_string(bus) + "]"; }
std::string var_cap(int bus) { return "cap[" + std::to_string(bus) + "]"; }

std::vector<int> DgConfig::resolved_candidates(const FeederNetwork& net) const {
    std::vector<int> out;
    if (candidate_buses.empty()) {
        for (const auto& bus : net.buses)
            if (bus.id != net.slack_bus) out.push_back(bus.id);
    } else {
        std::set<int> seen;
        for (int id : candidate_buses) {
            if (!net.has_bus(id))
                throw ConfigError("candidate bus " + std::to_string(id) + " is not in the network");
            if (id == net.slack_bus)
                throw ConfigError("candidate bus " + std::to_string(id) + " is the slack bus");
            if (!seen.insert(id).second)
                throw ConfigError("candidate bus " + std::to_string(id) + " listed twice");
        }
        out.assign(seen.begin(), seen.end());
    }
    std::sort(out.begin(), out.end());
    if (n_dg < 0 || n_dg > static_cast<int>(out.size()))
        throw ConfigError("n_dg = " + std::to_string(n_dg) + " exceeds the " +
                          std::to_string(out.size()) + " candidate buses");
    if (n_dg > 0 && s_dg_max <= 0.0)
        throw ConfigError("s_dg_max must be positive when placing DG units");
    return out;
}

namespace {

// Per-bus load linearization: the feeder override wins over the global mix.
loads::ZpCoefficients bus_zp(const model::BusRecord& bus, const loads::ZipCoefficients& global) {
    if (!bus.zip_override) return loads::linearize_to_zp(global);
    return loads::linearize_to_zp(loads::ZipCoefficients::from_array(*bus.zip_override));
}

void require_per_unit(const FeederNetwork& net) {
    if (!net.per_unit)
        throw std::invalid_argument("network must be converted to per-unit first");
    if (net.topology.empty())
        throw std::invalid_argument("network topology has not been resolved");
}

// The branch-flow skeleton shared by all three problems: variables, balance
// and voltage-drop equalities, flow cones, and the loss objective. DG supply
// terms are stitched into the balance rows afterwards through dg_p/dg_q.
struct Skeleton {
    std::vector<int> v_idx, l_idx, fp_idx, fq_idx;  // by dense bus index; -1 where absent
};

Skeleton build_skeleton(ConicProblem& prob, const FeederNetwork& net,
                        const loads::ZipCoefficients& zip, const Limits& limits,
                        const std::vector<LinearExpr>& dg_p,
                        const std::vector<LinearExpr>& dg_q) {
    const int n = net.n_bus();
    const int slack = net.slack_index();
    Skeleton sk;
    sk.v_idx.assign(n, -1);
    sk.l_idx.assign(n, -1);
    sk.fp_idx.assign(n, -1);
    sk.fq_idx.assign(n, -1);

    const double slack_sq = limits.slack_v_pu * limits.slack_v_pu;
    for (int i = 0; i < n; ++i) {
        const auto& bus = net.buses[i];
        double lo, hi;
        if (i == slack) {
            lo = hi = slack_sq;
        } else if (limits.enforce_band) {
            const double vmin = std::max(bus.v_min, limits.v_min_pu);
            const double vmax = std::min(bus.v_max, limits.v_max_pu);
            if (vmin >= vmax)
                throw ConfigError("voltage window for bus " + std::to_string(bus.id) +
                                  " is empty after applying the configured limits");
            lo = vmin * vmin;
            hi = vmax * vmax;
        } else {
            lo = limits.fallback_v_min_pu * limits.fallback_v_min_pu;
            hi = limits.fallback_v_max_pu * limits.fallback_v_max_pu;
        }
        sk.v_idx[i] = prob.add_variable(var_v_sq(bus.id), lo, hi);
    }

    for (int i = 0; i < n; ++i) {
        if (i == slack) continue;
        const auto& branch = net.branches[net.topology.branch_into[i]];
        double l_hi = conic::kInf;
        if (branch.i_max) l_hi = *branch.i_max * *branch.i_max;
        const int id = net.buses[i].id;
        sk.l_idx[i] = prob.add_variable(var_l(id), 0.0, l_hi);
        sk.fp_idx[i] = prob.add_variable(var_fp(id));
        sk.fq_idx[i] = prob.add_variable(var_fq(id));
    }

    for (int i = 0; i < n; ++i) {
        if (i == slack) continue;
        const auto& bus = net.buses[i];
        const int f = net.topology.parent[i];
        const auto& branch = net.branches[net.topology.branch_into[i]];
        const double r = branch.r, x = branch.x;
        const loads::ZpCoefficients zp = bus_zp(bus, zip);

        // fp = P0 (alpha v + beta) - p_dg + r l + sum of child flows
        LinearExpr bp;
        bp.add(sk.fp_idx[i], 1.0);
        bp.add(sk.l_idx[i], -r);
        bp.add(sk.v_idx[i], -bus.p_load * zp.alpha_p);
        for (int c : net.topology.children[i]) bp.add(sk.fp_idx[c], -1.0);
        for (auto [vi, coeff] : dg_p[i].terms) bp.add(vi, coeff);
        prob.add_equality(bp, bus.p_load * zp.beta_p - dg_p[i].offset);

        LinearExpr bq;
        bq.add(sk.fq_idx[i], 1.0);
        bq.add(sk.l_idx[i], -x);
        bq.add(sk.v_idx[i], -bus.q_load * zp.alpha_q);
        for (int c : net.topology.children[i]) bq.add(sk.fq_idx[c], -1.0);
        for (auto [vi, coeff] : dg_q[i].terms) bq.add(vi, coeff);
        prob.add_equality(bq, bus.q_load * zp.beta_q - dg_q[i].offset);

        // v_j = v_i + (r² + x²) l - 2 (r fp + x fq)
        LinearExpr drop;
        drop.add(sk.v_idx[i], 1.0);
        drop.add(sk.v_idx[f], -1.0);
        drop.add(sk.l_idx[i], -(r * r + x * x));
        drop.add(sk.fp_idx[i], 2.0 * r);
        drop.add(sk.fq_idx[i], 2.0 * x);
        prob.add_equality(drop, 0.0);

        // l v_i >= fp² + fq², rotated into ‖(2fp, 2fq, l - v_i)‖ <= l + v_i
        SocConstraint cone;
        cone.arg.push_back(LinearExpr{{{sk.fp_idx[i], 2.0}}, 0.0});
        cone.arg.push_back(LinearExpr{{{sk.fq_idx[i], 2.0}}, 0.0});
        cone.arg.push_back(LinearExpr{{{sk.l_idx[i], 1.0}, {sk.v_idx[f], -1.0}}, 0.0});
        cone.bound = LinearExpr{{{sk.l_idx[i], 1.0}, {sk.v_idx[f], 1.0}}, 0.0};
        prob.add_soc(std::move(cone));

        prob.add_objective_term(sk.l_idx[i], r);
    }
    return sk;
}

}  // namespace

ConicProblem build_base(const FeederNetwork& net, const loads::ZipCoefficients& zip,
                        const Limits& limits) {
    require_per_unit(net);
    zip.validate();
    ConicProblem prob;
    std::vector<LinearExpr> none(net.n_bus());
    build_skeleton(prob, net, zip, limits, none, none);
    return prob;
}

ConicProblem build_stage1(const FeederNetwork& net, const loads::ZipCoefficients& zip,
                          const DgConfig& dg, const Limits& limits) {
    require_per_unit(net);
    zip.validate();
    const std::vector<int> candidates = dg.resolved_candidates(net);
    if (dg.n_dg == 0) return build_base(net, zip, limits);

    ConicProblem prob;
    const double sbar = dg.s_dg_max;

    std::vector<LinearExpr> dg_p(net.n_bus()), dg_q(net.n_bus());
    struct CandVars {
        int a, p, q;
    };
    std::vector<CandVars> cv;
    cv.reserve(candidates.size());
    for (int id : candidates) {
        CandVars vars{};
        vars.a = prob.add_variable(var_a(id), 0.0, 1.0, /*binary=*/true);
        vars.p = prob.add_variable(var_p_dg(id), 0.0, sbar);
        vars.q = dg.allow_q ? prob.add_variable(var_q_dg(id), -sbar, sbar) : -1;
        cv.push_back(vars);
        dg_p[net.index_of(id)].add(vars.p, 1.0);
        if (dg.allow_q) dg_q[net.index_of(id)].add(vars.q, 1.0);
    }

    build_skeleton(prob, net, zip, limits, dg_p, dg_q);

    LinearExpr card;
    for (const auto& vars : cv) card.add(vars.a, 1.0);
    prob.add_equality(card, static_cast<double>(dg.n_dg));

    // Capacity enters as ‖(p, q)‖ <= a S̄. At binary a this is exactly the unit
    // rating p² + q² <= a S̄², and for fractional a it dominates that cone
    // (p² + q² <= S̄²a² <= S̄²a when a <= 1), so branch-and-bound relaxations
    // stay tight without carrying the weaker rotated form alongside.
    for (size_t k = 0; k < cv.size(); ++k) {
        const auto& vars = cv[k];
        if (!dg.allow_q) {
            // one-dimensional case: p <= a S̄ as a plain slack, which keeps the
            // a = 0 subproblems free of cones pinched to their apex
            const int slack = prob.add_variable(var_cap(candidates[k]), 0.0);
            prob.add_equality(LinearExpr{{{vars.p, 1.0}, {slack, 1.0}, {vars.a, -sbar}}, 0.0});
            continue;
        }
        SocConstraint cap;
        cap.arg.push_back(LinearExpr{{{vars.p, 1.0}}, 0.0});
        cap.arg.push_back(LinearExpr{{{vars.q, 1.0}}, 0.0});
        cap.bound = LinearExpr{{{vars.a, sbar}}, 0.0};
        prob.add_soc(std::move(cap));
    }
    return prob;
}

ConicProblem build_stage2(const FeederNetwork& net, const loads::ZipCoefficients& zip,
                          const PlacementSolution& placement, const DgConfig& dg,
                          const Limits& limits) {
    require_per_unit(net);
    zip.validate();
    const std::vector<int> candidates = dg.resolved_candidates(net);
    const double sbar = dg.s_dg_max;

    ConicProblem prob;
    std::vector<LinearExpr> dg_p(net.n_bus()), dg_q(net.n_bus());
    for (size_t k = 0; k < placement.dg_buses.size(); ++k) {
        const int id = placement.dg_buses[k];
        if (!std::binary_search(candidates.begin(), candidates.end(), id))
            throw ConfigError("placement bus " + std::to_string(id) +
                              " is not a candidate bus");
        const double p = placement.p_supply_pu[k];
        if (p * p > sbar * sbar + 1e-9)
            throw ConfigError("placement supply at bus " + std::to_string(id) +
                              " exceeds the apparent-power cap");
        // capacity with p pinned, q² <= S̄² - p², becomes a plain interval
        const double q_max = std::sqrt(std::max(sbar * sbar - p * p, 0.0));
        const int q = prob.add_variable(var_q_dg(id), -q_max, q_max);
        dg_p[net.index_of(id)].offset = p;  // fixed supply, folded into the rhs
        dg_q[net.index_of(id)].add(q, 1.0);
    }

    build_skeleton(prob, net, zip, limits, dg_p, dg_q);
    return prob;
}

PlacementSolution extract_placement(const ConicProblem& problem, const ConicSolution& solution,
                                    const FeederNetwork& net, const DgConfig& dg) {
    if (!solution.ok())
        throw SolveError("cannot extract a placement from an unsolved problem: " +
                         solution.message);
    if (solution.values.size() != problem.n_variables())
        throw SolveError("solution does not belong to this problem");
    const double to_kw = net.base.base_mva * 1e3;

    PlacementSolution out;
    out.detail = solution;
    out.predicted_losses_kw = solution.objective * to_kw;

    for (int id : dg.resolved_candidates(net)) {
        const double a = solution.values[problem.index_of(var_a(id))];
        if (std::fabs(a - std::round(a)) > 1e-6)
            throw SolveError("placement indicator at bus " + std::to_string(id) +
                             " is fractional (" + std::to_string(a) + ")");
        if (std::round(a) != 1.0) continue;
        out.dg_buses.push_back(id);
        const double p = solution.values[problem.index_of(var_p_dg(id))];
        out.p_supply_pu.push_back(p);
        out.p_supply_kw.push_back(p * to_kw);
        const double q =
            dg.allow_q ? solution.values[problem.index_of(var_q_dg(id))] : 0.0;
        out.q_supply_pu.push_back(q);
        out.q_supply_kvar.push_back(q * to_kw);
    }
    if (static_cast<int>(out.dg_buses.size()) != dg.n_dg)
        throw SolveError("solution places " + std::to_string(out.dg_buses.size()) +
                         " DG units, expected " + std::to_string(dg.n_dg));
    return out;
}

DispatchSolution extract_dispatch(const ConicProblem& problem, const ConicSolution& solution,
                                  const FeederNetwork& net,
                                  const PlacementSolution& placement, const DgConfig& dg) {
    if (solution.values.size() != problem.n_variables())
        throw SolveError("solution does not belong to this problem");
    (void)dg;
    const double to_kw = net.base.base_mva * 1e3;

    DispatchSolution out;
    out.detail = solution;
    out.dg_buses = placement.dg_buses;
    out.p_supply_pu = placement.p_supply_pu;
    out.p_supply_kw = placement.p_supply_kw;
    out.predicted_losses_kw = solution.objective * to_kw;
    for (int id : placement.dg_buses) {
        const double q = solution.values[problem.index_of(var_q_dg(id))];
        out.q_supply_pu.push_back(q);
        out.q_supply_kvar.push_back(q * to_kw);
    }
    return out;
}

}  // namespace gridloss::distflow
