#include "gridloss/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gridloss/errors.hpp"

namespace gridloss::acpf {

using std::complex;

PowerFlowResult backward_forward_sweep(
    const model::FeederNetwork& net, const loads::ZipCoefficients& zip,
    const std::vector<std::pair<int, complex<double>>>& injections,
    const SweepOptions& options) {
    if (!net.per_unit)
        throw std::invalid_argument("network must be converted to per-unit first");
    if (net.topology.empty())
        throw std::invalid_argument("network topology has not been resolved");
    if (options.tol <= 0.0) throw std::invalid_argument("sweep tolerance must be positive");
    zip.validate();

    const int n = net.n_bus();
    const int slack = net.slack_index();
    const auto& topo = net.topology;

    std::vector<complex<double>> gen(n, 0.0);
    for (const auto& [id, s] : injections) gen[net.index_of(id)] += s;

    // per-bus overrides make the verifier's demand model match the builder's
    std::vector<loads::ZipCoefficients> mix(n, zip);
    for (int i = 0; i < n; ++i)
        if (net.buses[i].zip_override)
            mix[i] = loads::ZipCoefficients::from_array(*net.buses[i].zip_override);

    PowerFlowResult out;
    out.v.assign(n, complex<double>(options.slack_v_pu, 0.0));  // flat start
    std::vector<complex<double>> i_branch(n, 0.0);              // keyed by receiving bus

    for (out.iterations = 1; out.iterations <= options.max_iter; ++out.iterations) {
        // nodal current from full ZIP demand at present voltages, minus DG
        std::vector<complex<double>> i_node(n, 0.0);
        for (int i = 0; i < n; ++i) {
            if (i == slack) continue;
            const auto& bus = net.buses[i];
            const double vm = std::abs(out.v[i]);
            const complex<double> s_net(
                loads::zip_power_p(bus.p_load, mix[i], vm) - gen[i].real(),
                loads::zip_power_q(bus.q_load, mix[i], vm) - gen[i].imag());
            i_node[i] = std::conj(s_net / out.v[i]);
        }

        // backward: aggregate currents toward the root
        for (auto it = topo.order.rbegin(); it != topo.order.rend(); ++it) {
            const int b = *it;
            if (b == slack) continue;
            complex<double> flow = i_node[b];
            for (int c : topo.children[b]) flow += i_branch[c];
            i_branch[b] = flow;
        }

        // forward: propagate voltage drops from the root
        double dv = 0.0;
        for (int b : topo.order) {
            if (b == slack) continue;
            const auto& branch = net.branches[topo.branch_into[b]];
            const complex<double> v_new =
                out.v[topo.parent[b]] - complex<double>(branch.r, branch.x) * i_branch[b];
            dv = std::max(dv, std::abs(v_new - out.v[b]));
            out.v[b] = v_new;
        }
        if (dv < options.tol) {
            out.converged = true;
            break;
        }
    }
    out.iterations = std::min(out.iterations, options.max_iter);

    out.branch_current.assign(net.n_branch(), 0.0);
    out.branch_flow.assign(net.n_branch(), 0.0);
    double loss_pu = 0.0;
    for (int b = 0; b < n; ++b) {
        if (b == slack) continue;
        const int bi = topo.branch_into[b];
        const auto& branch = net.branches[bi];
        out.branch_current[bi] = i_branch[b];
        out.branch_flow[bi] = out.v[topo.parent[b]] * std::conj(i_branch[b]);
        loss_pu += std::norm(i_branch[b]) * branch.r;
    }
    out.total_losses_kw = loss_pu * net.base.base_mva * 1e3;
    return out;
}

namespace {

VerificationRecord verify_impl(const model::FeederNetwork& net,
                               const loads::ZipCoefficients& zip,
                               const conic::ConicProblem& problem,
                               const conic::ConicSolution& detail, double socp_losses_kw,
                               const std::vector<int>& dg_buses,
                               const std::vector<double>& p_pu,
                               const std::vector<double>& q_pu,
                               const SweepOptions& options) {
    std::vector<std::pair<int, complex<double>>> inj;
    inj.reserve(dg_buses.size());
    for (size_t k = 0; k < dg_buses.size(); ++k)
        inj.emplace_back(dg_buses[k], complex<double>(p_pu[k], q_pu[k]));

    VerificationRecord rec;
    rec.flow = backward_forward_sweep(net, zip, inj, options);
    if (!rec.flow.converged)
        throw VerifyError("power-flow sweep did not converge in " +
                          std::to_string(options.max_iter) + " iterations");

    rec.socp_losses_kw = socp_losses_kw;
    rec.sweep_losses_kw = rec.flow.total_losses_kw;
    rec.rel_error = std::fabs(rec.socp_losses_kw - rec.sweep_losses_kw) /
                    std::max(rec.sweep_losses_kw, 1e-12);

    for (int i = 0; i < net.n_bus(); ++i) {
        const int idx = problem.index_of(distflow::var_v_sq(net.buses[i].id));
        const double v_socp = std::sqrt(std::max(detail.values[idx], 0.0));
        rec.max_v_delta = std::max(rec.max_v_delta, std::fabs(std::abs(rec.flow.v[i]) - v_socp));
    }
    return rec;
}

}  // namespace

VerificationRecord verify_solution(const model::FeederNetwork& net,
                                   const loads::ZipCoefficients& zip,
                                   const conic::ConicProblem& problem,
                                   const distflow::PlacementSolution& placement,
                                   const SweepOptions& options) {
    return verify_impl(net, zip, problem, placement.detail, placement.predicted_losses_kw,
                       placement.dg_buses, placement.p_supply_pu, placement.q_supply_pu,
                       options);
}

VerificationRecord verify_solution(const model::FeederNetwork& net,
                                   const loads::ZipCoefficients& zip,
                                   const conic::ConicProblem& problem,
                                   const distflow::DispatchSolution& dispatch,
                                   const SweepOptions& options) {
    return verify_impl(net, zip, problem, dispatch.detail, dispatch.predicted_losses_kw,
                       dispatch.dg_buses, dispatch.p_supply_pu, dispatch.q_supply_pu,
                       options);
}

TightnessReport tightness_report(const conic::ConicProblem& problem,
                                 const conic::ConicSolution& solution,
                                 const model::FeederNetwork& net) {
    const auto& topo = net.topology;
    const int slack = net.slack_index();

    TightnessReport rep;
    rep.gap.assign(net.n_branch(), 0.0);
    rep.max_gap = -conic::kInf;
    for (int b = 0; b < net.n_bus(); ++b) {
        if (b == slack) continue;
        const int bi = topo.branch_into[b];
        const int id = net.buses[b].id;
        const double l = solution.values[problem.index_of(distflow::var_l(id))];
        const double fp = solution.values[problem.index_of(distflow::var_fp(id))];
        const double fq = solution.values[problem.index_of(distflow::var_fq(id))];
        const double v_f =
            solution.values[problem.index_of(distflow::var_v_sq(net.buses[topo.parent[b]].id))];
        const double g = l - (fp * fp + fq * fq) / v_f;
        rep.gap[bi] = g;
        if (g > rep.max_gap) {
            rep.max_gap = g;
            rep.argmax_branch = bi;
        }
        if (g > 1e-6) rep.loose_branches.push_back(bi);
    }
    return rep;
}

}  // namespace gridloss::acpf
