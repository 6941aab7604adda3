#include "gridloss/socp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <optional>
#include <stdexcept>

#include <Eigen/SparseCholesky>

namespace gridloss::conic {

namespace {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Conic standard form
//   min c'x  s.t.  Ax = b,  Gx + s = h,  s in K
// where K is an LP cone of dimension n_lp followed by second-order cones.
// Variable bounds become LP rows (or equality rows when pinned), each
// problem cone becomes one SOC block with s = [bound(x); arg(x)].
struct StandardForm {
    int n = 0, p = 0, m = 0, n_lp = 0;
    std::vector<int> soc_dims;
    SpMat A, G;
    VectorXd b, h, c;
};

StandardForm to_standard_form(const ConicProblem& prob) {
    StandardForm sf;
    sf.n = prob.n_variables();

    std::vector<Triplet> ta, tg;
    std::vector<double> b, h;

    // Equality rows: problem rows first, then pinned variables.
    for (const auto& row : prob.equalities) {
        int r = static_cast<int>(b.size());
        for (auto [idx, coeff] : row.expr.terms) ta.emplace_back(r, idx, coeff);
        b.push_back(-row.expr.offset);
    }
    for (int i = 0; i < sf.n; ++i) {
        const Variable& v = prob.vars[i];
        if (v.lo == v.hi) {
            int r = static_cast<int>(b.size());
            ta.emplace_back(r, i, 1.0);
            b.push_back(v.lo);
        }
    }
    sf.p = static_cast<int>(b.size());

    // LP cone rows from one-sided bounds: s = x - lo >= 0 and s = hi - x >= 0.
    for (int i = 0; i < sf.n; ++i) {
        const Variable& v = prob.vars[i];
        if (v.lo == v.hi) continue;
        if (v.lo > -kInf) {
            tg.emplace_back(static_cast<int>(h.size()), i, -1.0);
            h.push_back(-v.lo);
        }
        if (v.hi < kInf) {
            tg.emplace_back(static_cast<int>(h.size()), i, 1.0);
            h.push_back(v.hi);
        }
    }
    sf.n_lp = static_cast<int>(h.size());

    // SOC blocks: s_0 = bound(x), s_k = arg_k(x).
    for (const auto& cone : prob.cones) {
        int r0 = static_cast<int>(h.size());
        for (auto [idx, coeff] : cone.bound.terms) tg.emplace_back(r0, idx, -coeff);
        h.push_back(cone.bound.offset);
        for (const auto& row : cone.arg) {
            int r = static_cast<int>(h.size());
            for (auto [idx, coeff] : row.terms) tg.emplace_back(r, idx, -coeff);
            h.push_back(row.offset);
        }
        sf.soc_dims.push_back(static_cast<int>(cone.arg.size()) + 1);
    }
    sf.m = static_cast<int>(h.size());

    sf.A.resize(sf.p, sf.n);
    sf.A.setFromTriplets(ta.begin(), ta.end());
    sf.G.resize(sf.m, sf.n);
    sf.G.setFromTriplets(tg.begin(), tg.end());
    sf.A.makeCompressed();
    sf.G.makeCompressed();
    sf.b = Eigen::Map<VectorXd>(b.data(), b.size());
    sf.h = Eigen::Map<VectorXd>(h.data(), h.size());
    sf.c = VectorXd::Zero(sf.n);
    for (int i = 0; i < sf.n; ++i) sf.c[i] = prob.objective_coeff(i);
    return sf;
}

enum class IpmExit {
    optimal,
    close_to_optimal,
    primal_infeasible,
    close_to_primal_infeasible,
    dual_infeasible,
    close_to_dual_infeasible,
    max_iterations,
    numerical_trouble,
    not_converged
};

// Nesterov-Todd scaling state of one second-order cone.
struct SocScaling {
    int start = 0;  // offset into the z/s vectors
    int dim = 0;
    double eta_sq = 1.0, eta = 1.0;
    double a = 1.0, w = 0.0;
    VectorXd q;
    std::vector<int> kkt_slots;  // value indices of the dense lower block in K
};

struct Iterate {
    VectorXd x, y, z, s, lambda;
    double tau = 1.0, kap = 1.0;

    // statistics of the iterate
    double gap = 0.0, mu = 0.0, kapovert = 0.0;
    double pcost = 0.0, dcost = 0.0;
    double pres = 0.0, dres = 0.0;
    std::optional<double> relgap, pinfres, dinfres;
    double cx = 0.0, by = 0.0, hz = 0.0;
    int iter = 0;
};

// Homogeneous self-dual embedding with Mehrotra predictor-corrector.
// The KKT matrix keeps one dense (negated) W^2 block per cone; with the
// small cones produced here (dimension <= 4) the sparse low-rank expansion
// would buy nothing.
class HsdSolver {
public:
    HsdSolver(StandardForm sf, const SocpSettings& st) : f(std::move(sf)), cfg(st) {
        n_sc = static_cast<int>(f.soc_dims.size());
        cone_degree = f.n_lp + n_sc;
        dim_K = f.n + f.p + f.m;
    }

    IpmExit run();
    const Iterate& iterate() const { return w; }
    void backscale();

private:
    void equilibrate();
    void setup_kkt();
    int kkt_slot(int row, int col) const;
    void set_identity_scaling();
    bool update_scalings(const VectorXd& s, const VectorXd& z, VectorXd& lambda);
    void scale(const VectorXd& z, VectorXd& lambda) const;   // lambda = W z
    void conic_product(const VectorXd& u, const VectorXd& v, VectorXd& out) const;
    void conic_division(const VectorXd& u, const VectorXd& wv, VectorXd& out) const;
    void bring_to_cone(const VectorXd& r, VectorXd& s) const;
    double line_search(const VectorXd& lambda, const VectorXd& ds, const VectorXd& dz,
                       double tau, double dtau, double kap, double dkap) const;
    int solve_kkt(const VectorXd& rhs, VectorXd& dx, VectorXd& dy, VectorXd& dz);
    void compute_residuals();
    void update_statistics();
    IpmExit check_exit(bool relaxed) const;
    bool better_than(const Iterate& cand, const Iterate& best) const;

    StandardForm f;
    SocpSettings cfg;
    int n_sc = 0, cone_degree = 0, dim_K = 0;

    VectorXd x_equil, a_equil, g_equil;

    SpMat K;  // lower triangle
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt;
    std::vector<int> lp_slots;   // diagonal slots of the LP scaling block
    std::vector<SocScaling> socs;
    VectorXd lp_v;               // LP scaling s ./ z
    VectorXd lp_w;               // sqrt of lp_v

    Iterate w, w_best;
    bool has_best = false;
    double w_step_last = 1.0;

    // residual work
    VectorXd rx, ry, rz;
    double hresx = 0, hresy = 0, hresz = 0, rt = 0;
    double nx = 0, ny = 0, nz = 0, ns = 0;
    double resx0 = 1, resy0 = 1, resz0 = 1;
};

void HsdSolver::equilibrate() {
    x_equil = VectorXd::Ones(f.n);
    a_equil = VectorXd::Ones(f.p);
    g_equil = VectorXd::Ones(f.m);

    auto sqrt_or_one = [](double v) { return std::fabs(v) < 1e-6 ? 1.0 : std::sqrt(v); };

    for (int sweep = 0; sweep < cfg.equil_iters; ++sweep) {
        VectorXd col_max = VectorXd::Zero(f.n);
        VectorXd row_a = VectorXd::Zero(f.p);
        VectorXd row_g = VectorXd::Zero(f.m);
        for (int j = 0; j < f.n; ++j) {
            for (SpMat::InnerIterator it(f.A, j); it; ++it) {
                col_max[j] = std::max(col_max[j], std::fabs(it.value()));
                row_a[it.row()] = std::max(row_a[it.row()], std::fabs(it.value()));
            }
            for (SpMat::InnerIterator it(f.G, j); it; ++it) {
                col_max[j] = std::max(col_max[j], std::fabs(it.value()));
                row_g[it.row()] = std::max(row_g[it.row()], std::fabs(it.value()));
            }
        }
        // Rows of one cone must share a scale to preserve its geometry.
        int at = f.n_lp;
        for (int d : f.soc_dims) {
            double total = row_g.segment(at, d).sum();
            row_g.segment(at, d).setConstant(total);
            at += d;
        }
        col_max = col_max.unaryExpr(sqrt_or_one);
        row_a = row_a.unaryExpr(sqrt_or_one);
        row_g = row_g.unaryExpr(sqrt_or_one);

        for (int j = 0; j < f.n; ++j) {
            for (SpMat::InnerIterator it(f.A, j); it; ++it)
                it.valueRef() /= row_a[it.row()] * col_max[j];
            for (SpMat::InnerIterator it(f.G, j); it; ++it)
                it.valueRef() /= row_g[it.row()] * col_max[j];
        }
        x_equil = x_equil.cwiseProduct(col_max);
        a_equil = a_equil.cwiseProduct(row_a);
        g_equil = g_equil.cwiseProduct(row_g);
    }

    f.c = f.c.cwiseQuotient(x_equil);
    f.b = f.b.cwiseQuotient(a_equil);
    f.h = f.h.cwiseQuotient(g_equil);
}

void HsdSolver::backscale() {
    w.x = w.x.cwiseQuotient(x_equil * w.tau);
    w.y = w.y.cwiseQuotient(a_equil * w.tau);
    w.z = w.z.cwiseQuotient(g_equil * w.tau);
    w.s = w.s.cwiseProduct(g_equil / w.tau);
}

// K is assembled once with unit scalings; only the (3,3) block changes
// between factorizations, through cached value slots.
void HsdSolver::setup_kkt() {
    std::vector<Triplet> t;
    const double reg = cfg.static_reg;
    for (int i = 0; i < f.n; ++i) t.emplace_back(i, i, reg);
    for (int j = 0; j < f.n; ++j)
        for (SpMat::InnerIterator it(f.A, j); it; ++it)
            t.emplace_back(f.n + static_cast<int>(it.row()), j, it.value());
    for (int i = 0; i < f.p; ++i) t.emplace_back(f.n + i, f.n + i, -reg);
    for (int j = 0; j < f.n; ++j)
        for (SpMat::InnerIterator it(f.G, j); it; ++it)
            t.emplace_back(f.n + f.p + static_cast<int>(it.row()), j, it.value());
    for (int i = 0; i < f.n_lp; ++i) {
        int d = f.n + f.p + i;
        t.emplace_back(d, d, -1.0 - reg);
    }
    int at = f.n_lp;
    socs.clear();
    for (int d : f.soc_dims) {
        SocScaling sc;
        sc.start = at;
        sc.dim = d;
        sc.q = VectorXd::Zero(d - 1);
        int base = f.n + f.p + at;
        for (int ccol = 0; ccol < d; ++ccol)
            for (int rrow = ccol; rrow < d; ++rrow)
                t.emplace_back(base + rrow, base + ccol,
                               rrow == ccol ? -1.0 - reg : 0.0);
        socs.push_back(std::move(sc));
        at += d;
    }

    K.resize(dim_K, dim_K);
    K.setFromTriplets(t.begin(), t.end());
    K.makeCompressed();

    lp_slots.resize(f.n_lp);
    for (int i = 0; i < f.n_lp; ++i) {
        int d = f.n + f.p + i;
        lp_slots[i] = kkt_slot(d, d);
    }
    for (SocScaling& sc : socs) {
        int base = f.n + f.p + sc.start;
        for (int ccol = 0; ccol < sc.dim; ++ccol)
            for (int rrow = ccol; rrow < sc.dim; ++rrow)
                sc.kkt_slots.push_back(kkt_slot(base + rrow, base + ccol));
    }

    ldlt.analyzePattern(K);
}

int HsdSolver::kkt_slot(int row, int col) const {
    const int* inner = K.innerIndexPtr();
    const int* outer = K.outerIndexPtr();
    const int* begin = inner + outer[col];
    const int* end = inner + outer[col + 1];
    const int* it = std::lower_bound(begin, end, row);
    if (it == end || *it != row)
        throw std::logic_error("KKT slot lookup failed");
    return static_cast<int>(it - inner);
}

void HsdSolver::set_identity_scaling() {
    double* v = K.valuePtr();
    const double reg = cfg.static_reg;
    lp_v = VectorXd::Ones(f.n_lp);
    lp_w = VectorXd::Ones(f.n_lp);
    for (int i = 0; i < f.n_lp; ++i) v[lp_slots[i]] = -1.0 - reg;
    for (SocScaling& sc : socs) {
        sc.eta_sq = sc.eta = 1.0;
        sc.a = 1.0;
        sc.w = 0.0;
        sc.q.setZero();
        int k = 0;
        for (int ccol = 0; ccol < sc.dim; ++ccol)
            for (int rrow = ccol; rrow < sc.dim; ++rrow)
                v[sc.kkt_slots[k++]] = rrow == ccol ? -1.0 - reg : 0.0;
    }
}

bool HsdSolver::update_scalings(const VectorXd& s, const VectorXd& z, VectorXd& lambda) {
    lp_v = s.head(f.n_lp).cwiseQuotient(z.head(f.n_lp));
    lp_w = lp_v.cwiseSqrt();

    for (SocScaling& sc : socs) {
        const auto sk = s.segment(sc.start, sc.dim);
        const auto zk = z.segment(sc.start, sc.dim);
        const double sres = sk[0] * sk[0] - sk.tail(sc.dim - 1).squaredNorm();
        const double zres = zk[0] * zk[0] - zk.tail(sc.dim - 1).squaredNorm();
        if (sres <= 0.0 || zres <= 0.0) return false;  // left the cone

        const double snorm = std::sqrt(sres);
        const double znorm = std::sqrt(zres);
        VectorXd skbar = sk / snorm;
        VectorXd zkbar = zk / znorm;
        sc.eta_sq = snorm / znorm;
        sc.eta = std::sqrt(sc.eta_sq);

        // normalized Nesterov-Todd scaling point
        double gamma = std::sqrt(0.5 * (1.0 + skbar.dot(zkbar)));
        sc.a = (0.5 / gamma) * (skbar[0] + zkbar[0]);
        sc.q = (0.5 / gamma) * (skbar.tail(sc.dim - 1) - zkbar.tail(sc.dim - 1));
        sc.w = sc.q.squaredNorm();
    }

    // refresh the dense -W^2 blocks:
    //   W^2 = eta^2 * [ a^2 + w      cq' ]   c = 1 + a + w/(1+a)
    //                 [ cq   I + d qq'   ]   d = 1 + 2/(1+a) + w/(1+a)^2
    double* v = K.valuePtr();
    const double reg = cfg.static_reg;
    for (int i = 0; i < f.n_lp; ++i) v[lp_slots[i]] = -lp_v[i] - reg;
    for (SocScaling& sc : socs) {
        const double cc = 1.0 + sc.a + sc.w / (1.0 + sc.a);
        const double dd = 1.0 + 2.0 / (1.0 + sc.a) + sc.w / ((1.0 + sc.a) * (1.0 + sc.a));
        int k = 0;
        for (int ccol = 0; ccol < sc.dim; ++ccol) {
            for (int rrow = ccol; rrow < sc.dim; ++rrow) {
                double val;
                if (ccol == 0 && rrow == 0)
                    val = sc.a * sc.a + sc.w;
                else if (ccol == 0)
                    val = cc * sc.q[rrow - 1];
                else
                    val = (rrow == ccol ? 1.0 : 0.0) + dd * sc.q[rrow - 1] * sc.q[ccol - 1];
                v[sc.kkt_slots[k++]] = -sc.eta_sq * val - (rrow == ccol ? reg : 0.0);
            }
        }
    }

    scale(z, lambda);
    return true;
}

void HsdSolver::scale(const VectorXd& z, VectorXd& lambda) const {
    lambda.head(f.n_lp) = lp_w.cwiseProduct(z.head(f.n_lp));
    for (const SocScaling& sc : socs) {
        const auto zk = z.segment(sc.start, sc.dim);
        const double zeta = sc.q.dot(zk.tail(sc.dim - 1));
        const double factor = zk[0] + zeta / (1.0 + sc.a);
        lambda[sc.start] = sc.eta * (sc.a * zk[0] + zeta);
        lambda.segment(sc.start + 1, sc.dim - 1) =
            sc.eta * (zk.tail(sc.dim - 1) + factor * sc.q);
    }
}

void HsdSolver::conic_product(const VectorXd& u, const VectorXd& v, VectorXd& out) const {
    out.head(f.n_lp) = u.head(f.n_lp).cwiseProduct(v.head(f.n_lp));
    for (const SocScaling& sc : socs) {
        const auto uk = u.segment(sc.start, sc.dim);
        const auto vk = v.segment(sc.start, sc.dim);
        out[sc.start] = uk.dot(vk);
        out.segment(sc.start + 1, sc.dim - 1) =
            uk[0] * vk.tail(sc.dim - 1) + vk[0] * uk.tail(sc.dim - 1);
    }
}

void HsdSolver::conic_division(const VectorXd& u, const VectorXd& wv, VectorXd& out) const {
    out.head(f.n_lp) = wv.head(f.n_lp).cwiseQuotient(u.head(f.n_lp));
    for (const SocScaling& sc : socs) {
        const auto uk = u.segment(sc.start, sc.dim);
        const auto wk = wv.segment(sc.start, sc.dim);
        const double rho = uk[0] * uk[0] - uk.tail(sc.dim - 1).squaredNorm();
        const double zeta = uk.tail(sc.dim - 1).dot(wk.tail(sc.dim - 1));
        const double factor = (zeta / uk[0] - wk[0]) / rho;
        out[sc.start] = (uk[0] * wk[0] - zeta) / rho;
        out.segment(sc.start + 1, sc.dim - 1) =
            factor * uk.tail(sc.dim - 1) + wk.tail(sc.dim - 1) / uk[0];
    }
}

void HsdSolver::bring_to_cone(const VectorXd& r, VectorXd& s) const {
    double alpha = -cfg.step_damping;
    for (int i = 0; i < f.n_lp; ++i)
        if (r[i] <= 0.0 && -r[i] > alpha) alpha = -r[i];
    for (const SocScaling& sc : socs) {
        const double cres =
            r[sc.start] - r.segment(sc.start + 1, sc.dim - 1).norm();
        if (cres <= 0.0 && -cres > alpha) alpha = -cres;
    }
    alpha += 1.0;
    s = r;
    s.head(f.n_lp).array() += alpha;
    for (const SocScaling& sc : socs) s[sc.start] += alpha;
}

double HsdSolver::line_search(const VectorXd& lambda, const VectorXd& ds,
                              const VectorXd& dz, double tau, double dtau,
                              double kap, double dkap) const {
    double alpha;
    if (f.n_lp > 0) {
        const double rhomin = ds.head(f.n_lp).cwiseQuotient(lambda.head(f.n_lp)).minCoeff();
        const double sigmin = dz.head(f.n_lp).cwiseQuotient(lambda.head(f.n_lp)).minCoeff();
        constexpr double eps = 1e-13;
        if (-sigmin > -rhomin)
            alpha = sigmin < 0.0 ? 1.0 / -sigmin : 1.0 / eps;
        else
            alpha = rhomin < 0.0 ? 1.0 / -rhomin : 1.0 / eps;
    } else {
        alpha = 10.0;
    }

    const double tau_step = -tau / dtau;
    const double kap_step = -kap / dkap;
    if (tau_step > 0.0 && tau_step < alpha) alpha = tau_step;
    if (kap_step > 0.0 && kap_step < alpha) alpha = kap_step;

    for (const SocScaling& sc : socs) {
        const auto lk = lambda.segment(sc.start, sc.dim);
        const double lknorm2 = lk[0] * lk[0] - lk.tail(sc.dim - 1).squaredNorm();
        if (lknorm2 <= 0.0) continue;
        const double lknorm = std::sqrt(lknorm2);
        const VectorXd lkbar = lk / lknorm;
        const double inv = 1.0 / lknorm;

        const auto dsk = ds.segment(sc.start, sc.dim);
        const auto dzk = dz.segment(sc.start, sc.dim);
        const double lds = lkbar[0] * dsk[0] - lkbar.tail(sc.dim - 1).dot(dsk.tail(sc.dim - 1));
        const double ldz = lkbar[0] * dzk[0] - lkbar.tail(sc.dim - 1).dot(dzk.tail(sc.dim - 1));

        double factor = (lds + dsk[0]) / (lkbar[0] + 1.0);
        const double rho0 = inv * lds;
        const double rhonorm =
            (inv * (dsk.tail(sc.dim - 1) - factor * lkbar.tail(sc.dim - 1))).norm() - rho0;

        factor = (ldz + dzk[0]) / (lkbar[0] + 1.0);
        const double sig0 = inv * ldz;
        const double signorm =
            (inv * (dzk.tail(sc.dim - 1) - factor * lkbar.tail(sc.dim - 1))).norm() - sig0;

        const double conic_step = std::max({0.0, rhonorm, signorm});
        if (conic_step != 0.0) alpha = std::min(alpha, 1.0 / conic_step);
    }
    return std::clamp(alpha, cfg.step_min, cfg.step_max);
}

// Solves K u = rhs with iterative refinement against the assembled
// (statically regularized) matrix; returns refinement count.
int HsdSolver::solve_kkt(const VectorXd& rhs, VectorXd& dx, VectorXd& dy, VectorXd& dz) {
    VectorXd u = ldlt.solve(rhs);
    const double threshold = (1.0 + rhs.lpNorm<Eigen::Infinity>()) * cfg.refine_tol;
    double err_prev = std::numeric_limits<double>::max();
    VectorXd correction(dim_K);

    int k = 0;
    for (; k <= cfg.max_refine; ++k) {
        VectorXd res = rhs - K.selfadjointView<Eigen::Lower>() * u;
        const double err = res.lpNorm<Eigen::Infinity>();
        if (k > 0 && err > err_prev) {
            u -= correction;  // refinement made it worse, undo
            --k;
            break;
        }
        if (k == cfg.max_refine || err < threshold ||
            (k > 0 && err_prev < cfg.refine_decrease * err))
            break;
        err_prev = err;
        correction = ldlt.solve(res);
        u += correction;
    }
    dx = u.head(f.n);
    dy = u.segment(f.n, f.p);
    dz = u.tail(f.m);
    return k;
}

void HsdSolver::compute_residuals() {
    // rx = -A'y - G'z - tau c ; ry = Ax - tau b ; rz = s + Gx - tau h
    rx = -(f.G.transpose() * w.z);
    if (f.p > 0) rx -= f.A.transpose() * w.y;
    hresx = rx.norm();
    rx -= w.tau * f.c;

    if (f.p > 0) {
        ry = f.A * w.x;
        hresy = ry.norm();
        ry -= w.tau * f.b;
    } else {
        ry.resize(0);
        hresy = 0.0;
    }

    rz = w.s + f.G * w.x;
    hresz = rz.norm();
    rz -= w.tau * f.h;

    w.cx = f.c.dot(w.x);
    w.by = f.p > 0 ? f.b.dot(w.y) : 0.0;
    w.hz = f.h.dot(w.z);
    rt = w.kap + w.cx + w.by + w.hz;

    nx = w.x.norm();
    ny = w.y.norm();
    nz = w.z.norm();
    ns = w.s.norm();
}

void HsdSolver::update_statistics() {
    w.gap = w.s.dot(w.z);
    w.mu = (w.gap + w.kap * w.tau) / (cone_degree + 1);
    w.kapovert = w.kap / w.tau;
    w.pcost = w.cx / w.tau;
    w.dcost = -(w.hz + w.by) / w.tau;

    if (w.pcost < 0.0)
        w.relgap = w.gap / -w.pcost;
    else if (w.dcost > 0.0)
        w.relgap = w.gap / w.dcost;
    else
        w.relgap.reset();

    const double nry = f.p > 0 ? ry.norm() / std::max(resy0 + nx, 1.0) : 0.0;
    const double nrz = rz.norm() / std::max(resz0 + nx + ns, 1.0);
    w.pres = std::max(nry, nrz) / w.tau;
    w.dres = rx.norm() / std::max(resx0 + ny + nz, 1.0) / w.tau;

    w.pinfres.reset();
    w.dinfres.reset();
    if ((w.hz + w.by) / std::max(ny + nz, 1.0) < -cfg.tol_gap_rel)
        w.pinfres = hresx / std::max(ny + nz, 1.0);
    if (w.cx / std::max(nx, 1.0) < -cfg.tol_gap_rel)
        w.dinfres = std::max(hresy / std::max(nx, 1.0), hresz / std::max(nx + ns, 1.0));
}

IpmExit HsdSolver::check_exit(bool relaxed) const {
    const double feastol = relaxed ? cfg.tol_feas_relaxed : cfg.tol_feas;
    const double abstol = relaxed ? cfg.tol_gap_abs_relaxed : cfg.tol_gap_abs;
    const double reltol = relaxed ? cfg.tol_gap_rel_relaxed : cfg.tol_gap_rel;

    if ((-w.cx > 0.0 || -w.by - w.hz >= -abstol) && w.pres < feastol && w.dres < feastol &&
        (w.gap < abstol || (w.relgap && *w.relgap < reltol)))
        return relaxed ? IpmExit::close_to_optimal : IpmExit::optimal;

    if (w.dinfres && *w.dinfres < feastol && w.tau < w.kap)
        return relaxed ? IpmExit::close_to_dual_infeasible : IpmExit::dual_infeasible;

    if ((w.pinfres && *w.pinfres < feastol && w.tau < w.kap) ||
        (w.tau < feastol && w.kap < feastol && w.pinfres && *w.pinfres < feastol))
        return relaxed ? IpmExit::close_to_primal_infeasible : IpmExit::primal_infeasible;

    return IpmExit::not_converged;
}

bool HsdSolver::better_than(const Iterate& cand, const Iterate& best) const {
    if (cand.pinfres && cand.kapovert > 1.0) {
        if (best.pinfres)
            return cand.gap > 0.0 && best.gap > 0.0 && cand.gap < best.gap &&
                   *cand.pinfres > 0.0 && *cand.pinfres < best.pres &&
                   cand.mu > 0.0 && cand.mu < best.mu;
        return cand.gap > 0.0 && best.gap > 0.0 && cand.gap < best.gap &&
               cand.mu > 0.0 && cand.mu < best.mu;
    }
    return cand.gap > 0.0 && best.gap > 0.0 && cand.gap < best.gap &&
           cand.pres > 0.0 && cand.pres < best.pres &&
           cand.dres > 0.0 && cand.dres < best.dres &&
           cand.kapovert > 0.0 && cand.kapovert < best.kapovert &&
           cand.mu > 0.0 && cand.mu < best.mu;
}

IpmExit HsdSolver::run() {
    equilibrate();
    setup_kkt();
    set_identity_scaling();

    resx0 = std::max(1.0, f.c.norm());
    resy0 = std::max(1.0, f.b.norm());
    resz0 = std::max(1.0, f.h.norm());

    ldlt.factorize(K);
    if (ldlt.info() != Eigen::Success) return IpmExit::numerical_trouble;

    w.x.resize(f.n);
    w.y.resize(f.p);
    w.z.resize(f.m);
    w.s.resize(f.m);
    w.lambda.resize(f.m);

    // Initial point: solve two least-squares systems with unit scaling and
    // push the conic parts strictly inside the cone.
    VectorXd rhs1(dim_K);
    rhs1.setZero();
    rhs1.segment(f.n, f.p) = f.b;
    rhs1.tail(f.m) = f.h;

    VectorXd dx1(f.n), dy1(f.p), dz1(f.m);
    solve_kkt(rhs1, dx1, dy1, dz1);
    w.x = dx1;
    bring_to_cone(-dz1, w.s);

    VectorXd rhs2(dim_K);
    rhs2.setZero();
    rhs2.head(f.n) = -f.c;
    VectorXd dx2(f.n), dy2(f.p), dz2(f.m);
    solve_kkt(rhs2, dx2, dy2, dz2);
    w.y = dy2;
    bring_to_cone(dz2, w.z);

    rhs1.head(f.n) = -f.c;  // from here on rhs1 = [-c; b; h]

    w.tau = 1.0;
    w.kap = 1.0;

    VectorXd w_dz(f.m), ds_by_w(f.m), ds(f.m), pc1(f.m), pc2(f.m);
    double pres_prev = std::numeric_limits<double>::max();
    IpmExit code = IpmExit::not_converged;

    // opt-in iteration log for debugging convergence stalls
    static const bool trace = std::getenv("GRIDLOSS_IPM_TRACE") != nullptr;

    for (w.iter = 0; w.iter <= cfg.max_iter; ++w.iter) {
        compute_residuals();
        update_statistics();
        if (trace)
            std::fprintf(stderr,
                         "it %2d pcost %+.9e gap %.3e pres %.3e dres %.3e "
                         "k/t %.3e mu %.3e step %.4f\n",
                         w.iter, w.pcost, w.gap, w.pres, w.dres, w.kapovert, w.mu,
                         w_step_last);

        // Backtrack to the best seen iterate when the last step was harmful.
        if (w.iter > 0 && (w.pres > cfg.divergence_guard * pres_prev || w.gap < 0.0)) {
            w = w_best;
            code = check_exit(true);
            if (code == IpmExit::not_converged) code = IpmExit::numerical_trouble;
            break;
        }
        pres_prev = w.pres;

        code = check_exit(false);
        if (code != IpmExit::not_converged) break;

        const double last_step = w.iter > 0 ? w_step_last : 1.0;
        if (w.iter > 0 && last_step == cfg.step_min * cfg.step_damping) {
            w = w_best;
            code = check_exit(true);
            if (code == IpmExit::not_converged) code = IpmExit::numerical_trouble;
            break;
        }
        if (w.iter == cfg.max_iter) {
            if (has_best && !better_than(w, w_best)) w = w_best;
            code = check_exit(true);
            if (code == IpmExit::not_converged) code = IpmExit::max_iterations;
            break;
        }
        if (std::isnan(w.pcost)) {
            if (has_best && better_than(w_best, w)) {
                w = w_best;
                code = check_exit(true);
                if (code == IpmExit::not_converged) code = IpmExit::numerical_trouble;
            } else {
                code = IpmExit::numerical_trouble;
            }
            break;
        }

        if (!has_best || better_than(w, w_best)) {
            w_best = w;
            has_best = true;
        }

        if (!update_scalings(w.s, w.z, w.lambda)) {
            // slack or multiplier left the cone: numerical dead end
            if (has_best) w = w_best;
            code = check_exit(true);
            if (code == IpmExit::not_converged) code = IpmExit::numerical_trouble;
            break;
        }
        ldlt.factorize(K);
        if (ldlt.info() != Eigen::Success) {
            // scaled KKT went numerically singular, usually right at the end
            // of a solve; the best iterate is often already good enough
            if (has_best) w = w_best;
            code = check_exit(true);
            if (code == IpmExit::not_converged) code = IpmExit::numerical_trouble;
            break;
        }

        solve_kkt(rhs1, dx1, dy1, dz1);

        // affine (predictor) direction
        rhs2.head(f.n) = rx;
        rhs2.segment(f.n, f.p) = -ry;
        rhs2.tail(f.m) = w.s - rz;
        solve_kkt(rhs2, dx2, dy2, dz2);

        const double dtau_denom =
            w.kap / w.tau - f.c.dot(dx1) - f.b.dot(dy1) - f.h.dot(dz1);
        const double dtau_aff =
            (rt - w.kap + f.c.dot(dx2) + f.b.dot(dy2) + f.h.dot(dz2)) / dtau_denom;

        dz2 += dtau_aff * dz1;
        scale(dz2, w_dz);
        ds_by_w = -w_dz - w.lambda;
        const double dkap_aff = -w.kap - w.kap / w.tau * dtau_aff;

        const double step_aff =
            line_search(w.lambda, ds_by_w, w_dz, w.tau, dtau_aff, w.kap, dkap_aff);

        const double sigma =
            std::clamp(std::pow(1.0 - step_aff, 3), cfg.sigma_min, cfg.sigma_max);

        // corrector: ds = lambda o lambda + (W^-T dsaff) o (W dzaff) - sigma mu e
        conic_product(w.lambda, w.lambda, pc1);
        conic_product(ds_by_w, w_dz, pc2);
        const double sigmamu = sigma * w.mu;
        pc1 += pc2;
        pc1.head(f.n_lp).array() -= sigmamu;
        for (const SocScaling& sc : socs) pc1[sc.start] -= sigmamu;

        conic_division(w.lambda, pc1, ds_by_w);
        scale(ds_by_w, ds);

        const double oms = 1.0 - sigma;
        rhs2.head(f.n) = oms * rx;
        rhs2.segment(f.n, f.p) = -oms * ry;
        rhs2.tail(f.m) = -oms * rz + ds;
        solve_kkt(rhs2, dx2, dy2, dz2);

        const double bkap = w.kap * w.tau + dkap_aff * dtau_aff - sigmamu;
        const double dtau =
            (oms * rt - bkap / w.tau + f.c.dot(dx2) + f.b.dot(dy2) + f.h.dot(dz2)) /
            dtau_denom;

        dx2 += dtau * dx1;
        dy2 += dtau * dy1;
        dz2 += dtau * dz1;

        scale(dz2, w_dz);
        ds_by_w = -(ds_by_w + w_dz);
        const double dkap = -(bkap + w.kap * dtau) / w.tau;

        const double step = cfg.step_damping *
            line_search(w.lambda, ds_by_w, w_dz, w.tau, dtau, w.kap, dkap);
        w_step_last = step;

        scale(ds_by_w, ds);

        w.x += step * dx2;
        w.y += step * dy2;
        w.z += step * dz2;
        w.s += step * ds;
        w.kap += step * dkap;
        w.tau += step * dtau;
    }

    return code;
}

}  // namespace

ConicSolution solve_continuous(const ConicProblem& problem, const SocpSettings& settings) {
    problem.validate();

    StandardForm sf = to_standard_form(problem);
    if (sf.m == 0)
        throw std::invalid_argument(
            "problem has no inequality structure (no bounds and no cones)");

    HsdSolver solver(std::move(sf), settings);
    IpmExit code = solver.run();
    solver.backscale();

    ConicSolution sol;
    sol.iterations = solver.iterate().iter;
    sol.values = solver.iterate().x;

    switch (code) {
        case IpmExit::optimal:
        case IpmExit::close_to_optimal:
            sol.status = SolveStatus::optimal;
            break;
        case IpmExit::primal_infeasible:
        case IpmExit::close_to_primal_infeasible:
            sol.status = SolveStatus::infeasible;
            sol.message = "primal infeasibility certificate found";
            break;
        case IpmExit::dual_infeasible:
        case IpmExit::close_to_dual_infeasible:
            sol.status = SolveStatus::unbounded;
            sol.message = "dual infeasibility certificate found (objective unbounded)";
            break;
        default:
            sol.status = SolveStatus::tolerance_not_met;
            sol.message = code == IpmExit::max_iterations ? "iteration limit reached"
                                                          : "numerical trouble";
            break;
    }

    if (sol.status == SolveStatus::optimal || sol.status == SolveStatus::tolerance_not_met) {
        sol.objective = problem.objective_value(sol.values);
        double eq = 0.0;
        for (const auto& row : problem.equalities)
            eq = std::max(eq, std::fabs(row.expr.eval(sol.values)));
        for (int i = 0; i < problem.n_variables(); ++i) {
            const Variable& v = problem.vars[i];
            if (v.lo == v.hi) eq = std::max(eq, std::fabs(sol.values[i] - v.lo));
        }
        double cone_viol = 0.0;
        for (int i = 0; i < problem.n_variables(); ++i) {
            const Variable& v = problem.vars[i];
            if (v.lo == v.hi) continue;
            if (v.lo > -kInf) cone_viol = std::max(cone_viol, v.lo - sol.values[i]);
            if (v.hi < kInf) cone_viol = std::max(cone_viol, sol.values[i] - v.hi);
        }
        for (const auto& cone : problem.cones) {
            double nrm = 0.0;
            for (const auto& row : cone.arg) {
                double val = row.eval(sol.values);
                nrm += val * val;
            }
            cone_viol = std::max(cone_viol, std::sqrt(nrm) - cone.bound.eval(sol.values));
        }
        sol.residuals.max_equality = eq;
        sol.residuals.max_cone = cone_viol;
        sol.residuals.duality_gap = solver.iterate().gap;
    }
    return sol;
}

}  // namespace gridloss::conic
