#include "gridloss/conic.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gridloss::conic {

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::unbounded: return "unbounded";
        case SolveStatus::tolerance_not_met: return "tolerance_not_met";
    }
    return "?";
}

int ConicProblem::add_variable(std::string name, double lo, double hi, bool binary) {
    int idx = n_variables();
    auto [it, inserted] = by_name_.emplace(name, idx);
    if (!inserted)
        throw std::invalid_argument("duplicate variable name '" + name + "'");
    vars.push_back({std::move(name), lo, hi, binary});
    objective_.push_back(0.0);
    if (binary) binaries.push_back(idx);
    return idx;
}

int ConicProblem::index_of(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end())
        throw std::invalid_argument("unknown variable name '" + name + "'");
    return it->second;
}

bool ConicProblem::has_variable(const std::string& name) const {
    return by_name_.count(name) > 0;
}

void ConicProblem::add_objective_term(int var, double coeff) {
    objective_.at(var) += coeff;
}

void ConicProblem::add_equality(LinearExpr expr, double rhs) {
    expr.offset -= rhs;
    equalities.push_back({std::move(expr)});
}

void ConicProblem::add_soc(SocConstraint cone) {
    cones.push_back(std::move(cone));
}

void ConicProblem::fix_variable(int var, double value) {
    vars.at(var).lo = value;
    vars.at(var).hi = value;
}

double ConicProblem::objective_value(const Eigen::VectorXd& x) const {
    double v = 0.0;
    for (int i = 0; i < n_variables(); ++i) v += objective_[i] * x[i];
    return v;
}

void ConicProblem::validate() const {
    auto check_expr = [&](const LinearExpr& e, const std::string& where) {
        for (auto [idx, coeff] : e.terms) {
            if (idx < 0 || idx >= n_variables())
                throw std::invalid_argument(where + ": variable index " + std::to_string(idx) +
                                            " out of range");
            if (!std::isfinite(coeff))
                throw std::invalid_argument(where + ": non-finite coefficient");
        }
        if (!std::isfinite(e.offset))
            throw std::invalid_argument(where + ": non-finite offset");
    };
    for (int i = 0; i < n_variables(); ++i) {
        const Variable& v = vars[i];
        if (v.lo > v.hi)
            throw std::invalid_argument("variable '" + v.name + "': lo > hi");
        if (v.is_binary && (v.lo < 0.0 || v.hi > 1.0))
            throw std::invalid_argument("binary variable '" + v.name + "': bounds outside [0,1]");
    }
    for (size_t r = 0; r < equalities.size(); ++r)
        check_expr(equalities[r].expr, "equality " + std::to_string(r));
    for (size_t c = 0; c < cones.size(); ++c) {
        const auto& cone = cones[c];
        if (cone.arg.empty())
            throw std::invalid_argument("cone " + std::to_string(c) + ": empty argument");
        check_expr(cone.bound, "cone " + std::to_string(c) + " bound");
        for (const auto& row : cone.arg)
            check_expr(row, "cone " + std::to_string(c) + " arg");
    }
}

namespace {

void print_expr(std::ostream& os, const LinearExpr& e,
                const std::vector<Variable>& vars) {
    bool first = true;
    for (auto [idx, coeff] : e.terms) {
        if (!first) os << " + ";
        os << coeff << "*" << vars[idx].name;
        first = false;
    }
    if (e.offset != 0.0 || first) {
        if (!first) os << " + ";
        os << e.offset;
    }
}

}  // namespace

std::string ConicProblem::dump() const {
    std::ostringstream os;
    os.precision(12);
    for (int i = 0; i < n_variables(); ++i) {
        const Variable& v = vars[i];
        os << "var " << i << " " << v.name << " in [" << v.lo << ", " << v.hi << "]";
        if (v.is_binary) os << " binary";
        os << "\n";
    }
    os << "min ";
    bool first = true;
    for (int i = 0; i < n_variables(); ++i) {
        if (objective_[i] == 0.0) continue;
        if (!first) os << " + ";
        os << objective_[i] << "*" << vars[i].name;
        first = false;
    }
    if (first) os << "0";
    os << "\n";
    for (size_t r = 0; r < equalities.size(); ++r) {
        os << "eq " << r << ": ";
        print_expr(os, equalities[r].expr, vars);
        os << " == 0\n";
    }
    for (size_t c = 0; c < cones.size(); ++c) {
        os << "soc " << c << ": ||";
        for (size_t k = 0; k < cones[c].arg.size(); ++k) {
            if (k) os << "; ";
            print_expr(os, cones[c].arg[k], vars);
        }
        os << "|| <= ";
        print_expr(os, cones[c].bound, vars);
        os << "\n";
    }
    return os.str();
}

}  // namespace gridloss::conic
