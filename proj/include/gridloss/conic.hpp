#pragma once

#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace gridloss::conic {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Affine expression sum_k coeff_k * x_{idx_k} + offset over declared variables.
struct LinearExpr {
    std::vector<std::pair<int, double>> terms;
    double offset = 0.0;

    LinearExpr() = default;
    LinearExpr(std::initializer_list<std::pair<int, double>> t, double off = 0.0)
        : terms(t), offset(off) {}

    LinearExpr& add(int var, double coeff) {
        if (coeff != 0.0) terms.emplace_back(var, coeff);
        return *this;
    }
    double eval(const Eigen::VectorXd& x) const {
        double v = offset;
        for (auto [i, c] : terms) v += c * x[i];
        return v;
    }
};

struct Variable {
    std::string name;
    double lo = -kInf;
    double hi = kInf;
    bool is_binary = false;
};

struct EqualityRow {
    LinearExpr expr;  // expr == 0 after folding the rhs into the offset
};

// Second-order cone || [arg_1; ...; arg_m] ||_2 <= bound, all rows affine.
struct SocConstraint {
    std::vector<LinearExpr> arg;
    LinearExpr bound;
};

enum class SolveStatus { optimal, infeasible, unbounded, tolerance_not_met };

const char* to_string(SolveStatus s);

struct Residuals {
    double max_equality = 0.0;   // max |row residual|
    double max_cone = 0.0;       // max (||arg|| - bound), negative when interior
    double duality_gap = 0.0;
};

struct ConicSolution {
    SolveStatus status = SolveStatus::tolerance_not_met;
    Eigen::VectorXd values;      // one entry per declared variable
    double objective = std::numeric_limits<double>::quiet_NaN();
    Residuals residuals;
    int iterations = 0;
    std::string message;

    bool ok() const { return status == SolveStatus::optimal; }
};

// Linear-objective problem over equality rows, variable bounds and
// second-order cones, with an optional binary subset handled by the
// branch-and-bound layer. Variables are referenced by index; names exist
// for diagnostics and solution extraction.
class ConicProblem {
public:
    int add_variable(std::string name, double lo = -kInf, double hi = kInf,
                     bool binary = false);
    int index_of(const std::string& name) const;   // throws on unknown name
    bool has_variable(const std::string& name) const;

    void add_objective_term(int var, double coeff);
    // expr == rhs; the rhs is folded into the expression offset.
    void add_equality(LinearExpr expr, double rhs = 0.0);
    void add_soc(SocConstraint cone);

    // Pins a variable (used when branching on binaries and for fixed stages).
    void fix_variable(int var, double value);

    int n_variables() const { return static_cast<int>(vars.size()); }
    double objective_coeff(int var) const { return objective_[var]; }
    double objective_value(const Eigen::VectorXd& x) const;

    // Structural checks: indices in range, lo <= hi, binaries within [0,1].
    // Throws std::invalid_argument.
    void validate() const;

    // One line per variable, equality row and cone; for debugging dumps.
    std::string dump() const;

    std::vector<Variable> vars;
    std::vector<EqualityRow> equalities;
    std::vector<SocConstraint> cones;
    std::vector<int> binaries;

private:
    std::vector<double> objective_;
    std::unordered_map<std::string, int> by_name_;
};

}  // namespace gridloss::conic
