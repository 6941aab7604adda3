#include <doctest.h>

#include <stdexcept>

#include "gridloss/conic.hpp"

using namespace gridloss::conic;

TEST_CASE("linear expressions evaluate with offset") {
    LinearExpr e{{{0, 2.0}, {2, -1.0}}, 0.5};
    Eigen::VectorXd x(3);
    x << 1.0, 10.0, 3.0;
    CHECK(e.eval(x) == doctest::Approx(2.0 - 3.0 + 0.5));

    LinearExpr built;
    built.add(1, 4.0).add(1, 0.0);  // zero coefficients are dropped
    CHECK(built.terms.size() == 1);
    CHECK(built.eval(x) == doctest::Approx(40.0));
}

TEST_CASE("variables are found by name and validated") {
    ConicProblem prob;
    const int x = prob.add_variable("x", 0.0, 2.0);
    const int a = prob.add_variable("a", 0.0, 1.0, /*binary=*/true);
    CHECK(prob.index_of("x") == x);
    CHECK(prob.has_variable("a"));
    CHECK(!prob.has_variable("b"));
    CHECK_THROWS_AS((void)prob.index_of("b"), std::invalid_argument);
    CHECK(prob.binaries == std::vector<int>{a});
    CHECK_NOTHROW(prob.validate());
}

TEST_CASE("validate rejects inconsistent structure") {
    SUBCASE("reversed bounds") {
        ConicProblem prob;
        prob.add_variable("x", 1.0, 0.0);
        CHECK_THROWS_AS(prob.validate(), std::invalid_argument);
    }
    SUBCASE("binary outside the unit box") {
        ConicProblem prob;
        prob.add_variable("a", 0.0, 2.0, /*binary=*/true);
        CHECK_THROWS_AS(prob.validate(), std::invalid_argument);
    }
    SUBCASE("equality referencing an undeclared variable") {
        ConicProblem prob;
        prob.add_variable("x");
        prob.add_equality(LinearExpr{{{3, 1.0}}, 0.0}, 1.0);
        CHECK_THROWS_AS(prob.validate(), std::invalid_argument);
    }
    SUBCASE("cone referencing an undeclared variable") {
        ConicProblem prob;
        prob.add_variable("x");
        SocConstraint cone;
        cone.arg.push_back(LinearExpr{{{5, 1.0}}, 0.0});
        cone.bound = LinearExpr{{{0, 1.0}}, 0.0};
        prob.add_soc(std::move(cone));
        CHECK_THROWS_AS(prob.validate(), std::invalid_argument);
    }
}

TEST_CASE("objective bookkeeping sums repeated terms") {
    ConicProblem prob;
    const int x = prob.add_variable("x");
    const int y = prob.add_variable("y");
    prob.add_objective_term(x, 2.0);
    prob.add_objective_term(x, 1.0);
    prob.add_objective_term(y, -4.0);
    CHECK(prob.objective_coeff(x) == doctest::Approx(3.0));

    Eigen::VectorXd v(2);
    v << 2.0, 1.0;
    CHECK(prob.objective_value(v) == doctest::Approx(6.0 - 4.0));
}

TEST_CASE("fix_variable pins both bounds") {
    ConicProblem prob;
    const int x = prob.add_variable("x", 0.0, 5.0);
    prob.fix_variable(x, 3.0);
    CHECK(prob.vars[x].lo == doctest::Approx(3.0));
    CHECK(prob.vars[x].hi == doctest::Approx(3.0));
}

TEST_CASE("dump mentions every variable") {
    ConicProblem prob;
    prob.add_variable("p_dg[6]", 0.0, 1.0);
    prob.add_variable("v_sq[2]", 0.9, 1.1);
    const std::string text = prob.dump();
    CHECK(text.find("p_dg[6]") != std::string::npos);
    CHECK(text.find("v_sq[2]") != std::string::npos);
}
