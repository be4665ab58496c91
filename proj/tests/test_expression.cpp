#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "entroscope/expression.hpp"
#include "entroscope/probes.hpp"

using namespace entroscope;

namespace {

double ev(const std::string& src, const ModelSpace& sp, const Point& y) {
  return parse_expression(src, sp).eval(y, nullptr);
}

}  // namespace

TEST_CASE("round trip: parse, print, reparse gives the identical tree") {
  ModelSpace e3 = ModelSpace::euclidean(3);
  ModelSpace s1 = ModelSpace::circle();

  const std::vector<std::string> euclidean_corpus = {
      "y1",
      "y2",
      "y3",
      "0",
      "1.5",
      "2.25e-3",
      "1e6",
      ".5",
      "y1 + y2",
      "y1 - y2",
      "y1 * y2",
      "y1 / (1 + y2^2)",
      "y1^2",
      "y1^0",
      "y1^9",
      "2^10",
      "y1^3 - y2^3",
      "-y1",
      "--y1",
      "-(y1 + y2)",
      "-y1^2",
      "-(y1^2)",
      "y1 - -y2",
      "sin(y1)",
      "cos(y2)",
      "exp(-y1^2)",
      "sqrt(y1^2 + y2^2)",
      "abs(y1 - y2)",
      "atan(y1 * y2)",
      "bump(y1)",
      "bump(y1 / 2)",
      "norm(y1)",
      "norm(y1, y2)",
      "norm(y1, y2, y3)",
      "y1 / norm(y1, y2)",
      "(y1 - 0.5) / norm(y1, y2)",
      "sin(cos(exp(y1)))",
      "sin(y1) * cos(y2) + exp(y3)",
      "1 / (1 + exp(-y1))",
      "(y1 + y2) * (y1 - y2)",
      "((y1))",
      "(((y1 + 1)))",
      "y1 * y2 * y3",
      "y1 + y2 + y3",
      "y1 - y2 - y3",
      "y1 / y2 / y3",
      "2 * y1 ^ 2 + 3 * y2 ^ 2",
      "y1^2 + sin(y2)",
      "0.5 * (y1 + y2)^2",
      "abs(sin(y1) - cos(y1))",
      "norm(y1 - 1, y2 + 1)",
      "bump(norm(y1, y2, y3))",
      "atan(1 / (1 + y1^2))",
      "sqrt(abs(y1))",
      "exp(y1) / exp(y2)",
      "1 + 2 + 3 + 4 + 5",
      "1.25 * y1 - 0.75 * y2 + 0.5",
      "y1\n + \n y2",
      "sin( y1 )",
      "(y1 + y2 + y3) / 3",
      "norm(sin(y1), cos(y1))",
  };
  const std::vector<std::string> circle_corpus = {
      "theta",          "sin(theta)",          "cos(theta - 0.7)",
      "theta^2",        "bump(theta / 3.14)",  "sin(theta) * cos(theta)",
      "y1 + theta",
  };
  CHECK(euclidean_corpus.size() + circle_corpus.size() >= 50);

  auto check_roundtrip = [](const std::string& src, const ModelSpace& sp) {
    CAPTURE(src);
    ExpressionAst first = parse_expression(src, sp);
    std::string printed = first.print();
    ExpressionAst second = parse_expression(printed, sp);
    CHECK(same_tree(first, second));
    CHECK(second.print() == printed);  // canonical form is a fixed point
  };
  for (const auto& src : euclidean_corpus) check_roundtrip(src, e3);
  for (const auto& src : circle_corpus) check_roundtrip(src, s1);

  CHECK_FALSE(same_tree(parse_expression("y1 + y2", e3), parse_expression("y2 + y1", e3)));
}

TEST_CASE("canonical printing uses minimal parentheses") {
  ModelSpace e2 = ModelSpace::euclidean(2);
  CHECK(parse_expression("y1^2+sin(y2)", e2).print() == "y1^2 + sin(y2)");
  CHECK(parse_expression("(y1-0.5)/norm(y1,y2)", e2).print() == "(y1 - 0.5) / norm(y1, y2)");
  CHECK(parse_expression("(y1+y2)+1", e2).print() == "y1 + y2 + 1");
  CHECK(parse_expression("y1+(y2+1)", e2).print() == "y1 + (y2 + 1)");
  CHECK(parse_expression("-(y1^2)", e2).print() == "-(y1^2)");
  CHECK(parse_expression("-y1^2", e2).print() == "-y1^2");
  CHECK(parse_expression("((y1))", e2).print() == "y1");
  CHECK(parse_expression("(y1*y2)^2", e2).print() == "(y1 * y2)^2");
}

TEST_CASE("node shapes match the grammar") {
  ModelSpace e2 = ModelSpace::euclidean(2);
  CHECK(parse_expression("y1^2 + sin(y2)", e2).node_count() == 7);
  CHECK(parse_expression("y1", e2).node_count() == 1);
  CHECK(parse_expression("-y1", e2).node_count() == 2);
  CHECK(parse_expression("norm(y1, y2)", e2).node_count() == 4);  // call + callee + 2 args
}

TEST_CASE("evaluation follows precedence, associativity, and the grammar's unary minus") {
  ModelSpace e1 = ModelSpace::euclidean(1);
  ModelSpace e3 = ModelSpace::euclidean(3);
  CHECK(ev("2 + 3 * 4", e1, {0.0}) == 14.0);
  CHECK(ev("(2 + 3) * 4", e1, {0.0}) == 20.0);
  CHECK(ev("8 - 3 - 2", e1, {0.0}) == 3.0);
  CHECK(ev("16 / 4 / 2", e1, {0.0}) == 2.0);
  CHECK(ev("2 * 3^2", e1, {0.0}) == 18.0);
  CHECK(ev("2^10", e1, {0.0}) == 1024.0);
  CHECK(ev("y1^0", e1, {7.0}) == 1.0);
  // base := "-" base binds before the exponent, so -y1^2 squares the negation
  CHECK(ev("-y1^2", e1, {2.0}) == 4.0);
  CHECK(ev("-(y1^2)", e1, {2.0}) == -4.0);
  CHECK(ev("--y1", e1, {3.0}) == 3.0);

  CHECK(ev("y1^2 + sin(y2)", e3, {2.0, 0.5, 0.0}) == doctest::Approx(4.0 + std::sin(0.5)));
  CHECK(ev("norm(y1, y2, y3)", e3, {1.0, 2.0, 2.0}) == doctest::Approx(3.0));
  CHECK(ev("sqrt(y1^2 + y2^2)", e3, {3.0, 4.0, 0.0}) == doctest::Approx(5.0));
  CHECK(ev("bump(y1)", e1, {0.0}) == 1.0);
  CHECK(ev("bump(y1)", e1, {2.0}) == 0.0);
  CHECK(ev("abs(y1)", e1, {-3.5}) == 3.5);
  CHECK(ev("atan(y1)", e1, {1.0}) == doctest::Approx(M_PI / 4.0));
  CHECK(ev("exp(y1)", e1, {1.0}) == doctest::Approx(std::exp(1.0)));
  CHECK(ev("log(exp(y1))", e1, {2.0}) == doctest::Approx(2.0));
  CHECK(ev("sin(log(y1^2 + 1e-300))", e1, {0.5}) ==
        doctest::Approx(std::sin(std::log(0.25))));

  ModelSpace s1 = ModelSpace::circle();
  CHECK(ev("cos(theta - 0.7)", s1, {0.7}) == 1.0);
  CHECK(ev("y1 + theta", s1, {0.3}) == doctest::Approx(0.6));
}

TEST_CASE("zero over zero evaluates to zero and is tallied; other faults are located") {
  ModelSpace e2 = ModelSpace::euclidean(2);
  ExpressionAst dir = parse_expression("y1 / norm(y1, y2)", e2);
  ExprCounters counters;
  CHECK(dir.eval({0.0, 0.0}, &counters) == 0.0);
  CHECK(counters.zero_over_zero.load() == 1);
  CHECK(dir.eval({3.0, 4.0}, &counters) == doctest::Approx(0.6));
  CHECK(counters.zero_over_zero.load() == 1);

  ExpressionAst bad = parse_expression("(y1 - 0.5) / norm(y1, y2)", e2);
  CHECK_THROWS_WITH_AS(bad.eval({0.0, 0.0}, nullptr), "division by zero at 1:12", DomainError);
  CHECK_THROWS_WITH_AS(parse_expression("sqrt(y1)", e2).eval({-1.0, 0.0}, nullptr),
                       "sqrt of negative value at 1:1", DomainError);
  CHECK_THROWS_WITH_AS(parse_expression("log(y1)", e2).eval({0.0, 0.0}, nullptr),
                       "log of a non-positive value at 1:1", DomainError);
}

TEST_CASE("parse errors carry line and column") {
  ModelSpace e2 = ModelSpace::euclidean(2);
  ModelSpace e1 = ModelSpace::euclidean(1);
  CHECK_THROWS_WITH_AS(parse_expression("y3", e2), "unknown variable y3 at 1:1", InputError);
  CHECK_THROWS_WITH_AS(parse_expression("y1 +\n y3", e2), "unknown variable y3 at 2:2",
                       InputError);
  CHECK_THROWS_WITH_AS(parse_expression("theta", e1), "unknown variable theta at 1:1",
                       InputError);
  CHECK_THROWS_WITH_AS(parse_expression("w", e1), "unknown variable w at 1:1", InputError);
  CHECK_THROWS_WITH_AS(parse_expression("y12", e1), "unknown variable y12 at 1:1", InputError);
  CHECK_THROWS_WITH_AS(parse_expression("sin(y1, y1)", e1),
                       "sin expects 1 argument, got 2 at 1:1", InputError);
  CHECK_THROWS_WITH_AS(parse_expression("sin", e1), "expected '(' after sin at 1:4", InputError);
  CHECK_THROWS_WITH_AS(parse_expression("y1^2.5", e1),
                       "exponent must be a nonnegative integer at 1:4", InputError);
  CHECK_THROWS_WITH_AS(parse_expression("y1^-2", e1),
                       "exponent must be a nonnegative integer at 1:4", InputError);
  CHECK_THROWS_WITH_AS(parse_expression("(y1 + 1", e1), "expected ')' at 1:8", InputError);
  CHECK_THROWS_WITH_AS(parse_expression("y1 y1", e1), "unexpected token 'y1' at 1:4", InputError);
  CHECK_THROWS_WITH_AS(parse_expression("", e1), "expected expression at 1:1", InputError);
  CHECK_THROWS_WITH_AS(parse_expression("y1 + ?", e1), "unexpected character '?' at 1:6",
                       InputError);
  CHECK_THROWS_WITH_AS(parse_expression("norm()", e1), "expected expression at 1:6", InputError);
}

TEST_CASE("binding wraps the tree as a test function with a sound bound") {
  ModelSpace e1 = ModelSpace::euclidean(1);
  ExpressionAst sq = parse_expression("y1^2", e1);

  BoundExpression trusted = bind_expression(sq, 7.0, {});
  CHECK(trusted.fn.sup_bound == 7.0);
  CHECK_FALSE(trusted.fn.bound_estimated);
  CHECK(trusted.fn.dim == 1);
  CHECK(trusted.fn.label == "y1^2");
  CHECK(trusted.fn({3.0}) == 9.0);
  CHECK(trusted.counters->evaluations.load() == 1);
  CHECK(trusted.fn({-2.0}) == 4.0);
  CHECK(trusted.counters->evaluations.load() == 2);

  // estimate over [-2, 2]: corners dominate, 4 * 1.25 = 5
  BoundExpression est = bind_expression(sq, std::nan(""), {{-2.0, 2.0}});
  CHECK(est.fn.bound_estimated);
  CHECK(est.fn.sup_bound == doctest::Approx(5.0).epsilon(1e-12));

  // deterministic: re-binding yields bit-identical bounds
  BoundExpression est2 = bind_expression(sq, std::nan(""), {{-2.0, 2.0}});
  CHECK(est.fn.sup_bound == est2.fn.sup_bound);

  CHECK_THROWS_AS(bind_expression(sq, -1.0, {}), InputError);
  CHECK_THROWS_AS(bind_expression(sq, std::nan(""), {{-1.0, 1.0}, {-1.0, 1.0}}), InputError);

  // the 0/0 tally reaches the shared counters through the wrapper
  ModelSpace e2 = ModelSpace::euclidean(2);
  BoundExpression dir =
      bind_expression(parse_expression("y1 / norm(y1, y2)", e2), 1.0, {});
  CHECK(dir.fn({0.0, 0.0}) == 0.0);
  CHECK(dir.counters->zero_over_zero.load() == 1);
}
