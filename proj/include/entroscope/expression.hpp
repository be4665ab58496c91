#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "entroscope/spaces.hpp"
#include "entroscope/test_function.hpp"

namespace entroscope {

// Expression trees for observables given as text. Grammar (EBNF):
//   expr   := term (("+"|"-") term)*
//   term   := factor (("*"|"/") factor)*
//   factor := base ("^" integer)?
//   base   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")" | "-" base
//   ident  in {y1..y9, theta, sin, cos, exp, sqrt, abs, atan, log, norm, bump}
// Note the grammar places unary minus inside base, so "-y1^2" is (-y1)^2.
// Exponents are nonnegative integer literals; negative powers go through "/".
struct ExprNode {
  enum class Kind {
    Constant,  // value
    Variable,  // var_index (0-based coordinate), name as written ("y2", "theta")
    Callee,    // function name inside a call; kept as a node so arity/uknown-
               // identifier errors carry the name's own source position
    Negate,    // kids: {operand}
    Binary,    // op in {+,-,*,/}; kids: {left, right}
    Power,     // kids: {base, integer Constant exponent}
    Call,      // kids: {Callee, arg...}
  };

  Kind kind;
  int line = 0, col = 0;  // 1-based source position of the introducing token
  double value = 0.0;
  int var_index = -1;
  std::string name;
  char op = 0;
  std::vector<std::unique_ptr<ExprNode>> kids;
};

// Shared, thread-safe tallies for one bound expression: how many times it was
// evaluated and how often the 0/0 -> 0 convention fired (directional
// coordinates hit it exactly at the center).
struct ExprCounters {
  std::atomic<long long> evaluations{0};
  std::atomic<long long> zero_over_zero{0};
};

struct ExpressionAst {
  std::shared_ptr<const ExprNode> root;
  int dim = 1;

  int node_count() const;
  // canonical form: minimal parentheses, operators spaced, "^" tight,
  // floats at full precision. Reparsing the result rebuilds this tree.
  std::string print() const;
  // counters may be null; division by a (nonzero-numerator) zero and sqrt of
  // a negative raise DomainError tagged with the operator's source position
  double eval(const Point& y, ExprCounters* counters) const;
};

// Parses src against the space's coordinate set (y1..yn; theta only on the
// circle). Unknown identifiers, arity mismatches, and syntax errors raise
// InputError carrying a 1-based line:column position.
ExpressionAst parse_expression(const std::string& src, const ModelSpace& space);

// structural equality; source positions are ignored
bool same_tree(const ExpressionAst& a, const ExpressionAst& b);

struct BoundExpression {
  TestFunction fn;
  std::shared_ptr<ExprCounters> counters;
  ExpressionAst ast;
};

// Wraps an AST as a TestFunction. A finite user_bound is trusted as the sup
// bound; pass NaN to estimate one instead (max |f| over the corners, center,
// and 512 low-discrepancy samples of sample_box, inflated by 1.25 and flagged
// bound_estimated).
BoundExpression bind_expression(const ExpressionAst& ast, double user_bound,
                                const std::vector<std::pair<double, double>>& sample_box);

}  // namespace entroscope
