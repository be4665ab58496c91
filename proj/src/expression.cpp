#include "entroscope/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>

#include "entroscope/probes.hpp"
#include "entroscope/verifiers.hpp"

namespace entroscope {

namespace {

std::string at_pos(int line, int col) {
  return " at " + std::to_string(line) + ":" + std::to_string(col);
}

// shortest decimal form that parses back to the same double
std::string fmt17(double v) {
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

bool is_unary_fn(const std::string& s) {
  return s == "sin" || s == "cos" || s == "exp" || s == "sqrt" || s == "abs" || s == "atan" ||
         s == "bump" || s == "log";
}

bool is_fn_name(const std::string& s) { return is_unary_fn(s) || s == "norm"; }

struct Token {
  enum class T { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End };
  T t;
  std::string text;
  double value = 0.0;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      Token tok;
      tok.line = line_;
      tok.col = col_;
      if (pos_ >= src_.size()) {
        tok.t = Token::T::End;
        out.push_back(tok);
        return out;
      }
      char c = src_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && digit_next())) {
        lex_number(tok);
      } else if (std::isalpha(static_cast<unsigned char>(c))) {
        tok.t = Token::T::Ident;
        while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) {
          tok.text += src_[pos_];
          advance();
        }
      } else {
        switch (c) {
          case '+': tok.t = Token::T::Plus; break;
          case '-': tok.t = Token::T::Minus; break;
          case '*': tok.t = Token::T::Star; break;
          case '/': tok.t = Token::T::Slash; break;
          case '^': tok.t = Token::T::Caret; break;
          case '(': tok.t = Token::T::LParen; break;
          case ')': tok.t = Token::T::RParen; break;
          case ',': tok.t = Token::T::Comma; break;
          default:
            throw InputError(std::string("unexpected character '") + c + "'" +
                             at_pos(line_, col_));
        }
        tok.text = c;
        advance();
      }
      out.push_back(tok);
    }
  }

 private:
  bool digit_next() const {
    return pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]));
  }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
  }

  void lex_number(Token& tok) {
    tok.t = Token::T::Number;
    size_t start = pos_;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      advance();
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      size_t mark = pos_;
      int mark_col = col_, mark_line = line_;
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
      } else {
        // "1e" followed by non-digit: the 'e' belongs to whatever comes next
        pos_ = mark;
        col_ = mark_col;
        line_ = mark_line;
      }
    }
    tok.text = src_.substr(start, pos_ - start);
    tok.value = std::strtod(tok.text.c_str(), nullptr);
  }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

using NodePtr = std::unique_ptr<ExprNode>;

NodePtr make_node(ExprNode::Kind kind, const Token& tok) {
  auto n = std::make_unique<ExprNode>();
  n->kind = kind;
  n->line = tok.line;
  n->col = tok.col;
  return n;
}

class Parser {
 public:
  Parser(std::vector<Token> toks, const ModelSpace& space) : toks_(std::move(toks)), space_(space) {}

  NodePtr run() {
    NodePtr root = expr();
    if (peek().t != Token::T::End)
      throw InputError("unexpected token '" + peek().text + "'" + at_pos(peek().line, peek().col));
    return root;
  }

 private:
  const Token& peek() const { return toks_[idx_]; }
  Token take() { return toks_[idx_++]; }
  bool accept(Token::T t) {
    if (peek().t == t) {
      ++idx_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr left = term();
    while (peek().t == Token::T::Plus || peek().t == Token::T::Minus) {
      Token op = take();
      NodePtr node = make_node(ExprNode::Kind::Binary, op);
      node->op = op.t == Token::T::Plus ? '+' : '-';
      node->kids.push_back(std::move(left));
      node->kids.push_back(term());
      left = std::move(node);
    }
    return left;
  }

  NodePtr term() {
    NodePtr left = factor();
    while (peek().t == Token::T::Star || peek().t == Token::T::Slash) {
      Token op = take();
      NodePtr node = make_node(ExprNode::Kind::Binary, op);
      node->op = op.t == Token::T::Star ? '*' : '/';
      node->kids.push_back(std::move(left));
      node->kids.push_back(factor());
      left = std::move(node);
    }
    return left;
  }

  NodePtr factor() {
    NodePtr b = base();
    if (peek().t != Token::T::Caret) return b;
    Token caret = take();
    const Token& e = peek();
    bool integral = e.t == Token::T::Number &&
                    e.text.find('.') == std::string::npos &&
                    e.text.find('e') == std::string::npos &&
                    e.text.find('E') == std::string::npos;
    if (!integral)
      throw InputError("exponent must be a nonnegative integer" + at_pos(e.line, e.col));
    Token etok = take();
    if (etok.value > 999.0)
      throw InputError("exponent too large" + at_pos(etok.line, etok.col));
    NodePtr node = make_node(ExprNode::Kind::Power, caret);
    NodePtr ec = make_node(ExprNode::Kind::Constant, etok);
    ec->value = etok.value;
    node->kids.push_back(std::move(b));
    node->kids.push_back(std::move(ec));
    return node;
  }

  NodePtr base() {
    const Token& t = peek();
    switch (t.t) {
      case Token::T::Number: {
        Token tok = take();
        NodePtr n = make_node(ExprNode::Kind::Constant, tok);
        n->value = tok.value;
        return n;
      }
      case Token::T::Minus: {
        Token tok = take();
        NodePtr n = make_node(ExprNode::Kind::Negate, tok);
        n->kids.push_back(base());
        return n;
      }
      case Token::T::LParen: {
        take();
        NodePtr inner = expr();
        if (!accept(Token::T::RParen))
          throw InputError("expected ')'" + at_pos(peek().line, peek().col));
        return inner;
      }
      case Token::T::Ident:
        return ident_base();
      default:
        throw InputError("expected expression" + at_pos(t.line, t.col));
    }
  }

  NodePtr ident_base() {
    Token name = take();
    if (is_fn_name(name.text)) {
      if (peek().t != Token::T::LParen)
        throw InputError("expected '(' after " + name.text + at_pos(peek().line, peek().col));
      take();
      NodePtr call = make_node(ExprNode::Kind::Call, name);
      NodePtr callee = make_node(ExprNode::Kind::Callee, name);
      callee->name = name.text;
      call->kids.push_back(std::move(callee));
      call->kids.push_back(expr());
      while (accept(Token::T::Comma)) call->kids.push_back(expr());
      if (!accept(Token::T::RParen))
        throw InputError("expected ')'" + at_pos(peek().line, peek().col));
      size_t args = call->kids.size() - 1;
      if (is_unary_fn(name.text) && args != 1)
        throw InputError(name.text + " expects 1 argument, got " + std::to_string(args) +
                         at_pos(name.line, name.col));
      return call;
    }
    int index = variable_index(name.text);
    if (index < 0)
      throw InputError("unknown variable " + name.text + at_pos(name.line, name.col));
    NodePtr n = make_node(ExprNode::Kind::Variable, name);
    n->var_index = index;
    n->name = name.text;
    return n;
  }

  // y1..y9 up to the space dimension everywhere; theta only on the circle itself
  int variable_index(const std::string& s) const {
    if (s == "theta") return space_.kind() == ModelSpace::Kind::Circle ? 0 : -1;
    if (s.size() == 2 && s[0] == 'y' && s[1] >= '1' && s[1] <= '9') {
      int k = s[1] - '0';
      return k <= space_.dim() ? k - 1 : -1;
    }
    return -1;
  }

  std::vector<Token> toks_;
  const ModelSpace& space_;
  size_t idx_ = 0;
};

int count_nodes(const ExprNode& n) {
  int total = 1;
  for (const auto& k : n.kids) total += count_nodes(*k);
  return total;
}

// printing precedence: additive 1, multiplicative 2, power/negate/atoms above
int bin_prec(char op) { return (op == '+' || op == '-') ? 1 : 2; }

bool atom_like(const ExprNode& n) {
  return n.kind == ExprNode::Kind::Constant || n.kind == ExprNode::Kind::Variable ||
         n.kind == ExprNode::Kind::Call || n.kind == ExprNode::Kind::Negate;
}

std::string print_node(const ExprNode& n) {
  switch (n.kind) {
    case ExprNode::Kind::Constant:
      return fmt17(n.value);
    case ExprNode::Kind::Variable:
    case ExprNode::Kind::Callee:
      return n.name;
    case ExprNode::Kind::Negate: {
      const ExprNode& c = *n.kids[0];
      std::string body = print_node(c);
      if (!atom_like(c)) body = "(" + body + ")";
      return "-" + body;
    }
    case ExprNode::Kind::Power: {
      const ExprNode& b = *n.kids[0];
      std::string body = print_node(b);
      // a negated base needs no parens: -y1^2 already parses as (-y1)^2
      if (!atom_like(b)) body = "(" + body + ")";
      long long e = static_cast<long long>(n.kids[1]->value);
      return body + "^" + std::to_string(e);
    }
    case ExprNode::Kind::Binary: {
      const ExprNode& l = *n.kids[0];
      const ExprNode& r = *n.kids[1];
      int p = bin_prec(n.op);
      std::string ls = print_node(l);
      if (l.kind == ExprNode::Kind::Binary && bin_prec(l.op) < p) ls = "(" + ls + ")";
      std::string rs = print_node(r);
      if (r.kind == ExprNode::Kind::Binary && bin_prec(r.op) <= p) rs = "(" + rs + ")";
      return ls + " " + n.op + " " + rs;
    }
    case ExprNode::Kind::Call: {
      std::string out = n.kids[0]->name + "(";
      for (size_t i = 1; i < n.kids.size(); ++i) {
        if (i > 1) out += ", ";
        out += print_node(*n.kids[i]);
      }
      return out + ")";
    }
  }
  return "";
}

double ipow(double b, long long e) {
  double acc = 1.0;
  while (e > 0) {
    if (e & 1) acc *= b;
    b *= b;
    e >>= 1;
  }
  return acc;
}

double eval_node(const ExprNode& n, const Point& y, ExprCounters* counters) {
  switch (n.kind) {
    case ExprNode::Kind::Constant:
      return n.value;
    case ExprNode::Kind::Variable:
      return y[static_cast<size_t>(n.var_index)];
    case ExprNode::Kind::Callee:
      return 0.0;  // never evaluated directly
    case ExprNode::Kind::Negate:
      return -eval_node(*n.kids[0], y, counters);
    case ExprNode::Kind::Power:
      return ipow(eval_node(*n.kids[0], y, counters),
                  static_cast<long long>(n.kids[1]->value));
    case ExprNode::Kind::Binary: {
      double a = eval_node(*n.kids[0], y, counters);
      double b = eval_node(*n.kids[1], y, counters);
      switch (n.op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        default:
          if (b == 0.0) {
            if (a == 0.0) {
              if (counters) counters->zero_over_zero.fetch_add(1, std::memory_order_relaxed);
              return 0.0;  // the 0/0 := 0 convention for directional coordinates
            }
            throw DomainError("division by zero" + at_pos(n.line, n.col));
          }
          return a / b;
      }
    }
    case ExprNode::Kind::Call: {
      const std::string& f = n.kids[0]->name;
      if (f == "norm") {
        double s = 0.0;
        for (size_t i = 1; i < n.kids.size(); ++i) {
          double v = eval_node(*n.kids[i], y, counters);
          s += v * v;
        }
        return std::sqrt(s);
      }
      double v = eval_node(*n.kids[1], y, counters);
      if (f == "sin") return std::sin(v);
      if (f == "cos") return std::cos(v);
      if (f == "exp") return std::exp(v);
      if (f == "abs") return std::fabs(v);
      if (f == "atan") return std::atan(v);
      if (f == "bump") return bump_profile(v);
      if (f == "log") {
        if (!(v > 0.0)) throw DomainError("log of a non-positive value" + at_pos(n.line, n.col));
        return std::log(v);
      }
      if (v < 0.0) throw DomainError("sqrt of negative value" + at_pos(n.line, n.col));
      return std::sqrt(v);
    }
  }
  return 0.0;
}

bool nodes_equal(const ExprNode& a, const ExprNode& b) {
  if (a.kind != b.kind || a.kids.size() != b.kids.size()) return false;
  switch (a.kind) {
    case ExprNode::Kind::Constant:
      if (a.value != b.value) return false;
      break;
    case ExprNode::Kind::Variable:
      if (a.var_index != b.var_index || a.name != b.name) return false;
      break;
    case ExprNode::Kind::Callee:
      if (a.name != b.name) return false;
      break;
    case ExprNode::Kind::Binary:
      if (a.op != b.op) return false;
      break;
    default:
      break;
  }
  for (size_t i = 0; i < a.kids.size(); ++i)
    if (!nodes_equal(*a.kids[i], *b.kids[i])) return false;
  return true;
}

}  // namespace

int ExpressionAst::node_count() const { return root ? count_nodes(*root) : 0; }

std::string ExpressionAst::print() const { return root ? print_node(*root) : ""; }

double ExpressionAst::eval(const Point& y, ExprCounters* counters) const {
  return eval_node(*root, y, counters);
}

ExpressionAst parse_expression(const std::string& src, const ModelSpace& space) {
  ExpressionAst ast;
  ast.dim = space.dim();
  ast.root = std::shared_ptr<const ExprNode>(Parser(Lexer(src).run(), space).run().release());
  return ast;
}

bool same_tree(const ExpressionAst& a, const ExpressionAst& b) {
  if (!a.root || !b.root) return a.root == b.root;
  return a.dim == b.dim && nodes_equal(*a.root, *b.root);
}

BoundExpression bind_expression(const ExpressionAst& ast, double user_bound,
                                const std::vector<std::pair<double, double>>& sample_box) {
  BoundExpression out;
  out.ast = ast;
  out.counters = std::make_shared<ExprCounters>();

  double bound;
  bool estimated;
  if (std::isfinite(user_bound)) {
    if (user_bound < 0.0) throw InputError("sup bound must be nonnegative");
    bound = user_bound;
    estimated = false;
  } else {
    if (static_cast<int>(sample_box.size()) != ast.dim)
      throw InputError("sup-bound sample box dimension mismatch");
    std::vector<Point> pts = low_discrepancy_points(sample_box, 512);
    Point mid(sample_box.size());
    for (size_t j = 0; j < sample_box.size(); ++j)
      mid[j] = 0.5 * (sample_box[j].first + sample_box[j].second);
    pts.push_back(mid);
    for (unsigned mask = 0; mask < (1u << sample_box.size()); ++mask) {
      Point corner(sample_box.size());
      for (size_t j = 0; j < sample_box.size(); ++j)
        corner[j] = (mask >> j) & 1 ? sample_box[j].second : sample_box[j].first;
      pts.push_back(corner);
    }
    double worst = 0.0;
    for (const Point& p : pts) worst = std::max(worst, std::fabs(ast.eval(p, out.counters.get())));
    bound = std::max(1.25 * worst, 1e-9);
    estimated = true;
  }

  auto root = ast.root;
  auto counters = out.counters;
  out.fn = tf_make(ast.dim, bound, ast.print(), [root, counters](const Point& y) {
    counters->evaluations.fetch_add(1, std::memory_order_relaxed);
    return eval_node(*root, y, counters.get());
  });
  out.fn.bound_estimated = estimated;
  return out;
}

}  // namespace entroscope
