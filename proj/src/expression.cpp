#include "chemolb/expression.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <fmt/format.h>

#include "chemolb/errors.hpp"

namespace chemolb::expr {

namespace {

NodePtr make_const(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

NodePtr make_var(const std::string& name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->name = name;
  return n;
}

bool is_c(const NodePtr& n) { return n->op == Op::Const; }
bool is_c(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }

double apply(Op op, double a, double b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    case Op::Pow: return std::pow(a, b);
    case Op::Neg: return -a;
    case Op::Exp: return std::exp(a);
    case Op::Log: return std::log(a);
    case Op::Sqrt: return std::sqrt(a);
    case Op::Abs: return std::fabs(a);
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Tanh: return std::tanh(a);
    case Op::Min: return std::fmin(a, b);
    case Op::Max: return std::fmax(a, b);
    case Op::Sign: return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    case Op::Le: return a <= b ? 1.0 : 0.0;
    default: throw InternalError("expression: bad operator");
  }
}

int arity(Op op) {
  switch (op) {
    case Op::Const:
    case Op::Var: return 0;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
    case Op::Min:
    case Op::Max:
    case Op::Le: return 2;
    default: return 1;
  }
}

// Smart constructor with constant folding and identity removal.
NodePtr make(Op op, NodePtr a, NodePtr b = nullptr) {
  const int ar = arity(op);
  if (ar == 1 && is_c(a)) return make_const(apply(op, a->value, 0.0));
  if (ar == 2 && is_c(a) && is_c(b)) return make_const(apply(op, a->value, b->value));
  switch (op) {
    case Op::Add:
      if (is_c(a, 0.0)) return b;
      if (is_c(b, 0.0)) return a;
      if (b->op == Op::Neg) return make(Op::Sub, a, b->args[0]);
      break;
    case Op::Sub:
      if (is_c(b, 0.0)) return a;
      if (is_c(a, 0.0)) return make(Op::Neg, b);
      break;
    case Op::Mul:
      if (is_c(a, 0.0) || is_c(b, 0.0)) return make_const(0.0);
      if (is_c(a, 1.0)) return b;
      if (is_c(b, 1.0)) return a;
      if (is_c(a, -1.0)) return make(Op::Neg, b);
      if (is_c(b, -1.0)) return make(Op::Neg, a);
      break;
    case Op::Div:
      if (is_c(a, 0.0)) return make_const(0.0);
      if (is_c(b, 1.0)) return a;
      break;
    case Op::Pow:
      if (is_c(b, 0.0)) return make_const(1.0);
      if (is_c(b, 1.0)) return a;
      break;
    case Op::Neg:
      if (a->op == Op::Neg) return a->args[0];
      break;
    default: break;
  }
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args.push_back(std::move(a));
  if (ar == 2) n->args.push_back(std::move(b));
  return n;
}

// Recursive-descent parser.
class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParameterError(fmt::format("expression '{}' at column {}: {}", s_, pos_ + 1, msg));
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) lhs = make(Op::Add, lhs, term());
      else if (accept('-')) lhs = make(Op::Sub, lhs, term());
      else return lhs;
    }
  }
  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) lhs = make(Op::Mul, lhs, unary());
      else if (accept('/')) lhs = make(Op::Div, lhs, unary());
      else return lhs;
    }
  }
  NodePtr unary() {
    if (accept('-')) return make(Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make(Op::Pow, base, unary());
    return base;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string id;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
        id += s_[pos_++];
      }
      if (accept('(')) return call(id);
      return make_var(id);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }
  NodePtr number() {
    const std::string rest(s_.substr(pos_));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(rest, &used);
    } catch (const std::exception&) {
      fail("bad number");
    }
    pos_ += used;
    return make_const(v);
  }
  NodePtr call(const std::string& fn) {
    std::vector<NodePtr> args;
    if (!accept(')')) {
      do args.push_back(expr());
      while (accept(','));
      if (!accept(')')) fail("expected ')' after arguments of " + fn);
    }
    static const std::map<std::string, Op> unary_fns = {
        {"exp", Op::Exp}, {"log", Op::Log},   {"sqrt", Op::Sqrt}, {"abs", Op::Abs},
        {"sin", Op::Sin}, {"cos", Op::Cos}, {"tanh", Op::Tanh}, {"sign", Op::Sign}};
    static const std::map<std::string, Op> binary_fns = {
        {"min", Op::Min}, {"max", Op::Max}, {"pow", Op::Pow}, {"le", Op::Le}};
    if (auto it = unary_fns.find(fn); it != unary_fns.end()) {
      if (args.size() != 1) fail(fn + " takes one argument");
      return make(it->second, args[0]);
    }
    if (auto it = binary_fns.find(fn); it != binary_fns.end()) {
      if (args.size() != 2) fail(fn + " takes two arguments");
      return make(it->second, args[0], args[1]);
    }
    fail("unknown function '" + fn + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

NodePtr subst(const NodePtr& n, const std::map<std::string, double>& c) {
  if (n->op == Op::Var) {
    auto it = c.find(n->name);
    return it == c.end() ? n : make_const(it->second);
  }
  if (n->op == Op::Const) return n;
  return make(n->op, subst(n->args[0], c), n->args.size() > 1 ? subst(n->args[1], c) : nullptr);
}

NodePtr subst_expr(const NodePtr& n, const std::string& name, const NodePtr& r) {
  if (n->op == Op::Var) return n->name == name ? r : n;
  if (n->op == Op::Const) return n;
  return make(n->op, subst_expr(n->args[0], name, r),
              n->args.size() > 1 ? subst_expr(n->args[1], name, r) : nullptr);
}

NodePtr diff(const NodePtr& n, const std::string& v) {
  const auto& a = n->args.size() > 0 ? n->args[0] : nullptr;
  const auto& b = n->args.size() > 1 ? n->args[1] : nullptr;
  switch (n->op) {
    case Op::Const: return make_const(0.0);
    case Op::Var: return make_const(n->name == v ? 1.0 : 0.0);
    case Op::Add: return make(Op::Add, diff(a, v), diff(b, v));
    case Op::Sub: return make(Op::Sub, diff(a, v), diff(b, v));
    case Op::Neg: return make(Op::Neg, diff(a, v));
    case Op::Mul:
      return make(Op::Add, make(Op::Mul, diff(a, v), b), make(Op::Mul, a, diff(b, v)));
    case Op::Div: {
      // (a' b - a b') / b^2
      NodePtr num = make(Op::Sub, make(Op::Mul, diff(a, v), b), make(Op::Mul, a, diff(b, v)));
      return make(Op::Div, num, make(Op::Mul, b, b));
    }
    case Op::Pow: {
      NodePtr da = diff(a, v);
      NodePtr db = diff(b, v);
      if (is_c(db, 0.0)) {
        NodePtr k1 = make(Op::Sub, b, make_const(1.0));
        return make(Op::Mul, make(Op::Mul, b, make(Op::Pow, a, k1)), da);
      }
      NodePtr t1 = make(Op::Mul, db, make(Op::Log, a));
      NodePtr t2 = make(Op::Div, make(Op::Mul, b, da), a);
      return make(Op::Mul, n, make(Op::Add, t1, t2));
    }
    case Op::Exp: return make(Op::Mul, n, diff(a, v));
    case Op::Log: return make(Op::Div, diff(a, v), a);
    case Op::Sqrt:
      return make(Op::Div, diff(a, v), make(Op::Mul, make_const(2.0), n));
    case Op::Abs: return make(Op::Mul, make(Op::Sign, a), diff(a, v));
    case Op::Sin: return make(Op::Mul, make(Op::Cos, a), diff(a, v));
    case Op::Cos: return make(Op::Neg, make(Op::Mul, make(Op::Sin, a), diff(a, v)));
    case Op::Tanh: {
      NodePtr sech2 = make(Op::Sub, make_const(1.0), make(Op::Mul, n, n));
      return make(Op::Mul, sech2, diff(a, v));
    }
    case Op::Min:
    case Op::Max: {
      // min picks a when a <= b; max picks b when a <= b
      NodePtr sel = make(Op::Le, a, b);
      NodePtr first = n->op == Op::Min ? diff(a, v) : diff(b, v);
      NodePtr second = n->op == Op::Min ? diff(b, v) : diff(a, v);
      return make(Op::Add, make(Op::Mul, sel, first),
                  make(Op::Mul, make(Op::Sub, make_const(1.0), sel), second));
    }
    case Op::Sign:
    case Op::Le: return make_const(0.0);
  }
  throw InternalError("expression: bad operator in derivative");
}

int precedence(const NodePtr& n) {
  switch (n->op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    case Op::Const: return n->value < 0.0 ? 0 : 5;
    default: return 5;
  }
}

std::string print(const NodePtr& n) {
  auto wrap = [](const NodePtr& c, bool paren) {
    std::string s = print(c);
    return paren ? "(" + s + ")" : s;
  };
  const int p = precedence(n);
  switch (n->op) {
    case Op::Const: return fmt::format("{}", n->value);
    case Op::Var: return n->name;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      static const char* sym[] = {"", "", " + ", " - ", " * ", " / "};
      const auto& a = n->args[0];
      const auto& b = n->args[1];
      return wrap(a, precedence(a) < p) + sym[static_cast<int>(n->op)] + wrap(b, precedence(b) <= p);
    }
    case Op::Pow:
      return wrap(n->args[0], precedence(n->args[0]) <= p) + "^" +
             wrap(n->args[1], precedence(n->args[1]) < p);
    case Op::Neg: return "-" + wrap(n->args[0], precedence(n->args[0]) <= p);
    case Op::Min: return "min(" + print(n->args[0]) + ", " + print(n->args[1]) + ")";
    case Op::Max: return "max(" + print(n->args[0]) + ", " + print(n->args[1]) + ")";
    case Op::Le: return "le(" + print(n->args[0]) + ", " + print(n->args[1]) + ")";
    default: {
      static const std::map<Op, const char*> names = {
          {Op::Exp, "exp"}, {Op::Log, "log"}, {Op::Sqrt, "sqrt"}, {Op::Abs, "abs"},
          {Op::Sin, "sin"}, {Op::Cos, "cos"}, {Op::Tanh, "tanh"}, {Op::Sign, "sign"}};
      return std::string(names.at(n->op)) + "(" + print(n->args[0]) + ")";
    }
  }
}

void collect(const NodePtr& n, std::set<std::string>& out) {
  if (n->op == Op::Var) out.insert(n->name);
  for (const auto& a : n->args) collect(a, out);
}

}  // namespace

Expression::Expression() : root_(make_const(0.0)) {}
Expression::Expression(double c) : root_(make_const(c)) {}

Expression Expression::parse(std::string_view text) { return Expression(Parser(text).parse()); }
Expression Expression::variable(const std::string& name) { return Expression(make_var(name)); }

Expression Expression::substitute(const std::map<std::string, double>& constants) const {
  return Expression(subst(root_, constants));
}

Expression Expression::substitute(const std::string& name, const Expression& replacement) const {
  return Expression(subst_expr(root_, name, replacement.root_));
}

Expression Expression::derivative(const std::string& var) const { return Expression(diff(root_, var)); }

bool Expression::is_constant() const { return root_->op == Op::Const; }
double Expression::constant_value() const { return root_->value; }

bool Expression::depends_on(const std::string& var) const { return variables().count(var) > 0; }

std::set<std::string> Expression::variables() const {
  std::set<std::string> out;
  collect(root_, out);
  return out;
}

std::string Expression::to_string() const { return print(root_); }

double Expression::evaluate(const std::map<std::string, double>& env) const {
  std::vector<std::string> slots;
  std::vector<double> vals;
  for (const auto& [k, v] : env) {
    slots.push_back(k);
    vals.push_back(v);
  }
  return Program::compile(*this, slots).eval(vals.data());
}

Expression operator+(const Expression& a, const Expression& b) { return Expression(make(Op::Add, a.root_, b.root_)); }
Expression operator-(const Expression& a, const Expression& b) { return Expression(make(Op::Sub, a.root_, b.root_)); }
Expression operator*(const Expression& a, const Expression& b) { return Expression(make(Op::Mul, a.root_, b.root_)); }
Expression operator/(const Expression& a, const Expression& b) { return Expression(make(Op::Div, a.root_, b.root_)); }

namespace {
constexpr int kMaxStack = 64;
}  // namespace

Program Program::compile(const Expression& e, const std::vector<std::string>& slots) {
  Program p;
  if (e.is_constant()) {
    p.constant_ = true;
    p.value_ = e.constant_value();
    return p;
  }
  p.constant_ = false;
  // Post-order emission; depth tracked to bound the evaluation stack.
  struct Emitter {
    const std::vector<std::string>& slots;
    std::vector<Instr>& code;
    int depth = 0;
    int max_depth = 0;
    void run(const NodePtr& n) {
      if (n->op == Op::Const) {
        code.push_back({Op::Const, -1, n->value});
        bump(1);
        return;
      }
      if (n->op == Op::Var) {
        int slot = -1;
        for (std::size_t i = 0; i < slots.size(); ++i) {
          if (slots[i] == n->name) slot = static_cast<int>(i);
        }
        if (slot < 0) throw ParameterError("unknown variable '" + n->name + "'");
        code.push_back({Op::Var, slot, 0.0});
        bump(1);
        return;
      }
      for (const auto& a : n->args) run(a);
      code.push_back({n->op, -1, 0.0});
      bump(1 - static_cast<int>(n->args.size()));
    }
    void bump(int d) {
      depth += d;
      if (depth > max_depth) max_depth = depth;
    }
  } em{slots, p.code_};
  em.run(e.root());
  if (em.max_depth > kMaxStack) throw ParameterError("expression too deeply nested");
  return p;
}

double Program::eval(const double* env) const {
  if (constant_) return value_;
  std::array<double, kMaxStack> st;
  int sp = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Const: st[sp++] = in.value; break;
      case Op::Var: st[sp++] = env[in.slot]; break;
      case Op::Neg:
      case Op::Exp:
      case Op::Log:
      case Op::Sqrt:
      case Op::Abs:
      case Op::Sin:
      case Op::Cos:
      case Op::Tanh:
      case Op::Sign: st[sp - 1] = apply(in.op, st[sp - 1], 0.0); break;
      default:
        st[sp - 2] = apply(in.op, st[sp - 2], st[sp - 1]);
        --sp;
        break;
    }
  }
  return st[0];
}

}  // namespace chemolb::expr
