#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace chemolb::expr {

enum class Op {
  Const, Var, Add, Sub, Mul, Div, Pow, Neg,
  Exp, Log, Sqrt, Abs, Sin, Cos, Tanh, Min, Max,
  Sign,  // derivative helper for abs
  Le     // 1 if a <= b else 0; derivative helper for min/max
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::Const;
  double value = 0.0;
  std::string name;
  std::vector<NodePtr> args;
};

// Immutable arithmetic expression over named variables.
// Grammar: + - * / ^, unary minus, parentheses, numbers, identifiers and
// calls exp log sqrt abs sin cos tanh min max pow.
class Expression {
 public:
  Expression();
  explicit Expression(double c);
  explicit Expression(NodePtr root) : root_(std::move(root)) {}

  static Expression parse(std::string_view text);
  static Expression variable(const std::string& name);

  Expression substitute(const std::map<std::string, double>& constants) const;
  Expression substitute(const std::string& name, const Expression& replacement) const;
  Expression derivative(const std::string& var) const;

  bool is_constant() const;
  double constant_value() const;
  bool depends_on(const std::string& var) const;
  std::set<std::string> variables() const;
  std::string to_string() const;
  double evaluate(const std::map<std::string, double>& env) const;

  const NodePtr& root() const { return root_; }

  friend Expression operator+(const Expression& a, const Expression& b);
  friend Expression operator-(const Expression& a, const Expression& b);
  friend Expression operator*(const Expression& a, const Expression& b);
  friend Expression operator/(const Expression& a, const Expression& b);

 private:
  NodePtr root_;
};

// Compiled stack program with variables bound to fixed slots of an
// environment array.
class Program {
 public:
  Program() = default;
  static Program compile(const Expression& e, const std::vector<std::string>& slots);

  double eval(const double* env) const;
  bool is_constant() const { return constant_; }
  double constant_value() const { return value_; }

 private:
  struct Instr {
    Op op;
    int slot;
    double value;
  };
  std::vector<Instr> code_;
  bool constant_ = true;
  double value_ = 0.0;
};

}  // namespace chemolb::expr
