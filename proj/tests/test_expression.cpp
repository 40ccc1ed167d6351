#include <gtest/gtest.h>

#include <cmath>

#include "chemolb/errors.hpp"
#include "chemolb/expression.hpp"

using chemolb::ParameterError;
using chemolb::expr::Expression;
using chemolb::expr::Program;

TEST(Expression, PrecedenceAndPower) {
  EXPECT_DOUBLE_EQ(Expression::parse("1 + 2*3").evaluate({}), 7.0);
  EXPECT_DOUBLE_EQ(Expression::parse("2^3^2").evaluate({}), 512.0);
  EXPECT_DOUBLE_EQ(Expression::parse("-2^2").evaluate({}), -4.0);
  EXPECT_DOUBLE_EQ(Expression::parse("(1 + 2)*3").evaluate({}), 9.0);
  EXPECT_DOUBLE_EQ(Expression::parse("8/4/2").evaluate({}), 1.0);
  EXPECT_DOUBLE_EQ(Expression::parse("1e-3*1000").evaluate({}), 1.0);
}

TEST(Expression, FunctionsAndVariables) {
  const auto e = Expression::parse("max(u, 0.5) + min(u, v) + exp(0) + pow(v, 2)");
  EXPECT_DOUBLE_EQ(e.evaluate({{"u", 0.2}, {"v", 3.0}}), 0.5 + 0.2 + 1.0 + 9.0);
  EXPECT_TRUE(e.depends_on("u"));
  EXPECT_FALSE(e.depends_on("w"));
  EXPECT_EQ(e.variables().size(), 2u);
}

TEST(Expression, SymbolicDerivativeMatchesDifferences) {
  const auto e = Expression::parse("u*v^2 + sin(u)*exp(-v) + log(1 + u^2) + tanh(v) + sqrt(u)");
  for (const char* var : {"u", "v"}) {
    const auto d = e.derivative(var);
    std::map<std::string, double> env{{"u", 0.7}, {"v", 1.3}};
    auto plus = env, minus = env;
    plus[var] += 1e-6;
    minus[var] -= 1e-6;
    const double fd = (e.evaluate(plus) - e.evaluate(minus)) / 2e-6;
    EXPECT_NEAR(d.evaluate(env), fd, 1e-7);
  }
}

TEST(Expression, MaxFloorDerivative) {
  const auto e = Expression::parse("2*v/max(u, umin)").substitute({{"umin", 1e-8}});
  const auto du = e.derivative("u");
  EXPECT_DOUBLE_EQ(du.evaluate({{"u", 2.0}, {"v", 1.0}}), -0.5);
  EXPECT_DOUBLE_EQ(du.evaluate({{"u", 0.0}, {"v", 1.0}}), 0.0);
}

TEST(Expression, SubstituteFoldsConstants) {
  const auto e = Expression::parse("a*b + 1").substitute({{"a", 2.0}, {"b", 3.0}});
  EXPECT_TRUE(e.is_constant());
  EXPECT_DOUBLE_EQ(e.constant_value(), 7.0);
}

TEST(Expression, RoundTripThroughText) {
  const auto e = Expression::parse("-u + f11*u*v + f12 - (u - 1)^2/(2*v)");
  const auto r = Expression::parse(e.to_string());
  const std::map<std::string, double> env{{"u", 0.4}, {"v", 1.7}, {"f11", 0.3}, {"f12", -0.2}};
  EXPECT_DOUBLE_EQ(e.evaluate(env), r.evaluate(env));
}

TEST(Expression, CompiledProgramAgrees) {
  const auto e = Expression::parse("x*y + cos(t) - abs(x - 2)");
  const auto p = Program::compile(e, {"x", "y", "t"});
  const double env[3] = {0.5, -1.5, 0.25};
  EXPECT_DOUBLE_EQ(p.eval(env), e.evaluate({{"x", 0.5}, {"y", -1.5}, {"t", 0.25}}));
  EXPECT_FALSE(p.is_constant());
}

TEST(Expression, Errors) {
  EXPECT_THROW(Expression::parse("1 +"), ParameterError);
  EXPECT_THROW(Expression::parse("foo(1)"), ParameterError);
  EXPECT_THROW(Expression::parse("(1 + 2"), ParameterError);
  EXPECT_THROW(Program::compile(Expression::parse("q + 1"), {"x"}), ParameterError);
}
