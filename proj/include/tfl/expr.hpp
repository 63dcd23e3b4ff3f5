#pragma once

// Small expression language for analytic maps of (x, u).
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' integer)?
//   primary := number | 'pi' | x<i> | u<j> | fn '(' expr ')' | '(' expr ')'
//   fn      := sin | cos | exp | sqrt
//
// Variables are 1-based: x1..xn, u1..up. Expressions compile to a postfix
// program that evaluates on any scalar type supported by jet.hpp, so models
// written this way are jet-evaluable without recompilation.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tfl/jet.hpp"

namespace tfl {

class Expr {
 public:
  enum class Op { Const, State, Input, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Exp, Sqrt };

  struct Instr {
    Op op;
    int index = 0;   // variable index or integer exponent
    double value = 0.0;
  };

  Expr() = default;

  /// Parses `source`; throws ConfigError on syntax errors or out-of-range
  /// variables (column reported in the message).
  static Expr parse(const std::string& source, int num_states, int num_inputs);
  static Expr constant(double c);

  const std::string& source() const { return source_; }
  bool uses_input() const;

  template <class S>
  S eval(std::span<const S> x, std::span<const S> u) const;

 private:
  std::string source_;
  std::vector<Instr> program_;
  int max_depth_ = 0;

  friend class ExprParser;
};

namespace detail {

template <class S>
S int_pow(const S& base, int n) {
  if (n == 0) return constant_like(base, 1.0);
  S r = base;
  for (int i = 1; i < n; ++i) r = r * base;
  return r;
}

}  // namespace detail

template <class S>
S Expr::eval(std::span<const S> x, std::span<const S> u) const {
  using std::cos;
  using std::exp;
  using std::sin;
  using std::sqrt;
  const S& proto = x.front();
  std::vector<S> stack;
  stack.reserve(static_cast<std::size_t>(max_depth_));
  auto pop = [&stack]() {
    S v = std::move(stack.back());
    stack.pop_back();
    return v;
  };
  for (const Instr& in : program_) {
    switch (in.op) {
      case Op::Const: stack.push_back(constant_like(proto, in.value)); break;
      case Op::State: stack.push_back(x[in.index]); break;
      case Op::Input: stack.push_back(u[in.index]); break;
      case Op::Add: { S b = pop(); stack.back() = stack.back() + b; break; }
      case Op::Sub: { S b = pop(); stack.back() = stack.back() - b; break; }
      case Op::Mul: { S b = pop(); stack.back() = stack.back() * b; break; }
      case Op::Div: { S b = pop(); stack.back() = stack.back() / b; break; }
      case Op::Neg: stack.back() = -stack.back(); break;
      case Op::Pow: stack.back() = detail::int_pow(stack.back(), in.index); break;
      case Op::Sin: stack.back() = sin(stack.back()); break;
      case Op::Cos: stack.back() = cos(stack.back()); break;
      case Op::Exp: stack.back() = exp(stack.back()); break;
      case Op::Sqrt: stack.back() = sqrt(stack.back()); break;
    }
  }
  return stack.back();
}

}  // namespace tfl
