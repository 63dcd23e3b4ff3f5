#include "tfl/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <numbers>

#include "tfl/errors.hpp"

namespace tfl {

class ExprParser {
 public:
  ExprParser(const std::string& src, int n, int p) : src_(src), n_(n), p_(p) {}

  Expr run() {
    Expr e;
    e.source_ = src_;
    parse_expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    e.program_ = std::move(program_);
    int depth = 0;
    for (const auto& in : e.program_) {
      switch (in.op) {
        case Expr::Op::Const:
        case Expr::Op::State:
        case Expr::Op::Input: ++depth; break;
        case Expr::Op::Add:
        case Expr::Op::Sub:
        case Expr::Op::Mul:
        case Expr::Op::Div: --depth; break;
        default: break;
      }
      e.max_depth_ = std::max(e.max_depth_, depth);
    }
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("expression '" + src_ + "', column " + std::to_string(pos_ + 1) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void emit(Expr::Op op, int index = 0, double value = 0.0) { program_.push_back({op, index, value}); }

  void parse_expr() {
    parse_term();
    for (;;) {
      if (accept('+')) {
        parse_term();
        emit(Expr::Op::Add);
      } else if (accept('-')) {
        parse_term();
        emit(Expr::Op::Sub);
      } else {
        return;
      }
    }
  }

  void parse_term() {
    parse_unary();
    for (;;) {
      if (accept('*')) {
        parse_unary();
        emit(Expr::Op::Mul);
      } else if (accept('/')) {
        parse_unary();
        emit(Expr::Op::Div);
      } else {
        return;
      }
    }
  }

  void parse_unary() {
    if (accept('-')) {
      parse_unary();
      emit(Expr::Op::Neg);
      return;
    }
    if (accept('+')) {
      parse_unary();
      return;
    }
    parse_power();
  }

  void parse_power() {
    parse_primary();
    if (accept('^')) {
      skip_ws();
      const std::size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      if (start == pos_) fail("expected non-negative integer exponent");
      emit(Expr::Op::Pow, std::stoi(src_.substr(start, pos_ - start)));
    }
  }

  void parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      parse_expr();
      if (!accept(')')) fail("expected ')'");
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = src_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      emit(Expr::Op::Const, 0, v);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      const std::string word = src_.substr(start, pos_ - start);
      if (word == "pi") {
        emit(Expr::Op::Const, 0, std::numbers::pi);
        return;
      }
      if (word == "sin" || word == "cos" || word == "exp" || word == "sqrt") {
        if (!accept('(')) fail("expected '(' after " + word);
        parse_expr();
        if (!accept(')')) fail("expected ')'");
        emit(word == "sin"   ? Expr::Op::Sin
             : word == "cos" ? Expr::Op::Cos
             : word == "exp" ? Expr::Op::Exp
                             : Expr::Op::Sqrt);
        return;
      }
      if ((word[0] == 'x' || word[0] == 'u') && word.size() > 1 &&
          std::all_of(word.begin() + 1, word.end(), [](char d) { return std::isdigit(static_cast<unsigned char>(d)); })) {
        const int idx = std::stoi(word.substr(1));
        const int limit = word[0] == 'x' ? n_ : p_;
        if (idx < 1 || idx > limit) fail("variable " + word + " out of range");
        emit(word[0] == 'x' ? Expr::Op::State : Expr::Op::Input, idx - 1);
        return;
      }
      pos_ = start;
      fail("unknown identifier '" + word + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& src_;
  int n_;
  int p_;
  std::size_t pos_ = 0;
  std::vector<Expr::Instr> program_;
};

Expr Expr::parse(const std::string& source, int num_states, int num_inputs) {
  return ExprParser(source, num_states, num_inputs).run();
}

Expr Expr::constant(double c) {
  Expr e;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", c);
  e.source_ = buf;
  e.program_.push_back({Op::Const, 0, c});
  e.max_depth_ = 1;
  return e;
}

bool Expr::uses_input() const {
  return std::any_of(program_.begin(), program_.end(), [](const Instr& in) { return in.op == Op::Input; });
}

}  // namespace tfl
