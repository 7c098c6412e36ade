#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>

#include "kcone/systems.hpp"

namespace kcone {
namespace {

struct Node {
  enum class Kind { Number, Var, Neg, Add, Sub, Mul, Div, Pow, Call } kind;
  double value = 0.0;
  int index = 0;
  double (*fn)(double) = nullptr;
  std::unique_ptr<Node> lhs, rhs;

  double eval(const Vec& x) const {
    switch (kind) {
      case Kind::Number:
        return value;
      case Kind::Var:
        return x(index);
      case Kind::Neg:
        return -lhs->eval(x);
      case Kind::Add:
        return lhs->eval(x) + rhs->eval(x);
      case Kind::Sub:
        return lhs->eval(x) - rhs->eval(x);
      case Kind::Mul:
        return lhs->eval(x) * rhs->eval(x);
      case Kind::Div:
        return lhs->eval(x) / rhs->eval(x);
      case Kind::Pow: {
        const double e = rhs->eval(x);
        const double b = lhs->eval(x);
        if (e == std::round(e) && std::abs(e) <= 16) {
          const int k = static_cast<int>(e);
          double r = 1.0;
          for (int i = 0; i < std::abs(k); ++i) r *= b;
          return k < 0 ? 1.0 / r : r;
        }
        return std::pow(b, e);
      }
      case Kind::Call:
        return fn(lhs->eval(x));
    }
    return 0.0;
  }
};

using NodePtr = std::unique_ptr<Node>;

NodePtr make(Node::Kind kind, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
  auto node = std::make_unique<Node>();
  node->kind = kind;
  node->lhs = std::move(lhs);
  node->rhs = std::move(rhs);
  return node;
}

double fabs_fn(double v) { return std::fabs(v); }

class Parser {
 public:
  Parser(const std::string& text, int n) : s_(text), n_(n) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ConfigError,
                "expression '" + s_ + "' at " + std::to_string(pos_) + ": " + msg);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
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
      if (eat('+'))
        lhs = make(Node::Kind::Add, std::move(lhs), term());
      else if (eat('-'))
        lhs = make(Node::Kind::Sub, std::move(lhs), term());
      else
        return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (eat('*'))
        lhs = make(Node::Kind::Mul, std::move(lhs), unary());
      else if (eat('/'))
        lhs = make(Node::Kind::Div, std::move(lhs), unary());
      else
        return lhs;
    }
  }

  NodePtr unary() {
    if (eat('-')) return make(Node::Kind::Neg, unary());
    if (eat('+')) return unary();
    NodePtr base = primary();
    if (eat('^')) return make(Node::Kind::Pow, std::move(base), unary());
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (eat('(')) {
      NodePtr e = expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      const double v = std::stod(s_.substr(pos_), &used);
      pos_ += used;
      auto node = make(Node::Kind::Number);
      node->value = v;
      return node;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                  s_[pos_] == '_'))
        ++pos_;
      const std::string id = s_.substr(start, pos_ - start);
      if (id == "pi") {
        auto node = make(Node::Kind::Number);
        node->value = std::numbers::pi;
        return node;
      }
      if (id.size() > 1 && id[0] == 'x' &&
          id.find_first_not_of("0123456789", 1) == std::string::npos) {
        const int idx = std::stoi(id.substr(1));
        if (idx < 1 || idx > n_) fail("variable " + id + " out of range");
        auto node = make(Node::Kind::Var);
        node->index = idx - 1;
        return node;
      }
      double (*fn)(double) = nullptr;
      if (id == "sin") fn = static_cast<double (*)(double)>(std::sin);
      else if (id == "cos") fn = static_cast<double (*)(double)>(std::cos);
      else if (id == "tan") fn = static_cast<double (*)(double)>(std::tan);
      else if (id == "exp") fn = static_cast<double (*)(double)>(std::exp);
      else if (id == "log") fn = static_cast<double (*)(double)>(std::log);
      else if (id == "sqrt") fn = static_cast<double (*)(double)>(std::sqrt);
      else if (id == "tanh") fn = static_cast<double (*)(double)>(std::tanh);
      else if (id == "abs") fn = fabs_fn;
      else fail("unknown identifier '" + id + "'");
      if (!eat('(')) fail("expected '(' after " + id);
      auto node = make(Node::Kind::Call, expr());
      node->fn = fn;
      if (!eat(')')) fail("expected ')'");
      return node;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string s_;
  int n_;
  std::size_t pos_ = 0;
};

}  // namespace

ScalarField compile_expression(const std::string& text, int n) {
  std::shared_ptr<const Node> root = Parser(text, n).parse();
  return [root](const Vec& x) { return root->eval(x); };
}

}  // namespace kcone
