#include "kedmd/expression.hpp"

#include <cctype>
#include <cmath>
#include <charconv>

namespace kedmd {

ExpressionError::ExpressionError(const std::string& message, std::size_t pos)
    : std::invalid_argument(message + " at position " + std::to_string(pos)), position(pos) {}

struct Expression::Node {
  enum class Kind { constant, state, control, argument, negate, add, sub, mul, div, pow, call, norm_x, norm_u };
  Kind kind = Kind::constant;
  double value = 0.0;
  int index = 0;
  double (*function)(double) = nullptr;
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr leaf(Node::Kind kind, double value = 0.0, int index = 0) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->value = value;
  node->index = index;
  return node;
}

NodePtr binary(Node::Kind kind, NodePtr lhs, NodePtr rhs) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->lhs = std::move(lhs);
  node->rhs = std::move(rhs);
  return node;
}

double fabs_(double v) { return std::fabs(v); }
double sin_(double v) { return std::sin(v); }
double cos_(double v) { return std::cos(v); }
double tan_(double v) { return std::tan(v); }
double exp_(double v) { return std::exp(v); }
double log_(double v) { return std::log(v); }
double sqrt_(double v) { return std::sqrt(v); }
double tanh_(double v) { return std::tanh(v); }

const std::map<std::string, double (*)(double), std::less<>> kFunctions = {
    {"abs", fabs_}, {"sin", sin_},   {"cos", cos_},   {"tan", tan_},
    {"exp", exp_},  {"log", log_},   {"sqrt", sqrt_}, {"tanh", tanh_},
};

class Parser {
 public:
  Parser(const std::string& text, int state_dim, int control_dim,
         const std::map<std::string, double>& constants)
      : text_(text), state_dim_(state_dim), control_dim_(control_dim), constants_(constants) {}

  NodePtr parse() {
    NodePtr root = expression();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& message) const { throw ExpressionError(message, pos_); }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  NodePtr expression() {
    NodePtr node = term();
    while (true) {
      if (accept('+')) {
        node = binary(Node::Kind::add, node, term());
      } else if (accept('-')) {
        node = binary(Node::Kind::sub, node, term());
      } else {
        return node;
      }
    }
  }

  NodePtr term() {
    NodePtr node = unary();
    while (true) {
      if (accept('*')) {
        node = binary(Node::Kind::mul, node, unary());
      } else if (accept('/')) {
        node = binary(Node::Kind::div, node, unary());
      } else {
        return node;
      }
    }
  }

  // Unary minus binds looser than ^, so -x^2 = -(x^2).
  NodePtr unary() {
    if (accept('-')) return binary(Node::Kind::negate, unary(), nullptr);
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return binary(Node::Kind::pow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr inner = expression();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    const char* begin = text_.data() + pos_;
    double value = 0.0;
    auto [end, ec] = std::from_chars(begin, text_.data() + text_.size(), value);
    if (ec != std::errc{}) fail("malformed number");
    pos_ += static_cast<std::size_t>(end - begin);
    return leaf(Node::Kind::constant, value);
  }

  std::string identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    return text_.substr(start, pos_ - start);
  }

  NodePtr component(char family, int one_based, std::size_t at) {
    const int limit = family == 'x' ? state_dim_ : control_dim_;
    if (one_based < 1 || one_based > limit) {
      throw ExpressionError(std::string(1, family) + std::to_string(one_based) +
                                " is out of range (dimension " + std::to_string(limit) + ")",
                            at);
    }
    return leaf(family == 'x' ? Node::Kind::state : Node::Kind::control, 0.0, one_based - 1);
  }

  NodePtr name() {
    const std::size_t at = pos_;
    const std::string id = identifier();

    if ((id == "x" || id == "u") && accept('[')) {
      skip_space();
      const std::size_t digits = pos_;
      const std::string index = identifier();
      int value = 0;
      auto [p, ec] = std::from_chars(index.data(), index.data() + index.size(), value);
      if (ec != std::errc{} || p != index.data() + index.size()) {
        throw ExpressionError("expected component index", digits);
      }
      expect(']');
      return component(id[0], value, at);
    }
    if (id.size() > 1 && (id[0] == 'x' || id[0] == 'u') &&
        id.find_first_not_of("0123456789", 1) == std::string::npos) {
      return component(id[0], std::stoi(id.substr(1)), at);
    }
    if (id == "norm") {
      expect('(');
      skip_space();
      const std::string arg = identifier();
      expect(')');
      if (arg == "x") return leaf(Node::Kind::norm_x);
      if (arg == "u") {
        if (control_dim_ == 0) throw ExpressionError("norm(u) in a system without controls", at);
        return leaf(Node::Kind::norm_u);
      }
      throw ExpressionError("norm() takes x or u", at);
    }
    if (auto f = kFunctions.find(id); f != kFunctions.end()) {
      expect('(');
      NodePtr arg = expression();
      expect(')');
      auto node = std::make_shared<Node>();
      node->kind = Node::Kind::call;
      node->function = f->second;
      node->lhs = std::move(arg);
      return node;
    }
    if (id == "r") return leaf(Node::Kind::argument);
    if (id == "pi") return leaf(Node::Kind::constant, 3.14159265358979323846);
    if (auto c = constants_.find(id); c != constants_.end()) return leaf(Node::Kind::constant, c->second);
    throw ExpressionError("unknown name '" + id + "'", at);
  }

  const std::string& text_;
  int state_dim_;
  int control_dim_;
  const std::map<std::string, double>& constants_;
  std::size_t pos_ = 0;
};

double eval(const Node& node, const ExpressionScope& scope) {
  using K = Node::Kind;
  switch (node.kind) {
    case K::constant:
      return node.value;
    case K::state:
      if (!scope.x || node.index >= scope.x->size()) throw std::invalid_argument("state value missing");
      return (*scope.x)(node.index);
    case K::control:
      if (!scope.u || node.index >= scope.u->size()) throw std::invalid_argument("control value missing");
      return (*scope.u)(node.index);
    case K::argument:
      return scope.r;
    case K::negate:
      return -eval(*node.lhs, scope);
    case K::add:
      return eval(*node.lhs, scope) + eval(*node.rhs, scope);
    case K::sub:
      return eval(*node.lhs, scope) - eval(*node.rhs, scope);
    case K::mul:
      return eval(*node.lhs, scope) * eval(*node.rhs, scope);
    case K::div:
      return eval(*node.lhs, scope) / eval(*node.rhs, scope);
    case K::pow: {
      const double base = eval(*node.lhs, scope);
      const double exponent = eval(*node.rhs, scope);
      // Small integer powers by multiplication keep x^2 bit-identical to x*x.
      if (exponent == std::round(exponent) && std::fabs(exponent) <= 16.0) {
        double result = 1.0;
        for (int i = 0; i < static_cast<int>(std::fabs(exponent)); ++i) result *= base;
        return exponent < 0 ? 1.0 / result : result;
      }
      return std::pow(base, exponent);
    }
    case K::call:
      return node.function(eval(*node.lhs, scope));
    case K::norm_x:
      if (!scope.x) throw std::invalid_argument("state value missing");
      return scope.x->norm();
    case K::norm_u:
      if (!scope.u) throw std::invalid_argument("control value missing");
      return scope.u->norm();
  }
  return 0.0;
}

}  // namespace

Expression::Expression(const std::string& source, int state_dim, int control_dim,
                       const std::map<std::string, double>& constants)
    : source_(source) {
  root_ = Parser(source_, state_dim, control_dim, constants).parse();
}

double Expression::operator()(const ExpressionScope& scope) const { return eval(*root_, scope); }

double Expression::operator()(const Eigen::VectorXd& x) const {
  return eval(*root_, ExpressionScope{&x, nullptr, 0.0});
}

}  // namespace kedmd
