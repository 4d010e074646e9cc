#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace kedmd {

/// Syntax or name-resolution error, with the byte offset into the source.
class ExpressionError : public std::invalid_argument {
 public:
  ExpressionError(const std::string& message, std::size_t position);
  std::size_t position;
};

/// Values an expression can refer to. State components are x1..xn (or
/// x[1]..x[n]), controls u1..um, and `r` is the scalar argument of
/// comparison functions.
struct ExpressionScope {
  const Eigen::VectorXd* x = nullptr;
  const Eigen::VectorXd* u = nullptr;
  double r = 0.0;
};

/// Small arithmetic language for user-supplied systems:
///   numbers, + - * / ^ (right associative), unary minus, parentheses,
///   sin cos tan exp log sqrt abs tanh, norm(x), norm(u), named constants.
/// Names are resolved at parse time against the declared dimensions.
class Expression {
 public:
  /// Throws ExpressionError on malformed input or unknown names.
  Expression(const std::string& source, int state_dim, int control_dim,
             const std::map<std::string, double>& constants = {});

  [[nodiscard]] double operator()(const ExpressionScope& scope) const;
  [[nodiscard]] double operator()(const Eigen::VectorXd& x) const;
  [[nodiscard]] const std::string& source() const noexcept { return source_; }

  struct Node;

 private:
  std::string source_;
  std::shared_ptr<const Node> root_;
};

}  // namespace kedmd
