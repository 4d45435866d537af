#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sdecade/dual.hpp"

namespace sdecade {

/// Scalar nonlinearity sigma with analytic derivatives.
///
/// Built-ins: "tanh" (all orders, from sigma' = 1 - sigma^2), "identity",
/// and "cubic" (1 + r^3). A custom activation supplies sigma and as many
/// derivatives as it has; asking for a higher order throws. A custom
/// activation with no derivative is accepted but rejected by every operation
/// that differentiates it.
class Activation {
 public:
  using ScalarFn = std::function<double(double)>;

  static Activation tanh();
  static Activation identity();
  static Activation cubic_plus_one();
  /// derivatives[0] = sigma, derivatives[1] = sigma', ...
  static Activation custom(std::string name, std::vector<ScalarFn> derivatives);
  /// Registered names: tanh, identity, cubic. Throws std::invalid_argument otherwise.
  static Activation from_name(std::string_view name);

  const std::string& name() const { return name_; }
  /// Highest available derivative order; -1 means unbounded.
  int max_order() const;
  bool has_order(int order) const { return max_order() < 0 || order <= max_order(); }

  double operator()(double r) const { return derivative(0, r); }
  double derivative(int order, double r) const;

  /// Evaluates the order-th derivative on (nested) dual numbers by the chain
  /// rule, consuming one more derivative order per nesting level.
  template <class T>
  T eval(const T& r, int order = 0) const {
    if constexpr (is_dual<T>::value) {
      return T{eval(r.re, order), eval(r.re, order + 1) * r.du};
    } else {
      return derivative(order, r);
    }
  }

 private:
  enum class Kind { tanh, identity, cubic, custom };
  Activation(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  Kind kind_;
  std::string name_;
  std::shared_ptr<const std::vector<ScalarFn>> custom_;
};

}  // namespace sdecade
