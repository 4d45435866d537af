#include "sdecade/activation.hpp"

#include <cmath>
#include <stdexcept>

namespace sdecade {

namespace {

// d^k/dr^k tanh(r) = P_k(tanh r) with P_0(t) = t and P_{k+1}(t) = P_k'(t)(1 - t^2).
constexpr int kTanhTableOrder = 16;

const std::vector<std::vector<double>>& tanh_polynomials() {
  static const std::vector<std::vector<double>> table = [] {
    std::vector<std::vector<double>> p(kTanhTableOrder + 1);
    p[0] = {0.0, 1.0};
    for (int k = 0; k < kTanhTableOrder; ++k) {
      const auto& cur = p[k];
      std::vector<double> deriv(cur.size() > 1 ? cur.size() - 1 : 1, 0.0);
      for (std::size_t j = 1; j < cur.size(); ++j) deriv[j - 1] = static_cast<double>(j) * cur[j];
      std::vector<double> next(deriv.size() + 2, 0.0);
      for (std::size_t j = 0; j < deriv.size(); ++j) {
        next[j] += deriv[j];
        next[j + 2] -= deriv[j];
      }
      p[k + 1] = std::move(next);
    }
    return p;
  }();
  return table;
}

double horner(const std::vector<double>& coeffs, double t) {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * t + *it;
  return acc;
}

}  // namespace

Activation Activation::tanh() { return {Kind::tanh, "tanh"}; }
Activation Activation::identity() { return {Kind::identity, "identity"}; }
Activation Activation::cubic_plus_one() { return {Kind::cubic, "cubic"}; }

Activation Activation::custom(std::string name, std::vector<ScalarFn> derivatives) {
  if (derivatives.empty() || !derivatives.front()) {
    throw std::invalid_argument("Activation::custom: sigma itself must be supplied");
  }
  for (const auto& fn : derivatives) {
    if (!fn) throw std::invalid_argument("Activation::custom: empty derivative callable in '" + name + "'");
  }
  Activation a(Kind::custom, std::move(name));
  a.custom_ = std::make_shared<const std::vector<ScalarFn>>(std::move(derivatives));
  return a;
}

Activation Activation::from_name(std::string_view name) {
  if (name == "tanh") return tanh();
  if (name == "identity") return identity();
  if (name == "cubic" || name == "cubic_plus_one") return cubic_plus_one();
  throw std::invalid_argument("unregistered activation '" + std::string(name) +
                              "' (expected tanh, identity or cubic)");
}

int Activation::max_order() const {
  switch (kind_) {
    case Kind::tanh: return kTanhTableOrder;
    case Kind::identity:
    case Kind::cubic: return -1;
    case Kind::custom: return static_cast<int>(custom_->size()) - 1;
  }
  return 0;
}

double Activation::derivative(int order, double r) const {
  if (order < 0) throw std::invalid_argument("Activation: negative derivative order");
  if (!has_order(order)) {
    throw std::domain_error("activation '" + name_ + "' has no derivative of order " +
                            std::to_string(order));
  }
  switch (kind_) {
    case Kind::tanh: return horner(tanh_polynomials()[order], std::tanh(r));
    case Kind::identity:
      if (order == 0) return r;
      return order == 1 ? 1.0 : 0.0;
    case Kind::cubic:
      switch (order) {
        case 0: return 1.0 + r * r * r;
        case 1: return 3.0 * r * r;
        case 2: return 6.0 * r;
        case 3: return 6.0;
        default: return 0.0;
      }
    case Kind::custom: return (*custom_)[order](r);
  }
  return 0.0;
}

}  // namespace sdecade
