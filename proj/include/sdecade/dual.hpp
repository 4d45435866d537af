#pragma once

#include <type_traits>

namespace sdecade {

/// First-order forward-mode dual number re + du*eps with eps^2 = 0. Nesting
/// (Dual<Dual<double>>, ...) gives exact higher directional derivatives.
template <class T>
struct Dual {
  T re{};
  T du{};
};

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.re + b.re, a.du + b.du};
}

template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.re - b.re, a.du - b.du};
}

template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.re * b.re, a.re * b.du + a.du * b.re};
}

template <class T>
Dual<T> operator*(double s, const Dual<T>& a) {
  return {s * a.re, s * a.du};
}

}  // namespace sdecade
