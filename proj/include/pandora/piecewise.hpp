#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <vector>

namespace pandora {

/// Continuous piecewise-linear function on [0, inf): linear interpolation between
/// breakpoints xs (xs[0] == 0, strictly increasing) and slope `tail` after the last one.
/// Equivalent-loss functions of nodes and contracted subtrees live here.
class PiecewiseLinear {
public:
  PiecewiseLinear() : xs_{0.0}, ys_{0.0} {}
  PiecewiseLinear(std::vector<double> xs, std::vector<double> ys, double tail)
      : xs_(std::move(xs)), ys_(std::move(ys)), tail_(tail) {
    assert(!xs_.empty() && xs_.size() == ys_.size() && xs_.front() == 0.0);
  }

  static PiecewiseLinear identity() { return {{0.0}, {0.0}, 1.0}; }
  static PiecewiseLinear constant(double c) { return {{0.0}, {c}, 0.0}; }

  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }
  double tail_slope() const { return tail_; }
  double last_break() const { return xs_.back(); }

  double operator()(double x) const {
    if (x >= xs_.back()) return ys_.back() + tail_ * (x - xs_.back());
    if (x <= 0.0) return ys_.front();
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const std::size_t j = std::size_t(it - xs_.begin());
    const double a = xs_[j - 1], b = xs_[j];
    return ys_[j - 1] + (ys_[j] - ys_[j - 1]) * (x - a) / (b - a);
  }

  /// Right derivative at x.
  double slope(double x) const {
    if (x >= xs_.back()) return tail_;
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const std::size_t j = std::size_t(it - xs_.begin());
    return (ys_[j] - ys_[j - 1]) / (xs_[j] - xs_[j - 1]);
  }

  /// Value once the function has gone flat (tail slope 0).
  double limit() const { return tail_ == 0.0 ? ys_.back() : (tail_ > 0 ? HUGE_VAL : -HUGE_VAL); }

  /// g(x) = f(min(x, a)).
  PiecewiseLinear clamped(double a) const {
    std::vector<double> xs, ys;
    for (std::size_t j = 0; j < xs_.size() && xs_[j] < a; ++j) {
      xs.push_back(xs_[j]);
      ys.push_back(ys_[j]);
    }
    if (xs.empty() || xs.back() < a) {
      if (a > 0.0 || xs.empty()) {
        xs.push_back(std::max(a, 0.0));
        ys.push_back((*this)(std::max(a, 0.0)));
      }
    }
    if (xs.front() != 0.0) {
      xs.insert(xs.begin(), 0.0);
      ys.insert(ys.begin(), ys.front());
    }
    return {std::move(xs), std::move(ys), 0.0};
  }

  PiecewiseLinear& operator*=(double w) {
    for (auto& y : ys_) y *= w;
    tail_ *= w;
    return *this;
  }
  PiecewiseLinear& operator+=(double c) {
    for (auto& y : ys_) y += c;
    return *this;
  }

  friend PiecewiseLinear operator+(const PiecewiseLinear& f, const PiecewiseLinear& g) {
    auto xs = merge_breaks({&f, &g});
    std::vector<double> ys;
    ys.reserve(xs.size());
    for (double x : xs) ys.push_back(f(x) + g(x));
    return {std::move(xs), std::move(ys), f.tail_ + g.tail_};
  }

  /// min{x, f(x)}, inserting the crossing points.
  PiecewiseLinear min_with_identity() const {
    std::vector<double> xs, ys;
    auto push = [&](double x, double y) {
      if (!xs.empty() && x - xs.back() <= kMergeTol * std::max(1.0, x)) return;
      xs.push_back(x);
      ys.push_back(y);
    };
    for (std::size_t j = 0; j < xs_.size(); ++j) {
      const double x = xs_[j], y = ys_[j];
      if (j > 0) {
        const double hx0 = ys_[j - 1] - xs_[j - 1], hx1 = y - x;
        if ((hx0 > 0.0 && hx1 < 0.0) || (hx0 < 0.0 && hx1 > 0.0)) {
          const double c = xs_[j - 1] + hx0 * (x - xs_[j - 1]) / (hx0 - hx1);
          push(c, c);
        }
      }
      push(x, std::min(x, y));
    }
    const double B = xs_.back(), hB = ys_.back() - B;
    double tail = tail_;
    if (hB >= 0.0) {
      if (tail_ < 1.0) {
        const double c = B + hB / (1.0 - tail_);
        if (c > B) push(c, c);
      } else {
        tail = 1.0;
      }
    } else if (tail_ > 1.0) {
      const double c = B + (-hB) / (tail_ - 1.0);
      push(c, c);
      tail = 1.0;
    }
    return PiecewiseLinear(std::move(xs), std::move(ys), tail).simplified();
  }

  /// Drops interior breakpoints that lie on the segment joining their neighbours.
  PiecewiseLinear simplified(double tol = 1e-14) const {
    std::vector<double> xs{xs_.front()}, ys{ys_.front()};
    for (std::size_t j = 1; j < xs_.size(); ++j) {
      if (j + 1 < xs_.size()) {
        const double a = xs.back(), b = xs_[j + 1];
        const double line = ys.back() + (ys_[j + 1] - ys.back()) * (xs_[j] - a) / (b - a);
        if (std::abs(line - ys_[j]) <= tol * std::max(1.0, std::abs(ys_[j]))) continue;
      } else if (xs.size() > 1 || xs_.size() > 1) {
        const double line = ys.back() + tail_ * (xs_[j] - xs.back());
        const double left = (ys_[j] - ys.back()) / (xs_[j] - xs.back());
        if (std::abs(line - ys_[j]) <= tol * std::max(1.0, std::abs(ys_[j])) && std::abs(left - tail_) <= tol) continue;
      }
      xs.push_back(xs_[j]);
      ys.push_back(ys_[j]);
    }
    return {std::move(xs), std::move(ys), tail_};
  }

  /// Largest x with f(x) >= x - tol, assuming f(x) - x is nonincreasing (f is 1-Lipschitz).
  /// Returns +inf if f(x) >= x everywhere.
  double last_fixed_point(double tol = 1e-12) const {
    const double B = xs_.back(), hB = ys_.back() - B;
    if (hB >= -tol) {
      if (tail_ >= 1.0) return HUGE_VAL;
      return B + std::max(hB, 0.0) / (1.0 - tail_);
    }
    for (std::size_t j = xs_.size() - 1; j-- > 0;) {
      const double h0 = ys_[j] - xs_[j];
      if (h0 >= -tol) {
        const double h1 = ys_[j + 1] - xs_[j + 1];
        if (h0 <= 0.0) return xs_[j];
        return xs_[j] + h0 * (xs_[j + 1] - xs_[j]) / (h0 - h1);
      }
    }
    return 0.0;
  }

  static std::vector<double> merge_breaks(std::initializer_list<const PiecewiseLinear*> fs) {
    std::vector<const PiecewiseLinear*> v(fs);
    return merge_breaks(v);
  }
  static std::vector<double> merge_breaks(const std::vector<const PiecewiseLinear*>& fs) {
    std::vector<double> xs;
    for (const auto* f : fs) xs.insert(xs.end(), f->xs_.begin(), f->xs_.end());
    std::sort(xs.begin(), xs.end());
    std::vector<double> out;
    for (double x : xs)
      if (out.empty() || x - out.back() > kMergeTol * std::max(1.0, x)) out.push_back(x);
    return out;
  }

  static constexpr double kMergeTol = 1e-13;

private:
  std::vector<double> xs_;
  std::vector<double> ys_;
  double tail_ = 0.0;
};

/// F(y) = integral_0^y prod_j f_j'(u) du with F(0) = 0.
///
/// With f_j the single-component equivalent-loss functions of independent components,
/// F is the equivalent-loss function of exploring all of them together under the
/// minimum-index rule (the retirement-option product identity for index policies).
inline PiecewiseLinear integrate_slope_product(const std::vector<const PiecewiseLinear*>& fs) {
  if (fs.empty()) return PiecewiseLinear::identity();
  auto xs = PiecewiseLinear::merge_breaks(fs);
  std::vector<double> ys{0.0};
  for (std::size_t j = 1; j < xs.size(); ++j) {
    const double a = xs[j - 1], b = xs[j];
    double prod = 1.0;
    for (const auto* f : fs) prod *= (((*f)(b) - (*f)(a)) / (b - a));
    ys.push_back(ys.back() + prod * (b - a));
  }
  double tail = 1.0;
  for (const auto* f : fs) tail *= f->tail_slope();
  return {std::move(xs), std::move(ys), tail};
}

}  // namespace pandora
