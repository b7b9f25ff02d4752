#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pandora {

/// Tolerance for row sums of probability vectors.
inline constexpr double kProbTol = 1e-12;

/// Malformed user input (bad instance file, bad flag value). The CLI maps it to exit code 2.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Strictly increasing, finite, nonnegative loss levels v_1 < ... < v_k.
class Support {
public:
  Support() = default;
  explicit Support(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw InputError("support is empty");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i]) || values_[i] < 0.0)
        throw InputError("support values must be finite and >= 0");
      if (i > 0 && !(values_[i] > values_[i - 1]))
        throw InputError("support must be strictly increasing");
    }
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }
  double max() const { return values_.back(); }

  /// Level index of an exact support value, or -1.
  int find(double v) const {
    auto it = std::lower_bound(values_.begin(), values_.end(), v);
    if (it != values_.end() && *it == v) return static_cast<int>(it - values_.begin());
    return -1;
  }

  bool operator==(const Support&) const = default;

private:
  std::vector<double> values_;
};

inline bool is_distribution(const std::vector<double>& p, double tol = kProbTol) {
  double sum = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0 || x > 1.0 + tol) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= tol;
}

/// Probability mass function over the levels of a Support.
class Pmf {
public:
  Pmf() = default;
  explicit Pmf(std::vector<double> probs) : p_(std::move(probs)) {}

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  double& operator[](std::size_t i) { return p_[i]; }
  const std::vector<double>& probs() const { return p_; }
  bool valid(double tol = kProbTol) const { return !p_.empty() && is_distribution(p_, tol); }

  static Pmf point_mass(std::size_t k, std::size_t at) {
    std::vector<double> p(k, 0.0);
    p[at] = 1.0;
    return Pmf(std::move(p));
  }
  static Pmf uniform(std::size_t k) { return Pmf(std::vector<double>(k, 1.0 / double(k))); }

  bool operator==(const Pmf&) const = default;

private:
  std::vector<double> p_;
};

/// Row-stochastic k x k kernel; row a is the law of the next level given current level a.
class TransitionMatrix {
public:
  TransitionMatrix() = default;
  explicit TransitionMatrix(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {}

  static TransitionMatrix identity(std::size_t k) {
    std::vector<std::vector<double>> r(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) r[i][i] = 1.0;
    return TransitionMatrix(std::move(r));
  }
  static TransitionMatrix independent(const Pmf& p) {
    return TransitionMatrix(std::vector<std::vector<double>>(p.size(), p.probs()));
  }

  std::size_t size() const { return rows_.size(); }
  const std::vector<double>& row(std::size_t a) const { return rows_[a]; }
  double operator()(std::size_t a, std::size_t b) const { return rows_[a][b]; }
  double& operator()(std::size_t a, std::size_t b) { return rows_[a][b]; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }

  bool square() const {
    return std::all_of(rows_.begin(), rows_.end(),
                       [&](const auto& r) { return r.size() == rows_.size(); });
  }
  bool stochastic(double tol = kProbTol) const {
    return !rows_.empty() && square() &&
           std::all_of(rows_.begin(), rows_.end(),
                       [&](const auto& r) { return is_distribution(r, tol); });
  }

  /// Row vector times matrix.
  Pmf propagate(const Pmf& p) const {
    std::vector<double> out(size(), 0.0);
    for (std::size_t a = 0; a < size(); ++a)
      for (std::size_t b = 0; b < size(); ++b) out[b] += p[a] * rows_[a][b];
    return Pmf(std::move(out));
  }

  TransitionMatrix operator*(const TransitionMatrix& o) const {
    const std::size_t k = size();
    std::vector<std::vector<double>> out(k, std::vector<double>(k, 0.0));
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t m = 0; m < k; ++m) {
        const double w = rows_[a][m];
        if (w == 0.0) continue;
        for (std::size_t b = 0; b < k; ++b) out[a][b] += w * o.rows_[m][b];
      }
    return TransitionMatrix(std::move(out));
  }

  bool operator==(const TransitionMatrix&) const = default;

private:
  std::vector<std::vector<double>> rows_;
};

}  // namespace pandora
