// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used by the unit tests and the
// acceptance binary. Everything here is written with plain loops over
// nested vectors and shares no code with the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

// ---------------------------------------------------------------- metrics
// acc[t][k] with 0-based indices, defined for k <= t.

inline double final_accuracy(const Matrix& acc) {
  const size_t T = acc.size();
  double s = 0.0;
  for (size_t i = 0; i < T; ++i) s += acc[T - 1][i];
  return s / static_cast<double>(T);
}

inline double continual_accuracy(const Matrix& acc) {
  const size_t T = acc.size();
  double outer = 0.0;
  for (size_t i = 0; i < T; ++i) {
    double inner = 0.0;
    for (size_t j = 0; j <= i; ++j) inner += acc[i][j];
    outer += inner / static_cast<double>(i + 1);
  }
  return outer / static_cast<double>(T);
}

inline double forgetting(const Matrix& acc) {
  const size_t T = acc.size();
  double s = 0.0;
  for (size_t i = 0; i + 1 < T; ++i) {
    double best = -1e300;
    for (size_t t = i; t < T; ++t) best = std::max(best, acc[t][i]);
    s += best - acc[T - 1][i];
  }
  return s / static_cast<double>(T - 1);
}

inline double forward_transfer(const Matrix& acc, const std::vector<double>& single) {
  const size_t T = acc.size();
  double s = 0.0;
  for (size_t i = 1; i < T; ++i) s += acc[i][i] - single[i];
  return s / static_cast<double>(T - 1);
}

// ---------------------------------------------------------------- SSL losses

inline std::vector<double> normalized(const std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Enumerates, for each of the 2N anchors, the positive and all 2N - 2
// negatives explicitly.
inline double nt_xent(const Matrix& a, const Matrix& b, double tau) {
  const size_t n = a.size();
  Matrix all;
  for (const auto& r : a) all.push_back(normalized(r));
  for (const auto& r : b) all.push_back(normalized(r));
  double total = 0.0;
  for (size_t i = 0; i < 2 * n; ++i) {
    const size_t pos = i < n ? i + n : i - n;
    const double num = std::exp(dot(all[i], all[pos]) / tau);
    double den = num;
    for (size_t k = 0; k < 2 * n; ++k) {
      if (k == i || k == pos) continue;
      den += std::exp(dot(all[i], all[k]) / tau);
    }
    total += -std::log(num / den);
  }
  return total / static_cast<double>(2 * n);
}

inline double info_nce(const Matrix& q, const Matrix& k, const Matrix& queue, double tau) {
  double total = 0.0;
  for (size_t i = 0; i < q.size(); ++i) {
    const auto qi = normalized(q[i]);
    const auto ki = normalized(k[i]);
    const double num = std::exp(dot(qi, ki) / tau);
    double den = num;
    for (const auto& neg : queue) den += std::exp(dot(qi, neg) / tau);
    total += -std::log(num / den);
  }
  return total / static_cast<double>(q.size());
}

inline double byol(const Matrix& p, const Matrix& z) {
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    total += 2.0 - 2.0 * dot(p[i], z[i]) / std::sqrt(dot(p[i], p[i]) * dot(z[i], z[i]));
  }
  return total / static_cast<double>(p.size());
}

struct Vicreg {
  double invariance, variance, covariance;
};

inline Vicreg vicreg_parts(const Matrix& a, const Matrix& b) {
  const size_t n = a.size();
  const size_t d = a[0].size();
  double inv = 0.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) inv += (a[i][j] - b[i][j]) * (a[i][j] - b[i][j]);
  inv /= static_cast<double>(n * d);

  auto side = [n, d](const Matrix& x, double& var_term, double& cov_term) {
    std::vector<double> mean(d, 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < d; ++j) mean[j] += x[i][j] / static_cast<double>(n);
    var_term = 0.0;
    cov_term = 0.0;
    for (size_t p = 0; p < d; ++p) {
      for (size_t q = 0; q < d; ++q) {
        double c = 0.0;
        for (size_t i = 0; i < n; ++i) c += (x[i][p] - mean[p]) * (x[i][q] - mean[q]);
        c /= static_cast<double>(n - 1);
        if (p == q) {
          var_term += std::max(0.0, 1.0 - std::sqrt(c + 1e-4)) / static_cast<double>(d);
        } else {
          cov_term += c * c / static_cast<double>(d);
        }
      }
    }
  };
  double va, ca, vb, cb;
  side(a, va, ca);
  side(b, vb, cb);
  return {inv, 0.5 * va + 0.5 * vb, ca + cb};
}

inline double vicreg(const Matrix& a, const Matrix& b, double lambda, double mu, double nu) {
  const auto v = vicreg_parts(a, b);
  return lambda * v.invariance + mu * v.variance + nu * v.covariance;
}

// Central differences of f with respect to every entry of x.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, Matrix x, double h = 1e-6) {
  Matrix g(x.size(), std::vector<double>(x[0].size()));
  for (size_t i = 0; i < x.size(); ++i) {
    for (size_t j = 0; j < x[i].size(); ++j) {
      const double keep = x[i][j];
      x[i][j] = keep + h;
      const double up = f(x);
      x[i][j] = keep - h;
      const double down = f(x);
      x[i][j] = keep;
      g[i][j] = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// ---------------------------------------------------------------- queue
// FIFO of unit vectors with fixed capacity, oldest first.
struct ReferenceQueue {
  size_t capacity;
  std::deque<std::vector<double>> items;
  void push(const std::vector<double>& key) {
    items.push_back(normalized(key));
    while (items.size() > capacity) items.pop_front();
  }
};

}  // namespace oracle
