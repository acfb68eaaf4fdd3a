#pragma once

// Test-only helpers and independent oracles. Nothing here calls into the
// code path it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "lsgpr/network.hpp"

namespace lsgpr::testing {

inline BinaryNetwork random_network(int p, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(p, p);
  for (int k = 0; k < p; ++k)
    for (int l = k + 1; l < p; ++l)
      if (unif(rng) < density) adj(k, l) = adj(l, k) = 1;
  return BinaryNetwork(adj);
}

// All-pairs shortest paths; unreachable pairs reported as p.
inline Eigen::MatrixXi floyd_warshall(const Eigen::MatrixXi& adj) {
  const int p = static_cast<int>(adj.rows());
  const int inf = 1 << 20;
  Eigen::MatrixXi d(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) d(i, j) = i == j ? 0 : (adj(i, j) ? 1 : inf);
  for (int k = 0; k < p; ++k)
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      if (d(i, j) >= inf) d(i, j) = p;
  return d;
}

// Cyclic Jacobi eigenvalue iteration for symmetric matrices; eigenvalues descending.
inline Eigen::VectorXd jacobi_eigenvalues(Eigen::MatrixXd a) {
  const auto n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-26) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (Eigen::Index i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return Eigen::Map<Eigen::VectorXd>(ev.data(), n);
}

// log-determinant and solve through Gaussian elimination with partial pivoting.
struct DenseLu {
  double log_det = 0.0;
  Eigen::VectorXd solution;
};

inline DenseLu gauss_solve(Eigen::MatrixXd a, Eigen::VectorXd b) {
  const auto n = a.rows();
  double log_det = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    a.row(c).swap(a.row(piv));
    std::swap(b[c], b[piv]);
    log_det += std::log(std::abs(a(c, c)));
    for (Eigen::Index r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      a.row(r) -= f * a.row(c);
      b[r] -= f * b[c];
    }
  }
  Eigen::VectorXd x(n);
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (Eigen::Index c = r + 1; c < n; ++c) s -= a(r, c) * x[c];
    x[r] = s / a(r, r);
  }
  return {log_det, x};
}

inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd x = a.array() - a.mean();
  const Eigen::ArrayXd y = b.array() - b.mean();
  return (x * y).sum() / std::sqrt(x.square().sum() * y.square().sum());
}

// Two-sided one-sample Kolmogorov-Smirnov p-value (asymptotic distribution
// with the Stephens small-sample correction).
inline double ks_pvalue(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = 2.0 * ((j % 2) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace lsgpr::testing
