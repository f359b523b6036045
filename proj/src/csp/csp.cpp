#include "s3t/csp.hpp"
#include "s3t/error.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>

namespace s3t::csp {

namespace {

void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + " must be square, got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw DataError(std::string(what) + " is not symmetric");
  }
}

bool lexicographically_greater(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return a(i) > b(i);
  }
  return false;
}

}  // namespace

Eigen::MatrixXd trial_covariance(const Eigen::MatrixXd& x) {
  const Eigen::Index channels = x.rows(), samples = x.cols();
  if (samples < 2) throw DataError("covariance needs at least 2 samples");
  if (samples <= channels) {
    std::clog << "warning: trial has " << samples << " samples for " << channels
              << " channels; covariance is rank deficient\n";
  }
  const Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
  return centered * centered.transpose() / static_cast<double>(samples - 1);
}

Eigen::MatrixXd trial_covariance(const prep::Trial& trial) { return trial_covariance(trial.data); }

Eigen::MatrixXd class_mean_cov(std::span<const prep::Trial> trials, const std::function<bool(int)>& in_class) {
  Eigen::MatrixXd acc;
  std::size_t count = 0;
  for (const prep::Trial& t : trials) {
    if (!in_class(t.label)) continue;
    const Eigen::MatrixXd c = trial_covariance(t);
    if (count == 0) {
      acc = c;
    } else {
      if (c.rows() != acc.rows()) throw DimensionError("trials disagree on channel count");
      acc += c;
    }
    ++count;
  }
  if (count == 0) throw DataError("no trials in the requested class set");
  return acc / static_cast<double>(count);
}

SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& m, bool descending) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw NumericError("symmetric eigendecomposition did not converge");
  const Eigen::Index n = m.rows();
  Eigen::VectorXd values = solver.eigenvalues();
  Eigen::MatrixXd vectors = solver.eigenvectors();

  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(vectors(i, j)) > 1e-12) {
        if (vectors(i, j) < 0.0) vectors.col(j) *= -1.0;
        break;
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return descending ? values(a) > values(b) : values(a) < values(b);
  });

  // Runs of numerically equal eigenvalues get a deterministic order.
  const double tol = 1e-10 * std::max(1.0, values.cwiseAbs().maxCoeff());
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && std::abs(values(order[end]) - values(order[start])) <= tol) ++end;
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](Eigen::Index a, Eigen::Index b) {
                       return lexicographically_greater(vectors.col(a), vectors.col(b));
                     });
    start = end;
  }

  SymmetricEigen out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = values(order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = vectors.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

Decomposition decompose(const Eigen::MatrixXd& r1, const Eigen::MatrixXd& r2, double regularization) {
  require_symmetric(r1, "R1");
  require_symmetric(r2, "R2");
  if (r1.rows() != r2.rows()) throw DimensionError("R1 and R2 differ in size");
  const Eigen::Index c = r1.rows();

  Decomposition d;
  const double ridge = regularization * (r1 + r2).trace() / static_cast<double>(c) / 2.0;
  d.r1 = r1 + ridge * Eigen::MatrixXd::Identity(c, c);
  d.r2 = r2 + ridge * Eigen::MatrixXd::Identity(c, c);

  const Eigen::MatrixXd composite = d.r1 + d.r2;
  const SymmetricEigen outer = symmetric_eigen(composite, /*descending=*/true);
  const double smallest = outer.values(c - 1);
  if (!(smallest > 0.0) || !std::isfinite(outer.values(0))) {
    throw NumericError("composite covariance R1 + R2 is not positive definite (smallest eigenvalue " +
                       std::to_string(smallest) + ")");
  }
  d.whitening = outer.values.array().rsqrt().matrix().asDiagonal() * outer.vectors.transpose();

  Eigen::MatrixXd s2 = d.whitening * d.r2 * d.whitening.transpose();
  s2 = 0.5 * (s2 + s2.transpose());
  const SymmetricEigen inner = symmetric_eigen(s2, /*descending=*/false);
  d.rotation = inner.vectors;
  d.lambda_s = inner.values.cwiseMax(0.0).cwiseMin(1.0);
  d.projection = d.rotation.transpose() * d.whitening;
  return d;
}

OvrSubfilter build_subfilter(const Eigen::MatrixXd& r1, const Eigen::MatrixXd& r2, int rows, int one_class,
                             double regularization) {
  if (rows < 1 || rows > r1.rows()) {
    throw ConfigError("sub-filter rows must lie in [1, " + std::to_string(r1.rows()) + "], got " +
                      std::to_string(rows));
  }
  const Decomposition d = decompose(r1, r2, regularization);
  OvrSubfilter sub;
  sub.one_class = one_class;
  sub.projection = d.projection.topRows(rows);
  sub.eigvals_one = (1.0 - d.lambda_s.head(rows).array()).matrix();
  return sub;
}

Eigen::MatrixXd stack_subfilters(std::span<const OvrSubfilter> subfilters) {
  if (subfilters.empty()) return {};
  Eigen::Index rows = 0;
  for (const auto& s : subfilters) rows += s.projection.rows();
  Eigen::MatrixXd w(rows, subfilters.front().projection.cols());
  Eigen::Index at = 0;
  for (const auto& s : subfilters) {
    w.middleRows(at, s.projection.rows()) = s.projection;
    at += s.projection.rows();
  }
  return w;
}

SpatialFilter fit_ovr_filter(std::span<const prep::Trial> trials, int n_classes, int rows) {
  if (n_classes < 2) throw ConfigError("OVR spatial filter needs at least 2 classes");
  std::set<int> present;
  for (const auto& t : trials) {
    if (t.label < 0 || t.label >= n_classes) {
      throw DataError("trial label " + std::to_string(t.label) + " outside [0, " + std::to_string(n_classes) + ")");
    }
    present.insert(t.label);
  }
  for (int k = 0; k < n_classes; ++k) {
    if (!present.count(k)) throw DataError("class " + std::to_string(k) + " has no training trials");
  }

  // Per-class sums of trial covariances, computed once.
  std::vector<Eigen::MatrixXd> class_sum(static_cast<std::size_t>(n_classes));
  std::vector<std::size_t> class_count(static_cast<std::size_t>(n_classes), 0);
  for (const auto& t : trials) {
    const auto k = static_cast<std::size_t>(t.label);
    const Eigen::MatrixXd c = trial_covariance(t);
    if (class_count[k] == 0) {
      class_sum[k] = c;
    } else {
      class_sum[k] += c;
    }
    ++class_count[k];
  }

  SpatialFilter filter;
  const int splits = n_classes == 2 ? 1 : n_classes;
  for (int k = 0; k < splits; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const Eigen::MatrixXd r1 = class_sum[ks] / static_cast<double>(class_count[ks]);
    Eigen::MatrixXd rest_sum = Eigen::MatrixXd::Zero(r1.rows(), r1.cols());
    std::size_t rest_count = 0;
    for (std::size_t j = 0; j < class_sum.size(); ++j) {
      if (j == ks) continue;
      rest_sum += class_sum[j];
      rest_count += class_count[j];
    }
    const Eigen::MatrixXd r2 = rest_sum / static_cast<double>(rest_count);
    filter.subfilters.push_back(build_subfilter(r1, r2, rows, k));
    filter.class_order.push_back(k);
  }
  filter.W = stack_subfilters(filter.subfilters);
  return filter;
}

Eigen::MatrixXd apply_filter(const SpatialFilter& filter, const Eigen::MatrixXd& x) {
  if (filter.W.cols() != x.rows()) {
    throw DimensionError("spatial filter expects " + std::to_string(filter.W.cols()) + " channels, trial has " +
                         std::to_string(x.rows()));
  }
  return filter.W * x;
}

Eigen::MatrixXd apply_filter(const SpatialFilter& filter, const prep::Trial& trial) {
  return apply_filter(filter, trial.data);
}

}  // namespace s3t::csp
