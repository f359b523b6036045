#pragma once

#include "s3t/preprocess.hpp"

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

namespace s3t::csp {

// Rows [0, S) of B^T P for one "one versus rest" split.
struct OvrSubfilter {
  Eigen::MatrixXd projection;  // S x C_eeg
  int one_class = 0;
  Eigen::VectorXd eigvals_one;  // 1 - lambda_S for the kept rows, descending
};

struct SpatialFilter {
  Eigen::MatrixXd W;  // (subfilters * S) x C_eeg
  std::vector<OvrSubfilter> subfilters;
  std::vector<int> class_order;

  Eigen::Index feature_channels() const { return W.rows(); }
  Eigen::Index input_channels() const { return W.cols(); }
};

// Every intermediate of one OVR decomposition, exposed for verification.
struct Decomposition {
  Eigen::MatrixXd r1;          // regularized "one" covariance
  Eigen::MatrixXd r2;          // regularized "rest" covariance
  Eigen::MatrixXd whitening;   // P = Lambda^-1/2 U^T, Lambda descending
  Eigen::MatrixXd rotation;    // B, eigenvectors of P r2 P^T
  Eigen::VectorXd lambda_s;    // eigenvalues of P r2 P^T, ascending, in [0, 1]
  Eigen::MatrixXd projection;  // B^T P (all C_eeg rows)
};

// Relative ridge added to R = R1 + R2: eps * trace(R) / C * I, split evenly
// between R1 and R2 so the joint-diagonalization identities stay exact.
inline constexpr double kDefaultRegularization = 1e-8;

Eigen::MatrixXd trial_covariance(const Eigen::MatrixXd& x);
Eigen::MatrixXd trial_covariance(const prep::Trial& trial);

// Mean covariance over the trials whose label satisfies `in_class`.
Eigen::MatrixXd class_mean_cov(std::span<const prep::Trial> trials, const std::function<bool(int)>& in_class);

// Symmetric eigendecomposition sorted by eigenvalue, eigenvectors as columns
// with their first nonzero component positive; equal eigenvalues are ordered
// lexicographically by eigenvector.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};
SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& m, bool descending);

Decomposition decompose(const Eigen::MatrixXd& r1, const Eigen::MatrixXd& r2,
                        double regularization = kDefaultRegularization);

OvrSubfilter build_subfilter(const Eigen::MatrixXd& r1, const Eigen::MatrixXd& r2, int rows, int one_class = 0,
                             double regularization = kDefaultRegularization);

// N OVR sub-filters stacked (a single one when N == 2).
SpatialFilter fit_ovr_filter(std::span<const prep::Trial> trials, int n_classes, int rows);

// Z = W X.
Eigen::MatrixXd apply_filter(const SpatialFilter& filter, const Eigen::MatrixXd& x);
Eigen::MatrixXd apply_filter(const SpatialFilter& filter, const prep::Trial& trial);

// Rebuilds W from the sub-filters in class order.
Eigen::MatrixXd stack_subfilters(std::span<const OvrSubfilter> subfilters);

}  // namespace s3t::csp
