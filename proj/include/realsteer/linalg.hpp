#pragma once

#include <Eigen/Dense>
#include <vector>

#include "realsteer/tensor.hpp"

namespace realsteer {

using DenseMatrix = Eigen::MatrixXd;
using DenseVector = Eigen::VectorXd;

struct EigenPair {
  double value = 0.0;
  DenseVector vector;
};

struct EighOptions {
  /// Matrices up to this order go straight to the dense Jacobi solver.
  Eigen::Index dense_cutoff = 24;
  int max_iterations = 500;
  /// Iteration stops once every wanted residual is below
  /// `target_tolerance * (||A||_F + 1)`.
  double target_tolerance = 1e-10;
  /// Contract bound; NoConvergence is raised only above this.
  double accept_tolerance = 1e-6;
};

/// Subtracts each column's mean. Accumulates in double.
Tensor center_columns(const Tensor& m);
DenseMatrix center_columns(const DenseMatrix& m);

DenseMatrix to_dense(const Tensor& m);

/// All eigenpairs of a small symmetric matrix by cyclic Jacobi rotations,
/// sorted by nonincreasing eigenvalue.
std::vector<EigenPair> jacobi_eigh(const DenseMatrix& s);

/// Top-k eigenpairs of a symmetric PSD matrix. Small orders use Jacobi; larger
/// ones use block preconditioner-free LOBPCG with Rayleigh-Ritz on
/// span{X, R, P}.
std::vector<EigenPair> topk_eigh(const DenseMatrix& a, Eigen::Index k, const EighOptions& options = {});
std::vector<EigenPair> topk_eigh(const Tensor& a, Eigen::Index k, const EighOptions& options = {});

/// Top-k eigenpairs of A = C C^T without forming A: the m x m Gram problem
/// C^T C is solved exactly and eigenvectors are lifted as u = C v / sqrt(sigma).
/// Pairs beyond the numerical rank of C are completed with orthonormal
/// vectors of the complement, reporting their Rayleigh quotient.
std::vector<EigenPair> topk_eigh_gram(const DenseMatrix& c, Eigen::Index k);

/// Flips v so that its first entry of non-negligible magnitude is positive.
void canonicalize_sign(DenseVector& v);

}  // namespace realsteer
