#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace emg2text::spd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Pairwise inner products of channel signals over one analysis window:
// E = X * X^T for a channels x samples block. Inner products are left
// unnormalized; channels are z-normalized per sentence upstream.
Matrix edge_matrix(const double* data, int channels, int samples);
Matrix edge_matrix(const std::vector<double>& block, int channels);

// (1 - eta) * E + eta * trace(E) * I. Output is strictly positive
// definite for any symmetric PSD input with positive trace.
Matrix regularize(const Matrix& e, double eta = 0.1);

// Lower-triangular factor with positive diagonal, L * L^T = E.
// Throws DataError naming the failing pivot if E is not PD.
Matrix cholesky(const Matrix& e);

// Orthonormal eigenvectors (columns of q) and eigenvalues of the
// Frechet mean, eigenvalues descending. Deterministic sign convention:
// in each eigenvector the entry of largest magnitude is positive.
struct Eigenbasis {
  Matrix q;
  Vector lambda;

  int dim() const { return static_cast<int>(q.rows()); }
};

// Streaming accumulator for the log-Cholesky Frechet mean: arithmetic
// mean of strictly lower triangular parts, geometric mean of diagonals.
// Partial accumulators may be merged in any grouping. Sums are
// Kahan-compensated so accumulation order does not leak into results.
class FrechetAccumulator {
 public:
  FrechetAccumulator() = default;
  explicit FrechetAccumulator(int dim);

  void add_factor(const Matrix& cholesky_factor);
  void add_spd(const Matrix& spd);  // convenience: cholesky then add
  void merge(const FrechetAccumulator& other);

  uint64_t count() const { return count_; }
  int dim() const { return static_cast<int>(sum_lower_.rows()); }

  // The mean Cholesky factor F_chol and the mean F = F_chol * F_chol^T.
  Matrix mean_factor() const;
  Matrix mean() const;

 private:
  void kahan_add(const Matrix& m);

  Matrix sum_lower_;   // strictly lower parts, diagonal carries log-diagonals
  Matrix comp_lower_;  // Kahan compensation
  uint64_t count_ = 0;
};

// Frechet mean of SPD matrices given their Cholesky factors.
Matrix frechet_mean(const std::vector<Matrix>& cholesky_factors);

Eigenbasis eigenbasis(const Matrix& frechet);

// sigma = Q^T * E * Q; the full symmetric matrix is retained.
Matrix diagonalize(const Matrix& e, const Eigenbasis& basis);

// Log-Cholesky Riemannian distance between two SPD matrices.
double log_cholesky_distance(const Matrix& e1, const Matrix& e2);

}  // namespace emg2text::spd
