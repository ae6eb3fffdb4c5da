#include "emg2text/spd_geometry.hpp"

#include <cmath>

#include "emg2text/errors.hpp"

namespace emg2text::spd {

Matrix edge_matrix(const double* data, int channels, int samples) {
  if (channels < 1 || samples < 1) throw ParamError("edge matrix needs at least one channel and one sample");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(data, channels,
                                                                                             samples);
  if (!x.allFinite()) throw DataError("non-finite value in edge matrix input window");
  Matrix e = x * x.transpose();
  return e;
}

Matrix edge_matrix(const std::vector<double>& block, int channels) {
  if (channels < 1 || block.size() % static_cast<size_t>(channels) != 0)
    throw ParamError("window block size is not a multiple of the channel count");
  return edge_matrix(block.data(), channels, static_cast<int>(block.size() / channels));
}

Matrix regularize(const Matrix& e, double eta) {
  if (e.rows() != e.cols()) throw ParamError("regularize expects a square matrix");
  const double tr = e.trace();
  if (!(tr > 0.0)) throw DataError("degenerate window: matrix trace is not positive");
  Matrix out = (1.0 - eta) * e;
  out.diagonal().array() += eta * tr;
  return out;
}

Matrix cholesky(const Matrix& e) {
  if (e.rows() != e.cols()) throw ParamError("cholesky expects a square matrix");
  const int n = static_cast<int>(e.rows());
  Matrix l = Matrix::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    double d = e(j, j);
    for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0))
      throw DataError("matrix is not positive definite: pivot " + std::to_string(j) + " is " + std::to_string(d));
    l(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double s = e(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

FrechetAccumulator::FrechetAccumulator(int dim)
    : sum_lower_(Matrix::Zero(dim, dim)), comp_lower_(Matrix::Zero(dim, dim)) {}

void FrechetAccumulator::kahan_add(const Matrix& m) {
  const Matrix y = m - comp_lower_;
  const Matrix t = sum_lower_ + y;
  comp_lower_ = (t - sum_lower_) - y;
  sum_lower_ = t;
}

void FrechetAccumulator::add_factor(const Matrix& l) {
  if (count_ == 0 && sum_lower_.size() == 0) {
    sum_lower_ = Matrix::Zero(l.rows(), l.cols());
    comp_lower_ = sum_lower_;
  }
  if (l.rows() != sum_lower_.rows() || l.cols() != sum_lower_.cols())
    throw ParamError("cholesky factor dimension mismatch in Frechet accumulator");
  // One combined matrix per factor: strictly lower entries as-is, the
  // diagonal replaced by its elementwise log.
  Matrix term = l.triangularView<Eigen::StrictlyLower>();
  for (int i = 0; i < l.rows(); ++i) {
    const double d = l(i, i);
    if (!(d > 0.0))
      throw DataError("cholesky factor has non-positive diagonal at index " + std::to_string(i));
    term(i, i) = std::log(d);
  }
  kahan_add(term);
  ++count_;
}

void FrechetAccumulator::add_spd(const Matrix& spd) { add_factor(cholesky(spd)); }

void FrechetAccumulator::merge(const FrechetAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  if (other.sum_lower_.rows() != sum_lower_.rows())
    throw ParamError("Frechet accumulator dimension mismatch on merge");
  kahan_add(other.sum_lower_);
  count_ += other.count_;
}

Matrix FrechetAccumulator::mean_factor() const {
  if (count_ == 0) throw ParamError("Frechet mean of an empty set");
  Matrix f = sum_lower_ / static_cast<double>(count_);
  for (int i = 0; i < f.rows(); ++i) {
    f(i, i) = std::exp(f(i, i));
    for (int j = i + 1; j < f.cols(); ++j) f(i, j) = 0.0;
  }
  return f;
}

Matrix FrechetAccumulator::mean() const {
  const Matrix f = mean_factor();
  return f * f.transpose();
}

Matrix frechet_mean(const std::vector<Matrix>& cholesky_factors) {
  if (cholesky_factors.empty()) throw ParamError("Frechet mean of an empty set");
  FrechetAccumulator acc(static_cast<int>(cholesky_factors.front().rows()));
  for (const Matrix& l : cholesky_factors) acc.add_factor(l);
  return acc.mean();
}

Eigenbasis eigenbasis(const Matrix& f) {
  if (f.rows() != f.cols()) throw ParamError("eigenbasis expects a square matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(f);
  if (solver.info() != Eigen::Success) throw DataError("symmetric eigensolver failed to converge");
  const int n = static_cast<int>(f.rows());
  // Eigen returns ascending eigenvalues; reorder to descending and fix
  // each eigenvector's sign so the largest-magnitude entry is positive.
  Eigenbasis basis;
  basis.q = Matrix(n, n);
  basis.lambda = Vector(n);
  for (int k = 0; k < n; ++k) {
    const int src = n - 1 - k;
    basis.lambda(k) = solver.eigenvalues()(src);
    Vector v = solver.eigenvectors().col(src);
    int arg = 0;
    double best = std::abs(v(0));
    for (int i = 1; i < n; ++i) {
      if (std::abs(v(i)) > best) {
        best = std::abs(v(i));
        arg = i;
      }
    }
    if (v(arg) < 0.0) v = -v;
    basis.q.col(k) = v;
  }
  return basis;
}

Matrix diagonalize(const Matrix& e, const Eigenbasis& basis) {
  if (e.rows() != basis.q.rows() || e.cols() != basis.q.rows())
    throw ParamError("edge matrix and eigenbasis dimensions differ");
  // The exact congruence of a symmetric matrix is symmetric; rounding in
  // the two products is averaged away so stored frames are exactly so.
  const Matrix raw = basis.q.transpose() * e * basis.q;
  return 0.5 * (raw + raw.transpose());
}

double log_cholesky_distance(const Matrix& e1, const Matrix& e2) {
  if (e1.rows() != e2.rows() || e1.cols() != e2.cols())
    throw ParamError("distance requires matrices of equal dimension");
  const Matrix l1 = cholesky(e1);
  const Matrix l2 = cholesky(e2);
  double sq = 0.0;
  for (int i = 0; i < l1.rows(); ++i) {
    const double dd = std::log(l1(i, i)) - std::log(l2(i, i));
    sq += dd * dd;
    for (int j = 0; j < i; ++j) {
      const double dl = l1(i, j) - l2(i, j);
      sq += dl * dl;
    }
  }
  return std::sqrt(sq);
}

}  // namespace emg2text::spd
