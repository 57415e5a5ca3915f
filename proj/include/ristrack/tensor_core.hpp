// SPDX-License-Identifier: Apache-2.0
//
// Dense complex kernels shared by the estimators: Khatri-Rao products,
// third-order tensor unfoldings, SVD pseudo-inverse and DFT matrices.
//
// Conventions (fixed once, everything else depends on them):
//   * vec() is column-major.
//   * A slot tensor is N_r x S x L with frontal slices Y_l (N_r x S).
//   * mode-1: [Y_1 ... Y_L]            N_r x (S L)   = G (Phi kr Z^T)^T
//   * mode-2: [Y_1^T ... Y_L^T]        S x (N_r L)   = Z^T (Phi kr G)^T
//   * mode-3: row l = vec(Y_l)^T       L x (N_r S)   = Phi (Z^T kr G)^T
#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace ristrack {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised when an SVD or linear solve fails or produces non-finite output.
class NumericFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised by iterative solvers whose iterates blow up.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace probe {

// Counts dense factorizations so tests can assert which sizes a code path
// touches. Thread-local; cheap enough to leave on.
struct FactorizationProbe {
  std::size_t count = 0;
  Index max_dim = 0;  // max(min(rows, cols)) seen since reset
  Index max_extent = 0;  // max(max(rows, cols))

  void reset() { *this = {}; }
};

inline FactorizationProbe& factorizations() {
  thread_local FactorizationProbe p;
  return p;
}

inline void record(Index rows, Index cols) {
  auto& p = factorizations();
  ++p.count;
  p.max_dim = std::max(p.max_dim, std::min(rows, cols));
  p.max_extent = std::max(p.max_extent, std::max(rows, cols));
}

}  // namespace probe

inline bool all_finite(const ComplexMatrix& a) {
  return a.allFinite();
}

/// Squared Frobenius norm.
inline double frob2(const ComplexMatrix& a) { return a.squaredNorm(); }

/// Column-major vec().
inline ComplexVector vec(const ComplexMatrix& a) {
  return Eigen::Map<const ComplexVector>(a.data(), a.size());
}

/// Kronecker product of two column vectors, a (x) b.
inline ComplexVector kron(const ComplexVector& a, const ComplexVector& b) {
  ComplexVector out(a.size() * b.size());
  for (Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

/// Columnwise Kronecker product: column k of the result is kron(a[:,k], b[:,k]).
inline ComplexMatrix khatri_rao(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("khatri_rao: column counts differ (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.cols()) + ")");
  }
  const Index rb = b.rows();
  ComplexMatrix out(a.rows() * rb, a.cols());
  for (Index k = 0; k < a.cols(); ++k) {
    for (Index i = 0; i < a.rows(); ++i) out.col(k).segment(i * rb, rb) = a(i, k) * b.col(k);
  }
  return out;
}

/// The N_r x S x L observation tensor of one slot, stored as L frontal slices.
struct SlotTensor {
  Index n_rx = 0;
  Index n_pilot = 0;
  Index n_profiles = 0;
  std::vector<ComplexMatrix> slices;

  SlotTensor() = default;

  SlotTensor(Index n_rx_, Index n_pilot_, Index n_profiles_)
      : n_rx(n_rx_), n_pilot(n_pilot_), n_profiles(n_profiles_),
        slices(static_cast<std::size_t>(n_profiles_), ComplexMatrix::Zero(n_rx_, n_pilot_)) {}

  explicit SlotTensor(std::vector<ComplexMatrix> frontal) : slices(std::move(frontal)) {
    if (slices.empty()) throw std::invalid_argument("SlotTensor: no slices");
    n_rx = slices.front().rows();
    n_pilot = slices.front().cols();
    n_profiles = static_cast<Index>(slices.size());
    validate();
  }

  const ComplexMatrix& slice(Index l) const { return slices[static_cast<std::size_t>(l)]; }
  ComplexMatrix& slice(Index l) { return slices[static_cast<std::size_t>(l)]; }

  void validate() const {
    if (n_rx < 1 || n_pilot < 1 || n_profiles < 1)
      throw std::invalid_argument("SlotTensor: dimensions must be positive");
    if (static_cast<Index>(slices.size()) != n_profiles)
      throw std::invalid_argument("SlotTensor: expected " + std::to_string(n_profiles) + " slices, have " +
                                  std::to_string(slices.size()));
    for (const auto& s : slices) {
      if (s.rows() != n_rx || s.cols() != n_pilot)
        throw std::invalid_argument("SlotTensor: slice shape mismatch");
    }
  }

  double squared_norm() const {
    double acc = 0.0;
    for (const auto& s : slices) acc += s.squaredNorm();
    return acc;
  }
};

/// [Y_1 ... Y_L], N_r x (S L).
inline ComplexMatrix unfold_mode1(const SlotTensor& t) {
  t.validate();
  ComplexMatrix out(t.n_rx, t.n_pilot * t.n_profiles);
  for (Index l = 0; l < t.n_profiles; ++l) out.middleCols(l * t.n_pilot, t.n_pilot) = t.slice(l);
  return out;
}

/// [Y_1^T ... Y_L^T], S x (N_r L).
inline ComplexMatrix unfold_mode2(const SlotTensor& t) {
  t.validate();
  ComplexMatrix out(t.n_pilot, t.n_rx * t.n_profiles);
  for (Index l = 0; l < t.n_profiles; ++l) out.middleCols(l * t.n_rx, t.n_rx) = t.slice(l).transpose();
  return out;
}

/// Transpose of the mode-2 unfolding: slices stacked vertically, (N_r L) x S.
/// This is the form the Z-updates multiply against.
inline ComplexMatrix stacked_slices(const SlotTensor& t) {
  t.validate();
  ComplexMatrix out(t.n_rx * t.n_profiles, t.n_pilot);
  for (Index l = 0; l < t.n_profiles; ++l) out.middleRows(l * t.n_rx, t.n_rx) = t.slice(l);
  return out;
}

/// Row l = vec(Y_l)^T, L x (N_r S).
inline ComplexMatrix unfold_mode3(const SlotTensor& t) {
  t.validate();
  ComplexMatrix out(t.n_profiles, t.n_rx * t.n_pilot);
  for (Index l = 0; l < t.n_profiles; ++l) out.row(l) = vec(t.slice(l)).transpose();
  return out;
}

/// Inverse of unfold_mode1.
inline SlotTensor fold_mode1(const ComplexMatrix& y1, Index n_pilot) {
  if (n_pilot < 1 || y1.cols() % n_pilot != 0)
    throw std::invalid_argument("fold_mode1: column count not a multiple of n_pilot");
  std::vector<ComplexMatrix> slices;
  for (Index c = 0; c < y1.cols(); c += n_pilot) slices.emplace_back(y1.middleCols(c, n_pilot));
  return SlotTensor(std::move(slices));
}

inline double default_pinv_tol(Index rows, Index cols) {
  return std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(rows, cols));
}

/// Moore-Penrose pseudo-inverse through a thin SVD. Singular values below
/// rel_tol * sigma_max are dropped. rel_tol < 0 selects eps * max(rows, cols).
/// When rank_out is given it receives the number of retained singular values.
inline ComplexMatrix pseudo_inverse(const ComplexMatrix& a, double rel_tol = -1.0, Index* rank_out = nullptr) {
  if (a.size() == 0) return ComplexMatrix::Zero(a.cols(), a.rows());
  if (!a.allFinite()) throw NumericFailure("pseudo_inverse: non-finite input");
  if (rel_tol < 0.0) rel_tol = default_pinv_tol(a.rows(), a.cols());
  probe::record(a.rows(), a.cols());

  // Tall or wide inputs go through a QR first; the SVD then runs on the square
  // triangular factor, which has the same singular values.
  if (a.rows() > 2 * a.cols()) {
    Eigen::HouseholderQR<ComplexMatrix> qr(a);
    const Index n = a.cols();
    const ComplexMatrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    const ComplexMatrix r_pinv = pseudo_inverse(r, rel_tol, rank_out);
    ComplexMatrix q = qr.householderQ() * ComplexMatrix::Identity(a.rows(), n);
    return r_pinv * q.adjoint();
  }
  if (a.cols() > 2 * a.rows()) {
    return pseudo_inverse(a.adjoint(), rel_tol, rank_out).adjoint();
  }

  Eigen::BDCSVD<ComplexMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericFailure("pseudo_inverse: SVD did not converge");
  const RealVector& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rel_tol * s(0) : 0.0;
  RealVector s_inv = RealVector::Zero(s.size());
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) {
      s_inv(i) = 1.0 / s(i);
      ++rank;
    }
  }
  if (rank_out) *rank_out = rank;
  ComplexMatrix out = svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().adjoint();
  if (!out.allFinite()) throw NumericFailure("pseudo_inverse: non-finite result");
  return out;
}

/// Numerical rank with the same cutoff convention as pseudo_inverse.
inline Index numerical_rank(const ComplexMatrix& a, double rel_tol = -1.0) {
  if (a.size() == 0) return 0;
  if (rel_tol < 0.0) rel_tol = default_pinv_tol(a.rows(), a.cols());
  Eigen::BDCSVD<ComplexMatrix> svd(a);
  const RealVector& s = svd.singularValues();
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++r;
  return r;
}

/// Solve X * A = B for X where A is a small Hermitian PSD matrix (K x K).
/// Uses LDLT; falls back to the pseudo-inverse if A is singular.
inline ComplexMatrix solve_right_hermitian(const ComplexMatrix& b, const ComplexMatrix& a) {
  probe::record(a.rows(), a.cols());
  Eigen::LDLT<ComplexMatrix> ldlt(a);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    // X A = B  <=>  A^H X^H = B^H, and A is Hermitian.
    ComplexMatrix xh = ldlt.solve(b.adjoint());
    if (xh.allFinite() && ldlt.rcond() > 1e-14) return xh.adjoint();
  }
  return b * pseudo_inverse(a);
}

/// n-point DFT matrix, entry (p, q) = exp(-j 2 pi p q / n), optionally scaled by 1/sqrt(n).
inline ComplexMatrix dft_matrix(Index n, bool normalized) {
  if (n < 1) throw std::invalid_argument("dft_matrix: n must be >= 1");
  ComplexMatrix out(n, n);
  const double scale = normalized ? 1.0 / std::sqrt(static_cast<double>(n)) : 1.0;
  for (Index p = 0; p < n; ++p) {
    for (Index q = 0; q < n; ++q) {
      // reduce p*q mod n first so large n keeps full phase accuracy
      const auto pq = static_cast<double>((p * q) % n);
      out(p, q) = std::polar(scale, -2.0 * std::numbers::pi * pq / static_cast<double>(n));
    }
  }
  return out;
}

}  // namespace ristrack
