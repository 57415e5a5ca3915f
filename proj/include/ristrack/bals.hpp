// SPDX-License-Identifier: Apache-2.0
//
// Initial-slot estimation of the BS-RIS channel G and the RIS pilot signal Z
// from one slot tensor, with the phase-profile factor Phi known.
#pragma once

#include "ristrack/channel_model.hpp"
#include "ristrack/tensor_core.hpp"

#include <optional>
#include <string_view>

namespace ristrack {

enum class Identifiability { full_column_rank, generic_unique, not_guaranteed };

inline std::string_view to_string(Identifiability v) {
  switch (v) {
    case Identifiability::full_column_rank: return "full_column_rank";
    case Identifiability::generic_unique: return "generic_unique";
    case Identifiability::not_guaranteed: return "not_guaranteed";
  }
  return "not_guaranteed";
}

/// Sufficient uniqueness conditions for the known-Phi PARAFAC model.
/// not_guaranteed does not mean the estimate fails, only that nothing is promised.
inline Identifiability check_identifiability(Index n_profiles, Index pilot_len, Index n_ris) {
  if (n_profiles >= n_ris) return Identifiability::full_column_rank;
  if (n_profiles + pilot_len - 2 >= n_ris) return Identifiability::generic_unique;
  return Identifiability::not_guaranteed;
}

inline Identifiability check_identifiability(const SystemConfig& cfg) {
  cfg.validate();
  return check_identifiability(cfg.n_profiles, cfg.pilot_len, cfg.n_ris);
}

enum class BalsInit { random, provided, ls_krf };

struct BalsOptions {
  Index max_iters = 200;
  double rel_tol = 1e-6;
  BalsInit init_mode = BalsInit::random;
  std::optional<ComplexMatrix> z_init;  // K x S, used with BalsInit::provided

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("BalsOptions: max_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw std::invalid_argument("BalsOptions: rel_tol must be > 0");
  }
};

struct FactorEstimate {
  ComplexMatrix g_hat;  // N_r x K
  ComplexMatrix z_hat;  // K x S
  std::vector<double> residual_history;
  Index iters_used = 0;
  bool rank_deficient_step = false;  // a pseudo-inverse truncated singular values
};

/// Column-wise rank-1 factorization of an estimate of Z^T kr G.
struct KrfResult {
  ComplexMatrix g;    // N_r x K
  ComplexMatrix z_t;  // S x K
  std::vector<Index> zero_columns;
};

/// Least-squares Khatri-Rao factorization. Column k of kr is vec(g_k z_k^T)
/// (column-major, N_r fastest); the best rank-1 fit splits sqrt(sigma_1) evenly.
inline KrfResult ls_krf(const ComplexMatrix& kr, Index n_rx) {
  if (n_rx < 1 || kr.rows() % n_rx != 0)
    throw std::invalid_argument("ls_krf: row count is not a multiple of n_rx");
  const Index n_pilot = kr.rows() / n_rx;
  const Index k_count = kr.cols();
  KrfResult out{ComplexMatrix::Zero(n_rx, k_count), ComplexMatrix::Zero(n_pilot, k_count), {}};
  for (Index k = 0; k < k_count; ++k) {
    const Eigen::Map<const ComplexMatrix> block(kr.col(k).data(), n_rx, n_pilot);
    if (block.norm() == 0.0) {
      out.zero_columns.push_back(k);
      continue;
    }
    probe::record(n_rx, n_pilot);
    Eigen::JacobiSVD<ComplexMatrix> svd(block, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double root = std::sqrt(svd.singularValues()(0));
    out.g.col(k) = root * svd.matrixU().col(0);
    out.z_t.col(k) = root * svd.matrixV().col(0).conjugate();
  }
  return out;
}

/// Phi^+ applied to the mode-3 unfolding, transposed: an estimate of Z^T kr G.
inline ComplexMatrix krf_estimate(const SlotTensor& t, const PhaseProfileMatrix& phi) {
  if (phi.n_profiles() != t.n_profiles)
    throw std::invalid_argument("krf_estimate: Phi rows != number of slices");
  return (pseudo_inverse(phi.matrix) * unfold_mode3(t)).transpose();
}

namespace detail {

inline double mode1_residual(const ComplexMatrix& y1, const ComplexMatrix& g, const ComplexMatrix& kr_phi_zt) {
  return (y1 - g * kr_phi_zt.transpose()).norm();
}

inline void check_bals_dims(const SlotTensor& t, const PhaseProfileMatrix& phi) {
  t.validate();
  if (phi.n_profiles() != t.n_profiles)
    throw std::invalid_argument("bals: Phi has " + std::to_string(phi.n_profiles()) + " rows but tensor has " +
                                std::to_string(t.n_profiles) + " slices");
}

}  // namespace detail

/// Bilinear alternating least squares:
///   G <- Y1 [(Phi kr Z^T)^T]^+,   Z <- (Phi kr G)^+ Y2^T
/// until the relative change of the mode-1 residual drops below rel_tol.
inline FactorEstimate bals(const SlotTensor& t, const PhaseProfileMatrix& phi, const BalsOptions& opts, Rng& rng) {
  detail::check_bals_dims(t, phi);
  opts.validate();
  const Index k_count = phi.n_ris();

  ComplexMatrix z;
  switch (opts.init_mode) {
    case BalsInit::random:
      z = complex_gaussian_matrix(k_count, t.n_pilot, rng);
      break;
    case BalsInit::provided:
      if (!opts.z_init || opts.z_init->rows() != k_count || opts.z_init->cols() != t.n_pilot)
        throw std::invalid_argument("bals: provided init needs a K x S z_init");
      z = *opts.z_init;
      break;
    case BalsInit::ls_krf:
      if (phi.n_profiles() < k_count) throw std::invalid_argument("bals: LS-KRF init needs L >= K");
      z = ls_krf(krf_estimate(t, phi), t.n_rx).z_t.transpose();
      break;
  }

  const ComplexMatrix y1 = unfold_mode1(t);
  const ComplexMatrix y2t = stacked_slices(t);
  const double y_norm = y1.norm();
  const double floor = 1e-13 * std::max(y_norm, std::numeric_limits<double>::min());

  FactorEstimate est;
  ComplexMatrix kr_phi_zt = khatri_rao(phi.matrix, z.transpose());
  Index rank = 0;
  auto note_rank = [&] {
    if (rank < k_count) est.rank_deficient_step = true;
  };

  for (Index it = 0; it < opts.max_iters; ++it) {
    est.g_hat = y1 * pseudo_inverse(kr_phi_zt, -1.0, &rank).transpose();
    note_rank();
    const ComplexMatrix kr_phi_g = khatri_rao(phi.matrix, est.g_hat);
    z = pseudo_inverse(kr_phi_g, -1.0, &rank) * y2t;
    note_rank();
    kr_phi_zt = khatri_rao(phi.matrix, z.transpose());

    const double r = detail::mode1_residual(y1, est.g_hat, kr_phi_zt);
    if (!std::isfinite(r)) throw DivergenceError("bals: non-finite residual at iteration " + std::to_string(it + 1));
    est.residual_history.push_back(r);
    est.iters_used = it + 1;

    if (r <= floor) break;
    if (it > 0) {
      const double prev = est.residual_history[est.residual_history.size() - 2];
      if (std::abs(prev - r) / prev < opts.rel_tol) break;
    }
  }
  est.z_hat = std::move(z);
  return est;
}

/// Raised when the diagonal scaling of a factor column cannot be pinned down.
class AmbiguityError : public std::runtime_error {
public:
  AmbiguityError(const std::string& what, Index column) : std::runtime_error(what), column_(column) {}
  Index column() const { return column_; }

private:
  Index column_;
};

struct ScaledFactors {
  ComplexMatrix g;
  ComplexMatrix z;
  ComplexVector d;  // g = g_hat diag(d)^-1, z = diag(d) z_hat
};

/// Removes the diagonal scaling ambiguity of (G_hat, Z_hat).
/// Blind: unit-norm columns of G with a real-positive leading entry.
/// Genie (g_true given, simulation only): least-squares fit of G_true D to G_hat.
/// Either way G_hat Z_hat is unchanged.
inline ScaledFactors resolve_scaling(const ComplexMatrix& g_hat, const ComplexMatrix& z_hat,
                                     const std::optional<ComplexMatrix>& g_true = std::nullopt) {
  if (g_hat.cols() != z_hat.rows()) throw std::invalid_argument("resolve_scaling: G_hat and Z_hat disagree on K");
  if (g_true && (g_true->rows() != g_hat.rows() || g_true->cols() != g_hat.cols()))
    throw std::invalid_argument("resolve_scaling: G_true shape differs from G_hat");

  const Index k_count = g_hat.cols();
  ScaledFactors out{g_hat, z_hat, ComplexVector(k_count)};
  for (Index k = 0; k < k_count; ++k) {
    const double norm = g_hat.col(k).norm();
    if (norm == 0.0) throw AmbiguityError("resolve_scaling: zero column " + std::to_string(k) + " in G_hat", k);
    cplx d;
    if (g_true) {
      const double ref = g_true->col(k).squaredNorm();
      if (ref == 0.0) throw AmbiguityError("resolve_scaling: zero reference column " + std::to_string(k), k);
      d = g_true->col(k).dot(g_hat.col(k)) / ref;  // dot() conjugates the left operand
      if (d == cplx(0.0)) throw AmbiguityError("resolve_scaling: column " + std::to_string(k) + " orthogonal to reference", k);
    } else {
      Index lead = 0;
      const double tiny = 1e-12 * norm;
      while (std::abs(g_hat(lead, k)) <= tiny) ++lead;
      d = norm * g_hat(lead, k) / std::abs(g_hat(lead, k));
    }
    out.d(k) = d;
    out.g.col(k) /= d;
    out.z.row(k) *= d;
  }
  return out;
}

}  // namespace ristrack
