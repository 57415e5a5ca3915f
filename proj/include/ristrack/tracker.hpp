// SPDX-License-Identifier: Apache-2.0
//
// Slot-by-slot tracking of the RIS pilot signal Z[i] while G stays fixed.
//
// Two modes:
//   * direct:    Z[i+1] = F^+ Y2^T[i+1] with F = Phi kr G_hat and F^+ cached
//                once per G period.
//   * recursive: estimate Z[i+1] by LS with the current F, then refresh F as
//                the minimizer of the exponentially weighted cost
//                  sum_tau lambda^(i+1-tau) || Y2^T[tau] - F Z_hat[tau] ||_F^2
//                from K x K accumulators. No (N_r L)-sized factorization
//                happens per slot.
#pragma once

#include "ristrack/channel_model.hpp"
#include "ristrack/tensor_core.hpp"

#include <optional>
#include <sstream>

namespace ristrack {

/// How the recursive mode refreshes F.
enum class FUpdate {
  /// Minimize over F = Phi kr G (G free, Phi known). Keeps the PARAFAC
  /// structure, so the problem stays overdetermined even when K > S.
  structured,
  /// Minimize over an arbitrary (N_r L) x K matrix F.
  unstructured,
};

struct TrackerOptions {
  FUpdate update = FUpdate::structured;
  bool cache_pinv = true;                 // precompute F^+ for track_direct
  std::optional<Index> period_slots;      // slots covered by this G estimate, init slot included
  double ridge = 1e-10;                   // relative to trace/K of the K x K system
  double seed_prior = 0.0;                // extra delta I in the seeded corr_zz, relative to trace/K
};

struct TrackerState {
  PhaseProfileMatrix phi;
  ComplexMatrix g_hat;                        // N_r x K; F = Phi kr g_hat in structured mode
  ComplexMatrix f_hat;                        // (N_r L) x K
  std::optional<ComplexMatrix> f_pinv_cache;  // K x (N_r L)
  ComplexMatrix corr_zz;                      // K x K, sum lambda^.. Z Z^H
  ComplexMatrix corr_yz;                      // (N_r L) x K, sum lambda^.. Y2^T Z^H
  double forgetting = 0.5;
  Index slot = 1;
  TrackerOptions opts;

  Index n_rx() const { return g_hat.rows(); }
  Index n_ris() const { return g_hat.cols(); }
};

namespace detail {

/// Least-squares G for the fixed-Phi model given a per-block cross term:
/// column k of the result is sum_l conj(Phi_lk) block_l[:, k].
inline ComplexMatrix project_blocks(const ComplexMatrix& stacked, const ComplexMatrix& phi, Index n_rx) {
  ComplexMatrix out = ComplexMatrix::Zero(n_rx, stacked.cols());
  for (Index l = 0; l < phi.rows(); ++l)
    out += stacked.middleRows(l * n_rx, n_rx) * phi.row(l).conjugate().asDiagonal();
  return out;
}

/// Hermitian condition estimate of a small matrix, for diagnostics only.
inline double condition_number(const ComplexMatrix& a) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> eig(a, Eigen::EigenvaluesOnly);
  const RealVector& ev = eig.eigenvalues();
  if (ev.size() == 0) return 0.0;
  const double lo = std::abs(ev(0));
  return lo == 0.0 ? std::numeric_limits<double>::infinity() : std::abs(ev(ev.size() - 1)) / lo;
}

inline ComplexMatrix ridge_solve(const ComplexMatrix& rhs, ComplexMatrix gram, double ridge, const char* what) {
  const Index k = gram.rows();
  const double trace = gram.diagonal().real().sum();
  const double eps = ridge * (trace > 0.0 ? trace / static_cast<double>(k) : 1.0);
  gram.diagonal().array() += eps;
  ComplexMatrix out = solve_right_hermitian(rhs, gram);
  if (!out.allFinite()) {
    std::ostringstream msg;
    msg << what << ": ill-conditioned K x K system (cond ~ " << condition_number(gram) << ")";
    throw NumericFailure(msg.str());
  }
  return out;
}

inline void check_slot_dims(const TrackerState& s, const SlotTensor& t) {
  t.validate();
  if (t.n_rx != s.n_rx() || t.n_profiles != s.phi.n_profiles())
    throw std::invalid_argument("tracker: tensor dimensions do not match the tracker state");
}

}  // namespace detail

/// F = Phi kr G_hat, accumulators seeded with Z1 so that F already minimizes
/// the (single-slot) cost.
inline TrackerState tracker_init(const ComplexMatrix& g_hat, const ComplexMatrix& z1_hat, const PhaseProfileMatrix& phi,
                                 double forgetting, TrackerOptions opts = {}) {
  if (!(forgetting > 0.0 && forgetting <= 1.0)) throw std::invalid_argument("tracker_init: forgetting must lie in (0, 1]");
  if (g_hat.cols() != phi.n_ris() || z1_hat.rows() != phi.n_ris())
    throw std::invalid_argument("tracker_init: G_hat, Z1_hat and Phi disagree on K");
  TrackerState s;
  s.phi = phi;
  s.g_hat = g_hat;
  s.f_hat = khatri_rao(phi.matrix, g_hat);
  s.corr_zz = z1_hat * z1_hat.adjoint();
  if (opts.seed_prior > 0.0) {
    const double k = static_cast<double>(phi.n_ris());
    s.corr_zz.diagonal().array() += opts.seed_prior * s.corr_zz.diagonal().real().sum() / k;
  }
  s.corr_yz = s.f_hat * s.corr_zz;
  s.forgetting = forgetting;
  s.slot = 1;
  s.opts = opts;
  if (opts.cache_pinv) s.f_pinv_cache = pseudo_inverse(s.f_hat);
  return s;
}

/// Random starting point for tracking without a BALS estimate. In unstructured
/// mode F itself is drawn at random; otherwise F = Phi kr G with G random.
inline TrackerState tracker_init_random(Index n_rx, Index pilot_len, const PhaseProfileMatrix& phi, double forgetting,
                                        Rng& rng, TrackerOptions opts = {}) {
  const ComplexMatrix g = complex_gaussian_matrix(n_rx, phi.n_ris(), rng);
  const ComplexMatrix z = complex_gaussian_matrix(phi.n_ris(), pilot_len, rng);
  TrackerState s = tracker_init(g, z, phi, forgetting, opts);
  if (opts.update == FUpdate::unstructured) {
    s.f_hat = complex_gaussian_matrix(n_rx * phi.n_profiles(), phi.n_ris(), rng);
    s.corr_yz = s.f_hat * s.corr_zz;
    const RealVector phi_norm2 = phi.matrix.colwise().squaredNorm().transpose();
    s.g_hat = detail::project_blocks(s.f_hat, phi.matrix, n_rx) * phi_norm2.cwiseInverse().asDiagonal();
    if (opts.cache_pinv) s.f_pinv_cache = pseudo_inverse(s.f_hat);
  }
  return s;
}

/// Z[i+1] = F^+ Y2^T[i+1] with the cached pseudo-inverse.
inline ComplexMatrix track_direct(const TrackerState& s, const SlotTensor& t_next,
                                  std::optional<Index> slot = std::nullopt) {
  detail::check_slot_dims(s, t_next);
  if (slot && s.opts.period_slots && *slot > *s.opts.period_slots)
    throw std::logic_error("track_direct: slot " + std::to_string(*slot) + " is past the G period; re-initialize");
  if (!s.f_pinv_cache) throw std::logic_error("track_direct: tracker was initialized without a cached F^+");
  return *s.f_pinv_cache * stacked_slices(t_next);
}

/// Z estimate for a slot given the current F, via the K x K normal equations.
inline ComplexMatrix estimate_z(const TrackerState& s, const ComplexMatrix& y2t) {
  ComplexMatrix gram;
  ComplexMatrix rhs;
  if (s.opts.update == FUpdate::structured) {
    // (Phi kr G)^H (Phi kr G) = (Phi^H Phi) o (G^H G)
    gram = (s.phi.matrix.adjoint() * s.phi.matrix).cwiseProduct(s.g_hat.adjoint() * s.g_hat);
  } else {
    gram = s.f_hat.adjoint() * s.f_hat;
  }
  rhs = s.f_hat.adjoint() * y2t;
  // (F^H F) Z = F^H Y  <=>  Z^H (F^H F) = (F^H Y)^H
  return detail::ridge_solve(rhs.adjoint(), gram, s.opts.ridge, "estimate_z").adjoint();
}

/// One recursive step: estimate Z for the new slot, then fold it into the
/// accumulators and refresh F. Returns the Z estimate; the G/F used to form it
/// are the ones held in the state before the call.
inline ComplexMatrix track_recursive(TrackerState& s, const SlotTensor& t_next) {
  detail::check_slot_dims(s, t_next);
  if (s.opts.period_slots && s.slot + 1 > *s.opts.period_slots)
    throw std::logic_error("track_recursive: slot " + std::to_string(s.slot + 1) +
                           " is past the G period; re-initialize");

  const ComplexMatrix y2t = stacked_slices(t_next);
  ComplexMatrix z = estimate_z(s, y2t);

  const double lambda = s.forgetting;
  s.corr_zz = lambda * s.corr_zz + z * z.adjoint();
  s.corr_zz = 0.5 * (s.corr_zz + s.corr_zz.adjoint()).eval();
  s.corr_yz = lambda * s.corr_yz + y2t * z.adjoint();

  if (s.opts.update == FUpdate::structured) {
    // G Gamma = C with Gamma = conj(Phi^H Phi) o R_zz and C = sum_l R_yz,l diag(conj phi_l)
    const ComplexMatrix gamma = (s.phi.matrix.adjoint() * s.phi.matrix).conjugate().cwiseProduct(s.corr_zz);
    const ComplexMatrix cross = detail::project_blocks(s.corr_yz, s.phi.matrix, s.n_rx());
    s.g_hat = detail::ridge_solve(cross, gamma, s.opts.ridge, "track_recursive");
    s.f_hat = khatri_rao(s.phi.matrix, s.g_hat);
  } else {
    s.f_hat = detail::ridge_solve(s.corr_yz, s.corr_zz, s.opts.ridge, "track_recursive");
    // G read off F column by column: g_k = sum_l conj(Phi_lk) F_l[:, k] / ||phi_k||^2
    const RealVector phi_norm2 = s.phi.matrix.colwise().squaredNorm().transpose();
    s.g_hat = detail::project_blocks(s.f_hat, s.phi.matrix, s.n_rx()) * phi_norm2.cwiseInverse().asDiagonal();
  }
  ++s.slot;
  return z;
}

}  // namespace ristrack
