// SPDX-License-Identifier: Apache-2.0
#include "ristrack/bals.hpp"
#include "ristrack/tracker.hpp"
#include "test_support.hpp"

using namespace ristrack;
using ristrack::test::rel_err;

namespace {

struct Setup {
  SystemConfig cfg;
  PhaseProfileMatrix phi;
  PilotMatrix x;
};

Setup small_setup(Index n_rx, Index k, Index l, Index m, Index s) {
  Setup st;
  st.cfg.n_rx = n_rx;
  st.cfg.n_ris = k;
  st.cfg.n_profiles = l;
  st.cfg.n_users = m;
  st.cfg.pilot_len = s;
  st.cfg.broadcast_user_paths();
  st.phi = gen_phase_profiles(st.cfg);
  st.x = gen_pilots(st.cfg);
  return st;
}

bool hermitian_psd(const ComplexMatrix& a, double tol) {
  if ((a - a.adjoint()).norm() > tol * std::max(1.0, a.norm())) return false;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> eig(a, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -tol * std::max(1.0, a.norm());
}

// Minimizer of sum_tau w_tau ||Y_tau - (Phi kr G) Z_tau||^2 over G, solved on the
// vectorized problem: vec(Y_tau) = sum_k (Z_tau[k,:]^T kron (phi_k kron I)) g_k.
ComplexMatrix batch_structured_oracle(const std::vector<ComplexMatrix>& ys, const std::vector<ComplexMatrix>& zs,
                                      const std::vector<double>& w, const ComplexMatrix& phi, Index n_rx) {
  const Index k_count = phi.cols();
  const Index rows_per = ys.front().size();
  ComplexMatrix design(rows_per * Index(ys.size()), n_rx * k_count);
  ComplexVector rhs(design.rows());
  for (std::size_t t = 0; t < ys.size(); ++t) {
    const double sw = std::sqrt(w[t]);
    const Index off = Index(t) * rows_per;
    rhs.segment(off, rows_per) = sw * vec(ys[t]);
    for (Index k = 0; k < k_count; ++k) {
      // column (k, n) of the design: vec((phi_k kron e_n) z_k^T)
      for (Index n = 0; n < n_rx; ++n) {
        ComplexVector e = ComplexVector::Zero(n_rx);
        e(n) = 1.0;
        const ComplexVector f = kron(ComplexVector(phi.col(k)), e);
        const ComplexMatrix outer = f * zs[t].row(k);
        design.block(off, k * n_rx + n, rows_per, 1) = sw * vec(outer);
      }
    }
  }
  const ComplexVector g = design.colPivHouseholderQr().solve(rhs);
  return Eigen::Map<const ComplexMatrix>(g.data(), n_rx, k_count);
}

}  // namespace

TEST(TrackerInit, ScalarChain) {
  PhaseProfileMatrix phi{ComplexMatrix::Ones(2, 1), RealMatrix::Zero(2, 1)};
  ComplexMatrix g(3, 1);
  g << 1.0, 2.0, cplx(0, 1);
  ComplexMatrix z(1, 2);
  z << 3.0, cplx(0, 4);
  const auto s = tracker_init(g, z, phi, 0.5);
  EXPECT_NEAR(s.corr_zz(0, 0).real(), 25.0, 1e-12);
  EXPECT_NEAR(s.corr_zz(0, 0).imag(), 0.0, 1e-12);
}

TEST(TrackerInit, StructureOfState) {
  const auto st = small_setup(4, 6, 6, 3, 4);
  Rng rng = make_rng({1});
  const ComplexMatrix g = complex_gaussian_matrix(4, 6, rng);
  const ComplexMatrix z = complex_gaussian_matrix(6, 4, rng);
  const auto s = tracker_init(g, z, st.phi, 0.5);
  EXPECT_TRUE(hermitian_psd(s.corr_zz, 1e-10));
  for (Index k = 0; k < 6; ++k)
    EXPECT_EQ(ComplexVector(s.f_hat.col(k)), kron(ComplexVector(st.phi.matrix.col(k)), ComplexVector(g.col(k))));
  EXPECT_LE(rel_err(s.corr_yz, s.f_hat * s.corr_zz), 1e-14);
  ASSERT_TRUE(s.f_pinv_cache.has_value());
  EXPECT_EQ(s.f_pinv_cache->rows(), 6);
  EXPECT_EQ(s.f_pinv_cache->cols(), 24);
}

TEST(TrackerInit, BadArgumentsRejected) {
  const auto st = small_setup(4, 6, 6, 3, 4);
  EXPECT_THROW(tracker_init(ComplexMatrix::Ones(4, 6), ComplexMatrix::Ones(6, 4), st.phi, 0.0), std::invalid_argument);
  EXPECT_THROW(tracker_init(ComplexMatrix::Ones(4, 5), ComplexMatrix::Ones(6, 4), st.phi, 0.5), std::invalid_argument);
}

TEST(TrackDirect, NoiselessExactWithTrueF) {
  const auto st = small_setup(8, 16, 16, 5, 8);
  ChannelProcess proc(st.cfg, make_rng({2, 1}), make_rng({2, 2}));
  const auto c1 = proc.next();
  const auto c2 = proc.next();
  const auto s = tracker_init(c1.g, ris_signal(c1.h, st.x), st.phi, 0.5);
  const ComplexMatrix z2 = ris_signal(c2.h, st.x);
  const ComplexMatrix z_hat = track_direct(s, noiseless_slot(c2.g, z2, st.phi));
  EXPECT_LE(rel_err(z_hat, z2), 1e-10);
}

TEST(TrackDirect, ZeroTensorGivesZero) {
  const auto st = small_setup(4, 6, 6, 3, 4);
  Rng rng = make_rng({3});
  const auto s = tracker_init(complex_gaussian_matrix(4, 6, rng), complex_gaussian_matrix(6, 4, rng), st.phi, 0.5);
  EXPECT_EQ(track_direct(s, SlotTensor(4, 4, 6)).norm(), 0.0);
}

TEST(TrackDirect, StaleStateRejected) {
  const auto st = small_setup(4, 6, 6, 3, 4);
  Rng rng = make_rng({4});
  TrackerOptions o;
  o.period_slots = 10;
  auto s = tracker_init(complex_gaussian_matrix(4, 6, rng), complex_gaussian_matrix(6, 4, rng), st.phi, 0.5, o);
  EXPECT_NO_THROW(track_direct(s, SlotTensor(4, 4, 6), 10));
  EXPECT_THROW(track_direct(s, SlotTensor(4, 4, 6), 11), std::logic_error);
  for (int i = 0; i < 9; ++i) track_recursive(s, noiseless_slot(s.g_hat, complex_gaussian_matrix(6, 4, rng), st.phi));
  EXPECT_THROW(track_recursive(s, SlotTensor(4, 4, 6)), std::logic_error);
  o.cache_pinv = false;
  const auto no_cache = tracker_init(s.g_hat, complex_gaussian_matrix(6, 4, rng), st.phi, 0.5, o);
  EXPECT_THROW(track_direct(no_cache, SlotTensor(4, 4, 6)), std::logic_error);
}

TEST(TrackDirect, GenieVersusEstimatedF) {
  auto st = small_setup(16, 64, 64, 20, 20);
  st.cfg.snr_db = 10.0;
  double genie = 0.0;
  double est = 0.0;
  for (std::uint64_t run = 0; run < 20; ++run) {
    ChannelProcess proc(st.cfg, make_rng({run, 1}), make_rng({run, 2}));
    Rng noise = make_rng({run, 3});
    Rng rng = make_rng({run, 4});
    const auto c1 = proc.next();
    const auto t1 = synthesize_slot(c1, st.x, st.phi, noise_var_for_snr(c1, st.x, st.phi, 10.0), noise);
    const auto fe = bals(t1, st.phi, {}, rng);
    const auto s_est = tracker_init(fe.g_hat, fe.z_hat, st.phi, 0.5);
    const auto s_genie = tracker_init(c1.g, ris_signal(c1.h, st.x), st.phi, 0.5);
    const auto c2 = proc.next();
    const auto t2 = synthesize_slot(c2, st.x, st.phi, noise_var_for_snr(c2, st.x, st.phi, 10.0), noise);
    const ComplexMatrix truth = c2.g * ris_signal(c2.h, st.x);
    genie += (s_genie.g_hat * track_direct(s_genie, t2) - truth).squaredNorm() / truth.squaredNorm();
    est += (s_est.g_hat * track_direct(s_est, t2) - truth).squaredNorm() / truth.squaredNorm();
  }
  EXPECT_LE(std::abs(10.0 * std::log10(est / genie)), 3.0);
}

TEST(TrackRecursive, SingleUpdateMatchesDirect) {
  for (FUpdate mode : {FUpdate::structured, FUpdate::unstructured}) {
    const auto st = small_setup(8, 16, 16, 5, 8);
    ChannelProcess proc(st.cfg, make_rng({5, 1}), make_rng({5, 2}));
    const auto c1 = proc.next();
    const auto c2 = proc.next();
    TrackerOptions o;
    o.update = mode;
    auto s = tracker_init(c1.g, ris_signal(c1.h, st.x), st.phi, 0.5, o);
    const SlotTensor t2 = noiseless_slot(c2.g, ris_signal(c2.h, st.x), st.phi);
    const ComplexMatrix direct = track_direct(s, t2);
    const ComplexMatrix rec = track_recursive(s, t2);
    EXPECT_LE(rel_err(rec, direct), 1e-8);
    EXPECT_EQ(s.slot, 2);
  }
}

namespace {

struct History {
  std::vector<ComplexMatrix> ys;  // stacked slices, slot 1 as the pseudo-observation F0 Z1
  std::vector<ComplexMatrix> zs;
  TrackerState state;
};

// runs n recursive updates on noisy data from a fixed G
History run_history(FUpdate mode, double lambda, int n, std::uint64_t seed) {
  const auto st = small_setup(4, 6, 4, 3, 3);
  Rng rng = make_rng({seed});
  const ComplexMatrix g = complex_gaussian_matrix(4, 6, rng);
  const ComplexMatrix g0 = g + 0.1 * complex_gaussian_matrix(4, 6, rng);
  const ComplexMatrix z1 = complex_gaussian_matrix(6, 3, rng);
  TrackerOptions o;
  o.update = mode;
  o.cache_pinv = false;
  History h{{}, {}, tracker_init(g0, z1, st.phi, lambda, o)};
  h.ys.push_back(h.state.f_hat * z1);
  h.zs.push_back(z1);
  for (int i = 0; i < n; ++i) {
    SlotTensor t = noiseless_slot(g, complex_gaussian_matrix(6, 3, rng), st.phi);
    for (auto& sl : t.slices) sl += complex_gaussian_matrix(sl.rows(), sl.cols(), rng, 0.01);
    h.zs.push_back(track_recursive(h.state, t));
    h.ys.push_back(stacked_slices(t));
  }
  return h;
}

std::vector<double> weights(double lambda, std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t t = 0; t < n; ++t) w[t] = std::pow(lambda, double(n - 1 - t));
  return w;
}

// min_F sum_tau w_tau ||Y_tau - F Z_tau||^2 as one stacked least-squares problem
ComplexMatrix batch_unstructured_oracle(const std::vector<ComplexMatrix>& ys, const std::vector<ComplexMatrix>& zs,
                                        const std::vector<double>& w) {
  Index cols = 0;
  for (const auto& z : zs) cols += z.cols();
  ComplexMatrix a(cols, zs.front().rows());
  ComplexMatrix b(cols, ys.front().rows());
  Index off = 0;
  for (std::size_t t = 0; t < zs.size(); ++t) {
    const double sw = std::sqrt(w[t]);
    a.middleRows(off, zs[t].cols()) = sw * zs[t].adjoint();
    b.middleRows(off, zs[t].cols()) = sw * ys[t].adjoint();
    off += zs[t].cols();
  }
  return ComplexMatrix(a.colPivHouseholderQr().solve(b)).adjoint();
}

}  // namespace

TEST(TrackRecursive, UnitForgettingMatchesBatchLs) {
  const auto st = small_setup(4, 6, 4, 3, 3);
  {
    const auto h = run_history(FUpdate::structured, 1.0, 8, 6);
    const ComplexMatrix g_oracle = batch_structured_oracle(h.ys, h.zs, weights(1.0, h.ys.size()), st.phi.matrix, 4);
    EXPECT_LE(rel_err(h.state.g_hat, g_oracle), 1e-8);
    EXPECT_LE(rel_err(h.state.f_hat, khatri_rao(st.phi.matrix, g_oracle)), 1e-8);
  }
  {
    const auto h = run_history(FUpdate::unstructured, 1.0, 8, 7);
    EXPECT_LE(rel_err(h.state.f_hat, batch_unstructured_oracle(h.ys, h.zs, weights(1.0, h.ys.size()))), 1e-8);
  }
}

TEST(TrackRecursive, ExponentialWeightingMatchesBatchLs) {
  const auto st = small_setup(4, 6, 4, 3, 3);
  for (double lambda : {0.5, 0.8}) {
    for (int n : {1, 3, 6}) {
      const auto hs = run_history(FUpdate::structured, lambda, n, 8 + n);
      const auto w = weights(lambda, hs.ys.size());
      EXPECT_LE(rel_err(hs.state.g_hat, batch_structured_oracle(hs.ys, hs.zs, w, st.phi.matrix, 4)), 1e-8)
          << lambda << " " << n;
      if (n >= 3) {
        // K = 6 needs at least two 3-column slots before F alone is determined
        const auto hu = run_history(FUpdate::unstructured, lambda, n, 20 + n);
        EXPECT_LE(rel_err(hu.state.f_hat, batch_unstructured_oracle(hu.ys, hu.zs, weights(lambda, hu.ys.size()))), 1e-8)
            << lambda << " " << n;
      }
    }
  }
}

TEST(TrackRecursive, UnitForgettingAccumulatorsAreSums) {
  const auto h = run_history(FUpdate::structured, 1.0, 10, 30);
  ComplexMatrix zz = ComplexMatrix::Zero(6, 6);
  ComplexMatrix yz = ComplexMatrix::Zero(h.ys.front().rows(), 6);
  for (std::size_t t = 0; t < h.zs.size(); ++t) {
    zz += h.zs[t] * h.zs[t].adjoint();
    yz += h.ys[t] * h.zs[t].adjoint();
  }
  EXPECT_LE(rel_err(h.state.corr_zz, zz), 1e-10);
  EXPECT_LE(rel_err(h.state.corr_yz, yz), 1e-10);
}

TEST(TrackRecursive, CorrelationStaysHermitianPsd) {
  for (FUpdate mode : {FUpdate::structured, FUpdate::unstructured}) {
    for (double lambda : {0.3, 0.5, 1.0}) {
      const auto st = small_setup(4, 6, 6, 3, 4);
      Rng rng = make_rng({40});
      TrackerOptions o;
      o.update = mode;
      auto s = tracker_init_random(4, 4, st.phi, lambda, rng, o);
      EXPECT_TRUE(hermitian_psd(s.corr_zz, 1e-10));
      const ComplexMatrix g = complex_gaussian_matrix(4, 6, rng);
      for (int i = 0; i < 30; ++i) {
        SlotTensor t = noiseless_slot(g, complex_gaussian_matrix(6, 4, rng), st.phi);
        for (auto& sl : t.slices) sl += complex_gaussian_matrix(sl.rows(), sl.cols(), rng, 0.1);
        track_recursive(s, t);
        ASSERT_TRUE(hermitian_psd(s.corr_zz, 1e-10)) << "slot " << s.slot;
      }
    }
  }
}

TEST(TrackRecursive, NoLargeFactorizationPerSlot) {
  const auto st = small_setup(8, 16, 16, 5, 8);
  Rng rng = make_rng({41});
  const ComplexMatrix g = complex_gaussian_matrix(8, 16, rng);
  for (FUpdate mode : {FUpdate::structured, FUpdate::unstructured}) {
    TrackerOptions o;
    o.update = mode;
    auto s = tracker_init(g, complex_gaussian_matrix(16, 8, rng), st.phi, 0.5, o);
    for (int i = 0; i < 5; ++i) {
      const SlotTensor t = noiseless_slot(g, complex_gaussian_matrix(16, 8, rng), st.phi);
      probe::factorizations().reset();
      track_recursive(s, t);
      const auto& p = probe::factorizations();
      EXPECT_GT(p.count, 0);
      EXPECT_LE(p.max_extent, 16) << "a factorization larger than K x K ran inside track_recursive";
    }
  }
}

TEST(TrackRecursive, NonFiniteInputIsNumericFailure) {
  const auto st = small_setup(4, 6, 6, 3, 4);
  Rng rng = make_rng({42});
  auto s = tracker_init(complex_gaussian_matrix(4, 6, rng), complex_gaussian_matrix(6, 4, rng), st.phi, 0.5);
  SlotTensor t(4, 4, 6);
  t.slices[2](1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(track_recursive(s, t), NumericFailure);
}

TEST(TrackRecursive, TracksStationaryNoiselessChannel) {
  const auto st = small_setup(8, 16, 16, 5, 8);
  ChannelProcess proc(st.cfg, make_rng({43, 1}), make_rng({43, 2}));
  const auto c1 = proc.next();
  auto s = tracker_init(c1.g, ris_signal(c1.h, st.x), st.phi, 0.5);
  for (int i = 0; i < 10; ++i) {
    const auto c = proc.next();
    const ComplexMatrix z = ris_signal(c.h, st.x);
    EXPECT_LE(rel_err(track_recursive(s, noiseless_slot(c.g, z, st.phi)), z), 1e-8);
  }
}
