// SPDX-License-Identifier: Apache-2.0
//
// Geometric BS-RIS / RIS-UE channels, pilot and RIS phase-profile matrices,
// and the per-slot observation tensor Y_l = G diag(phi_l) H X + W_l.
#pragma once

#include "ristrack/tensor_core.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>
#include <vector>

namespace ristrack {

using Rng = std::mt19937_64;

/// Independent stream for a tuple of identifiers (seed, run, purpose, ...).
inline Rng make_rng(std::initializer_list<std::uint64_t> ids) {
  std::vector<std::uint32_t> words;
  for (auto id : ids) {
    words.push_back(static_cast<std::uint32_t>(id & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(id >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Circularly-symmetric complex Gaussian with E|w|^2 = variance.
inline cplx complex_gaussian(Rng& rng, double variance = 1.0) {
  std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

inline ComplexMatrix complex_gaussian_matrix(Index rows, Index cols, Rng& rng, double variance = 1.0) {
  ComplexMatrix out(rows, cols);
  // fill column-major explicitly so the draw order never depends on Eigen internals
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) out(r, c) = complex_gaussian(rng, variance);
  return out;
}

/// Scenario dimensions and algorithm hyperparameters.
struct SystemConfig {
  Index n_rx = 16;          // N_r
  Index n_ris = 64;         // K
  Index n_users = 20;       // M
  Index pilot_len = 20;     // S
  Index n_profiles = 64;    // L
  Index n_slots = 100;      // I, period over which G stays fixed
  double snr_db = 10.0;
  double forgetting = 0.5;  // lambda
  Index n_paths_g = 4;      // P
  std::vector<Index> n_paths_user = std::vector<Index>(20, 4);  // J_m
  std::uint64_t rng_seed = 1;

  void validate() const {
    auto positive = [](Index v, const char* name) {
      if (v < 1) throw std::invalid_argument(std::string("SystemConfig: ") + name + " must be >= 1");
    };
    positive(n_rx, "n_rx");
    positive(n_ris, "n_ris");
    positive(n_users, "n_users");
    positive(pilot_len, "pilot_len");
    positive(n_profiles, "n_profiles");
    positive(n_slots, "n_slots");
    positive(n_paths_g, "n_paths_g");
    if (!(forgetting > 0.0 && forgetting <= 1.0))
      throw std::invalid_argument("SystemConfig: forgetting must lie in (0, 1]");
    if (!std::isfinite(snr_db)) throw std::invalid_argument("SystemConfig: snr_db must be finite");
    if (static_cast<Index>(n_paths_user.size()) != n_users)
      throw std::invalid_argument("SystemConfig: n_paths_user needs exactly n_users entries");
    for (auto j : n_paths_user) positive(j, "n_paths_user[m]");
  }

  /// Resize n_paths_user to n_users, repeating the first entry (or 4).
  void broadcast_user_paths() {
    const Index j = n_paths_user.empty() ? 4 : n_paths_user.front();
    n_paths_user.assign(static_cast<std::size_t>(n_users), j);
  }
};

struct PathParamsG {
  std::vector<cplx> gains;          // alpha_p
  std::vector<double> dir_cos_rx;   // psi_p
  std::vector<double> dir_cos_ris;  // omega_p
};

struct PathParamsUser {
  std::vector<cplx> gains;     // beta_{m,j}
  std::vector<double> dir_cos; // varphi_{m,j}
};

struct ChannelRealization {
  Index slot_index = 1;
  ComplexMatrix g;  // N_r x K
  ComplexMatrix h;  // K x M
  PathParamsG g_paths;
  std::vector<PathParamsUser> h_paths;
};

struct PhaseProfileMatrix {
  ComplexMatrix matrix;  // L x K, row l = phi[l]^T
  RealMatrix phases;     // theta_k[l] in [0, 2 pi)

  Index n_profiles() const { return matrix.rows(); }
  Index n_ris() const { return matrix.cols(); }
};

struct PilotMatrix {
  ComplexMatrix matrix;  // M x S, row m = x_m^T

  Index n_users() const { return matrix.rows(); }
  Index pilot_len() const { return matrix.cols(); }

  bool has_orthonormal_rows(double tol = 1e-10) const {
    const ComplexMatrix gram = matrix * matrix.adjoint();
    return (gram - ComplexMatrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= tol;
  }
};

/// a_U(u) = [1, e^{-j 2 pi u}, ..., e^{-j 2 pi (U-1) u}]^T
inline ComplexVector steering_vector(Index n_elems, double dir_cos) {
  if (n_elems < 1) throw std::invalid_argument("steering_vector: n_elems must be >= 1");
  ComplexVector a(n_elems);
  for (Index u = 0; u < n_elems; ++u)
    a(u) = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(u) * dir_cos);
  return a;
}

inline ComplexMatrix build_g(const PathParamsG& p, Index n_rx, Index n_ris) {
  if (p.dir_cos_rx.size() != p.gains.size() || p.dir_cos_ris.size() != p.gains.size())
    throw std::invalid_argument("build_g: path parameter lists differ in length");
  ComplexMatrix g = ComplexMatrix::Zero(n_rx, n_ris);
  for (std::size_t i = 0; i < p.gains.size(); ++i)
    g += p.gains[i] * steering_vector(n_rx, p.dir_cos_rx[i]) *
         steering_vector(n_ris, p.dir_cos_ris[i]).adjoint();
  return g;
}

inline ComplexVector build_user_channel(const PathParamsUser& p, Index n_ris) {
  if (p.dir_cos.size() != p.gains.size())
    throw std::invalid_argument("build_user_channel: path parameter lists differ in length");
  ComplexVector h = ComplexVector::Zero(n_ris);
  for (std::size_t j = 0; j < p.gains.size(); ++j) h += p.gains[j] * steering_vector(n_ris, p.dir_cos[j]);
  return h;
}

inline ComplexMatrix build_h(const std::vector<PathParamsUser>& users, Index n_ris) {
  ComplexMatrix h(n_ris, static_cast<Index>(users.size()));
  for (std::size_t m = 0; m < users.size(); ++m) h.col(static_cast<Index>(m)) = build_user_channel(users[m], n_ris);
  return h;
}

inline double uniform_dir_cos(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  return u(rng);
}

inline std::pair<PathParamsG, ComplexMatrix> gen_g(const SystemConfig& cfg, Rng& rng) {
  PathParamsG p;
  for (Index i = 0; i < cfg.n_paths_g; ++i) {
    p.gains.push_back(complex_gaussian(rng));
    p.dir_cos_rx.push_back(uniform_dir_cos(rng));
    p.dir_cos_ris.push_back(uniform_dir_cos(rng));
  }
  ComplexMatrix g = build_g(p, cfg.n_rx, cfg.n_ris);
  return {std::move(p), std::move(g)};
}

inline std::pair<std::vector<PathParamsUser>, ComplexMatrix> gen_h(const SystemConfig& cfg, Rng& rng) {
  std::vector<PathParamsUser> users(static_cast<std::size_t>(cfg.n_users));
  for (std::size_t m = 0; m < users.size(); ++m) {
    for (Index j = 0; j < cfg.n_paths_user.at(m); ++j) {
      users[m].gains.push_back(complex_gaussian(rng));
      users[m].dir_cos.push_back(uniform_dir_cos(rng));
    }
  }
  ComplexMatrix h = build_h(users, cfg.n_ris);
  return {std::move(users), std::move(h)};
}

/// First L rows of the unnormalized K-point DFT. For L > K the rows wrap around.
inline PhaseProfileMatrix gen_phase_profiles(const SystemConfig& cfg) {
  const Index l_count = cfg.n_profiles;
  const Index k_count = cfg.n_ris;
  PhaseProfileMatrix out;
  out.matrix.resize(l_count, k_count);
  out.phases.resize(l_count, k_count);
  for (Index l = 0; l < l_count; ++l) {
    for (Index k = 0; k < k_count; ++k) {
      const auto lk = static_cast<double>((l * k) % k_count);
      double theta = -2.0 * std::numbers::pi * lk / static_cast<double>(k_count);
      theta = std::fmod(theta + 2.0 * std::numbers::pi, 2.0 * std::numbers::pi);
      if (theta >= 2.0 * std::numbers::pi) theta = 0.0;
      out.phases(l, k) = theta;
      out.matrix(l, k) = std::polar(1.0, theta);
    }
  }
  return out;
}

/// M x S block of the max(M, S)-point DFT, scaled by 1/sqrt(S).
inline PilotMatrix gen_pilots(const SystemConfig& cfg) {
  const Index m = cfg.n_users;
  const Index s = cfg.pilot_len;
  if (s < 1) throw std::invalid_argument("gen_pilots: pilot_len must be >= 1");
  const Index n = std::max(m, s);
  PilotMatrix x;
  x.matrix = dft_matrix(n, false).topLeftCorner(m, s) / std::sqrt(static_cast<double>(s));
  return x;
}

/// Z = H X, the K x S pilot signal impinging on the RIS.
inline ComplexMatrix ris_signal(const ComplexMatrix& h, const PilotMatrix& x) {
  if (h.cols() != x.n_users()) throw std::invalid_argument("ris_signal: H columns != number of users");
  return h * x.matrix;
}

/// Noiseless slices G diag(phi_l) Z.
inline SlotTensor noiseless_slot(const ComplexMatrix& g, const ComplexMatrix& z, const PhaseProfileMatrix& phi) {
  if (g.cols() != z.rows() || g.cols() != phi.n_ris())
    throw std::invalid_argument("noiseless_slot: K mismatch between G, Z and Phi");
  SlotTensor t(g.rows(), z.cols(), phi.n_profiles());
  for (Index l = 0; l < phi.n_profiles(); ++l)
    t.slice(l) = g * phi.matrix.row(l).transpose().asDiagonal() * z;
  return t;
}

inline SlotTensor synthesize_slot(const ChannelRealization& chan, const PilotMatrix& x, const PhaseProfileMatrix& phi,
                                  double noise_var, Rng& rng) {
  if (!(noise_var >= 0.0)) throw std::invalid_argument("synthesize_slot: noise_var must be >= 0");
  if (chan.g.cols() != chan.h.rows()) throw std::invalid_argument("synthesize_slot: G and H disagree on K");
  SlotTensor t = noiseless_slot(chan.g, ris_signal(chan.h, x), phi);
  if (noise_var > 0.0) {
    for (auto& s : t.slices) s += complex_gaussian_matrix(s.rows(), s.cols(), rng, noise_var);
  }
  return t;
}

/// sigma^2 = P_sig / 10^(snr/10), P_sig the mean per-entry power of the noiseless tensor.
inline double noise_var_for_signal_power(double p_sig, double snr_db) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("noise_var_for_snr: snr_db must be finite");
  if (!(p_sig > 0.0)) throw std::invalid_argument("noise_var_for_snr: zero-signal channel");
  const double var = p_sig / std::pow(10.0, snr_db / 10.0);
  if (!std::isfinite(var)) throw std::invalid_argument("noise_var_for_snr: snr_db out of representable range");
  return var;
}

inline double noise_var_for_snr(const ChannelRealization& chan, const PilotMatrix& x, const PhaseProfileMatrix& phi,
                                double snr_db) {
  const SlotTensor clean = noiseless_slot(chan.g, ris_signal(chan.h, x), phi);
  const double entries = static_cast<double>(clean.n_rx * clean.n_pilot * clean.n_profiles);
  return noise_var_for_signal_power(clean.squared_norm() / entries, snr_db);
}

/// Draws G every n_slots slots and H every slot, from two independent streams.
class ChannelProcess {
public:
  ChannelProcess(SystemConfig cfg, Rng g_stream, Rng h_stream)
      : cfg_(std::move(cfg)), g_rng_(std::move(g_stream)), h_rng_(std::move(h_stream)) {
    cfg_.validate();
  }

  /// Realization for the next slot (slots count from 1).
  ChannelRealization next() {
    ++slot_;
    if ((slot_ - 1) % cfg_.n_slots == 0) {
      auto [paths, g] = gen_g(cfg_, g_rng_);
      g_paths_ = std::move(paths);
      g_ = std::move(g);
    }
    auto [users, h] = gen_h(cfg_, h_rng_);
    ChannelRealization out;
    out.slot_index = slot_;
    out.g = g_;
    out.h = std::move(h);
    out.g_paths = g_paths_;
    out.h_paths = std::move(users);
    return out;
  }

  /// True when the slot returned by the latest next() opened a new G period.
  bool period_start() const { return (slot_ - 1) % cfg_.n_slots == 0; }

private:
  SystemConfig cfg_;
  Rng g_rng_;
  Rng h_rng_;
  Index slot_ = 0;
  PathParamsG g_paths_;
  ComplexMatrix g_;
};

}  // namespace ristrack
