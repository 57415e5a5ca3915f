// SPDX-License-Identifier: Apache-2.0
//
// Sparse recovery of the RIS-UE channels H from an estimate of Z = H X.
//
// With U the normalized K-point DFT, H_a = H^T U is compressible along its
// rows (few angular bins per user). Transposing Z = H X and applying U gives
//   Z^T U = X^T H_a,
// K independent linear problems with the shared S x M measurement matrix X^T.
// Each column is solved with sum-product GAMP under a Bernoulli-Gaussian prior
// and an AWGN output channel.
#pragma once

#include "ristrack/channel_model.hpp"
#include "ristrack/tensor_core.hpp"

#include <optional>

namespace ristrack {

inline void require_square(const ComplexMatrix& u, const char* what) {
  if (u.rows() != u.cols()) throw std::invalid_argument(std::string(what) + ": transform must be square");
}

/// H_a = H^T U (M x K).
inline ComplexMatrix to_angular(const ComplexMatrix& h, const ComplexMatrix& u) {
  require_square(u, "to_angular");
  if (h.rows() != u.rows()) throw std::invalid_argument("to_angular: H rows != transform size");
  return h.transpose() * u;
}

/// Exact inverse of to_angular for unitary U: H = (H_a U^H)^T.
/// For the symmetric DFT this equals conj(U) H_a^T, not U H_a^T.
inline ComplexMatrix from_angular(const ComplexMatrix& h_a, const ComplexMatrix& u) {
  require_square(u, "from_angular");
  if (h_a.cols() != u.rows()) throw std::invalid_argument("from_angular: H_a columns != transform size");
  return (h_a * u.adjoint()).transpose();
}

struct GampOptions {
  Index max_iters = 50;
  double tol = 1e-8;
  double damping = 0.9;                  // 1 = undamped
  double prior_sparsity = 0.2;           // rho
  std::optional<double> prior_var;       // sigma_x^2 of the active component; estimated from data when unset
  std::optional<double> noise_var;       // sigma_w^2; estimated from data when unset
  bool learn_hyperparams = true;         // EM updates of rho and of whichever variances were left unset

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("GampOptions: max_iters must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("GampOptions: tol must be > 0");
    if (!(damping > 0.0 && damping <= 1.0)) throw std::invalid_argument("GampOptions: damping must lie in (0, 1]");
    if (!(prior_sparsity > 0.0 && prior_sparsity <= 1.0))
      throw std::invalid_argument("GampOptions: prior_sparsity must lie in (0, 1]");
    if (prior_var && !(*prior_var > 0.0)) throw std::invalid_argument("GampOptions: prior_var must be > 0");
    if (noise_var && !(*noise_var >= 0.0)) throw std::invalid_argument("GampOptions: noise_var must be >= 0");
  }
};

/// Defaults for a scenario: rho is the mean path count per angular bin, times 3
/// for leakage of off-grid paths into neighbouring bins.
inline GampOptions default_gamp_options(const SystemConfig& cfg) {
  GampOptions o;
  double paths = 0.0;
  for (auto j : cfg.n_paths_user) paths += static_cast<double>(j);
  o.prior_sparsity = std::min(1.0, 3.0 * paths / static_cast<double>(cfg.n_users * cfg.n_ris));
  return o;
}

struct GampColumnDiagnostics {
  Index iters = 0;
  double last_change = 0.0;  // relative change of the estimate at the final iteration
  bool converged = false;
};

struct GampResult {
  ComplexMatrix x;          // M x K posterior means
  RealMatrix support_prob;  // M x K posterior probability of the active component
  std::vector<GampColumnDiagnostics> columns;
  double prior_sparsity = 0.0;  // final hyperparameters (after EM, if enabled)
  double prior_var = 0.0;
  double noise_var = 0.0;
};

class GampDivergence : public DivergenceError {
public:
  GampDivergence(const std::string& what, ComplexMatrix last_stable)
      : DivergenceError(what), last_stable_(std::move(last_stable)) {}
  const ComplexMatrix& last_stable() const { return last_stable_; }

private:
  ComplexMatrix last_stable_;
};

namespace detail {

struct BgPosterior {
  cplx mean;
  double var;
  double active_prob;
  cplx active_mean;  // posterior mean given the active component
  double active_var;
};

// x ~ (1 - rho) delta_0 + rho CN(0, vx); observed r = x + CN(0, vr).
inline BgPosterior bernoulli_gaussian(cplx r, double vr, double rho, double vx) {
  const double r2 = std::norm(r);
  const double v_on = vx + vr;
  // log-ratio of CN(r; 0, v_on) to CN(r; 0, vr)
  const double log_ratio = std::log(vr / v_on) + r2 / vr - r2 / v_on;
  const double prior_log = std::log(rho) - std::log1p(-std::min(rho, 1.0 - 1e-15));
  const double z = prior_log + log_ratio;
  const double pi = z > 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  const double gain = vx / v_on;
  const cplx gamma = gain * r;
  const double nu = gain * vr;
  BgPosterior p;
  p.active_prob = rho >= 1.0 ? 1.0 : pi;
  p.active_mean = gamma;
  p.active_var = nu;
  p.mean = p.active_prob * gamma;
  p.var = std::max(p.active_prob * (nu + std::norm(gamma)) - std::norm(p.mean), 0.0);
  return p;
}

}  // namespace detail

/// GAMP on b = a x + w, column by column (a: S x M, b: S x K, result M x K).
/// Linear steps never mix columns; with learn_hyperparams the EM updates pool
/// statistics over all columns.
inline GampResult gamp_solve(const ComplexMatrix& a, const ComplexMatrix& b, const GampOptions& opts) {
  opts.validate();
  if (a.rows() != b.rows()) throw std::invalid_argument("gamp_solve: a and b disagree on the number of measurements");
  if (!a.allFinite() || !b.allFinite()) throw std::invalid_argument("gamp_solve: non-finite input");

  const Index s_count = a.rows();
  const Index m_count = a.cols();
  const Index k_count = b.cols();
  const RealMatrix a2 = a.cwiseAbs2();
  const double a_fro2 = a.squaredNorm();

  double rho = opts.prior_sparsity;
  double noise_var = opts.noise_var.value_or(0.1 * b.squaredNorm() / static_cast<double>(std::max<Index>(1, b.size())));
  double prior_var = 0.0;
  if (opts.prior_var) {
    prior_var = *opts.prior_var;
  } else {
    // E||a x||^2 ~ (||a||_F^2 / M) * M * rho * vx per column
    const double signal = std::max(b.squaredNorm() - static_cast<double>(b.size()) * noise_var,
                                   0.01 * b.squaredNorm());
    prior_var = signal / std::max(a_fro2 * rho * static_cast<double>(k_count), 1e-300);
    if (!(prior_var > 0.0)) prior_var = 1.0;
  }
  // a floor keeps the output step well-defined for noise_var -> 0
  const double var_floor = 1e-30;

  GampResult res;
  res.columns.resize(static_cast<std::size_t>(k_count));

  ComplexMatrix x_hat = ComplexMatrix::Zero(m_count, k_count);
  RealMatrix x_var = RealMatrix::Constant(m_count, k_count, rho * prior_var);
  ComplexMatrix s_hat = ComplexMatrix::Zero(s_count, k_count);
  RealMatrix s_var = RealMatrix::Zero(s_count, k_count);
  RealMatrix pi = RealMatrix::Constant(m_count, k_count, rho);
  std::vector<bool> done(static_cast<std::size_t>(k_count), false);

  const double b_scale = std::max(b.norm(), std::sqrt(rho * prior_var * static_cast<double>(m_count * k_count)));
  const double beta = opts.damping;
  ComplexMatrix last_stable = x_hat;

  ComplexMatrix z_post(s_count, k_count);
  RealMatrix z_var_post(s_count, k_count);
  RealMatrix active_second(m_count, k_count);  // pi (nu + |gamma|^2), for EM

  for (Index it = 0; it < opts.max_iters; ++it) {
    bool all_done = true;

    // output linear step
    const RealMatrix p_var = (a2 * x_var).cwiseMax(var_floor);
    const ComplexMatrix p_hat = a * x_hat - p_var.cwiseProduct(s_hat.real()).cast<cplx>() -
                                cplx(0.0, 1.0) * p_var.cwiseProduct(s_hat.imag()).cast<cplx>();

    // AWGN output denoiser
    const RealMatrix denom = (p_var.array() + noise_var).matrix();
    const RealMatrix s_var_new = denom.cwiseInverse();
    ComplexMatrix s_hat_new = (b - p_hat).cwiseQuotient(denom.cast<cplx>());
    z_post = (p_var.cast<cplx>().cwiseProduct(b) + noise_var * p_hat).cwiseQuotient(denom.cast<cplx>());
    z_var_post = (p_var * noise_var).cwiseQuotient(denom);

    for (Index k = 0; k < k_count; ++k) {
      if (done[static_cast<std::size_t>(k)]) continue;
      if (it == 0) {
        s_hat.col(k) = s_hat_new.col(k);
        s_var.col(k) = s_var_new.col(k);
      } else {
        s_hat.col(k) = beta * s_hat_new.col(k) + (1.0 - beta) * s_hat.col(k);
        s_var.col(k) = beta * s_var_new.col(k) + (1.0 - beta) * s_var.col(k);
      }
    }

    // input linear step
    const RealMatrix r_var = (a2.transpose() * s_var).cwiseMax(var_floor).cwiseInverse();
    const ComplexMatrix r_hat = x_hat + r_var.cast<cplx>().cwiseProduct(a.adjoint() * s_hat);

    // Bernoulli-Gaussian input denoiser
    for (Index k = 0; k < k_count; ++k) {
      auto& diag = res.columns[static_cast<std::size_t>(k)];
      if (done[static_cast<std::size_t>(k)]) continue;
      ComplexVector x_new(m_count);
      RealVector v_new(m_count);
      for (Index m = 0; m < m_count; ++m) {
        const auto post = detail::bernoulli_gaussian(r_hat(m, k), r_var(m, k), rho, prior_var);
        x_new(m) = post.mean;
        v_new(m) = post.var;
        pi(m, k) = post.active_prob;
        active_second(m, k) = post.active_prob * (post.active_var + std::norm(post.active_mean));
      }
      const ComplexVector x_old = x_hat.col(k);
      x_hat.col(k) = it == 0 ? x_new : (beta * x_new + (1.0 - beta) * x_old).eval();
      x_var.col(k) = it == 0 ? v_new : (beta * v_new + (1.0 - beta) * x_var.col(k)).eval();

      const double norm = x_hat.col(k).norm();
      const double change = (x_hat.col(k) - x_old).norm() / std::max(norm, 1e-300);
      diag.iters = it + 1;
      diag.last_change = change;
      if (norm == 0.0 || change < opts.tol) {
        diag.converged = true;
        done[static_cast<std::size_t>(k)] = true;
      } else {
        all_done = false;
      }
    }

    if (!x_hat.allFinite() || x_hat.norm() > 1e6 * b_scale) {
      throw GampDivergence("gamp_solve: estimate diverged at iteration " + std::to_string(it + 1), last_stable);
    }
    last_stable = x_hat;

    if (opts.learn_hyperparams) {
      const double n_x = static_cast<double>(m_count * k_count);
      const double pi_sum = pi.sum();
      rho = std::clamp(pi_sum / n_x, 1e-4, 1.0);
      if (pi_sum > 0.0 && !opts.prior_var) prior_var = std::max(active_second.sum() / pi_sum, 1e-300);
      if (!opts.noise_var) {
        const double resid = ((b - z_post).cwiseAbs2() + z_var_post).sum() / static_cast<double>(s_count * k_count);
        noise_var = std::max(resid, 1e-300);
      }
    }

    if (all_done) break;
  }

  res.x = std::move(x_hat);
  res.support_prob = std::move(pi);
  res.prior_sparsity = rho;
  res.prior_var = prior_var;
  res.noise_var = noise_var;
  return res;
}

/// H from a Z estimate: b = Z^T U, a = X^T, GAMP, back to the antenna domain.
inline ComplexMatrix recover_h(const ComplexMatrix& z_hat, const PilotMatrix& x, const GampOptions& opts,
                               GampResult* details = nullptr) {
  if (z_hat.cols() != x.pilot_len()) throw std::invalid_argument("recover_h: Z_hat columns != pilot length");
  const ComplexMatrix u = dft_matrix(z_hat.rows(), true);
  const ComplexMatrix b = z_hat.transpose() * u;
  GampResult res = gamp_solve(x.matrix.transpose(), b, opts);
  ComplexMatrix h = from_angular(res.x, u);
  if (details) *details = std::move(res);
  return h;
}

/// Orthogonal-pilot benchmark: H = Z X^H, valid when X has orthonormal rows.
inline ComplexMatrix ls_orthogonal_baseline(const ComplexMatrix& z_hat, const PilotMatrix& x) {
  if (x.pilot_len() < x.n_users())
    throw std::invalid_argument("ls_orthogonal_baseline: needs S >= M");
  if (!x.has_orthonormal_rows()) throw std::invalid_argument("ls_orthogonal_baseline: pilot rows are not orthonormal");
  if (z_hat.cols() != x.pilot_len()) throw std::invalid_argument("ls_orthogonal_baseline: Z_hat columns != pilot length");
  return z_hat * x.matrix.adjoint();
}

}  // namespace ristrack
