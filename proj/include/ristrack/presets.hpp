// SPDX-License-Identifier: Apache-2.0
//
// Experiment presets for the four studies, at desk scale (fast, tolerance
// checked) and at the original scale.
#pragma once

#include "ristrack/harness.hpp"

namespace ristrack {

enum class PresetScale { desk, paper };

inline PresetScale preset_scale_from_string(const std::string& s) {
  if (s == "desk") return PresetScale::desk;
  if (s == "paper") return PresetScale::paper;
  throw std::invalid_argument("unknown scale '" + s + "'");
}

/// N_r = 16, K = L = 64, M = S = 20, I = 100, lambda = 0.5, P = 4, J_m = 4.
inline SystemConfig reference_config() {
  SystemConfig cfg;
  cfg.broadcast_user_paths();
  return cfg;
}

/// NMSE vs SNR at slots 3 and 50.
inline ExperimentSpec snr_preset(PresetScale scale) {
  ExperimentSpec s;
  s.figure_id = FigureId::snr_sweep;
  s.base = reference_config();
  s.sweep = {{"snr_db", {0, 10, 20, 30}}};
  s.n_monte_carlo = scale == PresetScale::desk ? 20 : 100;
  s.algorithms = {Algorithm::bals_per_slot, Algorithm::rls_random_init, Algorithm::bals_rls};
  s.total_slots = 50;
  s.eval_slots = {3, 50};
  return s;
}

/// NMSE vs slot over two G periods. The last desk point is the hard case:
/// K = 32 with L = 8, standing in for K = 256 at the original scale.
inline ExperimentSpec convergence_preset(PresetScale scale) {
  ExperimentSpec s;
  s.figure_id = FigureId::convergence;
  s.base = reference_config();
  s.base.snr_db = 10.0;
  s.sweep_zip = true;
  if (scale == PresetScale::desk) {
    s.sweep = {{"n_ris", {16, 64, 32}}, {"n_profiles", {16, 64, 8}}};
    s.n_monte_carlo = 10;
  } else {
    s.sweep = {{"n_ris", {16, 64, 256}}, {"n_profiles", {16, 64, 64}}};
    s.n_monte_carlo = 100;
  }
  s.algorithms = {Algorithm::rls_random_init, Algorithm::bals_rls};
  s.total_slots = 200;
  return s;
}

/// Per-slot wall time vs K.
inline ExperimentSpec runtime_preset(PresetScale scale) {
  ExperimentSpec s;
  s.figure_id = FigureId::runtime;
  s.base = reference_config();
  s.sweep_zip = true;
  if (scale == PresetScale::desk) {
    s.sweep = {{"n_ris", {16, 32, 64}}, {"n_profiles", {16, 32, 64}}};
    s.n_monte_carlo = 3;
    s.total_slots = 8;
  } else {
    s.sweep = {{"n_ris", {16, 64, 128, 256}}, {"n_profiles", {16, 64, 128, 256}}};
    s.n_monte_carlo = 10;
    s.total_slots = 20;
  }
  s.algorithms = {Algorithm::bals_per_slot, Algorithm::rls_random_init, Algorithm::bals_rls};
  s.record_timing = true;
  return s;
}

/// NMSE_H vs pilot length at 0 dB.
inline ExperimentSpec pilots_preset(PresetScale scale) {
  ExperimentSpec s;
  s.figure_id = FigureId::pilot_sweep;
  s.base = reference_config();
  s.base.snr_db = 0.0;
  s.sweep = {{"pilot_len", {5, 10, 15, 20}}};
  s.n_monte_carlo = scale == PresetScale::desk ? 20 : 100;
  s.algorithms = {Algorithm::gamp, Algorithm::ls_orthogonal};
  s.total_slots = 1;
  return s;
}

/// id is one of snr, convergence, runtime, pilots.
inline ExperimentSpec figure_preset(const std::string& id, PresetScale scale) {
  if (id == "snr") return snr_preset(scale);
  if (id == "convergence") return convergence_preset(scale);
  if (id == "runtime") return runtime_preset(scale);
  if (id == "pilots") return pilots_preset(scale);
  throw std::invalid_argument("unknown figure id '" + id + "'");
}

}  // namespace ristrack
