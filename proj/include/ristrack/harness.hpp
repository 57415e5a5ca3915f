// SPDX-License-Identifier: Apache-2.0
//
// Monte-Carlo driver: channel synthesis -> BALS -> tracking -> channel
// recovery, with per-slot NMSE and wall-clock records.
#pragma once

#include "ristrack/bals.hpp"
#include "ristrack/channel_model.hpp"
#include "ristrack/gamp.hpp"
#include "ristrack/tracker.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>

namespace ristrack {

enum class FigureId { snr_sweep, convergence, runtime, pilot_sweep, custom };

enum class Algorithm { bals_per_slot, rls_random_init, bals_rls, gamp, ls_orthogonal };

inline constexpr std::array<Algorithm, 5> kAllAlgorithms = {Algorithm::bals_per_slot, Algorithm::rls_random_init,
                                                            Algorithm::bals_rls, Algorithm::gamp,
                                                            Algorithm::ls_orthogonal};

inline std::string to_string(FigureId f) {
  switch (f) {
    case FigureId::snr_sweep: return "snr_sweep";
    case FigureId::convergence: return "convergence";
    case FigureId::runtime: return "runtime";
    case FigureId::pilot_sweep: return "pilot_sweep";
    case FigureId::custom: return "custom";
  }
  return "custom";
}

inline FigureId figure_id_from_string(const std::string& s) {
  if (s == "snr_sweep") return FigureId::snr_sweep;
  if (s == "convergence") return FigureId::convergence;
  if (s == "runtime") return FigureId::runtime;
  if (s == "pilot_sweep") return FigureId::pilot_sweep;
  if (s == "custom") return FigureId::custom;
  throw std::invalid_argument("unknown figure_id '" + s + "'");
}

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::bals_per_slot: return "bals_per_slot";
    case Algorithm::rls_random_init: return "rls_random_init";
    case Algorithm::bals_rls: return "bals_rls";
    case Algorithm::gamp: return "gamp";
    case Algorithm::ls_orthogonal: return "ls_orthogonal";
  }
  return "";
}

inline Algorithm algorithm_from_string(const std::string& s) {
  for (auto a : kAllAlgorithms)
    if (to_string(a) == s) return a;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

struct SweepAxis {
  std::string name;
  std::vector<double> values;
};

struct ExperimentSpec {
  FigureId figure_id = FigureId::custom;
  SystemConfig base;
  std::vector<SweepAxis> sweep;
  Index n_monte_carlo = 1;
  std::set<Algorithm> algorithms;
  std::optional<Index> total_slots;      // defaults to base.n_slots
  std::vector<Index> eval_slots;         // empty: every slot
  bool sweep_zip = false;                // axes advance together instead of forming a grid
  bool noiseless = false;                // ignore snr_db and synthesize W = 0
  bool record_timing = false;            // runtime_ms is wall-clock, so off keeps the CSV reproducible
  FUpdate tracker_update = FUpdate::structured;
  BalsOptions bals;
  std::optional<GampOptions> gamp;      // defaults from the scenario when unset
};

struct ExperimentRecord {
  FigureId figure_id = FigureId::custom;
  Index point_index = 0;  // position in the sweep grid, used for ordering
  Index run_index = 0;
  Index slot = 0;
  Algorithm algorithm = Algorithm::bals_per_slot;
  std::string param_name;
  std::string param_value;
  std::optional<double> nmse_gz_db;
  std::optional<double> nmse_h_db;
  std::optional<double> runtime_ms;
  std::uint64_t seed = 0;
  bool diverged = false;
};

/// ||A_hat - A||_F^2 / ||A||_F^2 for one realization.
inline double nmse(const ComplexMatrix& estimate, const ComplexMatrix& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw std::invalid_argument("nmse: shape mismatch");
  const double ref = truth.squaredNorm();
  if (!(ref > 0.0)) throw std::invalid_argument("nmse: zero reference");
  return (estimate - truth).squaredNorm() / ref;
}

inline double to_db(double linear) { return 10.0 * std::log10(linear); }
inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

inline const std::vector<std::string>& system_config_fields() {
  static const std::vector<std::string> names = {"n_rx",       "n_ris",   "n_users",    "pilot_len",
                                                 "n_profiles", "n_slots", "snr_db",     "forgetting",
                                                 "n_paths_g",  "n_paths_user", "rng_seed"};
  return names;
}

/// Sets one SystemConfig field by name. n_paths_user takes a scalar applied to every user.
inline void apply_param(SystemConfig& cfg, const std::string& name, double value) {
  auto count = [&](const char* what) {
    if (value < 1 || value != std::floor(value))
      throw std::invalid_argument(std::string("sweep value for ") + what + " must be a positive integer");
    return static_cast<Index>(value);
  };
  if (name == "n_rx") cfg.n_rx = count("n_rx");
  else if (name == "n_ris") cfg.n_ris = count("n_ris");
  else if (name == "n_users") {
    cfg.n_users = count("n_users");
    cfg.broadcast_user_paths();
  } else if (name == "pilot_len") cfg.pilot_len = count("pilot_len");
  else if (name == "n_profiles") cfg.n_profiles = count("n_profiles");
  else if (name == "n_slots") cfg.n_slots = count("n_slots");
  else if (name == "snr_db") cfg.snr_db = value;
  else if (name == "forgetting") cfg.forgetting = value;
  else if (name == "n_paths_g") cfg.n_paths_g = count("n_paths_g");
  else if (name == "n_paths_user") cfg.n_paths_user.assign(static_cast<std::size_t>(cfg.n_users), count("n_paths_user"));
  else if (name == "rng_seed") cfg.rng_seed = static_cast<std::uint64_t>(value);
  else throw std::invalid_argument("sweep parameter '" + name + "' is not a SystemConfig field");
}

inline std::string format_number(double v) {
  char buf[64];
  if (v == std::floor(v) && std::abs(v) < 1e15) std::snprintf(buf, sizeof buf, "%.0f", v);
  else std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct SweepPoint {
  Index index = 0;
  std::vector<double> values;  // one per axis
  std::string names;
  std::string labels;
};

inline std::vector<SweepPoint> sweep_points(const ExperimentSpec& spec) {
  if (spec.sweep_zip && !spec.sweep.empty()) {
    const std::size_t n = spec.sweep.front().values.size();
    std::vector<SweepPoint> out(n);
    for (const auto& axis : spec.sweep) {
      if (axis.values.size() != n) throw std::invalid_argument("zipped sweep axes must have equal length");
      for (std::size_t i = 0; i < n; ++i) {
        out[i].values.push_back(axis.values[i]);
        out[i].names += (out[i].names.empty() ? "" : ";") + axis.name;
        out[i].labels += (out[i].labels.empty() ? "" : ";") + format_number(axis.values[i]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) out[i].index = static_cast<Index>(i);
    if (n == 0) throw std::invalid_argument("sweep axis '" + spec.sweep.front().name + "' has no values");
    return out;
  }
  std::vector<SweepPoint> out{SweepPoint{}};
  for (const auto& axis : spec.sweep) {
    if (axis.values.empty()) throw std::invalid_argument("sweep axis '" + axis.name + "' has no values");
    std::vector<SweepPoint> next;
    for (const auto& p : out) {
      for (double v : axis.values) {
        SweepPoint q = p;
        q.values.push_back(v);
        q.names += (q.names.empty() ? "" : ";") + axis.name;
        q.labels += (q.labels.empty() ? "" : ";") + format_number(v);
        next.push_back(std::move(q));
      }
    }
    out = std::move(next);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].index = static_cast<Index>(i);
  return out;
}

inline SystemConfig config_for_point(const ExperimentSpec& spec, const SweepPoint& p) {
  SystemConfig cfg = spec.base;
  for (std::size_t a = 0; a < spec.sweep.size(); ++a) apply_param(cfg, spec.sweep[a].name, p.values[a]);
  cfg.validate();
  return cfg;
}

inline void validate_spec(const ExperimentSpec& spec) {
  if (spec.n_monte_carlo < 1) throw std::invalid_argument("ExperimentSpec: n_monte_carlo must be >= 1");
  if (spec.algorithms.empty()) throw std::invalid_argument("ExperimentSpec: no algorithms selected");
  const auto& fields = system_config_fields();
  for (const auto& axis : spec.sweep) {
    if (std::find(fields.begin(), fields.end(), axis.name) == fields.end())
      throw std::invalid_argument("sweep parameter '" + axis.name + "' is not a SystemConfig field");
  }
  if (spec.total_slots && *spec.total_slots < 1) throw std::invalid_argument("ExperimentSpec: total_slots must be >= 1");
  spec.bals.validate();
  for (const auto& p : sweep_points(spec)) config_for_point(spec, p);
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// State of one tracker across slots of a run.
struct TrackRun {
  std::optional<TrackerState> state;
  bool failed = false;
};

/// A composite estimate (G_hat, Z_hat) for one slot.
struct CompositeEstimate {
  ComplexMatrix g;
  ComplexMatrix z;
};

}  // namespace detail

/// Records for one Monte-Carlo run at one sweep point. Deterministic in
/// (spec, point, run_index).
inline std::vector<ExperimentRecord> run_single(const ExperimentSpec& spec, const SweepPoint& point, Index run_index) {
  using detail::Clock;
  const SystemConfig cfg = config_for_point(spec, point);
  const auto seed = cfg.rng_seed;
  const auto run = static_cast<std::uint64_t>(run_index);
  const auto pidx = static_cast<std::uint64_t>(point.index);

  const PhaseProfileMatrix phi = gen_phase_profiles(cfg);
  const PilotMatrix x = gen_pilots(cfg);
  ChannelProcess channels(cfg, make_rng({seed, run, 1}), make_rng({seed, run, 2}));
  Rng noise_rng = make_rng({seed, run, 3, pidx});
  Rng alg_rng = make_rng({seed, run, 4, pidx});

  const Index total = spec.total_slots.value_or(cfg.n_slots);
  const auto has = [&](Algorithm a) { return spec.algorithms.count(a) > 0; };
  const bool want_recovery = has(Algorithm::gamp) || has(Algorithm::ls_orthogonal);
  const GampOptions gamp_opts = spec.gamp.value_or(default_gamp_options(cfg));

  TrackerOptions track_opts;
  track_opts.update = spec.tracker_update;
  track_opts.cache_pinv = false;

  detail::TrackRun bals_rls;
  detail::TrackRun rls_random;

  std::vector<ExperimentRecord> out;
  auto emit = [&](Index slot, Algorithm alg) -> ExperimentRecord& {
    ExperimentRecord r;
    r.figure_id = spec.figure_id;
    r.point_index = point.index;
    r.run_index = run_index;
    r.slot = slot;
    r.algorithm = alg;
    r.param_name = point.names;
    r.param_value = point.labels;
    r.seed = seed;
    out.push_back(std::move(r));
    return out.back();
  };
  auto finish = [&](ExperimentRecord& r, double nmse_lin, double ms) {
    if (std::isfinite(nmse_lin) && nmse_lin > 0.0) r.nmse_gz_db = to_db(nmse_lin);
    else if (nmse_lin == 0.0) r.nmse_gz_db = -400.0;  // exact recovery, below any float noise floor
    else r.diverged = true;
    if (spec.record_timing) r.runtime_ms = ms;
  };

  for (Index slot = 1; slot <= total; ++slot) {
    const ChannelRealization chan = channels.next();
    const bool period_start = channels.period_start();
    const double noise_var = spec.noiseless ? 0.0 : noise_var_for_snr(chan, x, phi, cfg.snr_db);
    const SlotTensor tensor = synthesize_slot(chan, x, phi, noise_var, noise_rng);
    const ComplexMatrix z_true = ris_signal(chan.h, x);
    const ComplexMatrix truth = chan.g * z_true;
    const bool eval = spec.eval_slots.empty() ||
                      std::find(spec.eval_slots.begin(), spec.eval_slots.end(), slot) != spec.eval_slots.end();

    std::optional<detail::CompositeEstimate> for_recovery;

    // per-slot BALS from scratch
    std::optional<detail::CompositeEstimate> per_slot;
    if (eval && (has(Algorithm::bals_per_slot) || (want_recovery && !has(Algorithm::bals_rls)))) {
      const auto t0 = Clock::now();
      try {
        FactorEstimate est = bals(tensor, phi, spec.bals, alg_rng);
        const double ms = detail::elapsed_ms(t0);
        per_slot = detail::CompositeEstimate{std::move(est.g_hat), std::move(est.z_hat)};
        if (has(Algorithm::bals_per_slot))
          finish(emit(slot, Algorithm::bals_per_slot), nmse(per_slot->g * per_slot->z, truth), ms);
      } catch (const std::runtime_error&) {
        if (has(Algorithm::bals_per_slot)) emit(slot, Algorithm::bals_per_slot).diverged = true;
      }
    }

    // BALS at the start of each G period, recursive tracking afterwards
    if (has(Algorithm::bals_rls)) {
      const auto t0 = Clock::now();
      std::optional<detail::CompositeEstimate> current;
      try {
        if (period_start) {
          FactorEstimate est = bals(tensor, phi, spec.bals, alg_rng);
          TrackerOptions o = track_opts;
          o.period_slots = cfg.n_slots;
          bals_rls.state = tracker_init(est.g_hat, est.z_hat, phi, cfg.forgetting, o);
          bals_rls.failed = false;
          current = detail::CompositeEstimate{std::move(est.g_hat), std::move(est.z_hat)};
        } else if (bals_rls.state && !bals_rls.failed) {
          ComplexMatrix g_used = bals_rls.state->g_hat;
          ComplexMatrix z = track_recursive(*bals_rls.state, tensor);
          current = detail::CompositeEstimate{std::move(g_used), std::move(z)};
        }
      } catch (const std::runtime_error&) {
        bals_rls.failed = true;
      }
      const double ms = detail::elapsed_ms(t0);
      if (eval) {
        auto& r = emit(slot, Algorithm::bals_rls);
        if (current) finish(r, nmse(current->g * current->z, truth), ms);
        else r.diverged = true;
      }
      if (current) for_recovery = std::move(current);
    }

    // tracking from a random starting point, never re-initialized
    if (has(Algorithm::rls_random_init)) {
      if (slot == 1) rls_random.state = tracker_init_random(cfg.n_rx, cfg.pilot_len, phi, cfg.forgetting, alg_rng, track_opts);
      const auto t0 = Clock::now();
      std::optional<detail::CompositeEstimate> current;
      if (!rls_random.failed) {
        try {
          ComplexMatrix g_used = rls_random.state->g_hat;
          ComplexMatrix z = track_recursive(*rls_random.state, tensor);
          current = detail::CompositeEstimate{std::move(g_used), std::move(z)};
        } catch (const std::runtime_error&) {
          rls_random.failed = true;
        }
      }
      const double ms = detail::elapsed_ms(t0);
      if (eval) {
        auto& r = emit(slot, Algorithm::rls_random_init);
        if (current) finish(r, nmse(current->g * current->z, truth), ms);
        else r.diverged = true;
      }
    }

    if (!for_recovery && per_slot) for_recovery = per_slot;

    if (want_recovery && eval) {
      const double gz_lin = for_recovery ? nmse(for_recovery->g * for_recovery->z, truth) : 0.0;
      std::optional<ComplexMatrix> z_norm;
      if (for_recovery) {
        try {
          z_norm = resolve_scaling(for_recovery->g, for_recovery->z, chan.g).z;
        } catch (const std::runtime_error&) {
        }
      }
      auto recovery_row = [&](Algorithm alg, auto&& solve) {
        auto& r = emit(slot, alg);
        if (!z_norm) {
          r.diverged = true;
          return;
        }
        const auto t0 = Clock::now();
        try {
          const ComplexMatrix h_hat = solve(*z_norm);
          const double ms = detail::elapsed_ms(t0);
          finish(r, gz_lin, ms);
          const double e = nmse(h_hat, chan.h);
          if (std::isfinite(e) && e > 0.0) r.nmse_h_db = to_db(e);
          else r.diverged = true;
        } catch (const std::runtime_error&) {
          r.diverged = true;
        }
      };
      if (has(Algorithm::gamp))
        recovery_row(Algorithm::gamp, [&](const ComplexMatrix& z) { return recover_h(z, x, gamp_opts); });
      if (has(Algorithm::ls_orthogonal) && cfg.pilot_len >= cfg.n_users)
        recovery_row(Algorithm::ls_orthogonal, [&](const ComplexMatrix& z) { return ls_orthogonal_baseline(z, x); });
    }
  }
  for (auto& r : out) {
    if (r.diverged) {
      r.nmse_gz_db.reset();
      r.nmse_h_db.reset();
    }
  }
  return out;
}

inline bool record_order(const ExperimentRecord& a, const ExperimentRecord& b) {
  return std::tie(a.point_index, a.run_index, a.slot, a.algorithm) <
         std::tie(b.point_index, b.run_index, b.slot, b.algorithm);
}

/// Runs every (sweep point, Monte-Carlo run) pair, `jobs` at a time. The
/// output is sorted, so it does not depend on scheduling.
inline std::vector<ExperimentRecord> run_experiment(const ExperimentSpec& spec, unsigned jobs = 1) {
  validate_spec(spec);
  const auto points = sweep_points(spec);
  struct Task {
    const SweepPoint* point;
    Index run;
  };
  std::vector<Task> tasks;
  for (const auto& p : points)
    for (Index r = 0; r < spec.n_monte_carlo; ++r) tasks.push_back({&p, r});

  std::vector<std::vector<ExperimentRecord>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        results[i] = run_single(spec, *tasks[i].point, tasks[i].run);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(tasks.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<ExperimentRecord> all;
  for (auto& r : results) all.insert(all.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  std::stable_sort(all.begin(), all.end(), record_order);
  return all;
}

// ---------------------------------------------------------------------------
// CSV

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {"figure_id", "run_index",  "slot",       "algorithm",
                                                "param_name", "param_value", "nmse_gz_db", "nmse_h_db",
                                                "runtime_ms", "seed",       "diverged"};
  return cols;
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_row(const ExperimentRecord& r) {
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  const std::vector<std::string> fields = {to_string(r.figure_id),
                                           std::to_string(r.run_index),
                                           std::to_string(r.slot),
                                           to_string(r.algorithm),
                                           r.param_name,
                                           r.param_value,
                                           r.diverged ? std::string() : opt(r.nmse_gz_db),
                                           r.diverged ? std::string() : opt(r.nmse_h_db),
                                           opt(r.runtime_ms),
                                           std::to_string(r.seed),
                                           r.diverged ? "true" : "false"};
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_escape(fields[i]);
  }
  return line;
}

inline void write_csv(const std::vector<ExperimentRecord>& records, std::ostream& os) {
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\r\n";
  for (const auto& r : records) os << csv_row(r) << "\r\n";
}

inline void write_csv(const std::vector<ExperimentRecord>& records, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("write_csv: cannot open '" + path + "' for writing");
  write_csv(records, f);
  f.flush();
  if (!f) throw std::ios_base::failure("write_csv: write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Summaries

struct SeriesKey {
  std::string param_value;
  Index slot;
  Algorithm algorithm;
  auto operator<=>(const SeriesKey&) const = default;
};

struct SeriesStats {
  double mean_nmse_gz = 0.0;  // linear, averaged over runs
  double mean_nmse_h = 0.0;
  double median_nmse_h = 0.0;
  double median_runtime_ms = 0.0;
  Index count = 0;
  Index diverged = 0;

  double mean_gz_db() const { return to_db(mean_nmse_gz); }
  double mean_h_db() const { return to_db(mean_nmse_h); }
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Expectation over Monte-Carlo runs, taken on linear NMSE values.
inline std::map<SeriesKey, SeriesStats> summarize(const std::vector<ExperimentRecord>& records) {
  std::map<SeriesKey, std::vector<const ExperimentRecord*>> groups;
  for (const auto& r : records) groups[{r.param_value, r.slot, r.algorithm}].push_back(&r);
  std::map<SeriesKey, SeriesStats> out;
  for (const auto& [key, rows] : groups) {
    SeriesStats s;
    std::vector<double> gz, h, rt;
    for (const auto* r : rows) {
      if (r->diverged) {
        ++s.diverged;
        continue;
      }
      if (r->nmse_gz_db) gz.push_back(from_db(*r->nmse_gz_db));
      if (r->nmse_h_db) h.push_back(from_db(*r->nmse_h_db));
      if (r->runtime_ms) rt.push_back(*r->runtime_ms);
    }
    auto mean = [](const std::vector<double>& v) {
      if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
      double acc = 0.0;
      for (double x : v) acc += x;
      return acc / static_cast<double>(v.size());
    };
    s.count = static_cast<Index>(rows.size());
    s.mean_nmse_gz = mean(gz);
    s.mean_nmse_h = mean(h);
    s.median_nmse_h = median(h);
    s.median_runtime_ms = median(rt);
    out[key] = s;
  }
  return out;
}

}  // namespace ristrack
