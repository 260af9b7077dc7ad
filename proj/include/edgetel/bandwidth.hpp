#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "edgetel/telemetry.hpp"

namespace edgetel {

// ---------------------------------------------------------------------------
// Synthetic cellular traces
// ---------------------------------------------------------------------------

struct TrueCoefficients {
  double b0 = 10.0;
  double b_rsrp = 2.0;
  double b_rsrq = 1.0;
  double b_rssi = 0.5;
  double b_hist = 0.3;
};

// One stationary stretch of the trace. Features are standardized with the
// regime's own means and deviations before entering the linear form, so
// `z(x) = (x - mean) / std` (0 when std is 0).
struct NetRegime {
  std::uint64_t duration_ticks = 100;
  double rsrp_mean_dbm = -90.0;
  double rsrp_std = 4.0;
  double rsrq_mean_db = -10.0;
  double rsrq_std = 2.0;
  double rssi_offset_db = 25.0;  // rssi = rsrp + offset + N(0, rssi_std)
  double rssi_std = 1.0;
  TrueCoefficients true_coeffs;
  double noise_std_mbps = 1.0;

  double rssi_mean_dbm() const { return rsrp_mean_dbm + rssi_offset_db; }
  double rssi_total_std() const;
};

struct NetTraceConfig {
  std::uint64_t seed = 1;
  double ewma_alpha = 0.3;  // smoothing of the "historic throughput" term
  std::vector<NetRegime> regimes{NetRegime{}};
};

void validate(const NetTraceConfig& cfg);
NetTraceConfig net_trace_config_from_json(const nlohmann::json& j);

struct TracePoint {
  NetworkMetrics net;        // dl_mbps is the observed, noisy throughput
  double true_dl_mbps = 0.0;  // noise-free linear form, clamped >= 0
  std::size_t regime = 0;
};

// Stateful generator; after the last regime ends the last one continues.
class NetTrace {
 public:
  explicit NetTrace(NetTraceConfig cfg);
  TracePoint next();
  std::uint64_t tick() const { return tick_; }
  const NetTraceConfig& config() const { return cfg_; }

 private:
  std::size_t regime_at(std::uint64_t tick) const;

  NetTraceConfig cfg_;
  std::mt19937_64 rng_;
  std::uint64_t tick_ = 0;
  double ewma_ = 0.0;
};

std::vector<TracePoint> gen_trace(const NetTraceConfig& cfg, std::size_t n_ticks);

// ---------------------------------------------------------------------------
// Bandwidth predictor
// ---------------------------------------------------------------------------

struct BandwidthFeatures {
  double rsrp_dbm = 0.0;
  double rsrq_db = 0.0;
  double rssi_dbm = 0.0;

  static BandwidthFeatures from(const NetworkMetrics& m) {
    return {m.rsrp_dbm, m.rsrq_db, m.rssi_dbm};
  }
};

struct PredictorConfig {
  std::size_t window = 30;
  double ridge_lambda = 1e-3;
  double ewma_alpha = 0.3;
  std::size_t min_samples = 5;  // below this, predictions fall back to the EWMA
};

void validate(const PredictorConfig& cfg);

// Coefficient order: intercept, rsrp, rsrq, rssi, historic throughput.
using Coefficients = std::array<double, 5>;

// Ridge regression over a sliding window. Every non-constant column,
// including the historic-throughput term, is standardized with the window's
// mean and population deviation, so the fit is invariant to the units of the
// observed throughput.
class BandwidthPredictor {
 public:
  explicit BandwidthPredictor(PredictorConfig cfg = {});

  // Throws PreconditionError on non-finite input, FitError on a singular
  // system (only possible with ridge_lambda == 0).
  void update(const BandwidthFeatures& f, double observed_dl_mbps);
  double predict(const BandwidthFeatures& f) const;

  bool is_warm() const { return window_.size() >= cfg_.min_samples; }
  std::size_t window_size() const { return window_.size(); }
  double ewma_throughput() const { return ewma_; }
  const PredictorConfig& config() const { return cfg_; }

  // In the standardized basis used internally.
  const Coefficients& coefficients() const { return coef_; }
  // In raw units: y = a0 + a1*rsrp + a2*rsrq + a3*rssi + a4*ewma.
  Coefficients raw_coefficients() const;
  // Re-expressed for features standardized with the given means and
  // deviations (rsrp, rsrq, rssi); the historic term stays raw.
  Coefficients coefficients_in_basis(const std::array<double, 3>& means,
                                     const std::array<double, 3>& stds) const;

 private:
  struct Row {
    std::array<double, 4> x;  // rsrp, rsrq, rssi, ewma before this observation
    double y;
  };
  void refit();

  PredictorConfig cfg_;
  std::deque<Row> window_;
  double ewma_ = 0.0;
  Coefficients coef_{};
  std::array<double, 4> mean_{};
  std::array<double, 4> std_{};
  bool fitted_ = false;
};

// Solves the symmetric positive definite system A x = b by Cholesky. Throws
// FitError if A is not numerically positive definite.
std::array<double, 5> solve_spd5(std::array<std::array<double, 5>, 5> a, std::array<double, 5> b);

// ---------------------------------------------------------------------------
// Placement
// ---------------------------------------------------------------------------

enum class Placement { Edge, Device };

const char* to_string(Placement p);
Placement placement_from_string(std::string_view s);

// Edge -> Device when predicted < required; Device -> Edge only once
// predicted >= required * reentry_margin.
Placement decide_placement(double predicted_dl_mbps, double required_mbps, Placement current,
                           double reentry_margin);

}  // namespace edgetel
