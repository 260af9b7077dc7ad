#include "edgetel/bandwidth.hpp"

#include <algorithm>
#include <cmath>

#include "edgetel/error.hpp"
#include "json_util.hpp"

namespace edgetel {

using detail::json;

double NetRegime::rssi_total_std() const {
  return std::sqrt(rsrp_std * rsrp_std + rssi_std * rssi_std);
}

void validate(const NetTraceConfig& cfg) {
  if (cfg.regimes.empty()) throw ConfigError("net_trace.regimes", "must not be empty");
  if (!(cfg.ewma_alpha > 0.0 && cfg.ewma_alpha <= 1.0)) {
    throw ConfigError("net_trace.ewma_alpha", "must be in (0, 1]");
  }
  for (std::size_t i = 0; i < cfg.regimes.size(); ++i) {
    const auto& r = cfg.regimes[i];
    const std::string p = "net_trace.regimes[" + std::to_string(i) + "]";
    if (r.duration_ticks == 0) throw ConfigError(p + ".duration_ticks", "must be positive");
    for (double s : {r.rsrp_std, r.rsrq_std, r.rssi_std, r.noise_std_mbps}) {
      if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError(p, "deviations must be >= 0");
    }
    for (double v : {r.rsrp_mean_dbm, r.rsrq_mean_db, r.rssi_offset_db, r.true_coeffs.b0,
                     r.true_coeffs.b_rsrp, r.true_coeffs.b_rsrq, r.true_coeffs.b_rssi,
                     r.true_coeffs.b_hist}) {
      if (!std::isfinite(v)) throw ConfigError(p, "values must be finite");
    }
  }
}

NetTraceConfig net_trace_config_from_json(const json& j) {
  using detail::value_or;
  detail::check_keys(j, "net_trace", {}, {"seed", "ewma_alpha", "regimes"});
  NetTraceConfig cfg;
  cfg.seed = value_or<std::uint64_t>(j, "net_trace", "seed", cfg.seed);
  cfg.ewma_alpha = value_or(j, "net_trace", "ewma_alpha", cfg.ewma_alpha);
  if (auto it = j.find("regimes"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("net_trace.regimes", "expected array");
    cfg.regimes.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& rj = (*it)[i];
      const std::string p = "net_trace.regimes[" + std::to_string(i) + "]";
      detail::check_keys(rj, p, {},
                         {"duration_ticks", "rsrp_mean_dbm", "rsrp_std", "rsrq_mean_db",
                          "rsrq_std", "rssi_offset_db", "rssi_std", "true_coeffs",
                          "noise_std_mbps"});
      NetRegime r;
      r.duration_ticks = value_or<std::uint64_t>(rj, p, "duration_ticks", r.duration_ticks);
      r.rsrp_mean_dbm = value_or(rj, p, "rsrp_mean_dbm", r.rsrp_mean_dbm);
      r.rsrp_std = value_or(rj, p, "rsrp_std", r.rsrp_std);
      r.rsrq_mean_db = value_or(rj, p, "rsrq_mean_db", r.rsrq_mean_db);
      r.rsrq_std = value_or(rj, p, "rsrq_std", r.rsrq_std);
      r.rssi_offset_db = value_or(rj, p, "rssi_offset_db", r.rssi_offset_db);
      r.rssi_std = value_or(rj, p, "rssi_std", r.rssi_std);
      r.noise_std_mbps = value_or(rj, p, "noise_std_mbps", r.noise_std_mbps);
      if (auto c = rj.find("true_coeffs"); c != rj.end()) {
        const std::string cp = p + ".true_coeffs";
        detail::check_keys(*c, cp, {}, {"b0", "b_rsrp", "b_rsrq", "b_rssi", "b_hist"});
        r.true_coeffs.b0 = value_or(*c, cp, "b0", r.true_coeffs.b0);
        r.true_coeffs.b_rsrp = value_or(*c, cp, "b_rsrp", r.true_coeffs.b_rsrp);
        r.true_coeffs.b_rsrq = value_or(*c, cp, "b_rsrq", r.true_coeffs.b_rsrq);
        r.true_coeffs.b_rssi = value_or(*c, cp, "b_rssi", r.true_coeffs.b_rssi);
        r.true_coeffs.b_hist = value_or(*c, cp, "b_hist", r.true_coeffs.b_hist);
      }
      cfg.regimes.push_back(r);
    }
  }
  validate(cfg);
  return cfg;
}

NetTrace::NetTrace(NetTraceConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) { validate(cfg_); }

std::size_t NetTrace::regime_at(std::uint64_t tick) const {
  std::uint64_t end = 0;
  for (std::size_t i = 0; i < cfg_.regimes.size(); ++i) {
    end += cfg_.regimes[i].duration_ticks;
    if (tick < end) return i;
  }
  return cfg_.regimes.size() - 1;
}

namespace {

double standardize(double x, double mean, double std) { return std > 0.0 ? (x - mean) / std : 0.0; }

}  // namespace

TracePoint NetTrace::next() {
  const std::size_t ri = regime_at(tick_);
  const NetRegime& r = cfg_.regimes[ri];
  std::normal_distribution<double> unit(0.0, 1.0);
  // Fixed draw order keeps traces reproducible whatever the parameters.
  const double n_rsrp = unit(rng_);
  const double n_rsrq = unit(rng_);
  const double n_rssi = unit(rng_);
  const double n_tput = unit(rng_);
  const double n_temp = unit(rng_);

  TracePoint p;
  p.regime = ri;
  p.net.rsrp_dbm = std::clamp(r.rsrp_mean_dbm + r.rsrp_std * n_rsrp, kRsrpMinDbm, kRsrpMaxDbm);
  p.net.rsrq_db = std::clamp(r.rsrq_mean_db + r.rsrq_std * n_rsrq, kRsrqMinDb, kRsrqMaxDb);
  p.net.rssi_dbm =
      std::clamp(p.net.rsrp_dbm + r.rssi_offset_db + r.rssi_std * n_rssi, kRssiMinDbm, kRssiMaxDbm);
  p.net.modem_temp_c = 38.0 + 0.5 * n_temp;

  const TrueCoefficients& c = r.true_coeffs;
  const double linear = c.b0 + c.b_rsrp * standardize(p.net.rsrp_dbm, r.rsrp_mean_dbm, r.rsrp_std) +
                        c.b_rsrq * standardize(p.net.rsrq_db, r.rsrq_mean_db, r.rsrq_std) +
                        c.b_rssi * standardize(p.net.rssi_dbm, r.rssi_mean_dbm(), r.rssi_total_std()) +
                        c.b_hist * ewma_;
  p.true_dl_mbps = std::max(0.0, linear);
  p.net.dl_mbps = std::max(0.0, linear + r.noise_std_mbps * n_tput);
  p.net.ul_mbps = 0.25 * p.net.dl_mbps;

  ewma_ = cfg_.ewma_alpha * p.net.dl_mbps + (1.0 - cfg_.ewma_alpha) * ewma_;
  ++tick_;
  return p;
}

std::vector<TracePoint> gen_trace(const NetTraceConfig& cfg, std::size_t n_ticks) {
  NetTrace trace(cfg);
  std::vector<TracePoint> out;
  out.reserve(n_ticks);
  for (std::size_t i = 0; i < n_ticks; ++i) out.push_back(trace.next());
  return out;
}

void validate(const PredictorConfig& cfg) {
  if (cfg.window == 0) throw ConfigError("bandwidth.window", "must be positive");
  if (!(cfg.ridge_lambda >= 0.0) || !std::isfinite(cfg.ridge_lambda)) {
    throw ConfigError("bandwidth.ridge_lambda", "must be non-negative");
  }
  if (!(cfg.ewma_alpha > 0.0 && cfg.ewma_alpha <= 1.0)) {
    throw ConfigError("bandwidth.ewma_alpha", "must be in (0, 1]");
  }
  if (cfg.min_samples == 0 || cfg.min_samples > cfg.window) {
    throw ConfigError("bandwidth.min_samples", "must be in [1, window]");
  }
}

BandwidthPredictor::BandwidthPredictor(PredictorConfig cfg) : cfg_(cfg) { validate(cfg_); }

void BandwidthPredictor::update(const BandwidthFeatures& f, double observed) {
  if (!std::isfinite(f.rsrp_dbm) || !std::isfinite(f.rsrq_db) || !std::isfinite(f.rssi_dbm) ||
      !std::isfinite(observed)) {
    throw PreconditionError("predictor update needs finite inputs");
  }
  window_.push_back(Row{{f.rsrp_dbm, f.rsrq_db, f.rssi_dbm, ewma_}, observed});
  if (window_.size() > cfg_.window) window_.pop_front();
  ewma_ = cfg_.ewma_alpha * observed + (1.0 - cfg_.ewma_alpha) * ewma_;
  if (is_warm()) refit();
}

void BandwidthPredictor::refit() {
  const double n = static_cast<double>(window_.size());
  for (std::size_t j = 0; j < 4; ++j) {
    double sum = 0.0;
    for (const Row& r : window_) sum += r.x[j];
    mean_[j] = sum / n;
    double ss = 0.0;
    for (const Row& r : window_) ss += (r.x[j] - mean_[j]) * (r.x[j] - mean_[j]);
    std_[j] = std::sqrt(ss / n);
    // Columns constant up to rounding carry no information.
    if (std_[j] <= 1e-12 * std::max(1.0, std::abs(mean_[j]))) std_[j] = 0.0;
  }
  std::array<std::array<double, 5>, 5> ata{};
  std::array<double, 5> aty{};
  for (const Row& r : window_) {
    std::array<double, 5> z{1.0};
    for (std::size_t j = 0; j < 4; ++j) z[j + 1] = standardize(r.x[j], mean_[j], std_[j]);
    for (std::size_t a = 0; a < 5; ++a) {
      aty[a] += z[a] * r.y;
      for (std::size_t b = 0; b < 5; ++b) ata[a][b] += z[a] * z[b];
    }
  }
  for (std::size_t a = 0; a < 5; ++a) ata[a][a] += cfg_.ridge_lambda;
  coef_ = solve_spd5(ata, aty);
  fitted_ = true;
}

double BandwidthPredictor::predict(const BandwidthFeatures& f) const {
  if (!is_warm() || !fitted_) return ewma_;
  const std::array<double, 4> x{f.rsrp_dbm, f.rsrq_db, f.rssi_dbm, ewma_};
  double y = coef_[0];
  for (std::size_t j = 0; j < 4; ++j) y += coef_[j + 1] * standardize(x[j], mean_[j], std_[j]);
  return std::max(0.0, y);
}

Coefficients BandwidthPredictor::raw_coefficients() const {
  Coefficients raw{};
  raw[0] = coef_[0];
  for (std::size_t j = 0; j < 4; ++j) {
    if (std_[j] == 0.0) continue;
    raw[j + 1] = coef_[j + 1] / std_[j];
    raw[0] -= coef_[j + 1] * mean_[j] / std_[j];
  }
  return raw;
}

Coefficients BandwidthPredictor::coefficients_in_basis(const std::array<double, 3>& means,
                                                       const std::array<double, 3>& stds) const {
  const Coefficients raw = raw_coefficients();
  Coefficients out{};
  out[0] = raw[0];
  for (std::size_t j = 0; j < 3; ++j) {
    out[j + 1] = raw[j + 1] * stds[j];
    out[0] += raw[j + 1] * means[j];
  }
  out[4] = raw[4];
  return out;
}

std::array<double, 5> solve_spd5(std::array<std::array<double, 5>, 5> a, std::array<double, 5> b) {
  constexpr std::size_t n = 5;
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += std::abs(a[i][i]);
  const double tiny = 1e-13 * std::max(trace, 1e-300);
  // In-place lower Cholesky factor.
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    if (!(d > tiny)) throw FitError("normal matrix is singular (rank-deficient window)");
    a[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      a[i][j] = s / a[j][j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i][k] * b[k];
    b[i] = s / a[i][i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k][i] * b[k];
    b[i] = s / a[i][i];
  }
  return b;
}

const char* to_string(Placement p) { return p == Placement::Edge ? "edge" : "device"; }

Placement placement_from_string(std::string_view s) {
  if (s == "edge" || s == "Edge") return Placement::Edge;
  if (s == "device" || s == "Device") return Placement::Device;
  throw ValidationError("placement", "expected edge or device, got '" + std::string(s) + "'");
}

Placement decide_placement(double predicted, double required, Placement current, double margin) {
  if (!(required > 0.0)) throw PreconditionError("decide_placement: required_mbps must be > 0");
  if (!(margin >= 1.0)) throw PreconditionError("decide_placement: reentry_margin must be >= 1");
  if (current == Placement::Edge && predicted < required) return Placement::Device;
  if (current == Placement::Device && predicted >= required * margin) return Placement::Edge;
  return current;
}

}  // namespace edgetel
