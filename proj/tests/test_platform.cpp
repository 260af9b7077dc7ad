#include <gtest/gtest.h>

#include <cmath>

#include "edgetel/error.hpp"
#include "edgetel/platform.hpp"
#include "edgetel/sha256.hpp"

using namespace edgetel;

namespace {

PlatformConfig quiet() {
  PlatformConfig c;
  c.noise_amplitude = 0.0;
  return c;
}

TelemetrySnapshot sample_once(Platform& p) {
  p.advance(1000);
  return p.sample_metrics(NetworkMetrics{});
}

// Independent statement of the latency and power model.
double oracle_latency(double base, double overhead, double ratio) {
  return overhead + (base - overhead) / ratio;
}
double oracle_power(double ratio, double util) { return 8.0 + 14.98 * ratio * ratio * ratio * util; }

}  // namespace

TEST(Calibration, Yolov3AtTopLevel) {
  Platform p(PlatformConfig{}, builtin_profile("yolov3"), {"sim0"});
  const auto s = sample_once(p);
  EXPECT_NEAR(s.app.ee_latency_ms, 29.4, 29.4 * 0.02);
  EXPECT_NEAR(s.energy.fps_per_watt, 1.48, 1.48 * 0.02);
  EXPECT_NEAR(s.energy.power_w, 22.98, 1e-9);
}

TEST(Calibration, SsdAtTopLevel) {
  Platform p(PlatformConfig{}, builtin_profile("ssd_resnet50_fpn"), {"sim0"});
  const auto s = sample_once(p);
  EXPECT_NEAR(s.app.ee_latency_ms, 200.0, 200.0 * 0.02);
  EXPECT_NEAR(s.energy.fps_per_watt, 0.37, 0.37 * 0.02);
}

TEST(Calibration, WorkloadsAndEfficiency) {
  EXPECT_DOUBLE_EQ(builtin_profile("yolov3").workload_gops, 65.63);
  EXPECT_DOUBLE_EQ(builtin_profile("ssd_resnet50_fpn").workload_gops, 178.4);
  Platform p(quiet(), builtin_profile("yolov3"), {"sim0"});
  const auto s = sample_once(p);
  EXPECT_DOUBLE_EQ(s.model.model_efficiency, s.app.fps * 65.63 / 4460.0);
}

TEST(Platform, StartsAtTopLevel) {
  Platform p(quiet(), builtin_profile("yolov3"), {"sim0"});
  EXPECT_EQ(p.level().index, 5);
  EXPECT_DOUBLE_EQ(p.level().ratio, 1.0);
}

TEST(Platform, LatencyAndPowerFollowTheModelAtEveryLevel) {
  for (const auto& prof : builtin_profiles()) {
    Platform p(quiet(), prof, {"sim0"});
    for (int i = 0; i < p.level_count(); ++i) {
      p.set_frequency_level(i);
      const double r = p.config().level_ratios[i];
      EXPECT_NEAR(p.inference_latency_ms(), oracle_latency(prof.base_latency_ms, 4.4, r), 1e-12);
      EXPECT_NEAR(p.power_w(), oracle_power(r, prof.accel_utilization), 1e-12);
    }
  }
}

TEST(Platform, LowerLevelMeansLowerFpsAndPower) {
  Platform p(quiet(), builtin_profile("yolov3"), {"sim0"});
  double fps = p.fps();
  double power = p.power_w();
  for (int i = p.level_count() - 2; i >= 0; --i) {
    p.set_frequency_level(i);
    EXPECT_LT(p.fps(), fps);
    EXPECT_LT(p.power_w(), power);
    fps = p.fps();
    power = p.power_w();
  }
}

TEST(Platform, OneStepDownBringsYoloUnderThirtyFps) {
  Platform p(quiet(), builtin_profile("yolov3"), {"sim0"});
  EXPECT_GT(p.fps(), 30.0);
  p.set_frequency_level(4);
  EXPECT_NEAR(p.fps(), 1000.0 / (4.4 + 25.0 / 0.85), 1e-12);
  EXPECT_LT(p.fps(), 30.0);
}

TEST(Platform, SetFrequencyLevel) {
  Platform p(quiet(), builtin_profile("yolov3"), {"sim0"});
  EXPECT_FALSE(p.set_frequency_level(5));
  EXPECT_TRUE(p.set_frequency_level(0));
  EXPECT_THROW(p.set_frequency_level(-1), RangeError);
  EXPECT_THROW(p.set_frequency_level(6), RangeError);
  EXPECT_EQ(p.level().index, 0);
}

TEST(Platform, SampleBeforeAdvanceIsPreconditionError) {
  Platform p(quiet(), builtin_profile("yolov3"), {"sim0"});
  EXPECT_THROW(p.sample_metrics({}), PreconditionError);
  EXPECT_THROW(p.advance(0), PreconditionError);
}

TEST(Platform, SequenceAndDeviceClock) {
  PlatformConfig c = quiet();
  c.epoch_ms = 5000;
  Platform p(c, builtin_profile("yolov3"), {"devA"});
  for (std::uint64_t i = 0; i < 4; ++i) {
    const auto s = sample_once(p);
    EXPECT_EQ(s.seq, i);
    EXPECT_EQ(s.device_time_ms, 5000 + 1000 * (i + 1));
    EXPECT_EQ(s.device.device_id, "devA");
    EXPECT_NO_THROW(validate(s));
  }
}

TEST(Platform, ThermalRelaxationClosedForm) {
  Platform p(quiet(), builtin_profile("yolov3"), {"sim0"});
  const double tss = 25.0 + 1.5 * 22.98;
  p.advance(10000);
  EXPECT_NEAR(p.temp_c(), tss + (25.0 - tss) * std::exp(-10.0 / 30.0), 1e-9);
  // Splitting the interval gives the same temperature.
  Platform q(quiet(), builtin_profile("yolov3"), {"sim0"});
  for (int i = 0; i < 10; ++i) q.advance(1000);
  EXPECT_NEAR(q.temp_c(), p.temp_c(), 1e-9);
  // Long run settles at the steady state.
  for (int i = 0; i < 100; ++i) p.advance(10000);
  EXPECT_NEAR(p.temp_c(), tss, 1e-6);
}

TEST(Platform, TemperatureFallsAfterStepDown) {
  Platform p(quiet(), builtin_profile("yolov3"), {"sim0"});
  for (int i = 0; i < 200; ++i) p.advance(1000);
  const double hot = p.temp_c();
  p.set_frequency_level(0);
  p.advance(1000);
  EXPECT_LT(p.temp_c(), hot);
}

TEST(Platform, NoiseStaysWithinAmplitude) {
  Platform p(PlatformConfig{}, builtin_profile("ssd_resnet50_fpn"), {"sim0"});
  for (int i = 0; i < 500; ++i) {
    const auto s = sample_once(p);
    EXPECT_GE(s.model.accel_utilization, 0.368 * 0.98 - 1e-15);
    EXPECT_LE(s.model.accel_utilization, 0.368 * 1.02 + 1e-15);
    EXPECT_NEAR(s.energy.power_w, 8.0 + 14.98 * 0.368, 1e-9);  // power uses the nominal value
  }
}

TEST(Platform, SameSeedSameTrace) {
  Platform a(PlatformConfig{}, builtin_profile("yolov3"), {"sim0"});
  Platform b(PlatformConfig{}, builtin_profile("yolov3"), {"sim0"});
  PlatformConfig other;
  other.noise_seed = 99;
  Platform c(other, builtin_profile("yolov3"), {"sim0"});
  bool differs = false;
  for (int i = 0; i < 20; ++i) {
    const auto sa = sample_once(a);
    EXPECT_EQ(encode_snapshot(sa), encode_snapshot(sample_once(b)));
    differs = differs || encode_snapshot(sa) != encode_snapshot(sample_once(c));
  }
  EXPECT_TRUE(differs);
}

TEST(Platform, EncodedStateTracksChanges) {
  Platform p(PlatformConfig{}, builtin_profile("yolov3"), {"sim0"});
  const std::string s0 = p.encode_state();
  EXPECT_EQ(p.encode_state(), s0);
  Platform copy = p;
  EXPECT_EQ(copy.encode_state(), s0);
  p.advance(1000);
  EXPECT_NE(p.encode_state(), s0);
}

TEST(Platform, LoadModelSwitchesLatency) {
  Platform p(quiet(), builtin_profile("yolov3"), {"sim0"});
  p.load_model(builtin_profile("ssd_resnet50_fpn"));
  EXPECT_NEAR(sample_once(p).app.ee_latency_ms, 200.0, 1e-12);
  ModelProfile bad = builtin_profile("yolov3");
  bad.model_id = "yolo@edge";
  EXPECT_THROW(p.load_model(bad), ValidationError);
}

TEST(PlatformConfig, RejectsInvalid) {
  PlatformConfig c;
  c.level_ratios = {0.5, 0.4, 1.0};
  EXPECT_THROW(validate(c), ConfigError);
  c = PlatformConfig{};
  c.level_ratios = {0.5, 0.9};
  EXPECT_THROW(validate(c), ConfigError);
  c = PlatformConfig{};
  c.peak_gops_per_s = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = PlatformConfig{};
  c.noise_amplitude = -0.1;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(PlatformConfig, JsonRoundTrip) {
  PlatformConfig c;
  c.peak_gops_per_s = 5000;
  c.level_ratios = {0.5, 1.0};
  c.noise_seed = 3;
  const PlatformConfig back = platform_config_from_json(to_json(c));
  EXPECT_EQ(back.peak_gops_per_s, 5000);
  EXPECT_EQ(back.level_ratios, c.level_ratios);
  EXPECT_EQ(back.noise_seed, 3u);
  EXPECT_THROW(platform_config_from_json(nlohmann::json{{"bogus", 1}}), SchemaError);
}

TEST(ModelProfile, JsonDigestDefaultsToSyntheticBlob) {
  const ModelProfile p = model_profile_from_json(
      nlohmann::json{{"model_id", "tiny"}, {"workload_gops", 1.0}, {"base_latency_ms", 10.0}});
  EXPECT_EQ(p.artifact_digest, sha256_hex(synthetic_model_blob("tiny", p.artifact_size_bytes)));
  EXPECT_EQ(model_profile_from_json(to_json(p)), p);
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_TRUE(is_sha256_hex(sha256_hex("x")));
  EXPECT_FALSE(is_sha256_hex("ABC"));
  EXPECT_FALSE(is_sha256_hex(std::string(64, 'G')));
}

TEST(ModelBlob, SyntheticBlobIsStableAndDistinct) {
  const std::string a = synthetic_model_blob("yolov3", 65536);
  EXPECT_EQ(a.size(), 65536u);
  EXPECT_EQ(a, synthetic_model_blob("yolov3", 65536));
  EXPECT_NE(a, synthetic_model_blob("ssd_resnet50_fpn", 65536));
  EXPECT_EQ(builtin_profile("yolov3").artifact_digest, sha256_hex(a));
  EXPECT_THROW(builtin_profile("nope"), ConfigError);
}
