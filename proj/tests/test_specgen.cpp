#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sfm/specgen.hpp"

using namespace sfm;

namespace {

const FrequencyGrid& osa_grid() {
  static const FrequencyGrid g = build_grid(1550.004, 10.0, 501);
  return g;
}

LinkScenario scenario(int nch, double launch = 0.0, Modulation m = Modulation::QPSK) {
  LinkScenario s;
  s.n_channels = nch;
  s.launch_power_dbm = launch;
  s.modulation = m;
  return s;
}

// Box-car smoothing with clamped edges; used to find channel envelopes
// independent of the in-band ripple.
std::vector<double> smoothed(const std::vector<double>& v, int half) {
  std::vector<double> out(v.size());
  const int n = static_cast<int>(v.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (int j = lo; j <= hi; ++j) s += v[j];
    out[i] = s / (hi - lo + 1);
  }
  return out;
}

int argmax_in_window(const Spectrum& sp, const std::vector<double>& v, double lo_ghz,
                     double hi_ghz) {
  int best = -1;
  double best_v = -1e300;
  for (int i = 0; i < sp.grid.n_points; ++i) {
    const double f = sp.grid.bin_offset_ghz(i);
    if (f < lo_ghz || f > hi_ghz) continue;
    if (v[i] > best_v) {
      best_v = v[i];
      best = i;
    }
  }
  return best;
}

double floor_mean_dbm(const Spectrum& sp, double min_abs_ghz) {
  double s = 0.0;
  int n = 0;
  for (int i = 0; i < sp.grid.n_points; ++i) {
    if (std::fabs(sp.grid.bin_offset_ghz(i)) <= min_abs_ghz) continue;
    s += sp.power_dbm[i];
    ++n;
  }
  REQUIRE(n > 0);
  return s / n;
}

}  // namespace

TEST_CASE("grid bin spacing follows c * dlambda / lambda^2") {
  const FrequencyGrid g = osa_grid();
  CHECK(g.bin_spacing_ghz == doctest::Approx(1.2478289726954311).epsilon(1e-9));
  CHECK(g.span_nm() == doctest::Approx(5.01).epsilon(1e-12));
  CHECK(g.bin_offset_ghz(250) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g.bin_offset_ghz(0) == doctest::Approx(-250 * g.bin_spacing_ghz).epsilon(1e-12));
}

TEST_CASE("grid construction rejects bad parameters") {
  CHECK_THROWS_AS(build_grid(1550.004, 0.0, 501), InvalidParameterError);
  CHECK_THROWS_AS(build_grid(-1.0, 10.0, 501), InvalidParameterError);
  CHECK_THROWS_AS(build_grid(1550.004, 10.0, 2), InvalidParameterError);
}

TEST_CASE("severity tables") {
  const std::vector<double> nf = severity_steps(FailureClass::EdfaNfIncrease);
  REQUIRE(nf.size() == 10);
  CHECK(nf.front() == doctest::Approx(0.2));
  CHECK(nf.back() == doctest::Approx(2.0));

  const std::vector<double> drift = severity_steps(FailureClass::LaserDrift);
  REQUIRE(drift.size() == 10);
  for (double v : drift) CHECK(std::fabs(v) > 1e-9);

  CHECK(severity_steps(FailureClass::LaserPowerDrop).size() == 10);
  CHECK(severity_steps(FailureClass::FilterTightening).size() == 5);
  CHECK(severity_steps(FailureClass::FilterShift).size() == 4);
}

TEST_CASE("integrated single-channel power matches launch power") {
  const Spectrum sp = synthesize_clean(scenario(1), osa_grid(), 77);
  const double half_bw = 0.5 * sp.scenario.channel_bandwidth_ghz();
  double mw = 0.0;
  for (int i = 0; i < sp.grid.n_points; ++i)
    if (std::fabs(sp.grid.bin_offset_ghz(i)) <= half_bw) mw += dbm_to_mw(sp.power_dbm[i]);
  CHECK(std::fabs(mw_to_dbm(mw)) < 0.1);
}

TEST_CASE("noise floor and in-band level sit at the modeled values") {
  const Spectrum sp = synthesize_clean(scenario(1), osa_grid(), 78);
  const double floor = floor_mean_dbm(sp, 60.0);
  CHECK(floor > -41.2);
  CHECK(floor < -39.8);
  CHECK(sp.power_dbm[250] > -15.0);
  CHECK(sp.power_dbm[250] < -13.0);
}

TEST_CASE("five channels sit one spacing apart") {
  const Spectrum sp = synthesize_clean(scenario(5), osa_grid(), 79);
  const std::vector<double> sm = smoothed(sp.power_dbm, 10);
  std::vector<int> peaks;
  for (int k = 0; k < 5; ++k) {
    const double c = (k - 2) * sp.scenario.channel_spacing_ghz;
    const double h = 0.5 * sp.scenario.channel_spacing_ghz;
    peaks.push_back(argmax_in_window(sp, sm, c - h, c + h));
  }
  for (int k = 0; k + 1 < 5; ++k) {
    const int d = peaks[k + 1] - peaks[k];
    CHECK(d >= 29);
    CHECK(d <= 31);
  }
}

TEST_CASE("laser drift moves the channel argmax by the binned offset") {
  const LinkScenario s = scenario(3);
  FailureSpec f;
  f.cls = FailureClass::LaserDrift;
  f.severity = 2.5;
  f.location = s.center_channel();
  const double h = 0.5 * s.channel_spacing_ghz;

  // 2.5 GHz is 2.0 bins on this grid.
  const std::uint64_t frozen = 2026;
  const Spectrum clean = synthesize_clean(s, osa_grid(), frozen);
  const Spectrum fault = synthesize_faulty(s, osa_grid(), f, frozen);
  const int a0 = argmax_in_window(clean, clean.power_dbm, -h, h);
  const int a1 = argmax_in_window(fault, fault.power_dbm, -h, h + f.severity);
  CHECK(a1 - a0 == 2);

  double mean_shift = 0.0;
  for (std::uint64_t seed = 500; seed < 520; ++seed) {
    const Spectrum c2 = synthesize_clean(s, osa_grid(), seed);
    const Spectrum f2 = synthesize_faulty(s, osa_grid(), f, seed);
    mean_shift += argmax_in_window(f2, f2.power_dbm, -h, h + f.severity) -
                  argmax_in_window(c2, c2.power_dbm, -h, h);
  }
  mean_shift /= 20.0;
  CHECK(mean_shift > 1.7);
  CHECK(mean_shift < 2.3);
}

TEST_CASE("power drop changes only the affected channel band") {
  const LinkScenario s = scenario(3);
  FailureSpec f;
  f.cls = FailureClass::LaserPowerDrop;
  f.severity = -2.5;
  f.location = 0;  // loader at -37.5 GHz
  const Spectrum clean = synthesize_clean(s, osa_grid(), 81);
  const Spectrum fault = synthesize_faulty(s, osa_grid(), f, 81);

  const double carrier = -s.channel_spacing_ghz;
  const double half_bw = 0.5 * s.channel_bandwidth_ghz();
  int changed = 0;
  for (int i = 0; i < clean.grid.n_points; ++i) {
    const double d = std::fabs(clean.grid.bin_offset_ghz(i) - carrier);
    if (d > half_bw + 1e-9) {
      CHECK(clean.power_dbm[i] == fault.power_dbm[i]);
    } else if (clean.power_dbm[i] != fault.power_dbm[i]) {
      ++changed;
    }
  }
  CHECK(changed > 10);

  int center_bin = 0;
  double best = 1e300;
  for (int i = 0; i < clean.grid.n_points; ++i) {
    const double d = std::fabs(clean.grid.bin_offset_ghz(i) - carrier);
    if (d < best) {
      best = d;
      center_bin = i;
    }
  }
  CHECK(fault.power_dbm[center_bin] - clean.power_dbm[center_bin] ==
        doctest::Approx(-2.5).epsilon(0.02));
}

TEST_CASE("all-zero adjustments reproduce the clean trace exactly") {
  const LinkScenario s = scenario(5, -2.0, Modulation::QAM16);
  const Spectrum a = synthesize_clean(s, osa_grid(), 82);
  const Spectrum b = synthesize_adjusted(s, osa_grid(), no_adjustments(s), 82);
  CHECK(a.power_dbm == b.power_dbm);
}

TEST_CASE("amplifier noise figure raises the floor monotonically") {
  const LinkScenario s = scenario(1);
  const Spectrum clean = synthesize_clean(s, osa_grid(), 83);
  const double base = floor_mean_dbm(clean, 60.0);

  double prev = 0.0;
  for (double sev : {0.2, 1.0, 2.0}) {
    FailureSpec f;
    f.cls = FailureClass::EdfaNfIncrease;
    f.severity = sev;
    f.location = 0;
    const Spectrum fault = synthesize_faulty(s, osa_grid(), f, 83);
    const double rise = floor_mean_dbm(fault, 60.0) - base;
    CHECK(rise > prev);
    prev = rise;
    if (sev == 0.2) {
      CHECK(rise > 0.02);
      CHECK(rise < 0.12);
    }
    if (sev == 2.0) {
      CHECK(rise > 0.6);
      CHECK(rise < 0.95);
      // In-band signal stays put; only the floor moves.
      CHECK(std::fabs(fault.power_dbm[250] - clean.power_dbm[250]) < 0.1);
    }
  }
}

TEST_CASE("unknown misalignment shifts every loader a little") {
  const LinkScenario s = scenario(5);
  CHECK_THROWS_AS(synthesize_unknown(scenario(1), osa_grid(), 84), InvalidParameterError);

  const Spectrum sp = synthesize_unknown(s, osa_grid(), 84);
  CHECK(sp.label.cls == FailureClass::UnknownMisalignment);
  REQUIRE(sp.label.loader_offsets_ghz.size() == 5);
  CHECK(sp.label.loader_offsets_ghz[2] == 0.0);
  int moved = 0;
  for (int k = 0; k < 5; ++k) {
    if (k == 2) continue;
    const double off = sp.label.loader_offsets_ghz[k];
    CHECK(std::fabs(off) <= 0.5);
    if (std::fabs(off) > 1e-6) ++moved;
  }
  CHECK(moved == 4);

  const Spectrum again = synthesize_unknown(s, osa_grid(), 84);
  CHECK(sp.power_dbm == again.power_dbm);
  CHECK(sp.label.loader_offsets_ghz == again.label.loader_offsets_ghz);
}

TEST_CASE("failure validation rejects out-of-contract requests") {
  const LinkScenario s = scenario(3);
  FailureSpec f;

  f.cls = FailureClass::FilterTightening;
  f.severity = 2.0;
  f.location = s.center_channel();
  CHECK_THROWS_AS(synthesize_faulty(s, osa_grid(), f, 1), InvalidParameterError);

  f.cls = FailureClass::EdfaNfIncrease;
  f.severity = 1.0;
  f.location = 3;
  CHECK_THROWS_AS(synthesize_faulty(s, osa_grid(), f, 1), InvalidParameterError);

  f.cls = FailureClass::LaserDrift;
  f.severity = 0.0;
  f.location = s.center_channel();
  CHECK_THROWS_AS(synthesize_faulty(s, osa_grid(), f, 1), InvalidParameterError);

  f.cls = FailureClass::LaserDrift;
  f.severity = 9.0;
  CHECK_THROWS_AS(synthesize_faulty(s, osa_grid(), f, 1), InvalidParameterError);

  const FrequencyGrid tiny = build_grid(1550.004, 10.0, 31);
  CHECK_THROWS_AS(synthesize_clean(scenario(5), tiny, 1), InvalidParameterError);
}

TEST_CASE("synthesis is a pure function of the seed") {
  const LinkScenario s = scenario(3, -1.0, Modulation::QAM8);
  const Spectrum a = synthesize_clean(s, osa_grid(), 90);
  const Spectrum b = synthesize_clean(s, osa_grid(), 90);
  const Spectrum c = synthesize_clean(s, osa_grid(), 91);
  CHECK(a.power_dbm == b.power_dbm);
  CHECK(a.power_dbm != c.power_dbm);
}
