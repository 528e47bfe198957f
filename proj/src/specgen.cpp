#include "sfm/specgen.hpp"

#include <algorithm>
#include <cmath>

#include "sfm/rng.hpp"

namespace sfm {

namespace {

constexpr std::uint64_t kNoiseStream = 0x4E6F697365ull;    // per-bin measurement noise
constexpr std::uint64_t kLoaderStream = 0x4C6F616465ull;   // unknown-misalignment offsets
constexpr double kPi = 3.14159265358979323846;

// In-band ripple signature of the modulated center channel, strongest near
// the carrier and fading towards the channel edges. Loaders are shaped ASE
// and carry no signature.
struct ModSignature {
  double amplitude_db;
  double period_ghz;
  double phase;
  double envelope_sigma_ghz;
};

ModSignature mod_signature(Modulation m) {
  switch (m) {
    case Modulation::QPSK:
      return {0.30, 6.4, 0.0, 6.0};
    case Modulation::QAM8:
      return {0.30, 9.7, 1.3, 6.0};
    case Modulation::QAM16:
      return {0.30, 12.9, 2.2, 6.0};
  }
  throw InvalidParameterError("unhandled modulation");
}

// Raised-cosine power profile (square of a root-raised-cosine field shape).
double rc_power_shape(double offset_ghz, double symbol_rate, double rolloff) {
  const double u = std::fabs(offset_ghz);
  const double f1 = (1.0 - rolloff) * symbol_rate * 0.5;
  const double f2 = (1.0 + rolloff) * symbol_rate * 0.5;
  if (u <= f1) return 1.0;
  if (u >= f2) return 0.0;
  const double c = std::cos(kPi / (2.0 * rolloff * symbol_rate) * (u - f1));
  return c * c;
}

// Steep supergaussian shaping window of the wavelength-shaping filter.
double loader_window(double offset_ghz, double width_ghz) {
  if (width_ghz <= 0.0) return 0.0;
  const double t = 2.0 * offset_ghz / width_ghz;
  double t2 = t * t;
  t2 = t2 * t2;  // t^4
  t2 = t2 * t2;  // t^8
  return std::exp(-0.6931471805599453 * t2);
}

// Per-span gain ripple in dB. Amplitude grows towards the end of the link so
// that ASE injected early is the faintest to tell apart.
struct RippleProfile {
  double amplitude_db;
  double period_ghz;
  double phase;
};

RippleProfile span_ripple(int profile_id, int span_index, int n_spans) {
  const double amp = 0.3 * static_cast<double>(span_index + 1) / n_spans;
  Rng rng(derive_seed(0x45444641ull + static_cast<std::uint64_t>(profile_id) * 7919ull,
                      static_cast<std::uint64_t>(span_index)));
  const double period = 60.0 + rng.uniform() * 140.0;
  const double phase = rng.uniform() * 2.0 * kPi;
  return {amp, period, phase};
}

double measurement_noise(std::uint64_t seed, int bin, double sigma_db) {
  Rng rng(derive_seed(seed, kNoiseStream + static_cast<std::uint64_t>(bin)));
  return sigma_db * rng.normal();
}

}  // namespace

FrequencyGrid build_grid(double center_wavelength_nm, double resolution_pm, int n_points) {
  if (!(center_wavelength_nm > 0.0) || !(resolution_pm > 0.0))
    throw InvalidParameterError("build_grid: wavelength and resolution must be positive");
  if (n_points < 3) throw InvalidParameterError("build_grid: n_points must be >= 3");
  FrequencyGrid g;
  g.center_wavelength_nm = center_wavelength_nm;
  g.resolution_pm = resolution_pm;
  g.n_points = n_points;
  const double lambda_m = center_wavelength_nm * 1e-9;
  const double dlambda_m = resolution_pm * 1e-12;
  g.bin_spacing_ghz = constants::kSpeedOfLight * dlambda_m / (lambda_m * lambda_m) * 1e-9;
  return g;
}

std::string to_string(Modulation m) {
  switch (m) {
    case Modulation::QPSK:
      return "QPSK";
    case Modulation::QAM8:
      return "8QAM";
    case Modulation::QAM16:
      return "16QAM";
  }
  throw InvalidParameterError("unhandled modulation");
}

Modulation modulation_from_string(const std::string& s) {
  if (s == "QPSK") return Modulation::QPSK;
  if (s == "8QAM") return Modulation::QAM8;
  if (s == "16QAM") return Modulation::QAM16;
  throw InvalidParameterError("unknown modulation: " + s);
}

void validate(const LinkScenario& s) {
  if (s.n_channels != 1 && s.n_channels != 3 && s.n_channels != 5)
    throw InvalidParameterError("scenario: n_channels must be 1, 3 or 5");
  if (!(s.channel_spacing_ghz > 0.0) || !(s.symbol_rate_gbd > 0.0))
    throw InvalidParameterError("scenario: spacing and symbol rate must be positive");
  if (!(s.rolloff > 0.0) || s.rolloff >= 1.0)
    throw InvalidParameterError("scenario: rolloff must be in (0, 1)");
  if (s.n_spans < 1) throw InvalidParameterError("scenario: n_spans must be >= 1");
  if (!std::isfinite(s.launch_power_dbm))
    throw InvalidParameterError("scenario: launch power must be finite");
}

std::string to_string(FailureClass c) {
  switch (c) {
    case FailureClass::None:
      return "NONE";
    case FailureClass::EdfaNfIncrease:
      return "EDFA_NF_INCREASE";
    case FailureClass::LaserDrift:
      return "LASER_DRIFT";
    case FailureClass::LaserPowerDrop:
      return "LASER_POWER_DROP";
    case FailureClass::FilterTightening:
      return "FILTER_TIGHTENING";
    case FailureClass::FilterShift:
      return "FILTER_SHIFT";
    case FailureClass::UnknownMisalignment:
      return "UNKNOWN_MISALIGNMENT";
  }
  throw InvalidParameterError("unhandled failure class");
}

FailureClass failure_class_from_string(const std::string& s) {
  if (s == "NONE") return FailureClass::None;
  if (s == "EDFA_NF_INCREASE") return FailureClass::EdfaNfIncrease;
  if (s == "LASER_DRIFT") return FailureClass::LaserDrift;
  if (s == "LASER_POWER_DROP") return FailureClass::LaserPowerDrop;
  if (s == "FILTER_TIGHTENING") return FailureClass::FilterTightening;
  if (s == "FILTER_SHIFT") return FailureClass::FilterShift;
  if (s == "UNKNOWN_MISALIGNMENT") return FailureClass::UnknownMisalignment;
  throw InvalidParameterError("unknown failure class: " + s);
}

SeverityRange severity_range(FailureClass c) {
  switch (c) {
    case FailureClass::EdfaNfIncrease:
      return {0.2, 2.0, 0.2, false};
    case FailureClass::LaserDrift:
      return {-2.5, 2.5, 0.5, true};
    case FailureClass::LaserPowerDrop:
      return {-2.5, 2.5, 0.5, true};
    case FailureClass::FilterTightening:
      return {1.0, 5.0, 1.0, false};
    case FailureClass::FilterShift:
      return {-2.0, 2.0, 1.0, true};
    default:
      throw InvalidParameterError("severity_range: class has no severity range");
  }
}

std::vector<double> severity_steps(FailureClass c) {
  const SeverityRange r = severity_range(c);
  std::vector<double> out;
  const int n = static_cast<int>(std::lround((r.hi - r.lo) / r.step)) + 1;
  for (int i = 0; i < n; ++i) {
    const double v = r.lo + i * r.step;
    if (r.exclude_zero && std::fabs(v) < 1e-12) continue;
    out.push_back(v);
  }
  return out;
}

void validate(const FailureSpec& f, const LinkScenario& s) {
  if (f.cls == FailureClass::None)
    throw InvalidParameterError("failure: class NONE cannot be synthesized as faulty");
  if (f.cls == FailureClass::UnknownMisalignment) return;  // offsets drawn, not specified
  const SeverityRange r = severity_range(f.cls);
  const double tol = 1e-9;
  if (f.severity < r.lo - tol || f.severity > r.hi + tol)
    throw InvalidParameterError("failure: severity out of range for " + to_string(f.cls));
  if (r.exclude_zero && std::fabs(f.severity) < 1e-12)
    throw InvalidParameterError("failure: severity must be nonzero for " + to_string(f.cls));
  if (f.cls == FailureClass::EdfaNfIncrease) {
    if (f.location < 0 || f.location >= s.n_spans)
      throw InvalidParameterError("failure: EDFA location out of range");
  } else {
    if (f.location < 0 || f.location >= s.n_channels)
      throw InvalidParameterError("failure: channel location out of range");
    if ((f.cls == FailureClass::FilterTightening || f.cls == FailureClass::FilterShift) &&
        f.location == s.center_channel())
      throw InvalidParameterError(
          "failure: filter faults target loader channels, not the center channel");
  }
}

ChannelAdjustments no_adjustments(const LinkScenario& s) {
  ChannelAdjustments adj;
  adj.carrier_offset_ghz.assign(s.n_channels, 0.0);
  adj.window_offset_ghz.assign(s.n_channels, 0.0);
  adj.window_narrowing_ghz.assign(s.n_channels, 0.0);
  adj.power_offset_db.assign(s.n_channels, 0.0);
  adj.edfa_nf_increase_db.assign(s.n_spans, 0.0);
  return adj;
}

Spectrum synthesize_adjusted(const LinkScenario& scenario, const FrequencyGrid& grid,
                             const ChannelAdjustments& adj, std::uint64_t seed,
                             const SynthesisOptions& opt) {
  validate(scenario);
  if (grid.bin_spacing_ghz <= 0.0)
    throw InvalidParameterError("synthesize: grid not built (bin spacing <= 0)");
  const auto nch_sz = static_cast<std::size_t>(scenario.n_channels);
  if (adj.carrier_offset_ghz.size() != nch_sz || adj.window_offset_ghz.size() != nch_sz ||
      adj.window_narrowing_ghz.size() != nch_sz || adj.power_offset_db.size() != nch_sz ||
      adj.edfa_nf_increase_db.size() != static_cast<std::size_t>(scenario.n_spans))
    throw ShapeError("synthesize: adjustment vectors do not match the scenario");

  const int nch = scenario.n_channels;
  const int center = scenario.center_channel();
  const double half_span = 0.5 * (grid.n_points - 1) * grid.bin_spacing_ghz;
  const double outermost =
      (nch - 1) * 0.5 * scenario.channel_spacing_ghz +
      0.5 * scenario.channel_bandwidth_ghz();
  if (outermost > half_span)
    throw InvalidParameterError("synthesize: channel plan exceeds the grid span");

  const ModSignature sig = mod_signature(scenario.modulation);
  const double bin_hz = grid.bin_spacing_ghz * 1e9;

  // Per-span ASE contribution scale in mW (flat part).
  std::vector<double> ase_scale(scenario.n_spans);
  std::vector<RippleProfile> ripple(scenario.n_spans);
  const double gain_lin = db_to_linear(scenario.span_loss_db);
  for (int s = 0; s < scenario.n_spans; ++s) {
    const double nf_lin = db_to_linear(scenario.edfa_nf_db + adj.edfa_nf_increase_db[s]);
    ase_scale[s] =
        nf_lin * constants::kPlanck * constants::kAseFrequencyHz * gain_lin * bin_hz * 1e3;
    ripple[s] = span_ripple(scenario.edfa_gain_profile_id, s, scenario.n_spans);
  }

  Spectrum sp;
  sp.grid = grid;
  sp.scenario = scenario;
  sp.seed_tag = seed;
  sp.power_dbm.resize(grid.n_points);

  for (int i = 0; i < grid.n_points; ++i) {
    const double f = grid.bin_offset_ghz(i);
    double total_mw = 0.0;

    for (int k = 0; k < nch; ++k) {
      const double nominal = (k - center) * scenario.channel_spacing_ghz;
      const double carrier = nominal + adj.carrier_offset_ghz[k];
      double shape = rc_power_shape(f - carrier, scenario.symbol_rate_gbd, scenario.rolloff);
      if (shape <= 0.0) continue;
      if (k == center) {
        const double u = f - carrier;
        const double env = std::exp(-(u / sig.envelope_sigma_ghz) * (u / sig.envelope_sigma_ghz));
        const double r = sig.amplitude_db * env *
                         std::cos(2.0 * kPi * u / sig.period_ghz + sig.phase) * shape;
        shape *= db_to_linear(r);
      } else {
        const double width = scenario.channel_spacing_ghz - adj.window_narrowing_ghz[k];
        const double wcenter = nominal + adj.window_offset_ghz[k];
        shape *= loader_window(f - wcenter, width);
      }
      const double p_mw = dbm_to_mw(scenario.launch_power_dbm + adj.power_offset_db[k]);
      total_mw += p_mw / scenario.symbol_rate_gbd * shape * grid.bin_spacing_ghz;
    }

    for (int s = 0; s < scenario.n_spans; ++s) {
      const double rip =
          ripple[s].amplitude_db *
          std::sin(2.0 * kPi * f / ripple[s].period_ghz + ripple[s].phase);
      total_mw += ase_scale[s] * db_to_linear(rip);
    }

    sp.power_dbm[i] =
        mw_to_dbm(total_mw) + measurement_noise(seed, i, opt.measurement_noise_db);
    if (!std::isfinite(sp.power_dbm[i]))
      throw NumericError("synthesize: non-finite power at bin " + std::to_string(i));
  }
  return sp;
}

Spectrum synthesize_clean(const LinkScenario& scenario, const FrequencyGrid& grid,
                          std::uint64_t seed, const SynthesisOptions& opt) {
  Spectrum sp = synthesize_adjusted(scenario, grid, no_adjustments(scenario), seed, opt);
  sp.label = FailureLabel{};
  return sp;
}

Spectrum synthesize_faulty(const LinkScenario& scenario, const FrequencyGrid& grid,
                           const FailureSpec& failure, std::uint64_t seed,
                           const SynthesisOptions& opt) {
  validate(failure, scenario);
  if (failure.cls == FailureClass::UnknownMisalignment)
    return synthesize_unknown(scenario, grid, seed, opt);

  ChannelAdjustments adj = no_adjustments(scenario);
  switch (failure.cls) {
    case FailureClass::EdfaNfIncrease:
      adj.edfa_nf_increase_db[failure.location] = failure.severity;
      break;
    case FailureClass::LaserDrift:
      adj.carrier_offset_ghz[failure.location] = failure.severity;
      break;
    case FailureClass::LaserPowerDrop:
      adj.power_offset_db[failure.location] = failure.severity;
      break;
    case FailureClass::FilterTightening:
      adj.window_narrowing_ghz[failure.location] = failure.severity;
      break;
    case FailureClass::FilterShift:
      adj.window_offset_ghz[failure.location] = failure.severity;
      break;
    default:
      throw InvalidParameterError("synthesize_faulty: unsupported class");
  }

  Spectrum sp = synthesize_adjusted(scenario, grid, adj, seed, opt);
  sp.label.cls = failure.cls;
  sp.label.severity = failure.severity;
  sp.label.location = failure.location;
  return sp;
}

Spectrum synthesize_unknown(const LinkScenario& scenario, const FrequencyGrid& grid,
                            std::uint64_t seed, const SynthesisOptions& opt) {
  validate(scenario);
  if (scenario.n_channels < 3)
    throw InvalidParameterError("synthesize_unknown: no loader channels to misalign");

  ChannelAdjustments adj = no_adjustments(scenario);
  const int center = scenario.center_channel();
  std::vector<double> offsets(scenario.n_channels, 0.0);
  for (int k = 0; k < scenario.n_channels; ++k) {
    if (k == center) continue;
    Rng rng(derive_seed(seed, kLoaderStream + static_cast<std::uint64_t>(k)));
    const double off = rng.uniform(-0.5, 0.5);
    offsets[k] = off;
    // The loader's emission frequency drifts; its shaping window belongs to
    // the mux and stays on the nominal grid.
    adj.carrier_offset_ghz[k] = off;
  }

  Spectrum sp = synthesize_adjusted(scenario, grid, adj, seed, opt);
  sp.label.cls = FailureClass::UnknownMisalignment;
  sp.label.loader_offsets_ghz = offsets;
  return sp;
}

}  // namespace sfm
