#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sfm/common.hpp"
#include "sfm/parallel.hpp"

#include "json.hpp"

namespace sfm {

// Optical frequency grid of the spectrum analyzer trace. The trace is
// uniformly spaced in frequency under the small-span approximation; bin 0 is
// the lowest-frequency edge and bin (n_points-1)/2 sits at the center
// wavelength.
struct FrequencyGrid {
  double center_wavelength_nm = 1550.004;
  double resolution_pm = 10.0;
  int n_points = 501;
  double bin_spacing_ghz = 0.0;  // derived: c * dlambda / lambda^2

  double span_nm() const { return n_points * resolution_pm * 1e-3; }
  // Frequency offset of bin i from the grid center, in GHz.
  double bin_offset_ghz(int i) const {
    return (i - (n_points - 1) * 0.5) * bin_spacing_ghz;
  }
};

FrequencyGrid build_grid(double center_wavelength_nm, double resolution_pm, int n_points);

enum class Modulation { QPSK, QAM8, QAM16 };

std::string to_string(Modulation m);
Modulation modulation_from_string(const std::string& s);

struct LinkScenario {
  int n_channels = 5;                 // 1, 3 or 5
  double channel_spacing_ghz = 37.5;
  double symbol_rate_gbd = 32.0;
  double rolloff = 0.2;
  double launch_power_dbm = 0.0;
  Modulation modulation = Modulation::QPSK;
  int n_spans = 3;                    // one EDFA per span
  double span_loss_db = 17.68;        // 88.4 km at 0.2 dB/km
  double edfa_nf_db = 5.0;
  int edfa_gain_profile_id = 0;       // base id; span s uses profile id + s

  int center_channel() const { return n_channels / 2; }
  double channel_bandwidth_ghz() const { return symbol_rate_gbd * (1.0 + rolloff); }
};

void validate(const LinkScenario& s);

enum class FailureClass {
  None,
  EdfaNfIncrease,
  LaserDrift,
  LaserPowerDrop,
  FilterTightening,
  FilterShift,
  UnknownMisalignment,
};

inline constexpr int kNumKnownFailureClasses = 5;  // excludes None and Unknown

std::string to_string(FailureClass c);
FailureClass failure_class_from_string(const std::string& s);

// Emulated fault ranges; severities are validated against these.
struct SeverityRange {
  double lo;
  double hi;
  double step;
  bool exclude_zero;
};
SeverityRange severity_range(FailureClass c);
std::vector<double> severity_steps(FailureClass c);

struct FailureSpec {
  FailureClass cls = FailureClass::None;
  double severity = 0.0;  // dB or GHz depending on class
  int location = -1;      // EDFA index for NF increase, channel index otherwise
};

void validate(const FailureSpec& f, const LinkScenario& s);

struct FailureLabel {
  FailureClass cls = FailureClass::None;
  double severity = 0.0;
  int location = -1;
  // Per-channel loader offsets in GHz (center entry always 0); populated for
  // UnknownMisalignment records only.
  std::vector<double> loader_offsets_ghz;
};

struct Spectrum {
  FrequencyGrid grid;
  std::vector<double> power_dbm;  // n_points entries
  LinkScenario scenario;
  FailureLabel label;
  std::uint64_t seed_tag = 0;
};

// Analytic synthesis. Channel shapes are squared root-raised-cosine power
// profiles; loaders additionally pass a steep shaping window aligned with the
// channel spacing. Noise accumulates one ASE contribution per span with a
// span-specific gain ripple. Measurement noise (sigma in dB) is keyed per
// (seed, bin) so same-seed traces share the identical noise field.
struct SynthesisOptions {
  double measurement_noise_db = 0.05;
};

Spectrum synthesize_clean(const LinkScenario& scenario, const FrequencyGrid& grid,
                          std::uint64_t seed, const SynthesisOptions& opt = {});
Spectrum synthesize_faulty(const LinkScenario& scenario, const FrequencyGrid& grid,
                           const FailureSpec& failure, std::uint64_t seed,
                           const SynthesisOptions& opt = {});
Spectrum synthesize_unknown(const LinkScenario& scenario, const FrequencyGrid& grid,
                            std::uint64_t seed, const SynthesisOptions& opt = {});

// Test hook: synthesizes with explicit per-channel carrier offsets and loader
// window adjustments. All-zero offsets reproduce the clean trace bit-exactly.
struct ChannelAdjustments {
  std::vector<double> carrier_offset_ghz;         // per channel
  std::vector<double> window_offset_ghz;          // per channel (loaders)
  std::vector<double> window_narrowing_ghz;       // per channel (loaders)
  std::vector<double> power_offset_db;            // per channel
  std::vector<double> edfa_nf_increase_db;        // per span
};
ChannelAdjustments no_adjustments(const LinkScenario& s);
Spectrum synthesize_adjusted(const LinkScenario& scenario, const FrequencyGrid& grid,
                             const ChannelAdjustments& adj, std::uint64_t seed,
                             const SynthesisOptions& opt = {});

// --------------------------------------------------------------------------
// Dataset assembly

struct GenerationPlan {
  std::int64_t clean_count = 2160;
  std::int64_t per_failure_count = 150;  // each of the five known classes
  std::int64_t unknown_count = 150;
  std::vector<int> channel_counts = {1, 3, 5};
  std::vector<double> launch_powers_dbm = {-3.0, -2.0, -1.0, 0.0};
  std::vector<Modulation> modulations = {Modulation::QPSK, Modulation::QAM8,
                                         Modulation::QAM16};
  int n_spans = 3;
  double span_loss_db = 17.68;
  double edfa_nf_db = 5.0;
  SynthesisOptions synthesis;
};

GenerationPlan paper_scale_plan();

struct Dataset {
  std::vector<Spectrum> records;
  nlohmann::json manifest;

  std::int64_t size() const { return static_cast<std::int64_t>(records.size()); }
  std::vector<std::int64_t> class_histogram() const;  // indexed by FailureClass
};

Dataset build_dataset(const GenerationPlan& plan, const FrequencyGrid& grid,
                      std::uint64_t master_seed, ExecMode mode = exec_mode());
// Re-runs generation from a stored manifest; output is bit-identical to the
// original build.
Dataset build_dataset_from_manifest(const nlohmann::json& manifest,
                                    ExecMode mode = exec_mode());

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct SplitDatasets {
  Dataset train;
  Dataset val;
  Dataset test;
};

SplitDatasets split_dataset(const Dataset& ds, const SplitRatios& ratios,
                            std::uint64_t seed);

Dataset subsample_fraction(const Dataset& train, double fraction, std::uint64_t seed);

}  // namespace sfm
