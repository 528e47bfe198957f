#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sfm/parallel.hpp"
#include "sfm/rng.hpp"
#include "sfm/specgen.hpp"

namespace sfm {

namespace {

constexpr std::uint64_t kSplitStream = 0x5EED5D17ull;
constexpr std::uint64_t kSubsampleStream = 0x5AB5A3E1ull;

struct RecordRecipe {
  LinkScenario scenario;
  FailureClass cls = FailureClass::None;
  FailureSpec spec;
  std::uint64_t seed = 0;
};

std::vector<LinkScenario> scenario_table(const GenerationPlan& plan) {
  if (plan.channel_counts.empty() || plan.launch_powers_dbm.empty() ||
      plan.modulations.empty())
    throw InvalidParameterError("plan: scenario axes must be non-empty");
  std::vector<LinkScenario> out;
  for (int nch : plan.channel_counts)
    for (double p : plan.launch_powers_dbm)
      for (Modulation m : plan.modulations) {
        LinkScenario s;
        s.n_channels = nch;
        s.launch_power_dbm = p;
        s.modulation = m;
        s.n_spans = plan.n_spans;
        s.span_loss_db = plan.span_loss_db;
        s.edfa_nf_db = plan.edfa_nf_db;
        validate(s);
        out.push_back(s);
      }
  return out;
}

std::vector<int> loader_channels(const LinkScenario& s) {
  std::vector<int> out;
  for (int k = 0; k < s.n_channels; ++k)
    if (k != s.center_channel()) out.push_back(k);
  return out;
}

// Largest-remainder apportionment of `total` over nonnegative weights.
// Deterministic: remainder ties go to the lowest index.
std::vector<std::int64_t> largest_remainder(const std::vector<double>& weights,
                                            std::int64_t total) {
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw InvalidParameterError("apportionment weights must be >= 0");
    wsum += w;
  }
  if (wsum <= 0.0) throw InvalidParameterError("apportionment weights sum to zero");

  const std::size_t n = weights.size();
  std::vector<std::int64_t> counts(n, 0);
  std::vector<std::pair<double, std::size_t>> rema(n);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = total * weights[i] / wsum;
    counts[i] = static_cast<std::int64_t>(std::floor(share));
    rema[i] = {share - counts[i], i};
    assigned += counts[i];
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned)
    counts[rema[i % n].second] += 1;
  return counts;
}

}  // namespace

GenerationPlan paper_scale_plan() {
  GenerationPlan p;
  p.clean_count = 21600;
  p.per_failure_count = 1120;
  p.unknown_count = 1000;
  return p;
}

std::vector<std::int64_t> Dataset::class_histogram() const {
  std::vector<std::int64_t> h(7, 0);
  for (const Spectrum& r : records) h[static_cast<int>(r.label.cls)] += 1;
  return h;
}

Dataset build_dataset(const GenerationPlan& plan, const FrequencyGrid& grid,
                      std::uint64_t master_seed, ExecMode mode) {
  if (plan.clean_count < 0 || plan.per_failure_count < 0 || plan.unknown_count < 0)
    throw InvalidParameterError("plan: record counts must be >= 0");
  if (plan.clean_count + plan.per_failure_count + plan.unknown_count == 0)
    throw InvalidParameterError("plan: no records requested");

  const std::vector<LinkScenario> all = scenario_table(plan);
  std::vector<LinkScenario> multi;
  for (const LinkScenario& s : all)
    if (s.n_channels >= 3) multi.push_back(s);

  const bool needs_loaders = plan.per_failure_count > 0 || plan.unknown_count > 0;
  if (needs_loaders && multi.empty())
    throw InvalidParameterError(
        "plan: filter and misalignment records need scenarios with loader channels");

  std::vector<RecordRecipe> recipes;
  std::uint64_t g = 0;
  auto push = [&](RecordRecipe r) {
    r.seed = derive_seed(master_seed, g++);
    recipes.push_back(std::move(r));
  };

  for (std::int64_t j = 0; j < plan.clean_count; ++j) {
    RecordRecipe r;
    r.scenario = all[j % all.size()];
    r.cls = FailureClass::None;
    push(r);
  }

  const FailureClass known[] = {FailureClass::EdfaNfIncrease, FailureClass::LaserDrift,
                                FailureClass::LaserPowerDrop,
                                FailureClass::FilterTightening, FailureClass::FilterShift};
  for (FailureClass cls : known) {
    const bool loaders_only =
        cls == FailureClass::FilterTightening || cls == FailureClass::FilterShift;
    const std::vector<LinkScenario>& elig = loaders_only ? multi : all;
    const std::vector<double> steps = severity_steps(cls);
    for (std::int64_t j = 0; j < plan.per_failure_count; ++j) {
      RecordRecipe r;
      r.scenario = elig[j % elig.size()];
      r.cls = cls;
      r.spec.cls = cls;
      r.spec.severity = steps[j % steps.size()];
      switch (cls) {
        case FailureClass::EdfaNfIncrease:
          r.spec.location = static_cast<int>(j % r.scenario.n_spans);
          break;
        case FailureClass::LaserDrift:
          r.spec.location = r.scenario.center_channel();
          break;
        case FailureClass::LaserPowerDrop:
          r.spec.location = static_cast<int>(j % r.scenario.n_channels);
          break;
        default: {
          const std::vector<int> loaders = loader_channels(r.scenario);
          r.spec.location = loaders[j % loaders.size()];
          break;
        }
      }
      push(r);
    }
  }

  for (std::int64_t j = 0; j < plan.unknown_count; ++j) {
    RecordRecipe r;
    r.scenario = multi[j % multi.size()];
    r.cls = FailureClass::UnknownMisalignment;
    push(r);
  }

  Dataset ds;
  ds.records.resize(recipes.size());
  parallel_for(
      recipes.size(),
      [&](std::size_t i) {
        const RecordRecipe& r = recipes[i];
        if (r.cls == FailureClass::None)
          ds.records[i] = synthesize_clean(r.scenario, grid, r.seed, plan.synthesis);
        else if (r.cls == FailureClass::UnknownMisalignment)
          ds.records[i] = synthesize_unknown(r.scenario, grid, r.seed, plan.synthesis);
        else
          ds.records[i] = synthesize_faulty(r.scenario, grid, r.spec, r.seed, plan.synthesis);
      },
      mode);

  nlohmann::json mods = nlohmann::json::array();
  for (Modulation m : plan.modulations) mods.push_back(to_string(m));
  nlohmann::json counts = nlohmann::json::object();
  const std::vector<std::int64_t> hist = ds.class_histogram();
  for (int c = 0; c < 7; ++c)
    counts[to_string(static_cast<FailureClass>(c))] = hist[c];
  ds.manifest = {
      {"schema_version", 1},
      {"kind", "synthesis"},
      {"master_seed", master_seed},
      {"grid",
       {{"center_wavelength_nm", grid.center_wavelength_nm},
        {"resolution_pm", grid.resolution_pm},
        {"n_points", grid.n_points}}},
      {"plan",
       {{"clean_count", plan.clean_count},
        {"per_failure_count", plan.per_failure_count},
        {"unknown_count", plan.unknown_count},
        {"channel_counts", plan.channel_counts},
        {"launch_powers_dbm", plan.launch_powers_dbm},
        {"modulations", mods},
        {"n_spans", plan.n_spans},
        {"span_loss_db", plan.span_loss_db},
        {"edfa_nf_db", plan.edfa_nf_db},
        {"measurement_noise_db", plan.synthesis.measurement_noise_db}}},
      {"class_counts", counts},
  };
  return ds;
}

Dataset build_dataset_from_manifest(const nlohmann::json& manifest, ExecMode mode) {
  if (!manifest.is_object() || manifest.value("kind", "") != "synthesis")
    throw InvalidInputError("manifest: expected kind \"synthesis\"");
  if (manifest.value("schema_version", 0) != 1)
    throw InvalidInputError("manifest: unsupported schema_version");
  try {
    const nlohmann::json& g = manifest.at("grid");
    const FrequencyGrid grid =
        build_grid(g.at("center_wavelength_nm").get<double>(),
                   g.at("resolution_pm").get<double>(), g.at("n_points").get<int>());
    const nlohmann::json& p = manifest.at("plan");
    GenerationPlan plan;
    plan.clean_count = p.at("clean_count").get<std::int64_t>();
    plan.per_failure_count = p.at("per_failure_count").get<std::int64_t>();
    plan.unknown_count = p.at("unknown_count").get<std::int64_t>();
    plan.channel_counts = p.at("channel_counts").get<std::vector<int>>();
    plan.launch_powers_dbm = p.at("launch_powers_dbm").get<std::vector<double>>();
    plan.modulations.clear();
    for (const auto& m : p.at("modulations"))
      plan.modulations.push_back(modulation_from_string(m.get<std::string>()));
    plan.n_spans = p.at("n_spans").get<int>();
    plan.span_loss_db = p.at("span_loss_db").get<double>();
    plan.edfa_nf_db = p.at("edfa_nf_db").get<double>();
    plan.synthesis.measurement_noise_db = p.at("measurement_noise_db").get<double>();
    return build_dataset(plan, grid, manifest.at("master_seed").get<std::uint64_t>(), mode);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("manifest: ") + e.what());
  }
}

SplitDatasets split_dataset(const Dataset& ds, const SplitRatios& ratios,
                            std::uint64_t seed) {
  const std::vector<double> w = {ratios.train, ratios.val, ratios.test};
  double wsum = 0.0;
  for (double r : w) {
    if (!(r > 0.0)) throw InvalidParameterError("split: all ratios must be positive");
    wsum += r;
  }
  if (std::fabs(wsum - 1.0) > 1e-9)
    throw InvalidParameterError("split: ratios must sum to 1");

  std::vector<std::vector<std::int64_t>> by_class(7);
  for (std::int64_t i = 0; i < ds.size(); ++i)
    by_class[static_cast<int>(ds.records[i].label.cls)].push_back(i);

  std::vector<std::vector<std::int64_t>> members(3);
  for (int c = 0; c < 7; ++c) {
    std::vector<std::int64_t>& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 3)
      throw StratificationError("split: class " +
                                to_string(static_cast<FailureClass>(c)) + " has only " +
                                std::to_string(idx.size()) + " records for 3 parts");
    const std::vector<std::int64_t> counts =
        largest_remainder(w, static_cast<std::int64_t>(idx.size()));
    Rng rng(derive_seed(seed, kSplitStream + static_cast<std::uint64_t>(c)));
    rng.shuffle(idx);
    std::size_t cursor = 0;
    for (int part = 0; part < 3; ++part)
      for (std::int64_t k = 0; k < counts[part]; ++k)
        members[part].push_back(idx[cursor++]);
  }

  const char* names[] = {"train", "val", "test"};
  SplitDatasets out;
  Dataset* parts[] = {&out.train, &out.val, &out.test};
  for (int part = 0; part < 3; ++part) {
    std::sort(members[part].begin(), members[part].end());
    parts[part]->records.reserve(members[part].size());
    for (std::int64_t i : members[part]) parts[part]->records.push_back(ds.records[i]);
    parts[part]->manifest = {
        {"schema_version", 1},
        {"kind", "split-part"},
        {"part", names[part]},
        {"seed", seed},
        {"ratios", w},
        {"parent", ds.manifest},
    };
  }
  return out;
}

Dataset subsample_fraction(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw InvalidParameterError("subsample: fraction must be in (0, 1]");

  std::vector<std::vector<std::int64_t>> by_class(7);
  for (std::int64_t i = 0; i < ds.size(); ++i)
    by_class[static_cast<int>(ds.records[i].label.cls)].push_back(i);

  std::vector<double> weights;
  std::vector<int> present;
  for (int c = 0; c < 7; ++c)
    if (!by_class[c].empty()) {
      present.push_back(c);
      weights.push_back(static_cast<double>(by_class[c].size()));
    }
  if (present.empty()) throw InvalidInputError("subsample: dataset is empty");

  const std::int64_t total = std::llround(fraction * static_cast<double>(ds.size()));
  if (total < static_cast<std::int64_t>(present.size()))
    throw StratificationError("subsample: fraction keeps " + std::to_string(total) +
                              " records but " + std::to_string(present.size()) +
                              " classes are present");

  std::vector<std::int64_t> counts = largest_remainder(weights, total);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    while (counts[i] == 0) {
      std::size_t donor = 0;
      for (std::size_t j = 1; j < counts.size(); ++j)
        if (counts[j] > counts[donor]) donor = j;
      counts[donor] -= 1;
      counts[i] += 1;
    }
  }

  std::vector<std::int64_t> keep;
  for (std::size_t i = 0; i < present.size(); ++i) {
    std::vector<std::int64_t>& idx = by_class[present[i]];
    Rng rng(derive_seed(seed, kSubsampleStream + static_cast<std::uint64_t>(present[i])));
    rng.shuffle(idx);
    for (std::int64_t k = 0; k < counts[i]; ++k) keep.push_back(idx[k]);
  }
  std::sort(keep.begin(), keep.end());

  Dataset out;
  out.records.reserve(keep.size());
  for (std::int64_t i : keep) out.records.push_back(ds.records[i]);
  out.manifest = {
      {"schema_version", 1},
      {"kind", "subsample"},
      {"fraction", fraction},
      {"seed", seed},
      {"parent", ds.manifest},
  };
  return out;
}

}  // namespace sfm
