#include "sfm/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

namespace sfm {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  const std::to_chars_result res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{}) throw NumericError("format_double failed");
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const std::from_chars_result res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw InvalidInputError("bad numeric field: \"" + s + "\"");
  return v;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string join_offsets(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(';');
    out += format_double(v[i]);
  }
  return out;
}

std::vector<double> parse_offsets(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::string cur;
  for (char ch : s) {
    if (ch == ';') {
      out.push_back(parse_double(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(parse_double(cur));
  return out;
}

constexpr int kFixedColumns = 13;

}  // namespace

void save_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());

  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << ds.manifest.dump(2) << '\n';
  }

  std::ofstream out(dir / "spectra.csv");
  if (!out) throw IoError("cannot write " + (dir / "spectra.csv").string());

  int n_points = 0;
  if (!ds.records.empty()) n_points = ds.records.front().grid.n_points;

  out << "id,class,severity,location,n_channels,launch_power_dbm,modulation,n_spans,"
         "span_loss_db,edfa_nf_db,gain_profile_id,seed,loader_offsets_ghz";
  char head[16];
  for (int i = 0; i < n_points; ++i) {
    std::snprintf(head, sizeof(head), ",p%03d", i);
    out << head;
  }
  out << '\n';

  for (std::int64_t i = 0; i < ds.size(); ++i) {
    const Spectrum& r = ds.records[i];
    if (r.grid.n_points != n_points)
      throw InvalidInputError("save_dataset: records disagree on grid size");
    out << i << ',' << to_string(r.label.cls) << ',' << format_double(r.label.severity)
        << ',' << r.label.location << ',' << r.scenario.n_channels << ','
        << format_double(r.scenario.launch_power_dbm) << ','
        << to_string(r.scenario.modulation) << ',' << r.scenario.n_spans << ','
        << format_double(r.scenario.span_loss_db) << ','
        << format_double(r.scenario.edfa_nf_db) << ','
        << r.scenario.edfa_gain_profile_id << ',' << r.seed_tag << ','
        << join_offsets(r.label.loader_offsets_ghz);
    for (double p : r.power_dbm) out << ',' << format_double(p);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + (dir / "spectra.csv").string());
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("manifest.json: ") + e.what());
  }

  FrequencyGrid grid;
  try {
    nlohmann::json g = manifest;
    while (g.contains("parent")) g = g.at("parent");
    const nlohmann::json& gg = g.at("grid");
    grid = build_grid(gg.at("center_wavelength_nm").get<double>(),
                      gg.at("resolution_pm").get<double>(), gg.at("n_points").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("manifest.json: ") + e.what());
  }

  std::ifstream in(dir / "spectra.csv");
  if (!in) throw IoError("cannot open " + (dir / "spectra.csv").string());

  std::string line;
  if (!std::getline(in, line)) throw InvalidInputError("spectra.csv: missing header");
  const std::size_t n_cols = split_csv_line(line).size();
  if (n_cols != static_cast<std::size_t>(kFixedColumns + grid.n_points))
    throw InvalidInputError("spectra.csv: header has " + std::to_string(n_cols) +
                            " columns, expected " +
                            std::to_string(kFixedColumns + grid.n_points));

  Dataset ds;
  ds.manifest = manifest;
  std::int64_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != n_cols)
      throw InvalidInputError("spectra.csv row " + std::to_string(row) + ": has " +
                              std::to_string(f.size()) + " columns");
    Spectrum r;
    r.grid = grid;
    r.label.cls = failure_class_from_string(f[1]);
    r.label.severity = parse_double(f[2]);
    r.label.location = static_cast<int>(parse_double(f[3]));
    r.scenario.n_channels = static_cast<int>(parse_double(f[4]));
    r.scenario.launch_power_dbm = parse_double(f[5]);
    r.scenario.modulation = modulation_from_string(f[6]);
    r.scenario.n_spans = static_cast<int>(parse_double(f[7]));
    r.scenario.span_loss_db = parse_double(f[8]);
    r.scenario.edfa_nf_db = parse_double(f[9]);
    r.scenario.edfa_gain_profile_id = static_cast<int>(parse_double(f[10]));
    r.seed_tag = static_cast<std::uint64_t>(std::stoull(f[11]));
    r.label.loader_offsets_ghz = parse_offsets(f[12]);
    r.power_dbm.resize(grid.n_points);
    for (int i = 0; i < grid.n_points; ++i)
      r.power_dbm[i] = parse_double(f[kFixedColumns + i]);
    ds.records.push_back(std::move(r));
    ++row;
  }
  return ds;
}

}  // namespace sfm
